//! Declarative run and scenario configuration (TOML), plus flag overrides.
//!
//! A run needs an explicit seed: wall-clock defaults would make learned
//! policies unauditable, so a missing seed is a config error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cmr::{CmrConfig, EstimatorKind};
use crate::data::{OutcomeSpace, SourceSchema};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::policy::MAX_SEARCH_DEPTH;
use crate::robust::{AmbiguityKind, AmbiguitySpec};
use crate::sim::{NoiseLaw, SyntheticScenario};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paths {
    pub source: PathBuf,
    pub target: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutcomeSpaceConfig {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    #[serde(default = "default_kind")]
    pub kind: AmbiguityKind,
    pub delta: Option<f64>,
    pub delta_grid: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub hurwicz_alpha: Option<f64>,
}

fn default_kind() -> AmbiguityKind {
    AmbiguityKind::Wasserstein1
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        AmbiguityConfig {
            kind: default_kind(),
            delta: None,
            delta_grid: None,
            rho: None,
            hurwicz_alpha: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub rounds: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub knn_k: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let base = CmrConfig::default();
        EstimatorConfig {
            kind: base.kind,
            rounds: base.rounds,
            min_leaf: base.min_leaf,
            bootstrap: base.bootstrap,
            knn_k: base.knn_k,
        }
    }
}

impl EstimatorConfig {
    pub fn to_cmr_config(&self) -> CmrConfig {
        CmrConfig {
            kind: self.kind,
            rounds: self.rounds,
            min_leaf: self.min_leaf,
            bootstrap: self.bootstrap,
            knn_k: self.knn_k,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub depth: usize,
    /// Covariate names excluded from splitting.
    pub mask: Vec<String>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { depth: 2, mask: vec![] }
    }
}

/// A fully resolved run configuration (file plus flag overrides).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub schema: SourceSchema,
    #[serde(default)]
    pub outcome_space: OutcomeSpaceConfig,
    #[serde(default)]
    pub ambiguity: AmbiguityConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
}

/// Command-line overrides; flags win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub delta_grid: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub kind: Option<AmbiguityKind>,
    pub depth: Option<usize>,
    pub mask: Option<Vec<String>>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(seed) = ov.seed {
            self.seed = Some(seed);
        }
        if let Some(delta) = ov.delta {
            self.ambiguity.delta = Some(delta);
            self.ambiguity.delta_grid = None;
        }
        if let Some(grid) = &ov.delta_grid {
            self.ambiguity.delta_grid = Some(grid.clone());
            self.ambiguity.delta = None;
        }
        if let Some(rho) = ov.rho {
            self.ambiguity.rho = Some(rho);
        }
        if let Some(kind) = ov.kind {
            self.ambiguity.kind = kind;
        }
        if let Some(depth) = ov.depth {
            self.policy.depth = depth;
        }
        if let Some(mask) = &ov.mask {
            self.policy.mask = mask.clone();
        }
        if let Some(out) = &ov.out_dir {
            self.paths.out_dir = out.clone();
        }
    }

    /// The ambiguity radii to run, ascending. An absent ambiguity block
    /// runs the plug-in objective (`delta = 0`).
    pub fn delta_grid(&self) -> Result<Vec<f64>> {
        let grid = match (&self.ambiguity.delta_grid, self.ambiguity.delta) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either delta or delta_grid, not both".into()))
            }
            (Some(grid), None) => grid.clone(),
            (None, Some(delta)) => vec![delta],
            (None, None) => vec![0.0],
        };
        if grid.is_empty() {
            return Err(Error::Config("delta grid must not be empty".into()));
        }
        for w in grid.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config("delta grid must be strictly increasing".into()));
            }
        }
        if grid[0] < 0.0 || grid.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("delta grid values must be finite and >= 0".into()));
        }
        Ok(grid)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::Config("a seed is required (set `seed` in the config or pass --seed)".into())
        })
    }

    pub fn ambiguity_spec(&self, delta: f64) -> Result<AmbiguitySpec> {
        AmbiguitySpec::new(
            self.ambiguity.kind,
            delta,
            self.ambiguity.rho,
            self.ambiguity.hurwicz_alpha,
        )
    }

    /// Outcome space: explicit override wins, otherwise inferred from the
    /// observed outcomes.
    pub fn resolve_outcome_space(&self, outcomes: &[f64]) -> Result<OutcomeSpace> {
        let inferred = OutcomeSpace::infer(outcomes);
        let lower = self.outcome_space.lower.unwrap_or(inferred.lower);
        let upper = self.outcome_space.upper.unwrap_or(inferred.upper);
        let space = OutcomeSpace::new(lower, upper)?;
        space.validate_outcomes(outcomes)?;
        Ok(space)
    }

    /// 1-based indices of masked covariates.
    pub fn mask_indices(&self) -> Result<Vec<usize>> {
        self.policy
            .mask
            .iter()
            .map(|name| {
                self.schema
                    .covariates
                    .iter()
                    .position(|c| c == name)
                    .map(|i| i + 1)
                    .ok_or_else(|| {
                        Error::Config(format!("masked column {name:?} is not in the schema"))
                    })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.delta_grid()?;
        self.mask_indices()?;
        if self.policy.depth > MAX_SEARCH_DEPTH {
            return Err(Error::Config(format!(
                "policy depth must be <= {MAX_SEARCH_DEPTH}"
            )));
        }
        if self.schema.covariates.is_empty() {
            return Err(Error::Config("schema needs at least one covariate".into()));
        }
        self.estimator.to_cmr_config().validate()?;
        self.ambiguity_spec(self.delta_grid()?[0])?;
        Ok(())
    }
}

/// Declarative synthetic-scenario description (same TOML dialect as the
/// run config).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub delta_true: f64,
    pub outcome_lower: Option<f64>,
    pub outcome_upper: Option<f64>,
    #[serde(default)]
    pub cells: Vec<CellConfig>,
    pub line: Option<LineConfig>,
    pub noise: Vec<NoiseLaw>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellConfig {
    pub point: Vec<f64>,
    pub source_weight: f64,
    pub target_weight: f64,
    pub cmr: Vec<f64>,
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineConfig {
    pub source_range: (f64, f64),
    pub target_range: (f64, f64),
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read scenario {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("invalid scenario: {e}")))
    }

    pub fn build(&self) -> Result<SyntheticScenario> {
        let outcome_space = OutcomeSpace::new(
            self.outcome_lower.unwrap_or(f64::NEG_INFINITY),
            self.outcome_upper.unwrap_or(f64::INFINITY),
        )?;
        match (&self.line, self.cells.is_empty()) {
            (Some(line), true) => SyntheticScenario::line(
                &self.name,
                line.source_range,
                line.target_range,
                line.intercepts.clone(),
                line.slopes.clone(),
                line.shifts.clone(),
                self.noise.clone(),
                self.delta_true,
                outcome_space,
            ),
            (None, false) => {
                let points: Vec<Vec<f64>> =
                    self.cells.iter().map(|c| c.point.clone()).collect();
                let cmr: Vec<Vec<f64>> = self.cells.iter().map(|c| c.cmr.clone()).collect();
                let shifts: Vec<Vec<f64>> =
                    self.cells.iter().map(|c| c.shift.clone()).collect();
                SyntheticScenario::cells(
                    &self.name,
                    Mat::from_rows(&points)?,
                    self.cells.iter().map(|c| c.source_weight).collect(),
                    self.cells.iter().map(|c| c.target_weight).collect(),
                    Mat::from_rows(&cmr)?,
                    Mat::from_rows(&shifts)?,
                    self.noise.clone(),
                    self.delta_true,
                    outcome_space,
                    None,
                )
            }
            _ => Err(Error::Config(
                "scenario must define either [[cells]] or [line], exactly one".into(),
            )),
        }
    }
}
