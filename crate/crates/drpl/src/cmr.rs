//! Source conditional-mean-response estimation with an explicit bound.
//!
//! Two estimator families are provided, both piecewise-constant so that
//! every prediction stays inside the observed outcome range (which supplies
//! the almost-sure bound `M` for free):
//!
//! - per-arm bagged CART regression trees (the default), and
//! - per-arm k-nearest-neighbor tables with `k = ceil(n_a^(2/3))` unless
//!   overridden.
//!
//! Fitting is deterministic given the seed. The held-out MSE proxy uses a
//! fixed 80/20 split per arm derived from an internal constant, so the
//! fitted predictors depend on the user seed only through bagging.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SourceDataset, TargetCovariates};
use crate::error::{Error, Result};
use crate::mat::Mat;

const MODEL_FORMAT_VERSION: u32 = 1;
/// Internal seed for the held-out split; independent of the user seed so
/// that disabling bagging makes the whole fit seed-invariant.
const HOLDOUT_SEED: u64 = 0x8020_5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    BaggedTrees,
    Knn,
}

/// Estimator settings; `Default` matches the recommended configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmrConfig {
    pub kind: EstimatorKind,
    /// Bagging rounds for `BaggedTrees`.
    pub rounds: usize,
    pub min_leaf: usize,
    /// When false every round sees the full sample, making the fit
    /// independent of the seed.
    pub bootstrap: bool,
    /// Neighbor count for `Knn`; `None` means `ceil(n_a^(2/3))` per arm.
    pub knn_k: Option<usize>,
}

impl Default for CmrConfig {
    fn default() -> Self {
        CmrConfig {
            kind: EstimatorKind::BaggedTrees,
            rounds: 100,
            min_leaf: 5,
            bootstrap: true,
            knn_k: None,
        }
    }
}

impl CmrConfig {
    pub fn knn() -> Self {
        CmrConfig { kind: EstimatorKind::Knn, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("bagging rounds must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be >= 1".into()));
        }
        if let Some(k) = self.knn_k {
            if k == 0 {
                return Err(Error::Config("knn k must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Regression-tree node in an arena; `left`/`right` index into the node
/// list, which keeps the serialized form an explicit flat table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split { feature, threshold, left, right } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmPredictor {
    Forest { trees: Vec<RegTree> },
    Knn { points: Mat, outcomes: Vec<f64>, k: usize },
}

impl ArmPredictor {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            ArmPredictor::Forest { trees } => {
                trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
            }
            ArmPredictor::Knn { points, outcomes, k } => {
                let mut dist: Vec<(f64, usize)> = (0..points.rows())
                    .map(|i| {
                        let row = points.row(i);
                        let d2: f64 =
                            row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                        (d2, i)
                    })
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let k = (*k).min(dist.len());
                dist[..k].iter().map(|&(_, i)| outcomes[i]).sum::<f64>() / k as f64
            }
        }
    }
}

/// Fitted CMR model `m_hat(x, a)` for arms `1..=d`, with the almost-sure
/// bound `M = max |Y|` observed in the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmrModel {
    pub format_version: u32,
    pub kind: EstimatorKind,
    pub config: CmrConfig,
    pub seed: u64,
    d: usize,
    k: usize,
    bound_m: f64,
    y_min: f64,
    y_max: f64,
    /// Mean squared error on the fixed 80/20 held-out split; `None` when
    /// the arms are too small to hold anything out.
    pub holdout_mse: Option<f64>,
    /// Residual standard deviation per arm on the training rows.
    arm_residual_sd: Vec<f64>,
    arms: Vec<ArmPredictor>,
}

impl CmrModel {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Almost-sure prediction bound `M`.
    pub fn bound(&self) -> f64 {
        self.bound_m
    }

    pub fn outcome_range(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }

    pub fn arm_residual_sd(&self) -> &[f64] {
        &self.arm_residual_sd
    }

    /// `m_hat(x, a)` for arm `a` in `1..=d`.
    pub fn predict(&self, x: &[f64], a: usize) -> Result<f64> {
        if x.len() != self.k {
            return Err(Error::Dimension(format!(
                "expected {} covariates, got {}",
                self.k,
                x.len()
            )));
        }
        if a == 0 || a > self.d {
            return Err(Error::Domain(format!("arm {a} outside 1..={}", self.d)));
        }
        Ok(self.arms[a - 1].predict(x))
    }

    /// `n_t x d` matrix of `m_hat(X_j, a)`.
    pub fn predict_matrix(&self, tc: &TargetCovariates) -> Result<Mat> {
        if tc.k() != self.k {
            return Err(Error::Dimension(format!(
                "target has {} covariates, model expects {}",
                tc.k(),
                self.k
            )));
        }
        let mut out = Mat::zeros(tc.n(), self.d);
        for j in 0..tc.n() {
            for a in 1..=self.d {
                out.set(j, a - 1, self.predict(tc.row(j), a)?);
            }
        }
        Ok(out)
    }

    /// Versioned, self-describing text serialization.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: CmrModel = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("invalid model file: {e}")))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Fit the per-arm CMR estimator. Deterministic given `(ds, cfg, seed)`.
pub fn fit_cmr(ds: &SourceDataset, cfg: &CmrConfig, seed: u64) -> Result<CmrModel> {
    cfg.validate()?;
    let d = ds.d();
    let xs = ds.covariates();
    let ys = ds.outcomes();

    let mut arms = Vec::with_capacity(d);
    let mut residual_sd = Vec::with_capacity(d);
    let mut holdout_sq = 0.0f64;
    let mut holdout_n = 0usize;

    for a in 1..=d {
        let rows = ds.arm_rows(a);
        if rows.len() < cfg.min_leaf {
            return Err(Error::Config(format!(
                "arm {a} has {} observations, fewer than min_leaf = {}",
                rows.len(),
                cfg.min_leaf
            )));
        }
        if let Some(k) = cfg.knn_k {
            if cfg.kind == EstimatorKind::Knn && k > rows.len() {
                return Err(Error::Config(format!(
                    "arm {a} has {} observations, fewer than knn k = {k}",
                    rows.len()
                )));
            }
        }

        // Fixed 80/20 held-out split (internal seed, stratified by arm).
        let mut shuffled = rows.clone();
        let mut split_rng = ChaCha8Rng::seed_from_u64(HOLDOUT_SEED ^ (a as u64));
        shuffled.shuffle(&mut split_rng);
        let n_hold = rows.len() / 5;
        if n_hold > 0 && rows.len() - n_hold >= cfg.min_leaf {
            let (hold, train) = shuffled.split_at(n_hold);
            let predictor = fit_arm(xs, ys, train, cfg, seed, a)?;
            for &i in hold {
                let err = predictor.predict(xs.row(i)) - ys[i];
                holdout_sq += err * err;
            }
            holdout_n += n_hold;
        }

        // Final predictor on all arm rows.
        let predictor = fit_arm(xs, ys, &rows, cfg, seed, a)?;
        let mut sq = 0.0;
        for &i in &rows {
            let r = predictor.predict(xs.row(i)) - ys[i];
            sq += r * r;
        }
        residual_sd.push((sq / rows.len() as f64).sqrt());
        arms.push(predictor);
    }

    let bound_m = ys.iter().fold(0.0f64, |m, &y| m.max(y.abs()));
    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(CmrModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: cfg.kind,
        config: cfg.clone(),
        seed,
        d,
        k: ds.k(),
        bound_m,
        y_min,
        y_max,
        holdout_mse: (holdout_n > 0).then(|| holdout_sq / holdout_n as f64),
        arm_residual_sd: residual_sd,
        arms,
    })
}

fn fit_arm(
    xs: &Mat,
    ys: &[f64],
    rows: &[usize],
    cfg: &CmrConfig,
    seed: u64,
    arm: usize,
) -> Result<ArmPredictor> {
    match cfg.kind {
        EstimatorKind::Knn => {
            let k = cfg
                .knn_k
                .unwrap_or_else(|| (rows.len() as f64).powf(2.0 / 3.0).ceil() as usize)
                .min(rows.len())
                .max(1);
            let points =
                Mat::from_rows(&rows.iter().map(|&i| xs.row(i).to_vec()).collect::<Vec<_>>())?;
            let outcomes = rows.iter().map(|&i| ys[i]).collect();
            Ok(ArmPredictor::Knn { points, outcomes, k })
        }
        EstimatorKind::BaggedTrees => {
            if !cfg.bootstrap {
                // Without resampling every round grows the same tree.
                return Ok(ArmPredictor::Forest {
                    trees: vec![fit_tree(xs, ys, rows, cfg.min_leaf)],
                });
            }
            let mut trees = Vec::with_capacity(cfg.rounds);
            for round in 0..cfg.rounds {
                // Per-round stream keyed by (arm, round) so rounds can be
                // reproduced independently of each other.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((arm as u64) << 32) | round as u64);
                let sample: Vec<usize> =
                    (0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]).collect();
                trees.push(fit_tree(xs, ys, &sample, cfg.min_leaf));
            }
            Ok(ArmPredictor::Forest { trees })
        }
    }
}

/// Grow a CART regression tree: SSE-minimizing axis-aligned splits at
/// midpoints of adjacent distinct feature values, both children at least
/// `min_leaf` rows, split ties broken by lowest feature then lowest
/// threshold.
fn fit_tree(xs: &Mat, ys: &[f64], rows: &[usize], min_leaf: usize) -> RegTree {
    let mut nodes = Vec::new();
    grow(xs, ys, rows, min_leaf, &mut nodes);
    RegTree { nodes }
}

fn grow(xs: &Mat, ys: &[f64], rows: &[usize], min_leaf: usize, nodes: &mut Vec<RegNode>) -> usize {
    let n = rows.len() as f64;
    let sum: f64 = rows.iter().map(|&i| ys[i]).sum();
    let sum_sq: f64 = rows.iter().map(|&i| ys[i] * ys[i]).sum();
    let mean = sum / n;
    let sse = (sum_sq - sum * sum / n).max(0.0);

    let idx = nodes.len();
    nodes.push(RegNode::Leaf { value: mean });
    if rows.len() < 2 * min_leaf || sse <= 1e-12 {
        return idx;
    }

    let mut best: Option<(f64, usize, f64, usize)> = None; // (sse, feature, threshold, pos)
    let mut best_order: Vec<usize> = Vec::new();
    for f in 0..xs.cols() {
        let mut order = rows.to_vec();
        order.sort_by(|&a, &b| xs.get(a, f).total_cmp(&xs.get(b, f)).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for pos in 0..order.len() - 1 {
            let y = ys[order[pos]];
            left_sum += y;
            left_sq += y * y;
            let nl = (pos + 1) as f64;
            if pos + 1 < min_leaf || order.len() - pos - 1 < min_leaf {
                continue;
            }
            let v0 = xs.get(order[pos], f);
            let v1 = xs.get(order[pos + 1], f);
            if v0 >= v1 {
                continue;
            }
            let nr = n - nl;
            let right_sum = sum - left_sum;
            let right_sq = sum_sq - left_sq;
            let split_sse = (left_sq - left_sum * left_sum / nl).max(0.0)
                + (right_sq - right_sum * right_sum / nr).max(0.0);
            let threshold = 0.5 * (v0 + v1);
            if best.as_ref().is_none_or(|b| split_sse < b.0 - 1e-12) {
                best = Some((split_sse, f, threshold, pos));
                best_order = order.clone();
            }
        }
    }

    match best {
        Some((split_sse, feature, threshold, pos)) if split_sse < sse - 1e-12 => {
            let (left_rows, right_rows) = best_order.split_at(pos + 1);
            let left = grow(xs, ys, left_rows, min_leaf, nodes);
            let right = grow(xs, ys, right_rows, min_leaf, nodes);
            nodes[idx] = RegNode::Split { feature, threshold, left, right };
            idx
        }
        _ => idx,
    }
}
