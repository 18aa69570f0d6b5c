//! Implementations of the `learn`, `sweep`, `simulate`, and `diagnose`
//! commands. Each produces a validated `report.json` plus the documented
//! side files (`policy_<delta>.json`, `sweep.csv`, `regret.csv`), all
//! written atomically into the output directory.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::cmr::{fit_cmr, CmrModel};
use crate::data::{
    load_source, load_target, overlap_report, range_containment, OutcomeSpace, SourceDataset,
    TargetCovariates,
};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::policy::{exact_tree_search, TreePolicy};
use crate::robust::{
    ambiguity_bounds, covariate_shift_worst_case, gaussian_kl_score_matrix, hurwicz_score,
    kl_score_matrix, AmbiguityKind, RobustScoreMatrix,
};
use crate::sim::{
    equivalence_check, example1_scenario, rate_scenario, regret_experiment, two_state_scenario,
    RegretConfig, SyntheticScenario, EXAMPLE1_DELTA,
};

use super::config::{RunConfig, ScenarioConfig};
use super::report::{
    write_regret_csv, write_sweep_csv, CmrSummary, DeltaResult, Diagnostics, RunReport,
};

pub const TOOL_NAME: &str = "drpl";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

struct LoadedRun {
    ds: SourceDataset,
    tc: TargetCovariates,
    ys: OutcomeSpace,
    model: CmrModel,
    seed: u64,
}

fn load_run(cfg: &RunConfig) -> Result<LoadedRun> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let ds = load_source(&cfg.paths.source, &cfg.schema)?;
    let tc = load_target(&cfg.paths.target, &cfg.schema.covariates)?;
    if tc.k() != ds.k() {
        return Err(Error::Schema("source and target covariate counts differ".into()));
    }
    let ys = cfg.resolve_outcome_space(ds.outcomes())?;
    let model = fit_cmr(&ds, &cfg.estimator.to_cmr_config(), seed)?;
    Ok(LoadedRun { ds, tc, ys, model, seed })
}

/// Robust score matrix for one `(kind, delta)`; the KL kinds approximate
/// each conditional with arm residuals re-centered at the prediction.
fn scores_for(
    run: &LoadedRun,
    pred: &Mat,
    kind: AmbiguityKind,
    delta: f64,
) -> Result<RobustScoreMatrix> {
    match kind {
        AmbiguityKind::Wasserstein1 => {
            RobustScoreMatrix::from_predictions(pred, delta, run.ys)
        }
        AmbiguityKind::KlConditional => {
            let residuals = arm_residuals(&run.ds, &run.model)?;
            let scores = kl_score_matrix(pred, &residuals, delta, &run.ys)?;
            Ok(RobustScoreMatrix::from_scores(scores, delta, run.ys))
        }
        AmbiguityKind::GaussianKl => {
            let scores = gaussian_kl_score_matrix(pred, run.model.arm_residual_sd(), delta)?;
            Ok(RobustScoreMatrix::from_scores(scores, delta, run.ys))
        }
    }
}

fn arm_residuals(ds: &SourceDataset, model: &CmrModel) -> Result<Vec<Vec<f64>>> {
    let mut residuals = vec![Vec::new(); ds.d()];
    for i in 0..ds.n() {
        let a = ds.treatments()[i];
        let fitted = model.predict(ds.covariates().row(i), a)?;
        residuals[a - 1].push(ds.outcomes()[i] - fitted);
    }
    Ok(residuals)
}

fn delta_file_name(delta: f64) -> String {
    format!("policy_{delta}.json")
}

/// `learn`: fit the CMR, search the robust rule for every delta in the
/// grid, and emit the report, per-delta policy files, and the sweep table.
pub fn cmd_learn(cfg: &RunConfig) -> Result<RunReport> {
    run_learn_like(cfg, "learn")
}

/// `sweep`: the same pipeline viewed as a delta sweep; additionally checks
/// the monotonicity the closed form implies before writing the table.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<RunReport> {
    let report = run_learn_like(cfg, "sweep")?;
    for w in report.results.windows(2) {
        if w[1].robust_welfare > w[0].robust_welfare + 1e-9
            || w[1].naive_policy_robust_welfare > w[0].naive_policy_robust_welfare + 1e-9
        {
            return Err(Error::Internal(
                "sweep welfare columns must be non-increasing in delta".into(),
            ));
        }
    }
    Ok(report)
}

fn run_learn_like(cfg: &RunConfig, command: &str) -> Result<RunReport> {
    let run = load_run(cfg)?;
    let out_dir = &cfg.paths.out_dir;
    std::fs::create_dir_all(out_dir)?;
    let grid = cfg.delta_grid()?;
    let mask = cfg.mask_indices()?;
    let pred = run.model.predict_matrix(&run.tc)?;

    // The plug-in rule is the delta = 0 search on raw predictions.
    let naive_gamma = RobustScoreMatrix::from_predictions(&pred, 0.0, run.ys)?;
    let naive = exact_tree_search(&naive_gamma, &run.tc, cfg.policy.depth, &mask)?;
    let naive_assign = naive.policy.assignments(run.tc.covariates())?;

    let mut results = Vec::with_capacity(grid.len());
    for &delta in &grid {
        let spec = cfg.ambiguity_spec(delta)?;
        let gamma = scores_for(&run, &pred, spec.kind, delta)?;
        let found = exact_tree_search(&gamma, &run.tc, cfg.policy.depth, &mask)?;
        let naive_value = crate::robust::empirical_robust_welfare(&naive.policy, &gamma, &run.tc)?;

        let rho_welfare = match spec.rho {
            Some(rho) => {
                let phi: Vec<f64> = (0..run.tc.n())
                    .map(|j| {
                        found.policy.predict(run.tc.row(j)).map(|a| gamma.get(j, a))
                    })
                    .collect::<Result<_>>()?;
                let base = vec![1.0 / phi.len() as f64; phi.len()];
                Some(covariate_shift_worst_case(&phi, &base, rho)?.value)
            }
            None => None,
        };
        let hurwicz = match (spec.hurwicz_alpha, spec.kind) {
            (Some(alpha), AmbiguityKind::Wasserstein1) => {
                let mut total = 0.0;
                for j in 0..run.tc.n() {
                    let a = found.policy.predict(run.tc.row(j))?;
                    total += hurwicz_score(pred.get(j, a - 1), delta, alpha, &run.ys);
                }
                Some(total / run.tc.n() as f64)
            }
            _ => None,
        };

        let policy_file = delta_file_name(delta);
        super::report::write_atomic(
            &out_dir.join(&policy_file),
            found.policy.to_json().as_bytes(),
        )?;
        results.push(DeltaResult {
            delta,
            policy_file,
            policy_text: found.policy.to_text(),
            policy_depth: found.policy.depth(),
            robust_welfare: found.value,
            naive_policy_robust_welfare: naive_value,
            same_assignments_as_naive: found.policy.assignments(run.tc.covariates())?
                == naive_assign,
            rho_robust_welfare: rho_welfare,
            hurwicz_welfare: hurwicz,
        });
    }

    write_sweep_csv(&out_dir.join("sweep.csv"), &results)?;

    let report = RunReport {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        command: command.into(),
        seed: run.seed,
        config: serde_json::to_value(cfg)
            .map_err(|e| Error::Internal(format!("config echo failed: {e}")))?,
        outcome_space: run.ys,
        n_source: run.ds.n(),
        n_target: run.tc.n(),
        arms: run.ds.labels().to_vec(),
        cmr: Some(CmrSummary {
            kind: run.model.kind,
            bound: run.model.bound(),
            holdout_mse: run.model.holdout_mse,
            arm_residual_sd: run.model.arm_residual_sd().to_vec(),
        }),
        results,
        diagnostics: Some(Diagnostics {
            overlap: overlap_report(&run.ds),
            covariate_containment: range_containment(
                run.ds.covariates(),
                run.tc.covariates(),
            )?,
            ambiguity_bounds: None,
        }),
        extra: None,
    };
    report.write(&out_dir.join("report.json"))?;
    Ok(report)
}

/// `diagnose`: data diagnostics, and the membership bounds when a
/// candidate CMR table is supplied.
pub fn cmd_diagnose(cfg: &RunConfig, candidate_path: Option<&Path>) -> Result<RunReport> {
    let run = load_run(cfg)?;
    let out_dir = &cfg.paths.out_dir;
    std::fs::create_dir_all(out_dir)?;
    let delta = *cfg.delta_grid()?.last().expect("validated non-empty");

    let bounds = match candidate_path {
        Some(path) => {
            let candidate = load_candidate_cmr(path, run.tc.n(), run.ds.d())?;
            let source_m = run.model.predict_matrix(&run.tc)?;
            let src_on_source = run.model.predict_matrix(&TargetCovariates::new(
                run.ds.covariates().clone(),
            )?)?;
            let source_means: Vec<f64> =
                (0..run.ds.d()).map(|a| src_on_source.col_mean(a)).collect();
            let target_means: Vec<f64> =
                (0..run.ds.d()).map(|a| source_m.col_mean(a)).collect();
            Some(ambiguity_bounds(&source_m, &candidate, delta, &source_means, &target_means)?)
        }
        None => None,
    };

    let report = RunReport {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        command: "diagnose".into(),
        seed: run.seed,
        config: serde_json::to_value(cfg)
            .map_err(|e| Error::Internal(format!("config echo failed: {e}")))?,
        outcome_space: run.ys,
        n_source: run.ds.n(),
        n_target: run.tc.n(),
        arms: run.ds.labels().to_vec(),
        cmr: Some(CmrSummary {
            kind: run.model.kind,
            bound: run.model.bound(),
            holdout_mse: run.model.holdout_mse,
            arm_residual_sd: run.model.arm_residual_sd().to_vec(),
        }),
        results: vec![],
        diagnostics: Some(Diagnostics {
            overlap: overlap_report(&run.ds),
            covariate_containment: range_containment(
                run.ds.covariates(),
                run.tc.covariates(),
            )?,
            ambiguity_bounds: bounds,
        }),
        extra: None,
    };
    report.write(&out_dir.join("report.json"))?;
    Ok(report)
}

/// Candidate CMR file: CSV with columns `m_1..m_d`, one row per target
/// sample.
fn load_candidate_cmr(path: &Path, n_t: usize, d: usize) -> Result<Mat> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Schema(format!("cannot open candidate {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("candidate file has no header: {e}")))?
        .clone();
    let mut cols = Vec::with_capacity(d);
    for a in 1..=d {
        let name = format!("m_{a}");
        cols.push(headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Schema(format!("candidate file is missing column {name:?}"))
        })?);
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i + 1,
            message: format!("bad candidate record: {e}"),
        })?;
        let mut vals = Vec::with_capacity(d);
        for &c in &cols {
            let raw = record.get(c).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row: i + 1,
                message: format!("cannot parse candidate value {raw:?}"),
            })?;
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.len() != n_t {
        return Err(Error::Schema(format!(
            "candidate file has {} rows but the target sample has {n_t}",
            rows.len()
        )));
    }
    Mat::from_rows(&rows)
}

/// What `simulate` should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulateMode {
    /// Policy-class values and the equivalence report (exact, no fitting).
    Values,
    /// Monte Carlo regret table (`regret.csv`).
    RateCheck,
    /// Fitted-rule delta sweep with realized target welfare (`sweep.csv`
    /// semantics on simulated data).
    Sweep,
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub preset: Option<String>,
    pub scenario_path: Option<PathBuf>,
    pub q: f64,
    pub mode: SimulateMode,
    pub delta: Option<f64>,
    pub delta_grid: Option<Vec<f64>>,
    pub depth: usize,
    pub reps: usize,
    pub sizes: Vec<(usize, usize)>,
    pub n_fit: (usize, usize),
    pub oracle_cmr: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for SimulateArgs {
    fn default() -> Self {
        SimulateArgs {
            preset: Some("example1".into()),
            scenario_path: None,
            q: 0.75,
            mode: SimulateMode::Values,
            delta: None,
            delta_grid: None,
            depth: 1,
            reps: 20,
            sizes: vec![(250, 250), (1000, 1000), (4000, 4000)],
            n_fit: (4000, 4000),
            oracle_cmr: false,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn resolve_scenario(args: &SimulateArgs) -> Result<(SyntheticScenario, f64)> {
    if args.preset.is_some() && args.scenario_path.is_some() {
        return Err(Error::Config("give either --preset or --scenario, not both".into()));
    }
    if let Some(path) = &args.scenario_path {
        let s = ScenarioConfig::from_file(path)?.build()?;
        let delta = args.delta.unwrap_or(s.delta_true);
        return Ok((s, delta));
    }
    match args.preset.as_deref() {
        Some("example1") | None => {
            Ok((example1_scenario(args.q)?, args.delta.unwrap_or(EXAMPLE1_DELTA)))
        }
        Some("two-state") => {
            let s = two_state_scenario();
            let delta = args.delta.unwrap_or(s.delta_true);
            Ok((s, delta))
        }
        Some("rate-check") => {
            let s = rate_scenario();
            let delta = args.delta.unwrap_or(s.delta_true);
            Ok((s, delta))
        }
        Some(other) => Err(Error::Config(format!(
            "unknown preset {other:?} (expected example1, two-state, or rate-check)"
        ))),
    }
}

/// `simulate`: scenario-driven experiments with exact ground truth.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunReport> {
    let (scenario, delta) = resolve_scenario(args)?;
    std::fs::create_dir_all(&args.out_dir)?;

    let extra = match args.mode {
        SimulateMode::Values => simulate_values(&scenario, delta, args)?,
        SimulateMode::RateCheck => {
            let cfg = RegretConfig {
                sizes: args.sizes.clone(),
                reps: args.reps,
                delta,
                depth: args.depth,
                oracle_cmr: args.oracle_cmr,
                cmr: crate::cmr::CmrConfig::knn(),
                master_seed: args.seed,
            };
            let rows = regret_experiment(&scenario, &cfg)?;
            write_regret_csv(&args.out_dir.join("regret.csv"), &rows)?;
            json!({
                "mode": "rate-check",
                "scenario": scenario.name,
                "delta": delta,
                "rows": rows,
            })
        }
        SimulateMode::Sweep => simulate_sweep(&scenario, delta, args)?,
    };

    let report = RunReport {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        command: "simulate".into(),
        seed: args.seed,
        config: json!({
            "preset": args.preset,
            "scenario": args.scenario_path,
            "q": args.q,
            "delta": delta,
            "depth": args.depth,
            "reps": args.reps,
            "sizes": args.sizes,
            "oracle_cmr": args.oracle_cmr,
        }),
        outcome_space: scenario.outcome_space,
        n_source: 0,
        n_target: 0,
        arms: (1..=scenario.d()).map(|a| a.to_string()).collect(),
        cmr: None,
        results: vec![],
        diagnostics: None,
        extra: Some(extra),
    };
    report.write(&args.out_dir.join("report.json"))?;
    Ok(report)
}

/// Exact class values plus the plug-in/robust argmax comparison.
fn simulate_values(
    scenario: &SyntheticScenario,
    delta: f64,
    args: &SimulateArgs,
) -> Result<serde_json::Value> {
    let policies: Vec<(String, TreePolicy)> = match &scenario.policy_class {
        Some(class) => class
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("g{}", i + 1), g.clone()))
            .collect(),
        None => {
            let (g, _) = crate::sim::regret::true_dr_optimum(scenario, delta, args.depth)?;
            vec![("dr_optimum".into(), g)]
        }
    };
    let mut table = Vec::new();
    for (name, g) in &policies {
        table.push(json!({
            "policy": name,
            "text": g.to_text(),
            "naive_welfare": scenario.true_robust_welfare(g, 0.0)?,
            "robust_welfare": scenario.true_robust_welfare(g, delta)?,
            "target_welfare": scenario.true_target_welfare(g)?,
        }));
    }
    let equivalence = if scenario.is_discrete() {
        Some(equivalence_check(scenario, delta, args.depth)?)
    } else {
        None
    };
    Ok(json!({
        "mode": "values",
        "scenario": scenario.name,
        "delta": delta,
        "policies": table,
        "equivalence": equivalence,
    }))
}

/// Fit rules on one simulated draw per delta and report exact realized
/// target welfare next to the empirical robust welfare.
fn simulate_sweep(
    scenario: &SyntheticScenario,
    default_delta: f64,
    args: &SimulateArgs,
) -> Result<serde_json::Value> {
    let grid = match &args.delta_grid {
        Some(grid) => grid.clone(),
        None => {
            let top = default_delta.max(1e-9);
            (0..=10).map(|i| top * i as f64 / 10.0).collect()
        }
    };
    let (n_s, n_t) = args.n_fit;
    let ds = scenario.sample_source(n_s, crate::sim::derive_seed(args.seed, 101, 0))?;
    let tc = scenario.sample_target(n_t, crate::sim::derive_seed(args.seed, 102, 0))?;
    let model = fit_cmr(&ds, &crate::cmr::CmrConfig::knn(), args.seed)?;
    let pred = model.predict_matrix(&tc)?;

    let naive_gamma = RobustScoreMatrix::from_predictions(&pred, 0.0, scenario.outcome_space)?;
    let (naive_rule, _) = crate::sim::regret::fit_rule(scenario, &naive_gamma, &tc, args.depth)?;
    let naive_target = scenario.true_target_welfare(&naive_rule)?;

    let mut rows = Vec::new();
    for &delta in &grid {
        let gamma = RobustScoreMatrix::from_predictions(&pred, delta, scenario.outcome_space)?;
        let (rule, emp_value) = crate::sim::regret::fit_rule(scenario, &gamma, &tc, args.depth)?;
        rows.push(json!({
            "delta": delta,
            "empirical_robust_welfare": emp_value,
            "dr_target_welfare": scenario.true_target_welfare(&rule)?,
            "naive_target_welfare": naive_target,
            "policy_text": rule.to_text(),
        }));
    }
    // CSV mirror of the table for plotting.
    let mut csv = String::from(
        "delta,empirical_robust_welfare,dr_target_welfare,naive_target_welfare\n",
    );
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row["delta"],
            row["empirical_robust_welfare"],
            row["dr_target_welfare"],
            row["naive_target_welfare"]
        ));
    }
    super::report::write_atomic(&args.out_dir.join("sim_sweep.csv"), csv.as_bytes())?;
    Ok(json!({
        "mode": "sweep",
        "scenario": scenario.name,
        "n_fit": {"n_s": n_s, "n_t": n_t},
        "rows": rows,
        "naive_target_welfare": naive_target,
    }))
}
