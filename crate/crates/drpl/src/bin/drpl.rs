//! `drpl`: learn distributionally robust treatment rules from source
//! experimental data and target covariates.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use drpl::cli::{
    cmd_diagnose, cmd_learn, cmd_simulate, cmd_sweep, Overrides, RunConfig, SimulateArgs,
    SimulateMode,
};
use drpl::robust::AmbiguityKind;

#[derive(Parser)]
#[command(name = "drpl", version, about = "Distributionally robust policy learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// Declarative run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Single ambiguity radius (outcome units for w1, nats for KL kinds).
    #[arg(long)]
    delta: Option<f64>,
    /// Comma-separated, strictly increasing radii.
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    /// Covariate-shift KL radius.
    #[arg(long)]
    rho: Option<f64>,
    /// Ambiguity kind.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<AmbiguityKind>,
    /// Policy tree depth (0, 1, or 2).
    #[arg(long)]
    depth: Option<usize>,
    /// Comma-separated covariate names excluded from splits.
    #[arg(long, value_delimiter = ',')]
    mask: Option<Vec<String>>,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(raw: &str) -> Result<AmbiguityKind, String> {
    match raw {
        "w1" => Ok(AmbiguityKind::Wasserstein1),
        "kl" => Ok(AmbiguityKind::KlConditional),
        "gauss-kl" => Ok(AmbiguityKind::GaussianKl),
        other => Err(format!("unknown kind {other:?} (expected w1, kl, gauss-kl)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the CMR and learn robust rules for each delta in the grid.
    Learn(CommonFlags),
    /// Emit the delta-vs-welfare sweep table for plotting.
    Sweep(CommonFlags),
    /// Run synthetic-scenario experiments with exact ground truth.
    Simulate(SimulateFlags),
    /// Data diagnostics and ambiguity-set membership bounds.
    Diagnose(DiagnoseFlags),
}

#[derive(Args)]
struct SimulateFlags {
    /// Built-in scenario: example1, two-state, or rate-check.
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// Scenario description file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Target share of the low-outcome cell for the example1 preset.
    #[arg(long, default_value_t = 0.75)]
    q: f64,
    /// Ambiguity radius; defaults to the scenario's construction budget.
    #[arg(long)]
    delta: Option<f64>,
    /// Radii for --mode sweep.
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Replications per size for the regret table.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Sizes for the regret table as n_sxn_t pairs, e.g. 250x250,1000x1000.
    #[arg(long, value_delimiter = ',', value_parser = parse_size)]
    sizes: Option<Vec<(usize, usize)>>,
    /// Use the true CMR instead of fitting one.
    #[arg(long, default_value_t = false)]
    oracle_cmr: bool,
    /// Shortcut for --mode rate-check.
    #[arg(long, default_value_t = false)]
    rate_check: bool,
    /// values | rate-check | sweep.
    #[arg(long, default_value = "values")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_size(raw: &str) -> Result<(usize, usize), String> {
    let (a, b) = raw
        .split_once('x')
        .ok_or_else(|| format!("size {raw:?} must look like 250x250"))?;
    Ok((
        a.parse().map_err(|_| format!("bad n_s in {raw:?}"))?,
        b.parse().map_err(|_| format!("bad n_t in {raw:?}"))?,
    ))
}

#[derive(Args)]
struct DiagnoseFlags {
    #[command(flatten)]
    common: CommonFlags,
    /// Candidate CMR table (CSV with columns m_1..m_d, one row per target
    /// sample) to test against the membership bounds.
    #[arg(long)]
    candidate: Option<PathBuf>,
}

fn load_config(flags: &CommonFlags) -> Result<RunConfig, drpl::Error> {
    let mut cfg = RunConfig::from_file(&flags.config)?;
    cfg.apply(&Overrides {
        seed: flags.seed,
        delta: flags.delta,
        delta_grid: flags.delta_grid.clone(),
        rho: flags.rho,
        kind: flags.kind,
        depth: flags.depth,
        mask: flags.mask.clone(),
        out_dir: flags.out.clone(),
    });
    Ok(cfg)
}

fn run() -> Result<(), drpl::Error> {
    match Cli::parse().command {
        Command::Learn(flags) => {
            let cfg = load_config(&flags)?;
            let report = cmd_learn(&cfg)?;
            eprintln!(
                "learned {} rule(s); report at {}",
                report.results.len(),
                cfg.paths.out_dir.join("report.json").display()
            );
        }
        Command::Sweep(flags) => {
            let cfg = load_config(&flags)?;
            cmd_sweep(&cfg)?;
            eprintln!("sweep table at {}", cfg.paths.out_dir.join("sweep.csv").display());
        }
        Command::Simulate(flags) => {
            let mode = if flags.rate_check {
                SimulateMode::RateCheck
            } else {
                match flags.mode.as_str() {
                    "values" => SimulateMode::Values,
                    "rate-check" => SimulateMode::RateCheck,
                    "sweep" => SimulateMode::Sweep,
                    other => {
                        return Err(drpl::Error::Config(format!(
                            "unknown mode {other:?} (expected values, rate-check, sweep)"
                        )))
                    }
                }
            };
            let defaults = SimulateArgs::default();
            let args = SimulateArgs {
                preset: flags.preset.or({
                    if flags.scenario.is_none() {
                        Some("example1".into())
                    } else {
                        None
                    }
                }),
                scenario_path: flags.scenario,
                q: flags.q,
                mode,
                delta: flags.delta,
                delta_grid: flags.delta_grid,
                depth: flags.depth,
                reps: flags.reps,
                sizes: flags.sizes.unwrap_or(defaults.sizes),
                n_fit: defaults.n_fit,
                oracle_cmr: flags.oracle_cmr,
                seed: flags.seed,
                out_dir: flags.out,
            };
            cmd_simulate(&args)?;
            eprintln!("simulation report at {}", args.out_dir.join("report.json").display());
        }
        Command::Diagnose(flags) => {
            let cfg = load_config(&flags.common)?;
            cmd_diagnose(&cfg, flags.candidate.as_deref())?;
            eprintln!("diagnostics at {}", cfg.paths.out_dir.join("report.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
