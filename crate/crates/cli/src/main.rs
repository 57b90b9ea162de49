use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bcla::{ErrorKind, Result};

mod commands;
mod config;

use config::RunConfig;

/// Fuses continuous labels from several biased, noisy annotators.
#[derive(Parser, Debug)]
#[command(name = "bcla", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Generate a synthetic annotation study.
    Simulate,
    /// Run aggregation methods and write their estimates.
    Aggregate,
    /// Bootstrap accuracy against a reference and test methods pairwise.
    Evaluate,
    /// Accuracy as a function of the number of annotators.
    Sweep,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file (or a previous run_manifest.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated: mean,median,em_r,bcla,best_annotator.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Output directory; also where inputs are looked up by default.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Prior profile: sim or real.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Re-run methods on every bootstrap replicate instead of resampling
    /// residuals.
    #[arg(long, global = true)]
    refit: bool,
    #[arg(long, global = true)]
    annotations: Option<PathBuf>,
    #[arg(long, global = true)]
    features: Option<PathBuf>,
    /// Two-column `record_id,value` reference labels.
    #[arg(long, global = true)]
    reference: Option<PathBuf>,
    /// Simulator `truth.csv`; `annotators_truth.csv` is expected beside it.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    #[arg(long, global = true)]
    records: Option<usize>,
    #[arg(long, global = true)]
    annotators: Option<usize>,
    #[arg(long, global = true)]
    n_boot: Option<usize>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Sweep sizes, `3..20` or `3,5,8`.
    #[arg(long, global = true)]
    sizes: Option<String>,
    /// Any config key, e.g. `--set mu_phi=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    // The profile has to be known before the file is read so that the
    // file can override profile-derived values.
    if let Some(p) = &common.profile {
        cfg.set("profile", p)?;
    }
    if let Some(path) = &common.config {
        cfg.load_file(path)?;
    }
    let path = |p: &PathBuf| p.display().to_string();
    let flags: [(&str, Option<String>); 13] = [
        ("profile", common.profile.clone()),
        ("seed", common.seed.map(|v| v.to_string())),
        ("method", common.method.clone()),
        ("out", common.out.as_ref().map(path)),
        ("annotations", common.annotations.as_ref().map(path)),
        ("features", common.features.as_ref().map(path)),
        ("reference", common.reference.as_ref().map(path)),
        ("truth", common.truth.as_ref().map(path)),
        ("records", common.records.map(|v| v.to_string())),
        ("annotators", common.annotators.map(|v| v.to_string())),
        ("n_boot", common.n_boot.map(|v| v.to_string())),
        ("reps", common.reps.map(|v| v.to_string())),
        ("sizes", common.sizes.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if common.refit {
        cfg.refit = true;
    }
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            bcla::Error::InvalidParameter(format!("--set expects KEY=VALUE, got `{kv}`"))
        })?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg),
        Command::Aggregate => commands::cmd_aggregate(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}
