use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spde_mlmc::experiments::{execute, Experiment, ExperimentConfig};
use spde_mlmc::Error;

/// Matérn field sampling on non-nested meshes and multilevel Monte Carlo
/// for a lognormal Darcy problem.
#[derive(Parser, Debug)]
#[command(name = "spde-mlmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the mesh hierarchy, save meshes and report supermesh sizes.
    Hierarchy(Common),
    /// Convergence of the squared L2 norm of Matérn fields with h.
    MaternConvergence(Common),
    /// Empirical covariance curve against the exact Matérn covariance.
    Covariance(Common),
    /// Telescoping consistency check per level.
    Telescope(Common),
    /// Fitted MLMC rates for the Darcy functional.
    Rates(Common),
    /// Adaptive MLMC over a sweep of tolerances.
    Mlmc(Common),
    /// MLMC against single-level Monte Carlo over a sweep of tolerances.
    McCompare(Common),
    /// Darcy functional on one mesh with increasing polynomial degree.
    PRefine(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Plain-text `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Levels as `N` (1..=N) or `A..B`.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    /// Samples per level.
    #[arg(long = "N", visible_alias = "n")]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated tolerances.
    #[arg(long)]
    epsilon: Option<String>,
    /// supermesh, independent or injection.
    #[arg(long)]
    coupling: Option<String>,
    /// matern or darcy.
    #[arg(long)]
    qoi: Option<String>,
    #[arg(long = "start-level")]
    start_level: Option<String>,
    /// Any other config key, as `KEY=VALUE`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn split(&self) -> (Experiment, &Common) {
        match self {
            Self::Hierarchy(c) => (Experiment::Hierarchy, c),
            Self::MaternConvergence(c) => (Experiment::MaternConvergence, c),
            Self::Covariance(c) => (Experiment::Covariance, c),
            Self::Telescope(c) => (Experiment::Telescope, c),
            Self::Rates(c) => (Experiment::Rates, c),
            Self::Mlmc(c) => (Experiment::Mlmc, c),
            Self::McCompare(c) => (Experiment::McCompare, c),
            Self::PRefine(c) => (Experiment::PRefine, c),
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let flags = [
        ("levels", &common.levels),
        ("nu", &common.nu),
        ("sigma", &common.sigma),
        ("lambda", &common.lambda),
        ("degree", &common.degree),
        ("n", &common.n),
        ("seed", &common.seed),
        ("epsilon", &common.epsilon),
        ("coupling", &common.coupling),
        ("qoi", &common.qoi),
        ("start_level", &common.start_level),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, common) = cli.command.split();
    let result = load_config(common).and_then(|cfg| execute(exp, &cfg).map(|out| (cfg, out)));
    match result {
        Ok((cfg, out)) => {
            for line in &out.report {
                println!("{line}");
            }
            println!("outputs written to {}", cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
