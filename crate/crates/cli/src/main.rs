use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use ambiguity_cli::{emit, run_scenario, CheckName, Format, Override};
use clap::Parser;

/// Price a European claim under drift ambiguity with every estimator.
#[derive(Debug, Parser)]
#[command(name = "price", version)]
struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Time steps per simulated path.
    #[arg(long)]
    steps: Option<usize>,
    /// Number of constant controls on [-k, k].
    #[arg(long = "theta-grid")]
    theta_grid: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// text, csv, or json (json-like is accepted as an alias).
    #[arg(long, default_value = "text")]
    format: Format,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Extra check to run; repeatable.
    #[arg(long = "check")]
    checks: Vec<CheckName>,
    /// Scenario override such as `market.k=0`; repeatable.
    #[arg(long = "set")]
    sets: Vec<Override>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let mut overrides = args.sets.clone();
    if let Some(v) = args.seed {
        overrides.push(Override::new("numerics.seed", v as i64));
    }
    if let Some(v) = args.paths {
        overrides.push(Override::new("numerics.n_paths", v as i64));
    }
    if let Some(v) = args.steps {
        overrides.push(Override::new("numerics.steps", v as i64));
    }
    if let Some(v) = args.theta_grid {
        overrides.push(Override::new("numerics.theta_grid_count", v as i64));
    }

    let report = match run_scenario(&args.scenario, &overrides, &args.checks) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let bytes = emit(&report, args.format);
    let written = match &args.out {
        Some(path) => std::fs::write(path, &bytes),
        None => std::io::stdout().write_all(&bytes),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(2);
    }
    let failed = report.failed_checks();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for c in failed {
            eprintln!("check failed: {}: {}", c.name, c.detail);
        }
        ExitCode::from(1)
    }
}
