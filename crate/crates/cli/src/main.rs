//! `jointdetect`: batch front end for matching, detection grids, model fits,
//! cross-validation, IPW reports, schedule generation and simulation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::{Failure, Outcome};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "jointdetect", version, about = "Joint-activity detection from location-history exports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match recorded visits to ground-truth activities.
    Match(Common),
    /// Detection rates over thresholds, device classes and group sizes.
    Grid(Common),
    /// Logit fits with bootstrap or resampled effect intervals.
    Fit(Common),
    /// k-fold cross-validated confusion metrics.
    Cv(Common),
    /// Inverse-probability-weighted detection frequencies.
    Ipw(Common),
    /// Generate an activity schedule and its ground-truth template.
    Schedule(Common),
    /// Generate a synthetic corpus of location histories.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// e.g. "S:10,50;T:0.6,0.8,1.0;placeid".
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    scope: Option<String>,
}

fn report(command: &str, kind: &str, errors: &[String]) {
    let doc = json!({ "status": "error", "command": command, "kind": kind, "errors": errors });
    eprintln!("{}", serde_json::to_string_pretty(&doc).expect("JSON serializes"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, run): (&str, &Common, fn(&RunConfig, &std::path::Path, &str) -> Outcome) = match &cli.command {
        Command::Match(c) => ("match", c, commands::cmd_match),
        Command::Grid(c) => ("grid", c, commands::cmd_grid),
        Command::Fit(c) => ("fit", c, commands::cmd_fit),
        Command::Cv(c) => ("cv", c, commands::cmd_cv),
        Command::Ipw(c) => ("ipw", c, commands::cmd_ipw),
        Command::Schedule(c) => ("schedule", c, commands::cmd_schedule),
        Command::Simulate(c) => ("simulate", c, commands::cmd_simulate),
    };

    let mut cfg = match &common.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(errors) => {
                report(name, "config", &errors);
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        thresholds: common.thresholds.clone(),
        scope: common.scope.clone(),
    });
    let digest = cfg.digest();
    if let Some(base) = common.config.as_deref().and_then(std::path::Path::parent) {
        cfg.resolve_paths(base);
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            report(name, "config", &[format!("threads: {e}")]);
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cfg, &common.out, &digest)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(errors)) => {
            report(name, "config", &errors);
            ExitCode::from(2)
        }
        Err(Failure::Runtime(errors)) => {
            report(name, "runtime", &errors);
            ExitCode::from(1)
        }
    }
}
