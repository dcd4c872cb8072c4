use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use enlarged_risk_cli::commands::{run_simulate, run_solve, run_tree_check, run_verify, RunStatus};
use enlarged_risk_cli::config::RunConfig;

#[derive(Parser)]
#[command(version, about = "Dynamic entropic risk with a default time")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form risk trajectories along simulated paths.
    Simulate(Common),
    /// Regression BSDE solution and comparison with the closed form.
    Solve(Common),
    /// Axiom checks on the configured engine and the dual checks.
    Verify(Common),
    /// Dual checks on the default tree.
    TreeCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of paths written to the trajectory files.
    #[arg(long)]
    paths_for_figure: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<RunStatus> {
    match cli.command {
        Cmd::Simulate(c) => {
            let (cfg, out) = c.resolve()?;
            run_simulate(&cfg, &out, c.paths_for_figure)
        }
        Cmd::Solve(c) => {
            let (cfg, out) = c.resolve()?;
            run_solve(&cfg, &out, c.paths_for_figure)
        }
        Cmd::Verify(c) => {
            let (cfg, out) = c.resolve()?;
            run_verify(&cfg, &out)
        }
        Cmd::TreeCheck(c) => {
            let (cfg, out) = c.resolve()?;
            run_tree_check(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(RunStatus { passed: true }) => ExitCode::SUCCESS,
        Ok(RunStatus { passed: false }) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
