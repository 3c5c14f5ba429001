//! `halo`: closed-loop landing simulations, Monte Carlo campaigns, standalone
//! hazard mapping and standalone trajectory solves.
//!
//! Exit status is 0 on success, 1 for usage, configuration or input errors,
//! and 2 when the run itself ends badly (abort, failed landing, infeasible
//! trajectory).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "halo", version, about = "Hazard-aware landing simulator")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set adaptive.h_cutoff=65`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fly one closed-loop trial and write its log, trajectory and maps.
    Simulate,
    /// Run a seeded Monte Carlo campaign and write a JSON summary.
    Montecarlo {
        #[arg(long)]
        trials: Option<usize>,
        /// ddto, adaptive or both (paired seeds).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Hazard maps and landing sites from an `x y z` point cloud.
    Halss {
        input: PathBuf,
        /// Number of landing sites to extract.
        #[arg(long, default_value_t = 7)]
        sites: usize,
    },
    /// Minimum-time or fixed-time fuel-optimal trajectory between two states.
    Trajopt {
        /// Initial position `x,y,z` (m).
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        from: [f64; 3],
        /// Target position `x,y,z` (m).
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        to: [f64; 3],
        /// Initial velocity `vx,vy,vz` (m/s).
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,0")]
        v0: [f64; 3],
        /// Fix the number of nodes instead of searching for the minimum.
        #[arg(long, conflicts_with = "tf")]
        nodes: Option<usize>,
        /// Fix the time of flight (s); must be a multiple of the step.
        #[arg(long)]
        tf: Option<f64>,
    },
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(v)
}

fn main() -> ExitCode {
    let cmd = Cli::command()
        .after_long_help(config::key_listing())
        .after_help("Run with --help to list every configuration key and its default.");
    let cli = match cmd
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
