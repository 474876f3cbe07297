use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coexist_cli::commands::{cmd_analytic, cmd_phy_demo, cmd_simulate, cmd_sweep, DemoKind, RunOptions};
use coexist_cli::config::parse_axis;
use coexist_cli::{CliError, ExperimentConfig};

/// Radar/communication coexistence experiments.
#[derive(Debug, Parser)]
#[command(name = "coexist", version)]
struct Cli {
    /// TOML experiment config; defaults apply to anything it omits.
    #[arg(long, global = true, env = "COEXIST_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed of the Monte Carlo trials.
    #[arg(long, global = true, env = "COEXIST_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "COEXIST_TRIALS")]
    trials: Option<u32>,
    #[arg(long, global = true, env = "COEXIST_FRAMES")]
    frames: Option<u32>,
    /// Output directory (default `results`; `analytic` only writes when given).
    #[arg(long, global = true, env = "COEXIST_OUT")]
    out: Option<PathBuf>,
    /// Run even when more vehicles than slot indices are configured.
    #[arg(long, global = true, env = "COEXIST_ALLOW_SATURATION")]
    allow_saturation: bool,
    /// Worker threads for Monte Carlo trials (default: all cores).
    #[arg(long, global = true, env = "COEXIST_PARALLEL")]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form interference quantities and capacity diagnostics.
    Analytic,
    /// Monte Carlo run of the network scenario.
    Simulate,
    /// Baseband demonstrations.
    PhyDemo {
        #[arg(value_enum)]
        kind: DemoKind,
    },
    /// Monte Carlo runs over the config's sweep axes and any `--param` axes.
    Sweep {
        /// Extra axis as `path=v1,v2,...`, e.g. `network.vehicles=10,30,50,70`.
        #[arg(long = "param")]
        params: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.network.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.network.n_trials = trials;
    }
    if let Some(frames) = cli.frames {
        cfg.network.n_frames = frames;
    }
    if cli.parallel == Some(0) {
        return Err(CliError::Config("--parallel must be at least 1".into()));
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let opts = RunOptions { out: out.clone(), allow_saturation: cli.allow_saturation, parallel: cli.parallel };

    match cli.command {
        Command::Analytic => {
            cfg.validate()?;
            let csv = cmd_analytic(&cfg)?;
            print!("{}", csv.as_str());
            if let Some(dir) = &cli.out {
                csv.write(&dir.join("analytic.csv"))?;
            }
        }
        Command::Simulate => {
            cfg.validate()?;
            let sim = cmd_simulate(&cfg, &opts)?;
            print!("{}", sim.summary.as_str());
            eprintln!("wrote {}", opts.out.display());
        }
        Command::PhyDemo { kind } => {
            cfg.validate()?;
            for (name, csv) in cmd_phy_demo(kind, &cfg, &out)? {
                if name != "range_doppler.csv" {
                    print!("{}", csv.as_str());
                }
                eprintln!("wrote {}", out.join(name).display());
            }
        }
        Command::Sweep { params } => {
            for p in &params {
                cfg.sweep.push(parse_axis(p)?);
            }
            cfg.validate()?;
            let overview = cmd_sweep(&cfg, &opts)?;
            print!("{}", overview.as_str());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
