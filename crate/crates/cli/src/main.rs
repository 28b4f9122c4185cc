use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use radarnav::config::{Config, PlannerWeights};
use radarnav::sim::PlannerMode;
use radarnav_cli::experiment::{
    run_agent_sweep, run_baseline, run_calibration, run_single, run_ternary, simplex_grid, BatchResult, ExperimentKind,
    ExperimentSpec,
};
use radarnav_cli::render::render;

#[derive(Parser)]
#[command(name = "radarnav", version, about = "Scout and high-priority planning experiments in radar-contested regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Number of scenarios.
    #[arg(short = 'n', long, default_value_t = 20)]
    scenarios: usize,
    /// Seed of the first scenario; the rest follow consecutively.
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// TOML configuration file; defaults are used when absent.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Scout count override.
    #[arg(long)]
    agents: Option<usize>,
    /// Chance-constraint level override.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Weights `e,u,s` override.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<PlannerWeights>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ours,
    Lawnmower,
}

#[derive(Subcommand)]
enum Command {
    /// Weight sweep over the simplex.
    Ternary {
        #[command(flatten)]
        common: Common,
        /// Steps per simplex side; the best triple is always added.
        #[arg(long, default_value_t = 6)]
        divisions: usize,
        /// Explicit triples `e,u,s`, replacing the grid.
        #[arg(long = "triple", value_parser = parse_weights)]
        triples: Vec<PlannerWeights>,
    },
    /// Objective-driven scouts against the lawnmower sweep on paired seeds.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Time to path against scout count.
    Agents {
        #[command(flatten)]
        common: Common,
        /// Scout counts, ascending.
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20])]
        counts: Vec<usize>,
    },
    /// Ground-truth safety of chance-constrained dispatches.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Plain missions with one strategy.
    Single {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Mode::Ours)]
        mode: Mode,
    },
    /// Figures from the results in a directory.
    Render {
        /// Directory holding `manifest.json`.
        #[arg(default_value = "out")]
        dir: PathBuf,
        /// Heatmap side in pixels.
        #[arg(long, default_value_t = 400)]
        size: usize,
    },
}

fn parse_weights(s: &str) -> Result<PlannerWeights, String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v[..] {
        [e, u, g] => PlannerWeights::new(e, u, g).map_err(|e| e.to_string()),
        _ => Err("expected three comma-separated weights".into()),
    }
}

fn spec(kind: ExperimentKind, c: &Common) -> Result<ExperimentSpec> {
    let mut config = match &c.config {
        Some(p) => Config::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => Config::default(),
    };
    if let Some(n) = c.agents {
        config.scenario.n_l = n;
    }
    if let Some(e) = c.epsilon {
        config.mission.epsilon = e;
    }
    if let Some(w) = c.weights {
        config.weights = w;
    }
    config.validate()?;
    ExperimentSpec::new(kind, config, c.first_seed, c.scenarios, &c.out)
}

fn report(batch: &BatchResult) -> usize {
    let found = batch.rows.iter().filter(|r| r.found).count();
    println!("{} missions, {} found a path, {} errored", batch.manifest.entries.len(), found, batch.errors());
    batch.errors()
}

fn run(cli: Cli) -> Result<usize> {
    let errors = match cli.command {
        Command::Ternary { common, divisions, triples } => {
            let mut s = spec(ExperimentKind::Ternary, &common)?;
            s.weights = if triples.is_empty() { simplex_grid(divisions) } else { triples };
            let (batch, table) = run_ternary(&s)?;
            for r in &table {
                println!("{:.3} {:.3} {:.3}  {}/{}  {:?}", r.alpha_e, r.alpha_u, r.alpha_s, r.successes, r.runs, r.mean_t_found);
            }
            report(&batch)
        }
        Command::Baseline { common } => {
            let (batch, table) = run_baseline(&spec(ExperimentKind::Baseline, &common)?)?;
            let ours = table.iter().filter(|r| r.ours_found).count();
            let lawn = table.iter().filter(|r| r.lawnmower_found).count();
            println!("ours {ours}/{n}, lawnmower {lawn}/{n}", n = table.len());
            report(&batch)
        }
        Command::Agents { common, counts } => {
            let mut s = spec(ExperimentKind::AgentSweep, &common)?;
            anyhow::ensure!(counts.windows(2).all(|w| w[0] < w[1]), "scout counts must be ascending");
            s.agent_counts = counts;
            let (batch, table) = run_agent_sweep(&s)?;
            for r in &table {
                println!("n_l={}  {}/{}  mean {:?}  std {:?}", r.n_l, r.successes, r.runs, r.mean_t_found, r.std_t_found);
            }
            report(&batch)
        }
        Command::Calibrate { common } => {
            let (batch, r) = run_calibration(&spec(ExperimentKind::Calibration, &common)?)?;
            println!(
                "dispatched {}/{}, within threshold {:?}, mean max PD {:?}",
                r.dispatched, r.runs, r.fraction_within, r.mean_max_pd
            );
            report(&batch)
        }
        Command::Single { common, mode } => {
            let mode = match mode {
                Mode::Ours => PlannerMode::Ours,
                Mode::Lawnmower => PlannerMode::Lawnmower,
            };
            report(&run_single(&spec(ExperimentKind::Single, &common)?, mode)?)
        }
        Command::Render { dir, size } => {
            for p in render(&dir, size)? {
                println!("{}", p.display());
            }
            0
        }
    };
    Ok(errors)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
