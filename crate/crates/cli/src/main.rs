//! `driftcast` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftcast::bench::bench;
use driftcast::config::Config;
use driftcast::diagnostics::{forecast_error, write_collapse_csv, write_file};
use driftcast::ensemble::{load_checkpoint, save_checkpoint, Engine, ExperimentPlan, TrajectoryTable};
use driftcast::error::{Error, Result};
use driftcast::experiments::{collapse_next_cycle, rank_histogram_experiment, RankExperiment};
use driftcast::observation::load_observations;
use driftcast::truth::{generate_truth, write_truth_run};

#[derive(Parser, Debug)]
#[command(name = "driftcast", version, about = "Equal-weights particle filter twin experiments on a rotating shallow-water model")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Shared {
    /// TOML configuration; built-in desk-scale setup if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; overrides the configuration, 0 means all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the truth model and write snapshots, observations and drifter tracks.
    GenerateTruth,
    /// Spin up the ensemble and write a checkpoint.
    Spinup,
    /// Assimilate observations into a checkpointed ensemble.
    Assimilate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        observations: PathBuf,
        /// Stop after the cycle at this time instead of the end of the window.
        #[arg(long)]
        until: Option<f64>,
    },
    /// Forecast drifters from a checkpointed ensemble.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        /// True drifter tracks; the positions at the checkpoint time seed the forecast.
        #[arg(long)]
        truth_drifters: PathBuf,
    },
    /// Rank histogram over independent twin experiments.
    RankHistogram {
        #[arg(long, default_value_t = 200)]
        experiments: usize,
        #[arg(long, default_value_t = 20)]
        ensemble_size: usize,
        #[arg(long, default_value_t = 6)]
        cycles: usize,
    },
    /// Drifter forecast error against the true tracks.
    ForecastError {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        truth_drifters: PathBuf,
    },
    /// Standard particle-filter weight collapse on a post-assimilation ensemble.
    Collapse {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8,16")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        r_scales: Vec<f64>,
    },
    /// Per-stage wall-time split and worker scaling.
    Bench {
        #[arg(long, default_value_t = 8)]
        particles: usize,
        #[arg(long, default_value_t = 1)]
        cycles: usize,
        /// Compare one worker against this many; 1 skips the comparison.
        #[arg(long, default_value_t = 8)]
        scaling_workers: usize,
    },
}

fn load_config(shared: &Shared) -> Result<Config> {
    let mut cfg = match &shared.config {
        Some(p) => Config::load(p)?,
        None => Config::desk(),
    };
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    if let Some(w) = shared.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.shared)?;
    let out = &cli.shared.out;
    std::fs::create_dir_all(out)?;
    match cli.command {
        Command::GenerateTruth => {
            let run = generate_truth(&cfg, cfg.seed)?;
            write_truth_run(out, &run)?;
            // The worker count is left out so outputs do not depend on it.
            let echo = Config { workers: 0, ..cfg.clone() };
            std::fs::write(out.join("config.toml"), echo.to_toml())?;
            println!(
                "{} snapshots, {} observation records",
                run.snapshots.len(),
                run.observations.len()
            );
        }
        Command::Spinup => {
            let engine = Engine::from_config(&cfg)?;
            let plan = ExperimentPlan::from_config(&cfg)?;
            let (ens, _) = engine.run_spinup(&plan)?;
            save_checkpoint(out, &ens, Some(&plan))?;
            println!("{} particles at t = {}", ens.len(), ens.t());
        }
        Command::Assimilate {
            checkpoint,
            observations,
            until,
        } => {
            let engine = Engine::from_config(&cfg)?;
            let plan = ExperimentPlan::from_config(&cfg)?;
            let obs = load_observations(&observations)?;
            let mut ens = load_checkpoint(&checkpoint)?;
            let mut lines = vec!["cycle,particle,c,gamma,zeta,alpha,beta,w_target".to_string()];
            engine.run_assimilation(&mut ens, &obs, &plan, until.unwrap_or(plan.da_end), |cycle, rep| {
                lines.extend(rep.lines(cycle));
            })?;
            save_checkpoint(out, &ens, Some(&plan))?;
            std::fs::write(out.join("filter_diagnostics.csv"), lines.join("\n") + "\n")?;
            println!("{} particles at t = {}", ens.len(), ens.t());
        }
        Command::Forecast {
            checkpoint,
            truth_drifters,
        } => {
            let engine = Engine::from_config(&cfg)?;
            let plan = ExperimentPlan::from_config(&cfg)?;
            let mut ens = load_checkpoint(&checkpoint)?;
            let start = TrajectoryTable::load(&truth_drifters)?.drifters_at(ens.t(), 0)?;
            let (tab, _) = engine.run_forecast(&mut ens, &start, &plan)?;
            tab.save(&out.join("trajectories.csv"))?;
            println!("{} output times", tab.times.len());
        }
        Command::RankHistogram {
            experiments,
            ensemble_size,
            cycles,
        } => {
            let exp = RankExperiment {
                experiments,
                ensemble_size,
                cycles,
                ..Default::default()
            };
            let h = rank_histogram_experiment(&cfg, &exp)?;
            write_file(&out.join("rank_hist.csv"), |w| h.write_csv(w))?;
            let (stat, p) = h.chi_square()?;
            println!("chi-square {stat:.3}, p = {p:.4}");
        }
        Command::ForecastError {
            trajectories,
            truth_drifters,
        } => {
            let grid = cfg.model_grid()?;
            let fc = TrajectoryTable::load(&trajectories)?;
            let (first, last) = match (fc.times.first(), fc.times.last()) {
                (Some(a), Some(b)) => (*a, *b),
                _ => return Err(Error::Format("empty trajectory table".into())),
            };
            let truth = TrajectoryTable::load(&truth_drifters)?.window(first, last);
            let series = forecast_error(&fc, &truth, &grid)?;
            write_file(&out.join("error_series.csv"), |w| series.write_csv(w))?;
            println!("{} output times", series.times.len());
        }
        Command::Collapse {
            checkpoint,
            observations,
            sizes,
            trials,
            r_scales,
        } => {
            let engine = Engine::from_config(&cfg)?;
            let plan = ExperimentPlan::from_config(&cfg)?;
            let obs = load_observations(&observations)?;
            let mut ens = load_checkpoint(&checkpoint)?;
            let rows = collapse_next_cycle(&engine, &mut ens, &obs, &plan, &sizes, trials, &r_scales)?;
            write_file(&out.join("collapse.csv"), |w| write_collapse_csv(&rows, w))?;
            println!("{} rows", rows.len());
        }
        Command::Bench {
            particles,
            cycles,
            scaling_workers,
        } => {
            let report = bench(&cfg, particles, cycles, scaling_workers)?;
            print!("{}", report.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
