//! Wall-time accounting of one short assimilation run and a worker
//! scaling measurement.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::config::Config;
use crate::ensemble::{Engine, EnsembleState, ExperimentPlan, PhaseTimes};
use crate::error::{Error, Result};
use crate::swe::init_double_jet;
use crate::truth::simulate_truth;

#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub workers: usize,
    pub serial: Duration,
    pub parallel: Duration,
}

impl Scaling {
    pub fn speedup(&self) -> f64 {
        self.serial.as_secs_f64() / self.parallel.as_secs_f64()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub particles: usize,
    pub cycles: usize,
    pub workers: usize,
    pub times: PhaseTimes,
    pub scaling: Option<Scaling>,
}

impl BenchReport {
    /// Named stage times in reporting order.
    pub fn stages(&self) -> Vec<(&'static str, Duration)> {
        let f = &self.times.filter;
        vec![
            ("model_step", self.times.model),
            ("model_error", self.times.error),
            ("filter_pull", f.pull),
            ("filter_sampling", f.sampling),
            ("filter_barrier", f.barrier),
            ("filter_alpha", f.alpha),
            ("filter_p_half", f.p_half),
        ]
    }

    /// Percentage of total time per stage.
    pub fn shares(&self) -> Vec<(&'static str, f64)> {
        let stages = self.stages();
        let total: f64 = stages.iter().map(|s| s.1.as_secs_f64()).sum();
        stages
            .into_iter()
            .map(|(n, d)| (n, if total > 0.0 { 100.0 * d.as_secs_f64() / total } else { 0.0 }))
            .collect()
    }

    /// Model-error generation as a percentage of per-step compute.
    pub fn error_share_of_step(&self) -> f64 {
        let m = self.times.model.as_secs_f64();
        let e = self.times.error.as_secs_f64();
        100.0 * e / (m + e)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "particles = {}, cycles = {}, model steps = {}, workers = {}",
            self.particles, self.cycles, self.times.model_steps, self.workers
        );
        let _ = writeln!(s, "stage,seconds,percent");
        for ((name, d), (_, p)) in self.stages().into_iter().zip(self.shares()) {
            let _ = writeln!(s, "{name},{:.6},{p:.2}", d.as_secs_f64());
        }
        let _ = writeln!(s, "model_error_share_of_step,{:.2}", self.error_share_of_step());
        if let Some(sc) = &self.scaling {
            let _ = writeln!(
                s,
                "scaling,1 worker {:.3} s,{} workers {:.3} s,speedup {:.2}",
                sc.serial.as_secs_f64(),
                sc.workers,
                sc.parallel.as_secs_f64(),
                sc.speedup()
            );
        }
        s
    }
}

/// `cycles` assimilation cycles of `particles` members on the configured
/// grid, then, if `scaling_workers > 1`, the same stepping load timed on
/// one worker and on `scaling_workers` workers.
pub fn bench(cfg: &Config, particles: usize, cycles: usize, scaling_workers: usize) -> Result<BenchReport> {
    if cycles == 0 {
        return Err(Error::InvalidParameter("bench needs at least one cycle".into()));
    }
    let mut c = cfg.clone();
    let window = cycles as f64 * c.observations.cadence;
    c.observations.insertion_time = 0.0;
    c.truth.duration = window;
    c.truth.snapshot_interval = 0.0;
    c.experiment.ensemble_size = particles;
    c.experiment.spinup_end = 0.0;
    c.experiment.da_end = window;
    c.experiment.forecast_end = window + c.observations.cadence;
    c.experiment.trajectory_interval = c.observations.cadence;
    let truth = simulate_truth(&c, c.seed, 0)?;
    let engine = Engine::from_config(&c)?;
    let plan = ExperimentPlan::from_config(&c)?;
    let init = init_double_jet(&engine.grid, &engine.phys)?;
    let mut ens = EnsembleState::replicate(&init, particles, c.seed)?;
    let times = engine.run_assimilation(&mut ens, &truth.observations, &plan, plan.da_end, |_, _| {})?;

    let scaling = if scaling_workers > 1 {
        let steps_t = c.observations.cadence;
        let mut run = |workers: usize| -> Result<Duration> {
            c.workers = workers;
            let e = Engine::from_config(&c)?;
            let mut ens = EnsembleState::replicate(&init, particles, c.seed)?;
            let t0 = Instant::now();
            e.advance(&mut ens, steps_t, false)?;
            Ok(t0.elapsed())
        };
        let serial = run(1)?;
        let parallel = run(scaling_workers)?;
        Some(Scaling {
            workers: scaling_workers,
            serial,
            parallel,
        })
    } else {
        None
    };
    Ok(BenchReport {
        particles,
        cycles,
        workers: engine.workers(),
        times,
        scaling,
    })
}
