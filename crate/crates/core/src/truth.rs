//! Synthetic truth runs for twin experiments.

use std::path::Path;

use crate::config::Config;
use crate::ensemble::TrajectoryTable;
use crate::error::Result;
use crate::grid::OceanState;
use crate::model_error::perturb_state;
use crate::observation::{
    advect_drifters, lattice, observe_drifter, observe_mooring, save_observations, Drifter,
    ObservationRecord,
};
use crate::rng::{stream, Purpose};
use crate::swe::{init_double_jet, Stepper};

#[derive(Clone, Debug)]
pub struct TruthRun {
    pub snapshots: Vec<OceanState>,
    pub observations: Vec<ObservationRecord>,
    pub final_state: OceanState,
    pub drifters: Vec<Drifter>,
    /// True drifter positions every trajectory interval after insertion.
    pub tracks: TrajectoryTable,
}

impl TruthRun {
    /// True drifters at time `t`.
    pub fn drifters_at(&self, t: f64) -> Result<Vec<Drifter>> {
        self.tracks.drifters_at(t, 0)
    }

    /// The stretch of the true tracks from `start` to `end`.
    pub fn track_window(&self, start: f64, end: f64) -> TrajectoryTable {
        self.tracks.window(start, end)
    }
}

/// Truth realization 0 for `seed`.
pub fn generate_truth(cfg: &Config, seed: u64) -> Result<TruthRun> {
    simulate_truth(cfg, seed, 0)
}

/// One stochastic run from the balanced double jet. Platforms appear at
/// the insertion time and report every observation interval after it.
pub fn simulate_truth(cfg: &Config, seed: u64, realization: u64) -> Result<TruthRun> {
    cfg.validate()?;
    let grid = cfg.model_grid()?;
    let phys = cfg.physics;
    let err = cfg.error_params()?;
    let r = cfg.obs_error();
    let obs = &cfg.observations;
    let dt = cfg.scheme.model_dt;

    let mut model_rng = stream(seed, realization, Purpose::Truth);
    let mut noise_rng = stream(seed, realization, Purpose::ObservationNoise);
    let mut stepper = Stepper::new(grid, phys, cfg.scheme)?;

    let mut state = init_double_jet(&grid, &phys)?;
    let n_steps = cfg.steps_in(cfg.truth.duration)?;
    let insert_step = cfg.steps_in(obs.insertion_time)?;
    let cadence_steps = cfg.steps_in(obs.cadence)?;
    let snap_steps = if cfg.truth.snapshot_interval > 0.0 {
        Some(cfg.steps_in(cfg.truth.snapshot_interval)?.max(1))
    } else {
        None
    };

    let moorings = lattice(obs.moorings[0], obs.moorings[1], &grid);
    let mut drifters: Vec<Drifter> = Vec::new();
    let mut last_fix: Vec<Drifter> = Vec::new();
    let mut snapshots = vec![state.clone()];
    let mut records = Vec::new();
    let track_steps = cfg.steps_in(cfg.experiment.trajectory_interval)?.max(1);
    let mut tracks = TrajectoryTable {
        times: Vec::new(),
        n_particles: 1,
        n_drifters: 0,
        positions: Vec::new(),
    };

    for n in 0..n_steps {
        if n == insert_step {
            drifters = lattice(obs.drifters[0], obs.drifters[1], &grid)
                .into_iter()
                .map(|(id, x, y)| Drifter::new(id, x, y))
                .collect();
            last_fix = drifters.clone();
            tracks.n_drifters = drifters.len();
            tracks.times.push(state.t);
            tracks.positions.extend_from_slice(&drifters);
        }
        if !drifters.is_empty() {
            advect_drifters(&state, &mut drifters, dt, &phys, &grid)?;
        }
        stepper.step(&mut state)?;
        perturb_state(&mut state, &mut model_rng, &err, &phys, &grid)?;
        let done = n + 1;
        // Re-derive time from the step count so it stays exact.
        state.t = done as f64 * dt;

        if done > insert_step && (done - insert_step) % cadence_steps == 0 {
            for (prev, cur) in last_fix.iter().zip(&drifters) {
                records.push(observe_drifter(prev, cur, obs.cadence, state.t, &phys, &grid, &r, &mut noise_rng)?);
            }
            last_fix = drifters.clone();
            for &(id, x, y) in &moorings {
                records.push(observe_mooring(&state, id, x, y, state.t, &phys, &grid, &r, &mut noise_rng)?);
            }
        }
        if done > insert_step && (done - insert_step) % track_steps == 0 {
            tracks.times.push(state.t);
            tracks.positions.extend_from_slice(&drifters);
        }
        if snap_steps.is_some_and(|s| done % s == 0) {
            snapshots.push(state.clone());
        }
    }

    Ok(TruthRun {
        snapshots,
        observations: records,
        final_state: state,
        drifters,
        tracks,
    })
}

/// `observations.csv` plus `truth/snapshot_<seconds>.dcst` under `dir`.
pub fn write_truth_run(dir: &Path, run: &TruthRun) -> Result<()> {
    let snap_dir = dir.join("truth");
    std::fs::create_dir_all(&snap_dir)?;
    for s in &run.snapshots {
        s.save(&snap_dir.join(format!("snapshot_{:010}.dcst", s.t.round() as u64)))?;
    }
    run.tracks.save(&dir.join(TRUTH_DRIFTERS))?;
    save_observations(&dir.join("observations.csv"), &run.observations)
}

/// File name of the true drifter tracks inside a truth directory.
pub const TRUTH_DRIFTERS: &str = "truth_drifters.csv";

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Config {
        let mut c = Config::desk();
        c.grid.nx = 40;
        c.grid.ny = 30;
        c.grid.dx = 11_100.0;
        c.grid.dy = 11_100.0;
        c.observations.insertion_time = 600.0;
        c.truth.duration = 1800.0;
        c.truth.snapshot_interval = 600.0;
        c
    }

    #[test]
    fn zero_duration_run() {
        let mut c = tiny();
        c.truth.duration = 0.0;
        let run = generate_truth(&c, 1).unwrap();
        assert!(run.observations.is_empty());
        assert_eq!(run.snapshots.len(), 1);
    }

    #[test]
    fn record_count_and_times() {
        let c = tiny();
        let run = generate_truth(&c, 1).unwrap();
        let platforms = 16 + 24;
        let cycles = ((c.truth.duration - c.observations.insertion_time) / c.observations.cadence).floor() as usize;
        assert_eq!(run.observations.len(), platforms * cycles);
        assert_eq!(run.observations[0].time, 900.0);
        assert_eq!(run.observations.last().unwrap().time, 1800.0);
        assert_eq!(run.snapshots.len(), 4);
        assert_eq!(run.tracks.times, vec![600.0, 1500.0]);
        assert_eq!(run.drifters_at(1500.0).unwrap().len(), 16);
        assert!(run.drifters_at(1200.0).is_err());
        assert_eq!(run.track_window(1000.0, 2000.0).times, vec![1500.0]);
    }

    #[test]
    fn same_seed_same_file() {
        let c = tiny();
        let a = generate_truth(&c, 5).unwrap();
        let b = generate_truth(&c, 5).unwrap();
        let mut fa = Vec::new();
        let mut fb = Vec::new();
        crate::observation::write_observations(&mut fa, &a.observations).unwrap();
        crate::observation::write_observations(&mut fb, &b.observations).unwrap();
        assert_eq!(fa, fb);
        let c2 = generate_truth(&c, 6).unwrap();
        assert_ne!(a.observations, c2.observations);
    }
}
