//! Spin-up, assimilation and forecast phases over a particle-parallel
//! ensemble.
//!
//! Particles run independently between barriers on a fixed-size worker
//! pool. All randomness comes from per-particle streams and every
//! reduction is taken in particle order, so results do not depend on the
//! number of workers.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::config::{Config, FilterMode};
use crate::error::{Error, Result};
use crate::filter::iewpf::StageTimes;
use crate::filter::{iewpf_assimilate, CycleReport, FilterContext};
use crate::grid::{ModelGrid, OceanState, PhysParams};
use crate::model_error::{perturb_state, ErrorParams};
use crate::observation::{advect_drifters, records_at, same_time, Drifter, ObsErrorParams, ObsSelector, ObservationRecord};
use crate::rng::{format_positions, parse_positions, ParticleRng};
use crate::swe::{init_double_jet, SchemeParams, Stepper};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub spinup_end: f64,
    pub da_end: f64,
    pub forecast_end: f64,
    pub cadence: f64,
    pub trajectory_interval: f64,
    pub selector: ObsSelector,
    pub ensemble_size: usize,
    pub seed: u64,
    pub model_dt: f64,
}

impl ExperimentPlan {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let e = &cfg.experiment;
        let plan = ExperimentPlan {
            spinup_end: e.spinup_end,
            da_end: e.da_end,
            forecast_end: e.forecast_end,
            cadence: cfg.observations.cadence,
            trajectory_interval: e.trajectory_interval,
            selector: cfg.selector()?,
            ensemble_size: e.ensemble_size,
            seed: cfg.seed,
            model_dt: cfg.scheme.model_dt,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.spinup_end && self.spinup_end < self.da_end && self.da_end < self.forecast_end) {
            return Err(Error::Config(
                "phase boundaries must satisfy 0 <= spinup_end < da_end < forecast_end".into(),
            ));
        }
        if self.ensemble_size < 2 {
            return Err(Error::Config("ensemble needs at least two members".into()));
        }
        for (name, v) in [
            ("cadence", self.cadence),
            ("spinup_end", self.spinup_end),
            ("da_end", self.da_end),
            ("forecast_end", self.forecast_end),
            ("trajectory_interval", self.trajectory_interval),
        ] {
            steps(v, self.model_dt).map_err(|_| Error::Config(format!("{name} is not a multiple of the model step")))?;
        }
        if self.cadence <= 0.0 || self.trajectory_interval <= 0.0 {
            return Err(Error::Config("cadence and trajectory interval must be positive".into()));
        }
        steps(self.da_end - self.spinup_end, self.cadence)
            .map_err(|_| Error::Config("assimilation window is not a whole number of cycles".into()))?;
        Ok(())
    }

    /// `key = value` lines echoed into checkpoints.
    pub fn echo(&self) -> String {
        format!(
            "spinup_end = {}\nda_end = {}\nforecast_end = {}\ncadence = {}\ntrajectory_interval = {}\nselector = {}\nensemble_size = {}\nseed = {}\nmodel_dt = {}\n",
            self.spinup_end,
            self.da_end,
            self.forecast_end,
            self.cadence,
            self.trajectory_interval,
            self.selector,
            self.ensemble_size,
            self.seed,
            self.model_dt
        )
    }
}

/// Whole number of `unit` intervals in `span`.
fn steps(span: f64, unit: f64) -> Result<usize> {
    let n = span / unit;
    if n < -1e-9 || (n - n.round()).abs() > 1e-9 {
        return Err(Error::TimeGridMismatch(format!("{span} is not a multiple of {unit}")));
    }
    Ok(n.round() as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    pub particles: Vec<OceanState>,
    pub rngs: Vec<ParticleRng>,
    pub seed: u64,
}

impl EnsembleState {
    /// `n` copies of `state` with fresh streams.
    pub fn replicate(state: &OceanState, n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("ensemble needs at least two members, got {n}")));
        }
        Ok(EnsembleState {
            particles: vec![state.clone(); n],
            rngs: (0..n as u64).map(|i| ParticleRng::new(seed, i)).collect(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.particles[0].t
    }

    fn check_time(&self) -> Result<()> {
        let t = self.t();
        if self.particles.iter().any(|p| p.t != t) {
            return Err(Error::TimeGridMismatch("particles are not at a common time".into()));
        }
        Ok(())
    }
}

/// Wall time summed over particles.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub model: Duration,
    pub error: Duration,
    pub filter: StageTimes,
    pub model_steps: usize,
}

impl PhaseTimes {
    pub fn add(&mut self, o: &PhaseTimes) {
        self.model += o.model;
        self.error += o.error;
        self.filter.add(&o.filter);
        self.model_steps += o.model_steps;
    }
}

/// Positions indexed by `(time, particle, drifter)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub n_particles: usize,
    pub n_drifters: usize,
    pub positions: Vec<Drifter>,
}

impl TrajectoryTable {
    pub fn at(&self, time: usize, particle: usize, drifter: usize) -> &Drifter {
        &self.positions[(time * self.n_particles + particle) * self.n_drifters + drifter]
    }

    /// Drifters of one member at output time `t`.
    pub fn drifters_at(&self, t: f64, particle: usize) -> Result<Vec<Drifter>> {
        let ti = self
            .times
            .iter()
            .position(|s| same_time(*s, t))
            .ok_or_else(|| Error::TimeGridMismatch(format!("no drifter positions at {t}")))?;
        if particle >= self.n_particles {
            return Err(Error::InvalidParameter(format!("no member {particle}")));
        }
        Ok((0..self.n_drifters).map(|d| *self.at(ti, particle, d)).collect())
    }

    /// Output times from `start` to `end`, inclusive.
    pub fn window(&self, start: f64, end: f64) -> TrajectoryTable {
        let per = self.n_particles * self.n_drifters;
        let mut out = TrajectoryTable {
            times: Vec::new(),
            n_particles: self.n_particles,
            n_drifters: self.n_drifters,
            positions: Vec::new(),
        };
        for (ti, &t) in self.times.iter().enumerate() {
            if t >= start - 1e-6 && t <= end + 1e-6 {
                out.times.push(t);
                out.positions.extend_from_slice(&self.positions[ti * per..(ti + 1) * per]);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,particle,drifter,x,y,wind_x,wind_y")?;
        for (ti, t) in self.times.iter().enumerate() {
            for p in 0..self.n_particles {
                for d in 0..self.n_drifters {
                    let q = self.at(ti, p, d);
                    writeln!(w, "{t},{p},{},{},{},{},{}", q.id, q.x, q.y, q.wind_x, q.wind_y)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("trajectory line {}: {line}", n + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let t: f64 = f[0].parse().map_err(|_| bad())?;
            let p: usize = f[1].parse().map_err(|_| bad())?;
            let d = Drifter {
                id: f[2].parse().map_err(|_| bad())?,
                x: f[3].parse().map_err(|_| bad())?,
                y: f[4].parse().map_err(|_| bad())?,
                wind_x: f[5].parse().map_err(|_| bad())?,
                wind_y: f[6].parse().map_err(|_| bad())?,
            };
            rows.push((t, p, d));
        }
        let mut times: Vec<f64> = Vec::new();
        for (t, _, _) in &rows {
            if times.last() != Some(t) {
                times.push(*t);
            }
        }
        let n_particles = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let per_time = if times.is_empty() { 0 } else { rows.len() / times.len() };
        let n_drifters = per_time.checked_div(n_particles).unwrap_or(0);
        if times.len() * n_particles * n_drifters != rows.len() {
            return Err(Error::Format("trajectory table is not rectangular".into()));
        }
        Ok(TrajectoryTable {
            times,
            n_particles,
            n_drifters,
            positions: rows.into_iter().map(|r| r.2).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(BufReader::new(std::fs::File::open(path)?))
    }
}

/// Per-experiment shared state: operators, filter precomputations and the
/// worker pool.
pub struct Engine {
    pub grid: ModelGrid,
    pub phys: PhysParams,
    pub scheme: SchemeParams,
    pub err: ErrorParams,
    pub filter: FilterContext,
    pool: ThreadPool,
}

impl Engine {
    pub fn new(
        grid: ModelGrid,
        phys: PhysParams,
        scheme: SchemeParams,
        err: ErrorParams,
        r: ObsErrorParams,
        mode: FilterMode,
        workers: usize,
    ) -> Result<Self> {
        scheme.validate()?;
        let filter = FilterContext::new(grid, phys, err, r, mode)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
        Ok(Engine {
            grid,
            phys,
            scheme,
            err,
            filter,
            pool,
        })
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        Self::new(
            cfg.model_grid()?,
            cfg.physics,
            cfg.scheme,
            cfg.error_params()?,
            cfg.obs_error(),
            cfg.experiment.filter,
            cfg.workers,
        )
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn dt(&self) -> f64 {
        self.scheme.model_dt
    }

    /// Balanced double jet for every particle, stepped stochastically to
    /// the end of the spin-up window.
    pub fn run_spinup(&self, plan: &ExperimentPlan) -> Result<(EnsembleState, PhaseTimes)> {
        plan.validate()?;
        let init = init_double_jet(&self.grid, &self.phys)?;
        let mut ens = EnsembleState::replicate(&init, plan.ensemble_size, plan.seed)?;
        let times = self.advance(&mut ens, plan.spinup_end, false)?;
        Ok((ens, times))
    }

    /// Step every particle to `until`, adding model error after each step.
    /// With `deterministic_last` the final step is left unperturbed.
    pub fn advance(&self, ens: &mut EnsembleState, until: f64, deterministic_last: bool) -> Result<PhaseTimes> {
        ens.check_time()?;
        let dt = self.dt();
        let k0 = steps(ens.t(), dt)?;
        let k1 = steps(until, dt)?;
        if k1 < k0 {
            return Err(Error::TimeGridMismatch(format!("cannot step back from {} to {until}", ens.t())));
        }
        let n = k1 - k0;
        let per: Vec<PhaseTimes> = self.pool.install(|| {
            ens.particles
                .par_iter_mut()
                .zip(ens.rngs.par_iter_mut())
                .enumerate()
                .map(|(i, (p, r))| {
                    self.advance_particle(p, r, k0, n, deterministic_last, None)
                        .map_err(|e| e.in_particle(i))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(sum_times(&per))
    }

    fn advance_particle(
        &self,
        state: &mut OceanState,
        rng: &mut ParticleRng,
        k0: usize,
        n: usize,
        deterministic_last: bool,
        mut drifters: Option<&mut Vec<Drifter>>,
    ) -> Result<PhaseTimes> {
        let mut stepper = Stepper::new(self.grid, self.phys, self.scheme)?;
        let mut times = PhaseTimes::default();
        for s in 0..n {
            let t0 = Instant::now();
            if let Some(d) = drifters.as_deref_mut() {
                advect_drifters(state, d, self.dt(), &self.phys, &self.grid)?;
            }
            stepper.step(state)?;
            let t1 = Instant::now();
            if !(deterministic_last && s + 1 == n) {
                perturb_state(state, &mut rng.model_error, &self.err, &self.phys, &self.grid)?;
            }
            state.t = (k0 + s + 1) as f64 * self.dt();
            times.model += t1 - t0;
            times.error += t1.elapsed();
            times.model_steps += 1;
        }
        Ok(times)
    }

    /// Assimilation cycles from the ensemble's current time up to `until`.
    /// Each cycle runs stochastic steps, a deterministic final step into the
    /// observation time and one filter update. An empty selector gives a
    /// plain stochastic run. `on_cycle` sees every report in cycle order.
    pub fn run_assimilation(
        &self,
        ens: &mut EnsembleState,
        obs: &[ObservationRecord],
        plan: &ExperimentPlan,
        until: f64,
        mut on_cycle: impl FnMut(usize, &CycleReport),
    ) -> Result<PhaseTimes> {
        plan.validate()?;
        ens.check_time()?;
        if until > plan.da_end + 1e-9 {
            return Err(Error::TimeGridMismatch(format!("{until} is past the assimilation window")));
        }
        let done = steps(ens.t() - plan.spinup_end, plan.cadence)?;
        let total = steps(until - plan.spinup_end, plan.cadence)?;
        let mut times = PhaseTimes::default();
        for cycle in done..total {
            let t_obs = plan.spinup_end + (cycle + 1) as f64 * plan.cadence;
            if plan.selector.is_empty() {
                times.add(&self.advance(ens, t_obs, false)?);
                continue;
            }
            times.add(&self.advance(ens, t_obs, true)?);
            let now = records_at(obs, ens.t(), &plan.selector, &self.grid);
            if now.is_empty() {
                return Err(Error::MissingObservations(ens.t()));
            }
            let report = self.assimilate_now(ens, &now)?;
            times.filter.add(&report.times);
            on_cycle(cycle, &report);
        }
        Ok(times)
    }

    /// One filter update with the given observations at the current time.
    pub fn assimilate_now(&self, ens: &mut EnsembleState, obs: &[&ObservationRecord]) -> Result<CycleReport> {
        self.pool
            .install(|| iewpf_assimilate(&mut ens.particles, &mut ens.rngs, obs, &self.filter))
    }

    /// Free stochastic run to the end of the plan with a copy of `drifters`
    /// in every particle, advected by that particle's currents.
    pub fn run_forecast(
        &self,
        ens: &mut EnsembleState,
        drifters: &[Drifter],
        plan: &ExperimentPlan,
    ) -> Result<(TrajectoryTable, PhaseTimes)> {
        plan.validate()?;
        ens.check_time()?;
        let dt = self.dt();
        let k0 = steps(ens.t(), dt)?;
        let total = steps(plan.forecast_end - ens.t(), plan.trajectory_interval)?;
        let per_out = steps(plan.trajectory_interval, dt)?;
        let t_start = ens.t();
        let mut copies: Vec<Vec<Drifter>> = vec![drifters.to_vec(); ens.len()];

        let per: Vec<(Vec<Vec<Drifter>>, PhaseTimes)> = self.pool.install(|| {
            ens.particles
                .par_iter_mut()
                .zip(ens.rngs.par_iter_mut())
                .zip(copies.par_iter_mut())
                .enumerate()
                .map(|(i, ((p, r), d))| {
                    let mut track = vec![d.clone()];
                    let mut times = PhaseTimes::default();
                    for o in 0..total {
                        let t = self
                            .advance_particle(p, r, k0 + o * per_out, per_out, false, Some(d))
                            .map_err(|e| e.in_particle(i))?;
                        times.add(&t);
                        track.push(d.clone());
                    }
                    Ok((track, times))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let n_p = ens.len();
        let n_d = drifters.len();
        let mut positions = Vec::with_capacity((total + 1) * n_p * n_d);
        for o in 0..=total {
            for (track, _) in &per {
                positions.extend_from_slice(&track[o]);
            }
        }
        let times = sum_times(&per.iter().map(|x| x.1).collect::<Vec<_>>());
        Ok((
            TrajectoryTable {
                times: (0..=total).map(|o| t_start + (o * per_out) as f64 * dt).collect(),
                n_particles: n_p,
                n_drifters: n_d,
                positions,
            },
            times,
        ))
    }
}

fn sum_times(per: &[PhaseTimes]) -> PhaseTimes {
    let mut out = PhaseTimes::default();
    for p in per {
        out.add(p);
    }
    out
}

/// `ensemble/particle_<i>.dcst`, `rng_state.txt` and `meta.txt` under `dir`.
pub fn save_checkpoint(dir: &Path, ens: &EnsembleState, plan: Option<&ExperimentPlan>) -> Result<()> {
    let pdir = dir.join("ensemble");
    std::fs::create_dir_all(&pdir)?;
    for (i, p) in ens.particles.iter().enumerate() {
        p.save(&pdir.join(format!("particle_{i}.dcst")))?;
    }
    std::fs::write(dir.join("rng_state.txt"), format_positions(&ens.rngs))?;
    let mut meta = format!("seed = {}\nparticles = {}\ntime = {}\n", ens.seed, ens.len(), ens.t());
    if let Some(p) = plan {
        meta.push_str(&p.echo());
    }
    std::fs::write(dir.join("meta.txt"), meta)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<EnsembleState> {
    let meta = std::fs::read_to_string(dir.join("meta.txt"))?;
    let field = |key: &str| -> Result<&str> {
        meta.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim())
            .ok_or_else(|| Error::Format(format!("meta.txt lacks {key}")))
    };
    let seed: u64 = field("seed")?.parse().map_err(|_| Error::Format("bad seed in meta.txt".into()))?;
    let n: usize = field("particles")?
        .parse()
        .map_err(|_| Error::Format("bad particle count in meta.txt".into()))?;
    let particles = (0..n)
        .map(|i| OceanState::load(&dir.join("ensemble").join(format!("particle_{i}.dcst"))))
        .collect::<Result<Vec<_>>>()?;
    let rngs = parse_positions(seed, &std::fs::read_to_string(dir.join("rng_state.txt"))?)?;
    if rngs.len() != n {
        return Err(Error::Format(format!("{} stream positions for {n} particles", rngs.len())));
    }
    let ens = EnsembleState { particles, rngs, seed };
    if n > 0 {
        ens.check_time()?;
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn small(q0: f64) -> Config {
        let mut c = Config::desk();
        c.grid.nx = 40;
        c.grid.ny = 35;
        c.model_error.q0 = q0;
        c.experiment.ensemble_size = 4;
        c.experiment.spinup_end = 600.0;
        c.experiment.da_end = 1200.0;
        c.experiment.forecast_end = 2400.0;
        c.observations.insertion_time = 300.0;
        c.truth.duration = 2400.0;
        c.experiment.trajectory_interval = 600.0;
        c.workers = 1;
        c
    }

    #[test]
    fn plan_validation() {
        let c = small(0.0);
        let p = ExperimentPlan::from_config(&c).unwrap();
        let mut bad = p.clone();
        bad.da_end = bad.spinup_end;
        assert!(bad.validate().is_err());
        let mut bad = p.clone();
        bad.cadence = 90.0;
        assert!(bad.validate().is_err());
        assert!(p.echo().contains("selector = drifters"));
    }

    #[test]
    fn spinup_without_noise_is_identical() {
        let c = small(0.0);
        let e = Engine::from_config(&c).unwrap();
        let (ens, times) = e.run_spinup(&ExperimentPlan::from_config(&c).unwrap()).unwrap();
        assert!(ens.particles.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(ens.t(), 600.0);
        assert_eq!(times.model_steps, 4 * 10);
    }

    #[test]
    fn spinup_with_noise_separates_particles() {
        let c = small(2.5e-4);
        let e = Engine::from_config(&c).unwrap();
        let (ens, _) = e.run_spinup(&ExperimentPlan::from_config(&c).unwrap()).unwrap();
        for a in 0..ens.len() {
            for b in a + 1..ens.len() {
                assert_ne!(ens.particles[a].eta, ens.particles[b].eta);
            }
        }
    }

    #[test]
    fn empty_selector_matches_plain_run() {
        let mut c = small(2.5e-4);
        c.experiment.selector = "none".into();
        let e = Engine::from_config(&c).unwrap();
        let plan = ExperimentPlan::from_config(&c).unwrap();
        let (mut a, _) = e.run_spinup(&plan).unwrap();
        let mut b = a.clone();
        e.run_assimilation(&mut a, &[], &plan, plan.da_end, |_, _| {}).unwrap();
        e.advance(&mut b, plan.da_end, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_observations_are_an_error() {
        let c = small(2.5e-4);
        let e = Engine::from_config(&c).unwrap();
        let plan = ExperimentPlan::from_config(&c).unwrap();
        let (mut a, _) = e.run_spinup(&plan).unwrap();
        let r = e.run_assimilation(&mut a, &[], &plan, plan.da_end, |_, _| {});
        assert!(matches!(r, Err(Error::MissingObservations(t)) if t == 900.0));
    }

    #[test]
    fn frozen_ensemble_has_static_trajectories() {
        let c = small(0.0);
        let e = Engine::from_config(&c).unwrap();
        let plan = ExperimentPlan::from_config(&c).unwrap();
        let mut ens = EnsembleState::replicate(&OceanState::zeros(&e.grid), 3, 1).unwrap();
        for p in &mut ens.particles {
            p.t = plan.da_end;
        }
        let d = vec![Drifter::new(0, 1000.0, 2000.0), Drifter::new(1, 5000.0, 7000.0)];
        let (tab, _) = e.run_forecast(&mut ens, &d, &plan).unwrap();
        assert_eq!(tab.times.len(), 3);
        assert_eq!(tab.positions.len(), tab.times.len() * 3 * 2);
        assert!(tab.positions.iter().all(|q| *q == d[q.id as usize]));
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = small(2.5e-4);
        let e = Engine::from_config(&c).unwrap();
        let plan = ExperimentPlan::from_config(&c).unwrap();
        let (ens, _) = e.run_spinup(&plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &ens, Some(&plan)).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.particles, ens.particles);
        assert_eq!(format_positions(&back.rngs), format_positions(&ens.rngs));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let tab = TrajectoryTable {
            times: vec![0.0, 900.0],
            n_particles: 2,
            n_drifters: 1,
            positions: vec![
                Drifter::new(0, 1.0, 2.0),
                Drifter::new(0, 3.0, 4.0),
                Drifter { id: 0, x: 5.5, y: 6.0, wind_x: -1, wind_y: 2 },
                Drifter::new(0, 7.0, 8.0),
            ],
        };
        let mut buf = Vec::new();
        tab.write_csv(&mut buf).unwrap();
        assert_eq!(TrajectoryTable::read_csv(&buf[..]).unwrap(), tab);
    }
}
