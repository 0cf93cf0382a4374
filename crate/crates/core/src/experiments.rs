//! Complete twin experiments built from the truth generator, the ensemble
//! engine and the diagnostics.

use rand::RngCore;

use crate::config::Config;
use crate::diagnostics::{collapse_experiment, compute_rank, forecast_error, CollapseRow, ErrorSeries, RankHistogram};
use crate::ensemble::{Engine, EnsembleState, ExperimentPlan};
use crate::error::{Error, Result};
use crate::grid::OceanState;
use crate::observation::{observe_state, records_at, ObsSelector, ObservationRecord};
use crate::rng::{normal, stream, Purpose};
use crate::swe::init_double_jet;
use crate::truth::simulate_truth;

#[derive(Clone, Debug, PartialEq)]
pub struct RankExperiment {
    pub experiments: usize,
    pub ensemble_size: usize,
    pub cycles: usize,
    /// Free stochastic run before the first cycle.
    pub spinup: f64,
    /// Moorings whose cells are ranked.
    pub mooring_ids: Vec<u32>,
}

impl Default for RankExperiment {
    fn default() -> Self {
        RankExperiment {
            experiments: 200,
            ensemble_size: 20,
            cycles: 6,
            spinup: 3600.0,
            mooring_ids: vec![0, 4, 8, 12, 16, 20],
        }
    }
}

/// Independent truth realizations, each with its own ensemble started from
/// the same initial state. After the last cycle the truth `hu` plus fresh
/// observation noise is ranked among the perturbed members at every
/// chosen mooring cell. Only moorings are assimilated.
pub fn rank_histogram_experiment(base: &Config, exp: &RankExperiment) -> Result<RankHistogram> {
    let mut cfg = base.clone();
    cfg.observations.drifters = [0, 0];
    cfg.observations.insertion_time = exp.spinup;
    cfg.truth.duration = exp.spinup + exp.cycles as f64 * cfg.observations.cadence;
    cfg.truth.snapshot_interval = 0.0;
    cfg.experiment.ensemble_size = exp.ensemble_size;
    cfg.experiment.spinup_end = exp.spinup;
    cfg.experiment.da_end = cfg.truth.duration;
    cfg.experiment.forecast_end = cfg.truth.duration + cfg.observations.cadence;
    cfg.experiment.trajectory_interval = cfg.observations.cadence;
    cfg.experiment.selector = "moorings".into();
    let engine = Engine::from_config(&cfg)?;
    let plan = ExperimentPlan::from_config(&cfg)?;
    let grid = engine.grid;
    let init = init_double_jet(&grid, &engine.phys)?;
    let r_hu = cfg.observations.r[0];

    let mut hist = RankHistogram::new(exp.ensemble_size);
    for e in 0..exp.experiments as u64 {
        let truth = simulate_truth(&cfg, cfg.seed, e)?;
        let mut diag = stream(cfg.seed, e, Purpose::Diagnostics);
        let ens_seed = diag.next_u64();
        let mut ens = EnsembleState::replicate(&init, exp.ensemble_size, ens_seed)?;
        engine.advance(&mut ens, plan.spinup_end, false)?;
        engine.run_assimilation(&mut ens, &truth.observations, &plan, plan.da_end, |_, _| {})?;

        let last = records_at(&truth.observations, plan.da_end, &ObsSelector::AllMoorings, &grid);
        for id in &exp.mooring_ids {
            let rec = last
                .iter()
                .find(|r| r.id == *id)
                .ok_or_else(|| Error::InvalidParameter(format!("no mooring {id}")))?;
            let t = observe_state(&truth.final_state, rec.x, rec.y, &grid)?[0] + r_hu.sqrt() * normal(&mut diag);
            let members = ens
                .particles
                .iter()
                .map(|p| observe_state(p, rec.x, rec.y, &grid).map(|v| v[0]))
                .collect::<Result<Vec<_>>>()?;
            hist.add(compute_rank(t, &members, r_hu, &mut diag));
        }
    }
    Ok(hist)
}

/// Twin forecast: one truth, one shared spin-up, then for each selector an
/// assimilation window and a forecast of the true drifters.
pub fn twin_forecast(cfg: &Config, selectors: &[ObsSelector]) -> Result<Vec<ErrorSeries>> {
    let truth = simulate_truth(cfg, cfg.seed, 0)?;
    let engine = Engine::from_config(cfg)?;
    let plan = ExperimentPlan::from_config(cfg)?;
    let (spun, _) = engine.run_spinup(&plan)?;
    let start = truth.drifters_at(plan.da_end)?;
    let reference = truth.track_window(plan.da_end, plan.forecast_end);
    selectors
        .iter()
        .map(|sel| {
            let mut p = plan.clone();
            p.selector = sel.clone();
            let mut ens = spun.clone();
            engine.run_assimilation(&mut ens, &truth.observations, &p, p.da_end, |_, _| {})?;
            let (tab, _) = engine.run_forecast(&mut ens, &start, &p)?;
            forecast_error(&tab, &reference, &engine.grid)
        })
        .collect()
}

/// Post-assimilation ensemble of `cfg`, brought to the first observation
/// time after the window by a deterministic step, with the weight-collapse
/// table of the drifter observations there.
pub fn collapse_scenario(
    cfg: &Config,
    sizes: &[usize],
    trials: usize,
    r_scales: &[f64],
) -> Result<(Vec<CollapseRow>, Vec<OceanState>)> {
    let truth = simulate_truth(cfg, cfg.seed, 0)?;
    let engine = Engine::from_config(cfg)?;
    let plan = ExperimentPlan::from_config(cfg)?;
    let (mut ens, _) = engine.run_spinup(&plan)?;
    engine.run_assimilation(&mut ens, &truth.observations, &plan, plan.da_end, |_, _| {})?;
    let rows = collapse_next_cycle(&engine, &mut ens, &truth.observations, &plan, sizes, trials, r_scales)?;
    Ok((rows, ens.particles))
}

/// Step a post-assimilation ensemble into the next observation time with a
/// deterministic final step and tabulate the weight collapse on the
/// drifter observations there.
pub fn collapse_next_cycle(
    engine: &Engine,
    ens: &mut EnsembleState,
    observations: &[ObservationRecord],
    plan: &ExperimentPlan,
    sizes: &[usize],
    trials: usize,
    r_scales: &[f64],
) -> Result<Vec<CollapseRow>> {
    let t = ens.t() + plan.cadence;
    engine.advance(ens, t, true)?;
    let obs = records_at(observations, t, &ObsSelector::AllDrifters, &engine.grid);
    if obs.is_empty() {
        return Err(Error::MissingObservations(t));
    }
    let mut rng = stream(plan.seed, 0, Purpose::Diagnostics);
    collapse_experiment(
        &ens.particles,
        &obs,
        sizes,
        trials,
        r_scales,
        &engine.filter.r,
        &engine.phys,
        &engine.grid,
        &mut rng,
    )
}
