//! One assimilation cycle of the two-stage implicit equal-weights filter.
//!
//! Per particle: innovations, pull toward the observations and the
//! optimal-proposal weight `c_i`; a pair of perpendicular coarse noise
//! fields. Then a single barrier fixes the target weight and `beta`, after
//! which every particle solves for its own `alpha` and receives
//! `P^{1/2}(beta^{1/2} nu + alpha^{1/2} xi)`.

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lambert::solve_alpha;
use super::precompute::{covariance_pull, BLOCK_SIDE, precompute_local_svd, precompute_s, LocalSvdBlock, SMatrix};
use crate::config::FilterMode;
use crate::error::{Error, Result};
use crate::grid::{CoarseField, ModelGrid, OceanState, PhysParams};
use crate::model_error::{apply_q_half, sample_xi, ErrorParams, Increment, Span};
use crate::observation::{innovation, ObsErrorParams, ObservationRecord, PlatformKind};
use crate::rng::ParticleRng;

/// Immutable data shared by all particles during a cycle.
#[derive(Clone, Debug)]
pub struct FilterContext {
    pub grid: ModelGrid,
    pub phys: PhysParams,
    pub err: ErrorParams,
    pub r: ObsErrorParams,
    pub s: SMatrix,
    pub block: LocalSvdBlock,
    pub mode: FilterMode,
    /// Pulls for unit `hu` and `hv` innovations observed at cell `(0, 0)`.
    unit_pulls: [Increment; 2],
}

impl FilterContext {
    pub fn new(grid: ModelGrid, phys: PhysParams, err: ErrorParams, r: ObsErrorParams, mode: FilterMode) -> Result<Self> {
        let cg = err.coarse;
        if cg.nxc < BLOCK_SIDE || cg.nyc < BLOCK_SIDE {
            return Err(Error::InvalidParameter(format!(
                "coarse grid {}x{} is smaller than the {BLOCK_SIDE}x{BLOCK_SIDE} local block",
                cg.nxc, cg.nyc
            )));
        }
        let s = precompute_s(&err, &phys, &grid, &r)?;
        let block = precompute_local_svd(&s, &err, &phys)?;
        let unit_pulls = [
            covariance_pull((0, 0), [1.0, 0.0], &err, &phys, &grid)?,
            covariance_pull((0, 0), [0.0, 1.0], &err, &phys, &grid)?,
        ];
        Ok(FilterContext {
            grid,
            phys,
            err,
            r,
            s,
            block,
            mode,
            unit_pulls,
        })
    }

    /// `Q H^T y` for an observation at `cell`. The coarse grid is aligned
    /// with the observed cell, so this is a shifted copy of the pull at the
    /// origin.
    pub fn pull_at(&self, cell: (usize, usize), y: [f64; 2]) -> Increment {
        let [a, b] = &self.unit_pulls;
        let shift = |s: Span, d: usize| Span {
            start: s.start + d as i64,
            ..s
        };
        Increment {
            xs: shift(a.xs, cell.0),
            ys: shift(a.ys, cell.1),
            eta: a.eta.iter().zip(&b.eta).map(|(p, q)| y[0] * p + y[1] * q).collect(),
            hu: a.hu.iter().zip(&b.hu).map(|(p, q)| y[0] * p + y[1] * q).collect(),
            hv: a.hv.iter().zip(&b.hv).map(|(p, q)| y[0] * p + y[1] * q).collect(),
        }
    }

    /// State dimension used to rescale the coarse noise norms.
    pub fn n_state(&self) -> f64 {
        self.grid.state_dim() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParticleDiagnostics {
    pub phi: f64,
    pub c: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub alpha: f64,
    /// `-log w` recomputed from the final scalars, cross term omitted.
    pub neg_log_weight: f64,
    /// The Lambert W argument fell below the branch point.
    pub clamped: bool,
}

/// Wall time spent in each stage, summed over particles.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimes {
    pub pull: Duration,
    pub sampling: Duration,
    pub barrier: Duration,
    pub alpha: Duration,
    pub p_half: Duration,
}

impl StageTimes {
    pub fn add(&mut self, o: &StageTimes) {
        self.pull += o.pull;
        self.sampling += o.sampling;
        self.barrier += o.barrier;
        self.alpha += o.alpha;
        self.p_half += o.p_half;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CycleReport {
    pub w_target: f64,
    pub beta: f64,
    pub particles: Vec<ParticleDiagnostics>,
    pub times: StageTimes,
}

impl CycleReport {
    /// Diagnostics lines `cycle,particle,c,gamma,zeta,alpha,beta,w_target`.
    pub fn lines(&self, cycle: usize) -> Vec<String> {
        self.particles
            .iter()
            .enumerate()
            .map(|(i, p)| {
                format!(
                    "{cycle},{i},{},{},{},{},{},{}",
                    p.c, p.gamma, p.zeta, p.alpha, self.beta, self.w_target
                )
            })
            .collect()
    }
}

/// Orthogonalize `nu_tilde` against `xi` and restore its length; returns
/// `(xi, nu, gamma, zeta)` with both norms rescaled to the state dimension.
pub fn sample_perp_pair(rng: &mut ChaCha8Rng, ctx: &FilterContext) -> (CoarseField, CoarseField, f64, f64) {
    let coarse = ctx.err.coarse;
    let scale = ctx.n_state() / coarse.points() as f64;
    loop {
        let xi = sample_xi(rng, coarse);
        let nu_t = sample_xi(rng, coarse);
        let xx = xi.norm_sq();
        if xx == 0.0 {
            continue;
        }
        let proj = xi.dot(&nu_t) / xx;
        let mut nu = nu_t.clone();
        for (n, x) in nu.values.iter_mut().zip(&xi.values) {
            *n -= proj * x;
        }
        let len_t = nu_t.norm_sq();
        let len_p = nu.norm_sq();
        if len_p == 0.0 {
            continue;
        }
        let f = (len_t / len_p).sqrt();
        nu.values.iter_mut().for_each(|v| *v *= f);
        let gamma = xx * scale;
        let zeta = nu.norm_sq() * scale;
        return (xi, nu, gamma, zeta);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncResult {
    pub w_target: f64,
    pub beta: f64,
}

/// Target weight and covariance scaling, reduced in particle order.
pub fn sync_target_beta(c: &[f64], zeta: &[f64], mode: FilterMode) -> Result<SyncResult> {
    if c.len() < 2 || c.len() != zeta.len() {
        return Err(Error::InvalidParameter("need at least two particles with matching scalars".into()));
    }
    if let Some(z) = zeta.iter().find(|z| !(**z > 0.0)) {
        return Err(Error::InvalidParameter(format!("zeta must be positive, got {z}")));
    }
    match mode {
        FilterMode::TwoStage => {
            let mut sum = 0.0;
            for v in c {
                sum += v;
            }
            let w_target = sum / c.len() as f64;
            let mut beta = f64::INFINITY;
            for (ci, zi) in c.iter().zip(zeta) {
                beta = beta.min((w_target - ci) / zi + 1.0);
            }
            Ok(SyncResult { w_target, beta })
        }
        FilterMode::OneStage => {
            let w_target = c.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            Ok(SyncResult { w_target, beta: 0.0 })
        }
    }
}

/// A platform observed this cycle and the model cell it falls in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Platform {
    pub kind: PlatformKind,
    pub id: u32,
    pub cell: (usize, usize),
}

pub fn platforms(obs: &[&ObservationRecord], grid: &ModelGrid) -> Result<Vec<Platform>> {
    let mut out = obs
        .iter()
        .map(|o| {
            Ok(Platform {
                kind: o.kind,
                id: o.id,
                cell: grid.locate_cell(o.x, o.y)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|p| (p.kind, p.id));
    Ok(out)
}

/// `P^{1/2} z`: the local factor at each platform, then `Q^{1/2}`.
pub fn apply_p_half(noise: &CoarseField, platforms: &[Platform], ctx: &FilterContext) -> Result<Increment> {
    let mut z = noise.clone();
    for p in platforms {
        let center = ctx.err.coarse.nearest_point(p.cell.0, p.cell.1);
        ctx.block.apply_at(&mut z, center)?;
    }
    Ok(apply_q_half(&z, &ctx.err, &ctx.phys, &ctx.grid))
}

struct FirstStage {
    phi: f64,
    c: f64,
    xi: CoarseField,
    nu: CoarseField,
    gamma: f64,
    zeta: f64,
    times: StageTimes,
}

/// Innovations, pull and weight for one particle; `state` becomes the
/// pulled analysis state.
pub fn optimal_proposal_pull(
    state: &mut OceanState,
    obs: &[&ObservationRecord],
    ctx: &FilterContext,
) -> Result<f64> {
    let g = &ctx.grid;
    let n = g.cells();
    let mut d_all = Vec::with_capacity(obs.len());
    for o in obs {
        d_all.push((g.locate_cell(o.x, o.y)?, innovation(state, o, &ctx.phys, g)?));
    }
    let mut phi = 0.0;
    let (mut de, mut dhu, mut dhv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (cell, d) in d_all {
        phi += ctx.s.quad(d);
        let inc = ctx.pull_at(cell, ctx.s.apply(d));
        inc.accumulate(g, &mut de, &mut dhu, &mut dhv);
    }
    for i in 0..n {
        state.eta[i] = (state.eta[i] as f64 + de[i]) as f32;
        state.hu[i] = (state.hu[i] as f64 + dhu[i]) as f32;
        state.hv[i] = (state.hv[i] as f64 + dhv[i]) as f32;
    }
    Ok(phi)
}

fn first_stage(
    state: &mut OceanState,
    rng: &mut ChaCha8Rng,
    obs: &[&ObservationRecord],
    ctx: &FilterContext,
    n_e: usize,
) -> Result<FirstStage> {
    let t0 = Instant::now();
    let phi = optimal_proposal_pull(state, obs, ctx)?;
    let t1 = Instant::now();
    let (xi, nu, gamma, zeta) = sample_perp_pair(rng, ctx);
    let t2 = Instant::now();
    Ok(FirstStage {
        phi,
        c: phi + (n_e as f64).ln(),
        xi,
        nu,
        gamma,
        zeta,
        times: StageTimes {
            pull: t1 - t0,
            sampling: t2 - t1,
            ..Default::default()
        },
    })
}

fn second_stage(
    state: &mut OceanState,
    first: &FirstStage,
    sync: SyncResult,
    plats: &[Platform],
    ctx: &FilterContext,
) -> Result<(ParticleDiagnostics, StageTimes)> {
    let t0 = Instant::now();
    let n = ctx.n_state();
    let mut c_star = sync.w_target - first.c - (sync.beta - 1.0) * first.zeta;
    // beta is the minimum over particles, so c* can only dip below zero by rounding.
    let tol = 1e-9 * (sync.w_target.abs() + first.c.abs() + first.zeta);
    if c_star < 0.0 {
        if c_star < -tol {
            return Err(Error::InvalidParameter(format!("negative c* = {c_star}")));
        }
        c_star = 0.0;
    }
    let sol = solve_alpha(c_star, first.gamma, n)?;
    let alpha = sol.alpha;
    let t1 = Instant::now();

    let sb = sync.beta.sqrt();
    let sa = alpha.sqrt();
    let mut z = first.xi.clone();
    match ctx.mode {
        FilterMode::TwoStage => {
            for (v, (x, nu)) in z.values.iter_mut().zip(first.xi.values.iter().zip(&first.nu.values)) {
                *v = sb * nu + sa * x;
            }
        }
        FilterMode::OneStage => z.values.iter_mut().for_each(|v| *v *= sa),
    }
    let inc = apply_p_half(&z, plats, ctx)?;
    inc.add_to(state, &ctx.grid);
    state.check_wet(&ctx.phys)?;
    let t2 = Instant::now();

    let neg_log_weight = (alpha - 1.0) * first.gamma + (sync.beta - 1.0) * first.zeta - n * alpha.ln() + first.c;
    Ok((
        ParticleDiagnostics {
            phi: first.phi,
            c: first.c,
            gamma: first.gamma,
            zeta: first.zeta,
            alpha,
            neg_log_weight,
            clamped: sol.clamped,
        },
        StageTimes {
            alpha: t1 - t0,
            p_half: t2 - t1,
            ..Default::default()
        },
    ))
}

/// Assimilate the observations valid at the particles' common time.
/// Particles must already sit at the observation time, reached by a
/// deterministic model step.
pub fn iewpf_assimilate(
    particles: &mut [OceanState],
    rngs: &mut [ParticleRng],
    obs: &[&ObservationRecord],
    ctx: &FilterContext,
) -> Result<CycleReport> {
    let n_e = particles.len();
    if n_e < 2 || rngs.len() != n_e {
        return Err(Error::InvalidParameter(format!(
            "need at least two particles with one stream each, got {n_e} and {}",
            rngs.len()
        )));
    }
    let t = particles[0].t;
    if particles.iter().any(|p| p.t != t) {
        return Err(Error::TimeGridMismatch("particles are not at a common time".into()));
    }
    let plats = platforms(obs, &ctx.grid)?;

    let firsts: Vec<FirstStage> = particles
        .par_iter_mut()
        .zip(rngs.par_iter_mut())
        .enumerate()
        .map(|(i, (p, r))| first_stage(p, &mut r.filter, obs, ctx, n_e).map_err(|e| e.in_particle(i)))
        .collect::<Result<Vec<_>>>()?;

    let tb = Instant::now();
    let c: Vec<f64> = firsts.iter().map(|f| f.c).collect();
    let zeta: Vec<f64> = firsts.iter().map(|f| f.zeta).collect();
    let sync = sync_target_beta(&c, &zeta, ctx.mode)?;
    if sync.beta < 0.0 {
        return Err(Error::NegativeBeta(sync.beta));
    }
    let barrier = tb.elapsed();

    let seconds: Vec<(ParticleDiagnostics, StageTimes)> = particles
        .par_iter_mut()
        .zip(firsts.par_iter())
        .enumerate()
        .map(|(i, (p, f))| second_stage(p, f, sync, &plats, ctx).map_err(|e| e.in_particle(i)))
        .collect::<Result<Vec<_>>>()?;

    let mut times = StageTimes {
        barrier,
        ..Default::default()
    };
    for f in &firsts {
        times.add(&f.times);
    }
    for (_, t) in &seconds {
        times.add(t);
    }
    Ok(CycleReport {
        w_target: sync.w_target,
        beta: sync.beta,
        particles: seconds.into_iter().map(|(d, _)| d).collect(),
        times,
    })
}
