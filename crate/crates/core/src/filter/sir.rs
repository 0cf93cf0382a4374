//! Standard particle-filter weights and residual resampling, used as the
//! reference against which the equal-weights filter is judged.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ModelGrid, OceanState, PhysParams};
use crate::observation::{innovation, ObsErrorParams, ObservationRecord};

/// `-1/2 sum d^T R^{-1} d` over all observations for one particle.
pub fn log_likelihood(
    state: &OceanState,
    obs: &[&ObservationRecord],
    r: &ObsErrorParams,
    phys: &PhysParams,
    grid: &ModelGrid,
) -> Result<f64> {
    let mut ll = 0.0;
    for o in obs {
        let d = innovation(state, o, phys, grid)?;
        ll -= 0.5 * (d[0] * d[0] / r.r[0] + d[1] * d[1] / r.r[1]);
    }
    Ok(ll)
}

/// Normalized weights from log-weights, shifted by the maximum so that the
/// largest weight never underflows.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    if !max.is_finite() {
        return Err(Error::EnsembleCollapse { max_log_weight: max });
    }
    let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / sum).collect())
}

/// Normalized likelihood weights of an unperturbed ensemble.
pub fn standard_pf_weights(
    particles: &[OceanState],
    obs: &[&ObservationRecord],
    r: &ObsErrorParams,
    phys: &PhysParams,
    grid: &ModelGrid,
) -> Result<Vec<f64>> {
    let ll = particles
        .iter()
        .enumerate()
        .map(|(i, p)| log_likelihood(p, obs, r, phys, grid).map_err(|e| e.in_particle(i)))
        .collect::<Result<Vec<_>>>()?;
    normalize_log_weights(&ll)
}

/// Number of particles whose weight reaches `1/N`, with a relative
/// tolerance so that exactly equal weights all count.
pub fn count_significant(weights: &[f64]) -> usize {
    let thr = 1.0 / weights.len() as f64;
    weights.iter().filter(|&&w| w >= thr * (1.0 - 1e-9)).count()
}

/// Residual resampling: `floor(N w_i)` copies of each particle, the rest
/// drawn from the residual weights. Returns parent indices in ascending order.
pub fn residual_resample(weights: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = weights.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("weights must be finite, non-negative and not all zero".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    for (i, w) in weights.iter().enumerate() {
        let nw = n as f64 * w / sum;
        let copies = nw.floor() as usize;
        out.extend(std::iter::repeat_n(i, copies));
        residual.push(nw - copies as f64);
    }
    let remaining = n - out.len();
    let rsum: f64 = residual.iter().sum();
    for _ in 0..remaining {
        let u = rng.random::<f64>() * rsum;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, r) in residual.iter().enumerate() {
            acc += r;
            if u < acc {
                pick = i;
                break;
            }
        }
        out.push(pick);
    }
    out.sort_unstable();
    Ok(out)
}
