//! Rotating shallow-water dynamics.
//!
//! Second-order central-upwind finite volumes with a generalized minmod
//! limiter and SSP-RK2 time stepping. Surface elevation is reconstructed
//! through the potential-energy variable `K` (pressure plus integrated
//! Coriolis force), which makes geostrophically balanced states exact
//! steady states of the discrete scheme.
//!
//! Fields are stored in `f32`. Each model step promotes them to `f64`,
//! runs all CFL substeps in double precision and rounds back once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ModelGrid, OceanState, PhysParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeParams {
    /// Courant number applied to the quarter-cell CFL bound.
    pub courant: f64,
    /// Generalized minmod parameter in `[1, 2]`.
    pub theta: f64,
    /// Fixed model timestep (s); substeps are fitted inside it.
    pub model_dt: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            courant: 0.8,
            theta: 1.3,
            model_dt: 60.0,
        }
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.courant > 0.0 && self.courant <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Courant number must lie in (0, 1], got {}",
                self.courant
            )));
        }
        if !(1.0..=2.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "limiter parameter must lie in [1, 2], got {}",
                self.theta
            )));
        }
        if !(self.model_dt.is_finite() && self.model_dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "model timestep must be positive, got {}",
                self.model_dt
            )));
        }
        Ok(())
    }
}

/// Double precision copy of the three prognostic fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fields {
    pub eta: Vec<f64>,
    pub hu: Vec<f64>,
    pub hv: Vec<f64>,
}

impl Fields {
    pub fn zeros(n: usize) -> Self {
        Fields {
            eta: vec![0.0; n],
            hu: vec![0.0; n],
            hv: vec![0.0; n],
        }
    }

    pub fn from_state(s: &OceanState) -> Self {
        let up = |v: &[f32]| v.iter().map(|&x| x as f64).collect();
        Fields {
            eta: up(&s.eta),
            hu: up(&s.hu),
            hv: up(&s.hv),
        }
    }

    pub fn store_into(&self, s: &mut OceanState) {
        for (dst, src) in [
            (&mut s.eta, &self.eta),
            (&mut s.hu, &self.hu),
            (&mut s.hv, &self.hv),
        ] {
            for (d, &v) in dst.iter_mut().zip(src.iter()) {
                *d = v as f32;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.eta
            .iter()
            .chain(&self.hu)
            .chain(&self.hv)
            .all(|v| v.is_finite())
    }
}

/// Reusable buffers for the right-hand side evaluation.
#[derive(Default)]
struct Scratch {
    u: Vec<f64>,
    v: Vec<f64>,
    // Reconstructed values on the low and high face of each cell.
    lo: [Vec<f64>; 3],
    hi: [Vec<f64>; 3],
    // Numerical flux through the high face of each cell.
    flux: [Vec<f64>; 3],
}

impl Scratch {
    fn ensure(&mut self, n: usize) {
        if self.u.len() != n {
            self.u = vec![0.0; n];
            self.v = vec![0.0; n];
            for a in self.lo.iter_mut().chain(self.hi.iter_mut()).chain(self.flux.iter_mut()) {
                *a = vec![0.0; n];
            }
        }
    }
}

#[inline]
fn minmod3(a: f64, b: f64, c: f64) -> f64 {
    if a > 0.0 && b > 0.0 && c > 0.0 {
        a.min(b).min(c)
    } else if a < 0.0 && b < 0.0 && c < 0.0 {
        a.max(b).max(c)
    } else {
        0.0
    }
}

#[inline]
fn limited(dm: f64, dp: f64, theta: f64) -> f64 {
    minmod3(theta * dm, 0.5 * (dm + dp), theta * dp)
}

/// Central-upwind flux normal to a face. `n` is the normal transport and
/// `t` the tangential one; the tangential momentum is upwinded with the
/// mass flux. Returns `None` when either side is dry.
#[inline]
#[allow(clippy::too_many_arguments)]
fn face_flux(
    g: f64,
    h_eq: f64,
    el: f64,
    nl: f64,
    tl: f64,
    er: f64,
    nr: f64,
    tr: f64,
) -> Option<[f64; 3]> {
    let hl = h_eq + el;
    let hr = h_eq + er;
    if !(hl > 0.0 && hr > 0.0) {
        return None;
    }
    let ul = nl / hl;
    let ur = nr / hr;
    let cl = (g * hl).sqrt();
    let cr = (g * hr).sqrt();
    let ap = (ul + cl).max(ur + cr).max(0.0);
    let am = (ul - cl).min(ur - cr).min(0.0);
    let inv = 1.0 / (ap - am);
    // Pressure written as g/2 (h^2 - H^2) to keep precision for small eta.
    let fl = nl * ul + 0.5 * g * el * (2.0 * h_eq + el);
    let fr = nr * ur + 0.5 * g * er * (2.0 * h_eq + er);
    let f_eta = (ap * nl - am * nr + ap * am * (er - el)) * inv;
    let f_n = (ap * fl - am * fr + ap * am * (nr - nl)) * inv;
    let f_t = if f_eta >= 0.0 { f_eta * tl / hl } else { f_eta * tr / hr };
    Some([f_eta, f_n, f_t])
}

struct Rhs<'a> {
    grid: &'a ModelGrid,
    phys: &'a PhysParams,
    theta: f64,
}

impl Rhs<'_> {
    fn dry(&self, i: usize, depth: f64) -> Error {
        Error::DryCell {
            j: i % self.grid.nx,
            k: i / self.grid.nx,
            depth,
        }
    }

    /// Tendency of `s` into `out`, including the Coriolis source.
    fn eval(&self, s: &Fields, out: &mut Fields, w: &mut Scratch) -> Result<()> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let n = nx * ny;
        w.ensure(n);
        let g = self.phys.g;
        let f = self.phys.f;
        let h_eq = self.phys.h_eq;

        for i in 0..n {
            let h = h_eq + s.eta[i];
            if !(h > 0.0) {
                return Err(self.dry(i, h));
            }
            w.u[i] = s.hu[i] / h;
            w.v[i] = s.hv[i] / h;
        }

        for i in 0..n {
            out.eta[i] = 0.0;
            out.hu[i] = f * s.hv[i];
            out.hv[i] = -f * s.hu[i];
        }

        // x direction: normal transport hu, tangential hv.
        let fdx = f * self.grid.dx;
        for k in 0..ny {
            let row = k * nx;
            for j in 0..nx {
                let i = row + j;
                let im = row + if j == 0 { nx - 1 } else { j - 1 };
                let ip = row + if j + 1 == nx { 0 } else { j + 1 };
                let dkm = g * (s.eta[i] - s.eta[im]) - 0.5 * fdx * (w.v[im] + w.v[i]);
                let dkp = g * (s.eta[ip] - s.eta[i]) - 0.5 * fdx * (w.v[i] + w.v[ip]);
                let de = (limited(dkm, dkp, self.theta) + fdx * w.v[i]) / (2.0 * g);
                w.lo[0][i] = s.eta[i] - de;
                w.hi[0][i] = s.eta[i] + de;
                let dn = 0.5 * limited(s.hu[i] - s.hu[im], s.hu[ip] - s.hu[i], self.theta);
                w.lo[1][i] = s.hu[i] - dn;
                w.hi[1][i] = s.hu[i] + dn;
                let dt = 0.5 * limited(s.hv[i] - s.hv[im], s.hv[ip] - s.hv[i], self.theta);
                w.lo[2][i] = s.hv[i] - dt;
                w.hi[2][i] = s.hv[i] + dt;
            }
            for j in 0..nx {
                let i = row + j;
                let ip = row + if j + 1 == nx { 0 } else { j + 1 };
                let fl = face_flux(
                    g, h_eq, w.hi[0][i], w.hi[1][i], w.hi[2][i], w.lo[0][ip], w.lo[1][ip],
                    w.lo[2][ip],
                )
                .ok_or_else(|| self.dry(i, h_eq + w.hi[0][i].min(w.lo[0][ip])))?;
                w.flux[0][i] = fl[0];
                w.flux[1][i] = fl[1];
                w.flux[2][i] = fl[2];
            }
            let inv_dx = 1.0 / self.grid.dx;
            for j in 0..nx {
                let i = row + j;
                let im = row + if j == 0 { nx - 1 } else { j - 1 };
                out.eta[i] -= (w.flux[0][i] - w.flux[0][im]) * inv_dx;
                out.hu[i] -= (w.flux[1][i] - w.flux[1][im]) * inv_dx;
                out.hv[i] -= (w.flux[2][i] - w.flux[2][im]) * inv_dx;
            }
        }

        // y direction: normal transport hv, tangential hu.
        let fdy = f * self.grid.dy;
        for k in 0..ny {
            let km = if k == 0 { ny - 1 } else { k - 1 };
            let kp = if k + 1 == ny { 0 } else { k + 1 };
            for j in 0..nx {
                let i = k * nx + j;
                let im = km * nx + j;
                let ip = kp * nx + j;
                let dkm = g * (s.eta[i] - s.eta[im]) + 0.5 * fdy * (w.u[im] + w.u[i]);
                let dkp = g * (s.eta[ip] - s.eta[i]) + 0.5 * fdy * (w.u[i] + w.u[ip]);
                let de = (limited(dkm, dkp, self.theta) - fdy * w.u[i]) / (2.0 * g);
                w.lo[0][i] = s.eta[i] - de;
                w.hi[0][i] = s.eta[i] + de;
                let dn = 0.5 * limited(s.hv[i] - s.hv[im], s.hv[ip] - s.hv[i], self.theta);
                w.lo[1][i] = s.hv[i] - dn;
                w.hi[1][i] = s.hv[i] + dn;
                let dt = 0.5 * limited(s.hu[i] - s.hu[im], s.hu[ip] - s.hu[i], self.theta);
                w.lo[2][i] = s.hu[i] - dt;
                w.hi[2][i] = s.hu[i] + dt;
            }
        }
        for k in 0..ny {
            let kp = if k + 1 == ny { 0 } else { k + 1 };
            for j in 0..nx {
                let i = k * nx + j;
                let ip = kp * nx + j;
                let fl = face_flux(
                    g, h_eq, w.hi[0][i], w.hi[1][i], w.hi[2][i], w.lo[0][ip], w.lo[1][ip],
                    w.lo[2][ip],
                )
                .ok_or_else(|| self.dry(i, h_eq + w.hi[0][i].min(w.lo[0][ip])))?;
                w.flux[0][i] = fl[0];
                w.flux[1][i] = fl[1];
                w.flux[2][i] = fl[2];
            }
        }
        let inv_dy = 1.0 / self.grid.dy;
        for k in 0..ny {
            let km = if k == 0 { ny - 1 } else { k - 1 };
            for j in 0..nx {
                let i = k * nx + j;
                let im = km * nx + j;
                out.eta[i] -= (w.flux[0][i] - w.flux[0][im]) * inv_dy;
                out.hv[i] -= (w.flux[1][i] - w.flux[1][im]) * inv_dy;
                out.hu[i] -= (w.flux[2][i] - w.flux[2][im]) * inv_dy;
            }
        }
        Ok(())
    }
}

/// Time tendency of a state: flux divergence plus Coriolis source.
pub fn flux_rhs(
    state: &OceanState,
    grid: &ModelGrid,
    phys: &PhysParams,
    scheme: &SchemeParams,
) -> Result<Fields> {
    state.check_grid(grid)?;
    let s = Fields::from_state(state);
    let mut out = Fields::zeros(grid.cells());
    let mut w = Scratch::default();
    Rhs {
        grid,
        phys,
        theta: scheme.theta,
    }
    .eval(&s, &mut out, &mut w)?;
    Ok(out)
}

fn cfl_dt_fields(s: &Fields, grid: &ModelGrid, phys: &PhysParams, courant: f64) -> Result<f64> {
    let mut sx: f64 = 0.0;
    let mut sy: f64 = 0.0;
    for i in 0..s.eta.len() {
        let h = phys.h_eq + s.eta[i];
        if !(h > 0.0) {
            return Err(Error::DryCell {
                j: i % grid.nx,
                k: i / grid.nx,
                depth: h,
            });
        }
        let c = (phys.g * h).sqrt();
        sx = sx.max((s.hu[i] / h).abs() + c);
        sy = sy.max((s.hv[i] / h).abs() + c);
    }
    Ok(courant * 0.25 * (grid.dx / sx).min(grid.dy / sy))
}

/// Largest stable substep for the current state.
pub fn cfl_timestep(
    state: &OceanState,
    grid: &ModelGrid,
    phys: &PhysParams,
    scheme: &SchemeParams,
) -> Result<f64> {
    state.check_grid(grid)?;
    cfl_dt_fields(&Fields::from_state(state), grid, phys, scheme.courant)
}

/// Integrator that keeps its buffers between calls.
pub struct Stepper {
    pub grid: ModelGrid,
    pub phys: PhysParams,
    pub scheme: SchemeParams,
    scratch: Scratch,
    k: Fields,
    stage: Fields,
}

impl Stepper {
    pub fn new(grid: ModelGrid, phys: PhysParams, scheme: SchemeParams) -> Result<Self> {
        phys.validate()?;
        scheme.validate()?;
        let n = grid.cells();
        Ok(Stepper {
            grid,
            phys,
            scheme,
            scratch: Scratch::default(),
            k: Fields::zeros(n),
            stage: Fields::zeros(n),
        })
    }

    /// Advance one model timestep; returns the number of CFL substeps.
    pub fn step(&mut self, state: &mut OceanState) -> Result<usize> {
        self.advance(state, self.scheme.model_dt)
    }

    /// Advance `state` by exactly `dt_model` seconds.
    pub fn advance(&mut self, state: &mut OceanState, dt_model: f64) -> Result<usize> {
        if !(dt_model.is_finite() && dt_model > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "model timestep must be positive, got {dt_model}"
            )));
        }
        state.check_grid(&self.grid)?;
        let mut s = Fields::from_state(state);
        let mut elapsed = 0.0;
        let mut substeps = 0;
        let rhs = Rhs {
            grid: &self.grid,
            phys: &self.phys,
            theta: self.scheme.theta,
        };
        loop {
            let remaining = dt_model - elapsed;
            let cfl = cfl_dt_fields(&s, &self.grid, &self.phys, self.scheme.courant)?;
            let last = cfl >= remaining * (1.0 - 1e-12);
            let dt = if last { remaining } else { cfl };
            debug_assert!(dt <= cfl * (1.0 + 1e-9));

            rhs.eval(&s, &mut self.k, &mut self.scratch)?;
            for (st, (src, k)) in [
                (&mut self.stage.eta, (&s.eta, &self.k.eta)),
                (&mut self.stage.hu, (&s.hu, &self.k.hu)),
                (&mut self.stage.hv, (&s.hv, &self.k.hv)),
            ] {
                for i in 0..st.len() {
                    st[i] = src[i] + dt * k[i];
                }
            }
            rhs.eval(&self.stage, &mut self.k, &mut self.scratch)?;
            for (dst, (st, k)) in [
                (&mut s.eta, (&self.stage.eta, &self.k.eta)),
                (&mut s.hu, (&self.stage.hu, &self.k.hu)),
                (&mut s.hv, (&self.stage.hv, &self.k.hv)),
            ] {
                for i in 0..dst.len() {
                    dst[i] = 0.5 * dst[i] + 0.5 * (st[i] + dt * k[i]);
                }
            }
            substeps += 1;
            if !s.is_finite() {
                return Err(Error::NonFiniteState { substep: substeps });
            }
            if last {
                break;
            }
            elapsed += dt;
        }
        s.store_into(state);
        state.t += dt_model;
        Ok(substeps)
    }
}

/// Advance one model timestep with a throwaway integrator.
pub fn model_step(
    state: &mut OceanState,
    grid: &ModelGrid,
    phys: &PhysParams,
    scheme: &SchemeParams,
) -> Result<usize> {
    Stepper::new(*grid, *phys, *scheme)?.step(state)
}

/// Peak jet velocity (m/s) of the default initial condition.
pub const JET_PEAK_VELOCITY: f64 = 0.5;

/// Two opposing zonal jets centered at `Ly/4` (eastward) and `3 Ly/4`
/// (westward), each a compact smooth bump spanning `Ly/6`, with the
/// elevation in exact discrete geostrophic balance.
pub fn init_double_jet(grid: &ModelGrid, phys: &PhysParams) -> Result<OceanState> {
    init_double_jet_with(grid, phys, JET_PEAK_VELOCITY, grid.ly() / 6.0)
}

pub fn init_double_jet_with(
    grid: &ModelGrid,
    phys: &PhysParams,
    peak_velocity: f64,
    width: f64,
) -> Result<OceanState> {
    phys.validate()?;
    let ly = grid.ly();
    if !(width > 0.0 && width <= ly / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "jet width must lie in (0, Ly/2], got {width}"
        )));
    }
    let bump = |y: f64, center: f64| -> f64 {
        let s = (y - center) / width + 0.5;
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            (4.0 + 1.0 / (s * (s - 1.0))).exp()
        }
    };
    let ny = grid.ny;
    let hu: Vec<f64> = (0..ny)
        .map(|k| {
            let y = (k as f64 + 0.5) * grid.dy;
            let prof = bump(y, 0.25 * ly) - bump(y, 0.75 * ly);
            (phys.h_eq * peak_velocity * prof) as f32 as f64
        })
        .collect();

    // Solve g (eta_{k+1} - eta_k) = -f dy (u_k + u_{k+1}) / 2 with
    // u = hu / (H + eta); the depth dependence needs a few sweeps.
    let c = phys.f * grid.dy / (2.0 * phys.g);
    let mut eta = vec![0.0f64; ny];
    for _ in 0..100 {
        let u: Vec<f64> = (0..ny).map(|k| hu[k] / (phys.h_eq + eta[k])).collect();
        let mut next = vec![0.0f64; ny];
        for k in 0..ny - 1 {
            next[k + 1] = next[k] - c * (u[k] + u[k + 1]);
        }
        let mean = next.iter().sum::<f64>() / ny as f64;
        let mut change: f64 = 0.0;
        for k in 0..ny {
            next[k] -= mean;
            change = change.max((next[k] - eta[k]).abs());
        }
        eta = next;
        if change < 1e-15 {
            break;
        }
    }

    let mut state = OceanState::zeros(grid);
    for k in 0..ny {
        for j in 0..grid.nx {
            let i = grid.idx(j, k);
            state.eta[i] = eta[k] as f32;
            state.hu[i] = hu[k] as f32;
        }
    }
    Ok(state)
}
