//! Model-error covariance operators.
//!
//! A perturbation is built as `Q^{1/2} xi = GB I SOAR xi`: standard normal
//! numbers on the coarse grid, smoothed by a truncated SOAR kernel,
//! interpolated to the model grid with Catmull-Rom cubic convolution and
//! turned into a geostrophically balanced `(eta, hu, hv)` triple.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{CoarseField, CoarseGrid, ModelGrid, OceanState, PhysParams};
use crate::rng::fill_normal;

/// Cut-off of the SOAR kernel in coarse points (Chebyshev radius).
pub const C_SOAR: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorParams {
    /// SOAR amplitude (m).
    pub q0: f64,
    /// Correlation length (m).
    pub l0: f64,
    pub coarse: CoarseGrid,
}

impl ErrorParams {
    /// Parameters with the default correlation length of three quarters
    /// of a coarse cell.
    pub fn new(grid: &ModelGrid, q0: f64, c_omega: usize) -> Result<Self> {
        let coarse = CoarseGrid::new(grid, c_omega)?;
        let l0 = 0.75 * coarse.dxc;
        Self::with_length(coarse, q0, l0)
    }

    pub fn with_length(coarse: CoarseGrid, q0: f64, l0: f64) -> Result<Self> {
        if !(q0.is_finite() && q0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("q0 must be non-negative, got {q0}")));
        }
        if !(l0.is_finite() && l0 > 0.0) {
            return Err(Error::InvalidParameter(format!("L0 must be positive, got {l0}")));
        }
        Ok(ErrorParams { q0, l0, coarse })
    }

    pub fn aligned_to(&self, j: usize, k: usize) -> ErrorParams {
        ErrorParams {
            coarse: self.coarse.aligned_to(j, k),
            ..*self
        }
    }
}

pub fn soar_kernel(dist: f64, params: &ErrorParams) -> f64 {
    let r = dist / params.l0;
    params.q0 * (1.0 + r) * (-r).exp()
}

fn soar_weights(params: &ErrorParams) -> [[f64; 2 * C_SOAR + 1]; 2 * C_SOAR + 1] {
    let mut w = [[0.0; 2 * C_SOAR + 1]; 2 * C_SOAR + 1];
    let r = C_SOAR as i64;
    for db in -r..=r {
        for da in -r..=r {
            let d = ((da as f64 * params.coarse.dxc).powi(2) + (db as f64 * params.coarse.dyc).powi(2))
                .sqrt();
            w[(db + r) as usize][(da + r) as usize] = soar_kernel(d, params);
        }
    }
    w
}

/// Convolve with the truncated SOAR kernel (symmetric, periodic).
pub fn apply_soar(field: &CoarseField, params: &ErrorParams) -> CoarseField {
    let g = field.grid;
    let w = soar_weights(params);
    let r = C_SOAR as i64;
    let mut out = CoarseField::zeros(g);
    for b in 0..g.nyc {
        for a in 0..g.nxc {
            let mut acc = 0.0;
            for db in -r..=r {
                let row = &w[(db + r) as usize];
                for da in -r..=r {
                    acc += row[(da + r) as usize] * field.get(a as i64 + da, b as i64 + db);
                }
            }
            out.values[g.idx(a, b)] = acc;
        }
    }
    out
}

pub fn sample_xi(rng: &mut ChaCha8Rng, coarse: CoarseGrid) -> CoarseField {
    let mut f = CoarseField::zeros(coarse);
    fill_normal(rng, &mut f.values);
    f
}

/// Catmull-Rom weights for the four points `-1, 0, 1, 2` at `t` in `[0, 1)`.
#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// A contiguous run of fine-grid indices. A periodic span covers the
/// whole axis and wraps its own neighbors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    pub start: i64,
    pub len: usize,
    pub periodic: bool,
}

impl Span {
    pub fn full(n: usize) -> Span {
        Span {
            start: 0,
            len: n,
            periodic: true,
        }
    }

    /// Span `[lo, hi]`, widened to the whole axis when it would wrap.
    pub fn clamped(lo: i64, hi: i64, n: usize) -> Span {
        let len = (hi - lo + 1).max(0) as usize;
        if len >= n {
            Span::full(n)
        } else {
            Span {
                start: lo,
                len,
                periodic: false,
            }
        }
    }

    fn expanded(self) -> Span {
        if self.periodic {
            self
        } else {
            Span {
                start: self.start - 1,
                len: self.len + 2,
                periodic: false,
            }
        }
    }
}

/// State increment on a rectangular window of the model grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Increment {
    pub xs: Span,
    pub ys: Span,
    pub eta: Vec<f64>,
    pub hu: Vec<f64>,
    pub hv: Vec<f64>,
}

impl Increment {
    /// Add to a state (rounded to the state's storage precision).
    pub fn add_to(&self, state: &mut OceanState, grid: &ModelGrid) {
        for q in 0..self.ys.len {
            for p in 0..self.xs.len {
                let (j, k) = grid.wrap_index(self.xs.start + p as i64, self.ys.start + q as i64);
                let i = grid.idx(j, k);
                let w = q * self.xs.len + p;
                state.eta[i] = (state.eta[i] as f64 + self.eta[w]) as f32;
                state.hu[i] = (state.hu[i] as f64 + self.hu[w]) as f32;
                state.hv[i] = (state.hv[i] as f64 + self.hv[w]) as f32;
            }
        }
    }

    /// Accumulate into full-size double precision fields.
    pub fn accumulate(&self, grid: &ModelGrid, eta: &mut [f64], hu: &mut [f64], hv: &mut [f64]) {
        for q in 0..self.ys.len {
            for p in 0..self.xs.len {
                let (j, k) = grid.wrap_index(self.xs.start + p as i64, self.ys.start + q as i64);
                let i = grid.idx(j, k);
                let w = q * self.xs.len + p;
                eta[i] += self.eta[w];
                hu[i] += self.hu[w];
                hv[i] += self.hv[w];
            }
        }
    }

    /// Value triple at a model cell, zero outside the window.
    pub fn at(&self, grid: &ModelGrid, j: usize, k: usize) -> [f64; 3] {
        let local = |idx: usize, s: Span, n: usize| -> Option<usize> {
            let off = (idx as i64 - s.start).rem_euclid(n as i64) as usize;
            (off < s.len).then_some(off)
        };
        match (local(j, self.xs, grid.nx), local(k, self.ys, grid.ny)) {
            (Some(p), Some(q)) => {
                let w = q * self.xs.len + p;
                [self.eta[w], self.hu[w], self.hv[w]]
            }
            _ => [0.0; 3],
        }
    }
}

struct AxisTaps {
    base: Vec<i64>,
    w: Vec<[f64; 4]>,
}

fn axis_taps(span: Span, c: usize, offset: usize) -> AxisTaps {
    let mut base = Vec::with_capacity(span.len);
    let mut w = Vec::with_capacity(span.len);
    let c = c as i64;
    for p in 0..span.len {
        let s = span.start + p as i64 - offset as i64;
        let a0 = s.div_euclid(c);
        let t = s.rem_euclid(c) as f64 / c as f64;
        base.push(a0 - 1);
        w.push(catmull_rom(t));
    }
    AxisTaps { base, w }
}

/// Cubic convolution of a coarse field evaluated on a window of fine cells.
pub fn interpolate_window(field: &CoarseField, xs: Span, ys: Span) -> Vec<f64> {
    let g = field.grid;
    let tx = axis_taps(xs, g.c, g.oj);
    let ty = axis_taps(ys, g.c, g.ok);
    // Interpolate along x for every coarse row that the y taps touch.
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; g.nyc];
    for q in 0..ys.len {
        for m in 0..4 {
            let (_, b) = g.wrap(0, ty.base[q] + m);
            if rows[b].is_none() {
                let mut r = vec![0.0; xs.len];
                for (p, v) in r.iter_mut().enumerate() {
                    let wx = &tx.w[p];
                    let mut acc = 0.0;
                    for (l, &wl) in wx.iter().enumerate() {
                        acc += wl * field.get(tx.base[p] + l as i64, b as i64);
                    }
                    *v = acc;
                }
                rows[b] = Some(r);
            }
        }
    }
    let mut out = vec![0.0; xs.len * ys.len];
    for q in 0..ys.len {
        let wy = &ty.w[q];
        let line = &mut out[q * xs.len..(q + 1) * xs.len];
        for (m, w) in wy.iter().enumerate() {
            let (_, b) = g.wrap(0, ty.base[q] + m as i64);
            let r = rows[b].as_ref().expect("row prepared above");
            for (o, v) in line.iter_mut().zip(r) {
                *o += w * v;
            }
        }
    }
    out
}

/// Interpolate a coarse field to every cell of the model grid.
pub fn interpolate_bicubic(field: &CoarseField, grid: &ModelGrid) -> Vec<f64> {
    interpolate_window(field, Span::full(grid.nx), Span::full(grid.ny))
}

/// Balanced transports from an elevation perturbation by central
/// differences, with periodic wrap.
pub fn geostrophic_balance(delta_eta: &[f64], phys: &PhysParams, grid: &ModelGrid) -> (Vec<f64>, Vec<f64>) {
    let kappa = phys.geostrophic_factor();
    let (nx, ny) = (grid.nx, grid.ny);
    let mut hu = vec![0.0; nx * ny];
    let mut hv = vec![0.0; nx * ny];
    for k in 0..ny {
        let kp = (k + 1) % ny;
        let km = (k + ny - 1) % ny;
        for j in 0..nx {
            let jp = (j + 1) % nx;
            let jm = (j + nx - 1) % nx;
            let i = k * nx + j;
            hu[i] = -kappa * (delta_eta[kp * nx + j] - delta_eta[km * nx + j]) / (2.0 * grid.dy);
            hv[i] = kappa * (delta_eta[k * nx + jp] - delta_eta[k * nx + jm]) / (2.0 * grid.dx);
        }
    }
    (hu, hv)
}

/// `GB I` applied to an already smoothed coarse field on a window.
pub fn balanced_increment(
    smoothed: &CoarseField,
    phys: &PhysParams,
    grid: &ModelGrid,
    xs: Span,
    ys: Span,
) -> Increment {
    let ex = xs.expanded();
    let ey = ys.expanded();
    let deta = interpolate_window(smoothed, ex, ey);
    let kappa = phys.geostrophic_factor();
    let n = xs.len * ys.len;
    let mut inc = Increment {
        xs,
        ys,
        eta: vec![0.0; n],
        hu: vec![0.0; n],
        hv: vec![0.0; n],
    };
    // Position of output (p, q) and its neighbors inside the expanded window.
    let shift_x = usize::from(!xs.periodic);
    let shift_y = usize::from(!ys.periodic);
    let nb = |i: usize, d: i64, len: usize| -> usize { (i as i64 + d).rem_euclid(len as i64) as usize };
    for q in 0..ys.len {
        let qc = q + shift_y;
        let qn = nb(qc, 1, ey.len);
        let qs = nb(qc, -1, ey.len);
        for p in 0..xs.len {
            let pc = p + shift_x;
            let pe = nb(pc, 1, ex.len);
            let pw = nb(pc, -1, ex.len);
            let w = q * xs.len + p;
            inc.eta[w] = deta[qc * ex.len + pc];
            inc.hu[w] = -kappa * (deta[qn * ex.len + pc] - deta[qs * ex.len + pc]) / (2.0 * grid.dy);
            inc.hv[w] = kappa * (deta[qc * ex.len + pe] - deta[qc * ex.len + pw]) / (2.0 * grid.dx);
        }
    }
    inc
}

/// Full-domain `Q^{1/2} xi`.
pub fn apply_q_half(xi: &CoarseField, params: &ErrorParams, phys: &PhysParams, grid: &ModelGrid) -> Increment {
    let s = apply_soar(xi, params);
    balanced_increment(&s, phys, grid, Span::full(grid.nx), Span::full(grid.ny))
}

/// Fine-grid window touched by a coarse field supported within Chebyshev
/// radius `radius` of coarse point `center`.
pub fn footprint(coarse: &CoarseGrid, grid: &ModelGrid, center: (usize, usize), radius: usize) -> (Span, Span) {
    let c = coarse.c as i64;
    let r = radius as i64;
    let (a, b) = (center.0 as i64, center.1 as i64);
    // Cubic taps reach two coarse cells further; the balance adds one ring.
    let xs = Span::clamped(c * (a - r - 2) + coarse.oj as i64 - 1, c * (a + r + 2) + coarse.oj as i64, grid.nx);
    let ys = Span::clamped(c * (b - r - 2) + coarse.ok as i64 - 1, c * (b + r + 2) + coarse.ok as i64, grid.ny);
    (xs, ys)
}

/// `Q^{1/2} x` for a coarse field supported within `radius` of `center`.
pub fn apply_q_half_local(
    x: &CoarseField,
    center: (usize, usize),
    radius: usize,
    params: &ErrorParams,
    phys: &PhysParams,
    grid: &ModelGrid,
) -> Increment {
    let s = apply_soar(x, params);
    let (xs, ys) = footprint(&x.grid, grid, center, radius + C_SOAR);
    balanced_increment(&s, phys, grid, xs, ys)
}

/// Draw one model error and add it to `state`.
pub fn perturb_state(
    state: &mut OceanState,
    rng: &mut ChaCha8Rng,
    params: &ErrorParams,
    phys: &PhysParams,
    grid: &ModelGrid,
) -> Result<()> {
    let xi = sample_xi(rng, params.coarse);
    if params.q0 == 0.0 {
        return Ok(());
    }
    apply_q_half(&xi, params, phys, grid).add_to(state, grid);
    state.check_wet(phys)
}

/// Transpose of the balance operator for one observed transport pair,
/// treated on the coarse grid: four non-zeros around `point`.
pub fn adjoint_geo_balance(y: [f64; 2], point: (usize, usize), phys: &PhysParams, coarse: CoarseGrid) -> CoarseField {
    let mut f = CoarseField::zeros(coarse);
    add_adjoint_geo_balance(&mut f, y, point, phys);
    f
}

fn add_adjoint_geo_balance(f: &mut CoarseField, y: [f64; 2], point: (usize, usize), phys: &PhysParams) {
    let g = f.grid;
    let kappa = phys.geostrophic_factor();
    let cy = kappa / (2.0 * g.dyc) * y[0];
    let cx = kappa / (2.0 * g.dxc) * y[1];
    let (a, b) = (point.0 as i64, point.1 as i64);
    for (da, db, v) in [(0, 1, -cy), (0, -1, cy), (1, 0, cx), (-1, 0, -cx)] {
        let (pa, pb) = g.wrap(a + da, b + db);
        let i = g.idx(pa, pb);
        f.values[i] += v;
    }
}

/// One observed transport pair located at a model cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellVector {
    pub cell: (usize, usize),
    pub y: [f64; 2],
}

/// Approximate `Q^{1/2,T}` applied to observation-space vectors: balance
/// adjoint at the co-located coarse points, then SOAR.
pub fn apply_q_half_t(contribs: &[CellVector], params: &ErrorParams, phys: &PhysParams) -> Result<CoarseField> {
    let mut f = CoarseField::zeros(params.coarse);
    for c in contribs {
        let point = params
            .coarse
            .coarse_point_of(c.cell.0, c.cell.1)
            .ok_or(Error::NotColocated { j: c.cell.0, k: c.cell.1 })?;
        add_adjoint_geo_balance(&mut f, c.y, point, phys);
    }
    Ok(apply_soar(&f, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;

    fn desk() -> ModelGrid {
        ModelGrid::new(100, 60, 11100.0, 11100.0).unwrap()
    }

    #[test]
    fn soar_kernel_values() {
        let p = ErrorParams::new(&desk(), 2.5e-4, 5).unwrap();
        assert_eq!(soar_kernel(0.0, &p), 2.5e-4);
        let at_l0 = soar_kernel(p.l0, &p) / p.q0;
        assert!((at_l0 - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((at_l0 - 0.73576).abs() < 1e-5);
        assert!(soar_kernel(100.0 * p.l0, &p) < 1e-30);
    }

    #[test]
    fn soar_of_delta() {
        let p = ErrorParams::new(&desk(), 1.0, 5).unwrap();
        let mut f = CoarseField::zeros(p.coarse);
        f.values[p.coarse.idx(7, 4)] = 1.0;
        let s = apply_soar(&f, &p);
        assert_eq!(s.get(7, 4), 1.0);
        assert!((s.get(8, 4) - soar_kernel(p.coarse.dxc, &p)).abs() < 1e-15);
        assert!((s.get(7, 3) - soar_kernel(p.coarse.dyc, &p)).abs() < 1e-15);
        assert_eq!(s.get(10, 4), 0.0);
        assert_eq!(s.values.iter().filter(|v| **v != 0.0).count(), 25);
    }

    #[test]
    fn interpolation_is_exact_on_coarse_points_and_constants() {
        let g = desk();
        let p = ErrorParams::new(&g, 1.0, 5).unwrap();
        let coarse = p.coarse.aligned_to(3, 1);
        let mut rng = stream(3, 0, Purpose::Diagnostics);
        let f = sample_xi(&mut rng, coarse);
        let fine = interpolate_bicubic(&f, &g);
        for b in 0..coarse.nyc {
            for a in 0..coarse.nxc {
                let (j, k) = coarse.fine_cell(a, b);
                assert_eq!(fine[g.idx(j, k)], f.values[coarse.idx(a, b)]);
            }
        }
        let mut c = CoarseField::zeros(coarse);
        c.values.iter_mut().for_each(|v| *v = 0.7);
        for v in interpolate_bicubic(&c, &g) {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_reproduces_a_ramp_away_from_the_seam() {
        let g = desk();
        let p = ErrorParams::new(&g, 1.0, 5).unwrap();
        let mut f = CoarseField::zeros(p.coarse);
        for b in 0..p.coarse.nyc {
            for a in 0..p.coarse.nxc {
                f.values[p.coarse.idx(a, b)] = 2.0 + 0.3 * a as f64 - 0.1 * b as f64 + 0.05 * (a * b) as f64;
            }
        }
        let fine = interpolate_bicubic(&f, &g);
        for k in 10..45 {
            for j in 10..85 {
                let (a, b) = (j as f64 / 5.0, k as f64 / 5.0);
                let expect = 2.0 + 0.3 * a - 0.1 * b + 0.05 * a * b;
                assert!((fine[g.idx(j, k)] - expect).abs() <= 1e-5 * expect.abs());
            }
        }
    }

    #[test]
    fn balance_of_a_sine() {
        let g = ModelGrid::new(8, 16, 1000.0, 2000.0).unwrap();
        let phys = PhysParams::default();
        let mut eta = vec![0.0; g.cells()];
        for k in 0..g.ny {
            for j in 0..g.nx {
                eta[g.idx(j, k)] = (2.0 * std::f64::consts::PI * k as f64 / g.ny as f64).sin();
            }
        }
        let (hu, hv) = geostrophic_balance(&eta, &phys, &g);
        let w = 2.0 * std::f64::consts::PI / g.ny as f64;
        for k in 0..g.ny {
            let expect = -phys.geostrophic_factor() * (w * k as f64).cos() * w.sin() / g.dy;
            assert!((hu[g.idx(3, k)] - expect).abs() < 1e-9 * phys.geostrophic_factor());
            assert_eq!(hv[g.idx(3, k)], 0.0);
        }
    }

    #[test]
    fn local_window_matches_full_domain() {
        let g = ModelGrid::new(200, 120, 2220.0, 2220.0).unwrap();
        let phys = PhysParams::default();
        let p = ErrorParams::new(&g, 2.5e-4, 5).unwrap().aligned_to(57, 33);
        let point = p.coarse.coarse_point_of(57, 33).unwrap();
        let x = adjoint_geo_balance([1.3, -0.4], point, &phys, p.coarse);
        let x = apply_soar(&x, &p);
        let local = apply_q_half_local(&x, point, 3, &p, &phys, &g);
        assert!(!local.xs.periodic && !local.ys.periodic);
        let full = apply_q_half(&x, &p, &phys, &g);
        for k in 0..g.ny {
            for j in 0..g.nx {
                let a = local.at(&g, j, k);
                let b = full.at(&g, j, k);
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() <= 1e-12 * (1.0 + b[c].abs()), "({j},{k}) {a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn adjoint_balance_pattern() {
        let g = desk();
        let phys = PhysParams::default();
        let p = ErrorParams::new(&g, 1.0, 5).unwrap();
        let z = adjoint_geo_balance([0.0, 0.0], (4, 4), &phys, p.coarse);
        assert!(z.values.iter().all(|v| *v == 0.0));
        let f = adjoint_geo_balance([1.0, 0.0], (4, 4), &phys, p.coarse);
        let c = phys.geostrophic_factor() / (2.0 * p.coarse.dyc);
        assert_eq!(f.get(4, 5), -c);
        assert_eq!(f.get(4, 3), c);
        assert_eq!(f.values.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn q_half_t_requires_colocation() {
        let g = desk();
        let phys = PhysParams::default();
        let p = ErrorParams::new(&g, 1.0, 5).unwrap();
        let v = CellVector { cell: (7, 3), y: [1.0, 0.0] };
        assert!(matches!(apply_q_half_t(&[v], &p, &phys), Err(Error::NotColocated { .. })));
        let a = p.aligned_to(7, 3);
        assert_eq!((a.coarse.oj, a.coarse.ok), (2, 3));
        let f = apply_q_half_t(&[v], &a, &phys).unwrap();
        // Two 5x5 neighborhoods centered one row either side; the shared
        // middle row cancels exactly.
        assert_eq!(f.values.iter().filter(|v| **v != 0.0).count(), 35 - 5);
    }

    #[test]
    fn zero_amplitude_leaves_state_unchanged() {
        let g = desk();
        let phys = PhysParams::default();
        let p = ErrorParams::new(&g, 0.0, 5).unwrap();
        let mut s = OceanState::zeros(&g);
        let mut rng = stream(1, 0, Purpose::ModelError);
        perturb_state(&mut s, &mut rng, &p, &phys, &g).unwrap();
        assert_eq!(s, OceanState::zeros(&g));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn soar_is_symmetric(seed in 0u64..1000) {
            let g = ModelGrid::new(40, 30, 1000.0, 1500.0).unwrap();
            let p = ErrorParams::new(&g, 0.3, 5).unwrap();
            let mut rng = stream(seed, 0, Purpose::Diagnostics);
            let x = sample_xi(&mut rng, p.coarse);
            let y = sample_xi(&mut rng, p.coarse);
            let lhs = apply_soar(&x, &p).dot(&y);
            let rhs = x.dot(&apply_soar(&y, &p));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + 1.0));
        }

        #[test]
        fn perturbations_are_balanced(seed in 0u64..1000) {
            let g = ModelGrid::new(40, 30, 2220.0, 2220.0).unwrap();
            let phys = PhysParams::default();
            let p = ErrorParams::new(&g, 2.5e-4, 5).unwrap();
            let mut rng = stream(seed, 1, Purpose::ModelError);
            let xi = sample_xi(&mut rng, p.coarse);
            let inc = apply_q_half(&xi, &p, &phys, &g);
            let (hu, hv) = geostrophic_balance(&inc.eta, &phys, &g);
            for i in 0..g.cells() {
                prop_assert!((hu[i] - inc.hu[i]).abs() <= 1e-12 * (1.0 + hu[i].abs()));
                prop_assert!((hv[i] - inc.hv[i]).abs() <= 1e-12 * (1.0 + hv[i].abs()));
            }
        }
    }
}
