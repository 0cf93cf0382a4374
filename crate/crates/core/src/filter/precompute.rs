//! Quantities computed once per configuration: the 2x2 innovation
//! precision `S = (H Q H^T + R)^{-1}` and the local square-root factor of
//! the proposal covariance around one observed cell.

use nalgebra::{DMatrix, Matrix2};

use crate::error::{Error, Result};
use crate::grid::{CoarseField, ModelGrid, PhysParams};
use crate::model_error::{apply_q_half_local, apply_q_half_t, soar_kernel, CellVector, ErrorParams, Increment, C_SOAR};
use crate::observation::ObsErrorParams;

/// Half width of the local block in coarse points (7 x 7 block).
pub const BLOCK_RADIUS: usize = 3;
pub const BLOCK_SIDE: usize = 2 * BLOCK_RADIUS + 1;
pub const BLOCK_LEN: usize = BLOCK_SIDE * BLOCK_SIDE;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SMatrix {
    /// `H Q H^T` for one platform.
    pub hqht: Matrix2<f64>,
    pub s: Matrix2<f64>,
}

impl SMatrix {
    pub fn apply(&self, d: [f64; 2]) -> [f64; 2] {
        [
            self.s[(0, 0)] * d[0] + self.s[(0, 1)] * d[1],
            self.s[(1, 0)] * d[0] + self.s[(1, 1)] * d[1],
        ]
    }

    /// `d^T S d`.
    pub fn quad(&self, d: [f64; 2]) -> f64 {
        let sd = self.apply(d);
        d[0] * sd[0] + d[1] * sd[1]
    }
}

/// `Q^{1/2} Q^{1/2,T} H^T y` for an observation at `cell`, on the
/// coarse grid aligned with that cell.
pub fn covariance_pull(
    cell: (usize, usize),
    y: [f64; 2],
    params: &ErrorParams,
    phys: &PhysParams,
    grid: &ModelGrid,
) -> Result<Increment> {
    let aligned = params.aligned_to(cell.0, cell.1);
    let point = aligned
        .coarse
        .coarse_point_of(cell.0, cell.1)
        .ok_or(Error::NotColocated { j: cell.0, k: cell.1 })?;
    let x = apply_q_half_t(&[CellVector { cell, y }], &aligned, phys)?;
    Ok(apply_q_half_local(&x, point, 1 + C_SOAR, &aligned, phys, grid))
}

/// Push the two unit observation vectors through the covariance chain,
/// add `R` and invert.
pub fn precompute_s(params: &ErrorParams, phys: &PhysParams, grid: &ModelGrid, r: &ObsErrorParams) -> Result<SMatrix> {
    r.validate()?;
    let cell = (0, 0);
    let mut hqht = Matrix2::zeros();
    for col in 0..2 {
        let mut e = [0.0; 2];
        e[col] = 1.0;
        let inc = covariance_pull(cell, e, params, phys, grid)?;
        let v = inc.at(grid, cell.0, cell.1);
        hqht[(0, col)] = v[1];
        hqht[(1, col)] = v[2];
    }
    let hqht = 0.5 * (hqht + hqht.transpose());
    let m = hqht + Matrix2::new(r.r[0], 0.0, 0.0, r.r[1]);
    let s = m
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("H Q H^T + R = {m:?}")))?;
    Ok(SMatrix {
        hqht,
        s: 0.5 * (s + s.transpose()),
    })
}

/// `U Sigma^{1/2}` of the block `I - Q_SOAR^{1/2} GB^T H^T S H GB Q_SOAR^{1/2}`
/// over the 7 x 7 coarse points around an observation. Points are ordered
/// row by row, `x` offset fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSvdBlock {
    pub factor: DMatrix<f64>,
    pub block: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// Columns of the local `H GB Q_SOAR^{1/2}` (2 x 49).
    pub a: DMatrix<f64>,
}

pub fn block_offset(p: usize) -> (i64, i64) {
    (
        (p % BLOCK_SIDE) as i64 - BLOCK_RADIUS as i64,
        (p / BLOCK_SIDE) as i64 - BLOCK_RADIUS as i64,
    )
}

fn soar_tap(params: &ErrorParams, da: i64, db: i64) -> f64 {
    let r = C_SOAR as i64;
    if da.abs() > r || db.abs() > r {
        return 0.0;
    }
    let d = ((da as f64 * params.coarse.dxc).powi(2) + (db as f64 * params.coarse.dyc).powi(2)).sqrt();
    soar_kernel(d, params)
}

/// Local `H GB Q_SOAR^{1/2}`, with the balance taken on the coarse grid.
fn local_a(params: &ErrorParams, phys: &PhysParams) -> DMatrix<f64> {
    let kappa = phys.geostrophic_factor();
    let cy = kappa / (2.0 * params.coarse.dyc);
    let cx = kappa / (2.0 * params.coarse.dxc);
    let mut a = DMatrix::zeros(2, BLOCK_LEN);
    for p in 0..BLOCK_LEN {
        let (da, db) = block_offset(p);
        // eta at (u, v) from a unit value at (da, db) is soar_tap(u - da, v - db).
        a[(0, p)] = -cy * (soar_tap(params, -da, 1 - db) - soar_tap(params, -da, -1 - db));
        a[(1, p)] = cx * (soar_tap(params, 1 - da, -db) - soar_tap(params, -1 - da, -db));
    }
    a
}

pub fn precompute_local_svd(s: &SMatrix, params: &ErrorParams, phys: &PhysParams) -> Result<LocalSvdBlock> {
    let a = local_a(params, phys);
    let s_dyn = DMatrix::from_row_slice(2, 2, &[s.s[(0, 0)], s.s[(0, 1)], s.s[(1, 0)], s.s[(1, 1)]]);
    let mut block = DMatrix::<f64>::identity(BLOCK_LEN, BLOCK_LEN) - a.transpose() * s_dyn * &a;
    block = 0.5 * (&block + block.transpose());
    let svd = block.clone().try_svd(true, false, 1e-15, 10_000).ok_or_else(|| Error::Svd("no convergence".into()))?;
    let u = svd.u.ok_or_else(|| Error::Svd("left singular vectors missing".into()))?;
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    if sv.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Svd(format!("invalid singular values {sv:?}")));
    }
    let mut factor = u;
    for (j, sigma) in sv.iter().enumerate() {
        let r = sigma.sqrt();
        factor.column_mut(j).scale_mut(r);
    }
    Ok(LocalSvdBlock {
        factor,
        block,
        singular_values: sv,
        a,
    })
}

impl LocalSvdBlock {
    /// Rows of the block that differ from the identity by symbolic
    /// sparsity: points reached by the SOAR stencils of the four balance
    /// taps around the observation.
    pub fn structural_rows(&self) -> usize {
        let r = C_SOAR as i64;
        (0..BLOCK_LEN)
            .filter(|&p| {
                let (da, db) = block_offset(p);
                [(0, 1), (0, -1), (1, 0), (-1, 0)]
                    .iter()
                    .any(|&(u, v)| (u - da).abs() <= r && (v - db).abs() <= r)
            })
            .count()
    }

    /// Rows that numerically differ from the identity by more than `tol`.
    pub fn numeric_rows(&self, tol: f64) -> usize {
        (0..BLOCK_LEN)
            .filter(|&i| {
                (0..BLOCK_LEN).any(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    (self.block[(i, j)] - id).abs() > tol
                })
            })
            .count()
    }

    /// Replace the 49 values around `center` with `U Sigma^{1/2}` times them.
    pub fn apply_at(&self, field: &mut CoarseField, center: (usize, usize)) -> Result<()> {
        let g = field.grid;
        if g.nxc < BLOCK_SIDE || g.nyc < BLOCK_SIDE {
            return Err(Error::InvalidParameter(format!(
                "coarse grid {}x{} is smaller than the {BLOCK_SIDE}x{BLOCK_SIDE} local block",
                g.nxc, g.nyc
            )));
        }
        let idx: Vec<usize> = (0..BLOCK_LEN)
            .map(|p| {
                let (da, db) = block_offset(p);
                let (a, b) = g.wrap(center.0 as i64 + da, center.1 as i64 + db);
                g.idx(a, b)
            })
            .collect();
        let v = nalgebra::DVector::from_iterator(BLOCK_LEN, idx.iter().map(|&i| field.values[i]));
        let out = &self.factor * v;
        for (p, &i) in idx.iter().enumerate() {
            field.values[i] = out[p];
        }
        Ok(())
    }
}
