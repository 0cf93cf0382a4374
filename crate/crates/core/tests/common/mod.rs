//! Dense brute-force assemblies of the covariance operators on a grid
//! where the coarse grid coincides with the model grid (`c = 1`), so the
//! interpolation is the identity. State vectors are `[eta; hu; hv]` with
//! cell index `k * nx + j`.

#![allow(dead_code)]

use driftcast::filter::precompute::BLOCK_RADIUS;
use driftcast::grid::{ModelGrid, PhysParams};
use driftcast::model_error::{soar_kernel, ErrorParams, C_SOAR};
use driftcast::observation::ObsErrorParams;
use nalgebra::{DMatrix, Matrix2};

pub struct Dense {
    pub grid: ModelGrid,
    pub phys: PhysParams,
    pub params: ErrorParams,
    pub r: ObsErrorParams,
    /// Cells.
    pub n: usize,
    /// Truncated SOAR convolution, `n x n`.
    pub soar: DMatrix<f64>,
    /// Identity on `eta` stacked over the balance operator, `3n x n`.
    pub gb: DMatrix<f64>,
}

fn wrap_delta(d: i64, n: usize) -> i64 {
    let n = n as i64;
    let d = d.rem_euclid(n);
    if d > n / 2 {
        d - n
    } else {
        d
    }
}

impl Dense {
    pub fn new(nx: usize, ny: usize, q0: f64) -> Dense {
        let grid = ModelGrid::new(nx, ny, 11100.0, 11100.0).unwrap();
        let phys = PhysParams::default();
        let params = ErrorParams::new(&grid, q0, 1).unwrap();
        let n = grid.cells();
        let r = C_SOAR as i64;
        let soar = DMatrix::from_fn(n, n, |p, q| {
            let (jp, kp) = ((p % nx) as i64, (p / nx) as i64);
            let (jq, kq) = ((q % nx) as i64, (q / nx) as i64);
            let da = wrap_delta(jq - jp, nx);
            let db = wrap_delta(kq - kp, ny);
            if da.abs() > r || db.abs() > r {
                return 0.0;
            }
            let d = ((da as f64 * grid.dx).powi(2) + (db as f64 * grid.dy).powi(2)).sqrt();
            soar_kernel(d, &params)
        });
        let kappa = phys.g * phys.h_eq / phys.f;
        let mut gb = DMatrix::zeros(3 * n, n);
        for k in 0..ny {
            for j in 0..nx {
                let i = k * nx + j;
                gb[(i, i)] = 1.0;
                let north = ((k + 1) % ny) * nx + j;
                let south = ((k + ny - 1) % ny) * nx + j;
                let east = k * nx + (j + 1) % nx;
                let west = k * nx + (j + nx - 1) % nx;
                gb[(n + i, north)] -= kappa / (2.0 * grid.dy);
                gb[(n + i, south)] += kappa / (2.0 * grid.dy);
                gb[(2 * n + i, east)] += kappa / (2.0 * grid.dx);
                gb[(2 * n + i, west)] -= kappa / (2.0 * grid.dx);
            }
        }
        Dense {
            grid,
            phys,
            params,
            r: ObsErrorParams::default(),
            n,
            soar,
            gb,
        }
    }

    pub fn q_half(&self) -> DMatrix<f64> {
        &self.gb * &self.soar
    }

    pub fn q(&self) -> DMatrix<f64> {
        let h = self.q_half();
        &h * h.transpose()
    }

    /// Picks `(hu, hv)` at `cell`.
    pub fn h(&self, cell: (usize, usize)) -> DMatrix<f64> {
        let i = self.grid.idx(cell.0, cell.1);
        let mut h = DMatrix::zeros(2, 3 * self.n);
        h[(0, self.n + i)] = 1.0;
        h[(1, 2 * self.n + i)] = 1.0;
        h
    }

    pub fn hqht(&self, cell: (usize, usize)) -> DMatrix<f64> {
        let h = self.h(cell);
        &h * self.q() * h.transpose()
    }

    pub fn s(&self, cell: (usize, usize)) -> DMatrix<f64> {
        let m = self.hqht(cell) + DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&self.r.r));
        m.try_inverse().unwrap()
    }

    /// `Q - Q H^T S H Q` for one observed cell.
    pub fn p(&self, cell: (usize, usize)) -> DMatrix<f64> {
        let q = self.q();
        let h = self.h(cell);
        let qht = &q * h.transpose();
        &q - &qht * self.s(cell) * qht.transpose()
    }

    /// Model-grid cells of the 7 x 7 block around `cell`, `x` offset fastest.
    pub fn block_cells(&self, cell: (usize, usize)) -> Vec<usize> {
        let r = BLOCK_RADIUS as i64;
        let mut out = Vec::new();
        for db in -r..=r {
            for da in -r..=r {
                let (j, k) = self.grid.wrap_index(cell.0 as i64 + da, cell.1 as i64 + db);
                out.push(self.grid.idx(j, k));
            }
        }
        out
    }

    /// `I - A^T S A` over the block, with `A = H GB Q_SOAR^{1/2}`.
    pub fn block(&self, cell: (usize, usize)) -> DMatrix<f64> {
        let a = self.h(cell) * &self.gb * &self.soar;
        let cols = self.block_cells(cell);
        let a_loc = DMatrix::from_fn(2, cols.len(), |r, c| a[(r, cols[c])]);
        DMatrix::identity(cols.len(), cols.len()) - a_loc.transpose() * self.s(cell) * &a_loc
    }

    /// Block rows that can differ from the identity given only the
    /// sparsity patterns of `H GB` and the SOAR convolution.
    pub fn structural_block_rows(&self, cell: (usize, usize)) -> usize {
        let hgb = self.h(cell) * &self.gb;
        let cols = self.block_cells(cell);
        cols.iter()
            .filter(|&&c| (0..self.n).any(|m| self.soar[(m, c)] != 0.0 && (0..2).any(|r| hgb[(r, m)] != 0.0)))
            .count()
    }
}

pub fn to_matrix2(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Largest absolute difference relative to the largest entry of `b`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}
