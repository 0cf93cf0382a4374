//! Periodic model grid, the coarse model-error grid and the ocean state.
//!
//! Fields are stored row-major with `j` (x index) running fastest, so the
//! value of cell `(j, k)` lives at `k * nx + j`. Cell `(j, k)` has its
//! center at `((j + 1/2) dx, (k + 1/2) dy)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the rotating shallow-water model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysParams {
    /// Gravitational acceleration (m s^-2).
    pub g: f64,
    /// Coriolis parameter (s^-1), constant over the domain.
    pub f: f64,
    /// Equilibrium depth (m).
    pub h_eq: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            g: 9.806,
            f: 1.405e-4,
            h_eq: 230.0,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::InvalidParameter(format!("g must be positive, got {}", self.g)));
        }
        if !(self.h_eq.is_finite() && self.h_eq > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "equilibrium depth must be positive, got {}",
                self.h_eq
            )));
        }
        if !(self.f.is_finite() && self.f != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Coriolis parameter must be finite and non-zero, got {}",
                self.f
            )));
        }
        Ok(())
    }

    /// Geostrophic factor `g H / f` relating a sea-surface gradient to a
    /// balanced momentum.
    pub fn geostrophic_factor(&self) -> f64 {
        self.g * self.h_eq / self.f
    }
}

/// Doubly periodic uniform grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl ModelGrid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 8x8 cells, got {nx}x{ny}"
            )));
        }
        if nx > u32::MAX as usize || ny > u32::MAX as usize {
            return Err(Error::InvalidParameter("grid dimensions exceed u32".into()));
        }
        if !(dx.is_finite() && dx > 0.0 && dy.is_finite() && dy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cell sizes must be positive, got dx={dx}, dy={dy}"
            )));
        }
        Ok(ModelGrid { nx, ny, dx, dy })
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Dimension of the full state vector (three fields).
    pub fn state_dim(&self) -> usize {
        3 * self.cells()
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    #[inline]
    pub fn idx(&self, j: usize, k: usize) -> usize {
        k * self.nx + j
    }

    pub fn cell_center(&self, j: usize, k: usize) -> (f64, f64) {
        ((j as f64 + 0.5) * self.dx, (k as f64 + 0.5) * self.dy)
    }

    /// Map any integer index pair onto the periodic grid.
    #[inline]
    pub fn wrap_index(&self, j: i64, k: i64) -> (usize, usize) {
        (
            j.rem_euclid(self.nx as i64) as usize,
            k.rem_euclid(self.ny as i64) as usize,
        )
    }

    /// Wrap a physical position into `[0, Lx) x [0, Ly)`.
    pub fn wrap_position(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinitePosition { x, y });
        }
        let (lx, ly) = (self.lx(), self.ly());
        let mut xw = x.rem_euclid(lx);
        let mut yw = y.rem_euclid(ly);
        // rem_euclid can round up to the period itself.
        if xw >= lx {
            xw = 0.0;
        }
        if yw >= ly {
            yw = 0.0;
        }
        Ok((xw, yw))
    }

    /// Cell containing a physical position, after periodic wrapping.
    pub fn locate_cell(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        let (xw, yw) = self.wrap_position(x, y)?;
        let j = ((xw / self.dx).floor() as i64).min(self.nx as i64 - 1);
        let k = ((yw / self.dy).floor() as i64).min(self.ny as i64 - 1);
        Ok((j as usize, k as usize))
    }

    /// Minimal-image displacement `b - a` on the periodic domain.
    pub fn min_image(&self, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        let wrap = |d: f64, l: f64| d - l * (d / l).round();
        (wrap(b.0 - a.0, self.lx()), wrap(b.1 - a.1, self.ly()))
    }
}

/// Coarse grid on which model errors are sampled. Coarse point `(a, b)`
/// coincides with the center of fine cell `(oj + c a, ok + c b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarseGrid {
    pub c: usize,
    pub oj: usize,
    pub ok: usize,
    pub nxc: usize,
    pub nyc: usize,
    pub dxc: f64,
    pub dyc: f64,
}

impl CoarseGrid {
    pub fn new(grid: &ModelGrid, c: usize) -> Result<Self> {
        Self::with_offset(grid, c, 0, 0)
    }

    pub fn with_offset(grid: &ModelGrid, c: usize, oj: usize, ok: usize) -> Result<Self> {
        if c == 0 || c.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("coarsening factor must be odd, got {c}")));
        }
        if !grid.nx.is_multiple_of(c) || !grid.ny.is_multiple_of(c) {
            return Err(Error::InvalidParameter(format!(
                "grid {}x{} is not divisible by coarsening factor {c}",
                grid.nx, grid.ny
            )));
        }
        if oj >= c || ok >= c {
            return Err(Error::InvalidParameter(format!(
                "coarse offset ({oj}, {ok}) must lie in [0, {c})"
            )));
        }
        Ok(CoarseGrid {
            c,
            oj,
            ok,
            nxc: grid.nx / c,
            nyc: grid.ny / c,
            dxc: grid.dx * c as f64,
            dyc: grid.dy * c as f64,
        })
    }

    pub fn points(&self) -> usize {
        self.nxc * self.nyc
    }

    #[inline]
    pub fn idx(&self, a: usize, b: usize) -> usize {
        b * self.nxc + a
    }

    #[inline]
    pub fn wrap(&self, a: i64, b: i64) -> (usize, usize) {
        (
            a.rem_euclid(self.nxc as i64) as usize,
            b.rem_euclid(self.nyc as i64) as usize,
        )
    }

    /// Fine cell co-located with coarse point `(a, b)`.
    pub fn fine_cell(&self, a: usize, b: usize) -> (usize, usize) {
        (self.oj + self.c * a, self.ok + self.c * b)
    }

    /// Coarse point co-located with a fine cell, if any.
    pub fn coarse_point_of(&self, j: usize, k: usize) -> Option<(usize, usize)> {
        let (dj, dk) = (j as i64 - self.oj as i64, k as i64 - self.ok as i64);
        let c = self.c as i64;
        if dj.rem_euclid(c) == 0 && dk.rem_euclid(c) == 0 {
            Some(self.wrap(dj.div_euclid(c), dk.div_euclid(c)))
        } else {
            None
        }
    }

    /// Nearest coarse point to a fine cell.
    pub fn nearest_point(&self, j: usize, k: usize) -> (usize, usize) {
        let c = self.c as f64;
        let a = ((j as f64 - self.oj as f64) / c).round() as i64;
        let b = ((k as f64 - self.ok as f64) / c).round() as i64;
        self.wrap(a, b)
    }

    /// Same coarse lattice shifted so that fine cell `(j, k)` is a coarse point.
    pub fn aligned_to(&self, j: usize, k: usize) -> CoarseGrid {
        CoarseGrid {
            oj: j % self.c,
            ok: k % self.c,
            ..*self
        }
    }
}

/// A field on the coarse grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseField {
    pub grid: CoarseGrid,
    pub values: Vec<f64>,
}

impl CoarseField {
    pub fn zeros(grid: CoarseGrid) -> Self {
        CoarseField {
            values: vec![0.0; grid.points()],
            grid,
        }
    }

    #[inline]
    pub fn get(&self, a: i64, b: i64) -> f64 {
        let (a, b) = self.grid.wrap(a, b);
        self.values[self.grid.idx(a, b)]
    }

    pub fn dot(&self, other: &CoarseField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

/// Prognostic fields: surface elevation and the two volume transports.
#[derive(Clone, Debug, PartialEq)]
pub struct OceanState {
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub eta: Vec<f32>,
    pub hu: Vec<f32>,
    pub hv: Vec<f32>,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"DCST";
const SNAPSHOT_VERSION: u32 = 1;

impl OceanState {
    pub fn zeros(grid: &ModelGrid) -> Self {
        let n = grid.cells();
        OceanState {
            nx: grid.nx,
            ny: grid.ny,
            t: 0.0,
            eta: vec![0.0; n],
            hu: vec![0.0; n],
            hv: vec![0.0; n],
        }
    }

    pub fn check_grid(&self, grid: &ModelGrid) -> Result<()> {
        let n = grid.cells();
        if self.nx != grid.nx
            || self.ny != grid.ny
            || self.eta.len() != n
            || self.hu.len() != n
            || self.hv.len() != n
        {
            return Err(Error::InvalidParameter(format!(
                "state shape {}x{} does not match grid {}x{}",
                self.nx, self.ny, grid.nx, grid.ny
            )));
        }
        Ok(())
    }

    /// Reject states with a non-positive water column anywhere.
    pub fn check_wet(&self, phys: &PhysParams) -> Result<()> {
        for (i, &e) in self.eta.iter().enumerate() {
            let depth = phys.h_eq + e as f64;
            if !(depth > 0.0) {
                return Err(Error::DryCell {
                    j: i % self.nx,
                    k: i / self.nx,
                    depth,
                });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.eta
            .iter()
            .chain(&self.hu)
            .chain(&self.hv)
            .all(|v| v.is_finite())
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.nx as u32).to_le_bytes())?;
        w.write_all(&(self.ny as u32).to_le_bytes())?;
        w.write_all(&self.t.to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * 3 * self.eta.len());
        for field in [&self.eta, &self.hu, &self.hv] {
            for v in field.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format("not a state snapshot (bad magic)".into()));
        }
        let mut u = [0u8; 4];
        r.read_exact(&mut u)?;
        let version = u32::from_le_bytes(u);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        r.read_exact(&mut u)?;
        let nx = u32::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let ny = u32::from_le_bytes(u) as usize;
        let mut t8 = [0u8; 8];
        r.read_exact(&mut t8)?;
        let t = f64::from_le_bytes(t8);
        let n = nx
            .checked_mul(ny)
            .ok_or_else(|| Error::Format("snapshot dimensions overflow".into()))?;
        let mut bytes = vec![0u8; 12 * n];
        r.read_exact(&mut bytes)?;
        let field = |s: &[u8]| -> Vec<f32> {
            s.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        };
        Ok(OceanState {
            nx,
            ny,
            t,
            eta: field(&bytes[..4 * n]),
            hu: field(&bytes[4 * n..8 * n]),
            hv: field(&bytes[8 * n..]),
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_snapshot(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(f))
    }
}
