//! Drifters, moorings and synthetic observations.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ModelGrid, OceanState, PhysParams};
use crate::rng::normal;

/// A passive Lagrangian tracer. `(x, y)` is kept inside the domain and the
/// winding counts record how many times it crossed the periodic seams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drifter {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub wind_x: i64,
    pub wind_y: i64,
}

impl Drifter {
    pub fn new(id: u32, x: f64, y: f64) -> Self {
        Drifter {
            id,
            x,
            y,
            wind_x: 0,
            wind_y: 0,
        }
    }

    /// Position with the seam crossings undone.
    pub fn unwrapped(&self, grid: &ModelGrid) -> (f64, f64) {
        (
            self.x + self.wind_x as f64 * grid.lx(),
            self.y + self.wind_y as f64 * grid.ly(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlatformKind {
    Drifter,
    Mooring,
}

impl fmt::Display for PlatformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlatformKind::Drifter => "drifter",
            PlatformKind::Mooring => "mooring",
        })
    }
}

impl FromStr for PlatformKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drifter" => Ok(PlatformKind::Drifter),
            "mooring" => Ok(PlatformKind::Mooring),
            other => Err(Error::Format(format!("unknown platform kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationRecord {
    pub time: f64,
    pub kind: PlatformKind,
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub y_hu: f64,
    pub y_hv: f64,
}

impl ObservationRecord {
    pub fn y(&self) -> [f64; 2] {
        [self.y_hu, self.y_hv]
    }
}

/// Diagonal observation-error variances for one platform's transport pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsErrorParams {
    pub r: [f64; 2],
}

impl Default for ObsErrorParams {
    fn default() -> Self {
        ObsErrorParams { r: [1.0, 1.0] }
    }
}

impl ObsErrorParams {
    pub fn validate(&self) -> Result<()> {
        if !self.r.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "observation variances must be positive, got {:?}",
                self.r
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ObsErrorParams {
            r: [self.r[0] * factor, self.r[1] * factor],
        }
    }

    fn noise(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        [self.r[0].sqrt() * normal(rng), self.r[1].sqrt() * normal(rng)]
    }
}

fn cell_velocity(state: &OceanState, grid: &ModelGrid, phys: &PhysParams, x: f64, y: f64) -> Result<(f64, f64)> {
    let (j, k) = grid.locate_cell(x, y)?;
    let i = grid.idx(j, k);
    let h = phys.h_eq + state.eta[i] as f64;
    if !(h > 0.0) {
        return Err(Error::DryCell { j, k, depth: h });
    }
    Ok((state.hu[i] as f64 / h, state.hv[i] as f64 / h))
}

/// Forward Euler step with the velocity of the containing cell.
pub fn advect_drifters(
    state: &OceanState,
    drifters: &mut [Drifter],
    dt: f64,
    phys: &PhysParams,
    grid: &ModelGrid,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("advection step must be positive, got {dt}")));
    }
    for d in drifters.iter_mut() {
        let (u, v) = cell_velocity(state, grid, phys, d.x, d.y)?;
        let nx = d.x + dt * u;
        let ny = d.y + dt * v;
        let (wx, wy) = grid.wrap_position(nx, ny)?;
        d.wind_x += ((nx - wx) / grid.lx()).round() as i64;
        d.wind_y += ((ny - wy) / grid.ly()).round() as i64;
        d.x = wx;
        d.y = wy;
    }
    Ok(())
}

/// The observation operator: cell values of `(hu, hv)` at a position.
pub fn observe_state(state: &OceanState, x: f64, y: f64, grid: &ModelGrid) -> Result<[f64; 2]> {
    let (j, k) = grid.locate_cell(x, y)?;
    let i = grid.idx(j, k);
    Ok([state.hu[i] as f64, state.hv[i] as f64])
}

/// Transport implied by the displacement between two drifter fixes.
#[allow(clippy::too_many_arguments)]
pub fn observe_drifter(
    prev: &Drifter,
    cur: &Drifter,
    dt_obs: f64,
    time: f64,
    phys: &PhysParams,
    grid: &ModelGrid,
    r: &ObsErrorParams,
    rng: &mut ChaCha8Rng,
) -> Result<ObservationRecord> {
    if !(dt_obs > 0.0) {
        return Err(Error::InvalidParameter(format!("observation interval must be positive, got {dt_obs}")));
    }
    let (dx, dy) = grid.min_image((prev.x, prev.y), (cur.x, cur.y));
    let e = r.noise(rng);
    Ok(ObservationRecord {
        time,
        kind: PlatformKind::Drifter,
        id: cur.id,
        x: cur.x,
        y: cur.y,
        y_hu: dx / dt_obs * phys.h_eq + e[0],
        y_hv: dy / dt_obs * phys.h_eq + e[1],
    })
}

/// Fixed-point measurement of the depth-normalized transport.
#[allow(clippy::too_many_arguments)]
pub fn observe_mooring(
    truth: &OceanState,
    id: u32,
    x: f64,
    y: f64,
    time: f64,
    phys: &PhysParams,
    grid: &ModelGrid,
    r: &ObsErrorParams,
    rng: &mut ChaCha8Rng,
) -> Result<ObservationRecord> {
    let (j, k) = grid.locate_cell(x, y)?;
    let i = grid.idx(j, k);
    let scale = phys.h_eq / (phys.h_eq + truth.eta[i] as f64);
    let e = r.noise(rng);
    Ok(ObservationRecord {
        time,
        kind: PlatformKind::Mooring,
        id,
        x,
        y,
        y_hu: truth.hu[i] as f64 * scale + e[0],
        y_hv: truth.hv[i] as f64 * scale + e[1],
    })
}

/// Innovation with the observation rescaled by the particle's own depth.
pub fn innovation(particle: &OceanState, obs: &ObservationRecord, phys: &PhysParams, grid: &ModelGrid) -> Result<[f64; 2]> {
    let (j, k) = grid.locate_cell(obs.x, obs.y)?;
    let i = grid.idx(j, k);
    let scale = (phys.h_eq + particle.eta[i] as f64) / phys.h_eq;
    Ok([
        obs.y_hu * scale - particle.hu[i] as f64,
        obs.y_hv * scale - particle.hv[i] as f64,
    ])
}

/// `n_x` by `n_y` positions at `((i + 1/2) Lx / n_x, (m + 1/2) Ly / n_y)`,
/// numbered with `i` running fastest.
pub fn lattice(n_x: usize, n_y: usize, grid: &ModelGrid) -> Vec<(u32, f64, f64)> {
    let mut out = Vec::with_capacity(n_x * n_y);
    for m in 0..n_y {
        for i in 0..n_x {
            out.push((
                (m * n_x + i) as u32,
                (i as f64 + 0.5) * grid.lx() / n_x as f64,
                (m as f64 + 0.5) * grid.ly() / n_y as f64,
            ));
        }
    }
    out
}

/// Which platforms an experiment assimilates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsSelector {
    AllDrifters,
    Drifters(Vec<u32>),
    AllMoorings,
    WestMoorings,
    SouthMoorings,
    None,
}

impl ObsSelector {
    pub fn accepts(&self, rec: &ObservationRecord, grid: &ModelGrid) -> bool {
        match self {
            ObsSelector::AllDrifters => rec.kind == PlatformKind::Drifter,
            ObsSelector::Drifters(ids) => rec.kind == PlatformKind::Drifter && ids.contains(&rec.id),
            ObsSelector::AllMoorings => rec.kind == PlatformKind::Mooring,
            ObsSelector::WestMoorings => rec.kind == PlatformKind::Mooring && rec.x < grid.lx() / 2.0,
            ObsSelector::SouthMoorings => rec.kind == PlatformKind::Mooring && rec.y < grid.ly() / 2.0,
            ObsSelector::None => false,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            ObsSelector::None => true,
            ObsSelector::Drifters(ids) => ids.is_empty(),
            _ => false,
        }
    }
}

impl fmt::Display for ObsSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObsSelector::AllDrifters => f.write_str("drifters"),
            ObsSelector::Drifters(ids) => {
                let s: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(f, "drifters:{}", s.join("+"))
            }
            ObsSelector::AllMoorings => f.write_str("moorings"),
            ObsSelector::WestMoorings => f.write_str("west-moorings"),
            ObsSelector::SouthMoorings => f.write_str("south-moorings"),
            ObsSelector::None => f.write_str("none"),
        }
    }
}

impl FromStr for ObsSelector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "drifters" => ObsSelector::AllDrifters,
            "moorings" => ObsSelector::AllMoorings,
            "west-moorings" => ObsSelector::WestMoorings,
            "south-moorings" => ObsSelector::SouthMoorings,
            "none" => ObsSelector::None,
            other => {
                let ids = other
                    .strip_prefix("drifters:")
                    .ok_or_else(|| Error::Format(format!("unknown observation selector {other:?}")))?;
                let ids = ids
                    .split('+')
                    .filter(|p| !p.is_empty())
                    .map(|p| p.parse::<u32>().map_err(|_| Error::Format(format!("bad drifter id {p:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                ObsSelector::Drifters(ids)
            }
        })
    }
}

/// Times are multiples of the model step; this tolerance only absorbs
/// decimal round trips.
pub fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()))
}

/// Records at time `t` accepted by `selector`, ordered by platform.
pub fn records_at<'a>(
    records: &'a [ObservationRecord],
    t: f64,
    selector: &ObsSelector,
    grid: &ModelGrid,
) -> Vec<&'a ObservationRecord> {
    let mut out: Vec<&ObservationRecord> = records
        .iter()
        .filter(|r| same_time(r.time, t) && selector.accepts(r, grid))
        .collect();
    out.sort_by_key(|r| (r.kind, r.id));
    out
}

pub fn format_record(r: &ObservationRecord) -> String {
    format!("{},{},{},{},{},{},{}", r.time, r.kind, r.id, r.x, r.y, r.y_hu, r.y_hv)
}

pub fn write_observations<W: Write>(mut w: W, records: &[ObservationRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{}", format_record(r))?;
    }
    Ok(())
}

pub fn parse_record(line: &str) -> Result<ObservationRecord> {
    let parts: Vec<&str> = line.trim().split(',').collect();
    if parts.len() != 7 {
        return Err(Error::Format(format!("expected 7 fields, got {}: {line:?}", parts.len())));
    }
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s.parse().map_err(|_| Error::Format(format!("bad number {s:?}")))?;
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite value {s:?}")));
        }
        Ok(v)
    };
    Ok(ObservationRecord {
        time: num(parts[0])?,
        kind: parts[1].parse()?,
        id: parts[2].parse().map_err(|_| Error::Format(format!("bad id {:?}", parts[2])))?,
        x: num(parts[3])?,
        y: num(parts[4])?,
        y_hu: num(parts[5])?,
        y_hv: num(parts[6])?,
    })
}

pub fn read_observations<R: BufRead>(r: R) -> Result<Vec<ObservationRecord>> {
    let mut out: Vec<ObservationRecord> = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        if let Some(last) = out.last() {
            if rec.time < last.time {
                return Err(Error::Format(format!("line {}: time goes backwards", n + 1)));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_observations(path: &std::path::Path) -> Result<Vec<ObservationRecord>> {
    let f = std::fs::File::open(path)?;
    read_observations(std::io::BufReader::new(f))
}

pub fn save_observations(path: &std::path::Path, records: &[ObservationRecord]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_observations(&mut w, records)?;
    w.flush()?;
    Ok(())
}
