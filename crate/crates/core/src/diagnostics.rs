//! Verification statistics: rank histograms, drifter forecast errors and
//! the weight-collapse experiment of the standard particle filter.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ensemble::TrajectoryTable;
use crate::error::{Error, Result};
use crate::filter::sir::{count_significant, standard_pf_weights};
use crate::grid::{ModelGrid, OceanState, PhysParams};
use crate::observation::{ObsErrorParams, ObservationRecord};
use crate::rng::normal;

/// Rank of `truth` among the ensemble values after each one is perturbed
/// with `N(0, r)`: the number strictly below, ties split by a fair coin.
pub fn compute_rank(truth: f64, ensemble: &[f64], r: f64, rng: &mut ChaCha8Rng) -> usize {
    let sd = r.sqrt();
    let mut rank = 0;
    for v in ensemble {
        let p = v + sd * normal(rng);
        if p < truth || (p == truth && rand::Rng::random::<bool>(rng)) {
            rank += 1;
        }
    }
    rank
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankHistogram {
    /// `N_e + 1` bins.
    pub counts: Vec<u64>,
}

impl RankHistogram {
    pub fn new(n_e: usize) -> Self {
        RankHistogram {
            counts: vec![0; n_e + 1],
        }
    }

    pub fn add(&mut self, rank: usize) {
        self.counts[rank] += 1;
    }

    pub fn merge(&mut self, other: &RankHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Pearson statistic against the uniform histogram and its p-value.
    pub fn chi_square(&self) -> Result<(f64, f64)> {
        let n = self.total() as f64;
        let bins = self.counts.len();
        if n == 0.0 || bins < 2 {
            return Err(Error::InvalidParameter("empty rank histogram".into()));
        }
        let expected = n / bins as f64;
        let stat: f64 = self
            .counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let dist = ChiSquared::new((bins - 1) as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok((stat, dist.sf(stat)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "rank,count")?;
        for (r, c) in self.counts.iter().enumerate() {
            writeln!(w, "{r},{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub e: Vec<f64>,
    pub rmse: Vec<f64>,
}

impl ErrorSeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,E,RMSE")?;
        for i in 0..self.times.len() {
            writeln!(w, "{},{},{}", self.times[i], self.e[i], self.rmse[i])?;
        }
        Ok(())
    }

    /// Value of `E` at `t`.
    pub fn e_at(&self, t: f64) -> Result<f64> {
        self.times
            .iter()
            .position(|s| (s - t).abs() < 1e-6)
            .map(|i| self.e[i])
            .ok_or_else(|| Error::TimeGridMismatch(format!("no forecast output at {t}")))
    }
}

/// `E(t)`: root of the drifter-mean of the particle-mean squared distance to
/// the true drifter. `RMSE(t)`: the same with the ensemble-mean position in
/// place of the truth. Distances are minimal-image on the periodic domain.
pub fn forecast_error(forecast: &TrajectoryTable, truth: &TrajectoryTable, grid: &ModelGrid) -> Result<ErrorSeries> {
    if truth.n_particles != 1 {
        return Err(Error::InvalidParameter("truth table must hold a single member".into()));
    }
    if forecast.times.len() != truth.times.len()
        || forecast.times.iter().zip(&truth.times).any(|(a, b)| (a - b).abs() > 1e-6)
    {
        return Err(Error::TimeGridMismatch("forecast and truth output times differ".into()));
    }
    if forecast.n_drifters != truth.n_drifters || forecast.n_particles == 0 || forecast.n_drifters == 0 {
        return Err(Error::InvalidParameter("forecast and truth drifter sets differ".into()));
    }
    let np = forecast.n_particles as f64;
    let nd = forecast.n_drifters as f64;
    let mut out = ErrorSeries {
        times: forecast.times.clone(),
        e: Vec::new(),
        rmse: Vec::new(),
    };
    for ti in 0..forecast.times.len() {
        let (mut e_sum, mut r_sum) = (0.0, 0.0);
        for d in 0..forecast.n_drifters {
            let tp = truth.at(ti, 0, d);
            if forecast.at(ti, 0, d).id != tp.id {
                return Err(Error::InvalidParameter("forecast and truth drifter ids differ".into()));
            }
            let t_pos = tp.unwrapped(grid);
            let disp: Vec<(f64, f64)> = (0..forecast.n_particles)
                .map(|p| grid.min_image(t_pos, forecast.at(ti, p, d).unwrapped(grid)))
                .collect();
            let mx = disp.iter().map(|v| v.0).sum::<f64>() / np;
            let my = disp.iter().map(|v| v.1).sum::<f64>() / np;
            e_sum += disp.iter().map(|v| v.0 * v.0 + v.1 * v.1).sum::<f64>() / np;
            r_sum += disp.iter().map(|v| (v.0 - mx).powi(2) + (v.1 - my).powi(2)).sum::<f64>() / np;
        }
        out.e.push((e_sum / nd).sqrt());
        out.rmse.push((r_sum / nd).sqrt());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapseRow {
    pub n_obs: usize,
    pub r_scale: f64,
    pub mean_count: f64,
}

/// For each subset size and observation-error scaling, the mean number of
/// particles whose standard filter weight reaches `1/N_e`, over `trials`
/// random subsets of the platforms in `obs`.
#[allow(clippy::too_many_arguments)]
pub fn collapse_experiment(
    ensemble: &[OceanState],
    obs: &[&ObservationRecord],
    sizes: &[usize],
    trials: usize,
    r_scales: &[f64],
    r: &ObsErrorParams,
    phys: &PhysParams,
    grid: &ModelGrid,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CollapseRow>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let mut out = Vec::new();
    for &n in sizes {
        if n > obs.len() {
            return Err(Error::InvalidParameter(format!(
                "subset of {n} platforms requested but only {} observed",
                obs.len()
            )));
        }
        let subsets: Vec<Vec<&ObservationRecord>> = (0..trials)
            .map(|_| {
                let mut idx = sample(rng, obs.len(), n).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| obs[i]).collect()
            })
            .collect();
        for &scale in r_scales {
            let rs = r.scaled(scale);
            let mut total = 0usize;
            for sub in &subsets {
                let w = standard_pf_weights(ensemble, sub, &rs, phys, grid)?;
                total += count_significant(&w);
            }
            out.push(CollapseRow {
                n_obs: n,
                r_scale: scale,
                mean_count: total as f64 / trials as f64,
            });
        }
    }
    Ok(out)
}

pub fn write_collapse_csv<W: Write>(rows: &[CollapseRow], mut w: W) -> Result<()> {
    writeln!(w, "n_obs,R_scale,mean_count")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.n_obs, r.r_scale, r.mean_count)?;
    }
    Ok(())
}

/// Write into `path` through a buffered writer.
pub fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::{Drifter, PlatformKind};
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;

    #[test]
    fn rank_extremes() {
        let mut rng = stream(1, 0, Purpose::Diagnostics);
        let ens = vec![0.0; 10];
        assert_eq!(compute_rank(-1e6, &ens, 1.0, &mut rng), 0);
        assert_eq!(compute_rank(1e6, &ens, 1.0, &mut rng), 10);
    }

    #[test]
    fn ties_are_split() {
        let mut rng = stream(1, 0, Purpose::Diagnostics);
        let ens = vec![0.0; 1000];
        let r = compute_rank(0.0, &ens, 0.0, &mut rng);
        assert!(r > 400 && r < 600, "{r}");
    }

    #[test]
    fn exchangeable_draws_give_flat_histogram() {
        let mut rng = stream(2, 0, Purpose::Diagnostics);
        let n_e = 20;
        let mut h = RankHistogram::new(n_e);
        let mut ens = vec![0.0; n_e];
        for _ in 0..100_000 {
            for v in ens.iter_mut() {
                *v = normal(&mut rng);
            }
            let truth = normal(&mut rng) + normal(&mut rng);
            h.add(compute_rank(truth, &ens, 1.0, &mut rng));
        }
        let (_, p) = h.chi_square().unwrap();
        assert!(p > 1e-3, "p = {p}");
    }

    #[test]
    fn underdispersed_ensemble_fails_uniformity() {
        let mut rng = stream(3, 0, Purpose::Diagnostics);
        let mut h = RankHistogram::new(10);
        for _ in 0..10_000 {
            let ens: Vec<f64> = (0..10).map(|_| 0.1 * normal(&mut rng)).collect();
            let truth = 3.0 * normal(&mut rng);
            h.add(compute_rank(truth, &ens, 0.0, &mut rng));
        }
        assert!(h.chi_square().unwrap().1 < 1e-3);
    }

    fn grid() -> ModelGrid {
        ModelGrid::new(100, 60, 1000.0, 1000.0).unwrap()
    }

    fn table(times: usize, pos: &[(f64, f64)], n_p: usize) -> TrajectoryTable {
        let n_d = pos.len() / n_p;
        let mut positions = Vec::new();
        for _ in 0..times {
            for (i, &(x, y)) in pos.iter().enumerate() {
                positions.push(Drifter::new((i % n_d) as u32, x, y));
            }
        }
        TrajectoryTable {
            times: (0..times).map(|t| t as f64 * 900.0).collect(),
            n_particles: n_p,
            n_drifters: n_d,
            positions,
        }
    }

    #[test]
    fn error_examples() {
        let g = grid();
        let truth = table(2, &[(5000.0, 5000.0)], 1);
        let exact = table(2, &[(5000.0, 5000.0), (5000.0, 5000.0)], 2);
        let s = forecast_error(&exact, &truth, &g).unwrap();
        assert_eq!(s.e, vec![0.0, 0.0]);
        assert_eq!(s.rmse, vec![0.0, 0.0]);
        let split = table(2, &[(4000.0, 5000.0), (6000.0, 5000.0)], 2);
        let s = forecast_error(&split, &truth, &g).unwrap();
        assert!((s.e[0] - 1000.0).abs() < 1e-9);
        assert!((s.rmse[0] - 1000.0).abs() < 1e-9);
        let short = table(3, &[(5000.0, 5000.0)], 1);
        assert!(forecast_error(&exact, &short, &g).is_err());
    }

    #[test]
    fn error_across_the_seam() {
        let g = grid();
        let truth = table(1, &[(99_500.0, 5000.0)], 1);
        let f = table(1, &[(500.0, 5000.0), (500.0, 5000.0)], 2);
        let s = forecast_error(&f, &truth, &g).unwrap();
        assert!((s.e[0] - 1000.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn error_is_translation_invariant_and_bounded(
            pts in proptest::collection::vec((0.0f64..100_000.0, 0.0f64..60_000.0), 3..8),
            shift in (0.0f64..100_000.0, 0.0f64..60_000.0),
        ) {
            let g = grid();
            let truth = table(1, &pts[..1], 1);
            let f = table(1, &pts[1..], pts.len() - 1);
            let a = forecast_error(&f, &truth, &g).unwrap();
            let mv = |v: &[(f64, f64)]| -> Vec<(f64, f64)> {
                v.iter().map(|p| g.wrap_position(p.0 + shift.0, p.1 + shift.1).unwrap()).collect()
            };
            let b = forecast_error(&table(1, &mv(&pts[1..]), pts.len() - 1), &table(1, &mv(&pts[..1]), 1), &g).unwrap();
            prop_assert!((a.e[0] - b.e[0]).abs() < 1e-6 * (1.0 + a.e[0]));
            prop_assert!((a.rmse[0] - b.rmse[0]).abs() < 1e-6 * (1.0 + a.rmse[0]));
            prop_assert!(a.rmse[0] <= a.e[0] + 1e-9);
        }
    }

    #[test]
    fn collapse_shapes() {
        let g = grid();
        let phys = PhysParams::default();
        let mut rng = stream(5, 0, Purpose::Diagnostics);
        let ens: Vec<OceanState> = (0..10)
            .map(|i| {
                let mut s = OceanState::zeros(&g);
                s.hu.iter_mut().for_each(|v| *v = i as f32 * 0.7);
                s
            })
            .collect();
        let recs: Vec<ObservationRecord> = (0..6)
            .map(|i| ObservationRecord {
                time: 0.0,
                kind: PlatformKind::Drifter,
                id: i,
                x: 1000.0 * (10 * i + 5) as f64,
                y: 30_500.0,
                y_hu: 3.0,
                y_hv: 0.0,
            })
            .collect();
        let obs: Vec<&ObservationRecord> = recs.iter().collect();
        let r = ObsErrorParams::default();
        let rows = collapse_experiment(&ens, &obs, &[0, 1, 3, 6], 5, &[1.0, 10.0], &r, &phys, &g, &mut rng).unwrap();
        assert_eq!(rows[0].mean_count, 10.0);
        for pair in rows.chunks(2) {
            assert!(pair[1].mean_count >= pair[0].mean_count);
        }
        let r1: Vec<f64> = rows.iter().filter(|r| r.r_scale == 1.0).map(|r| r.mean_count).collect();
        assert!(r1.windows(2).all(|w| w[1] <= w[0]));
        assert!(collapse_experiment(&ens, &obs, &[7], 1, &[1.0], &r, &phys, &g, &mut rng).is_err());
        let mut buf = Vec::new();
        write_collapse_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n_obs,R_scale,mean_count\n0,1,10\n"));
    }
}
