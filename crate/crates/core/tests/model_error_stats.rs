//! Sampling statistics of the model-error generator.

mod common;

use common::Dense;
use driftcast::grid::{CoarseGrid, ModelGrid};
use driftcast::model_error::{apply_q_half, sample_xi};
use driftcast::rng::{stream, Purpose};
use nalgebra::DMatrix;

#[test]
fn white_noise_has_unit_variance() {
    let grid = ModelGrid::new(100, 100, 1.0, 1.0).unwrap();
    let coarse = CoarseGrid::new(&grid, 1).unwrap();
    let mut rng = stream(11, 0, Purpose::ModelError);
    let (mut sum, mut sq, mut n) = (0.0, 0.0, 0.0);
    for _ in 0..100 {
        for v in sample_xi(&mut rng, coarse).values {
            sum += v;
            sq += v * v;
            n += 1.0;
        }
    }
    assert_eq!(n, 1e6);
    let mean = sum / n;
    let var = sq / n - mean * mean;
    assert!(mean.abs() < 5e-3, "mean {mean}");
    assert!((var - 1.0).abs() < 1e-2, "variance {var}");
}

#[test]
fn empirical_covariance_matches_q() {
    let d = Dense::new(20, 12, 2.5e-4);
    let q = d.q();
    let rows = [d.grid.idx(0, 0), d.grid.idx(7, 5)];
    let m = 3 * d.n;
    let draws = 10_000;
    let mut acc = DMatrix::<f64>::zeros(rows.len() * 3, m);
    let mut rng = stream(12, 0, Purpose::ModelError);
    for _ in 0..draws {
        let inc = apply_q_half(&sample_xi(&mut rng, d.params.coarse), &d.params, &d.phys, &d.grid);
        let x: Vec<f64> = inc.eta.iter().chain(&inc.hu).chain(&inc.hv).copied().collect();
        for (r, &cell) in rows.iter().enumerate() {
            for f in 0..3 {
                let xa = x[f * d.n + cell];
                for (c, xb) in x.iter().enumerate() {
                    acc[(3 * r + f, c)] += xa * xb;
                }
            }
        }
    }
    acc /= draws as f64;
    for (r, &cell) in rows.iter().enumerate() {
        for f in 0..3 {
            let row = f * d.n + cell;
            for g in 0..3 {
                // Scale by the variances of the two fields involved.
                let scale = (q[(row, row)] * q[(g * d.n + cell, g * d.n + cell)]).sqrt();
                for c in g * d.n..(g + 1) * d.n {
                    let err = (acc[(3 * r + f, c)] - q[(row, c)]).abs() / scale;
                    assert!(err < 0.08, "entry ({row}, {c}): {} vs {}", acc[(3 * r + f, c)], q[(row, c)]);
                }
            }
        }
    }
}
