//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator seeded from the run seed and
//! placed on its own stream id derived from the particle index and a
//! purpose tag, so results do not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ModelError = 1,
    Filter = 2,
    Truth = 3,
    ObservationNoise = 4,
    Diagnostics = 5,
}

/// Create the stream for `(seed, index, purpose)`.
pub fn stream(seed: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 8) | purpose as u64);
    rng
}

pub fn fill_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// The two streams owned by one ensemble member.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleRng {
    pub model_error: ChaCha8Rng,
    pub filter: ChaCha8Rng,
}

impl ParticleRng {
    pub fn new(seed: u64, particle: u64) -> Self {
        ParticleRng {
            model_error: stream(seed, particle, Purpose::ModelError),
            filter: stream(seed, particle, Purpose::Filter),
        }
    }

    /// Word positions of both streams, enough to resume exactly.
    pub fn positions(&self) -> (u128, u128) {
        (self.model_error.get_word_pos(), self.filter.get_word_pos())
    }

    pub fn restore(seed: u64, particle: u64, positions: (u128, u128)) -> Self {
        let mut r = Self::new(seed, particle);
        r.model_error.set_word_pos(positions.0);
        r.filter.set_word_pos(positions.1);
        r
    }
}

/// One line per particle: `index model_error_pos filter_pos`.
pub fn format_positions(rngs: &[ParticleRng]) -> String {
    let mut s = String::new();
    for (i, r) in rngs.iter().enumerate() {
        let (a, b) = r.positions();
        s.push_str(&format!("{i} {a} {b}\n"));
    }
    s
}

pub fn parse_positions(seed: u64, text: &str) -> Result<Vec<ParticleRng>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Format(format!("rng state line {}: {line:?}", line_no + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let i: usize = parts[0].parse().map_err(|_| bad())?;
        let a: u128 = parts[1].parse().map_err(|_| bad())?;
        let b: u128 = parts[2].parse().map_err(|_| bad())?;
        if i != out.len() {
            return Err(bad());
        }
        out.push(ParticleRng::restore(seed, i as u64, (a, b)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_differ_by_index_and_purpose() {
        let a: u64 = stream(7, 0, Purpose::ModelError).random();
        let b: u64 = stream(7, 1, Purpose::ModelError).random();
        let c: u64 = stream(7, 0, Purpose::Filter).random();
        let d: u64 = stream(7, 0, Purpose::ModelError).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, d);
    }

    #[test]
    fn positions_round_trip() {
        let mut rngs: Vec<_> = (0..3).map(|i| ParticleRng::new(11, i)).collect();
        for (i, r) in rngs.iter_mut().enumerate() {
            for _ in 0..(5 + i) {
                let _ = normal(&mut r.model_error);
            }
            let _ = normal(&mut r.filter);
        }
        let text = format_positions(&rngs);
        let mut back = parse_positions(11, &text).unwrap();
        for (a, b) in rngs.iter_mut().zip(back.iter_mut()) {
            assert_eq!(normal(&mut a.model_error), normal(&mut b.model_error));
            assert_eq!(normal(&mut a.filter), normal(&mut b.filter));
        }
    }
}
