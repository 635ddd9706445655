//! Structurally random sensing matrix `Φ = R ∘ T ∘ D`.
//!
//! `D` flips signs with i.i.d. ±1 entries, `T` is the orthonormal 2D DCT-II
//! of the image in its native shape and `R` keeps `m` distinct rows drawn
//! uniformly without replacement. Rows of `Φ` are orthonormal, so `ΦΦᵗ = I`.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`: the `n` signs are
//! drawn first (one `bool` each), then the row subset via
//! `rand::seq::index::sample`, which is then sorted.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::Dct2;

#[derive(Debug, Clone)]
pub struct SensingOperator {
    height: usize,
    width: usize,
    seed: u64,
    signs: Vec<f64>,
    rows: Vec<usize>,
    dct: Dct2,
}

impl SensingOperator {
    pub fn new(height: usize, width: usize, m: usize, seed: u64) -> Result<Self> {
        let n = height * width;
        if n == 0 {
            return Err(Error::InvalidParameter("empty sensing grid".into()));
        }
        if m == 0 || m > n {
            return Err(Error::InvalidParameter(format!(
                "measurement count must satisfy 1 <= m <= n (m={m}, n={n})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut rows = index::sample(&mut rng, n, m).into_vec();
        rows.sort_unstable();
        Ok(Self {
            height,
            width,
            seed,
            signs,
            rows,
            dct: Dct2::new(height, width),
        })
    }

    /// Measurement count for a CS ratio: `round(ratio * n)`, at least 1.
    pub fn measurement_count(n: usize, cs_ratio: f64) -> Result<usize> {
        if !(cs_ratio > 0.0 && cs_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cs_ratio must lie in (0, 1], got {cs_ratio}"
            )));
        }
        Ok(((cs_ratio * n as f64).round() as usize).clamp(1, n))
    }

    pub fn n(&self) -> usize {
        self.signs.len()
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// `Φ x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::dims(self.n(), x.len()));
        }
        let mut buf: Vec<f64> = x.iter().zip(&self.signs).map(|(v, s)| v * s).collect();
        self.dct.forward(&mut buf);
        Ok(self.rows.iter().map(|&r| buf[r]).collect())
    }

    /// `Φᵗ y`.
    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.m() {
            return Err(Error::dims(self.m(), y.len()));
        }
        let mut buf = vec![0.0; self.n()];
        for (&r, &v) in self.rows.iter().zip(y) {
            buf[r] = v;
        }
        self.dct.inverse(&mut buf);
        for (v, s) in buf.iter_mut().zip(&self.signs) {
            *v *= s;
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn zero_maps_to_zero() {
        let op = SensingOperator::new(8, 8, 20, 3).unwrap();
        assert!(op.apply(&[0.0; 64]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_sampling_is_isometric() {
        let op = SensingOperator::new(8, 16, 128, 11).unwrap();
        let x: Vec<f64> = (0..128).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
        let y = op.apply(&x).unwrap();
        assert!((linalg::norm(&y) - linalg::norm(&x)).abs() < 1e-10 * linalg::norm(&x));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(SensingOperator::new(4, 4, 17, 0).is_err());
        assert!(SensingOperator::new(4, 4, 0, 0).is_err());
        let op = SensingOperator::new(4, 4, 5, 0).unwrap();
        assert!(op.apply(&[0.0; 15]).is_err());
        assert!(op.adjoint(&[0.0; 4]).is_err());
    }

    #[test]
    fn measurement_count_rounds() {
        assert_eq!(SensingOperator::measurement_count(65536, 0.2).unwrap(), 13107);
        assert_eq!(SensingOperator::measurement_count(10, 0.01).unwrap(), 1);
        assert!(SensingOperator::measurement_count(10, 0.0).is_err());
        assert!(SensingOperator::measurement_count(10, 1.5).is_err());
    }
}
