//! Orthonormal multi-level 2D Haar transform.
//!
//! Coefficients use the usual Mallat layout: after each level the
//! approximation band occupies the top-left quarter of the active region,
//! and the coefficient vector is the row-major flattening of that array.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarWavelet {
    levels: usize,
    height: usize,
    width: usize,
}

impl HaarWavelet {
    pub fn new(levels: usize, height: usize, width: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidParameter("wavelet needs at least one level".into()));
        }
        let block = 1usize << levels;
        if height == 0 || width == 0 || height % block != 0 || width % block != 0 {
            return Err(Error::dims(
                format!("dimensions divisible by 2^{levels} = {block}"),
                format!("{height}x{width}"),
            ));
        }
        Ok(Self {
            levels,
            height,
            width,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Analysis `Ψᵗ x`.
    pub fn forward(&self, x: &Image) -> Result<Vec<f64>> {
        x.check_shape(self.height, self.width)?;
        let mut buf = x.data().to_vec();
        let mut tmp = vec![0.0; self.height.max(self.width)];
        let (mut h, mut w) = (self.height, self.width);
        for _ in 0..self.levels {
            for r in 0..h {
                let row = &mut buf[r * self.width..r * self.width + w];
                analyze(row, &mut tmp[..w]);
            }
            let mut col = vec![0.0; h];
            for c in 0..w {
                for r in 0..h {
                    col[r] = buf[r * self.width + c];
                }
                analyze(&mut col, &mut tmp[..h]);
                for r in 0..h {
                    buf[r * self.width + c] = col[r];
                }
            }
            h /= 2;
            w /= 2;
        }
        Ok(buf)
    }

    /// Synthesis `Ψ a`; also the adjoint of [`HaarWavelet::forward`].
    pub fn inverse(&self, coeffs: &[f64]) -> Result<Image> {
        if coeffs.len() != self.len() {
            return Err(Error::dims(self.len(), coeffs.len()));
        }
        let mut buf = coeffs.to_vec();
        let mut tmp = vec![0.0; self.height.max(self.width)];
        for level in (0..self.levels).rev() {
            let (h, w) = (self.height >> level, self.width >> level);
            let mut col = vec![0.0; h];
            for c in 0..w {
                for r in 0..h {
                    col[r] = buf[r * self.width + c];
                }
                synthesize(&mut col, &mut tmp[..h]);
                for r in 0..h {
                    buf[r * self.width + c] = col[r];
                }
            }
            for r in 0..h {
                let row = &mut buf[r * self.width..r * self.width + w];
                synthesize(row, &mut tmp[..w]);
            }
        }
        Ok(Image::from_vec(self.height, self.width, buf))
    }
}

fn analyze(x: &mut [f64], tmp: &mut [f64]) {
    let half = x.len() / 2;
    for i in 0..half {
        let (a, b) = (x[2 * i], x[2 * i + 1]);
        tmp[i] = (a + b) * FRAC_1_SQRT_2;
        tmp[half + i] = (a - b) * FRAC_1_SQRT_2;
    }
    x.copy_from_slice(&tmp[..x.len()]);
}

fn synthesize(x: &mut [f64], tmp: &mut [f64]) {
    let half = x.len() / 2;
    for i in 0..half {
        let (s, d) = (x[i], x[half + i]);
        tmp[2 * i] = (s + d) * FRAC_1_SQRT_2;
        tmp[2 * i + 1] = (s - d) * FRAC_1_SQRT_2;
    }
    x.copy_from_slice(&tmp[..x.len()]);
}
