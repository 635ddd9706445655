//! Real 2D FFT and orthonormal 2D DCT built on `rustfft` and `realfft`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

/// Planned 2D DFT of real images on a fixed `height x width` grid.
///
/// Spectra keep the `width / 2 + 1` non-redundant columns and are stored
/// column-major: frequency `(ky, kx)` lives at index `kx * height + ky`.
#[derive(Clone)]
pub struct RealFft2 {
    height: usize,
    width: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for RealFft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealFft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl RealFft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut real = RealFftPlanner::new();
        let mut complex = FftPlanner::new();
        Self {
            height,
            width,
            half: width / 2 + 1,
            r2c: real.plan_fft_forward(width),
            c2r: real.plan_fft_inverse(width),
            col_fwd: complex.plan_fft_forward(height),
            col_inv: complex.plan_fft_inverse(height),
        }
    }

    /// Number of stored spectral coefficients.
    pub fn spectrum_len(&self) -> usize {
        self.half * self.height
    }

    /// `(ky, kx)` of a spectrum index.
    pub fn frequency(&self, index: usize) -> (usize, usize) {
        (index % self.height, index / self.height)
    }

    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        assert_eq!(data.len(), self.height * self.width);
        let (h, w) = (self.height, self.width);
        let mut spec = vec![Complex64::default(); self.spectrum_len()];
        let mut row = vec![0.0; w];
        let mut out = self.r2c.make_output_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for r in 0..h {
            row.copy_from_slice(&data[r * w..(r + 1) * w]);
            self.r2c
                .process_with_scratch(&mut row, &mut out, &mut scratch)
                .expect("buffer sizes match the plan");
            for (kx, v) in out.iter().enumerate() {
                spec[kx * h + r] = *v;
            }
        }
        self.col_fwd.process(&mut spec);
        spec
    }

    /// Inverse transform with `1 / (height · width)` normalization.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        assert_eq!(spec.len(), self.spectrum_len());
        let (h, w) = (self.height, self.width);
        self.col_inv.process(&mut spec);
        let scale = 1.0 / (h * w) as f64;
        let mut data = vec![0.0; h * w];
        let mut row = self.c2r.make_input_vec();
        let mut out = self.c2r.make_output_vec();
        let mut scratch = self.c2r.make_scratch_vec();
        for r in 0..h {
            for (kx, v) in row.iter_mut().enumerate() {
                *v = spec[kx * h + r];
            }
            // Exactly real for a real image; clear the round-off.
            row[0].im = 0.0;
            if w % 2 == 0 {
                row[self.half - 1].im = 0.0;
            }
            self.c2r
                .process_with_scratch(&mut row, &mut out, &mut scratch)
                .expect("buffer sizes match the plan");
            for (d, v) in data[r * w..(r + 1) * w].iter_mut().zip(&out) {
                *d = v * scale;
            }
        }
        data
    }
}

fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(src[r * cols + c]);
        }
    }
    out
}

/// Orthonormal 1D DCT-II (and its inverse, the DCT-III) of a fixed length,
/// evaluated with one complex FFT of the same length (Makhoul reordering).
#[derive(Clone)]
struct Dct1 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    twiddle: Vec<Complex64>,
    scale0: f64,
    scale: f64,
}

impl Dct1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        let twiddle = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64)))
            .collect();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            twiddle,
            scale0: (1.0 / n as f64).sqrt(),
            scale: (2.0 / n as f64).sqrt(),
        }
    }

    fn forward(&self, x: &mut [f64], scratch: &mut [Complex64]) {
        let n = self.n;
        let half = n.div_ceil(2);
        for k in 0..half {
            scratch[k] = Complex64::new(x[2 * k], 0.0);
        }
        for k in 0..n / 2 {
            scratch[n - 1 - k] = Complex64::new(x[2 * k + 1], 0.0);
        }
        self.fwd.process(scratch);
        for k in 0..n {
            let s = if k == 0 { self.scale0 } else { self.scale };
            x[k] = (scratch[k] * self.twiddle[k]).re * s;
        }
    }

    fn inverse(&self, x: &mut [f64], scratch: &mut [Complex64]) {
        let n = self.n;
        for k in 0..n {
            let xk = x[k] / if k == 0 { self.scale0 } else { self.scale };
            let xr = if k == 0 {
                0.0
            } else {
                x[n - k] / self.scale
            };
            scratch[k] = Complex64::new(xk, -xr) * self.twiddle[k].conj();
        }
        self.inv.process(scratch);
        let inv_n = 1.0 / n as f64;
        let half = n.div_ceil(2);
        for k in 0..half {
            x[2 * k] = scratch[k].re * inv_n;
        }
        for k in 0..n / 2 {
            x[2 * k + 1] = scratch[n - 1 - k].re * inv_n;
        }
    }
}

/// Separable orthonormal 2D DCT-II on a row-major `height x width` grid.
#[derive(Clone)]
pub struct Dct2 {
    height: usize,
    width: usize,
    rows: Dct1,
    cols: Dct1,
}

impl fmt::Debug for Dct2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dct2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Dct2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            rows: Dct1::new(width, &mut planner),
            cols: Dct1::new(height, &mut planner),
        }
    }

    pub fn forward(&self, data: &mut [f64]) {
        self.apply(data, false);
    }

    pub fn inverse(&self, data: &mut [f64]) {
        self.apply(data, true);
    }

    fn apply(&self, data: &mut [f64], inverse: bool) {
        assert_eq!(data.len(), self.height * self.width);
        let mut scratch = vec![Complex64::default(); self.height.max(self.width)];
        for row in data.chunks_exact_mut(self.width) {
            if inverse {
                self.rows.inverse(row, &mut scratch[..self.width]);
            } else {
                self.rows.forward(row, &mut scratch[..self.width]);
            }
        }
        let mut t = transpose(data, self.height, self.width);
        for col in t.chunks_exact_mut(self.height) {
            if inverse {
                self.cols.inverse(col, &mut scratch[..self.height]);
            } else {
                self.cols.forward(col, &mut scratch[..self.height]);
            }
        }
        data.copy_from_slice(&transpose(&t, self.width, self.height));
    }
}
