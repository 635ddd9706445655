//! Spatially invariant blur `H` as circular convolution, diagonalized by the 2D DFT.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::RealFft2;
use crate::image::Image;

/// Circular-convolution (BCCB) operator for a fixed PSF and image grid.
///
/// The kernel centre `(kh / 2, kw / 2)` is placed at the origin with
/// quadrant wrap-around, so a centred unit impulse is exactly the identity.
#[derive(Debug, Clone)]
pub struct PsfOperator {
    kernel: Image,
    height: usize,
    width: usize,
    spectrum: Vec<Complex64>,
    fft: RealFft2,
}

impl PsfOperator {
    /// Rejects kernels larger than the target grid.
    pub fn new(kernel: &Image, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter("empty target grid".into()));
        }
        if kernel.height() > height || kernel.width() > width {
            return Err(Error::dims(
                format!("kernel no larger than {height}x{width}"),
                format!("{}x{}", kernel.height(), kernel.width()),
            ));
        }
        let fft = RealFft2::new(height, width);
        let embedded = embed_centered(kernel, height, width);
        let spectrum = fft.forward(embedded.data());
        Ok(Self {
            kernel: kernel.clone(),
            height,
            width,
            spectrum,
            fft,
        })
    }

    pub fn kernel(&self) -> &Image {
        &self.kernel
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// DFT of the embedded kernel in the half-spectrum layout of [`RealFft2`].
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// `max |ĥ|²`, the Lipschitz constant of `x ↦ HᵗH x`.
    pub fn lipschitz(&self) -> f64 {
        self.spectrum.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max)
    }

    /// Sum of squared kernel entries, the constant diagonal of `HᵗH`.
    pub fn kernel_energy(&self) -> f64 {
        self.kernel.data().iter().map(|v| v * v).sum()
    }

    /// `Hx`.
    pub fn apply(&self, x: &Image) -> Result<Image> {
        self.filter(x, |s| s)
    }

    /// `Hᵗy`, convolution with the conjugate spectrum.
    pub fn adjoint(&self, y: &Image) -> Result<Image> {
        self.filter(y, |s| s.conj())
    }

    /// `HᵗH x`.
    pub fn normal(&self, x: &Image) -> Result<Image> {
        self.filter(x, |s| Complex64::new(s.norm_sqr(), 0.0))
    }

    /// Solves `(β HᵗH + 2α I) x = rhs` by elementwise spectral division.
    pub fn solve_tikhonov(&self, rhs: &Image, beta: f64, alpha: f64) -> Result<Image> {
        if !(beta > 0.0) || !(alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tikhonov solve needs beta > 0 and alpha >= 0 (beta={beta}, alpha={alpha})"
            )));
        }
        rhs.check_shape(self.height, self.width)?;
        let mut buf: Vec<Complex64> = Vec::with_capacity(rhs.len());
        for (i, s) in self.spectrum.iter().enumerate() {
            let d = beta * s.norm_sqr() + 2.0 * alpha;
            if !(d > 0.0) {
                let (row, col) = self.fft.frequency(i);
                return Err(Error::Singular { row, col });
            }
            buf.push(Complex64::new(1.0 / d, 0.0));
        }
        let mut spec = self.fft.forward(rhs.data());
        for (z, d) in spec.iter_mut().zip(&buf) {
            *z *= d;
        }
        Ok(Image::from_vec(
            self.height,
            self.width,
            self.fft.inverse(spec),
        ))
    }

    /// Applies an arbitrary spectral multiplier derived from `ĥ`.
    pub fn filter(&self, x: &Image, f: impl Fn(Complex64) -> Complex64) -> Result<Image> {
        x.check_shape(self.height, self.width)?;
        let mut spec = self.fft.forward(x.data());
        for (z, s) in spec.iter_mut().zip(&self.spectrum) {
            *z *= f(*s);
        }
        Ok(Image::from_vec(
            self.height,
            self.width,
            self.fft.inverse(spec),
        ))
    }
}

/// Places `kernel` on a `height x width` grid with its centre at `(0, 0)`.
pub fn embed_centered(kernel: &Image, height: usize, width: usize) -> Image {
    let (ch, cw) = (kernel.height() / 2, kernel.width() / 2);
    let mut out = Image::zeros(height, width);
    for i in 0..kernel.height() {
        for j in 0..kernel.width() {
            let r = (i as isize - ch as isize).rem_euclid(height as isize) as usize;
            let c = (j as isize - cw as isize).rem_euclid(width as isize) as usize;
            let v = out.get(r, c) + kernel.get(i, j);
            out.set(r, c, v);
        }
    }
    out
}
