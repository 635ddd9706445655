//! Ground-truth generators, synthetic PSFs and the acquisition simulator.
//!
//! Every random generator takes an explicit `u64` seed and uses
//! `ChaCha8Rng::seed_from_u64`, so outputs are reproducible bit for bit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg;
use crate::psf::PsfOperator;
use crate::transforms::SensingOperator;

/// Intensity table used for the ten Shepp-Logan ellipses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SheppLoganVariant {
    /// Higher-contrast intensities (1, -0.8, -0.2, ...), as produced by the
    /// common `phantom(n)` default.
    #[default]
    Toft,
    /// The original intensities (2, -0.98, -0.02, ...).
    Original,
}

// (a, b, x0, y0, phi in degrees)
const ELLIPSES: [(f64, f64, f64, f64, f64); 10] = [
    (0.69, 0.92, 0.0, 0.0, 0.0),
    (0.6624, 0.874, 0.0, -0.0184, 0.0),
    (0.11, 0.31, 0.22, 0.0, -18.0),
    (0.16, 0.41, -0.22, 0.0, 18.0),
    (0.21, 0.25, 0.0, 0.35, 0.0),
    (0.046, 0.046, 0.0, 0.1, 0.0),
    (0.046, 0.046, 0.0, -0.1, 0.0),
    (0.046, 0.023, -0.08, -0.605, 0.0),
    (0.023, 0.023, 0.0, -0.606, 0.0),
    (0.023, 0.046, 0.06, -0.605, 0.0),
];

const TOFT_INTENSITY: [f64; 10] = [1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
const ORIGINAL_INTENSITY: [f64; 10] = [2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01];

/// Ten-ellipse Shepp-Logan head on an `n x n` grid, normalized to `[0, 1]`.
///
/// Pixel `(r, c)` samples the point `x = -1 + 2c/(n-1)`, `y = 1 - 2r/(n-1)`.
pub fn shepp_logan(n: usize) -> Result<Image> {
    shepp_logan_variant(n, SheppLoganVariant::default())
}

pub fn shepp_logan_variant(n: usize, variant: SheppLoganVariant) -> Result<Image> {
    if n < 16 {
        return Err(Error::InvalidParameter(format!("phantom size must be >= 16, got {n}")));
    }
    let intensity = match variant {
        SheppLoganVariant::Toft => &TOFT_INTENSITY,
        SheppLoganVariant::Original => &ORIGINAL_INTENSITY,
    };
    let step = 2.0 / (n - 1) as f64;
    let raw = Image::from_fn(n, n, |r, c| {
        let x = -1.0 + c as f64 * step;
        let y = 1.0 - r as f64 * step;
        ELLIPSES
            .iter()
            .zip(intensity)
            .filter(|((a, b, x0, y0, phi), _)| {
                let (s, co) = phi.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let u = dx * co + dy * s;
                let v = dy * co - dx * s;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            })
            .map(|(_, i)| i)
            .sum()
    });
    // Background is exactly zero; cancelling intensities can round slightly below.
    let hi = raw.max();
    Ok(raw.map(|v| (v / hi).max(0.0)))
}

/// Zero-mean generalized Gaussian, density ∝ `exp(-|x / scale|^shape)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdParams {
    pub shape: f64,
    pub scale: f64,
    pub seed: u64,
}

impl GgdParams {
    pub fn new(shape: f64, scale: f64, seed: u64) -> Result<Self> {
        if !(shape > 0.0) || !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "GGD shape and scale must be positive (shape={shape}, scale={scale})"
            )));
        }
        Ok(Self { shape, scale, seed })
    }
}

/// Draws GGD samples as `sign · scale · G^(1/shape)` with `G ~ Gamma(1/shape, 1)`.
struct GgdSampler {
    gamma: Gamma<f64>,
    inv_shape: f64,
    scale: f64,
}

impl GgdSampler {
    fn new(params: &GgdParams) -> Result<Self> {
        let gamma = Gamma::new(1.0 / params.shape, 1.0)
            .map_err(|e| Error::InvalidParameter(format!("gamma distribution: {e}")))?;
        Ok(Self {
            gamma,
            inv_shape: 1.0 / params.shape,
            scale: params.scale,
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let magnitude = self.scale * self.gamma.sample(rng).powf(self.inv_shape);
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }
}

pub fn sample_ggd(params: &GgdParams, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let sampler = GgdSampler::new(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}

/// Speckle TRF: `Poisson(density · N)` scatterers at uniform continuous
/// positions with GGD amplitudes, each scaled by the base value of its
/// nearest pixel and accumulated there.
pub fn speckle_trf(base: &Image, scatterer_density: f64, ggd: &GgdParams) -> Result<Image> {
    if !(scatterer_density > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scatterer density must be positive, got {scatterer_density}"
        )));
    }
    let sampler = GgdSampler::new(ggd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ggd.seed);
    let (h, w) = base.shape();
    let mean = scatterer_density * (h * w) as f64;
    let count = Poisson::new(mean)
        .map_err(|e| Error::InvalidParameter(format!("poisson distribution: {e}")))?
        .sample(&mut rng) as u64;
    let mut out = Image::zeros(h, w);
    for _ in 0..count {
        let row = ((rng.random::<f64>() * h as f64) as usize).min(h - 1);
        let col = ((rng.random::<f64>() * w as f64) as usize).min(w - 1);
        let amp = sampler.sample(&mut rng) * base.get(row, col);
        out.set(row, col, out.get(row, col) + amp);
    }
    Ok(out)
}

/// Parameters for the hypoechoic round-cyst medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CystParams {
    pub size: usize,
    pub radius_fraction: f64,
    /// Amplitude factor applied inside the disk; 0 makes it anechoic.
    pub attenuation: f64,
    pub scatterer_density: f64,
    pub ggd: GgdParams,
}

impl CystParams {
    pub fn new(size: usize, radius_fraction: f64, seed: u64) -> Self {
        Self {
            size,
            radius_fraction,
            attenuation: 0.1,
            scatterer_density: 1.0,
            ggd: GgdParams {
                shape: 1.0,
                scale: 1.0,
                seed,
            },
        }
    }
}

/// Homogeneous GGD speckle with a centred disk of attenuated echoes.
pub fn round_cyst_trf(params: &CystParams) -> Result<Image> {
    let n = params.size;
    if n == 0 {
        return Err(Error::InvalidParameter("cyst phantom size must be positive".into()));
    }
    if !(0.0..0.5).contains(&params.radius_fraction) {
        return Err(Error::InvalidParameter(format!(
            "radius fraction must lie in [0, 0.5), got {}",
            params.radius_fraction
        )));
    }
    if !(0.0..=1.0).contains(&params.attenuation) {
        return Err(Error::InvalidParameter(format!(
            "attenuation must lie in [0, 1], got {}",
            params.attenuation
        )));
    }
    let centre = (n as f64 - 1.0) / 2.0;
    let radius = params.radius_fraction * n as f64;
    let base = Image::from_fn(n, n, |r, c| {
        let d2 = (r as f64 - centre).powi(2) + (c as f64 - centre).powi(2);
        if d2 <= radius * radius && radius > 0.0 {
            params.attenuation
        } else {
            1.0
        }
    });
    speckle_trf(&base, params.scatterer_density, &params.ggd)
}

fn odd_kernel_size(n_kernel: usize) -> Result<()> {
    if n_kernel == 0 || n_kernel % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "kernel size must be odd and positive, got {n_kernel}"
        )));
    }
    Ok(())
}

/// Isotropic Gaussian kernel with unit sum.
pub fn gaussian_psf(n_kernel: usize, variance_px: f64) -> Result<Image> {
    odd_kernel_size(n_kernel)?;
    if !(variance_px > 0.0) {
        return Err(Error::InvalidParameter(format!("variance must be positive, got {variance_px}")));
    }
    let c = (n_kernel / 2) as f64;
    let k = Image::from_fn(n_kernel, n_kernel, |r, col| {
        let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
        (-d2 / (2.0 * variance_px)).exp()
    });
    let s = k.sum();
    Ok(k.map(|v| v / s))
}

/// Default axial frequency: a 3.5 MHz pulse sampled at 20 MHz.
pub const DEFAULT_AXIAL_FREQ: f64 = 3.5 / 20.0;

/// Synthetic RF pulse: Gaussian envelope modulated by a cosine along rows
/// (axial), made zero-mean axially, times a Gaussian lateral profile.
/// Normalized to unit ℓ2 norm.
pub fn gabor_psf(
    axial_freq: f64,
    axial_sigma_px: f64,
    lateral_sigma_px: f64,
    n_kernel: usize,
) -> Result<Image> {
    odd_kernel_size(n_kernel)?;
    if !(axial_freq > 0.0 && axial_freq < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "axial frequency must lie in (0, 0.5) cycles/sample, got {axial_freq}"
        )));
    }
    if !(axial_sigma_px > 0.0) || !(lateral_sigma_px > 0.0) {
        return Err(Error::InvalidParameter("PSF widths must be positive".into()));
    }
    let c = (n_kernel / 2) as f64;
    let envelope: Vec<f64> = (0..n_kernel)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * axial_sigma_px.powi(2))).exp())
        .collect();
    let mut pulse: Vec<f64> = envelope
        .iter()
        .enumerate()
        .map(|(i, e)| e * (2.0 * PI * axial_freq * (i as f64 - c)).cos())
        .collect();
    let dc = pulse.iter().sum::<f64>() / envelope.iter().sum::<f64>();
    for (p, e) in pulse.iter_mut().zip(&envelope) {
        *p -= dc * e;
    }
    let lateral: Vec<f64> = (0..n_kernel)
        .map(|j| (-(j as f64 - c).powi(2) / (2.0 * lateral_sigma_px.powi(2))).exp())
        .collect();
    let k = Image::from_fn(n_kernel, n_kernel, |r, col| pulse[r] * lateral[col]);
    let norm = k.norm();
    Ok(k.map(|v| v / norm))
}

/// CS ratio, noise level and seeds of one simulated acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionSpec {
    pub cs_ratio: f64,
    /// `None` for a noiseless acquisition.
    pub snr_db: Option<f64>,
    pub sensing_seed: u64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone)]
pub struct Acquisition {
    pub measurements: Vec<f64>,
    pub sensing: SensingOperator,
    /// `‖Φ H x‖²` before noise.
    pub signal_energy: f64,
    /// `‖n‖²` of the realized noise.
    pub noise_energy: f64,
}

impl Acquisition {
    /// Realized SNR in dB, infinite for noiseless acquisitions.
    pub fn realized_snr_db(&self) -> f64 {
        if self.noise_energy == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (self.signal_energy / self.noise_energy).log10()
        }
    }
}

/// `y = Φ vec(H x) + n` with `n` white Gaussian at the requested SNR,
/// defined over the `M` measurements.
pub fn acquire(trf: &Image, psf: &PsfOperator, spec: &AcquisitionSpec) -> Result<Acquisition> {
    let (h, w) = psf.shape();
    trf.check_shape(h, w)?;
    let m = SensingOperator::measurement_count(h * w, spec.cs_ratio)?;
    let sensing = SensingOperator::new(h, w, m, spec.sensing_seed)?;
    let blurred = psf.apply(trf)?;
    let mut measurements = sensing.apply(blurred.data())?;
    let signal_energy = linalg::norm_sq(&measurements);
    let mut noise_energy = 0.0;
    if let Some(snr) = spec.snr_db {
        if !snr.is_finite() {
            return Err(Error::InvalidParameter(format!("SNR must be finite, got {snr}")));
        }
        let sigma = (signal_energy / (m as f64 * 10f64.powf(snr / 10.0))).sqrt();
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
        for v in measurements.iter_mut() {
            let n = normal.sample(&mut rng);
            noise_energy += n * n;
            *v += n;
        }
    }
    Ok(Acquisition {
        measurements,
        sensing,
        signal_energy,
        noise_energy,
    })
}
