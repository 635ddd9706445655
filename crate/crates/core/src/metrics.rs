//! Reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::image::Image;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::dims(
            format!("{}x{}", a.height(), a.width()),
            format!("{}x{}", b.height(), b.width()),
        ));
    }
    Ok(())
}

/// `10 log10(N L² / ‖x - x̂‖²)` with `L = max(x_true)`.
///
/// Identical images give `+∞`.
pub fn psnr(x_true: &Image, x_hat: &Image) -> Result<f64> {
    same_shape(x_true, x_hat)?;
    let peak = x_true.max();
    if !(peak > 0.0) {
        return Err(Error::Undefined(format!(
            "PSNR needs a positive peak in the reference image, got {peak}"
        )));
    }
    let err: f64 = x_true
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (x_true.len() as f64 * peak * peak / err).log10())
}

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Single-window SSIM over the whole image, dynamic range `L = 1`.
pub fn ssim_global(x_true: &Image, x_hat: &Image) -> Result<f64> {
    same_shape(x_true, x_hat)?;
    let n = x_true.len() as f64;
    let (a, b) = (x_true.data(), x_hat.data());
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (u, v) in a.iter().zip(b) {
        let (du, dv) = (u - mu_a, v - mu_b);
        var_a += du * du;
        var_b += dv * dv;
        cov += du * dv;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    Ok(((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)))
}

/// Pixel rectangle `[row0, row0 + height) x [col0, col0 + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSpec {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl RegionSpec {
    pub fn new(row0: usize, col0: usize, height: usize, width: usize) -> Self {
        Self {
            row0,
            col0,
            height,
            width,
        }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self, img: &Image) -> Result<()> {
        if self.area() < 2 {
            return Err(Error::InvalidParameter(format!("region {self:?} must cover at least 2 pixels")));
        }
        if self.row0 + self.height > img.height() || self.col0 + self.width > img.width() {
            return Err(Error::InvalidParameter(format!(
                "region {self:?} exceeds image bounds {}x{}",
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }

    pub fn overlaps(&self, other: &RegionSpec) -> bool {
        self.row0 < other.row0 + other.height
            && other.row0 < self.row0 + self.height
            && self.col0 < other.col0 + other.width
            && other.col0 < self.col0 + self.width
    }

    fn pixels<'a>(&'a self, img: &'a Image) -> impl Iterator<Item = f64> + 'a {
        (self.row0..self.row0 + self.height)
            .flat_map(move |r| (self.col0..self.col0 + self.width).map(move |c| img.get(r, c)))
    }
}

/// What CNR is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CnrInput {
    /// `|x|` normalized to a maximum of 1.
    #[default]
    Envelope,
    /// Signed pixel values as given.
    Raw,
}

/// `|μ₁ - μ₂| / sqrt(σ₁² + σ₂²)` between two disjoint regions.
pub fn cnr(img: &Image, r1: &RegionSpec, r2: &RegionSpec) -> Result<f64> {
    cnr_with(img, r1, r2, CnrInput::default())
}

pub fn cnr_with(img: &Image, r1: &RegionSpec, r2: &RegionSpec, input: CnrInput) -> Result<f64> {
    r1.validate(img)?;
    r2.validate(img)?;
    if r1.overlaps(r2) {
        return Err(Error::InvalidParameter("CNR regions must be disjoint".into()));
    }
    let prepared = match input {
        CnrInput::Raw => img.clone(),
        CnrInput::Envelope => {
            let peak = img.data().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if peak == 0.0 {
                return Err(Error::Undefined("CNR of an all-zero image".into()));
            }
            img.map(|v| v.abs() / peak)
        }
    };
    let stats = |r: &RegionSpec| {
        let n = r.area() as f64;
        let mean = r.pixels(&prepared).sum::<f64>() / n;
        let var = r.pixels(&prepared).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    };
    let (m1, v1) = stats(r1);
    let (m2, v2) = stats(r2);
    let denom = (v1 + v2).sqrt();
    if denom == 0.0 {
        return Err(Error::Undefined("CNR with constant regions (zero variance)".into()));
    }
    Ok((m1 - m2).abs() / denom)
}
