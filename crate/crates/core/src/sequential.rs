//! Two-stage baseline: CS recovery of the blurred image, then deconvolution.
//!
//! Stage 1 minimizes `‖a‖₁ + 1/(2μ)‖y - ΦΨa‖²` with monotone FISTA
//! (objective never increases). Stage 2 minimizes `α‖x‖_p^p + ‖r̂ - Hx‖²`
//! by forward-backward splitting.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg;
use crate::prox::{self, ProxParams};
use crate::psf::PsfOperator;
use crate::transforms::{HaarWavelet, SensingOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialConfig {
    /// Stage-1 data weight.
    pub mu: f64,
    /// Stage-2 prior weight.
    pub alpha: f64,
    pub p: f64,
    pub fista_tol: f64,
    pub fista_max_iter: usize,
    /// Stage-2 step; `None` means `1 / max|ĥ|²`.
    pub fb_step: Option<f64>,
    pub fb_tol: f64,
    pub fb_max_iter: usize,
}

impl SequentialConfig {
    pub fn new(mu: f64, alpha: f64, p: f64) -> Self {
        Self {
            mu,
            alpha,
            p,
            fista_tol: 1e-3,
            fista_max_iter: 500,
            fb_step: None,
            fb_tol: 1e-3,
            fb_max_iter: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("fista_tol", self.fista_tol), ("fb_tol", self.fb_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(1.0..=2.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("p must lie in [1, 2], got {}", self.p)));
        }
        if self.fista_max_iter == 0 || self.fb_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub iterations: usize,
    pub converged: bool,
    pub rel_change: f64,
    /// Objective value after each iteration, starting with the initial point.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialReport {
    pub cs: StageReport,
    pub deconvolution: StageReport,
    pub wall_seconds: f64,
}

impl SequentialReport {
    pub fn converged(&self) -> bool {
        self.cs.converged && self.deconvolution.converged
    }

    pub fn iterations(&self) -> usize {
        self.cs.iterations + self.deconvolution.iterations
    }
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let denom = linalg::norm(old);
    if denom > 0.0 {
        linalg::dist(new, old) / denom
    } else {
        f64::INFINITY
    }
}

/// `‖a‖₁ + 1/(2μ)‖y - ΦΨa‖²`.
pub fn cs_objective(a: &[f64], y: &[f64], sensing: &SensingOperator, wavelet: &HaarWavelet, mu: f64) -> Result<f64> {
    let aa = sensing.apply(wavelet.inverse(a)?.data())?;
    let misfit: f64 = aa.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
    Ok(a.iter().map(|v| v.abs()).sum::<f64>() + misfit / (2.0 * mu))
}

/// `α‖x‖_p^p + ‖r̂ - Hx‖²`.
pub fn deconvolution_objective(x: &Image, r_hat: &Image, psf: &PsfOperator, alpha: f64, p: f64) -> Result<f64> {
    let hx = psf.apply(x)?;
    let misfit: f64 = r_hat.data().iter().zip(hx.data()).map(|(u, v)| (u - v) * (u - v)).sum();
    Ok(alpha * x.data().iter().map(|v| v.abs().powf(p)).sum::<f64>() + misfit)
}

/// Stage 1: returns `r̂ = Ψâ` and the stage report.
///
/// Monotone FISTA from `a⁰ = Aᵗy` with step `μ` (the gradient of the data
/// term is `(1/μ)Aᵗ(Aa - y)` and `‖A‖ = 1`). Stops when the relative change
/// of the accepted iterate drops below `fista_tol`.
pub fn cs_reconstruct(
    y: &[f64],
    sensing: &SensingOperator,
    wavelet: &HaarWavelet,
    config: &SequentialConfig,
) -> Result<(Image, StageReport)> {
    config.validate()?;
    if sensing.shape() != wavelet.shape() {
        return Err(Error::dims(format!("{:?}", wavelet.shape()), format!("{:?}", sensing.shape())));
    }
    if y.len() != sensing.m() {
        return Err(Error::dims(sensing.m(), y.len()));
    }
    let (h, w) = wavelet.shape();
    let mu = config.mu;
    let adjoint = |v: &[f64]| -> Result<Vec<f64>> { wavelet.forward(&Image::from_vec(h, w, sensing.adjoint(v)?)) };
    let forward = |a: &[f64]| -> Result<Vec<f64>> { sensing.apply(wavelet.inverse(a)?.data()) };
    let objective = |a: &[f64]| cs_objective(a, y, sensing, wavelet, mu);

    let mut x = adjoint(y)?;
    let mut f_x = objective(&x)?;
    let mut extrapolated = x.clone();
    let mut t = 1.0_f64;
    let mut history = vec![f_x];
    let mut converged = false;
    let mut rel = f64::INFINITY;
    let mut iterations = 0;
    for k in 1..=config.fista_max_iter {
        iterations = k;
        // Gradient step of length μ on the (1/μ)-smooth data term, then the ℓ1 prox.
        let resid = linalg::sub(&forward(&extrapolated)?, y);
        let mut point = extrapolated.clone();
        linalg::axpy(-1.0, &adjoint(&resid)?, &mut point);
        let z = prox::prox_l1(&point, mu);
        let f_z = objective(&z)?;
        let x_prev = std::mem::take(&mut x);
        if f_z <= f_x {
            x = z.clone();
            f_x = f_z;
        } else {
            x = x_prev.clone();
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        extrapolated = (0..x.len())
            .map(|i| x[i] + (t / t_next) * (z[i] - x[i]) + ((t - 1.0) / t_next) * (x[i] - x_prev[i]))
            .collect();
        t = t_next;
        history.push(f_x);
        if !linalg::all_finite(&x) {
            return Err(Error::NonFinite {
                step: "cs_reconstruct",
                iteration: k,
            });
        }
        rel = relative_change(&x, &x_prev);
        if rel < config.fista_tol {
            converged = true;
            break;
        }
    }
    let r_hat = wavelet.inverse(&x)?;
    Ok((
        r_hat,
        StageReport {
            iterations,
            converged,
            rel_change: rel,
            objective_history: history,
        },
    ))
}

/// Stage 2: forward-backward splitting on `α‖x‖_p^p + ‖r̂ - Hx‖²`,
/// `x ← prox_{(α·step/2)‖·‖_p^p}(x + step·Hᵗ(r̂ - Hx))` from `x⁰ = r̂`.
pub fn deconvolve_fb(r_hat: &Image, psf: &PsfOperator, config: &SequentialConfig) -> Result<(Image, StageReport)> {
    config.validate()?;
    let (h, w) = psf.shape();
    r_hat.check_shape(h, w)?;
    let lipschitz = psf.lipschitz();
    let step = config.fb_step.unwrap_or(1.0 / lipschitz);
    if !(step > 0.0 && step < 2.0 / lipschitz) {
        return Err(Error::InvalidParameter(format!(
            "forward-backward step must lie in (0, 2/L) = (0, {}), got {step}",
            2.0 / lipschitz
        )));
    }
    let k = config.alpha * step / 2.0;
    let params = ProxParams {
        k,
        p: config.p,
        newton_tol: ProxParams::DEFAULT_TOL,
        newton_max_iter: ProxParams::DEFAULT_MAX_ITER,
    };
    let objective = |x: &Image| deconvolution_objective(x, r_hat, psf, config.alpha, config.p);

    let mut x = r_hat.clone();
    let mut history = vec![objective(&x)?];
    let mut converged = false;
    let mut rel = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=config.fb_max_iter {
        iterations = it;
        let hx = psf.apply(&x)?;
        let resid = Image::from_vec(h, w, linalg::sub(r_hat.data(), hx.data()));
        let grad = psf.adjoint(&resid)?;
        let mut point = x.data().to_vec();
        linalg::axpy(step, grad.data(), &mut point);
        let next = if k == 0.0 {
            point
        } else if config.p == 1.0 {
            prox::prox_l1(&point, k)
        } else {
            prox::prox_lp_with(&point, &params)?
        };
        if !linalg::all_finite(&next) {
            return Err(Error::NonFinite {
                step: "deconvolve_fb",
                iteration: it,
            });
        }
        rel = relative_change(&next, x.data());
        x = Image::from_vec(h, w, next);
        history.push(objective(&x)?);
        if rel < config.fb_tol {
            converged = true;
            break;
        }
    }
    Ok((
        x,
        StageReport {
            iterations,
            converged,
            rel_change: rel,
            objective_history: history,
        },
    ))
}

pub fn sequential_reconstruct(
    y: &[f64],
    sensing: &SensingOperator,
    psf: &PsfOperator,
    wavelet: &HaarWavelet,
    config: &SequentialConfig,
) -> Result<(Image, SequentialReport)> {
    let start = Instant::now();
    let (r_hat, cs) = cs_reconstruct(y, sensing, wavelet, config)?;
    let (x, deconvolution) = deconvolve_fb(&r_hat, psf, config)?;
    Ok((
        x,
        SequentialReport {
            cs,
            deconvolution,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}
