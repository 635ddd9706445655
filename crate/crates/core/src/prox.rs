//! Proximal operators of `K|x|` and `K|x|^p`, `1 <= p <= 2`.
//!
//! For `p > 1` the minimizer of `K|x|^p + ½(x - x0)²` is `sign(x0)·q` where
//! `q >= 0` is the root of `q + pK q^(p-1) = |x0|`. The root function is
//! increasing on `[0, |x0|]`, negative at 0 and positive at `|x0|`, so Newton
//! is run inside that bracket and falls back to bisection whenever a step
//! leaves it.

use crate::error::{Error, Result};

/// Threshold weight, exponent and Newton controls for [`prox_lp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxParams {
    pub k: f64,
    pub p: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl ProxParams {
    pub const DEFAULT_TOL: f64 = 1e-12;
    pub const DEFAULT_MAX_ITER: usize = 100;

    pub fn new(k: f64, p: f64) -> Result<Self> {
        let params = Self {
            k,
            p,
            newton_tol: Self::DEFAULT_TOL,
            newton_max_iter: Self::DEFAULT_MAX_ITER,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::InvalidParameter(format!("prox weight K must be positive, got {}", self.k)));
        }
        if !(1.0..=2.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("prox exponent p must lie in [1, 2], got {}", self.p)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("newton controls must be positive".into()));
        }
        Ok(())
    }
}

/// Soft threshold of a scalar.
#[inline]
pub fn soft_threshold(v: f64, k: f64) -> f64 {
    let m = v.abs() - k;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

/// Elementwise `max(|v| - K, 0)·sign(v)`.
pub fn prox_l1(v: &[f64], k: f64) -> Vec<f64> {
    v.iter().map(|&x| soft_threshold(x, k)).collect()
}

/// `prox_{K|·|^p}(x0)` with default Newton controls.
pub fn prox_lp_scalar(x0: f64, k: f64, p: f64) -> Result<f64> {
    prox_lp_scalar_with(x0, &ProxParams::new(k, p)?)
}

pub fn prox_lp_scalar_with(x0: f64, params: &ProxParams) -> Result<f64> {
    let ProxParams {
        k,
        p,
        newton_tol,
        newton_max_iter,
    } = *params;
    if p == 1.0 {
        return Ok(soft_threshold(x0, k));
    }
    let target = x0.abs();
    if target == 0.0 {
        return Ok(0.0);
    }
    if p == 2.0 {
        return Ok(x0 / (1.0 + 2.0 * k));
    }

    let f = |q: f64| q + p * k * q.powf(p - 1.0) - target;
    let (mut lo, mut hi) = (0.0_f64, target);
    let mut q = target;
    let scale = 1.0 + target;
    for _ in 0..newton_max_iter {
        let fq = f(q);
        if fq.abs() <= newton_tol * scale {
            return Ok(q.copysign(x0));
        }
        if fq > 0.0 {
            hi = q;
        } else {
            lo = q;
        }
        let deriv = 1.0 + p * (p - 1.0) * k * q.powf(p - 2.0);
        let step = q - fq / deriv;
        q = if deriv.is_finite() && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= newton_tol * scale {
            return Ok(q.copysign(x0));
        }
    }
    Err(Error::NewtonNonConvergence {
        iterations: newton_max_iter,
        last: q.copysign(x0),
    })
}

/// Elementwise [`prox_lp_scalar`].
pub fn prox_lp(v: &[f64], k: f64, p: f64) -> Result<Vec<f64>> {
    let params = ProxParams::new(k, p)?;
    prox_lp_with(v, &params)
}

pub fn prox_lp_with(v: &[f64], params: &ProxParams) -> Result<Vec<f64>> {
    params.validate()?;
    v.iter().map(|&x| prox_lp_scalar_with(x, params)).collect()
}
