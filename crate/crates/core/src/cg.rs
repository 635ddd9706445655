//! Jacobi-preconditioned conjugate gradients for SPD systems.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` in place, starting from the incoming `x`.
///
/// Stops once `‖b - A x‖ <= tol · ‖b‖`.
pub fn pcg(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    diagonal: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let ax = apply(x)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rel = norm(&r) / b_norm;
    if rel <= tol {
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let precond = |r: &[f64]| -> Vec<f64> { r.iter().zip(diagonal).map(|(ri, d)| ri / d).collect() };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgNonConvergence {
                iterations: it,
                residual: rel,
            });
        }
        let step = rz / pap;
        axpy(step, &p, x);
        axpy(-step, &ap, &mut r);
        rel = norm(&r) / b_norm;
        if rel <= tol {
            return Ok(CgOutcome {
                iterations: it,
                relative_residual: rel,
            });
        }
        z = precond(&r);
        let rz_next = dot(&r, &z);
        let ratio = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + ratio * *pi;
        }
    }
    Err(Error::CgNonConvergence {
        iterations: max_iter,
        residual: rel,
    })
}
