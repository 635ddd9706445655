//! Joint compressive deconvolution by inexact ADMM.
//!
//! Solves
//!
//! ```text
//! min_x  ‖Ψᵗ H x‖₁ + α R(x) + 1/(2μ) ‖y - Φ H x‖²
//! ```
//!
//! through the split `a = Ψᵗ H x`, `w = a` with multipliers `λ₁` (on
//! `a - w`, coefficient domain) and `λ₂` (on `Ψa - Hx`, image domain).
//! Each iteration updates `w`, then `x`, then `a`, then the multipliers.
//! `R` is either `‖x‖_p^p` with `1 <= p <= 2` or the generalized TV
//! `Σ_d 2^(1-o(d)) Σ_i |Δ_i^d x|^p` with `0 < p < 1`.

use std::time::Instant;

use crate::cg::{pcg, CgOutcome};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg;
use crate::prox::{self, ProxParams};
use crate::psf::PsfOperator;
use crate::transforms::{DiffOperator, HaarWavelet, SensingOperator};

/// Regularizer on the reflectivity `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    /// `‖x‖_p^p`, `1 <= p <= 2`. `p = 2` uses the exact spectral x-update,
    /// otherwise one proximal-gradient step per iteration.
    Lp { p: f64 },
    /// Generalized TV with exponent `0 < p < 1`, solved by IRLS + CG.
    Gtv { p: f64 },
}

impl Prior {
    pub fn exponent(&self) -> f64 {
        match *self {
            Prior::Lp { p } | Prior::Gtv { p } => p,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Prior::Lp { p } => format!("l{p}"),
            Prior::Gtv { p } => format!("gtv{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Weight of the prior on `x`.
    pub alpha: f64,
    /// Data-fidelity weight (the data term is `1/(2μ)‖y - Aa‖²`).
    pub mu: f64,
    /// Augmented-Lagrangian penalty.
    pub beta: f64,
    /// Proximal-gradient step; `None` means `0.9 / max|ĥ|²`.
    pub gamma: Option<f64>,
    pub prior: Prior,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub gtv_inner_iter: usize,
    pub gtv_epsilon: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl SolverConfig {
    pub const DEFAULT_GTV_P: f64 = 0.8;

    pub fn new(prior: Prior, alpha: f64, mu: f64, beta: f64) -> Self {
        Self {
            alpha,
            mu,
            beta,
            gamma: None,
            prior,
            rel_tol: 1e-3,
            max_iter: 500,
            gtv_inner_iter: 1,
            gtv_epsilon: 1e-4,
            cg_tol: 1e-6,
            cg_max_iter: 200,
            newton_tol: ProxParams::DEFAULT_TOL,
            newton_max_iter: ProxParams::DEFAULT_MAX_ITER,
        }
    }

    pub fn lp(p: f64, alpha: f64, mu: f64, beta: f64) -> Self {
        Self::new(Prior::Lp { p }, alpha, mu, beta)
    }

    pub fn gtv(alpha: f64, mu: f64, beta: f64) -> Self {
        Self::new(
            Prior::Gtv {
                p: Self::DEFAULT_GTV_P,
            },
            alpha,
            mu,
            beta,
        )
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("mu", self.mu),
            ("beta", self.beta),
            ("gtv_epsilon", self.gtv_epsilon),
            ("cg_tol", self.cg_tol),
            ("newton_tol", self.newton_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::InvalidParameter(format!("gamma must be positive, got {g}")));
            }
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1.0) {
            return Err(Error::InvalidParameter(format!("rel_tol must lie in (0, 1], got {}", self.rel_tol)));
        }
        if self.max_iter == 0 || self.cg_max_iter == 0 || self.gtv_inner_iter == 0 || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration limits must be positive".into()));
        }
        match self.prior {
            Prior::Lp { p } if !(1.0..=2.0).contains(&p) => Err(Error::InvalidParameter(format!(
                "lp prior needs 1 <= p <= 2, got {p}"
            ))),
            Prior::Gtv { p } if !(p > 0.0 && p < 1.0) => Err(Error::InvalidParameter(format!(
                "generalized TV needs 0 < p < 1, got {p}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Iterates of the splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub a: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Image,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub iter: usize,
    /// `‖xᵏ - xᵏ⁻¹‖ / ‖xᵏ⁻¹‖`; infinite when `xᵏ⁻¹ = 0`.
    pub rel_change: f64,
    pub residual_history: Vec<PrimalResiduals>,
}

/// Primal residual norms after a multiplier update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalResiduals {
    /// `‖a - w‖`
    pub coefficient: f64,
    /// `‖Ψa - Hx‖`
    pub image: f64,
}

impl PrimalResiduals {
    /// `‖a - w‖² + ‖Ψa - Hx‖²`
    pub fn combined(&self) -> f64 {
        self.coefficient * self.coefficient + self.image * self.image
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    pub rel_change: f64,
    pub final_residuals: PrimalResiduals,
    pub residual_history: Vec<PrimalResiduals>,
    pub wall_seconds: f64,
}

impl ConvergenceReport {
    /// Combined primal residual at termination over its first-iteration value.
    pub fn residual_reduction(&self) -> f64 {
        match self.residual_history.first() {
            Some(first) if first.combined() > 0.0 => self.final_residuals.combined() / first.combined(),
            _ => 0.0,
        }
    }
}

/// Operators and configuration of one reconstruction problem.
#[derive(Debug, Clone)]
pub struct AdmmSolver<'a> {
    sensing: &'a SensingOperator,
    psf: &'a PsfOperator,
    wavelet: &'a HaarWavelet,
    config: SolverConfig,
    gamma: f64,
    diff_ops: Vec<DiffOperator>,
}

impl<'a> AdmmSolver<'a> {
    pub fn new(
        sensing: &'a SensingOperator,
        psf: &'a PsfOperator,
        wavelet: &'a HaarWavelet,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        let shape = psf.shape();
        if sensing.shape() != shape || wavelet.shape() != shape {
            return Err(Error::dims(
                format!("{}x{} for all operators", shape.0, shape.1),
                format!(
                    "sensing {:?}, wavelet {:?}",
                    sensing.shape(),
                    wavelet.shape()
                ),
            ));
        }
        let gamma = config.gamma.unwrap_or_else(|| default_gamma(psf));
        Ok(Self {
            sensing,
            psf,
            wavelet,
            config,
            gamma,
            diff_ops: DiffOperator::all(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Step used by the proximal-gradient x-update.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `Aᵗ v = Ψᵗ Φᵗ v`.
    pub fn a_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        let (h, w) = self.psf.shape();
        let img = Image::from_vec(h, w, self.sensing.adjoint(v)?);
        self.wavelet.forward(&img)
    }

    /// `A a = Φ Ψ a`.
    pub fn a_apply(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.sensing.apply(self.wavelet.inverse(a)?.data())
    }

    /// `a⁰ = Aᵗy`, `w⁰ = a⁰`, `λ⁰ = 0` and `x⁰` the Tikhonov deconvolution
    /// of `Ψa⁰` (the p = 2 x-update with zero multipliers).
    pub fn initialize(&self, y: &[f64]) -> Result<AdmmState> {
        if y.len() != self.sensing.m() {
            return Err(Error::dims(self.sensing.m(), y.len()));
        }
        let n = self.sensing.n();
        let (h, w) = self.psf.shape();
        let a = self.a_adjoint(y)?;
        let mut state = AdmmState {
            w: a.clone(),
            a,
            x: Image::zeros(h, w),
            lambda1: vec![0.0; n],
            lambda2: vec![0.0; n],
            iter: 0,
            rel_change: f64::INFINITY,
            residual_history: Vec::new(),
        };
        state.x = self.update_x_l2(&state)?;
        Ok(state)
    }

    /// `w = prox_{‖·‖₁/β}(a - λ₁/β)`.
    pub fn update_w(&self, state: &AdmmState) -> Vec<f64> {
        let beta = self.config.beta;
        state
            .a
            .iter()
            .zip(&state.lambda1)
            .map(|(a, l)| prox::soft_threshold(a - l / beta, 1.0 / beta))
            .collect()
    }

    /// `βHᵗΨa - Hᵗλ₂`, the right-hand side shared by the x-updates.
    fn x_rhs(&self, state: &AdmmState) -> Result<Image> {
        let (h, w) = self.psf.shape();
        let psi_a = self.wavelet.inverse(&state.a)?;
        let beta = self.config.beta;
        let mut v = psi_a.into_vec();
        for (vi, li) in v.iter_mut().zip(&state.lambda2) {
            *vi = beta * *vi - li;
        }
        self.psf.adjoint(&Image::from_vec(h, w, v))
    }

    /// Exact minimizer for `p = 2`: `[βHᵗH + 2αI]⁻¹ [βHᵗΨa - Hᵗλ₂]`.
    pub fn update_x_l2(&self, state: &AdmmState) -> Result<Image> {
        let rhs = self.x_rhs(state)?;
        self.psf.solve_tikhonov(&rhs, self.config.beta, self.config.alpha)
    }

    /// Gradient of `h(x) = ½‖Ψa - Hx - λ₂/β‖²`: `-Hᵗ(Ψa - Hx - λ₂/β)`.
    pub fn smooth_gradient(&self, state: &AdmmState, x: &Image) -> Result<Image> {
        let r = self.smooth_residual(state, x)?;
        Ok(self.psf.adjoint(&r)?.map(|v| -v))
    }

    /// `h(x)`.
    pub fn smooth_objective(&self, state: &AdmmState, x: &Image) -> Result<f64> {
        let r = self.smooth_residual(state, x)?;
        Ok(0.5 * r.dot(&r))
    }

    fn smooth_residual(&self, state: &AdmmState, x: &Image) -> Result<Image> {
        let psi_a = self.wavelet.inverse(&state.a)?;
        let hx = self.psf.apply(x)?;
        let beta = self.config.beta;
        let (h, w) = self.psf.shape();
        let r = psi_a
            .data()
            .iter()
            .zip(hx.data())
            .zip(&state.lambda2)
            .map(|((p, q), l)| p - q - l / beta)
            .collect();
        Ok(Image::from_vec(h, w, r))
    }

    /// One proximal-gradient step from `xᵏ⁻¹`:
    /// `prox_{αγ‖·‖_p^p/β}(x - γ h'(x))`.
    pub fn update_x_lp(&self, state: &AdmmState) -> Result<Image> {
        self.update_x_lp_from(state, &state.x)
    }

    pub(crate) fn update_x_lp_from(&self, state: &AdmmState, x: &Image) -> Result<Image> {
        let p = self.config.prior.exponent();
        let grad = self.smooth_gradient(state, x)?;
        let gamma = self.gamma;
        let point: Vec<f64> = x
            .data()
            .iter()
            .zip(grad.data())
            .map(|(xi, gi)| xi - gamma * gi)
            .collect();
        let k = self.config.alpha * gamma / self.config.beta;
        let out = if p == 1.0 {
            prox::prox_l1(&point, k)
        } else {
            let params = ProxParams {
                k,
                p,
                newton_tol: self.config.newton_tol,
                newton_max_iter: self.config.newton_max_iter,
            };
            prox::prox_lp_with(&point, &params)?
        };
        Ok(Image::from_vec(x.height(), x.width(), out))
    }

    /// IRLS rounds for the generalized-TV x-update, each solved by
    /// Jacobi-preconditioned CG warm-started from the previous iterate.
    pub fn update_x_gtv(&self, state: &AdmmState) -> Result<Image> {
        let p = self.config.prior.exponent();
        let rhs = self.x_rhs(state)?;
        let mut x = state.x.clone();
        for _ in 0..self.config.gtv_inner_iter {
            let system = GtvSystem::new(self.psf, &self.diff_ops, &x, self.config.beta, self.config.alpha, p, self.config.gtv_epsilon);
            let mut sol = x.data().to_vec();
            system.solve(rhs.data(), &mut sol, self.config.cg_tol, self.config.cg_max_iter)?;
            x = Image::from_vec(x.height(), x.width(), sol);
        }
        Ok(x)
    }

    pub fn update_x(&self, state: &AdmmState) -> Result<Image> {
        match self.config.prior {
            Prior::Lp { p } if p == 2.0 => self.update_x_l2(state),
            Prior::Lp { .. } => self.update_x_lp(state),
            Prior::Gtv { .. } => self.update_x_gtv(state),
        }
    }

    /// Right-hand side of the a-update:
    /// `(1/μ)Aᵗy + λ₁ + Ψᵗλ₂ + βw + βΨᵗHx`.
    pub fn a_rhs(&self, state: &AdmmState, y: &[f64]) -> Result<Vec<f64>> {
        let (h, w) = self.psf.shape();
        let beta = self.config.beta;
        let aty = self.a_adjoint(y)?;
        let hx = self.psf.apply(&state.x)?;
        let mut img = hx.into_vec();
        for (v, l) in img.iter_mut().zip(&state.lambda2) {
            *v = beta * *v + l;
        }
        let psi_t = self.wavelet.forward(&Image::from_vec(h, w, img))?;
        let inv_mu = 1.0 / self.config.mu;
        Ok((0..aty.len())
            .map(|i| inv_mu * aty[i] + state.lambda1[i] + beta * state.w[i] + psi_t[i])
            .collect())
    }

    /// Solves `((1/μ)AᵗA + 2βI) a = rhs` in closed form. With `AAᵗ = I` the
    /// Woodbury identity reduces the inverse to
    /// `(I - AᵗA / (1 + 2βμ)) / (2β)`.
    pub fn solve_a(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let beta = self.config.beta;
        let c = 1.0 / (1.0 + 2.0 * beta * self.config.mu);
        let back = self.a_adjoint(&self.a_apply(rhs)?)?;
        Ok(rhs
            .iter()
            .zip(&back)
            .map(|(r, b)| (r - c * b) / (2.0 * beta))
            .collect())
    }

    pub fn update_a(&self, state: &AdmmState, y: &[f64]) -> Result<Vec<f64>> {
        self.solve_a(&self.a_rhs(state, y)?)
    }

    /// `λ₁ ← λ₁ - β(a - w)`, `λ₂ ← λ₂ - β(Ψa - Hx)`.
    pub fn update_lambda(&self, state: &mut AdmmState) -> Result<PrimalResiduals> {
        let beta = self.config.beta;
        let r1 = linalg::sub(&state.a, &state.w);
        let psi_a = self.wavelet.inverse(&state.a)?;
        let hx = self.psf.apply(&state.x)?;
        let r2 = linalg::sub(psi_a.data(), hx.data());
        linalg::axpy(-beta, &r1, &mut state.lambda1);
        linalg::axpy(-beta, &r2, &mut state.lambda2);
        let res = PrimalResiduals {
            coefficient: linalg::norm(&r1),
            image: linalg::norm(&r2),
        };
        state.residual_history.push(res);
        Ok(res)
    }

    /// One full iteration `w → x → a → λ`.
    pub fn step(&self, state: &mut AdmmState, y: &[f64]) -> Result<()> {
        let k = state.iter + 1;
        state.w = self.update_w(state);
        if !linalg::all_finite(&state.w) {
            return Err(Error::NonFinite { step: "update_w", iteration: k });
        }
        let x_new = self.update_x(state)?;
        if !x_new.all_finite() {
            return Err(Error::NonFinite { step: "update_x", iteration: k });
        }
        let prev_norm = state.x.norm();
        let diff = linalg::dist(x_new.data(), state.x.data());
        state.rel_change = if prev_norm > 0.0 { diff / prev_norm } else { f64::INFINITY };
        state.x = x_new;
        state.a = self.update_a(state, y)?;
        if !linalg::all_finite(&state.a) {
            return Err(Error::NonFinite { step: "update_a", iteration: k });
        }
        self.update_lambda(state)?;
        if !linalg::all_finite(&state.lambda1) || !linalg::all_finite(&state.lambda2) {
            return Err(Error::NonFinite { step: "update_lambda", iteration: k });
        }
        state.iter = k;
        Ok(())
    }

    pub fn run(&self, y: &[f64]) -> Result<(Image, ConvergenceReport)> {
        let start = Instant::now();
        let mut state = self.initialize(y)?;
        let mut converged = false;
        while state.iter < self.config.max_iter {
            self.step(&mut state, y)?;
            if state.rel_change < self.config.rel_tol {
                converged = true;
                break;
            }
        }
        let final_residuals = *state
            .residual_history
            .last()
            .expect("at least one iteration ran");
        let report = ConvergenceReport {
            iterations: state.iter,
            converged,
            rel_change: state.rel_change,
            final_residuals,
            residual_history: state.residual_history,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        Ok((state.x, report))
    }
}

/// `0.9 / max|ĥ|²`.
pub fn default_gamma(psf: &PsfOperator) -> f64 {
    0.9 / psf.lipschitz()
}

/// Reconstructs `x` from `y = ΦHx + n`.
pub fn admm_reconstruct(
    y: &[f64],
    sensing: &SensingOperator,
    psf: &PsfOperator,
    wavelet: &HaarWavelet,
    config: &SolverConfig,
) -> Result<(Image, ConvergenceReport)> {
    AdmmSolver::new(sensing, psf, wavelet, config.clone())?.run(y)
}

/// Reweighted normal equations of the generalized-TV x-update:
/// `[βHᵗH + αp Σ_d 2^(1-o(d)) ΔdᵗBdΔd] x = rhs` with
/// `Bd(i,i) = ((Δd x⁰)_i² + ε)^((p-2)/2)` frozen at the linearization point.
pub struct GtvSystem<'a> {
    psf: &'a PsfOperator,
    ops: &'a [DiffOperator],
    coeffs: Vec<f64>,
    weights: Vec<Vec<f64>>,
    beta: f64,
    height: usize,
    width: usize,
}

impl<'a> GtvSystem<'a> {
    pub fn new(
        psf: &'a PsfOperator,
        ops: &'a [DiffOperator],
        at: &Image,
        beta: f64,
        alpha: f64,
        p: f64,
        epsilon: f64,
    ) -> Self {
        let exponent = (p - 2.0) / 2.0;
        let weights = ops
            .iter()
            .map(|d| {
                d.apply(at)
                    .data()
                    .iter()
                    .map(|v| (v * v + epsilon).powf(exponent))
                    .collect()
            })
            .collect();
        let coeffs = ops
            .iter()
            .map(|d| alpha * p * 2f64.powi(1 - d.order() as i32))
            .collect();
        Self {
            psf,
            ops,
            coeffs,
            weights,
            beta,
            height: at.height(),
            width: at.width(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let img = Image::from_vec(self.height, self.width, x.to_vec());
        let mut out = self.psf.normal(&img)?.into_vec();
        for v in out.iter_mut() {
            *v *= self.beta;
        }
        for ((d, c), b) in self.ops.iter().zip(&self.coeffs).zip(&self.weights) {
            if *c == 0.0 {
                continue;
            }
            let mut dx = d.apply(&img);
            for (v, wi) in dx.data_mut().iter_mut().zip(b) {
                *v *= wi;
            }
            linalg::axpy(*c, d.adjoint(&dx).data(), &mut out);
        }
        Ok(out)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![self.beta * self.psf.kernel_energy(); self.height * self.width];
        for ((d, c), b) in self.ops.iter().zip(&self.coeffs).zip(&self.weights) {
            linalg::axpy(*c, &d.weighted_normal_diagonal(b, self.height, self.width), &mut diag);
        }
        diag
    }

    pub fn solve(&self, rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
        let diag = self.diagonal();
        pcg(|v| self.apply(v), &diag, rhs, x, tol, max_iter)
    }
}
