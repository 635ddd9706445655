mod common;

use common::*;
use csdecon::admm::GtvSystem;
use csdecon::phantoms::gaussian_psf;
use csdecon::prox::soft_threshold;
use csdecon::{AdmmSolver, AdmmState, DiffOperator, HaarWavelet, Image, Prior, PsfOperator, SensingOperator, SolverConfig};
use nalgebra::{DMatrix, DVector};

struct Ops {
    sensing: SensingOperator,
    psf: PsfOperator,
    wavelet: HaarWavelet,
}

fn ops(n: usize, m: usize, kernel: &Image, seed: u64) -> Ops {
    Ops {
        sensing: SensingOperator::new(n, n, m, seed).unwrap(),
        psf: PsfOperator::new(kernel, n, n).unwrap(),
        wavelet: HaarWavelet::new(2, n, n).unwrap(),
    }
}

fn smooth_kernel() -> Image {
    Image::new(3, 3, vec![0.0, 0.1, 0.0, 0.1, 0.6, 0.1, 0.0, 0.1, 0.0]).unwrap()
}

fn random_state(g: &mut rand_chacha::ChaCha8Rng, n: usize) -> AdmmState {
    let len = n * n;
    AdmmState {
        a: random_vec(g, len),
        w: random_vec(g, len),
        x: random_image(g, n, n),
        lambda1: random_vec(g, len),
        lambda2: random_vec(g, len),
        iter: 0,
        rel_change: f64::INFINITY,
        residual_history: Vec::new(),
    }
}

fn solver<'a>(o: &'a Ops, config: SolverConfig) -> AdmmSolver<'a> {
    AdmmSolver::new(&o.sensing, &o.psf, &o.wavelet, config).unwrap()
}

#[test]
fn w_update_cases() {
    let o = ops(4, 8, &Image::filled(1, 1, 1.0), 1);
    let s = solver(&o, SolverConfig::lp(1.0, 0.1, 1.0, 1.0));
    let mut g = rng(1);
    let mut st = random_state(&mut g, 4);
    st.a = vec![0.0; 16];
    st.lambda1 = vec![0.0; 16];
    assert!(s.update_w(&st).iter().all(|v| *v == 0.0));
    st.a[0] = 3.0;
    assert_eq!(s.update_w(&st)[0], 2.0);

    let big = solver(&o, SolverConfig::lp(1.0, 0.1, 1.0, 1e12));
    let st = random_state(&mut g, 4);
    for (i, w) in big.update_w(&st).iter().enumerate() {
        assert!((w - (st.a[i] - st.lambda1[i] / 1e12)).abs() < 1e-9);
    }
    let mid = solver(&o, SolverConfig::lp(1.0, 0.1, 1.0, 2.5));
    for (i, w) in mid.update_w(&st).iter().enumerate() {
        assert_eq!(*w, soft_threshold(st.a[i] - st.lambda1[i] / 2.5, 0.4));
    }
}

#[test]
fn l2_update_identity_blur() {
    let o = ops(8, 32, &Image::filled(1, 1, 1.0), 2);
    let (alpha, beta) = (0.3, 2.0);
    let s = solver(&o, SolverConfig::lp(2.0, alpha, 1.0, beta));
    let mut g = rng(2);
    let mut st = random_state(&mut g, 8);
    st.lambda2 = vec![0.0; 64];
    let x = s.update_x_l2(&st).unwrap();
    let psi_a = o.wavelet.inverse(&st.a).unwrap();
    for (xi, pi) in x.data().iter().zip(psi_a.data()) {
        assert!((xi - beta / (beta + 2.0 * alpha) * pi).abs() < 1e-12);
    }
}

#[test]
fn l2_update_residual() {
    let mut g = rng(3);
    let kernel = random_image(&mut g, 5, 5);
    let o = ops(16, 100, &kernel, 3);
    let (alpha, beta) = (0.2, 5.0);
    let s = solver(&o, SolverConfig::lp(2.0, alpha, 1.0, beta));
    let st = random_state(&mut g, 16);
    let x = s.update_x_l2(&st).unwrap();
    let lhs: Vec<f64> = o
        .psf
        .adjoint(&o.psf.apply(&x).unwrap())
        .unwrap()
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| beta * a + 2.0 * alpha * b)
        .collect();
    let psi_a = o.wavelet.inverse(&st.a).unwrap();
    let inner: Vec<f64> = psi_a.data().iter().zip(&st.lambda2).map(|(p, l)| beta * p - l).collect();
    let rhs = o.psf.adjoint(&Image::new(16, 16, inner).unwrap()).unwrap();
    assert!(rel_err(&lhs, rhs.data()) < 1e-10);
}

fn smooth_h(o: &Ops, st: &AdmmState, x: &Image, beta: f64) -> f64 {
    let psi_a = o.wavelet.inverse(&st.a).unwrap();
    let hx = o.psf.apply(x).unwrap();
    psi_a
        .data()
        .iter()
        .zip(hx.data())
        .zip(&st.lambda2)
        .map(|((p, h), l)| (p - h - l / beta).powi(2))
        .sum::<f64>()
        * 0.5
}

#[test]
fn gradient_matches_finite_differences() {
    let mut g = rng(4);
    let kernel = random_image(&mut g, 3, 3);
    let o = ops(8, 20, &kernel, 4);
    let beta = 3.0;
    let s = solver(&o, SolverConfig::lp(1.5, 0.1, 1.0, beta));
    let st = random_state(&mut g, 8);
    let x = random_image(&mut g, 8, 8);
    let grad = s.smooth_gradient(&st, &x).unwrap();
    let step = 1e-5;
    let fd: Vec<f64> = (0..64)
        .map(|i| {
            let mut up = x.clone();
            up.data_mut()[i] += step;
            let mut down = x.clone();
            down.data_mut()[i] -= step;
            (smooth_h(&o, &st, &up, beta) - smooth_h(&o, &st, &down, beta)) / (2.0 * step)
        })
        .collect();
    assert!(rel_err(grad.data(), &fd) < 1e-6);
    assert!((s.smooth_objective(&st, &x).unwrap() - smooth_h(&o, &st, &x, beta)).abs() < 1e-12);
}

#[test]
fn lp_update_fixed_point_and_threshold() {
    let o = ops(8, 30, &smooth_kernel(), 5);
    let beta = 2.0;
    let mut g = rng(5);
    let mut st = random_state(&mut g, 8);
    // Minimizer of the smooth part: H x = Ψa - λ₂/β.
    let psi_a = o.wavelet.inverse(&st.a).unwrap();
    let target: Vec<f64> = psi_a.data().iter().zip(&st.lambda2).map(|(p, l)| p - l / beta).collect();
    let target = Image::new(8, 8, target).unwrap();
    let x_star = o.psf.solve_tikhonov(&o.psf.adjoint(&target).unwrap(), 1.0, 0.0).unwrap();
    st.x = x_star.clone();
    let tiny = solver(&o, SolverConfig::lp(1.0, 1e-300, 1.0, beta));
    let next = tiny.update_x_lp(&st).unwrap();
    assert!(rel_err(next.data(), x_star.data()) < 1e-10);

    let alpha = 0.4;
    let s = solver(&o, SolverConfig::lp(1.0, alpha, 1.0, beta));
    st.x = random_image(&mut g, 8, 8);
    let grad = s.smooth_gradient(&st, &st.x).unwrap();
    let k = alpha * s.gamma() / beta;
    let expected: Vec<f64> = st
        .x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(x, gr)| soft_threshold(x - s.gamma() * gr, k))
        .collect();
    assert_eq!(s.update_x_lp(&st).unwrap().data(), &expected[..]);
}

#[test]
fn lp_iterations_converge_to_l2_solution() {
    let kernel = gaussian_psf(5, 1.0).unwrap();
    let o = ops(16, 128, &kernel, 6);
    let config = SolverConfig::lp(2.0, 0.5, 1.0, 1.0);
    let s = solver(&o, config);
    let mut g = rng(6);
    let mut st = random_state(&mut g, 16);
    let exact = s.update_x_l2(&st).unwrap();
    st.x = Image::zeros(16, 16);
    for _ in 0..200 {
        st.x = s.update_x_lp(&st).unwrap();
    }
    assert!(rel_err(st.x.data(), exact.data()) < 1e-4);
}

/// `[βHᵗH + αp Σ 2^(1-o) ΔᵗBΔ] x`, assembled from the public operators.
fn gtv_operator(psf: &PsfOperator, at: &Image, x: &Image, beta: f64, alpha: f64, p: f64, eps: f64) -> Vec<f64> {
    let mut out: Vec<f64> = psf.adjoint(&psf.apply(x).unwrap()).unwrap().data().iter().map(|v| beta * v).collect();
    for d in DiffOperator::all() {
        let c = alpha * p * 2f64.powi(1 - d.order() as i32);
        let weights: Vec<f64> = d.apply(at).data().iter().map(|v| (v * v + eps).powf((p - 2.0) / 2.0)).collect();
        let mut dx = d.apply(x);
        for (v, wt) in dx.data_mut().iter_mut().zip(&weights) {
            *v *= wt;
        }
        for (o, v) in out.iter_mut().zip(d.adjoint(&dx).data()) {
            *o += c * v;
        }
    }
    out
}

#[test]
fn gtv_system_matches_assembled_operator_and_solves() {
    let mut g = rng(7);
    let o = ops(16, 100, &smooth_kernel(), 7);
    let at = random_image(&mut g, 16, 16);
    let ops_all = DiffOperator::all();
    let (beta, alpha, p, eps) = (10.0, 0.1, 0.8, 1e-4);
    let system = GtvSystem::new(&o.psf, &ops_all, &at, beta, alpha, p, eps);
    let v = random_image(&mut g, 16, 16);
    let applied = system.apply(v.data()).unwrap();
    assert!(rel_err(&applied, &gtv_operator(&o.psf, &at, &v, beta, alpha, p, eps)) < 1e-12);

    let rhs = random_vec(&mut g, 256);
    let mut sol = at.data().to_vec();
    system.solve(&rhs, &mut sol, 1e-8, 2000).unwrap();
    let sol = Image::new(16, 16, sol).unwrap();
    assert!(rel_err(&gtv_operator(&o.psf, &at, &sol, beta, alpha, p, eps), &rhs) < 1e-6);
}

#[test]
fn gtv_diagonal_matches_assembled_operator() {
    let mut g = rng(8);
    let o = ops(8, 30, &smooth_kernel(), 8);
    let at = random_image(&mut g, 8, 8);
    let ops_all = DiffOperator::all();
    let system = GtvSystem::new(&o.psf, &ops_all, &at, 3.0, 0.2, 0.7, 1e-3);
    let diag = system.diagonal();
    for i in 0..64 {
        let mut e = vec![0.0; 64];
        e[i] = 1.0;
        let col = gtv_operator(&o.psf, &at, &Image::new(8, 8, e).unwrap(), 3.0, 0.2, 0.7, 1e-3);
        assert!((col[i] - diag[i]).abs() < 1e-10 * diag[i]);
    }
}

#[test]
fn gtv_update_with_vanishing_alpha_is_spectral() {
    let o = ops(16, 100, &smooth_kernel(), 9);
    let mut g = rng(9);
    let st = random_state(&mut g, 16);
    let mut config = SolverConfig::gtv(1e-14, 1.0, 4.0);
    config.cg_tol = 1e-10;
    let s = solver(&o, config);
    let gtv = s.update_x_gtv(&st).unwrap();
    let spectral = o.psf.solve_tikhonov(
        &o.psf
            .adjoint(&Image::new(
                16,
                16,
                o.wavelet.inverse(&st.a).unwrap().data().iter().zip(&st.lambda2).map(|(p, l)| 4.0 * p - l).collect(),
            )
            .unwrap())
            .unwrap(),
        4.0,
        0.0,
    )
    .unwrap();
    assert!(rel_err(gtv.data(), spectral.data()) < 1e-6);
}

#[test]
fn gtv_update_from_constant_image() {
    let o = ops(16, 100, &smooth_kernel(), 10);
    let mut g = rng(10);
    let mut st = random_state(&mut g, 16);
    st.x = Image::filled(16, 16, 0.5);
    let mut config = SolverConfig::gtv(0.1, 1.0, 10.0);
    config.cg_max_iter = 2000;
    let s = solver(&o, config);
    let x = s.update_x_gtv(&st).unwrap();
    assert!(x.all_finite());
}

fn dense_a(o: &Ops, s: &AdmmSolver) -> DMatrix<f64> {
    let n = o.sensing.n();
    let m = o.sensing.m();
    let mut a = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (i, v) in s.a_apply(&e).unwrap().iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    a
}

#[test]
fn a_update_matches_dense_solve() {
    for m in [32, 64] {
        let o = ops(8, m, &smooth_kernel(), 11);
        let (mu, beta) = (0.05, 3.0);
        let s = solver(&o, SolverConfig::lp(1.0, 0.1, mu, beta));
        let a = dense_a(&o, &s);
        let system = a.transpose() * &a / mu + DMatrix::<f64>::identity(64, 64) * (2.0 * beta);
        let mut g = rng(12);
        let st = random_state(&mut g, 8);
        let y = random_vec(&mut g, m);
        let rhs = s.a_rhs(&st, &y).unwrap();
        let dense = system.clone().lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
        let fast = s.update_a(&st, &y).unwrap();
        assert!(rel_err(&fast, dense.as_slice()) < 1e-10, "m={m}");
        let resid = &system * DVector::from_column_slice(&fast) - DVector::from_column_slice(&rhs);
        assert!(resid.norm() / norm(&rhs) < 1e-10);
    }
}

#[test]
fn a_update_residual_at_256() {
    let o = ops(16, 90, &smooth_kernel(), 13);
    let (mu, beta) = (1e-2, 7.0);
    let s = solver(&o, SolverConfig::lp(1.0, 0.1, mu, beta));
    let mut g = rng(13);
    let st = random_state(&mut g, 16);
    let y = random_vec(&mut g, 90);
    let rhs = s.a_rhs(&st, &y).unwrap();
    let a = s.solve_a(&rhs).unwrap();
    let ata = s.a_adjoint(&s.a_apply(&a).unwrap()).unwrap();
    let lhs: Vec<f64> = ata.iter().zip(&a).map(|(u, v)| u / mu + 2.0 * beta * v).collect();
    assert!(rel_err(&lhs, &rhs) < 1e-10);
}

#[test]
fn a_update_without_data_term() {
    let o = ops(8, 20, &smooth_kernel(), 14);
    let beta = 2.0;
    let s = solver(&o, SolverConfig::lp(1.0, 0.1, 1e12, beta));
    let mut g = rng(14);
    let st = random_state(&mut g, 8);
    let hx = o.psf.apply(&st.x).unwrap();
    let img: Vec<f64> = hx.data().iter().zip(&st.lambda2).map(|(h, l)| beta * h + l).collect();
    let psi_t = o.wavelet.forward(&Image::new(8, 8, img).unwrap()).unwrap();
    let expected: Vec<f64> = (0..64).map(|i| (st.lambda1[i] + beta * st.w[i] + psi_t[i]) / (2.0 * beta)).collect();
    let y = random_vec(&mut g, 20);
    assert!(rel_err(&s.update_a(&st, &y).unwrap(), &expected) < 1e-10);
}

#[test]
fn multiplier_update() {
    let o = ops(4, 8, &Image::filled(1, 1, 1.0), 15);
    let s = solver(&o, SolverConfig::lp(1.0, 0.1, 1.0, 2.0));
    let mut g = rng(15);
    let mut st = random_state(&mut g, 4);
    st.w = st.a.clone();
    st.x = o.wavelet.inverse(&st.a).unwrap();
    let before = (st.lambda1.clone(), st.lambda2.clone());
    let res = s.update_lambda(&mut st).unwrap();
    assert_eq!(st.lambda1, before.0);
    assert!(rel_err(&st.lambda2, &before.1) < 1e-14);
    assert!(res.combined() < 1e-24);

    st.a = vec![0.0; 16];
    st.a[0] = 1.0;
    st.w = vec![0.0; 16];
    st.lambda1 = vec![0.0; 16];
    st.x = o.wavelet.inverse(&st.a).unwrap();
    s.update_lambda(&mut st).unwrap();
    assert!((st.lambda1[0] + 2.0).abs() < 1e-15);
    assert_eq!(st.residual_history.len(), 2);
}

fn spikes(n: usize) -> Image {
    let mut x = Image::zeros(n, n);
    for (r, c, v) in [(1, 2, 1.0), (3, 6, -0.7), (5, 1, 0.5), (6, 5, 0.8)] {
        x.set(r, c, v);
    }
    x
}

#[test]
fn end_to_end_sparse_full_sampling() {
    let n = 8;
    let x = spikes(n);
    let o = ops(n, n * n, &smooth_kernel(), 16);
    let y = o.sensing.apply(o.psf.apply(&x).unwrap().data()).unwrap();
    let mut config = SolverConfig::lp(1.0, 1e-3, 1e-4, 1.0);
    config.rel_tol = 1e-6;
    config.max_iter = 5000;
    let (est, report) = csdecon::admm_reconstruct(&y, &o.sensing, &o.psf, &o.wavelet, &config).unwrap();
    let err = rel_err(est.data(), x.data());
    assert!(err < 0.1, "relative error {err} after {} iterations", report.iterations);
}

#[test]
fn loose_tolerance_stops_after_one_iteration() {
    let o = ops(8, 32, &smooth_kernel(), 17);
    let y = random_vec(&mut rng(17), 32);
    for prior in [Prior::Lp { p: 1.0 }, Prior::Lp { p: 2.0 }, Prior::Lp { p: 1.5 }] {
        let mut config = SolverConfig::new(prior, 0.1, 1e-3, 10.0);
        config.rel_tol = 1.0;
        let (_, report) = csdecon::admm_reconstruct(&y, &o.sensing, &o.psf, &o.wavelet, &config).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
    }
}

#[test]
fn max_iter_is_reported_not_raised() {
    let o = ops(8, 32, &smooth_kernel(), 18);
    let y = random_vec(&mut rng(18), 32);
    let mut config = SolverConfig::lp(1.0, 0.1, 1e-3, 10.0);
    config.rel_tol = 1e-12;
    config.max_iter = 3;
    let (x, report) = csdecon::admm_reconstruct(&y, &o.sensing, &o.psf, &o.wavelet, &config).unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 3);
    assert_eq!(report.residual_history.len(), 3);
    assert!(x.all_finite());
}

#[test]
fn runs_are_deterministic() {
    let o = ops(16, 80, &gaussian_psf(5, 1.0).unwrap(), 19);
    let y = random_vec(&mut rng(19), 80);
    for config in [SolverConfig::lp(1.0, 0.1, 1e-3, 10.0), SolverConfig::gtv(0.1, 1e-3, 10.0)] {
        let mut config = config;
        config.max_iter = 20;
        config.cg_max_iter = 2000;
        config.gtv_epsilon = 1e-4;
        let a = csdecon::admm_reconstruct(&y, &o.sensing, &o.psf, &o.wavelet, &config).unwrap();
        let b = csdecon::admm_reconstruct(&y, &o.sensing, &o.psf, &o.wavelet, &config).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.residual_history, b.1.residual_history);
    }
}

#[test]
fn rejects_invalid_configuration() {
    let o = ops(8, 32, &smooth_kernel(), 20);
    for config in [
        SolverConfig::lp(1.0, 0.0, 1.0, 1.0),
        SolverConfig::lp(1.0, 0.1, 1.0, 0.0),
        SolverConfig::lp(2.5, 0.1, 1.0, 1.0),
        SolverConfig::new(Prior::Gtv { p: 1.0 }, 0.1, 1.0, 1.0),
    ] {
        assert!(AdmmSolver::new(&o.sensing, &o.psf, &o.wavelet, config).is_err());
    }
    let wrong = SensingOperator::new(4, 16, 32, 1).unwrap();
    assert!(AdmmSolver::new(&wrong, &o.psf, &o.wavelet, SolverConfig::lp(1.0, 0.1, 1.0, 1.0)).is_err());
}
