"""Quick end-to-end check of the pycsdecon extension."""

import numpy as np

import pycsdecon as cs


def main():
    n = 32
    truth = cs.shepp_logan(n)
    assert truth.shape == (n, n)
    assert abs(truth.max() - 1.0) < 1e-12 and truth.min() >= 0.0

    kernel = cs.gaussian_psf(2.0, size=7)
    assert abs(kernel.sum() - 1.0) < 1e-12
    psf = cs.PsfOperator(kernel, n, n)

    rng = np.random.default_rng(0)
    u, v = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    lhs = np.vdot(psf.apply(u), v)
    rhs = np.vdot(u, psf.adjoint(v))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs), (lhs, rhs)

    wavelet = cs.HaarWavelet(n, n, levels=3)
    assert np.allclose(wavelet.inverse(wavelet.forward(u)), u, atol=1e-12)

    y, sensing, info = cs.acquire(truth, psf, 0.4, snr_db=40.0, seed=1)
    assert y.shape == (sensing.m,)
    assert sensing.m == cs.SensingOperator.measurement_count(n * n, 0.4)
    assert abs(info["realized_snr_db"] - 40.0) < 1.0
    back = sensing.apply(sensing.adjoint(y))
    assert np.allclose(back, y, atol=1e-10)

    cfg = cs.SolverConfig(alpha=0.1, mu=1e-5, beta=100.0, prior="gtv")
    cfg.max_iter = 50
    cfg.gtv_epsilon = 1e-4
    x, report = cs.admm_reconstruct(y, sensing, psf, wavelet, cfg)
    assert x.shape == (n, n) and np.isfinite(x).all()
    assert 1 <= report["iterations"] <= 50
    p_admm = cs.psnr(truth, x)

    xs, _ = cs.sequential_reconstruct(y, sensing, psf, wavelet, mu=1e-5, alpha=0.2)
    assert xs.shape == (n, n)

    assert cs.psnr(truth, truth) == float("inf")
    assert abs(cs.ssim(truth, truth) - 1.0) < 1e-12
    out = cs.prox_lp(np.array([-2.0, 0.1, 3.0]), 0.5, 1.0)
    assert np.allclose(out, [-1.5, 0.0, 2.5])

    try:
        cs.SensingOperator(4, 4, 17, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("m > n accepted")

    res = cs.run(phantom="shepp_logan", size=32, psf="gaussian", psf_size=7,
                 psf_variance=2.0, cs_ratio=0.4, snr_db=40, seed=1,
                 solver="admm_lp", p=1.5, alpha=0.1, mu=1e-5, beta=10, max_iter=40)
    assert res["estimate"].shape == (32, 32)
    print(f"pycsdecon ok: admm psnr {p_admm:.2f} dB, run psnr {res['psnr_db']:.2f} dB")


if __name__ == "__main__":
    main()
