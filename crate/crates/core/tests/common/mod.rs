#![allow(dead_code)]

use csdecon::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    Image::new(h, w, random_vec(rng, h * w)).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    d / norm(b).max(f64::MIN_POSITIVE)
}

/// `|⟨Fx, y⟩ - ⟨x, Fᵗy⟩|` relative to the product of norms.
pub fn adjoint_gap(fx: &[f64], y: &[f64], x: &[f64], fty: &[f64]) -> f64 {
    let lhs = dot(fx, y);
    let rhs = dot(x, fty);
    (lhs - rhs).abs() / (norm(fx) * norm(y)).max(norm(x) * norm(fty)).max(f64::MIN_POSITIVE)
}

/// Direct periodic convolution with the kernel centre at the origin.
pub fn direct_convolution(kernel: &Image, x: &Image) -> Image {
    let (h, w) = x.shape();
    let (ch, cw) = (kernel.height() as isize / 2, kernel.width() as isize / 2);
    Image::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for i in 0..kernel.height() {
            for j in 0..kernel.width() {
                let rr = (r as isize - (i as isize - ch)).rem_euclid(h as isize) as usize;
                let cc = (c as isize - (j as isize - cw)).rem_euclid(w as isize) as usize;
                acc += kernel.get(i, j) * x.get(rr, cc);
            }
        }
        acc
    })
}

/// Minimizer of `K|x|^p + ½(x - x0)²` by grid search: a coarse pass over
/// `[0, |x0|]`, then a `1e-6` pass around the coarse winner.
pub fn grid_prox(x0: f64, k: f64, p: f64) -> f64 {
    let target = x0.abs();
    let f = |q: f64| k * q.powf(p) + 0.5 * (q - target) * (q - target);
    let search = |lo: f64, hi: f64, step: f64| {
        let n = ((hi - lo) / step).ceil() as usize;
        let mut best = (f(lo), lo);
        for i in 1..=n {
            let q = (lo + i as f64 * step).min(hi);
            let v = f(q);
            if v < best.0 {
                best = (v, q);
            }
        }
        best.1
    };
    let coarse_step = (target / 2000.0).max(1e-6);
    let q = search(0.0, target, coarse_step);
    let fine = search((q - 2.0 * coarse_step).max(0.0), (q + 2.0 * coarse_step).min(target), 1e-6);
    fine.copysign(x0)
}
