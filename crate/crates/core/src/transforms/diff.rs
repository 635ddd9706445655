//! Periodic finite-difference operators used by the generalized TV prior.

use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiffDirection {
    H,
    V,
    HH,
    VV,
    HV,
}

impl DiffDirection {
    pub const ALL: [DiffDirection; 5] = [
        DiffDirection::H,
        DiffDirection::V,
        DiffDirection::HH,
        DiffDirection::VV,
        DiffDirection::HV,
    ];

    pub fn order(self) -> u32 {
        match self {
            DiffDirection::H | DiffDirection::V => 1,
            _ => 2,
        }
    }
}

/// A difference operator written as a periodic stencil:
/// `(Δx)(r, c) = Σ coeff · x(r - dr, c - dc)`.
///
/// `H` is `x(r, c) - x(r, c - 1)` (left neighbour), `V` is
/// `x(r, c) - x(r - 1, c)` (neighbour above); second orders are the
/// compositions `H∘H`, `V∘V` and `H∘V`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffOperator {
    direction: DiffDirection,
    stencil: Vec<(isize, isize, f64)>,
}

impl DiffOperator {
    pub fn new(direction: DiffDirection) -> Self {
        let stencil = match direction {
            DiffDirection::H => vec![(0, 0, 1.0), (0, 1, -1.0)],
            DiffDirection::V => vec![(0, 0, 1.0), (1, 0, -1.0)],
            DiffDirection::HH => vec![(0, 0, 1.0), (0, 1, -2.0), (0, 2, 1.0)],
            DiffDirection::VV => vec![(0, 0, 1.0), (1, 0, -2.0), (2, 0, 1.0)],
            DiffDirection::HV => vec![(0, 0, 1.0), (1, 0, -1.0), (0, 1, -1.0), (1, 1, 1.0)],
        };
        Self { direction, stencil }
    }

    pub fn all() -> Vec<DiffOperator> {
        DiffDirection::ALL.iter().map(|&d| Self::new(d)).collect()
    }

    pub fn direction(&self) -> DiffDirection {
        self.direction
    }

    pub fn order(&self) -> u32 {
        self.direction.order()
    }

    /// `(dr, dc, coeff)` taps of the stencil.
    pub fn stencil(&self) -> &[(isize, isize, f64)] {
        &self.stencil
    }

    pub fn apply(&self, x: &Image) -> Image {
        let mut out = Image::zeros(x.height(), x.width());
        apply_stencil(x, out.data_mut(), &self.stencil, 1);
        out
    }

    pub fn adjoint(&self, y: &Image) -> Image {
        let mut out = Image::zeros(y.height(), y.width());
        apply_stencil(y, out.data_mut(), &self.stencil, -1);
        out
    }

    /// Diagonal of `ΔᵗBΔ` for the diagonal weights `b`.
    pub fn weighted_normal_diagonal(&self, b: &[f64], height: usize, width: usize) -> Vec<f64> {
        let weights = Image::from_vec(height, width, b.to_vec());
        let mut out = vec![0.0; height * width];
        // Pixel p appears in row p + (dr, dc) of Δ with coefficient coeff.
        for &(dr, dc, coeff) in &self.stencil {
            let shifted = weights.roll(-dr, -dc);
            for (o, w) in out.iter_mut().zip(shifted.data()) {
                *o += coeff * coeff * w;
            }
        }
        out
    }
}

/// `out(r, c) += Σ coeff · x(r - sign·dr, c - sign·dc)` with wrap-around.
fn apply_stencil(x: &Image, out: &mut [f64], stencil: &[(isize, isize, f64)], sign: isize) {
    let (h, w) = (x.height(), x.width());
    let data = x.data();
    for &(dr, dc, coeff) in stencil {
        let shift = (sign * dc).rem_euclid(w as isize) as usize;
        for r in 0..h {
            let src_r = (r as isize - sign * dr).rem_euclid(h as isize) as usize;
            let src = &data[src_r * w..(src_r + 1) * w];
            let dst = &mut out[r * w..(r + 1) * w];
            // dst[c] += coeff · src[(c - shift) mod w], as two contiguous runs.
            let (dst_head, dst_tail) = dst.split_at_mut(shift);
            for (d, s) in dst_tail.iter_mut().zip(&src[..w - shift]) {
                *d += coeff * s;
            }
            for (d, s) in dst_head.iter_mut().zip(&src[w - shift..]) {
                *d += coeff * s;
            }
        }
    }
}
