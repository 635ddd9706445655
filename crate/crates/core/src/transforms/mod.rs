//! Sparsifying basis, sensing operator and finite differences.

pub mod diff;
pub mod srm;
pub mod wavelet;

pub use diff::{DiffDirection, DiffOperator};
pub use srm::SensingOperator;
pub use wavelet::HaarWavelet;
