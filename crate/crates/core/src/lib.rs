//! Compressive deconvolution for ultrasound imaging.
//!
//! Reconstructs a tissue reflectivity image `x` from compressed, blurred
//! measurements `y = Φ H x + n`, where `H` is a circular convolution with a
//! known PSF and `Φ` a structurally random sensing matrix. The main solver
//! ([`admm`]) works jointly on both problems; [`sequential`] provides the
//! two-stage baseline. [`phantoms`] and [`metrics`] cover simulation and
//! evaluation, and [`experiment`] runs whole grids of them.

pub mod admm;
pub mod cg;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod image;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod phantoms;
pub mod prox;
pub mod psf;
pub mod sequential;
pub mod transforms;

pub use admm::{admm_reconstruct, AdmmSolver, AdmmState, ConvergenceReport, Prior, SolverConfig};
pub use error::{Error, Result};
pub use image::Image;
pub use psf::PsfOperator;
pub use sequential::{sequential_reconstruct, SequentialConfig, SequentialReport};
pub use transforms::{DiffDirection, DiffOperator, HaarWavelet, SensingOperator};
