//! Fields on the parity-extended periodic box and the spectral operators
//! acting on them.

mod fft;
pub(crate) mod field;
mod grid;
pub(crate) mod ops;

pub use field::{
    forward_transform, forward_transform_unfiltered, inverse_transform, quadrature_inner,
    quadrature_norm_sq, Parity, SpectralField, IMAGINARY_RESIDUE_TOL,
};
pub(crate) use field::{forward_many, inverse_many};
pub use grid::{compute_lambda, Grid, DEFAULT_DEALIAS_FRACTION};
pub use ops::{
    dealias, divergence, gradient, inverse_laplacian_zero_mean, laplacian, leray_project,
    parity_project, ZERO_MEAN_TOL,
};

pub use rustfft::num_complex::Complex64;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpectralError {
    #[error("{axis} = {value}: grid dimensions must be even and at least 4")]
    InvalidDimension { axis: &'static str, value: usize },
    #[error("box length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("dealias fraction must lie in (0, 1], got {0}")]
    InvalidDealiasFraction(f64),
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("imaginary residue {residue:e} exceeds tolerance relative to {scale:e}")]
    ImaginaryResidue { residue: f64, scale: f64 },
    #[error("zero mode {mean:e} is not negligible against norm {norm:e}")]
    NonZeroMean { mean: f64, norm: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected parity {expected:?}, got {got:?}")]
    ParityMismatch { expected: Parity, got: Parity },
}
