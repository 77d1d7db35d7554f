//! Dense linear algebra and signal-processing kernels.

pub mod conv;
pub mod eig;
pub mod fft;
pub mod matrix;
pub mod norm;

pub use conv::{direct_causal_conv, fft_causal_conv, FilterBankConv};
pub use eig::{symmetric_eig, SymmetricEigen};
pub use fft::FftPlan;
pub use matrix::{axpy, dot, norm2, Matrix, Sequence};
pub use norm::{operator_norm, spectral_norm, SpectralNormEstimate};
