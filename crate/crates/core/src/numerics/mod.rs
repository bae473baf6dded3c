//! Dense linear algebra, seeded random streams, 2-D FFT and small statistics.

mod fft;
mod linalg;
mod matrix;
mod rng;
mod stats;

pub use fft::{centered_radius, fft2_forward, fft2_inverse, fft2_inverse_complex, Image, Spectrum2D};
pub use linalg::{qr_orthonormalize, singular_values, symmetric_eigenvalues, RANK_TOLERANCE};
pub use matrix::{dot, norm2, Matrix};
pub use rng::{normal_vec, RngStream};
pub use stats::{mean, pearson_r, quantile_linear, std_dev};
pub use rustfft::num_complex::Complex64;

