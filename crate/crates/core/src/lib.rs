//! Decoder pullback geometry and geometry-filtered membership inference for
//! small latent diffusion models.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: dense linear algebra, seeded RNG streams, FFT.
//! * [`models`]: toy β-VAE and latent noise predictor with exact JVP/VJP.
//! * [`geometry`]: pullback metric, randomized top-K spectrum, per-dimension influence.
//! * [`attacks`]: Loss / SimA / SecMI / PIA statistics, dimension masks, frequency filter.
//! * [`eval`]: ROC metrics, distortion quartiles, probe-time sweeps, spectral energy.
//! * [`harness`]: configuration, data, the end-to-end pipeline and reporting.

pub mod attacks;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};
