use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DecoderOracle, FiniteDifferenceJvp};
use crate::numerics::{qr_orthonormalize, singular_values, Matrix, RngStream};

/// How `J·V` is evaluated inside the randomized SVD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JvpMode {
    Exact,
    FiniteDifference { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandSvdConfig {
    pub rank: usize,
    pub oversampling: usize,
    pub power_iters: usize,
    pub jvp_mode: JvpMode,
}

impl Default for RandSvdConfig {
    fn default() -> Self {
        Self {
            rank: 20,
            oversampling: 30,
            power_iters: 2,
            jvp_mode: JvpMode::Exact,
        }
    }
}

impl RandSvdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("target rank must be >= 1".into()));
        }
        if let JvpMode::FiniteDifference { step } = self.jvp_mode {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
            }
        }
        Ok(())
    }
}

/// Top-K singular values of the decoder Jacobian and the log-volume
/// `S_K = Σ_{i≤K} log σ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub singular_values: Vec<f64>,
    pub log_volume: f64,
    /// Rank actually used (`min(K, d)`).
    pub rank: usize,
    /// Set when the requested rank exceeded the latent dimension.
    pub rank_clipped: bool,
}

impl SpectrumEstimate {
    /// Builds the estimate from descending singular values; any `σ_i ≤ 1e-12`
    /// makes the log-volume undefined.
    pub fn from_singular_values(values: Vec<f64>, rank_clipped: bool) -> Result<Self> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, &s)| !(s > 1e-12)) {
            return Err(Error::RankDeficient { index, value });
        }
        Ok(Self {
            log_volume: values.iter().map(|s| s.ln()).sum(),
            rank: values.len(),
            singular_values: values,
            rank_clipped,
        })
    }
}

fn apply_columns(
    v: &Matrix,
    f: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Matrix> {
    let cols = v
        .columns()
        .iter()
        .map(|c| f(c))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_columns(&cols)
}

fn orthonormalize(m: &Matrix) -> Result<Matrix> {
    qr_orthonormalize(m).map_err(|e| match e {
        Error::DegenerateInput { column } => Error::RankDeficient { index: column, value: 0.0 },
        other => other,
    })
}

/// Matrix-free randomized estimate of the top singular values of `J_D(z)`.
///
/// Draws a Gaussian `d×ℓ` test matrix (`ℓ = min(K + p, d)`), refines it with
/// `q` power passes through `JᵀJ`, projects `J` onto the resulting range and
/// takes the singular values of `Jᵀ Q`. Only JVP/VJP evaluations touch the
/// decoder.
pub fn randomized_topk_spectrum(
    oracle: &(impl DecoderOracle + ?Sized),
    z: &[f64],
    cfg: &RandSvdConfig,
    stream: RngStream,
) -> Result<SpectrumEstimate> {
    cfg.validate()?;
    match cfg.jvp_mode {
        JvpMode::Exact => randomized_impl(oracle, z, cfg, stream),
        JvpMode::FiniteDifference { step } => {
            let fd = FiniteDifferenceJvp { inner: oracle, step };
            randomized_impl(&fd, z, cfg, stream)
        }
    }
}

fn randomized_impl(
    oracle: &(impl DecoderOracle + ?Sized),
    z: &[f64],
    cfg: &RandSvdConfig,
    stream: RngStream,
) -> Result<SpectrumEstimate> {
    let d = oracle.latent_dim();
    if z.len() != d {
        return Err(Error::shape(format!("latent has length {}, decoder expects {d}", z.len())));
    }
    let rank = cfg.rank.min(d);
    let ell = (rank + cfg.oversampling).min(d);
    if oracle.data_dim() < ell {
        return Err(Error::shape(format!(
            "data dimension {} is smaller than the sketch width {ell}",
            oracle.data_dim()
        )));
    }
    let jac = |v: &[f64]| oracle.jvp(z, v);
    let jac_t = |y: &[f64]| oracle.vjp(z, y);

    let v0 = Matrix::from_row_major(d, ell, stream.normal_vec(d * ell))?;
    let mut v = orthonormalize(&v0)?;
    for _ in 0..cfg.power_iters {
        let y = apply_columns(&v, jac)?;
        let g = apply_columns(&y, jac_t)?;
        v = orthonormalize(&g)?;
    }
    let y = apply_columns(&v, jac)?;
    let q = orthonormalize(&y)?;
    let t = apply_columns(&q, jac_t)?;
    let mut sigma = singular_values(&t)?;
    sigma.truncate(rank);
    SpectrumEstimate::from_singular_values(sigma, cfg.rank > d)
}

/// Reference spectrum from the dense Jacobian.
pub fn dense_topk_spectrum(
    oracle: &(impl DecoderOracle + ?Sized),
    z: &[f64],
    rank: usize,
) -> Result<SpectrumEstimate> {
    let jac = super::metric::dense_jacobian(oracle, z)?;
    let mut sigma = singular_values(&jac)?;
    let k = rank.min(oracle.latent_dim());
    sigma.truncate(k);
    SpectrumEstimate::from_singular_values(sigma, rank > oracle.latent_dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, LinearDecoder, Mlp, MlpDecoder};

    fn gaussian_matrix(rows: usize, cols: usize, stream: u64) -> Matrix {
        Matrix::from_row_major(rows, cols, RngStream::new(41, stream).normal_vec(rows * cols)).unwrap()
    }

    #[test]
    fn diagonal_spectrum_is_exact() {
        let dec = LinearDecoder::new(Matrix::from_diag(&[4.0, 3.0, 2.0, 1.0]));
        let cfg = RandSvdConfig { rank: 2, ..Default::default() };
        let est = randomized_topk_spectrum(&dec, &[0.0; 4], &cfg, RngStream::new(1, 0)).unwrap();
        assert!((est.singular_values[0] - 4.0).abs() < 1e-12);
        assert!((est.singular_values[1] - 3.0).abs() < 1e-12);
        assert!((est.log_volume - (4f64.ln() + 3f64.ln())).abs() < 1e-12);
        assert!(!est.rank_clipped);
    }

    #[test]
    fn scaled_identity_with_clipped_rank() {
        let mut m = Matrix::zeros(5, 3);
        for i in 0..3 {
            m[(i, i)] = 2.0;
        }
        let dec = LinearDecoder::new(m);
        let est = randomized_topk_spectrum(&dec, &[0.0; 3], &RandSvdConfig::default(), RngStream::new(2, 0)).unwrap();
        assert_eq!(est.rank, 3);
        assert!(est.rank_clipped);
        assert!((est.log_volume - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn random_jacobian_matches_dense_svd() {
        let a = gaussian_matrix(32, 8, 0);
        let dense = singular_values(&a).unwrap();
        let dec = LinearDecoder::new(a);
        let cfg = RandSvdConfig { rank: 5, ..Default::default() };
        let est = randomized_topk_spectrum(&dec, &[0.0; 8], &cfg, RngStream::new(3, 0)).unwrap();
        for (e, r) in est.singular_values.iter().zip(&dense) {
            assert!((e - r).abs() <= 1e-6 * r, "{e} vs {r}");
        }
    }

    #[test]
    fn zero_jacobian_is_rank_deficient() {
        let dec = LinearDecoder::constant(3, vec![0.0; 6]);
        assert!(matches!(
            randomized_topk_spectrum(&dec, &[0.0; 3], &RandSvdConfig::default(), RngStream::new(4, 0)),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn low_rank_spectrum_is_rejected() {
        let dec = LinearDecoder::new(Matrix::from_diag(&[1.0, 1e-14, 1.0]));
        let err = dense_topk_spectrum(&dec, &[0.0; 3], 3).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { index: 2, .. }));
    }

    #[test]
    fn finite_difference_mode_agrees_with_exact() {
        let mut rng = RngStream::new(42, 0).rng();
        let dec = MlpDecoder::new(Mlp::new_random(&[6, 32, 32, 64], Activation::Tanh, Activation::Identity, &mut rng));
        let z = RngStream::new(42, 1).normal_vec(6);
        let exact = randomized_topk_spectrum(&dec, &z, &RandSvdConfig::default(), RngStream::new(5, 0)).unwrap();
        let fd_cfg = RandSvdConfig {
            jvp_mode: JvpMode::FiniteDifference { step: 1e-4 },
            ..Default::default()
        };
        let fd = randomized_topk_spectrum(&dec, &z, &fd_cfg, RngStream::new(5, 0)).unwrap();
        assert!((exact.log_volume - fd.log_volume).abs() <= 1e-3 * exact.log_volume.abs());
        let dense = dense_topk_spectrum(&dec, &z, 20).unwrap();
        assert!((exact.log_volume - dense.log_volume).abs() < 1e-8);
    }

    #[test]
    fn invalid_configs() {
        let dec = LinearDecoder::new(Matrix::identity(2));
        let bad_rank = RandSvdConfig { rank: 0, ..Default::default() };
        assert!(matches!(
            randomized_topk_spectrum(&dec, &[0.0; 2], &bad_rank, RngStream::new(0, 0)),
            Err(Error::Config(_))
        ));
        let bad_step = RandSvdConfig { jvp_mode: JvpMode::FiniteDifference { step: 0.0 }, ..Default::default() };
        assert!(bad_step.validate().is_err());
    }
}
