use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::mlp::Mlp;

/// Differentiable decoder `z ↦ x` exposed through forward, JVP and VJP evaluations.
///
/// `jvp` and `vjp` must be adjoint: `⟨v, J·u⟩ = ⟨Jᵀ·v, u⟩`.
pub trait DecoderOracle: Sync {
    fn latent_dim(&self) -> usize;
    fn data_dim(&self) -> usize;
    fn forward(&self, z: &[f64]) -> Result<Vec<f64>>;
    fn jvp(&self, z: &[f64], dz: &[f64]) -> Result<Vec<f64>>;
    fn vjp(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::shape(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Affine decoder `D(z) = A·z + b`; its Jacobian is `A` everywhere.
#[derive(Debug, Clone)]
pub struct LinearDecoder {
    pub matrix: Matrix,
    pub offset: Vec<f64>,
}

impl LinearDecoder {
    pub fn new(matrix: Matrix) -> Self {
        let offset = vec![0.0; matrix.rows()];
        Self { matrix, offset }
    }

    pub fn with_offset(matrix: Matrix, offset: Vec<f64>) -> Result<Self> {
        check_len("offset", offset.len(), matrix.rows())?;
        Ok(Self { matrix, offset })
    }

    /// A decoder that ignores its input: `D(z) = c`.
    pub fn constant(latent_dim: usize, value: Vec<f64>) -> Self {
        Self {
            matrix: Matrix::zeros(value.len(), latent_dim),
            offset: value,
        }
    }
}

impl DecoderOracle for LinearDecoder {
    fn latent_dim(&self) -> usize {
        self.matrix.cols()
    }

    fn data_dim(&self) -> usize {
        self.matrix.rows()
    }

    fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.matrix.matvec(z)?;
        x.iter_mut().zip(&self.offset).for_each(|(a, b)| *a += b);
        Ok(x)
    }

    fn jvp(&self, z: &[f64], dz: &[f64]) -> Result<Vec<f64>> {
        check_len("z", z.len(), self.latent_dim())?;
        self.matrix.matvec(dz)
    }

    fn vjp(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len("z", z.len(), self.latent_dim())?;
        self.matrix.tr_matvec(v)
    }
}

/// Decoder backed by a smooth MLP, with exact forward- and reverse-mode derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDecoder {
    pub net: Mlp,
}

impl MlpDecoder {
    pub fn new(net: Mlp) -> Self {
        Self { net }
    }
}

impl DecoderOracle for MlpDecoder {
    fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn data_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.net.check_input(z)?;
        Ok(self.net.forward(z))
    }

    fn jvp(&self, z: &[f64], dz: &[f64]) -> Result<Vec<f64>> {
        self.net.check_input(z)?;
        check_len("tangent", dz.len(), self.latent_dim())?;
        Ok(self.net.jvp(z, dz))
    }

    fn vjp(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.net.check_input(z)?;
        check_len("cotangent", v.len(), self.data_dim())?;
        Ok(self.net.vjp(z, v))
    }
}

/// Replaces the JVP of `inner` by the central difference
/// `(D(z + h·dz) − D(z − h·dz)) / 2h`; the VJP is passed through.
pub struct FiniteDifferenceJvp<'a, D: ?Sized> {
    pub inner: &'a D,
    pub step: f64,
}

impl<D: DecoderOracle + ?Sized> DecoderOracle for FiniteDifferenceJvp<'_, D> {
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }

    fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.inner.forward(z)
    }

    fn jvp(&self, z: &[f64], dz: &[f64]) -> Result<Vec<f64>> {
        check_len("tangent", dz.len(), self.latent_dim())?;
        let h = self.step;
        let plus: Vec<f64> = z.iter().zip(dz).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = z.iter().zip(dz).map(|(a, b)| a - h * b).collect();
        let up = self.inner.forward(&plus)?;
        let down = self.inner.forward(&minus)?;
        Ok(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    }

    fn vjp(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.inner.vjp(z, v)
    }
}

/// Decoder seen through standardized latent coordinates: `u ↦ D(μ + s ⊙ u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStandardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LatentStandardizer {
    /// Per-dimension mean and population standard deviation of `codes`.
    /// Dimensions with zero spread keep unit scale.
    pub fn fit(codes: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = codes.first() else {
            return Err(Error::InvalidInput("no latent codes to standardize".into()));
        };
        let d = first.len();
        let n = codes.len() as f64;
        let mut mean = vec![0.0; d];
        for c in codes {
            check_len("latent", c.len(), d)?;
            mean.iter_mut().zip(c).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for c in codes {
            var.iter_mut().zip(c.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        let scale = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn standardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn restore(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| m + s * v)
            .collect()
    }

    fn scaled(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.scale).map(|(a, s)| a * s).collect()
    }
}

/// `inner` composed with a [`LatentStandardizer`].
pub struct StandardizedDecoder<'a, D: ?Sized> {
    pub inner: &'a D,
    pub standardizer: &'a LatentStandardizer,
}

impl<D: DecoderOracle + ?Sized> DecoderOracle for StandardizedDecoder<'_, D> {
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }

    fn forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("latent", u.len(), self.latent_dim())?;
        self.inner.forward(&self.standardizer.restore(u))
    }

    fn jvp(&self, u: &[f64], du: &[f64]) -> Result<Vec<f64>> {
        check_len("latent", u.len(), self.latent_dim())?;
        check_len("tangent", du.len(), self.latent_dim())?;
        self.inner.jvp(&self.standardizer.restore(u), &self.standardizer.scaled(du))
    }

    fn vjp(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len("latent", u.len(), self.latent_dim())?;
        Ok(self.standardizer.scaled(&self.inner.vjp(&self.standardizer.restore(u), v)?))
    }
}
