use crate::error::{Error, Result};
use crate::models::DecoderOracle;
use crate::numerics::{dot, symmetric_eigenvalues, Matrix};

/// Dense pullback metric `G(z) = J(z)ᵀ J(z)` on the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct PullbackMetric {
    pub matrix: Matrix,
}

impl PullbackMetric {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(symmetric_eigenvalues(&self.matrix)?
            .last()
            .copied()
            .unwrap_or(0.0))
    }
}

/// Materializes `J` column by column through `jvp(z, e_i)` and forms `JᵀJ`.
pub fn dense_jacobian(oracle: &(impl DecoderOracle + ?Sized), z: &[f64]) -> Result<Matrix> {
    let d = oracle.latent_dim();
    if z.len() != d {
        return Err(Error::shape(format!("latent has length {}, decoder expects {d}", z.len())));
    }
    let mut columns = Vec::with_capacity(d);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let col = oracle.jvp(z, &e)?;
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateDecoder { dim: i });
        }
        columns.push(col);
    }
    Matrix::from_columns(&columns)
}

pub fn pullback_metric_dense(oracle: &(impl DecoderOracle + ?Sized), z: &[f64]) -> Result<PullbackMetric> {
    if oracle.latent_dim() > 256 {
        return Err(Error::InvalidInput(format!(
            "dense pullback metric limited to d <= 256, got {}",
            oracle.latent_dim()
        )));
    }
    let jac = dense_jacobian(oracle, z)?;
    let cols = jac.columns();
    let d = cols.len();
    let mut g = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = dot(&cols[i], &cols[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(PullbackMetric { matrix: g })
}

/// Squared data-space length `dzᵀ G dz` of a latent displacement.
pub fn metric_quadratic_form(metric: &PullbackMetric, dz: &[f64]) -> Result<f64> {
    let g_dz = metric.matrix.matvec(dz)?;
    Ok(dot(dz, &g_dz))
}
