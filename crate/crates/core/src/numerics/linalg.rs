use crate::error::{Error, Result};

use super::matrix::{dot, Matrix};

const MAX_SWEEPS: usize = 100;

/// Relative residual below which a column counts as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Orthonormalizes the columns of `m` (thin QR, Q factor only).
///
/// Modified Gram-Schmidt with one re-orthogonalization pass, which keeps
/// `QᵀQ` at machine precision for the moderately conditioned inputs seen in
/// randomized range finding.
pub fn qr_orthonormalize(m: &Matrix) -> Result<Matrix> {
    if m.rows() < m.cols() {
        return Err(Error::shape(format!(
            "QR needs rows >= cols, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("QR input has non-finite entries".into()));
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m.cols());
    for c in 0..m.cols() {
        let mut v = m.column(c);
        let original = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for basis in &q {
                let proj = dot(basis, &v);
                for (x, b) in v.iter_mut().zip(basis) {
                    *x -= proj * b;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if original == 0.0 || norm <= RANK_TOLERANCE * original {
            return Err(Error::DegenerateInput { column: c });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }
    Matrix::from_columns(&q)
}

/// Singular values in descending order.
///
/// One-sided (Hestenes) Jacobi: columns are rotated pairwise until mutually
/// orthogonal, after which the column norms are the singular values. Works on
/// the narrower orientation so at most `min(rows, cols)` columns are rotated.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("singular_values input has non-finite entries".into()));
    }
    let work = if m.rows() < m.cols() { m.transpose() } else { m.clone() };
    if work.cols() > 256 {
        return Err(Error::InvalidInput(format!(
            "dense SVD limited to min(rows, cols) <= 256, got {}",
            work.cols()
        )));
    }
    let mut cols = work.columns();
    let n = cols.len();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(j);
                for (a, b) in left[i].iter_mut().zip(right[0].iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(sigma)
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations, descending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::shape("eigenvalues need a square matrix"));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("eigen input has non-finite entries".into()));
    }
    let mut a = m.clone();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn gaussian(rows: usize, cols: usize, stream: u64) -> Matrix {
        let v = RngStream::new(99, stream).normal_vec(rows * cols);
        Matrix::from_row_major(rows, cols, v).unwrap()
    }

    #[test]
    fn qr_identity_is_fixed_point() {
        let q = qr_orthonormalize(&Matrix::identity(3)).unwrap();
        assert_eq!(q, Matrix::identity(3));
    }

    #[test]
    fn qr_removes_axis_scaling() {
        let m = Matrix::from_columns(&[vec![2.0, 0.0, 0.0], vec![0.0, 3.0, 0.0]]).unwrap();
        let q = qr_orthonormalize(&m).unwrap();
        assert_eq!(q.column(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(q.column(1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn qr_random_is_orthonormal() {
        let m = gaussian(16, 8, 1);
        let q = qr_orthonormalize(&m).unwrap();
        let gram = q.transpose().matmul(&q).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(8)) < 1e-10);
    }

    #[test]
    fn qr_reports_dependent_column() {
        let m = Matrix::from_columns(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 2.0, 0.0],
        ])
        .unwrap();
        match qr_orthonormalize(&m) {
            Err(Error::DegenerateInput { column }) => assert_eq!(column, 2),
            other => panic!("expected degenerate input, got {other:?}"),
        }
    }

    #[test]
    fn qr_preserves_span() {
        let m = gaussian(12, 5, 2);
        let q = qr_orthonormalize(&m).unwrap();
        for c in 0..m.cols() {
            let col = m.column(c);
            let coeffs = q.tr_matvec(&col).unwrap();
            let back = q.matvec(&coeffs).unwrap();
            for (a, b) in col.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn svd_of_diagonal_and_zero() {
        let d = Matrix::from_diag(&[1.0, 3.0, 4.0, 2.0]);
        assert_eq!(singular_values(&d).unwrap(), vec![4.0, 3.0, 2.0, 1.0]);
        assert_eq!(singular_values(&Matrix::zeros(5, 3)).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(singular_values(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn svd_squares_match_jacobi_eigenvalues() {
        let m = gaussian(12, 6, 3);
        let sigma = singular_values(&m).unwrap();
        let eig = symmetric_eigenvalues(&m.transpose().matmul(&m).unwrap()).unwrap();
        for (s, e) in sigma.iter().zip(&eig) {
            assert!((s * s - e).abs() <= 1e-9 * e.abs(), "{s} {e}");
        }
        let wide = singular_values(&m.transpose()).unwrap();
        for (a, b) in sigma.iter().zip(&wide) {
            assert!((a - b).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn svd_energy_equals_frobenius() {
        for stream in 0..10 {
            let m = gaussian(9, 7, 100 + stream);
            let sigma = singular_values(&m).unwrap();
            let energy: f64 = sigma.iter().map(|s| s * s).sum();
            let fro = m.frobenius_norm_sq();
            assert!((energy - fro).abs() <= 1e-9 * fro);
            assert!(sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
