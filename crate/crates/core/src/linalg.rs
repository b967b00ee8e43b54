//! Dense symmetric linear algebra used by the estimators.
//!
//! The solvers here are deliberately conservative: every factorization
//! carries a relative rank tolerance and fails loudly instead of silently
//! regularizing or falling back to a pseudo-inverse.

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};

/// Maximum absolute asymmetry `|a_ij - a_ji|` of a square matrix.
pub fn asymmetry(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

/// Errors unless `m` is square and symmetric within `tolerance`.
pub fn require_symmetric(m: &Array2<f64>, tolerance: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(CoreError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let defect = asymmetry(m);
    if defect > tolerance {
        return Err(CoreError::NotSymmetric { defect, tolerance });
    }
    Ok(())
}

pub fn frobenius_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cholesky factor of a symmetric PSD matrix, with a relative pivot check.
///
/// Returns the lower-triangular factor, or the list of pivot indices at
/// which the factorization lost positivity. The caller decides whether a
/// deficiency is a rank error or a singular-system error.
pub struct CholeskyFactor {
    lower: Array2<f64>,
}

pub enum CholeskyOutcome {
    Factor(CholeskyFactor),
    Deficient { rank: usize, failed_pivots: Vec<usize> },
}

pub fn cholesky(matrix: &Array2<f64>) -> Result<CholeskyOutcome> {
    require_symmetric(matrix, 1e-8 * (1.0 + frobenius_norm(matrix)))?;
    let n = matrix.nrows();
    let mut l = matrix.clone();
    let max_diag = (0..n).map(|i| matrix[[i, i]].abs()).fold(0.0f64, f64::max);
    // Relative pivot floor; a pivot at or below it means the matrix is not
    // positive definite to working precision.
    let floor = max_diag * (n as f64) * f64::EPSILON * 8.0;

    let mut failed = Vec::new();
    let mut rank = 0usize;
    for k in 0..n {
        let mut d = l[[k, k]];
        for j in 0..k {
            let v = l[[k, j]];
            d -= v * v;
        }
        if d <= floor {
            failed.push(k);
            // Zero out the rest of this column so later pivots still see a
            // consistent partial factor.
            l[[k, k]] = 0.0;
            for i in (k + 1)..n {
                l[[i, k]] = 0.0;
            }
            continue;
        }
        rank += 1;
        let dk = d.sqrt();
        l[[k, k]] = dk;
        for i in (k + 1)..n {
            let mut s = l[[i, k]];
            for j in 0..k {
                s -= l[[i, j]] * l[[k, j]];
            }
            l[[i, k]] = s / dk;
        }
    }
    if failed.is_empty() {
        // Clear the strict upper triangle.
        for i in 0..n {
            for j in (i + 1)..n {
                l[[i, j]] = 0.0;
            }
        }
        Ok(CholeskyOutcome::Factor(CholeskyFactor { lower: l }))
    } else {
        Ok(CholeskyOutcome::Deficient { rank, failed_pivots: failed })
    }
}

impl CholeskyFactor {
    /// Solves `A x = b` given the factor `A = L L^T`.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lower.nrows();
        let mut x = b.clone();
        // Forward substitution L y = b.
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lower[[i, j]] * x[j];
            }
            x[i] = s / self.lower[[i, i]];
        }
        // Back substitution L^T x = y.
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lower[[j, i]] * x[j];
            }
            x[i] = s / self.lower[[i, i]];
        }
        x
    }
}

/// Solves the symmetric positive-definite system `A x = b`, reporting a
/// rank-deficiency error when `A` is singular to working precision.
pub fn solve_spd(matrix: &Array2<f64>, rhs: &Array1<f64>) -> Result<Array1<f64>> {
    if matrix.nrows() != rhs.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "matrix is {}x{} but rhs has length {}",
            matrix.nrows(),
            matrix.ncols(),
            rhs.len()
        )));
    }
    match cholesky(matrix)? {
        CholeskyOutcome::Factor(f) => Ok(f.solve(rhs)),
        CholeskyOutcome::Deficient { rank, .. } => {
            Err(CoreError::RankDeficient { rank, dimension: matrix.nrows() })
        }
    }
}

/// Eigendecomposition of a symmetric matrix: eigenvalues sorted descending,
/// each eigenvector's first nonzero component made positive.
pub fn symmetric_eigen(matrix: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let scale = frobenius_norm(matrix).max(1.0);
    require_symmetric(matrix, 1e-10 * scale)?;
    let n = matrix.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (matrix[[i, j]] + matrix[[j, i]]));
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
    });

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        // Sign convention: first component of nonnegligible magnitude positive.
        let lead = col.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, dst]] = sign * col[i];
        }
    }
    Ok((values, vectors))
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
/// deterministic start vector.
pub fn max_eigenvalue_psd(matrix: &Array2<f64>) -> Result<f64> {
    let scale = frobenius_norm(matrix).max(1.0);
    require_symmetric(matrix, 1e-8 * scale)?;
    let n = matrix.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    // Start from a fixed dense vector with unequal entries so it is unlikely
    // to be orthogonal to the leading eigenvector.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64 + 1.0).sqrt());
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);

    let mut value = 0.0f64;
    for _ in 0..500 {
        let w = matrix.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = w.mapv(|x| x / norm);
        let new_value = next.dot(&matrix.dot(&next));
        let settled = (new_value - value).abs() <= 1e-12 * new_value.abs().max(1.0);
        v = next;
        value = new_value;
        if settled {
            break;
        }
    }
    Ok(value)
}

/// Null-direction indices of a symmetric PSD matrix: coordinates `j` whose
/// eigenvalue is below `rel_tol` times the largest. Used to name the
/// offending directions in singular-system errors.
pub fn null_directions(matrix: &Array2<f64>, rel_tol: f64) -> Vec<usize> {
    match symmetric_eigen(matrix) {
        Ok((values, _)) => {
            let top = values.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
            values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v <= rel_tol * top)
                .map(|(j, _)| j)
                .collect()
        }
        Err(_) => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![1.0, 2.0];
        let x = solve_spd(&a, &b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cholesky_detects_rank_deficiency() {
        // Rank-1 Gram matrix of a single row.
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        match solve_spd(&a, &array![1.0, 2.0]) {
            Err(CoreError::RankDeficient { rank, dimension }) => {
                assert_eq!(rank, 1);
                assert_eq!(dimension, 2);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn eigen_hand_case() {
        // [[2,1],[1,2]] has eigenpairs (3, (1,1)/sqrt2) and (1, (1,-1)/sqrt2).
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-12);
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(vecs[[0, 0]], s, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[[1, 0]], s, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[[0, 1]], s, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[[1, 1]], -s, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]];
        let (vals, _) = symmetric_eigen(&a).unwrap();
        let top = max_eigenvalue_psd(&a).unwrap();
        assert_abs_diff_eq!(top, vals[0], epsilon = 1e-9);
    }

    #[test]
    fn non_symmetric_rejected() {
        let a = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(symmetric_eigen(&a), Err(CoreError::NotSymmetric { .. })));
    }
}
