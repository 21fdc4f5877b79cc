//! Dense linear-algebra helpers shared by the kernel, spectral and protocol
//! modules. Everything works on `nalgebra` dynamic matrices in `f64`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values below `PINV_RTOL * sigma_max` are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

const EIGEN_MAX_ITER: usize = 10_000;

/// Moore-Penrose pseudoinverse with relative cutoff. Returns the inverse and
/// the numerical rank.
pub fn pinv(m: &Matrix) -> (Matrix, usize) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (Matrix::zeros(m.ncols(), m.nrows()), 0);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = PINV_RTOL * smax;
    let u = svd.u.as_ref().expect("svd computed with u");
    let vt = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            // out += v_k * u_k^T / s
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out.ger(1.0 / s, &vk, &uk, 1.0);
        }
    }
    (out, rank)
}

/// Numerical rank with the same cutoff as [`pinv`].
pub fn rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let cutoff = PINV_RTOL * sv.max();
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition, eigenvalues ascending.
pub fn sym_eigen(m: &Matrix) -> Result<(Vector, Matrix)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Eigen(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    if n == 0 {
        return Ok((Vector::zeros(0), Matrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Eigen(format!("no convergence on {n}x{n} symmetric matrix")))?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// `A^{-1/2}` for a symmetric PSD matrix, restricted to its numerical range
/// (eigenvalues under the pseudoinverse cutoff map to zero).
pub fn inv_sqrt_psd(m: &Matrix) -> Result<Matrix> {
    let (vals, vecs) = sym_eigen(m)?;
    let top = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cutoff = PINV_RTOL * top;
    let scaled = Vector::from_iterator(
        vals.len(),
        vals.iter()
            .map(|&v| if v > cutoff && v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }),
    );
    Ok(&vecs * Matrix::from_diagonal(&scaled) * vecs.transpose())
}

/// Result of solving a (possibly non-symmetric) square system.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: Matrix,
    /// Set when LU failed or the system was too ill-conditioned and the
    /// pseudoinverse was used instead.
    pub used_pinv: bool,
    pub condition: f64,
}

/// Solves `a x = b`, falling back to the pseudoinverse when `a` is singular
/// to working precision.
pub fn solve_square(a: &Matrix, b: &Matrix) -> Result<SolveOutcome> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context: "solve_square (square system)",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    crate::error::check_dim("solve_square (rhs rows)", a.nrows(), b.nrows())?;
    let condition = condition_number(a);
    if condition.is_finite() && condition < 1.0 / PINV_RTOL {
        if let Some(x) = a.clone().lu().solve(b) {
            return Ok(SolveOutcome {
                solution: x,
                used_pinv: false,
                condition,
            });
        }
    }
    let (p, _) = pinv(a);
    Ok(SolveOutcome {
        solution: p * b,
        used_pinv: true,
        condition,
    })
}

pub fn sup_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

pub fn max_abs_diff(a: &Vector, b: &Vector) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs_diff_mat(a: &Matrix, b: &Matrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Stacks row blocks vertically. All blocks must share a column count.
pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn vcat(parts: &[&Vector]) -> Vector {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(n);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(*p);
        r += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_one() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, r) = pinv(&m);
        assert_eq!(r, 1);
        // pinv of 11^T is 11^T / 4
        for v in p.iter() {
            assert!((v - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn sym_eigen_reconstructs_and_sorts() {
        let m = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, vecs) = sym_eigen(&m).unwrap();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let rebuilt = &vecs * Matrix::from_diagonal(&vals) * vecs.transpose();
        assert!(max_abs_diff_mat(&rebuilt, &m) < 1e-12);
    }

    #[test]
    fn solve_square_falls_back_on_singular() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let out = solve_square(&a, &b).unwrap();
        assert!(out.used_pinv);
        let resid = &a * &out.solution - &b;
        assert!(resid.norm() < 1e-12);
    }

    #[test]
    fn inv_sqrt_matches_inverse_squared() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = inv_sqrt_psd(&m).unwrap();
        let inv = m.clone().try_inverse().unwrap();
        assert!(max_abs_diff_mat(&(&s * &s), &inv) < 1e-12);
    }
}
