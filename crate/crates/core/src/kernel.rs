//! Kernel functions and scaled Gram matrices.
//!
//! Every Gram matrix in this crate carries an explicit `1/scale_count`
//! factor: an agent fitting alone uses its own sample count, while every
//! federated computation uses the pooled count across all agents.

use nalgebra::DVectorView;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// A positive-semidefinite kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `<x, x'>`
    Linear,
    /// `(<x, x'> + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `exp(-|x - x'|^2 / (2 bandwidth^2))`
    Rbf { bandwidth: f64 },
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Self {
        KernelSpec::Rbf { bandwidth }
    }

    pub fn polynomial(degree: u32, offset: f64) -> Self {
        KernelSpec::Polynomial { degree, offset }
    }

    /// Rejects parameter choices that would not give a PSD kernel.
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    Err(Error::InvalidInput("polynomial degree must be positive".into()))
                } else if !(offset.is_finite() && offset >= 0.0) {
                    Err(Error::InvalidInput(format!(
                        "polynomial offset must be finite and nonnegative, got {offset}"
                    )))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Rbf { bandwidth } => {
                if bandwidth.is_finite() && bandwidth > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "rbf bandwidth must be positive, got {bandwidth}"
                    )))
                }
            }
        }
    }

    /// Short human-readable tag, e.g. `rbf(0.5)`.
    pub fn label(&self) -> String {
        match *self {
            KernelSpec::Linear => "linear".to_string(),
            KernelSpec::Polynomial { degree, offset } => format!("poly({degree},{offset})"),
            KernelSpec::Rbf { bandwidth } => format!("rbf({bandwidth})"),
        }
    }

    fn eval_unchecked(&self, x: DVectorView<'_, f64>, y: DVectorView<'_, f64>) -> f64 {
        match *self {
            KernelSpec::Linear => x.dot(&y),
            KernelSpec::Polynomial { degree, offset } => {
                (x.dot(&y) + offset).powi(degree as i32)
            }
            KernelSpec::Rbf { bandwidth } => {
                let sq: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

/// Evaluates `k(x, x')` for two points of equal dimension.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim("eval_kernel", x.len(), y.len())?;
    Ok(spec.eval_unchecked(DVectorView::from_slice(x, x.len()), DVectorView::from_slice(y, y.len())))
}

/// `G[i, j] = k(rows_i, cols_j) / scale_count`, where samples are matrix rows.
pub fn gram_matrix(spec: &KernelSpec, rows: &Matrix, cols: &Matrix, scale_count: usize) -> Result<Matrix> {
    check_dim("gram_matrix (feature dimension)", rows.ncols(), cols.ncols())?;
    if scale_count == 0 {
        return Err(Error::InvalidInput("scale_count must be at least 1".into()));
    }
    let scale = 1.0 / scale_count as f64;
    // transposes give contiguous per-sample columns
    let rt = rows.transpose();
    let ct = cols.transpose();
    Ok(Matrix::from_fn(rows.nrows(), cols.nrows(), |i, j| {
        spec.eval_unchecked(rt.column(i), ct.column(j)) * scale
    }))
}

/// Square Gram matrix over one sample set; exactly symmetric by construction.
pub fn gram_square(spec: &KernelSpec, inputs: &Matrix, scale_count: usize) -> Result<Matrix> {
    if scale_count == 0 {
        return Err(Error::InvalidInput("scale_count must be at least 1".into()));
    }
    let n = inputs.nrows();
    let scale = 1.0 / scale_count as f64;
    let t = inputs.transpose();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval_unchecked(t.column(i), t.column(j)) * scale;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen;
    use proptest::prelude::*;

    #[test]
    fn linear_is_dot_product() {
        assert_eq!(eval_kernel(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn rbf_at_zero_distance_is_one() {
        let k = KernelSpec::rbf(1.0);
        assert_eq!(eval_kernel(&k, &[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
    }

    #[test]
    fn rbf_half_unit_distance() {
        let v = eval_kernel(&KernelSpec::rbf(1.0), &[0.0], &[0.5]).unwrap();
        assert!((v - (-0.125f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn polynomial_value() {
        let v = eval_kernel(&KernelSpec::polynomial(2, 1.0), &[1.0, 1.0], &[2.0, 0.0]).unwrap();
        assert_eq!(v, 9.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = eval_kernel(&KernelSpec::Linear, &[1.0], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        assert!(gram_matrix(&KernelSpec::Linear, &a, &b, 1).is_err());
    }

    #[test]
    fn linear_gram_small() {
        let x = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let g = gram_matrix(&KernelSpec::Linear, &x, &x, 2).unwrap();
        assert_eq!(g, Matrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 2.0]));
        assert_eq!(gram_square(&KernelSpec::Linear, &x, 2).unwrap(), g);
    }

    #[test]
    fn rbf_gram_matches_double_loop() {
        let pts = [[0.1, 0.7], [1.3, -0.2], [0.4, 0.4], [-0.9, 2.0], [2.2, 1.1]];
        let x = Matrix::from_fn(5, 2, |i, j| pts[i][j]);
        let g = gram_matrix(&KernelSpec::rbf(1.0), &x, &x, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d2 = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
                let expect = (-d2 / 2.0).exp() / 5.0;
                assert!((g[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(KernelSpec::rbf(0.0).validate().is_err());
        assert!(KernelSpec::polynomial(0, 1.0).validate().is_err());
        assert!(KernelSpec::polynomial(2, -1.0).validate().is_err());
        assert!(KernelSpec::Linear.validate().is_ok());
    }

    fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            Just(KernelSpec::Linear),
            (1u32..4, 0.0f64..2.0).prop_map(|(d, o)| KernelSpec::polynomial(d, o)),
            (0.2f64..3.0).prop_map(KernelSpec::rbf),
        ]
    }

    proptest! {
        #[test]
        fn kernels_are_symmetric(k in kernel_strategy(),
                                 x in prop::collection::vec(-3.0f64..3.0, 3),
                                 y in prop::collection::vec(-3.0f64..3.0, 3)) {
            prop_assert_eq!(eval_kernel(&k, &x, &y).unwrap(), eval_kernel(&k, &y, &x).unwrap());
        }

        #[test]
        fn square_gram_is_symmetric_psd(k in kernel_strategy(),
                                        n in 1usize..9,
                                        vals in prop::collection::vec(-2.0f64..2.0, 9 * 3)) {
            let x = Matrix::from_fn(n, 3, |i, j| vals[i * 3 + j]);
            let g = gram_matrix(&k, &x, &x, n).unwrap();
            prop_assert!(crate::linalg::max_abs_diff_mat(&g, &g.transpose()) <= 1e-12);
            let (eig, _) = sym_eigen(&g).unwrap();
            let smax = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(eig[0] >= -1e-10 * smax.max(1e-300));
        }
    }
}
