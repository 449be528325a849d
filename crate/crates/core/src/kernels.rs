//! Gaussian Gram matrices with a dimension-scaled bandwidth, and centering.
//!
//! The kernel is `k(x, y) = exp(-‖x - y‖² / (2σ²d))` where `d` is the number
//! of columns of the matrix the rows come from. With `dim_scaling` off the
//! divisor is `2σ²`.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub sigma: f64,
    /// Regularizer of the normalized estimator, applied as `ε·m·I`.
    pub epsilon: f64,
    pub dim_scaling: bool,
}

impl KernelParams {
    pub fn new(sigma: f64, epsilon: f64) -> Result<Self> {
        let p = KernelParams {
            sigma,
            epsilon,
            dim_scaling: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_sigma(sigma: f64) -> Result<Self> {
        Self::new(sigma, DEFAULT_EPSILON)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// `σ²·d` (or `σ²` without dimension scaling); the kernel exponent is
    /// `-‖x - y‖² / (2 · bandwidth_sq(d))`.
    pub fn bandwidth_sq(&self, dim: usize) -> f64 {
        let s2 = self.sigma * self.sigma;
        if self.dim_scaling {
            s2 * dim as f64
        } else {
            s2
        }
    }
}

/// Pairwise squared Euclidean distances between rows, clamped at zero.
pub fn sq_distances(z: &Matrix) -> Matrix {
    let m = z.rows();
    let norms: Vec<f64> = (0..m)
        .map(|i| z.row(i).iter().map(|v| v * v).sum())
        .collect();
    let mut d = z.dot_t(z);
    for i in 0..m {
        for j in 0..m {
            let v = norms[i] + norms[j] - 2.0 * d[(i, j)];
            d[(i, j)] = v.max(0.0);
        }
        d[(i, i)] = 0.0;
    }
    // the expanded form is not bit-symmetric
    for i in 0..m {
        for j in (i + 1)..m {
            let v = d[(i, j)];
            d[(j, i)] = v;
        }
    }
    d
}

pub fn gaussian_gram(z: &Matrix, params: &KernelParams) -> Result<Matrix> {
    params.validate()?;
    if z.rows() == 0 || z.cols() == 0 {
        return Err(Error::InvalidArgument(format!(
            "gaussian_gram needs a non-empty batch, got {}x{}",
            z.rows(),
            z.cols()
        )));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite {
            context: "gaussian_gram input".into(),
        });
    }
    let denom = 2.0 * params.bandwidth_sq(z.cols());
    Ok(sq_distances(z).map(|d| (-d / denom).exp()))
}

/// `H = I - (1/m)·11ᵀ`
pub fn centering_matrix(m: usize) -> Result<Matrix> {
    if m == 0 {
        return Err(Error::InvalidArgument("centering_matrix needs m >= 1".into()));
    }
    let mut h = Matrix::filled(m, m, -1.0 / m as f64);
    h.add_diag(1.0);
    Ok(h)
}

/// `H·K·H`, computed by removing row means, column means and adding back the
/// grand mean.
pub fn center(k: &Matrix) -> Result<Matrix> {
    if !k.is_square() {
        return Err(Error::dim(
            "center",
            "square matrix",
            format!("{}x{}", k.rows(), k.cols()),
        ));
    }
    Ok(center_unchecked(k))
}

pub(crate) fn center_unchecked(k: &Matrix) -> Matrix {
    let m = k.rows();
    if m == 0 {
        return k.clone();
    }
    let inv = 1.0 / m as f64;
    let row_means: Vec<f64> = k.row_sums().into_iter().map(|s| s * inv).collect();
    let col_means: Vec<f64> = k.col_sums().into_iter().map(|s| s * inv).collect();
    let grand = row_means.iter().sum::<f64>() * inv;
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        let ki = k.row(i);
        let oi = out.row_mut(i);
        for j in 0..m {
            oi[j] = ki[j] - row_means[i] - col_means[j] + grand;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma: f64) -> KernelParams {
        KernelParams::with_sigma(sigma).unwrap()
    }

    #[test]
    fn identical_rows_give_all_ones() {
        let z = Matrix::from_rows(&[[0.3, -1.0], [0.3, -1.0]]).unwrap();
        let k = gaussian_gram(&z, &params(1.0)).unwrap();
        assert_eq!(k.as_slice(), &[1.0; 4]);
    }

    #[test]
    fn scalar_case_matches_formula() {
        let z = Matrix::column_vector(&[0.0, 2f64.sqrt()]);
        let k = gaussian_gram(&z, &params(1.0)).unwrap();
        assert!((k[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k[(1, 0)] - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn single_row_is_unit() {
        let z = Matrix::row_vector(&[1.0, 2.0, 3.0]);
        assert_eq!(gaussian_gram(&z, &params(5.0)).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn dimension_scaling_divides_by_d() {
        let z = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let scaled = gaussian_gram(&z, &params(1.0)).unwrap();
        let mut off = params(1.0);
        off.dim_scaling = false;
        let unscaled = gaussian_gram(&z, &off).unwrap();
        // ‖Δ‖² = 2, d = 2
        assert!((scaled[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((unscaled[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_rows_and_bad_params() {
        let mut z = Matrix::zeros(2, 1);
        z[(1, 0)] = f64::INFINITY;
        assert!(matches!(
            gaussian_gram(&z, &params(1.0)),
            Err(Error::NonFinite { .. })
        ));
        assert!(KernelParams::new(0.0, 1e-5).is_err());
        assert!(KernelParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn centering_matrix_small_cases() {
        let h2 = centering_matrix(2).unwrap();
        assert_eq!(h2.as_slice(), &[0.5, -0.5, -0.5, 0.5]);
        assert_eq!(centering_matrix(1).unwrap().as_slice(), &[0.0]);
        assert!(centering_matrix(0).is_err());
        let h8 = centering_matrix(8).unwrap();
        assert!(h8.dot(&h8).sub(&h8).max_abs() < 1e-15);
    }

    #[test]
    fn centering_constants_and_two_point_closed_form() {
        let ones = Matrix::filled(5, 5, 1.0);
        assert!(center(&ones).unwrap().max_abs() < 1e-15);

        let a = 0.3;
        let k = Matrix::from_rows(&[[1.0, a], [a, 1.0]]).unwrap();
        let want = centering_matrix(2).unwrap().scale(1.0 - a);
        assert!(center(&k).unwrap().sub(&want).max_abs() < 1e-15);
        assert!(center(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn center_matches_explicit_hkh() {
        let z = Matrix::from_rows(&[[0.1, 0.2], [1.0, -0.3], [0.5, 0.5], [-2.0, 0.0]]).unwrap();
        let k = gaussian_gram(&z, &params(1.0)).unwrap();
        let h = centering_matrix(4).unwrap();
        let explicit = h.dot(&k).dot(&h);
        let fast = center(&k).unwrap();
        assert!(explicit.sub(&fast).max_abs() < 1e-15);
        let twice = center(&fast).unwrap();
        assert!(twice.sub(&fast).max_abs() < 1e-12);
    }
}
