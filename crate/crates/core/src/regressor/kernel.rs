use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::RegressorError;
use crate::exec::Execution;

/// Isotropic RBF hyperparameters plus observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    signal_variance: f64,
    lengthscale: f64,
    noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self, RegressorError> {
        for (name, v) in [
            ("signal_variance", signal_variance),
            ("lengthscale", lengthscale),
            ("noise_variance", noise_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RegressorError::InvalidParam { name, value: v });
            }
        }
        Ok(Self {
            signal_variance,
            lengthscale,
            noise_variance,
        })
    }

    /// From `(log σ_f², log ℓ_s, log σ_n²)`.
    pub fn from_log(theta: [f64; 3]) -> Result<Self, RegressorError> {
        Self::new(theta[0].exp(), theta[1].exp(), theta[2].exp())
    }

    pub fn to_log(&self) -> [f64; 3] {
        [self.signal_variance.ln(), self.lengthscale.ln(), self.noise_variance.ln()]
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    #[inline]
    pub(crate) fn rbf_sq(&self, sq_dist: f64) -> f64 {
        self.signal_variance * (-sq_dist / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            lengthscale: 1.0,
            noise_variance: 0.1,
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `σ_f² exp(−‖xi − xj‖² / (2ℓ_s²))`.
pub fn rbf(xi: &[f64], xj: &[f64], p: &KernelParams) -> Result<f64, RegressorError> {
    if xi.len() != xj.len() {
        return Err(RegressorError::DimensionMismatch {
            expected: xi.len(),
            got: xj.len(),
        });
    }
    Ok(p.rbf_sq(sq_dist(xi, xj)))
}

/// Checks that `x` is a non-empty, rectangular, finite design matrix and
/// returns its width.
pub(crate) fn validate_inputs(x: &[Vec<f64>]) -> Result<usize, RegressorError> {
    let d = x.first().ok_or(RegressorError::Empty)?.len();
    for row in x {
        if row.len() != d {
            return Err(RegressorError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(RegressorError::NonFinite("inputs"));
        }
    }
    Ok(d)
}

/// Pairwise squared distances.
pub(crate) fn sq_dist_matrix(x: &[Vec<f64>], exec: Execution) -> Matrix {
    let n = x.len();
    let rows = exec.map_range(n, |i| (0..n).map(|j| sq_dist(&x[i], &x[j])).collect::<Vec<_>>());
    Matrix::from_rows(rows)
}

/// Noise-free RBF Gram matrix from precomputed squared distances.
pub(crate) fn gram_from_sq(r2: &Matrix, p: &KernelParams) -> Matrix {
    Matrix::from_fn(r2.n(), |i, j| if i == j { p.signal_variance } else { p.rbf_sq(r2.get(i, j)) })
}

/// `K_ij = k(x_i, x_j) + σ_n² δ_ij`.
pub fn covariance_matrix(x: &[Vec<f64>], p: &KernelParams) -> Result<Matrix, RegressorError> {
    covariance_matrix_with(x, p, Execution::Sequential)
}

pub fn covariance_matrix_with(x: &[Vec<f64>], p: &KernelParams, exec: Execution) -> Result<Matrix, RegressorError> {
    validate_inputs(x)?;
    let n = x.len();
    let rows = exec.map_range(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    p.signal_variance + p.noise_variance
                } else {
                    p.rbf_sq(sq_dist(&x[i], &x[j]))
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(Matrix::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let p = KernelParams::new(1.0, 1.0, 0.1).unwrap();
        assert_eq!(rbf(&[0.3, 0.2], &[0.3, 0.2], &p).unwrap(), 1.0);
        let v = rbf(&[0.0, 0.0], &[1.0, 1.0], &p).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
        let a = [0.1, -2.0, 3.0];
        let b = [1.5, 0.0, -1.0];
        assert_eq!(rbf(&a, &b, &p).unwrap(), rbf(&b, &a, &p).unwrap());
        assert!(rbf(&a, &b[..2], &p).is_err());
    }

    #[test]
    fn params_must_be_positive_and_finite() {
        assert!(KernelParams::new(0.0, 1.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, -1.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, 1.0, f64::INFINITY).is_err());
        let p = KernelParams::new(2.0, 0.5, 0.01).unwrap();
        let q = KernelParams::from_log(p.to_log()).unwrap();
        assert!((q.lengthscale() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn covariance_small_cases() {
        let p = KernelParams::new(2.0, 0.7, 0.3).unwrap();
        let k = covariance_matrix(&[vec![1.0, 2.0]], &p).unwrap();
        assert_eq!(k.as_slice(), &[2.3]);
        let k = covariance_matrix(&[vec![1.0], vec![1.0]], &p).unwrap();
        assert_eq!(k.as_slice(), &[2.3, 2.0, 2.0, 2.3]);
        assert!(super::super::linalg::Cholesky::factor(&k).unwrap().jitter() == 0.0);
        assert!(covariance_matrix(&[vec![f64::NAN]], &p).is_err());
        assert!(covariance_matrix(&[], &p).is_err());
    }

    #[test]
    fn covariance_matches_double_loop() {
        let p = KernelParams::new(1.3, 0.9, 0.05).unwrap();
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).cos(), i as f64 / 5.0]).collect();
        let k = covariance_matrix_with(&x, &p, Execution::Parallel).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d2: f64 = (0..3).map(|c| (x[i][c] - x[j][c]).powi(2)).sum();
                let mut expect = 1.3 * (-d2 / (2.0 * 0.81)).exp();
                if i == j {
                    expect += 0.05;
                }
                assert!((k.get(i, j) - expect).abs() < 1e-14);
                assert_eq!(k.get(i, j), k.get(j, i));
            }
        }
    }
}
