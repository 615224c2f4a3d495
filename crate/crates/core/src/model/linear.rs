//! Linear regression on vectorized tensor inputs, `y = wᵀ vec(X) + b`.
//!
//! Inputs and labels are centered so the bias is never penalized. With at
//! least as many samples as features the normal equations
//! `(XᵀX + λI) w = Xᵀy` are solved directly; otherwise the equivalent
//! sample-space system `w = Xᵀ (XXᵀ + λI)⁻¹ y` is used, and without a ridge
//! term that yields the minimum-norm least-squares solution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Samples;
use crate::error::{Error, Result};
use crate::tensor::{dot, DenseTensor};

/// Relative eigenvalue cutoff for the minimum-norm solve.
const PSEUDO_INVERSE_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearFlavor {
    Plain,
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

impl LinearModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict(&self, data: &Samples) -> Result<Vec<f64>> {
        if data.features() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                found: data.features(),
            });
        }
        Ok((0..data.len()).map(|m| self.predict_one(data.input(m))).collect())
    }

    /// Weights folded back into a tensor of the given shape.
    pub fn weight_tensor(&self, shape: &[usize]) -> Result<DenseTensor> {
        DenseTensor::new(shape.to_vec(), self.weights.clone())
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len()
    }
}

/// Least squares (`Plain`, λ ignored) or ridge regression (`Ridge`, λ ≥ 0).
pub fn train_linear(data: &Samples, l2: f64, flavor: LinearFlavor) -> Result<LinearModel> {
    if data.is_empty() {
        return Err(Error::Data("cannot fit a linear model to no samples".into()));
    }
    let lambda = match flavor {
        LinearFlavor::Plain => 0.0,
        LinearFlavor::Ridge => l2,
    };
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("ridge penalty must be nonnegative, got {l2}")));
    }
    let m = data.len();
    let p = data.features();
    let mean_x: Vec<f64> = {
        let mut acc = vec![0.0; p];
        for i in 0..m {
            for (a, x) in acc.iter_mut().zip(data.input(i)) {
                *a += x;
            }
        }
        acc.iter().map(|a| a / m as f64).collect()
    };
    let mean_y = data.labels().iter().sum::<f64>() / m as f64;
    let xc = DMatrix::from_fn(m, p, |i, j| data.input(i)[j] - mean_x[j]);
    let yc = DVector::from_iterator(m, data.labels().iter().map(|y| y - mean_y));

    let weights = if p < m {
        solve_primal(&xc, &yc, lambda)?
    } else {
        solve_dual(&xc, &yc, lambda)?
    };
    let bias = mean_y - dot(weights.as_slice(), &mean_x);
    Ok(LinearModel {
        weights: weights.as_slice().to_vec(),
        bias,
        l2: lambda,
    })
}

fn solve_primal(xc: &DMatrix<f64>, yc: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let p = xc.ncols();
    let gram = xc.transpose() * xc + DMatrix::identity(p, p) * lambda;
    let rhs = xc.transpose() * yc;
    let singular = || {
        Error::Singular(
            "normal equations are rank deficient; use the ridge flavor with a positive l2 penalty".into(),
        )
    };
    let chol = gram.clone().cholesky().ok_or_else(singular)?;
    if lambda == 0.0 {
        let diag = chol.l_dirty().diagonal();
        let max = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let min = diag.iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
        if max == 0.0 || min / max < 1e-7 {
            return Err(singular());
        }
    }
    Ok(chol.solve(&rhs))
}

fn solve_dual(xc: &DMatrix<f64>, yc: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let m = xc.nrows();
    let gram = xc * xc.transpose();
    let coeffs = if lambda > 0.0 {
        let system = gram + DMatrix::identity(m, m) * lambda;
        system
            .cholesky()
            .ok_or_else(|| Error::Singular("regularized sample-space system is not positive definite".into()))?
            .solve(yc)
    } else {
        let eig = SymmetricEigen::new(gram);
        let largest = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if largest == 0.0 {
            return Ok(DVector::zeros(xc.ncols()));
        }
        let projected = eig.eigenvectors.transpose() * yc;
        let scaled = DVector::from_iterator(
            m,
            projected.iter().zip(eig.eigenvalues.iter()).map(|(c, &v)| {
                if v > largest * PSEUDO_INVERSE_CUTOFF {
                    c / v
                } else {
                    0.0
                }
            }),
        );
        &eig.eigenvectors * scaled
    };
    Ok(xc.transpose() * coeffs)
}
