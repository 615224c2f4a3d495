use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    /// `1 - Var(y - ŷ) / Var(y)`; `None` when the targets have zero variance.
    pub explained_variance: Option<f64>,
    /// Fraction of samples whose prediction has the sign of the target,
    /// with zero counted as positive.
    pub directional_accuracy: f64,
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Data("metrics need at least one sample".into()));
    }
    let n = y_true.len() as f64;
    let residuals = y_true.iter().zip(y_pred).map(|(y, p)| y - p);
    let mse = residuals.clone().map(|r| r * r).sum::<f64>() / n;
    let target_var = variance(y_true.iter().copied());
    let explained_variance = (target_var > 0.0).then(|| 1.0 - variance(residuals) / target_var);
    let positive = |v: f64| v >= 0.0;
    let hits = y_true
        .iter()
        .zip(y_pred)
        .filter(|(y, p)| positive(**y) == positive(**p))
        .count();
    Ok(Metrics {
        mse,
        explained_variance,
        directional_accuracy: hits as f64 / n,
    })
}

/// Mean squared elementwise difference between two equally long vectors.
pub fn weight_mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64)
}
