//! Validation-scored search over rank and regularization strength.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{train, GrtrConfig, GrtrModel, Penalties, Samples, TrainTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub rank: usize,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome<M> {
    /// Index into `cells` of the winning point.
    pub best: usize,
    pub model: M,
    pub cells: Vec<GridCell>,
}

impl<M> GridOutcome<M> {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

/// Evaluates `fit(cell_index, rank, lambda)` on every point of
/// `ranks × lambdas` (rank-major). `fit` returns a model and its validation
/// MSE. Failed cells are recorded and skipped; the winner has the smallest
/// validation MSE, ties going to the smaller rank, then the smaller λ, then
/// the earlier cell.
pub fn grid_search<M>(
    ranks: &[usize],
    lambdas: &[f64],
    mut fit: impl FnMut(usize, usize, f64) -> Result<(M, f64)>,
) -> Result<GridOutcome<M>> {
    if ranks.is_empty() || lambdas.is_empty() {
        return Err(Error::InvalidConfig("grid needs at least one rank and one lambda".into()));
    }
    let mut cells = Vec::with_capacity(ranks.len() * lambdas.len());
    let mut best: Option<(usize, M)> = None;
    for &rank in ranks {
        for &lambda in lambdas {
            let index = cells.len();
            let mut cell = GridCell {
                rank,
                lambda,
                validation_mse: None,
                error: None,
            };
            match fit(index, rank, lambda) {
                Ok((_, mse)) if !mse.is_finite() => cell.error = Some(format!("validation MSE is {mse}")),
                Ok((model, mse)) => {
                    cell.validation_mse = Some(mse);
                    let better = match &best {
                        None => true,
                        Some((b, _)) => {
                            let c: &GridCell = &cells[*b];
                            (mse, rank, lambda) < (c.validation_mse.unwrap_or(f64::INFINITY), c.rank, c.lambda)
                        }
                    };
                    if better {
                        best = Some((index, model));
                    }
                }
                Err(e) => {
                    log::warn!("grid cell rank {rank} lambda {lambda} failed: {e}");
                    cell.error = Some(e.to_string());
                }
            }
            cells.push(cell);
        }
    }
    let (best, model) = best.ok_or_else(|| Error::Data("every grid cell failed".into()))?;
    Ok(GridOutcome { best, model, cells })
}

pub fn validation_mse(predictions: &[f64], labels: &[f64]) -> f64 {
    predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / labels.len() as f64
}

/// Grid search for a tensor model. `lambda_modes` marks the modes that
/// receive the cell's λ (the others get 0); each cell is seeded with
/// `base.seed + cell index`.
pub fn grid_search_tensor(
    train_set: &Samples,
    validation: &Samples,
    ranks: &[usize],
    lambdas: &[f64],
    base: &GrtrConfig,
    penalties: &Penalties,
    lambda_modes: &[bool],
) -> Result<GridOutcome<(GrtrModel, TrainTrace)>> {
    grid_search(ranks, lambdas, |index, rank, lambda| {
        let config = GrtrConfig {
            rank,
            lambdas: lambda_modes.iter().map(|&on| if on { lambda } else { 0.0 }).collect(),
            seed: base.seed + index as u64,
            ..base.clone()
        };
        let (model, trace) = train(train_set, penalties, &config)?;
        let mse = validation_mse(&model.predict(validation)?, validation.labels());
        Ok(((model, trace), mse))
    })
}
