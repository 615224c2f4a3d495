//! Mode-wise view of a prediction: each rank-1 term of the weight tensor
//! contracts the input one mode at a time, in mode order, down to a scalar.

use serde::Serialize;

use super::GrtrModel;
use crate::error::{Error, Result};
use crate::tensor::{Contracted, DenseTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct RankBreakdown {
    pub rank_index: usize,
    /// Intermediate after contracting modes 1..=k, for k = 1..N. The last
    /// entry is a scalar.
    pub steps: Vec<Contracted>,
}

impl RankBreakdown {
    pub fn contribution(&self) -> f64 {
        self.steps
            .last()
            .and_then(Contracted::as_scalar)
            .expect("breakdown always ends in a scalar")
    }
}

/// Compact, serializable summary of one contraction step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub shape: Vec<usize>,
    pub norm: f64,
    pub sum: f64,
}

impl From<&Contracted> for StepSummary {
    fn from(step: &Contracted) -> Self {
        let shape = match step {
            Contracted::Tensor(t) => t.shape().to_vec(),
            Contracted::Scalar(_) => Vec::new(),
        };
        let values = step.values();
        Self {
            shape,
            norm: values.iter().map(|v| v * v).sum::<f64>().sqrt(),
            sum: values.iter().sum(),
        }
    }
}

pub fn modewise_breakdown(model: &GrtrModel, x: &DenseTensor) -> Result<Vec<RankBreakdown>> {
    let shape = model.shape();
    if x.shape() != shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: shape,
            found: x.shape().to_vec(),
        });
    }
    let factors = model.factors();
    (0..factors.rank())
        .map(|r| {
            let mut steps = Vec::with_capacity(factors.order());
            let mut current = Contracted::Tensor(x.clone());
            for factor in factors.factors() {
                let Contracted::Tensor(t) = &current else {
                    unreachable!("a scalar appears only after the last mode");
                };
                current = t.contract_vector(0, factor.column(r).as_slice())?;
                steps.push(current.clone());
            }
            Ok(RankBreakdown { rank_index: r, steps })
        })
        .collect()
}
