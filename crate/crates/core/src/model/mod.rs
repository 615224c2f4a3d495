//! Regression models over tensor-valued inputs.
//!
//! [`grtr`] holds the CPD-factored tensor regression with per-mode graph
//! Laplacian penalties and its gradient-descent trainer; [`linear`] holds the
//! vectorized least-squares baselines. Plain and L2-penalised tensor
//! regression are the same trainer with no penalty or an identity Laplacian.

pub mod gradcheck;
pub mod grtr;
pub mod interpret;
pub mod linear;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::tensor::DenseTensor;

pub use grtr::{
    grad_bias, grad_factor, loss, train, train_tensor_baseline, GrtrModel, TensorFlavor, TrainTrace,
};
pub use interpret::{modewise_breakdown, RankBreakdown};
pub use linear::{train_linear, LinearFlavor, LinearModel};

/// A set of labelled tensor samples sharing one shape, stored as a flat
/// `M × ∏I_n` row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    shape: Vec<usize>,
    features: usize,
    inputs: Vec<f64>,
    labels: Vec<f64>,
}

impl Samples {
    pub fn new(inputs: &[DenseTensor], labels: Vec<f64>) -> Result<Self> {
        let Some(first) = inputs.first() else {
            return Err(Error::Data("sample set is empty".into()));
        };
        if inputs.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: inputs.len(),
                found: labels.len(),
            });
        }
        let shape = first.shape().to_vec();
        let mut flat = Vec::with_capacity(first.len() * inputs.len());
        for x in inputs {
            if x.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    found: x.shape().to_vec(),
                });
            }
            flat.extend_from_slice(x.data());
        }
        Self::from_flat(shape, flat, labels)
    }

    pub fn from_flat(shape: Vec<usize>, inputs: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape(shape));
        }
        if labels.is_empty() {
            return Err(Error::Data("sample set is empty".into()));
        }
        let features: usize = shape.iter().product();
        if inputs.len() != features * labels.len() {
            return Err(Error::LengthMismatch {
                expected: features * labels.len(),
                found: inputs.len(),
            });
        }
        Ok(Self {
            shape,
            features,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Number of scalar inputs per sample, `∏I_n`.
    pub fn features(&self) -> usize {
        self.features
    }

    /// Row-major vectorized input of sample `m`.
    pub fn input(&self, m: usize) -> &[f64] {
        &self.inputs[m * self.features..(m + 1) * self.features]
    }

    pub fn tensor(&self, m: usize) -> DenseTensor {
        DenseTensor::new(self.shape.clone(), self.input(m).to_vec())
            .expect("sample shape validated on construction")
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(indices.len() * self.features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: vec![i],
                    shape: vec![self.len()],
                });
            }
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(self.shape.clone(), inputs, labels)
    }

    pub fn range(&self, range: std::ops::Range<usize>) -> Result<Self> {
        self.subset(&range.collect::<Vec<_>>())
    }
}

/// Per-mode penalty matrices. `None` leaves the mode unregularized.
pub type Penalties = Vec<Option<DMatrix<f64>>>;

/// Laplacians of the given graphs, one per mode.
pub fn graph_penalties(graphs: &[Option<GraphSpec>]) -> Penalties {
    graphs
        .iter()
        .map(|g| g.as_ref().map(|g| g.laplacian().clone()))
        .collect()
}

/// Identity penalties, which turn the smoothness term into `½‖U^(n)‖²_F`.
pub fn identity_penalties(shape: &[usize]) -> Penalties {
    shape
        .iter()
        .map(|&d| Some(DMatrix::identity(d, d)))
        .collect()
}

pub fn no_penalties(order: usize) -> Penalties {
    vec![None; order]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasUpdate {
    /// Update the bias after every mode update, as in the sweep of the
    /// reference algorithm (N bias steps per iteration).
    #[default]
    PerMode,
    /// One bias step per iteration, after the mode sweep.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrtrConfig {
    pub rank: usize,
    /// Regularization strength for each mode.
    pub lambdas: Vec<f64>,
    pub learning_rate: f64,
    /// Stop once the training MSE is at or below this value.
    pub tolerance: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Factors and bias start uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
    #[serde(default)]
    pub bias_update: BiasUpdate,
    /// Accepted for interface compatibility; has no effect on training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
}

impl Default for GrtrConfig {
    fn default() -> Self {
        Self {
            rank: 1,
            lambdas: Vec::new(),
            learning_rate: 1e-2,
            tolerance: 0.0,
            max_steps: 1000,
            seed: 0,
            init_scale: 0.1,
            bias_update: BiasUpdate::PerMode,
            rho: None,
        }
    }
}

impl GrtrConfig {
    /// Config with the same `lambda` on every one of `order` modes.
    pub fn with_uniform_lambda(order: usize, rank: usize, lambda: f64) -> Self {
        Self {
            rank,
            lambdas: vec![lambda; order],
            ..Self::default()
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.rank == 0 {
            return fail("rank must be at least 1".into());
        }
        if self.lambdas.len() != order {
            return fail(format!(
                "expected {order} regularization constants, got {}",
                self.lambdas.len()
            ));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return fail(format!("regularization constants must be finite and nonnegative, got {l}"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return fail(format!("tolerance must be nonnegative, got {}", self.tolerance));
        }
        if self.max_steps == 0 {
            return fail("max_steps must be at least 1".into());
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return fail(format!("init_scale must be positive, got {}", self.init_scale));
        }
        if self.rho.is_some() {
            log::warn!("rho constants are accepted but unused by the training objective");
        }
        Ok(())
    }
}
