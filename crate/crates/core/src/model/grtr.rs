//! Graph-regularized tensor regression, `y = ⟨W, X⟩ + b` with `W` held in
//! rank-R CPD form and trained by alternating per-mode gradient steps on
//!
//! ```text
//! L = (1/M) Σ_m ½ (y_m - ⟨W, X_m⟩ - b)²  +  (1/N) Σ_n ½ λ_n tr(U_nᵀ L_n U_n)
//! ```

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{identity_penalties, no_penalties, BiasUpdate, GrtrConfig, Penalties, Samples};
use crate::cpd::{CpdDocument, CpdFactors};
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, DenseTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GrtrModel {
    factors: CpdFactors,
    bias: f64,
    config: GrtrConfig,
}

/// Serialized model: the CPD document plus the training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(flatten)]
    pub cpd: CpdDocument,
    pub config: GrtrConfig,
}

impl GrtrModel {
    pub fn new(factors: CpdFactors, bias: f64, config: GrtrConfig) -> Self {
        Self {
            factors,
            bias,
            config,
        }
    }

    /// Random initial state: every factor entry, then the bias, drawn
    /// uniformly from `[-init_scale, init_scale]` with a seeded generator.
    pub fn initialize(shape: &[usize], config: &GrtrConfig) -> Result<Self> {
        config.validate(shape.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = config.init_scale;
        let mut draw = || rng.random_range(-scale..=scale);
        let factors = shape
            .iter()
            .map(|&rows| {
                let values: Vec<f64> = (0..rows * config.rank).map(|_| draw()).collect();
                DMatrix::from_row_slice(rows, config.rank, &values)
            })
            .collect();
        let factors = CpdFactors::new(factors)?;
        let bias = draw();
        Ok(Self::new(factors, bias, config.clone()))
    }

    pub fn factors(&self) -> &CpdFactors {
        &self.factors
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn config(&self) -> &GrtrConfig {
        &self.config
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.shape()
    }

    /// Materialized weight tensor `W`.
    pub fn weights(&self) -> DenseTensor {
        self.factors.reconstruct()
    }

    /// Trainable factor entries, `R · Σ_n I_n`; the bias is not included.
    pub fn parameter_count(&self) -> usize {
        self.factors.parameter_count()
    }

    fn check_input(&self, x: &DenseTensor) -> Result<()> {
        let shape = self.shape();
        if x.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                found: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// `⟨W, X⟩ + b` with `W` reconstructed in full.
    pub fn predict_materialized(&self, x: &DenseTensor) -> Result<f64> {
        self.check_input(x)?;
        Ok(dot(self.weights().data(), x.data()) + self.bias)
    }

    /// `Σ_r X ×₁ u_r^(1) ×₂ … ×_N u_r^(N) + b`, never forming `W`.
    pub fn predict_factored(&self, x: &DenseTensor) -> Result<f64> {
        self.check_input(x)?;
        let mut total = self.bias;
        for r in 0..self.factors.rank() {
            total += contract_rank_one(&self.factors, r, x)?;
        }
        Ok(total)
    }

    /// Predictions for every sample, reconstructing `W` once.
    pub fn predict(&self, data: &Samples) -> Result<Vec<f64>> {
        let shape = self.shape();
        if data.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                found: data.shape().to_vec(),
            });
        }
        let w = self.weights();
        Ok((0..data.len())
            .map(|m| dot(w.data(), data.input(m)) + self.bias)
            .collect())
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            cpd: CpdDocument::from_factors(&self.factors, self.bias),
            config: self.config.clone(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let (factors, bias) = doc.cpd.to_factors()?;
        Ok(Self::new(factors, bias, doc.config.clone()))
    }
}

/// `X ×₁ u_r^(1) ×₂ … ×_N u_r^(N)` by sequential tensor-by-vector products.
pub(crate) fn contract_rank_one(factors: &CpdFactors, r: usize, x: &DenseTensor) -> Result<f64> {
    let mut current = x.clone();
    for (n, factor) in factors.factors().iter().enumerate() {
        let column = factor.column(r);
        match current.contract_vector(0, column.as_slice())? {
            crate::tensor::Contracted::Tensor(t) => current = t,
            crate::tensor::Contracted::Scalar(s) => {
                debug_assert_eq!(n + 1, factors.order());
                return Ok(s);
            }
        }
    }
    unreachable!("contracting every mode ends in a scalar")
}

/// Data, penalties and regularization constants checked against each other.
struct Objective<'a> {
    data: &'a Samples,
    penalties: &'a Penalties,
    lambdas: &'a [f64],
}

impl<'a> Objective<'a> {
    fn new(
        data: &'a Samples,
        penalties: &'a Penalties,
        lambdas: &'a [f64],
        shape: &[usize],
    ) -> Result<Self> {
        if data.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                found: data.shape().to_vec(),
            });
        }
        if penalties.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                found: penalties.len(),
            });
        }
        if lambdas.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                found: lambdas.len(),
            });
        }
        for (p, &dim) in penalties.iter().zip(shape) {
            if let Some(l) = p {
                if l.nrows() != dim || l.ncols() != dim {
                    return Err(Error::ShapeMismatch {
                        expected: vec![dim, dim],
                        found: vec![l.nrows(), l.ncols()],
                    });
                }
            }
        }
        Ok(Self {
            data,
            penalties,
            lambdas,
        })
    }

    /// `ε_m = y_m - ⟨W, X_m⟩ - b` for every sample.
    fn residuals(&self, factors: &CpdFactors, bias: f64) -> Vec<f64> {
        let w = factors.reconstruct();
        (0..self.data.len())
            .map(|m| self.data.labels()[m] - dot(w.data(), self.data.input(m)) - bias)
            .collect()
    }

    fn error_term(residuals: &[f64]) -> f64 {
        0.5 * residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64
    }

    /// Penalty acting on mode `n`, skipped when λ is zero.
    fn penalty(&self, n: usize) -> Option<&DMatrix<f64>> {
        match &self.penalties[n] {
            Some(l) if self.lambdas[n] != 0.0 => Some(l),
            _ => None,
        }
    }

    fn regularization_term(&self, factors: &CpdFactors) -> f64 {
        let order = factors.order() as f64;
        (0..factors.order())
            .filter_map(|n| {
                let l = self.penalty(n)?;
                let u = &factors.factors()[n];
                Some(0.5 * self.lambdas[n] * (u.transpose() * l * u).trace())
            })
            .sum::<f64>()
            / order
    }

    fn loss_from_residuals(&self, factors: &CpdFactors, residuals: &[f64]) -> f64 {
        Self::error_term(residuals) + self.regularization_term(factors)
    }

    /// `-(1/M) Σ_m ε_m X_m(n) U^(-n) + (1/N) λ_n L_n U_n`. The data term is
    /// evaluated as `(Σ_m ε_m X_m)_(n) U^(-n)`, which is the same sum.
    fn factor_gradient(&self, factors: &CpdFactors, residuals: &[f64], n: usize) -> Result<DMatrix<f64>> {
        let mut weighted = vec![0.0; self.data.features()];
        for (m, &e) in residuals.iter().enumerate() {
            axpy(e, self.data.input(m), &mut weighted);
        }
        let weighted = DenseTensor::new(self.data.shape().to_vec(), weighted)?;
        let complement = factors.khatri_rao_complement(n)?;
        let mut grad = weighted.matricize(n)? * complement;
        grad *= -1.0 / residuals.len() as f64;
        if let Some(l) = self.penalty(n) {
            let scale = self.lambdas[n] / factors.order() as f64;
            grad += (l * &factors.factors()[n]) * scale;
        }
        Ok(grad)
    }

    fn bias_gradient(residuals: &[f64]) -> f64 {
        -residuals.iter().sum::<f64>() / residuals.len() as f64
    }
}

/// Training loss for the current model state.
pub fn loss(model: &GrtrModel, data: &Samples, penalties: &Penalties) -> Result<f64> {
    let shape = model.shape();
    let obj = Objective::new(data, penalties, &model.config.lambdas, &shape)?;
    let residuals = obj.residuals(&model.factors, model.bias);
    Ok(obj.loss_from_residuals(&model.factors, &residuals))
}

/// `∂L/∂b = -(1/M) Σ_m ε_m`.
pub fn grad_bias(model: &GrtrModel, data: &Samples) -> Result<f64> {
    let shape = model.shape();
    let penalties = no_penalties(shape.len());
    let obj = Objective::new(data, &penalties, &model.config.lambdas, &shape)?;
    Ok(Objective::bias_gradient(&obj.residuals(&model.factors, model.bias)))
}

/// `∂L/∂U^(n)` for mode `n` (0-based).
pub fn grad_factor(model: &GrtrModel, data: &Samples, penalties: &Penalties, n: usize) -> Result<DMatrix<f64>> {
    let shape = model.shape();
    if n >= shape.len() {
        return Err(Error::ModeOutOfRange {
            mode: n + 1,
            order: shape.len(),
        });
    }
    let obj = Objective::new(data, penalties, &model.config.lambdas, &shape)?;
    let residuals = obj.residuals(&model.factors, model.bias);
    obj.factor_gradient(&model.factors, &residuals, n)
}

/// Per-iteration record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Training MSE at the start of each iteration.
    pub mse: Vec<f64>,
    /// Full loss at the start of each iteration.
    pub loss: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Training MSE of the returned model.
    pub final_mse: f64,
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,mse,loss")?;
        for (k, (mse, loss)) in self.mse.iter().zip(&self.loss).enumerate() {
            writeln!(out, "{},{mse},{loss}", k + 1)?;
        }
        Ok(())
    }
}

/// Alternating gradient-descent training. The loop runs while the training
/// MSE recorded at the top of the previous iteration exceeds the tolerance
/// and fewer than `max_steps` iterations have run. Each iteration sweeps the
/// modes in order: the gradient for mode n is taken at the current
/// (partially updated) state and applied to `U^(n)` and to the bias.
pub fn train(data: &Samples, penalties: &Penalties, config: &GrtrConfig) -> Result<(GrtrModel, TrainTrace)> {
    let model = GrtrModel::initialize(data.shape(), config)?;
    train_from(model, data, penalties)
}

/// Runs the training loop starting from `model`, using its config.
pub fn train_from(mut model: GrtrModel, data: &Samples, penalties: &Penalties) -> Result<(GrtrModel, TrainTrace)> {
    let shape = model.shape();
    let config = model.config.clone();
    config.validate(shape.len())?;
    let obj = Objective::new(data, penalties, &config.lambdas, &shape)?;
    let alpha = config.learning_rate;

    let mut trace = TrainTrace {
        mse: Vec::new(),
        loss: Vec::new(),
        iterations: 0,
        converged: false,
        final_mse: f64::INFINITY,
    };
    let mut eps = f64::INFINITY;
    let mut k = 0;
    while eps > config.tolerance && k < config.max_steps {
        k += 1;
        let mut residuals = obj.residuals(&model.factors, model.bias);
        eps = 2.0 * Objective::error_term(&residuals);
        if !eps.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                value: eps,
            });
        }
        trace.mse.push(eps);
        trace.loss.push(obj.loss_from_residuals(&model.factors, &residuals));
        for n in 0..shape.len() {
            if n > 0 {
                residuals = obj.residuals(&model.factors, model.bias);
            }
            let grad = obj.factor_gradient(&model.factors, &residuals, n)?;
            let grad_b = Objective::bias_gradient(&residuals);
            *model.factors.factor_mut(n) -= grad * alpha;
            if config.bias_update == BiasUpdate::PerMode {
                model.bias -= alpha * grad_b;
            }
        }
        if config.bias_update == BiasUpdate::PerEpoch {
            let residuals = obj.residuals(&model.factors, model.bias);
            model.bias -= alpha * Objective::bias_gradient(&residuals);
        }
    }
    trace.iterations = k;
    trace.converged = eps <= config.tolerance;
    let residuals = obj.residuals(&model.factors, model.bias);
    trace.final_mse = 2.0 * Objective::error_term(&residuals);
    if !trace.final_mse.is_finite() {
        return Err(Error::Divergence {
            iteration: k,
            value: trace.final_mse,
        });
    }
    Ok((model, trace))
}

/// Unregularized (TR) or L2-regularized (L2TR) tensor regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorFlavor {
    Plain,
    Ridge,
}

/// Tensor-regression baselines: the same trainer with no penalty (TR) or
/// with `½ λ_n ‖U^(n)‖²_F`, i.e. an identity Laplacian on every mode (L2TR).
pub fn train_tensor_baseline(
    data: &Samples,
    config: &GrtrConfig,
    flavor: TensorFlavor,
) -> Result<(GrtrModel, TrainTrace)> {
    let penalties = match flavor {
        TensorFlavor::Plain => no_penalties(data.order()),
        TensorFlavor::Ridge => identity_penalties(data.shape()),
    };
    train(data, &penalties, config)
}
