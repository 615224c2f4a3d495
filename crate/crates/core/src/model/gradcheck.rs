//! Finite-difference verification of the analytic loss gradients on small
//! random instances.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{grad_bias, grad_factor, loss, GrtrConfig, GrtrModel, Penalties, Samples};
use crate::cpd::CpdFactors;
use crate::error::Result;
use crate::graph::GraphSpec;

/// Denominator floor for relative errors, so entries whose true gradient is
/// near zero are compared at an absolute scale of `tolerance * floor`.
pub const DENOMINATOR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckSettings {
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub orders: Vec<usize>,
    pub max_dim: usize,
    pub max_rank: usize,
    pub max_samples: usize,
    pub lambdas: Vec<f64>,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 0,
            step: 1e-6,
            tolerance: 1e-4,
            orders: vec![2, 3],
            max_dim: 4,
            max_rank: 3,
            max_samples: 8,
            lambdas: vec![0.0, 0.5],
        }
    }
}

/// A model, its data and its per-mode penalties.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: GrtrModel,
    pub data: Samples,
    pub penalties: Penalties,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub shape: Vec<usize>,
    pub rank: usize,
    pub samples: usize,
    pub lambda: f64,
    pub bias_error: f64,
    pub factor_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub settings: GradCheckSettings,
    pub outcomes: Vec<TrialOutcome>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.passed).count()
    }

    pub fn worst_error(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| o.bias_error.max(o.factor_error))
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random instance: Gaussian factors, inputs and labels; every mode gets
/// either a random weighted graph or no penalty, all with the same λ.
pub fn random_instance(rng: &mut ChaCha8Rng, settings: &GradCheckSettings) -> Result<Instance> {
    let order = settings.orders[rng.random_range(0..settings.orders.len())];
    let shape: Vec<usize> = (0..order).map(|_| rng.random_range(1..=settings.max_dim)).collect();
    let rank = rng.random_range(1..=settings.max_rank);
    let samples = rng.random_range(1..=settings.max_samples);
    let lambda = settings.lambdas[rng.random_range(0..settings.lambdas.len())];

    let factors = shape
        .iter()
        .map(|&d| DMatrix::from_fn(d, rank, |_, _| normal(rng)))
        .collect();
    let factors = CpdFactors::new(factors)?;
    let config = GrtrConfig::with_uniform_lambda(order, rank, lambda);
    let bias = normal(rng);
    let model = GrtrModel::new(factors, bias, config);

    let features: usize = shape.iter().product();
    let inputs: Vec<f64> = (0..features * samples).map(|_| normal(rng)).collect();
    let labels: Vec<f64> = (0..samples).map(|_| normal(rng)).collect();
    let data = Samples::from_flat(shape.clone(), inputs, labels)?;

    let mut penalties = Penalties::with_capacity(order);
    for &d in &shape {
        if rng.random_bool(0.25) {
            penalties.push(None);
            continue;
        }
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i + 1..d {
                if rng.random_bool(0.7) {
                    let w: f64 = rng.random_range(0.1..2.0);
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
        }
        penalties.push(Some(GraphSpec::from_adjacency(&a)?.laplacian().clone()));
    }
    Ok(Instance {
        model,
        data,
        penalties,
    })
}

/// Central difference of the loss in the bias.
pub fn numeric_grad_bias(instance: &Instance, step: f64) -> Result<f64> {
    let m = &instance.model;
    let shifted = |delta: f64| {
        let model = GrtrModel::new(m.factors().clone(), m.bias() + delta, m.config().clone());
        loss(&model, &instance.data, &instance.penalties)
    };
    Ok((shifted(step)? - shifted(-step)?) / (2.0 * step))
}

/// Central differences of the loss in every entry of `U^(mode)`.
pub fn numeric_grad_factor(instance: &Instance, mode: usize, step: f64) -> Result<DMatrix<f64>> {
    let m = &instance.model;
    let base = m.factors().factors()[mode].clone();
    let mut out = DMatrix::zeros(base.nrows(), base.ncols());
    for i in 0..base.nrows() {
        for r in 0..base.ncols() {
            let shifted = |delta: f64| {
                let mut factors = m.factors().clone();
                factors.factor_mut(mode)[(i, r)] += delta;
                let model = GrtrModel::new(factors, m.bias(), m.config().clone());
                loss(&model, &instance.data, &instance.penalties)
            };
            out[(i, r)] = (shifted(step)? - shifted(-step)?) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Worst relative errors (bias, factors) of the analytic gradients.
/// `corruption` scales the analytic factor gradient by `1 + corruption`,
/// to confirm the check can fail.
pub fn check_instance(instance: &Instance, step: f64, corruption: f64) -> Result<(f64, f64)> {
    let analytic_b = grad_bias(&instance.model, &instance.data)?;
    let bias_error = relative_error(analytic_b, numeric_grad_bias(instance, step)?);
    let mut factor_error: f64 = 0.0;
    for mode in 0..instance.model.factors().order() {
        let analytic = grad_factor(&instance.model, &instance.data, &instance.penalties, mode)? * (1.0 + corruption);
        let numeric = numeric_grad_factor(instance, mode, step)?;
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            factor_error = factor_error.max(relative_error(*a, *n));
        }
    }
    Ok((bias_error, factor_error))
}

pub fn run_gradcheck(settings: &GradCheckSettings, corruption: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut outcomes = Vec::with_capacity(settings.trials);
    for trial in 0..settings.trials {
        let instance = random_instance(&mut rng, settings)?;
        let (bias_error, factor_error) = check_instance(&instance, settings.step, corruption)?;
        outcomes.push(TrialOutcome {
            trial,
            shape: instance.data.shape().to_vec(),
            rank: instance.model.factors().rank(),
            samples: instance.data.len(),
            lambda: instance.model.config().lambdas[0],
            bias_error,
            factor_error,
            passed: bias_error < settings.tolerance && factor_error < settings.tolerance,
        });
    }
    Ok(GradCheckReport {
        settings: settings.clone(),
        outcomes,
    })
}
