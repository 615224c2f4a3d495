//! Model roster, per-model evaluation records and the multi-seed synthetic
//! experiment.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{metrics, weight_mse, Metrics};
use super::synthetic::{generate_synthetic, split_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{
    graph_penalties, identity_penalties, no_penalties, train, train_linear, BiasUpdate, GrtrConfig, LinearFlavor,
    Penalties, Samples, TrainTrace,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    L2lr,
    Tr,
    L2tr,
    Grtr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::Lr, Self::L2lr, Self::Tr, Self::L2tr, Self::Grtr];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lr => "lr",
            Self::L2lr => "l2lr",
            Self::Tr => "tr",
            Self::L2tr => "l2tr",
            Self::Grtr => "grtr",
        }
    }

    pub fn is_tensor(self) -> bool {
        matches!(self, Self::Tr | Self::L2tr | Self::Grtr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model `{s}` (expected lr, l2lr, tr, l2tr, grtr)")))
    }
}

/// Parses `all` or a comma-separated model list into a sorted, deduplicated roster.
pub fn parse_models(spec: &str) -> Result<Vec<ModelKind>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelKind::ALL.to_vec());
    }
    let mut models = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<ModelKind>>>()?;
    models.sort();
    models.dedup();
    if models.is_empty() {
        return Err(Error::InvalidConfig("no models requested".into()));
    }
    Ok(models)
}

/// Median of the values; the mean of the middle two for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] })
}

fn median_metrics(all: &[Metrics]) -> Metrics {
    let pick = |f: fn(&Metrics) -> f64| median(&all.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    let evs: Vec<f64> = all.iter().filter_map(|m| m.explained_variance).collect();
    Metrics {
        mse: pick(|m| m.mse),
        explained_variance: median(&evs),
        directional_accuracy: pick(|m| m.directional_accuracy),
    }
}

/// Tensor and linear parameter counts; the first convention excludes the
/// bias.
pub fn parameter_counts(kind: ModelKind, shape: &[usize], rank: usize) -> (usize, usize) {
    let params = if kind.is_tensor() {
        rank * shape.iter().sum::<usize>()
    } else {
        shape.iter().product()
    };
    (params, params + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticExperiment {
    /// Data specification; `spec.seed` is the first seed.
    pub spec: SyntheticSpec,
    pub seeds: usize,
    pub models: Vec<ModelKind>,
    pub rank: usize,
    /// Per-mode constants for GRTR.
    pub lambdas: Vec<f64>,
    /// Uniform constant for L2TR.
    pub l2tr_lambda: f64,
    pub l2lr_lambda: f64,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_steps: usize,
    pub init_scale: f64,
    pub bias_update: BiasUpdate,
}

impl Default for SyntheticExperiment {
    fn default() -> Self {
        let spec = SyntheticSpec::default();
        Self {
            lambdas: vec![100.0; spec.order],
            spec,
            seeds: 1,
            models: ModelKind::ALL.to_vec(),
            rank: 5,
            l2tr_lambda: 100.0,
            l2lr_lambda: 1.0,
            learning_rate: 1e-3,
            tolerance: 0.0,
            max_steps: 300,
            init_scale: 0.5,
            bias_update: BiasUpdate::PerMode,
        }
    }
}

impl SyntheticExperiment {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("need at least one seed".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("no models requested".into()));
        }
        if !(self.l2tr_lambda >= 0.0 && self.l2lr_lambda >= 0.0) {
            return Err(Error::InvalidConfig("L2 constants must be nonnegative".into()));
        }
        self.tensor_config(ModelKind::Grtr, 0).validate(self.spec.order)
    }

    /// Training configuration of a tensor model for one seed.
    pub fn tensor_config(&self, kind: ModelKind, seed: u64) -> GrtrConfig {
        let lambdas = match kind {
            ModelKind::Grtr => self.lambdas.clone(),
            ModelKind::L2tr => vec![self.l2tr_lambda; self.spec.order],
            _ => vec![0.0; self.spec.order],
        };
        GrtrConfig {
            rank: self.rank,
            lambdas,
            learning_rate: self.learning_rate,
            tolerance: self.tolerance,
            max_steps: self.max_steps,
            seed,
            init_scale: self.init_scale,
            bias_update: self.bias_update,
            rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub name: ModelKind,
    pub params: usize,
    pub params_with_bias: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_mse: Option<f64>,
    pub train: Metrics,
    pub test: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// File name used for the loss trace when traces are written.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub signal_std: f64,
    pub noise_std: f64,
    pub models: Vec<ModelRun>,
}

/// Medians over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: ModelKind,
    pub params: usize,
    pub params_with_bias: usize,
    pub weight_mse: Option<f64>,
    pub train: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config: SyntheticExperiment,
    pub models: Vec<ModelSummary>,
    pub runs: Vec<SeedRun>,
}

impl SyntheticReport {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == kind)
    }
}

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub file_name: String,
    pub trace: TrainTrace,
}

#[derive(Debug, Clone)]
pub struct SyntheticOutcome {
    pub report: SyntheticReport,
    pub traces: Vec<TraceRecord>,
}

pub fn trace_file_name(model: ModelKind, seed: u64) -> String {
    format!("{model}_seed{seed}.csv")
}

struct Fitted {
    weights: Vec<f64>,
    train_pred: Vec<f64>,
    test_pred: Vec<f64>,
    trace: Option<TrainTrace>,
}

fn fit(kind: ModelKind, exp: &SyntheticExperiment, seed: u64, train_set: &Samples, test: &Samples, penalties: Penalties) -> Result<Fitted> {
    if kind.is_tensor() {
        let (model, trace) = train(train_set, &penalties, &exp.tensor_config(kind, seed))?;
        Ok(Fitted {
            weights: model.weights().into_data(),
            train_pred: model.predict(train_set)?,
            test_pred: model.predict(test)?,
            trace: Some(trace),
        })
    } else {
        let (l2, flavor) = match kind {
            ModelKind::Lr => (0.0, LinearFlavor::Plain),
            _ => (exp.l2lr_lambda, LinearFlavor::Ridge),
        };
        let model = train_linear(train_set, l2, flavor)?;
        Ok(Fitted {
            train_pred: model.predict(train_set)?,
            test_pred: model.predict(test)?,
            weights: model.weights,
            trace: None,
        })
    }
}

/// Runs every requested model on `seeds` consecutive seeds. With `timings`
/// unset the report is a pure function of the experiment.
pub fn run_synthetic(exp: &SyntheticExperiment, timings: bool) -> Result<SyntheticOutcome> {
    exp.validate()?;
    let shape = exp.spec.shape();
    let mut runs = Vec::with_capacity(exp.seeds);
    let mut traces = Vec::new();
    for i in 0..exp.seeds as u64 {
        let seed = exp.spec.seed + i;
        let data = generate_synthetic(&SyntheticSpec { seed, ..exp.spec.clone() })?;
        let (train_set, test) = split_synthetic(&data.samples, seed)?;
        let truth = data.truth.reconstruct();
        let mut models = Vec::with_capacity(exp.models.len());
        for &kind in &exp.models {
            let penalties = match kind {
                ModelKind::Grtr => graph_penalties(&data.graphs.iter().cloned().map(Some).collect::<Vec<_>>()),
                ModelKind::L2tr => identity_penalties(&shape),
                _ => no_penalties(shape.len()),
            };
            let start = Instant::now();
            let fitted = fit(kind, exp, seed, &train_set, &test, penalties)?;
            let elapsed = start.elapsed().as_secs_f64();
            log::info!("seed {seed} {kind}: {elapsed:.2}s");
            let (params, params_with_bias) = parameter_counts(kind, &shape, exp.rank);
            let trace_name = fitted.trace.as_ref().map(|_| trace_file_name(kind, seed));
            let iterations = fitted.trace.as_ref().map(|t| t.iterations);
            if let (Some(trace), Some(name)) = (fitted.trace, &trace_name) {
                traces.push(TraceRecord {
                    file_name: name.clone(),
                    trace,
                });
            }
            models.push(ModelRun {
                name: kind,
                params,
                params_with_bias,
                weight_mse: Some(weight_mse(&fitted.weights, truth.data())?),
                train: metrics(train_set.labels(), &fitted.train_pred)?,
                test: metrics(test.labels(), &fitted.test_pred)?,
                iterations,
                trace: trace_name,
                wall_seconds: timings.then_some(elapsed),
            });
        }
        runs.push(SeedRun {
            seed,
            signal_std: data.signal_std,
            noise_std: data.noise_std,
            models,
        });
    }

    let models = exp
        .models
        .iter()
        .map(|&kind| {
            let per_seed: Vec<&ModelRun> = runs.iter().flat_map(|r| r.models.iter().filter(move |m| m.name == kind)).collect();
            let wm: Vec<f64> = per_seed.iter().filter_map(|m| m.weight_mse).collect();
            let (params, params_with_bias) = parameter_counts(kind, &shape, exp.rank);
            ModelSummary {
                name: kind,
                params,
                params_with_bias,
                weight_mse: median(&wm),
                train: median_metrics(&per_seed.iter().map(|m| m.train).collect::<Vec<_>>()),
                test: median_metrics(&per_seed.iter().map(|m| m.test).collect::<Vec<_>>()),
            }
        })
        .collect();

    Ok(SyntheticOutcome {
        report: SyntheticReport {
            schema_version: SCHEMA_VERSION,
            experiment: "synthetic".into(),
            config: exp.clone(),
            models,
            runs,
        },
        traces,
    })
}
