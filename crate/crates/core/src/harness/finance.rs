//! End-to-end financial forecast: windowing, grid search on the validation
//! range and evaluation of the five models on all three ranges.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::experiment::{parameter_counts, ModelKind, TraceRecord, SCHEMA_VERSION};
use super::grid::{grid_search, grid_search_tensor, validation_mse, GridCell};
use super::metrics::{metrics, Metrics};
use super::panel::{build_windows, PanelDataset, VolumeTransform, WindowOptions, WindowedDataset};
use crate::error::{Error, Result};
use crate::graph::{sector_adjacency, GraphSpec};
use crate::model::{
    identity_penalties, no_penalties, train_linear, BiasUpdate, GrtrConfig, GrtrModel, LinearFlavor, Penalties,
    Samples,
};

const STOCK_MODE: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinanceExperiment {
    pub window: usize,
    pub volume: VolumeTransform,
    pub models: Vec<ModelKind>,
    /// Rank grid for the tensor models.
    pub ranks: Vec<usize>,
    /// λ grid for the tensor models (stock mode only for GRTR, every mode for L2TR).
    pub lambdas: Vec<f64>,
    pub l2lr_lambdas: Vec<f64>,
    /// Edge weight of the sector graph.
    pub beta: f64,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_steps: usize,
    pub init_scale: f64,
    pub bias_update: BiasUpdate,
    pub seed: u64,
}

impl Default for FinanceExperiment {
    fn default() -> Self {
        Self {
            window: 5,
            volume: VolumeTransform::LogDiff,
            models: ModelKind::ALL.to_vec(),
            ranks: vec![1, 2, 4],
            lambdas: vec![0.0, 1.0, 3.0, 10.0],
            l2lr_lambdas: vec![1.0, 10.0, 100.0, 1000.0],
            beta: 1.0,
            learning_rate: 3e-2,
            tolerance: 0.0,
            max_steps: 500,
            init_scale: 0.3,
            bias_update: BiasUpdate::PerMode,
            seed: 0,
        }
    }
}

impl FinanceExperiment {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.models.is_empty() {
            return fail("no models requested");
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return fail("rank grid must be nonempty and positive");
        }
        if self.lambdas.is_empty() || self.l2lr_lambdas.is_empty() {
            return fail("lambda grids must be nonempty");
        }
        if self.lambdas.iter().chain(&self.l2lr_lambdas).any(|l| !(*l >= 0.0 && l.is_finite())) {
            return fail("lambdas must be finite and nonnegative");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta must be positive");
        }
        self.base_config().validate(3)
    }

    fn base_config(&self) -> GrtrConfig {
        GrtrConfig {
            rank: self.ranks[0],
            lambdas: vec![0.0; 3],
            learning_rate: self.learning_rate,
            tolerance: self.tolerance,
            max_steps: self.max_steps,
            seed: self.seed,
            init_scale: self.init_scale,
            bias_update: self.bias_update,
            rho: None,
        }
    }
}

/// Metrics against standardized labels and against raw returns, the latter
/// from de-standardized predictions. Directional accuracy is read from the
/// raw block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub standardized: Metrics,
    pub raw: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinanceModelReport {
    pub name: ModelKind,
    pub params: usize,
    pub params_with_bias: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub train: SplitMetrics,
    pub validation: SplitMetrics,
    pub test: SplitMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub tickers: usize,
    pub sectors: usize,
    pub dates: usize,
    pub first_date: String,
    pub last_date: String,
    pub shape: Vec<usize>,
    pub windows: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub label_mean: f64,
    pub label_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub model: ModelKind,
    pub best: usize,
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinanceReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config: FinanceExperiment,
    pub data: DataSummary,
    pub models: Vec<FinanceModelReport>,
    pub grid: Vec<GridRecord>,
}

impl FinanceReport {
    pub fn model(&self, kind: ModelKind) -> Option<&FinanceModelReport> {
        self.models.iter().find(|m| m.name == kind)
    }
}

#[derive(Debug, Clone)]
pub struct FinanceOutcome {
    pub report: FinanceReport,
    pub dataset: WindowedDataset,
    /// The selected GRTR model, when GRTR was requested.
    pub grtr: Option<GrtrModel>,
    pub traces: Vec<TraceRecord>,
}

fn split_metrics(ds: &WindowedDataset, range: std::ops::Range<usize>, predictions: &[f64]) -> Result<SplitMetrics> {
    let standardized = metrics(&ds.samples.labels()[range.clone()], predictions)?;
    let raw = metrics(ds.raw_labels(range), &ds.destandardize(predictions))?;
    Ok(SplitMetrics { standardized, raw })
}

struct Selected {
    predict: Box<dyn Fn(&Samples) -> Result<Vec<f64>>>,
    rank: Option<usize>,
    lambda: Option<f64>,
    iterations: Option<usize>,
    grid: Option<GridRecord>,
}

pub fn sector_graph(panel: &PanelDataset, beta: f64) -> Result<GraphSpec> {
    GraphSpec::from_adjacency(&(sector_adjacency(&panel.sectors) * beta))
}

/// Windows the panel, then fits and evaluates every requested model.
pub fn run_finance(panel: &PanelDataset, exp: &FinanceExperiment, timings: bool) -> Result<FinanceOutcome> {
    exp.validate()?;
    let ds = build_windows(
        panel,
        &WindowOptions {
            window: exp.window,
            volume: exp.volume,
        },
        None,
    )?;
    let train_set = ds.train()?;
    let validation = ds.validation()?;
    if validation.is_empty() {
        return Err(Error::Data("validation range is empty".into()));
    }
    let shape = ds.shape().to_vec();
    let graph = sector_graph(panel, exp.beta)?;
    let base = exp.base_config();

    let mut models = Vec::new();
    let mut grids = Vec::new();
    let mut traces = Vec::new();
    let mut grtr_model = None;
    for &kind in &exp.models {
        let start = Instant::now();
        let selected = match kind {
            ModelKind::Lr => {
                let model = train_linear(&train_set, 0.0, LinearFlavor::Plain)?;
                Selected {
                    predict: Box::new(move |s| model.predict(s)),
                    rank: None,
                    lambda: None,
                    iterations: None,
                    grid: None,
                }
            }
            ModelKind::L2lr => {
                let out = grid_search(&[1], &exp.l2lr_lambdas, |_, _, l2| {
                    let model = train_linear(&train_set, l2, LinearFlavor::Ridge)?;
                    let mse = validation_mse(&model.predict(&validation)?, validation.labels());
                    Ok((model, mse))
                })?;
                let lambda = out.best_cell().lambda;
                let grid = GridRecord {
                    model: kind,
                    best: out.best,
                    cells: out.cells,
                };
                let model = out.model;
                Selected {
                    predict: Box::new(move |s| model.predict(s)),
                    rank: None,
                    lambda: Some(lambda),
                    iterations: None,
                    grid: Some(grid),
                }
            }
            ModelKind::Tr | ModelKind::L2tr | ModelKind::Grtr => {
                let (penalties, lambdas, modes): (Penalties, &[f64], Vec<bool>) = match kind {
                    ModelKind::Tr => (no_penalties(3), &[0.0], vec![false; 3]),
                    ModelKind::L2tr => (identity_penalties(&shape), &exp.lambdas, vec![true; 3]),
                    _ => {
                        let mut p = no_penalties(3);
                        p[STOCK_MODE] = Some(graph.laplacian().clone());
                        (p, &exp.lambdas, vec![false, true, false])
                    }
                };
                let out = grid_search_tensor(&train_set, &validation, &exp.ranks, lambdas, &base, &penalties, &modes)?;
                let cell = out.best_cell().clone();
                let grid = GridRecord {
                    model: kind,
                    best: out.best,
                    cells: out.cells,
                };
                let (model, trace) = out.model;
                let file_name = format!("{kind}.csv");
                let iterations = trace.iterations;
                traces.push(TraceRecord { file_name, trace });
                if kind == ModelKind::Grtr {
                    grtr_model = Some(model.clone());
                }
                Selected {
                    predict: Box::new(move |s| model.predict(s)),
                    rank: Some(cell.rank),
                    lambda: (kind != ModelKind::Tr).then_some(cell.lambda),
                    iterations: Some(iterations),
                    grid: Some(grid),
                }
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        log::info!("{kind}: {elapsed:.2}s");
        let predict = |range: std::ops::Range<usize>| -> Result<SplitMetrics> {
            let preds = (selected.predict)(&ds.samples.range(range.clone())?)?;
            split_metrics(&ds, range, &preds)
        };
        let (params, params_with_bias) = parameter_counts(kind, &shape, selected.rank.unwrap_or(1));
        models.push(FinanceModelReport {
            name: kind,
            params,
            params_with_bias,
            rank: selected.rank,
            lambda: selected.lambda,
            train: predict(ds.split.train.clone())?,
            validation: predict(ds.split.validation.clone())?,
            test: predict(ds.split.test.clone())?,
            iterations: selected.iterations,
            trace: kind.is_tensor().then(|| format!("{kind}.csv")),
            wall_seconds: timings.then_some(elapsed),
        });
        grids.extend(selected.grid);
    }

    let mut sectors = panel.sectors.clone();
    sectors.sort();
    sectors.dedup();
    let data = DataSummary {
        tickers: panel.tickers.len(),
        sectors: sectors.len(),
        dates: panel.dates.len(),
        first_date: panel.dates[0].to_string(),
        last_date: panel.dates[panel.dates.len() - 1].to_string(),
        shape,
        windows: ds.samples.len(),
        train: ds.split.train.len(),
        validation: ds.split.validation.len(),
        test: ds.split.test.len(),
        label_mean: ds.label_mean,
        label_std: ds.label_std,
    };
    Ok(FinanceOutcome {
        report: FinanceReport {
            schema_version: SCHEMA_VERSION,
            experiment: "finance".into(),
            config: exp.clone(),
            data,
            models,
            grid: grids,
        },
        dataset: ds,
        grtr: grtr_model,
        traces,
    })
}
