use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use grtr::graph::write_matrix_csv;
use grtr::harness::experiment::run_synthetic;
use grtr::harness::finance::{run_finance, sector_graph};
use grtr::harness::panel::VolumeTransform;
use grtr::harness::{bundled_fixture, ingest_prices, ingest_readers, parse_models, FinanceExperiment, SyntheticExperiment};
use grtr::model::gradcheck::{run_gradcheck, GradCheckSettings};
use grtr::model::grtr::ModelDocument;
use grtr::model::interpret::StepSummary;
use grtr::model::modewise_breakdown;
use grtr::{DenseTensor, GrtrModel, TrainTrace};

use crate::output::{to_json, PendingWrites};
use crate::{Command, CommonArgs, FinanceArgs, GradcheckArgs, InspectArgs, SyntheticArgs};

/// A flag or config problem detected before any computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<grtr::Error>() {
        Some(grtr::Error::InvalidConfig(_)) => 2,
        Some(grtr::Error::Divergence { .. }) => 4,
        _ => 3,
    }
}

pub fn run(command: Command, matches: &ArgMatches) -> Result<ExitCode> {
    match command {
        Command::Synthetic(args) => synthetic(args, matches),
        Command::Finance(args) => finance(args, matches),
        Command::Gradcheck(args) => gradcheck(args),
        Command::Inspect(args) => inspect(args),
    }
}

/// Decides which flags overwrite the resolved settings: all of them without
/// a config file, only those typed on the command line with one.
struct Overrides<'a> {
    matches: &'a ArgMatches,
    with_config: bool,
}

impl Overrides<'_> {
    fn set<T>(&self, id: &str, target: &mut T, value: T) {
        if !self.with_config || self.matches.value_source(id) == Some(ValueSource::CommandLine) {
            *target = value;
        }
    }

    fn apply<T>(&self, id: &str, target: &mut T, value: impl FnOnce() -> Result<T>) -> Result<()> {
        if !self.with_config || self.matches.value_source(id) == Some(ValueSource::CommandLine) {
            *target = value()?;
        }
        Ok(())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Defaults overlaid with the JSON config file, if any.
fn resolve<T: Serialize + DeserializeOwned + Default>(config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let patch: Value = serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))?;
    if !patch.is_object() {
        return Err(usage(format!("config {} must be a JSON object", path.display())));
    }
    let mut base = serde_json::to_value(T::default())?;
    merge(&mut base, patch);
    serde_json::from_value(base).map_err(|e| usage(format!("bad config {}: {e}", path.display())))
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| usage(format!("--{flag}: cannot parse `{s}`: {e}"))))
        .collect::<Result<Vec<T>>>()?;
    if values.is_empty() {
        return Err(usage(format!("--{flag} needs at least one value")));
    }
    Ok(values)
}

fn models(text: &str) -> Result<Vec<grtr::harness::ModelKind>> {
    parse_models(text).map_err(|e| usage(e.to_string()))
}

fn stage_traces<'a>(out: &mut PendingWrites, dir: Option<&Path>, traces: impl Iterator<Item = (&'a str, &'a TrainTrace)>) -> Result<()> {
    let Some(dir) = dir else { return Ok(()) };
    for (name, trace) in traces {
        let mut bytes = Vec::new();
        trace.write_csv(&mut bytes)?;
        out.file(dir.join(name), bytes);
    }
    Ok(())
}

fn apply_common(o: &Overrides, common: &CommonArgs, models_target: &mut Vec<grtr::harness::ModelKind>, tol: &mut f64) -> Result<()> {
    o.apply("models", models_target, || models(&common.models))?;
    o.set("tol", tol, common.tol);
    Ok(())
}

fn synthetic(args: SyntheticArgs, matches: &ArgMatches) -> Result<ExitCode> {
    let common = &args.common;
    let mut exp: SyntheticExperiment = resolve(common.config.as_deref())?;
    let o = Overrides {
        matches,
        with_config: common.config.is_some(),
    };
    apply_common(&o, common, &mut exp.models, &mut exp.tolerance)?;
    o.set("seed", &mut exp.spec.seed, common.seed);
    o.set("seeds", &mut exp.seeds, args.seeds);
    o.set("rank", &mut exp.rank, args.rank);
    o.apply("lambda", &mut exp.lambdas, || parse_list("lambda", &args.lambda))?;
    o.set("l2tr_lambda", &mut exp.l2tr_lambda, args.l2tr_lambda);
    o.set("l2lr_lambda", &mut exp.l2lr_lambda, args.l2lr_lambda);
    o.set("lr", &mut exp.learning_rate, args.lr);
    o.set("max_steps", &mut exp.max_steps, args.max_steps);
    o.set("init_scale", &mut exp.init_scale, args.init_scale);
    o.set("order", &mut exp.spec.order, args.order);
    o.set("mode_size", &mut exp.spec.mode_size, args.mode_size);
    o.set("true_rank", &mut exp.spec.true_rank, args.true_rank);
    o.set("samples", &mut exp.spec.samples, args.samples);
    o.set("noise_ratio", &mut exp.spec.noise_ratio, args.noise_ratio);
    o.set("beta", &mut exp.spec.beta, args.beta);
    if exp.lambdas.len() != exp.spec.order {
        match exp.lambdas.as_slice() {
            [single] => exp.lambdas = vec![*single; exp.spec.order],
            _ => {
                return Err(usage(format!(
                    "--lambda has {} values but the tensor has {} modes",
                    exp.lambdas.len(),
                    exp.spec.order
                )))
            }
        }
    }
    exp.validate()?;

    let outcome = run_synthetic(&exp, common.timings)?;
    let mut out = PendingWrites::default();
    stage_traces(
        &mut out,
        common.trace_dir.as_deref(),
        outcome.traces.iter().map(|t| (t.file_name.as_str(), &t.trace)),
    )?;
    out.file_or_stdout(common.output.as_deref(), to_json(&outcome.report)?);
    out.commit()?;
    for m in &outcome.report.models {
        log::info!(
            "{}: weight MSE {:?}, test EVS {:?}",
            m.name,
            m.weight_mse,
            m.test.explained_variance
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn model_path(args: &FinanceArgs) -> Option<PathBuf> {
    args.model_output.clone().or_else(|| {
        args.common.output.as_ref().map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
            p.with_file_name(format!("{stem}.model.json"))
        })
    })
}

fn finance(args: FinanceArgs, matches: &ArgMatches) -> Result<ExitCode> {
    let common = &args.common;
    let mut exp: FinanceExperiment = resolve(common.config.as_deref())?;
    let o = Overrides {
        matches,
        with_config: common.config.is_some(),
    };
    apply_common(&o, common, &mut exp.models, &mut exp.tolerance)?;
    o.set("seed", &mut exp.seed, common.seed);
    o.set("window", &mut exp.window, args.window);
    o.set("beta", &mut exp.beta, args.beta);
    o.apply("rank", &mut exp.ranks, || parse_list("rank", &args.rank))?;
    o.apply("lambda", &mut exp.lambdas, || parse_list("lambda", &args.lambda))?;
    o.apply("l2lr_lambda", &mut exp.l2lr_lambdas, || parse_list("l2lr-lambda", &args.l2lr_lambda))?;
    o.set("lr", &mut exp.learning_rate, args.lr);
    o.set("max_steps", &mut exp.max_steps, args.max_steps);
    o.set("init_scale", &mut exp.init_scale, args.init_scale);
    let volume = if args.raw_volume {
        VolumeTransform::Raw
    } else {
        VolumeTransform::LogDiff
    };
    o.set("raw_volume", &mut exp.volume, volume);
    exp.validate()?;

    let panel = match (&args.prices, &args.sectors, args.fixture) {
        (_, _, true) => {
            let (prices, sectors) = bundled_fixture();
            ingest_readers(prices.as_bytes(), sectors.as_bytes())?
        }
        (Some(prices), Some(sectors), false) => ingest_prices(prices, sectors)?,
        _ => return Err(usage("finance needs --prices and --sectors, or --fixture")),
    };

    let outcome = run_finance(&panel, &exp, common.timings)?;
    let mut out = PendingWrites::default();
    stage_traces(
        &mut out,
        common.trace_dir.as_deref(),
        outcome.traces.iter().map(|t| (t.file_name.as_str(), &t.trace)),
    )?;
    if let Some(dir) = &args.graph_dir {
        let graph = sector_graph(&panel, exp.beta)?;
        let mut adjacency = Vec::new();
        write_matrix_csv(graph.adjacency(), &mut adjacency)?;
        let mut laplacian = Vec::new();
        write_matrix_csv(graph.laplacian(), &mut laplacian)?;
        out.file(dir.join("sector_adjacency.csv"), adjacency);
        out.file(dir.join("sector_laplacian.csv"), laplacian);
    }
    if let (Some(model), Some(path)) = (&outcome.grtr, model_path(&args)) {
        out.file(path, to_json(&model.to_document())?);
    }
    out.file_or_stdout(common.output.as_deref(), to_json(&outcome.report)?);
    out.commit()?;
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if !(args.step > 0.0 && args.tol > 0.0) {
        return Err(usage("--step and --tol must be positive"));
    }
    let settings = GradCheckSettings {
        trials: args.trials,
        seed: args.seed,
        step: args.step,
        tolerance: args.tol,
        ..Default::default()
    };
    let report = run_gradcheck(&settings, args.corrupt)?;
    let mut out = PendingWrites::default();
    if let Some(path) = &args.output {
        out.file(path, to_json(&report)?);
    }
    out.commit()?;
    for o in report.outcomes.iter().filter(|o| !o.passed) {
        println!(
            "FAIL trial {} shape {:?} rank {} lambda {}: bias {:.3e}, factors {:.3e}",
            o.trial, o.shape, o.rank, o.lambda, o.bias_error, o.factor_error
        );
    }
    println!(
        "{} of {} trials passed; worst relative error {:.3e} (tolerance {:.1e})",
        report.outcomes.len() - report.failures(),
        report.outcomes.len(),
        report.worst_error(),
        settings.tolerance
    );
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

#[derive(Deserialize)]
struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize)]
struct Coefficient {
    index: Vec<usize>,
    value: f64,
}

#[derive(Serialize)]
struct RankSummary {
    rank: usize,
    contribution: f64,
    steps: Vec<StepSummary>,
}

#[derive(Serialize)]
struct Breakdown {
    prediction: f64,
    bias: f64,
    ranks: Vec<RankSummary>,
}

#[derive(Serialize)]
struct InspectReport {
    shape: Vec<usize>,
    rank: usize,
    bias: f64,
    coefficients: Vec<Coefficient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    breakdown: Option<Breakdown>,
}

fn factor_csv(matrix: &nalgebra::DMatrix<f64>) -> String {
    let mut out = String::from("index");
    for r in 1..=matrix.ncols() {
        out += &format!(",r{r}");
    }
    out.push('\n');
    for i in 0..matrix.nrows() {
        out += &(i + 1).to_string();
        for r in 0..matrix.ncols() {
            out += &format!(",{}", matrix[(i, r)]);
        }
        out.push('\n');
    }
    out
}

fn inspect(args: InspectArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.model).with_context(|| format!("cannot read model {}", args.model.display()))?;
    let doc: ModelDocument = serde_json::from_str(&text).map_err(grtr::Error::from)?;
    let model = GrtrModel::from_document(&doc)?;
    let shape = model.shape();

    let mut coefficients = Vec::new();
    for spec in &args.coef {
        let index: Vec<usize> = parse_list("coef", spec)?;
        if index.contains(&0) {
            return Err(usage(format!("--coef {spec}: indices are 1-based")));
        }
        let zero_based: Vec<usize> = index.iter().map(|i| i - 1).collect();
        let value = model
            .factors()
            .coefficient_at(&zero_based)
            .map_err(|_| usage(format!("--coef {spec} is outside the weight shape {shape:?}")))?;
        coefficients.push(Coefficient { index, value });
    }

    let breakdown = match &args.input {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read input {}", path.display()))?;
            let raw: TensorFile = serde_json::from_str(&text).map_err(grtr::Error::from)?;
            let x = DenseTensor::new(raw.shape, raw.data)?;
            let ranks = modewise_breakdown(&model, &x)?;
            Some(Breakdown {
                prediction: model.predict_factored(&x)?,
                bias: model.bias(),
                ranks: ranks
                    .iter()
                    .map(|b| RankSummary {
                        rank: b.rank_index + 1,
                        contribution: b.contribution(),
                        steps: b.steps.iter().map(StepSummary::from).collect(),
                    })
                    .collect(),
            })
        }
    };

    let mut out = PendingWrites::default();
    if let Some(dir) = &args.factors_dir {
        for (n, factor) in model.factors().factors().iter().enumerate() {
            out.file(dir.join(format!("factor_mode{}.csv", n + 1)), factor_csv(factor));
        }
    }
    let report = InspectReport {
        shape,
        rank: model.factors().rank(),
        bias: model.bias(),
        coefficients,
        breakdown,
    };
    out.file_or_stdout(args.output.as_deref(), to_json(&report)?);
    out.commit()?;
    Ok(ExitCode::SUCCESS)
}
