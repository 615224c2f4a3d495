//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p grtr --test acceptance`.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use grtr::graph::{kernel_adjacency, sector_adjacency, smoothness};
use grtr::harness::experiment::{parameter_counts, run_synthetic, ModelKind, SyntheticExperiment};
use grtr::harness::finance::run_finance;
use grtr::harness::{
    build_windows, bundled_fixture, generate_synthetic, ingest_readers, FinanceExperiment, PanelDataset, SyntheticSpec,
    WindowOptions,
};
use grtr::model::gradcheck::{run_gradcheck, GradCheckSettings};
use grtr::model::{graph_penalties, train, train_linear, GrtrConfig, LinearFlavor, Samples};
use grtr::{CpdFactors, DenseTensor, GraphSpec, GrtrModel};

/// GRTR test directional accuracy on the bundled fixture must exceed
/// 0.5 by this margin. Pinned from the reference run (0.859 at seed 0;
/// planted-weight oracle 0.828).
const FINANCE_ACCURACY_MARGIN: f64 = 0.25;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_factors(rng: &mut ChaCha8Rng, max_order: usize, max_dim: usize, max_rank: usize) -> CpdFactors {
    let order = rng.random_range(1..=max_order);
    let rank = rng.random_range(1..=max_rank);
    let factors = (0..order)
        .map(|_| {
            let d = rng.random_range(1..=max_dim);
            DMatrix::from_fn(d, rank, |_, _| normal(rng))
        })
        .collect();
    CpdFactors::new(factors).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let report = run_gradcheck(&GradCheckSettings::default(), 0.0).unwrap();
    let elapsed = start.elapsed();
    outcome(
        report.passed() && report.outcomes.len() == 50 && elapsed < Duration::from_secs(30),
        format!(
            "{} / 50 instances within 1e-4, worst relative error {:.2e}, {:.2}s",
            report.outcomes.len() - report.failures(),
            report.worst_error(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let exp = SyntheticExperiment {
        seeds: 10,
        ..Default::default()
    };
    let report = run_synthetic(&exp, false).unwrap().report;
    let elapsed = start.elapsed();
    let wm = |k| report.model(k).unwrap().weight_mse.unwrap();
    let (lr, tr, l2tr, grtr) = (wm(ModelKind::Lr), wm(ModelKind::Tr), wm(ModelKind::L2tr), wm(ModelKind::Grtr));
    let evs = report.model(ModelKind::Grtr).unwrap().test.explained_variance.unwrap_or(f64::NEG_INFINITY);
    let links = [("GRTR<L2TR", grtr < l2tr), ("L2TR<TR", l2tr < tr), ("TR<LR", tr < lr)];
    let ordering = links.iter().all(|(_, ok)| *ok);
    let bounds = (0.01..=0.06).contains(&grtr);
    let fast = elapsed < Duration::from_secs(300);
    let link_text: Vec<String> = links
        .iter()
        .map(|(name, ok)| format!("{name} {}", if *ok { "ok" } else { "violated" }))
        .collect();
    outcome(
        ordering && bounds && evs > 0.60 && fast,
        format!(
            "median weight-MSE GRTR {grtr:.4} L2TR {l2tr:.4} TR {tr:.4} LR {lr:.4} [{}]; GRTR in [0.01,0.06]: {bounds}; GRTR test EVS {evs:.3} (> 0.60: {}); {:.1}s",
            link_text.join(", "),
            evs > 0.60,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut checks = Vec::new();
    let syn = GrtrModel::initialize(&[10; 4], &GrtrConfig::with_uniform_lambda(4, 5, 0.0)).unwrap();
    checks.push(("synthetic tensor", syn.parameter_count(), 200));
    let fin = GrtrModel::initialize(&[5, 450, 6], &GrtrConfig::with_uniform_lambda(3, 1, 0.0)).unwrap();
    checks.push(("finance tensor", fin.parameter_count(), 461));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (name, shape, expected) in [("synthetic linear", vec![10; 4], 10_000), ("finance linear", vec![5, 450, 6], 13_500)] {
        let p: usize = shape.iter().product();
        let inputs = (0..3 * p).map(|_| normal(&mut rng)).collect();
        let data = Samples::from_flat(shape, inputs, vec![1.0, -1.0, 0.5]).unwrap();
        let model = train_linear(&data, 0.0, LinearFlavor::Plain).unwrap();
        checks.push((name, model.parameter_count(), expected));
    }
    for kind in ModelKind::ALL {
        let (syn_p, _) = parameter_counts(kind, &[10; 4], 5);
        let (fin_p, _) = parameter_counts(kind, &[5, 450, 6], 1);
        let (s, f) = if kind.is_tensor() { (200, 461) } else { (10_000, 13_500) };
        checks.push(("report synthetic", syn_p, s));
        checks.push(("report finance", fin_p, f));
    }
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(n, got, want)| format!("{n}: {got} != {want}"))
        .collect();
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "tensor 200 / 461, linear 10,000 / 13,500 (model objects and report counts)".to_string()
        } else {
            bad.join("; ")
        },
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_paths: f64 = 0.0;
    let mut worst_vec: f64 = 0.0;
    for _ in 0..1000 {
        let factors = random_factors(&mut rng, 4, 5, 4);
        let shape = factors.shape();
        let bias = normal(&mut rng);
        let model = GrtrModel::new(factors.clone(), bias, GrtrConfig::with_uniform_lambda(shape.len(), factors.rank(), 0.0));
        let x = DenseTensor::from_fn(&shape, |_| normal(&mut rng)).unwrap();
        let materialized = model.predict_materialized(&x).unwrap();
        let factored = model.predict_factored(&x).unwrap();
        // conditioning scale of the inner product
        let w = factors.reconstruct();
        let scale = w.data().iter().zip(x.data()).map(|(a, b)| (a * b).abs()).sum::<f64>() + bias.abs();
        worst_paths = worst_paths.max((materialized - factored).abs() / scale.max(f64::MIN_POSITIVE));
        // y = vec(W)ᵀ vec(X) + b with vec(W) from the Khatri-Rao form
        let vectorized: f64 = factors.vectorize().iter().zip(x.vectorize()).map(|(a, b)| a * b).sum::<f64>() + bias;
        worst_vec = worst_vec.max((vectorized - materialized).abs() / scale.max(f64::MIN_POSITIVE));
    }
    outcome(
        worst_paths < 1e-10 && worst_vec < 1e-10,
        format!("1000 cases up to order 4: factored vs materialized {worst_paths:.2e}, vectorized regression {worst_vec:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = random_factors(&mut rng, 4, 5, 4);
        let w = f.reconstruct();
        let scale = w.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for n in 0..f.order() {
            let direct = f.matricized(n).unwrap();
            let folded = w.matricize(n).unwrap();
            worst = worst.max((direct - folded).abs().max() / scale);
        }
        let diff = f
            .vectorize()
            .iter()
            .zip(w.vectorize())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    outcome(worst <= 1e-12, format!("100 factor sets, worst scaled deviation {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut graphs = Vec::new();
    for _ in 0..10 {
        let n = rng.random_range(2..12);
        let dim = rng.random_range(1..5);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| normal(&mut rng)).collect()).collect();
        graphs.push(GraphSpec::from_adjacency(&kernel_adjacency(&rows, rng.random_range(0.1..3.0)).unwrap()).unwrap());
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        graphs.push(GraphSpec::from_adjacency(&sector_adjacency(&labels)).unwrap());
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    let w = rng.random_range(0.0..5.0);
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
        }
        graphs.push(GraphSpec::from_adjacency(&a).unwrap());
    }
    graphs.extend(generate_synthetic(&SyntheticSpec::default()).unwrap().graphs);

    let (mut row_sum, mut asym, mut min_quad, mut constant): (f64, f64, f64, f64) = (0.0, 0.0, f64::INFINITY, 0.0);
    for g in &graphs {
        let l = g.laplacian();
        let n = l.nrows();
        row_sum = row_sum.max((l * DVector::from_element(n, 1.0)).amax());
        asym = asym.max((l - l.transpose()).amax());
        for _ in 0..100 {
            let x = DMatrix::from_fn(n, 1, |_, _| normal(&mut rng));
            min_quad = min_quad.min(smoothness(&x, l).unwrap());
        }
        let c = DMatrix::from_element(n, 2, rng.random_range(-3.0..3.0));
        constant = constant.max(smoothness(&c, l).unwrap().abs());
    }
    outcome(
        row_sum < 1e-10 && asym == 0.0 && min_quad >= -1e-10 && constant <= 1e-12,
        format!(
            "{} graphs: max |L·1| {row_sum:.1e}, max asymmetry {asym:.1e}, min xᵀLx {min_quad:.2e}, constant smoothness {constant:.1e}",
            graphs.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = SyntheticSpec {
        order: 3,
        mode_size: 8,
        true_rank: 2,
        samples: 60,
        seed: 7,
        ..Default::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let mut graphs: Vec<Option<GraphSpec>> = vec![None; 3];
    graphs[0] = Some(data.graphs[0].clone());
    let penalties = graph_penalties(&graphs);
    let laplacian = data.graphs[0].laplacian();
    let fit = |lambda: f64| {
        let config = GrtrConfig {
            rank: 2,
            lambdas: vec![lambda, 0.0, 0.0],
            learning_rate: 2e-3,
            max_steps: 300,
            init_scale: 0.5,
            seed: 7,
            ..Default::default()
        };
        let (model, _) = train(&data.samples, &penalties, &config).unwrap();
        smoothness(&model.factors().factors()[0], laplacian).unwrap()
    };
    let (s0, s10) = (fit(0.0), fit(10.0));
    outcome(s10 <= s0, format!("mode-1 smoothness λ=0: {s0:.4}, λ=10: {s10:.4}"))
}

fn fixture_panel() -> PanelDataset {
    let (prices, sectors) = bundled_fixture();
    ingest_readers(prices.as_bytes(), sectors.as_bytes()).unwrap()
}

fn leakage_free(panel: &PanelDataset) -> (bool, usize) {
    let options = WindowOptions::default();
    let base = build_windows(panel, &options, None).unwrap();
    let mut checked = 0;
    for k in [0usize, 50, 246, 247, 300, 492] {
        let date = base.window_dates[k];
        let d = panel.dates.iter().position(|x| *x == date).unwrap();
        let mut perturbed = panel.clone();
        for f in 0..6 {
            *perturbed.value_mut(3, f, d + 1) *= 1.05;
        }
        let after = build_windows(&perturbed, &options, None).unwrap();
        for j in 0..=k {
            if base.raw.input(j) != after.raw.input(j) {
                return (false, checked);
            }
            let label_changed = base.raw.labels()[j] != after.raw.labels()[j];
            if label_changed != (j == k) {
                return (false, checked);
            }
        }
        checked += 1;
    }
    (true, checked)
}

fn standardization_ok(panel: &PanelDataset) -> (bool, f64, f64) {
    let ds = build_windows(panel, &WindowOptions::default(), None).unwrap();
    let train = ds.train().unwrap();
    let f_count = ds.shape()[2];
    let (mut worst_mean, mut worst_std): (f64, f64) = (0.0, 0.0);
    for f in 0..f_count {
        let values: Vec<f64> = (0..train.len())
            .flat_map(|m| train.input(m).iter().skip(f).step_by(f_count).copied().collect::<Vec<_>>())
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());
    }
    // statistics must not depend on anything after the train range
    let mut perturbed = panel.clone();
    let late = panel.dates.len() - 10;
    for s in 0..panel.tickers.len() {
        *perturbed.value_mut(s, 0, late) *= 1.5;
    }
    let again = build_windows(&perturbed, &WindowOptions::default(), None).unwrap();
    let train_only = again.feature_mean == ds.feature_mean
        && again.feature_std == ds.feature_std
        && again.label_mean == ds.label_mean
        && again.label_std == ds.label_std;
    (worst_mean < 1e-10 && worst_std < 1e-10 && train_only, worst_mean, worst_std)
}

/// Directional accuracy of the planted weights on the test windows.
fn planted_oracle(panel: &PanelDataset) -> f64 {
    let spec = grtr::harness::FixtureSpec::default();
    let fx = grtr::harness::generate_financial_fixture(&spec).unwrap();
    // planted weights are in units of each feature's idiosyncratic scale
    let scale = [spec.return_scale, 1.0, 1.0, 1.0, 1.0, 0.2];
    let ds = build_windows(panel, &WindowOptions::default(), None).unwrap();
    let w = fx.planted.reconstruct();
    let range = ds.split.test.clone();
    let hits = range
        .clone()
        .filter(|&m| {
            let raw = ds.raw.input(m);
            // idiosyncratic part: remove the cross-ticker mean of each (lag, feature)
            let [t, s, f] = [ds.shape()[0], ds.shape()[1], ds.shape()[2]];
            let mut score = 0.0;
            for lag in 0..t {
                for feat in 0..f {
                    let mean = (0..s).map(|k| raw[(lag * s + k) * f + feat]).sum::<f64>() / s as f64;
                    for k in 0..s {
                        let idx = (lag * s + k) * f + feat;
                        score += w.data()[idx] * (raw[idx] - mean) / scale[feat];
                    }
                }
            }
            (score >= 0.0) == (ds.raw.labels()[m] >= 0.0)
        })
        .count();
    hits as f64 / range.len() as f64
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let panel = fixture_panel();
    let shape_ok = panel.shape() == [20, 6, 500];
    let (leak_ok, leak_checked) = leakage_free(&panel);
    let (std_ok, worst_mean, worst_std) = standardization_ok(&panel);
    let report = run_finance(&panel, &FinanceExperiment::default(), false).unwrap().report;
    let grtr = report.model(ModelKind::Grtr).unwrap();
    let accuracy = grtr.test.raw.directional_accuracy;
    let oracle = planted_oracle(&panel);
    let elapsed = start.elapsed();
    let counts_ok = (report.data.windows, report.data.train, report.data.validation, report.data.test) == (494, 247, 148, 99);
    outcome(
        shape_ok && leak_ok && std_ok && counts_ok && accuracy > 0.5 + FINANCE_ACCURACY_MARGIN && elapsed < Duration::from_secs(120),
        format!(
            "panel 20x6x500: {shape_ok}; windows 494 = 247/148/99: {counts_ok}; leakage perturbations clean: {leak_ok} ({leak_checked}); \
             train standardization |mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}: {std_ok}; \
             GRTR test accuracy {accuracy:.3} > {:.2} (rank {:?}, lambda {:?}; planted oracle {oracle:.3}); {:.1}s",
            0.5 + FINANCE_ACCURACY_MARGIN,
            grtr.rank,
            grtr.lambda,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_9() -> Outcome {
    let exp = SyntheticExperiment {
        seeds: 2,
        max_steps: 50,
        ..Default::default()
    };
    let a = serde_json::to_vec(&run_synthetic(&exp, false).unwrap().report).unwrap();
    let b = serde_json::to_vec(&run_synthetic(&exp, false).unwrap().report).unwrap();
    let panel = fixture_panel();
    let fin = FinanceExperiment {
        ranks: vec![1, 2],
        lambdas: vec![0.0, 3.0],
        max_steps: 100,
        ..Default::default()
    };
    let c = serde_json::to_vec(&run_finance(&panel, &fin, false).unwrap().report).unwrap();
    let d = serde_json::to_vec(&run_finance(&panel, &fin, false).unwrap().report).unwrap();
    outcome(
        a == b && c == d,
        format!("synthetic report {} bytes identical: {}; finance report {} bytes identical: {}", a.len(), a == b, c.len(), c == d),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient fidelity", criterion_1),
        ("synthetic reproduction", criterion_2),
        ("parameter counts", criterion_3),
        ("path equivalence", criterion_4),
        ("CPD identities", criterion_5),
        ("graph invariants", criterion_6),
        ("regularization effect", criterion_7),
        ("financial pipeline", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.passed {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {}",
            i + 1,
            if result.passed { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
