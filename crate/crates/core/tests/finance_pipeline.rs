use std::io::Write;

use grtr::harness::experiment::ModelKind;
use grtr::harness::finance::{run_finance, sector_graph};
use grtr::harness::grid::validation_mse;
use grtr::harness::{
    build_windows, bundled_fixture, grid_search_tensor, ingest_prices, ingest_readers, FinanceExperiment, PanelDataset,
    WindowOptions,
};
use grtr::model::{graph_penalties, train};
use grtr::{Error, GrtrConfig};

fn panel() -> PanelDataset {
    let (prices, sectors) = bundled_fixture();
    ingest_readers(prices.as_bytes(), sectors.as_bytes()).unwrap()
}

#[test]
fn ingests_fixture_from_files() {
    let (prices, sectors) = bundled_fixture();
    let dir = tempfile::tempdir().unwrap();
    let (p, s) = (dir.path().join("prices.csv"), dir.path().join("sectors.csv"));
    std::fs::File::create(&p).unwrap().write_all(prices.as_bytes()).unwrap();
    std::fs::File::create(&s).unwrap().write_all(sectors.as_bytes()).unwrap();
    let from_files = ingest_prices(&p, &s).unwrap();
    let from_memory = panel();
    assert_eq!(from_files.shape(), [20, 6, 500]);
    assert_eq!(from_files.tickers, from_memory.tickers);
    assert_eq!(from_files.dates, from_memory.dates);
    let mut sectors: Vec<&str> = from_files.sectors.iter().map(String::as_str).collect();
    sectors.dedup();
    assert_eq!(sectors.len(), 4);
}

#[test]
fn missing_sectors_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("prices.csv");
    std::fs::write(&p, bundled_fixture().0).unwrap();
    let err = ingest_prices(&p, &dir.path().join("absent.csv")).unwrap_err();
    assert!(matches!(err, Error::Data(ref m) if m.contains("absent.csv")), "{err:?}");
}

#[test]
fn standardized_and_raw_labels_agree() {
    let ds = build_windows(&panel(), &WindowOptions::default(), None).unwrap();
    let back = ds.destandardize(ds.samples.labels());
    for (a, b) in back.iter().zip(ds.raw.labels()) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
    let train = ds.train().unwrap();
    let n = train.len() as f64;
    let mean = train.labels().iter().sum::<f64>() / n;
    let var = train.labels().iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 1e-12);
    assert!((var - 1.0).abs() < 1e-12);
}

#[test]
fn grid_argmin_matches_scan() {
    let panel = panel();
    let ds = build_windows(&panel, &WindowOptions::default(), None).unwrap();
    let (train_set, validation) = (ds.train().unwrap(), ds.validation().unwrap());
    let penalties = graph_penalties(&[None, Some(sector_graph(&panel, 1.0).unwrap()), None]);
    let base = GrtrConfig {
        learning_rate: 3e-2,
        max_steps: 150,
        init_scale: 0.3,
        ..GrtrConfig::with_uniform_lambda(3, 1, 0.0)
    };
    let ranks = [1, 2, 4];
    let lambdas = [0.0, 1.0, 10.0];
    let out = grid_search_tensor(&train_set, &validation, &ranks, &lambdas, &base, &penalties, &[false, true, false]).unwrap();
    assert_eq!(out.cells.len(), 9);

    let scanned: Vec<f64> = out.cells.iter().map(|c| c.validation_mse.unwrap()).collect();
    let argmin = (0..9).min_by(|&a, &b| scanned[a].total_cmp(&scanned[b])).unwrap();
    assert_eq!(out.best, argmin);

    // the returned model is the one trained in the winning cell
    let cell = out.best_cell();
    let config = GrtrConfig {
        rank: cell.rank,
        lambdas: vec![0.0, cell.lambda, 0.0],
        seed: base.seed + out.best as u64,
        ..base.clone()
    };
    let (model, _) = train(&train_set, &penalties, &config).unwrap();
    let mse = validation_mse(&model.predict(&validation).unwrap(), validation.labels());
    assert_eq!(mse, scanned[argmin]);
    assert_eq!(model.factors(), out.model.0.factors());
}

#[test]
fn fixture_run_reports_every_split() {
    let exp = FinanceExperiment {
        ranks: vec![1, 2],
        lambdas: vec![0.0, 3.0],
        max_steps: 200,
        ..Default::default()
    };
    let outcome = run_finance(&panel(), &exp, false).unwrap();
    let report = &outcome.report;
    assert_eq!(report.models.len(), 5);
    for m in &report.models {
        for split in [&m.train, &m.validation, &m.test] {
            let acc = split.raw.directional_accuracy;
            assert!((0.0..=1.0).contains(&acc), "{:?} accuracy {acc}", m.name);
        }
    }
    let grtr = report.model(ModelKind::Grtr).unwrap();
    assert!(grtr.test.raw.directional_accuracy > 0.6);
    assert!(outcome.grtr.is_some());
    assert_eq!(report.grid.iter().find(|g| g.model == ModelKind::Grtr).unwrap().cells.len(), 4);
}
