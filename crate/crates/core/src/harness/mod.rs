//! Experiment pipelines: synthetic planted-model recovery and the
//! financial windowed-returns forecast, with metrics and grid search.

pub mod experiment;
pub mod finance;
pub mod fixture;
pub mod grid;
pub mod metrics;
pub mod panel;
pub mod synthetic;

pub use experiment::{parse_models, run_synthetic, ModelKind, SyntheticExperiment, SyntheticReport};
pub use finance::{run_finance, FinanceExperiment, FinanceReport};
pub use fixture::{bundled_fixture, generate_financial_fixture, FixtureSpec};
pub use grid::{grid_search, grid_search_tensor, GridCell, GridOutcome};
pub use metrics::{metrics, weight_mse, Metrics};
pub use panel::{build_windows, ingest_prices, ingest_readers, PanelDataset, WindowOptions, WindowedDataset};
pub use synthetic::{generate_synthetic, split_synthetic, SyntheticData, SyntheticSpec};
