//! Daily market-data panels and the rolling-window regression dataset built
//! from them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Samples;

pub const FEATURES: [&str; 6] = ["adj_close", "close", "high", "low", "open", "volume"];
const ADJ_CLOSE: usize = 0;
const VOLUME: usize = 5;

/// Raw values indexed `[ticker][feature][date]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub features: Vec<String>,
    pub sectors: Vec<String>,
    values: Vec<f64>,
}

impl PanelDataset {
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        sectors: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = tickers.len() * FEATURES.len() * dates.len();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: values.len(),
            });
        }
        if sectors.len() != tickers.len() {
            return Err(Error::LengthMismatch {
                expected: tickers.len(),
                found: sectors.len(),
            });
        }
        if tickers.is_empty() || dates.is_empty() {
            return Err(Error::Data("panel is empty".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("panel dates must be strictly increasing".into()));
        }
        Ok(Self {
            tickers,
            dates,
            features: FEATURES.iter().map(|f| f.to_string()).collect(),
            sectors,
            values,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.tickers.len(), self.features.len(), self.dates.len()]
    }

    pub fn value(&self, ticker: usize, feature: usize, date: usize) -> f64 {
        self.values[(ticker * self.features.len() + feature) * self.dates.len() + date]
    }

    pub fn value_mut(&mut self, ticker: usize, feature: usize, date: usize) -> &mut f64 {
        let idx = (ticker * self.features.len() + feature) * self.dates.len() + date;
        &mut self.values[idx]
    }

    /// Series of one ticker and feature over all dates.
    pub fn series(&self, ticker: usize, feature: usize) -> &[f64] {
        let start = (ticker * self.features.len() + feature) * self.dates.len();
        &self.values[start..start + self.dates.len()]
    }

    pub fn sector_of(&self, ticker: &str) -> Option<&str> {
        self.tickers
            .iter()
            .position(|t| t == ticker)
            .map(|i| self.sectors[i].as_str())
    }
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    ticker: String,
    adj_close: Option<f64>,
    close: Option<f64>,
    high: Option<f64>,
    low: Option<f64>,
    open: Option<f64>,
    volume: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct SectorRow {
    ticker: String,
    sector: String,
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Data(format!("bad date `{s}`: {e}")))
}

pub fn ingest_prices(prices_path: &Path, sectors_path: &Path) -> Result<PanelDataset> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|e| Error::Data(format!("cannot open {}: {e}", p.display())))
    };
    ingest_readers(open(prices_path)?, open(sectors_path)?)
}

/// Pivots the long price table into a panel. Tickers without a sector, with
/// a missing date, or with a missing or non-positive value are dropped with
/// a warning.
pub fn ingest_readers<P: Read, S: Read>(prices: P, sectors: S) -> Result<PanelDataset> {
    let mut sector_map = BTreeMap::new();
    for row in csv::Reader::from_reader(sectors).deserialize() {
        let row: SectorRow = row?;
        sector_map.insert(row.ticker.trim().to_string(), row.sector.trim().to_string());
    }

    let mut all_dates = BTreeSet::new();
    let mut by_ticker: BTreeMap<String, BTreeMap<NaiveDate, [Option<f64>; 6]>> = BTreeMap::new();
    for row in csv::Reader::from_reader(prices).deserialize() {
        let row: PriceRow = row?;
        let date = parse_date(&row.date)?;
        all_dates.insert(date);
        let values = [row.adj_close, row.close, row.high, row.low, row.open, row.volume];
        let entry = by_ticker.entry(row.ticker.trim().to_string()).or_default();
        if entry.insert(date, values).is_some() {
            return Err(Error::Data(format!("duplicate row for {} on {date}", row.ticker)));
        }
    }
    let dates: Vec<NaiveDate> = all_dates.into_iter().collect();

    let mut tickers = Vec::new();
    let mut sectors = Vec::new();
    let mut values = Vec::new();
    for (ticker, rows) in by_ticker {
        let Some(sector) = sector_map.get(&ticker) else {
            log::warn!("dropping {ticker}: no sector");
            continue;
        };
        if rows.len() != dates.len() {
            log::warn!("dropping {ticker}: {} of {} dates missing", dates.len() - rows.len(), dates.len());
            continue;
        }
        let valid = rows
            .values()
            .all(|v| v.iter().all(|x| matches!(x, Some(x) if x.is_finite() && *x > 0.0)));
        if !valid {
            log::warn!("dropping {ticker}: missing or non-positive values");
            continue;
        }
        for f in 0..FEATURES.len() {
            values.extend(rows.values().map(|v| v[f].unwrap_or(f64::NAN)));
        }
        tickers.push(ticker);
        sectors.push(sector.clone());
    }
    if tickers.is_empty() {
        return Err(Error::Data("no ticker survived ingestion".into()));
    }
    PanelDataset::new(tickers, dates, sectors, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeTransform {
    /// Log-differences, like the price features.
    #[default]
    LogDiff,
    /// The raw level, left to the z-scoring.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowOptions {
    pub window: usize,
    pub volume: VolumeTransform,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self {
            window: 5,
            volume: VolumeTransform::LogDiff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    /// Chronological 50/30/20 cut, rounding the first two parts down.
    pub fn chronological(n: usize) -> Self {
        let train = n / 2;
        let validation = n * 3 / 10;
        Self {
            train: 0..train,
            validation: train..train + validation,
            test: train + validation..n,
        }
    }
}

/// Windows of shape `T × S × F` (time mode most recent first), each labelled
/// with the index return of the following step.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    /// Standardized inputs and labels.
    pub samples: Samples,
    /// Transformed but unstandardized inputs and labels.
    pub raw: Samples,
    pub split: SplitRanges,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub label_mean: f64,
    pub label_std: f64,
    /// Date of the most recent step in each window.
    pub window_dates: Vec<NaiveDate>,
}

impl WindowedDataset {
    pub fn shape(&self) -> &[usize] {
        self.samples.shape()
    }

    pub fn train(&self) -> Result<Samples> {
        self.samples.range(self.split.train.clone())
    }

    pub fn validation(&self) -> Result<Samples> {
        self.samples.range(self.split.validation.clone())
    }

    pub fn test(&self) -> Result<Samples> {
        self.samples.range(self.split.test.clone())
    }

    pub fn raw_labels(&self, range: Range<usize>) -> &[f64] {
        &self.raw.labels()[range]
    }

    /// Maps standardized predictions back to raw label units.
    pub fn destandardize(&self, predictions: &[f64]) -> Vec<f64> {
        predictions.iter().map(|p| p * self.label_std + self.label_mean).collect()
    }
}

fn log_diff(series: &[f64]) -> Vec<f64> {
    series.windows(2).map(|w| w[1].ln() - w[0].ln()).collect()
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

/// `index` overrides the label series with index levels aligned to the panel
/// dates; otherwise the label is the equal-weighted mean adjusted-close
/// log-return.
pub fn build_windows(panel: &PanelDataset, options: &WindowOptions, index: Option<&[f64]>) -> Result<WindowedDataset> {
    let [s_count, f_count, t_count] = panel.shape();
    let window = options.window;
    if window == 0 {
        return Err(Error::InvalidConfig("window must be at least 1".into()));
    }
    if t_count < window + 2 {
        return Err(Error::Data(format!(
            "need more than {} dates for a window of {window}, got {t_count}",
            window + 1
        )));
    }
    let steps = t_count - 1;

    // step-major transformed features: [step][ticker][feature]
    let mut transformed = vec![0.0; steps * s_count * f_count];
    for s in 0..s_count {
        for f in 0..f_count {
            let series = panel.series(s, f);
            let values = if f == VOLUME && options.volume == VolumeTransform::Raw {
                series[1..].to_vec()
            } else {
                log_diff(series)
            };
            for (t, v) in values.into_iter().enumerate() {
                transformed[(t * s_count + s) * f_count + f] = v;
            }
        }
    }

    let label_series: Vec<f64> = match index {
        Some(levels) => {
            if levels.len() != t_count {
                return Err(Error::LengthMismatch {
                    expected: t_count,
                    found: levels.len(),
                });
            }
            if levels.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Data("index levels must be positive".into()));
            }
            log_diff(levels)
        }
        None => (0..steps)
            .map(|t| (0..s_count).map(|s| transformed[(t * s_count + s) * f_count + ADJ_CLOSE]).sum::<f64>() / s_count as f64)
            .collect(),
    };

    let count = steps - window;
    let per_step = s_count * f_count;
    let mut raw_inputs = Vec::with_capacity(count * window * per_step);
    let mut raw_labels = Vec::with_capacity(count);
    let mut window_dates = Vec::with_capacity(count);
    for t in window - 1..steps - 1 {
        for lag in 0..window {
            let step = t - lag;
            raw_inputs.extend_from_slice(&transformed[step * per_step..(step + 1) * per_step]);
        }
        raw_labels.push(label_series[t + 1]);
        window_dates.push(panel.dates[t + 1]);
    }
    let shape = vec![window, s_count, f_count];
    let raw = Samples::from_flat(shape.clone(), raw_inputs, raw_labels)?;
    let split = SplitRanges::chronological(count);
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Data(format!("{count} windows are too few to split")));
    }

    let train_inputs = || (split.train.clone()).flat_map(|m| raw.input(m).chunks_exact(f_count));
    let (feature_mean, feature_std): (Vec<f64>, Vec<f64>) = (0..f_count)
        .map(|f| mean_std(train_inputs().map(move |row| row[f])))
        .unzip();
    let (label_mean, label_std) = mean_std(raw.labels()[split.train.clone()].iter().copied());

    let inputs: Vec<f64> = (0..count)
        .flat_map(|m| raw.input(m).to_vec())
        .enumerate()
        .map(|(i, v)| {
            let f = i % f_count;
            (v - feature_mean[f]) / feature_std[f]
        })
        .collect();
    let labels = raw.labels().iter().map(|y| (y - label_mean) / label_std).collect();
    Ok(WindowedDataset {
        samples: Samples::from_flat(shape, inputs, labels)?,
        raw,
        split,
        feature_mean,
        feature_std,
        label_mean,
        label_std,
        window_dates,
    })
}
