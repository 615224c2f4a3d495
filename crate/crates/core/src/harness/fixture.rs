//! Deterministic synthetic market data with a planted, sector-smooth
//! rank-1 predictive structure.
//!
//! Every ticker's adjusted-close log-return is a common market return plus
//! an idiosyncratic part; the idiosyncratic parts are demeaned across
//! tickers, so the equal-weighted index return is exactly the market
//! return. The next market return is `⟨W, Z_t⟩ + noise` where `Z_t` is the
//! window of idiosyncratic feature returns (most recent first, in units of
//! their scale) and `W = a ∘ b ∘ c` is rank 1 with a stock factor `b` that
//! is constant within each sector and sums to zero. Since `b` sums to
//! zero, the common market component drops out of `⟨W, ·⟩`, so the planted
//! relation also holds on the windows built from observed returns.

use std::fmt::Write as _;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cpd::CpdFactors;
use crate::error::{Error, Result};

const SECTOR_NAMES: [&str; 8] = [
    "Energy",
    "Financials",
    "Health Care",
    "Technology",
    "Utilities",
    "Materials",
    "Industrials",
    "Real Estate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub tickers: usize,
    pub sectors: usize,
    pub dates: usize,
    pub window: usize,
    pub seed: u64,
    /// Daily scale of idiosyncratic returns.
    pub return_scale: f64,
    /// Standard deviation of the planted signal in the market return.
    pub signal_scale: f64,
    /// Standard deviation of the unpredictable part of the market return.
    pub noise_scale: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            tickers: 20,
            sectors: 4,
            dates: 500,
            window: 5,
            seed: 0,
            return_scale: 0.01,
            signal_scale: 0.006,
            noise_scale: 0.004,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub prices_csv: String,
    pub sectors_csv: String,
    /// Planted weights in units of idiosyncratic-return scale, shape `T × S × F`.
    pub planted: CpdFactors,
}

fn business_days(count: usize) -> Vec<NaiveDate> {
    let mut day = NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid start date");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day + Days::new(1);
    }
    out
}

/// Prices and sectors CSVs of the default fixture, as shipped in
/// `tests/data` (regenerate with `cargo run --example write_fixture`).
pub fn bundled_fixture() -> (&'static str, &'static str) {
    (
        include_str!("../../tests/data/fixture_prices.csv"),
        include_str!("../../tests/data/fixture_sectors.csv"),
    )
}

pub fn ticker_name(i: usize) -> String {
    format!("T{i:02}")
}

pub fn generate_financial_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    let (s_count, sectors) = (spec.tickers, spec.sectors);
    if sectors == 0 || sectors > SECTOR_NAMES.len() || s_count == 0 || s_count % sectors != 0 {
        return Err(Error::InvalidConfig(format!(
            "{s_count} tickers cannot be split evenly into {sectors} sectors (at most {})",
            SECTOR_NAMES.len()
        )));
    }
    if spec.window == 0 || spec.dates < spec.window + 2 {
        return Err(Error::InvalidConfig("fixture needs more dates than the window".into()));
    }
    let per_sector = s_count / sectors;
    let sector_of = |s: usize| s / per_sector;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = move || rng.sample::<f64, _>(StandardNormal);

    // planted factors
    let time: Vec<f64> = (0..spec.window).map(|k| 0.5f64.powi(k as i32)).collect();
    let levels: Vec<f64> = (0..sectors)
        .map(|g| if sectors == 1 { 0.0 } else { 1.0 - 2.0 * g as f64 / (sectors - 1) as f64 })
        .collect();
    let stock: Vec<f64> = (0..s_count).map(|s| levels[sector_of(s)]).collect();
    let feature = [1.0, 0.0, 0.0, 0.0, 0.0, 0.5];
    let planted = CpdFactors::new(vec![
        DMatrix::from_column_slice(spec.window, 1, &time),
        DMatrix::from_column_slice(s_count, 1, &stock),
        DMatrix::from_column_slice(6, 1, &feature),
    ])?;
    let energy: f64 = time.iter().map(|a| a * a).sum::<f64>()
        * stock.iter().map(|b| b * b).sum::<f64>()
        * feature.iter().map(|c| c * c).sum::<f64>();
    let gain = if energy > 0.0 { spec.signal_scale / energy.sqrt() } else { 0.0 };

    let steps = spec.dates - 1;
    // idiosyncratic adjusted-close and volume returns, unit scale, demeaned across tickers
    let mut idio = vec![[0.0f64; 2]; steps * s_count];
    for t in 0..steps {
        let row = &mut idio[t * s_count..(t + 1) * s_count];
        for v in row.iter_mut() {
            *v = [normal(), normal()];
        }
        for k in 0..2 {
            let mean = row.iter().map(|v| v[k]).sum::<f64>() / s_count as f64;
            row.iter_mut().for_each(|v| v[k] -= mean);
        }
    }
    let mut market = vec![0.0; steps];
    for t in 0..steps {
        let mut signal = 0.0;
        if t >= spec.window {
            for (lag, a) in time.iter().enumerate() {
                let z = &idio[(t - 1 - lag) * s_count..(t - lag) * s_count];
                for (b, v) in stock.iter().zip(z) {
                    signal += a * b * (feature[0] * v[0] + feature[5] * v[1]);
                }
            }
        }
        market[t] = gain * signal + spec.noise_scale * normal();
    }

    let dates = business_days(spec.dates);
    let mut sectors_csv = String::from("ticker,sector\n");
    for s in 0..s_count {
        writeln!(sectors_csv, "{},{}", ticker_name(s), SECTOR_NAMES[sector_of(s)]).expect("write to string");
    }

    let mut paths = Vec::with_capacity(s_count);
    for s in 0..s_count {
        let mut log_close = (50.0 + 10.0 * s as f64).ln();
        let mut log_volume = (1e6 * (1.0 + 0.1 * s as f64)).ln();
        let adjust = 1.0 - 0.002 * (s % 5) as f64;
        let mut rows = Vec::with_capacity(spec.dates);
        let mut prev_close = log_close.exp();
        for t in 0..spec.dates {
            if t > 0 {
                let v = idio[(t - 1) * s_count + s];
                log_close += market[t - 1] + spec.return_scale * v[0];
                log_volume += 0.2 * v[1];
            }
            let close = log_close.exp();
            let open = prev_close * (0.003 * normal()).exp();
            let high = open.max(close) * (0.004 * normal()).abs().exp();
            let low = open.min(close) * (-(0.004 * normal()).abs()).exp();
            rows.push([close * adjust, close, high, low, open, log_volume.exp().round()]);
            prev_close = close;
        }
        paths.push(rows);
    }

    let mut prices_csv = String::from("date,ticker,adj_close,close,high,low,open,volume\n");
    for (t, date) in dates.iter().enumerate() {
        for (s, rows) in paths.iter().enumerate() {
            let [adj, close, high, low, open, volume] = rows[t];
            writeln!(
                prices_csv,
                "{date},{},{adj:.6},{close:.6},{high:.6},{low:.6},{open:.6},{volume:.0}",
                ticker_name(s)
            )
            .expect("write to string");
        }
    }
    Ok(Fixture {
        prices_csv,
        sectors_csv,
        planted,
    })
}
