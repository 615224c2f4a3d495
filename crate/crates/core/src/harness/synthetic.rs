//! Planted low-rank regression problems with kernel graphs built from the
//! ground-truth factors.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cpd::CpdFactors;
use crate::error::{Error, Result};
use crate::graph::{kernel_adjacency_of_rows, GraphSpec};
use crate::model::Samples;
use crate::tensor::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub order: usize,
    pub mode_size: usize,
    pub true_rank: usize,
    pub samples: usize,
    /// Target ratio of noise to label standard deviation, `σ_η / σ_y`.
    pub noise_ratio: f64,
    /// Kernel width for the per-mode graphs.
    pub beta: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            order: 4,
            mode_size: 10,
            true_rank: 5,
            samples: 125,
            noise_ratio: 0.5,
            beta: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn shape(&self) -> Vec<usize> {
        vec![self.mode_size; self.order]
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.mode_size == 0 || self.true_rank == 0 || self.samples == 0 {
            return Err(Error::InvalidConfig(
                "order, mode size, rank and sample count must be positive".into(),
            ));
        }
        if !(self.noise_ratio >= 0.0 && self.noise_ratio.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise ratio must be nonnegative, got {}",
                self.noise_ratio
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub truth: CpdFactors,
    pub samples: Samples,
    /// Kernel graph over the rows of each ground-truth factor.
    pub graphs: Vec<GraphSpec>,
    /// Standard deviation of the noiseless labels.
    pub signal_std: f64,
    /// Empirical standard deviation of the noise actually added.
    pub noise_std: f64,
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Draws uniform `[0, 1)` ground-truth factors, standard-normal inputs and
/// labels `⟨W, X⟩ + η` with `η ~ N(0, (ratio · σ_y)²)`, `σ_y` being the
/// empirical standard deviation of the noiseless labels.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shape = spec.shape();
    let factors = shape
        .iter()
        .map(|&rows| {
            let values: Vec<f64> = (0..rows * spec.true_rank).map(|_| rng.random::<f64>()).collect();
            DMatrix::from_row_slice(rows, spec.true_rank, &values)
        })
        .collect();
    let truth = CpdFactors::new(factors)?;
    let weights = truth.reconstruct();

    let features = weights.len();
    let inputs: Vec<f64> = (0..features * spec.samples)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let clean: Vec<f64> = inputs
        .chunks_exact(features)
        .map(|x| dot(weights.data(), x))
        .collect();
    let signal_std = std_dev(&clean);
    let noise_scale = spec.noise_ratio * signal_std;
    let noise: Vec<f64> = if noise_scale > 0.0 {
        let dist = Normal::new(0.0, noise_scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        (0..spec.samples).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![0.0; spec.samples]
    };
    let labels = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
    let samples = Samples::from_flat(shape, inputs, labels)?;

    let graphs = truth
        .factors()
        .iter()
        .map(|f| GraphSpec::from_adjacency(&kernel_adjacency_of_rows(f, spec.beta)?))
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticData {
        truth,
        samples,
        graphs,
        signal_std,
        noise_std: std_dev(&noise),
    })
}

/// Seeded shuffle followed by an 80/20 train/test cut.
pub fn split_synthetic(samples: &Samples, seed: u64) -> Result<(Samples, Samples)> {
    let m = samples.len();
    if m < 5 {
        return Err(Error::Data(format!("need at least 5 samples to split, got {m}")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = (m as f64 * 0.8).round() as usize;
    Ok((samples.subset(&order[..train])?, samples.subset(&order[train..])?))
}
