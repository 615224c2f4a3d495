//! Rank-R canonical polyadic (CPD) representation of an order-N tensor.
//!
//! `W = Σ_r u_r^(1) ∘ u_r^(2) ∘ … ∘ u_r^(N)`, with the vectors `u_r^(n)`
//! stacked as the columns of the factor matrices `U^(n)` (`I_n × R`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{khatri_rao, DenseTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct CpdFactors {
    factors: Vec<DMatrix<f64>>,
}

impl CpdFactors {
    pub fn new(factors: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = factors.first() else {
            return Err(Error::InvalidShape(Vec::new()));
        };
        let rank = first.ncols();
        let shape: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
        if rank == 0 || shape.contains(&0) {
            return Err(Error::InvalidShape(shape));
        }
        if let Some(bad) = factors.iter().find(|f| f.ncols() != rank) {
            return Err(Error::ShapeMismatch {
                expected: vec![bad.nrows(), rank],
                found: vec![bad.nrows(), bad.ncols()],
            });
        }
        Ok(Self { factors })
    }

    pub fn zeros(shape: &[usize], rank: usize) -> Result<Self> {
        Self::new(shape.iter().map(|&d| DMatrix::zeros(d, rank)).collect())
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> Result<&DMatrix<f64>> {
        self.check_mode(mode)?;
        Ok(&self.factors[mode])
    }

    /// Mutable access to one factor matrix. Its dimensions must be kept.
    pub(crate) fn factor_mut(&mut self, mode: usize) -> &mut DMatrix<f64> {
        &mut self.factors[mode]
    }

    /// Number of trainable factor entries, `R · Σ_n I_n`.
    pub fn parameter_count(&self) -> usize {
        self.rank() * self.shape().iter().sum::<usize>()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode: mode + 1,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Dense weight tensor as the sum of R rank-1 outer products.
    pub fn reconstruct(&self) -> DenseTensor {
        let shape = self.shape();
        let total: usize = shape.iter().product();
        let mut acc = vec![0.0; total];
        let mut term = Vec::with_capacity(total);
        let mut next = Vec::with_capacity(total);
        for r in 0..self.rank() {
            term.clear();
            term.push(1.0);
            for factor in &self.factors {
                let column = factor.column(r);
                next.clear();
                for &t in &term {
                    next.extend(column.iter().map(|u| t * u));
                }
                std::mem::swap(&mut term, &mut next);
            }
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += t;
            }
        }
        DenseTensor::new(shape, acc).expect("factor shapes are validated on construction")
    }

    /// `U^(-n) = U^(N) ⊙ … ⊙ U^(n+1) ⊙ U^(n-1) ⊙ … ⊙ U^(1)`, folded left in
    /// descending mode order. For a single-mode CPD this is a `1 × R` row of ones.
    pub fn khatri_rao_complement(&self, mode: usize) -> Result<DMatrix<f64>> {
        self.check_mode(mode)?;
        let mut chain: Option<DMatrix<f64>> = None;
        for k in (0..self.order()).rev().filter(|&k| k != mode) {
            chain = Some(match chain {
                None => self.factors[k].clone(),
                Some(acc) => khatri_rao(&acc, &self.factors[k])?,
            });
        }
        Ok(chain.unwrap_or_else(|| DMatrix::from_element(1, self.rank(), 1.0)))
    }

    /// Mode-n unfolding of the represented tensor, `U^(n) U^(-n)^T`.
    pub fn matricized(&self, mode: usize) -> Result<DMatrix<f64>> {
        let complement = self.khatri_rao_complement(mode)?;
        Ok(&self.factors[mode] * complement.transpose())
    }

    /// Row-major vectorization of the represented tensor, computed as
    /// `(U^(1) ⊙ U^(2) ⊙ … ⊙ U^(N)) 1`. Ascending order puts the last mode
    /// fastest, matching [`DenseTensor::vectorize`].
    pub fn vectorize(&self) -> Vec<f64> {
        let mut chain = self.factors[0].clone();
        for factor in &self.factors[1..] {
            chain = khatri_rao(&chain, factor).expect("factor ranks are validated on construction");
        }
        chain.column_sum().as_slice().to_vec()
    }

    /// Single weight `w_{i1..iN} = Σ_r ∏_n U^(n)[i_n, r]` without reconstructing.
    pub fn coefficient_at(&self, index: &[usize]) -> Result<f64> {
        let shape = self.shape();
        if index.len() != shape.len() || index.iter().zip(&shape).any(|(i, d)| i >= d) {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                shape,
            });
        }
        Ok((0..self.rank())
            .map(|r| {
                self.factors
                    .iter()
                    .zip(index)
                    .map(|(f, &i)| f[(i, r)])
                    .product::<f64>()
            })
            .sum())
    }
}

/// On-disk form of a trained CPD model: factor matrices flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdDocument {
    pub rank: usize,
    pub shapes: Vec<usize>,
    pub factors: Vec<Vec<f64>>,
    pub bias: f64,
}

impl CpdDocument {
    pub fn from_factors(factors: &CpdFactors, bias: f64) -> Self {
        Self {
            rank: factors.rank(),
            shapes: factors.shape(),
            factors: factors
                .factors()
                .iter()
                .map(|f| f.transpose().as_slice().to_vec())
                .collect(),
            bias,
        }
    }

    pub fn to_factors(&self) -> Result<(CpdFactors, f64)> {
        if self.factors.len() != self.shapes.len() {
            return Err(Error::LengthMismatch {
                expected: self.shapes.len(),
                found: self.factors.len(),
            });
        }
        let matrices = self
            .shapes
            .iter()
            .zip(&self.factors)
            .map(|(&rows, values)| {
                if values.len() != rows * self.rank {
                    return Err(Error::LengthMismatch {
                        expected: rows * self.rank,
                        found: values.len(),
                    });
                }
                Ok(DMatrix::from_row_slice(rows, self.rank, values))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((CpdFactors::new(matrices)?, self.bias))
    }
}
