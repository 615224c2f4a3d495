//! Dense N-way tensors and the multilinear operations built on them.
//!
//! Storage is row-major (last index fastest). Mode-n matricization orders
//! its columns with the lower non-n modes varying fastest, which is the
//! ordering under which `W_(n) = U^(n) (U^(N) ⊙ … ⊙ U^(1))^T` holds for a
//! CPD-format tensor.
//!
//! Modes are 0-based in code; error messages report them 1-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Result of a tensor-by-vector contraction. Contracting an order-1 tensor
/// leaves a plain scalar rather than an order-0 tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Contracted {
    Tensor(DenseTensor),
    Scalar(f64),
}

impl Contracted {
    pub fn order(&self) -> usize {
        match self {
            Contracted::Tensor(t) => t.order(),
            Contracted::Scalar(_) => 0,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Contracted::Scalar(s) => Some(*s),
            Contracted::Tensor(_) => None,
        }
    }

    pub fn into_tensor(self) -> Option<DenseTensor> {
        match self {
            Contracted::Tensor(t) => Some(t),
            Contracted::Scalar(_) => None,
        }
    }

    /// Entries as a flat slice (one entry for a scalar).
    pub fn values(&self) -> &[f64] {
        match self {
            Contracted::Tensor(t) => t.data(),
            Contracted::Scalar(s) => std::slice::from_ref(s),
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(())
}

fn check_mode(mode: usize, order: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::ModeOutOfRange {
            mode: mode + 1,
            order,
        });
    }
    Ok(())
}

/// Advance a row-major multi-index by one position. Returns false on wrap.
fn increment(index: &mut [usize], shape: &[usize]) -> bool {
    for k in (0..shape.len()).rev() {
        index[k] += 1;
        if index[k] < shape[k] {
            return true;
        }
        index[k] = 0;
    }
    false
}

/// Column strides of the mode-`mode` unfolding: lower modes vary fastest.
fn unfolding_strides(shape: &[usize], mode: usize) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for (k, &dim) in shape.iter().enumerate() {
        if k == mode {
            continue;
        }
        strides[k] = acc;
        acc *= dim;
    }
    strides
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_shape(shape)?;
        let len = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut index = vec![0; shape.len()];
        loop {
            data.push(f(&index));
            if !increment(&mut index, shape) {
                break;
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat row-major offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.order() || index.iter().zip(&self.shape).any(|(i, d)| i >= d) {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                shape: self.shape.clone(),
            });
        }
        Ok(index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i))
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Row-major vectorization; the inverse of [`DenseTensor::new`] with the same shape.
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Mode-`mode` unfolding into an `I_n × ∏_{k≠n} I_k` matrix.
    pub fn matricize(&self, mode: usize) -> Result<DMatrix<f64>> {
        check_mode(mode, self.order())?;
        let rows = self.shape[mode];
        let cols = self.len() / rows;
        let strides = unfolding_strides(&self.shape, mode);
        let mut out = DMatrix::zeros(rows, cols);
        let mut index = vec![0; self.order()];
        for &value in &self.data {
            let col: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
            out[(index[mode], col)] = value;
            increment(&mut index, &self.shape);
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::matricize`].
    pub fn fold(matrix: &DMatrix<f64>, mode: usize, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        check_mode(mode, shape.len())?;
        let total: usize = shape.iter().product();
        let rows = shape[mode];
        if matrix.nrows() != rows || matrix.ncols() * rows != total {
            return Err(Error::ShapeMismatch {
                expected: vec![rows, total / rows],
                found: vec![matrix.nrows(), matrix.ncols()],
            });
        }
        let strides = unfolding_strides(shape, mode);
        let mut data = Vec::with_capacity(total);
        let mut index = vec![0; shape.len()];
        for _ in 0..total {
            let col: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
            data.push(matrix[(index[mode], col)]);
            increment(&mut index, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Tensor-by-vector product along `mode`, removing that mode.
    pub fn contract_vector(&self, mode: usize, v: &[f64]) -> Result<Contracted> {
        check_mode(mode, self.order())?;
        let dim = self.shape[mode];
        if v.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        let outer: usize = self.shape[..mode].iter().product();
        let inner: usize = self.shape[mode + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for (j, &vj) in v.iter().enumerate() {
                let base = (o * dim + j) * inner;
                let src = &self.data[base..base + inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += vj * s;
                }
            }
        }
        if self.order() == 1 {
            return Ok(Contracted::Scalar(out[0]));
        }
        let mut shape = self.shape.clone();
        shape.remove(mode);
        Ok(Contracted::Tensor(Self { shape, data: out }))
    }
}

/// Outer product of two vectors, `c_ij = a_i b_j`.
pub fn outer(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

/// N-ary outer product `v1 ∘ v2 ∘ … ∘ vN`.
pub fn outer_n(vectors: &[&[f64]]) -> Result<DenseTensor> {
    let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    check_shape(&shape)?;
    let mut data = vec![1.0];
    for v in vectors {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &d in &data {
            next.extend(v.iter().map(|x| d * x));
        }
        data = next;
    }
    Ok(DenseTensor { shape, data })
}

/// Kronecker product: `c[(i·K + k), (j·L + l)] = a[i, j] · b[k, l]` (0-based).
pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, l) = b.shape();
    DMatrix::from_fn(a.nrows() * k, a.ncols() * l, |row, col| {
        a[(row / k, col / l)] * b[(row % k, col % l)]
    })
}

/// Column-wise Kronecker product of two matrices with equal column counts.
pub fn khatri_rao(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch {
            expected: vec![b.nrows(), a.ncols()],
            found: vec![b.nrows(), b.ncols()],
        });
    }
    let rows_b = b.nrows();
    Ok(DMatrix::from_fn(a.nrows() * rows_b, a.ncols(), |row, r| {
        a[(row / rows_b, r)] * b[(row % rows_b, r)]
    }))
}

/// Tensor inner product `⟨a, b⟩`.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            expected: a.shape.clone(),
            found: b.shape.clone(),
        });
    }
    Ok(dot(&a.data, &b.data))
}

/// Dot product with independent partial sums so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
