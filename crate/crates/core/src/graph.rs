//! Undirected weighted graphs over the entries of one tensor mode, their
//! Laplacians `L = D - A`, and graph-signal smoothness `tr(U^T L U)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    adjacency: DMatrix<f64>,
    degree: DVector<f64>,
    laplacian: DMatrix<f64>,
}

impl GraphSpec {
    /// Validates `adjacency`, zeroes its diagonal and derives degree and
    /// Laplacian. Asymmetry up to 1e-9 is absorbed by symmetrizing.
    pub fn from_adjacency(adjacency: &DMatrix<f64>) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::InvalidGraph(format!(
                "adjacency must be square, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        let size = adjacency.nrows();
        if size == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        for i in 0..size {
            for j in 0..size {
                let a = adjacency[(i, j)];
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency entry ({}, {}) = {a} is not a nonnegative number",
                        i + 1,
                        j + 1
                    )));
                }
                if (a - adjacency[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let mut adjacency = (adjacency + adjacency.transpose()) * 0.5;
        adjacency.fill_diagonal(0.0);
        let degree = DVector::from_iterator(size, adjacency.row_iter().map(|row| row.sum()));
        let laplacian = DMatrix::from_diagonal(&degree) - &adjacency;
        Ok(Self {
            adjacency,
            degree,
            laplacian,
        })
    }

    pub fn size(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// Vertex degrees, the diagonal of `D`.
    pub fn degrees(&self) -> &DVector<f64> {
        &self.degree
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degree)
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn smoothness(&self, signals: &DMatrix<f64>) -> Result<f64> {
        smoothness(signals, &self.laplacian)
    }
}

/// Total smoothness `tr(U^T L U)` of the columns of `signals` on a graph.
pub fn smoothness(signals: &DMatrix<f64>, laplacian: &DMatrix<f64>) -> Result<f64> {
    if signals.nrows() != laplacian.nrows() || !laplacian.is_square() {
        return Err(Error::ShapeMismatch {
            expected: vec![laplacian.nrows(), signals.ncols()],
            found: vec![signals.nrows(), signals.ncols()],
        });
    }
    Ok((signals.transpose() * laplacian * signals).trace())
}

/// Exponential distance kernel: `a_ij = exp(-beta ‖r_i - r_j‖₂)`
/// over the given row vectors, with a zero diagonal.
pub fn kernel_adjacency(rows: &[Vec<f64>], beta: f64) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidGraph("kernel graph needs at least one row".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidConfig(format!("kernel beta must be positive, got {beta}")));
    }
    let width = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::LengthMismatch {
            expected: width,
            found: bad.len(),
        });
    }
    let size = rows.len();
    let mut a = DMatrix::zeros(size, size);
    for i in 0..size {
        for j in i + 1..size {
            let dist = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let w = (-beta * dist).exp();
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    Ok(a)
}

/// Kernel graph over the rows of a matrix (e.g. a factor matrix).
pub fn kernel_adjacency_of_rows(matrix: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = matrix
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    kernel_adjacency(&rows, beta)
}

/// Unit-weight graph joining every pair of distinct vertices with equal labels.
pub fn sector_adjacency<S: PartialEq>(labels: &[S]) -> DMatrix<f64> {
    let n = labels.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i != j && labels[i] == labels[j] {
            1.0
        } else {
            0.0
        }
    })
}

/// Writes a matrix as CSV, one row per line.
pub fn write_matrix_csv<W: Write>(matrix: &DMatrix<f64>, mut out: W) -> Result<()> {
    for row in matrix.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge() -> GraphSpec {
        GraphSpec::from_adjacency(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap()
    }

    #[test]
    fn empty_graph_has_zero_laplacian() {
        let g = GraphSpec::from_adjacency(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(g.laplacian(), &DMatrix::zeros(3, 3));
        assert_eq!(g.size(), 3);
    }

    #[test]
    fn single_edge_laplacian() {
        let g = edge();
        assert_eq!(g.laplacian(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(g.degree_matrix(), DMatrix::identity(2, 2));
    }

    #[test]
    fn diagonal_is_dropped() {
        let g = GraphSpec::from_adjacency(&DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 1.0, 2.0])).unwrap();
        assert_eq!(g.adjacency()[(0, 0)], 0.0);
        assert_eq!(g.degrees().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn rejects_invalid_adjacency() {
        assert!(GraphSpec::from_adjacency(&DMatrix::zeros(2, 3)).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(GraphSpec::from_adjacency(&asym), Err(Error::InvalidGraph(_))));
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(matches!(GraphSpec::from_adjacency(&neg), Err(Error::InvalidGraph(_))));
        let near = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0 + 1e-12, 0.0]);
        let g = GraphSpec::from_adjacency(&near).unwrap();
        assert_eq!(g.adjacency(), &g.adjacency().transpose());
    }

    #[test]
    fn smoothness_examples() {
        let g = edge();
        let ones = DMatrix::from_element(2, 3, 1.0);
        assert_eq!(g.smoothness(&ones).unwrap(), 0.0);
        // u^T L u for u = [1, -1]: [1,-1]·[2,-2] = 4
        let u = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        assert_eq!(g.smoothness(&u).unwrap(), 4.0);
        assert!(g.smoothness(&DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn kernel_adjacency_examples() {
        let same = kernel_adjacency(&[vec![1.0, 2.0], vec![1.0, 2.0]], 1.0).unwrap();
        assert_eq!(same[(0, 1)], 1.0);
        assert_eq!(same[(0, 0)], 0.0);
        let far = kernel_adjacency(&[vec![0.0], vec![20.0]], 1.0).unwrap();
        assert!(far[(0, 1)] < 1e-8);
        let a = kernel_adjacency(&[vec![0.0, 0.0], vec![3.0, 4.0]], 1.0).unwrap();
        assert!((a[(0, 1)] - (-5.0f64).exp()).abs() < 1e-15);
        assert!(kernel_adjacency(&[], 1.0).is_err());
        assert!(kernel_adjacency(&[vec![0.0], vec![1.0, 2.0]], 1.0).is_err());
        assert!(kernel_adjacency(&[vec![0.0]], 0.0).is_err());
    }

    #[test]
    fn sector_adjacency_examples() {
        assert_eq!(sector_adjacency(&["a", "b", "c"]), DMatrix::zeros(3, 3));
        let k3 = sector_adjacency(&["x", "x", "x"]);
        assert_eq!(k3, DMatrix::from_element(3, 3, 1.0) - DMatrix::identity(3, 3));
        let blocks = sector_adjacency(&["A", "A", "B", "B", "B"]);
        for i in 0..5 {
            for j in 0..5 {
                let same_block = (i < 2) == (j < 2);
                let expected = if i != j && same_block { 1.0 } else { 0.0 };
                assert_eq!(blocks[(i, j)], expected, "({i},{j})");
            }
        }
    }

    #[test]
    fn sector_constant_signal_is_perfectly_smooth() {
        let labels = ["A", "A", "B", "B", "B"];
        let g = GraphSpec::from_adjacency(&sector_adjacency(&labels)).unwrap();
        let signal = DMatrix::from_column_slice(5, 1, &[2.0, 2.0, -0.3, -0.3, -0.3]);
        assert_eq!(g.smoothness(&signal).unwrap(), 0.0);
    }

    #[test]
    fn matrix_csv_export() {
        let mut buf = Vec::new();
        write_matrix_csv(edge().laplacian(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,-1\n-1,1\n");
    }
}
