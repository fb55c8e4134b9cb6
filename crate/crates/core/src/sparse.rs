//! Thin wrapper over `faer`'s sparse LU for the banded systems that appear in
//! the boundary-value, eigenvector-refinement and evolution solvers.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self { n, entries: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.entries.push(Triplet::new(row, col, val));
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored `(row, col, value)` entries, duplicates not yet summed.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|t| (t.row, t.col, t.val))
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.entries {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    pub fn factor(&self) -> Result<SparseLu> {
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| Error::Eigensolver(format!("sparse assembly: {e:?}")))?;
        let lu = mat.sp_lu().map_err(|_| Error::Singular("sparse LU"))?;
        Ok(SparseLu { n: self.n, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.factor()?.solve(rhs)
    }
}

/// A factorised sparse matrix.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

impl SparseLu {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(m.as_mut());
        let out: Vec<f64> = (0..self.n).map(|i| m[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Singular("sparse LU solve"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve() {
        let n = 50;
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.push(i, i, 4.0);
            if i > 0 {
                b.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let rhs = b.apply(&x);
        let got = b.solve(&rhs).unwrap();
        for (a, e) in got.iter().zip(&x) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
