//! The lattice on `]0,1[^k`: cells, interior nodes, and the rounding map.
//!
//! Two index sets are used throughout. Cells `D_j`, `j in {0..n-1}^k`, carry
//! noise increments and source values. Interior nodes `j/n`, `j in {1..n-1}^k`,
//! carry the unknowns of the lattice scheme. Cell `j` has its lower-left corner
//! at node `j/n`, so the interior node `i` owns cell `i`; cells touching the
//! lower faces have no interior node and never enter the schemes.
//!
//! Flat storage is row-major with axis 0 slowest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    k: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("dimension k must be >= 1".into()));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!("resolution n = {n} must be >= 2")));
        }
        let grid = GridSpec { k, n };
        grid.num_cells()
            .checked_mul(8)
            .ok_or_else(|| Error::InvalidParameter(format!("grid n = {n}, k = {k} too large")))?;
        Ok(grid)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh width `1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `n^k`.
    pub fn num_cells(&self) -> usize {
        self.n.pow(self.k as u32)
    }

    /// `(n-1)^k`.
    pub fn num_interior(&self) -> usize {
        (self.n - 1).pow(self.k as u32)
    }

    /// Cell volume `n^{-k}`.
    pub fn cell_volume(&self) -> f64 {
        (self.n as f64).powi(-(self.k as i32))
    }

    /// Multi-index of a flat cell index.
    pub fn cell_multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.k];
        for d in (0..self.k).rev() {
            idx[d] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn cell_flat(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &j| acc * self.n + j)
    }

    /// Multi-index (entries in `1..n`) of a flat interior index.
    pub fn interior_multi(&self, mut flat: usize) -> Vec<usize> {
        let m = self.n - 1;
        let mut idx = vec![0; self.k];
        for d in (0..self.k).rev() {
            idx[d] = flat % m + 1;
            flat /= m;
        }
        idx
    }

    pub fn interior_flat(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &j| acc * (self.n - 1) + (j - 1))
    }

    /// Cell index of the cell owned by an interior node.
    pub fn interior_to_cell(&self, interior_flat: usize) -> usize {
        self.cell_flat(&self.interior_multi(interior_flat))
    }

    /// Interior node owning a cell, or `None` for cells on a lower face.
    pub fn cell_to_interior(&self, cell_flat: usize) -> Option<usize> {
        let multi = self.cell_multi(cell_flat);
        if multi.contains(&0) {
            None
        } else {
            Some(self.interior_flat(&multi))
        }
    }

    /// Index `j` of the cell containing `x`, i.e. `kappa_n(x) = j/n`.
    /// Coordinates are clamped into `[0, 1)`.
    pub fn locate(&self, x: &[f64]) -> Vec<usize> {
        x.iter()
            .map(|&xi| {
                let j = (xi * self.n as f64).floor();
                if j < 0.0 {
                    0
                } else {
                    (j as usize).min(self.n - 1)
                }
            })
            .collect()
    }

    /// The rounding map `kappa_n(x)`.
    pub fn kappa(&self, x: &[f64]) -> Vec<f64> {
        self.locate(x).into_iter().map(|j| j as f64 / self.n as f64).collect()
    }

    /// `[a, b)` of the cell interval along one axis.
    pub fn cell_interval(&self, j: usize) -> (f64, f64) {
        let h = self.h();
        (j as f64 * h, (j + 1) as f64 * h)
    }

    /// Coordinates `i/n` of an interior node.
    pub fn node_point(&self, interior_flat: usize) -> Vec<f64> {
        self.interior_multi(interior_flat).into_iter().map(|i| i as f64 / self.n as f64).collect()
    }

    /// Checks that `self` refines `coarse` by an integer factor.
    pub fn refinement_factor(&self, coarse: &GridSpec) -> Result<usize> {
        if self.k != coarse.k {
            return Err(Error::GridMismatch(format!("dimensions differ: {} vs {}", self.k, coarse.k)));
        }
        if !self.n.is_multiple_of(coarse.n) {
            return Err(Error::NonDivisibleResolution { fine: self.n, coarse: coarse.n });
        }
        Ok(self.n / coarse.n)
    }
}

/// Applies a square matrix along one axis of a tensor with `m` entries per axis.
///
/// `out[.., i, ..] = sum_j matrix[i * m + j] * data[.., j, ..]`. With `lower`
/// set the matrix is taken as lower triangular and the upper part is skipped.
pub fn apply_along_axis(data: &[f64], m: usize, k: usize, axis: usize, matrix: &[f64], lower: bool) -> Vec<f64> {
    debug_assert_eq!(data.len(), m.pow(k as u32));
    debug_assert_eq!(matrix.len(), m * m);
    let inner = m.pow((k - axis - 1) as u32);
    let outer = m.pow(axis as u32);
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        let base = o * m * inner;
        for i in 0..m {
            let dst = &mut out[base + i * inner..base + (i + 1) * inner];
            let jmax = if lower { i + 1 } else { m };
            for j in 0..jmax {
                let a = matrix[i * m + j];
                if a == 0.0 {
                    continue;
                }
                let src = &data[base + j * inner..base + (j + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }
    out
}

/// Applies one matrix per axis, axes in order `0, 1, ..., k-1`.
pub fn apply_kronecker(data: &[f64], m: usize, k: usize, matrices: &[&[f64]], lower: bool) -> Vec<f64> {
    let mut cur = data.to_vec();
    for (axis, mat) in matrices.iter().enumerate().take(k) {
        cur = apply_along_axis(&cur, m, k, axis, mat, lower);
    }
    cur
}
