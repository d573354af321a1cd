//! The five-point (in general `2k+1`-point) difference Laplacian on the
//! interior nodes, its sine eigensystem, and spectral solves.
//!
//! With `v_beta(x) = prod_d sin(beta_d pi x_d)` and `(U_beta)_i = v_beta(i/n)`,
//! the vectors `(2/n)^{k/2} U_beta`, `beta in {1..n-1}^k`, are an orthonormal
//! eigenbasis of `A` with eigenvalues
//! `lambda_beta = -pi^2 sum_d beta_d^2 c_{beta_d} = -4 n^2 sum_d sin^2(beta_d pi / 2n)`.
//!
//! The transforms below are direct `O(n)`-per-entry sine sums applied one axis
//! at a time.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_along_axis, GridSpec};
use crate::mollifier::MollifierTable;

/// Threshold below which a multiplier is treated as a zero crossing when
/// the system form of the smoothed operator is requested.
pub const MULTIPLIER_FLOOR: f64 = 1e-8;

/// A real function on the interior nodes `{1..n-1}^k`; boundary values are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl LatticeField {
    pub fn zeros(grid: GridSpec) -> Self {
        LatticeField { grid, values: vec![0.0; grid.num_interior()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_interior() {
            return Err(Error::GridMismatch(format!(
                "expected {} interior values, got {}",
                grid.num_interior(),
                values.len()
            )));
        }
        Ok(LatticeField { grid, values })
    }

    /// Samples `f(i/n)` at every interior node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.num_interior()).map(|i| f(&grid.node_point(i))).collect();
        LatticeField { grid, values }
    }

    pub fn get(&self, multi: &[usize]) -> f64 {
        self.values[self.grid.interior_flat(multi)]
    }

    /// Value at an arbitrary point through `kappa_n`; zero on the lower faces.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let cell = self.grid.locate(x);
        match self.grid.cell_to_interior(self.grid.cell_flat(&cell)) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `L^2(D)` norm of the cell-constant extension.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Euclidean inner product on the lattice.
    pub fn dot(&self, other: &LatticeField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// Writes `(i_1, ..., i_k, value)` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.grid.k();
        let cols: Vec<String> = (1..=k).map(|d| format!("i{d}")).collect();
        writeln!(out, "{},value", cols.join(","))?;
        for (flat, v) in self.values.iter().enumerate() {
            let idx: Vec<String> = self.grid.interior_multi(flat).iter().map(|i| i.to_string()).collect();
            writeln!(out, "{},{:.16e}", idx.join(","), v)?;
        }
        Ok(())
    }
}

/// `c_l = (l pi / 2n)^{-2} sin^2(l pi / 2n)`.
pub fn c_coefficient(l: usize, n: usize) -> f64 {
    let a = l as f64 * PI / (2.0 * n as f64);
    (a.sin() / a).powi(2)
}

/// Precomputed eigen data and sine transform for one grid.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    grid: GridSpec,
    /// `c_l`, index `l - 1`.
    c_table: Vec<f64>,
    /// `-4 n^2 sin^2(l pi / 2n)`, index `l - 1`.
    axis_eigenvalues: Vec<f64>,
    /// Orthonormal sine matrix `sqrt(2/n) sin(pi l i / n)`, `(n-1) x (n-1)`.
    sine: Vec<f64>,
    /// `lambda_beta` over the flat interior index.
    eigenvalues: Vec<f64>,
}

impl SpectralPlan {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n();
        let m = n - 1;
        let c_table: Vec<f64> = (1..n).map(|l| c_coefficient(l, n)).collect();
        let axis_eigenvalues: Vec<f64> = (1..n)
            .map(|l| {
                let s = (l as f64 * PI / (2.0 * n as f64)).sin();
                -4.0 * (n * n) as f64 * s * s
            })
            .collect();
        let scale = (2.0 / n as f64).sqrt();
        let mut sine = vec![0.0; m * m];
        for l in 1..n {
            for i in 1..n {
                sine[(l - 1) * m + (i - 1)] = scale * (PI * (l * i) as f64 / n as f64).sin();
            }
        }
        let eigenvalues = (0..grid.num_interior())
            .map(|flat| grid.interior_multi(flat).iter().map(|&b| axis_eigenvalues[b - 1]).sum())
            .collect();
        SpectralPlan { grid, c_table, axis_eigenvalues, sine, eigenvalues }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn c_table(&self) -> &[f64] {
        &self.c_table
    }

    /// `lambda_beta` from the `c_l` form, `-pi^2 sum_d beta_d^2 c_{beta_d}`.
    pub fn eigenvalue(&self, beta: &[usize]) -> f64 {
        -PI * PI * beta.iter().map(|&b| (b * b) as f64 * self.c_table[b - 1]).sum::<f64>()
    }

    /// `lambda_beta` from the sine form, indexed by flat mode index.
    pub fn eigenvalue_flat(&self, flat: usize) -> f64 {
        self.eigenvalues[flat]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// One-dimensional eigenvalue `-4 n^2 sin^2(l pi/2n)`.
    pub fn axis_eigenvalue(&self, l: usize) -> f64 {
        self.axis_eigenvalues[l - 1]
    }

    /// `|lambda|` of the lowest mode, `4 k n^2 sin^2(pi/2n)`.
    pub fn min_abs_eigenvalue(&self) -> f64 {
        -(self.grid.k() as f64) * self.axis_eigenvalues[0]
    }

    /// `(U_beta)_i = v_beta(i/n)`.
    pub fn eigenvector(&self, beta: &[usize]) -> LatticeField {
        LatticeField::from_fn(self.grid, |x| {
            beta.iter().zip(x).map(|(&b, &xi)| (PI * b as f64 * xi).sin()).product::<f64>()
        })
    }

    fn transform(&self, values: &[f64]) -> Vec<f64> {
        let m = self.grid.n() - 1;
        let k = self.grid.k();
        let mut cur = values.to_vec();
        for axis in 0..k {
            cur = apply_along_axis(&cur, m, k, axis, &self.sine, false);
        }
        cur
    }

    /// Coefficients in the orthonormal basis `(2/n)^{k/2} U_beta`.
    pub fn dst_forward(&self, u: &LatticeField) -> Vec<f64> {
        self.transform(&u.values)
    }

    /// Inverse of [`SpectralPlan::dst_forward`]; the orthonormal sine
    /// transform is its own inverse.
    pub fn dst_inverse(&self, coefficients: &[f64]) -> LatticeField {
        LatticeField { grid: self.grid, values: self.transform(coefficients) }
    }

    /// `(Au)_i = sum_j n^2 (u_{i-e_j} - 2 u_i + u_{i+e_j})` with zero boundary values.
    pub fn apply_laplacian(&self, u: &LatticeField) -> LatticeField {
        apply_laplacian(u)
    }

    /// Multiplier applied to the coefficient of mode `flat` by the inverse
    /// operator: `1/lambda_beta` or `Psi_hat(eps beta)/lambda_beta`.
    pub fn inverse_multipliers(&self, mollifier: Option<&MollifierTable>) -> Vec<f64> {
        (0..self.grid.num_interior())
            .map(|flat| {
                let lam = self.eigenvalues[flat];
                match mollifier {
                    None => 1.0 / lam,
                    Some(tab) => tab.multiplier(&self.grid.interior_multi(flat)) / lam,
                }
            })
            .collect()
    }

    /// `A^{-1} rhs`, or the smoothed inverse with multipliers
    /// `Psi_hat(eps beta)/lambda_beta`. The smoothed path multiplies by
    /// `Psi_hat` and never divides by it.
    pub fn solve_linear(&self, rhs: &LatticeField, mollifier: Option<&MollifierTable>) -> Result<LatticeField> {
        self.check_grid(&rhs.grid)?;
        let multipliers = self.inverse_multipliers(mollifier);
        Ok(self.apply_multipliers(rhs, &multipliers))
    }

    /// Applies precomputed modal multipliers.
    pub fn apply_multipliers(&self, u: &LatticeField, multipliers: &[f64]) -> LatticeField {
        let mut c = self.dst_forward(u);
        c.iter_mut().zip(multipliers).for_each(|(ci, mi)| *ci *= mi);
        self.dst_inverse(&c)
    }

    /// The smoothed operator `U^t Lambda^eps U u` with
    /// `lambda^eps_beta = lambda_beta / Psi_hat(eps beta)`.
    pub fn apply_smoothed_operator(&self, u: &LatticeField, mollifier: &MollifierTable) -> Result<LatticeField> {
        self.check_grid(&u.grid)?;
        let mut multipliers = Vec::with_capacity(self.grid.num_interior());
        for flat in 0..self.grid.num_interior() {
            let psi = mollifier.multiplier(&self.grid.interior_multi(flat));
            if psi.abs() <= MULTIPLIER_FLOOR {
                return Err(Error::MollifierZeroCrossing { value: psi });
            }
            multipliers.push(self.eigenvalues[flat] / psi);
        }
        Ok(self.apply_multipliers(u, &multipliers))
    }

    fn check_grid(&self, g: &GridSpec) -> Result<()> {
        if *g != self.grid {
            return Err(Error::GridMismatch(format!(
                "field on n = {}, k = {}; plan on n = {}, k = {}",
                g.n(),
                g.k(),
                self.grid.n(),
                self.grid.k()
            )));
        }
        Ok(())
    }
}

/// Direct stencil application of the difference Laplacian.
pub fn apply_laplacian(u: &LatticeField) -> LatticeField {
    let grid = u.grid;
    let k = grid.k();
    let m = grid.n() - 1;
    let n2 = (grid.n() * grid.n()) as f64;
    let mut out = vec![0.0; u.values.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let center = u.values[flat];
        let mut acc = 0.0;
        let mut stride = 1;
        let mut rem = flat;
        for _ in 0..k {
            // axis position counted from the fastest axis
            let pos = rem % m;
            rem /= m;
            let lo = if pos > 0 { u.values[flat - stride] } else { 0.0 };
            let hi = if pos + 1 < m { u.values[flat + stride] } else { 0.0 };
            acc += lo - 2.0 * center + hi;
            stride *= m;
        }
        *o = n2 * acc;
    }
    LatticeField { grid, values: out }
}
