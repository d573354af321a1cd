//! Exact Gaussian sampling of the rectangle increments `B^H(D_j)` of a
//! fractional Brownian field on the cells of a lattice.
//!
//! The field covariance is a product over axes, so the covariance of the cell
//! increments is the Kronecker product of `k` one-dimensional fractional
//! Gaussian noise matrices. Sampling factors each axis matrix once and applies
//! the factors tensor-axis by tensor-axis to a vector of standard normals.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_along_axis, apply_kronecker, GridSpec};
use crate::rates::HurstVector;

/// One-dimensional covariance `(1/2)(|x|^{2h} + |y|^{2h} - |x - y|^{2h})`.
pub fn covariance_1d(h: f64, x: f64, y: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (x.abs().powf(e) + y.abs().powf(e) - (x - y).abs().powf(e))
}

/// Covariance `E(B^H(x) B^H(y))` of the field, a product of one-dimensional
/// factors each carrying `1/2`.
pub fn covariance_r(h: &HurstVector, x: &[f64], y: &[f64]) -> f64 {
    h.as_slice().iter().zip(x.iter().zip(y)).map(|(&hi, (&xi, &yi))| covariance_1d(hi, xi, yi)).product()
}

/// Covariance of the increments of a one-dimensional fBm over `[a, b)` and `[c, d)`.
pub fn increment_covariance_1d(h: f64, (a, b): (f64, f64), (c, d): (f64, f64)) -> f64 {
    let e = 2.0 * h;
    let p = |t: f64| t.abs().powf(e);
    0.5 * (p(b - c) + p(a - d) - p(a - c) - p(b - d))
}

/// Covariance of the rectangle increments of two cells of the same grid.
pub fn increment_covariance(h: &HurstVector, grid: &GridSpec, cell_i: &[usize], cell_j: &[usize]) -> f64 {
    h.as_slice()
        .iter()
        .zip(cell_i.iter().zip(cell_j))
        .map(|(&hd, (&a, &b))| increment_covariance_1d(hd, grid.cell_interval(a), grid.cell_interval(b)))
        .product()
}

/// `n x n` covariance of the cell increments along one axis (row-major).
pub fn axis_covariance(h: f64, grid: &GridSpec) -> Vec<f64> {
    let n = grid.n();
    let mut cov = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            let v = increment_covariance_1d(h, grid.cell_interval(a), grid.cell_interval(b));
            cov[a * n + b] = v;
            cov[b * n + a] = v;
        }
    }
    cov
}

/// Dense `n^k x n^k` covariance of all cell increments, assembled as a
/// Kronecker product of the axis matrices. Only for small grids.
pub fn assemble_covariance(h: &HurstVector, grid: &GridSpec) -> Vec<f64> {
    let n = grid.n();
    let size = grid.num_cells();
    let axes: Vec<Vec<f64>> = h.as_slice().iter().map(|&hd| axis_covariance(hd, grid)).collect();
    let mut cov = vec![0.0; size * size];
    for r in 0..size {
        let ri = grid.cell_multi(r);
        for c in 0..size {
            let ci = grid.cell_multi(c);
            cov[r * size + c] = axes.iter().enumerate().map(|(d, m)| m[ri[d] * n + ci[d]]).product();
        }
    }
    cov
}

/// Lower Cholesky factor of one axis covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisCholesky {
    pub n: usize,
    /// Row-major `n x n`, zero above the diagonal.
    pub lower_factor: Vec<f64>,
    /// True for `h = 1/2`, where the factor is `diag(n^{-1/2})`.
    pub diagonal: bool,
}

impl AxisCholesky {
    /// `L L^T`, for checking against the axis covariance.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower_factor;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..=i.min(j)).map(|p| l[i * n + p] * l[j * n + p]).sum();
            }
        }
        out
    }
}

fn cholesky(matrix: &[f64], n: usize, axis: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i * n + p] * l[j * n + p]).sum();
            if i == j {
                let pivot = matrix[i * n + i] - s;
                if !(pivot > 0.0) || !pivot.is_finite() {
                    return Err(Error::NotPositiveDefinite { axis, pivot: i, value: pivot });
                }
                l[i * n + i] = pivot.sqrt();
            } else {
                l[i * n + j] = (matrix[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Factors every axis covariance of the grid.
pub fn build_axis_cholesky(h: &HurstVector, grid: &GridSpec) -> Result<Vec<AxisCholesky>> {
    if h.dim() != grid.k() {
        return Err(Error::GridMismatch(format!("Hurst vector has {} entries but grid has k = {}", h.dim(), grid.k())));
    }
    let n = grid.n();
    h.as_slice()
        .iter()
        .enumerate()
        .map(|(axis, &hd)| {
            if hd == 0.5 {
                let mut l = vec![0.0; n * n];
                let s = grid.h().sqrt();
                for i in 0..n {
                    l[i * n + i] = s;
                }
                Ok(AxisCholesky { n, lower_factor: l, diagonal: true })
            } else {
                let cov = axis_covariance(hd, grid);
                Ok(AxisCholesky { n, lower_factor: cholesky(&cov, n, axis)?, diagonal: false })
            }
        })
        .collect()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one replicate: the ChaCha key is derived from `(seed,
/// stream_id)` and the replicate index selects the ChaCha stream, so draws
/// are reproducible and independent of evaluation order.
pub fn replicate_rng(seed: u64, stream_id: u64, replicate: u64) -> ChaCha8Rng {
    let mut state = seed ^ stream_id.rotate_left(32) ^ 0xA076_1D64_78BD_642F;
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}

/// One realization of the cell increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub grid: GridSpec,
    pub h: HurstVector,
    /// Indexed by flat cell index, `n^k` entries.
    pub increments: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
    pub replicate: u64,
}

impl NoiseSample {
    pub fn zeros(h: &HurstVector, grid: GridSpec) -> Self {
        NoiseSample { grid, h: h.clone(), increments: vec![0.0; grid.num_cells()], seed: 0, stream_id: 0, replicate: 0 }
    }

    /// Increment of the cell with the given multi-index.
    pub fn get(&self, cell: &[usize]) -> f64 {
        self.increments[self.grid.cell_flat(cell)]
    }

    /// `sum_j phi_j B^H(D_j)`, the stochastic integral of a cell function.
    pub fn integrate(&self, phi: &[f64]) -> f64 {
        phi.iter().zip(&self.increments).map(|(a, b)| a * b).sum()
    }

    /// Writes the sample as CSV: a `#` header line with `k`, `n`, `h`,
    /// `seed`, `stream_id`, `replicate`, a column header, then one row per cell.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.grid.k();
        writeln!(
            out,
            "# k={} n={} h={} seed={} stream_id={} replicate={}",
            k,
            self.grid.n(),
            self.h,
            self.seed,
            self.stream_id,
            self.replicate
        )?;
        let cols: Vec<String> = (1..=k).map(|d| format!("j{d}")).collect();
        writeln!(out, "{},value", cols.join(","))?;
        for (flat, v) in self.increments.iter().enumerate() {
            let idx: Vec<String> = self.grid.cell_multi(flat).iter().map(|j| j.to_string()).collect();
            writeln!(out, "{},{:.16e}", idx.join(","), v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let io = |e: std::io::Error| Error::Parse(e.to_string());
        let header = lines.next().ok_or_else(|| Error::Parse("empty noise file".into()))?.map_err(io)?;
        let header = header.strip_prefix('#').ok_or_else(|| Error::Parse("missing '#' header line".into()))?;
        let (mut k, mut n, mut h, mut seed, mut stream_id, mut replicate) = (None, None, None, 0, 0, 0);
        for field in header.split_whitespace() {
            let (key, value) =
                field.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {field:?}")))?;
            let int = |v: &str| v.parse::<u64>().map_err(|e| Error::Parse(format!("{key}: {e}")));
            match key {
                "k" => k = Some(int(value)? as usize),
                "n" => n = Some(int(value)? as usize),
                "h" => h = Some(HurstVector::parse(value)?),
                "seed" => seed = int(value)?,
                "stream_id" => stream_id = int(value)?,
                "replicate" => replicate = int(value)?,
                other => return Err(Error::Parse(format!("unknown header key {other:?}"))),
            }
        }
        let (k, n, h) = match (k, n, h) {
            (Some(k), Some(n), Some(h)) => (k, n, h),
            _ => return Err(Error::Parse("header must define k, n and h".into())),
        };
        let grid = GridSpec::new(k, n)?;
        if h.dim() != k {
            return Err(Error::Parse(format!("h has {} entries, k = {k}", h.dim())));
        }
        lines.next().ok_or_else(|| Error::Parse("missing column header".into()))?.map_err(io)?;
        let mut increments = vec![f64::NAN; grid.num_cells()];
        let mut count = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != k + 1 {
                return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 3, k + 1)));
            }
            let idx = parts[..k]
                .iter()
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 3)))?;
            if idx.iter().any(|&j| j >= n) {
                return Err(Error::Parse(format!("line {}: cell index out of range", lineno + 3)));
            }
            let value =
                parts[k].trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 3)))?;
            increments[grid.cell_flat(&idx)] = value;
            count += 1;
        }
        if count != grid.num_cells() || increments.iter().any(|v| v.is_nan()) {
            return Err(Error::Parse(format!("expected {} cells, found {count}", grid.num_cells())));
        }
        Ok(NoiseSample { grid, h, increments, seed, stream_id, replicate })
    }
}

/// Precomputed axis factors for repeated sampling on one grid.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    h: HurstVector,
    grid: GridSpec,
    factors: Vec<AxisCholesky>,
}

impl NoiseSampler {
    pub fn new(h: &HurstVector, grid: GridSpec) -> Result<Self> {
        let factors = build_axis_cholesky(h, &grid)?;
        Ok(NoiseSampler { h: h.clone(), grid, factors })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn hurst(&self) -> &HurstVector {
        &self.h
    }

    pub fn factors(&self) -> &[AxisCholesky] {
        &self.factors
    }

    /// Maps standard normal draws to increments by applying the axis factors
    /// in axis order `0, ..., k-1`.
    pub fn transform(&self, normals: &[f64]) -> Vec<f64> {
        assert_eq!(normals.len(), self.grid.num_cells(), "one normal draw per cell");
        let n = self.grid.n();
        let k = self.grid.k();
        let mut cur = normals.to_vec();
        for (axis, f) in self.factors.iter().enumerate() {
            if f.diagonal {
                let s = f.lower_factor[0];
                cur.iter_mut().for_each(|v| *v *= s);
            } else {
                cur = apply_along_axis(&cur, n, k, axis, &f.lower_factor, true);
            }
        }
        cur
    }

    /// Draws replicate `replicate` of the stream `(seed, stream_id)`.
    pub fn sample(&self, seed: u64, stream_id: u64, replicate: u64) -> NoiseSample {
        let mut rng = replicate_rng(seed, stream_id, replicate);
        let normals: Vec<f64> = (0..self.grid.num_cells()).map(|_| StandardNormal.sample(&mut rng)).collect();
        NoiseSample {
            grid: self.grid,
            h: self.h.clone(),
            increments: self.transform(&normals),
            seed,
            stream_id,
            replicate,
        }
    }
}

/// One draw (replicate 0) of the increments on `grid`.
pub fn sample(h: &HurstVector, grid: GridSpec, seed: u64, stream_id: u64) -> Result<NoiseSample> {
    Ok(NoiseSampler::new(h, grid)?.sample(seed, stream_id, 0))
}

/// Sums fine increments into the cells of a coarser grid. Exact by additivity
/// of rectangle increments.
pub fn aggregate(fine: &NoiseSample, coarse: GridSpec) -> Result<NoiseSample> {
    let r = fine.grid.refinement_factor(&coarse)?;
    if r == 1 {
        return Ok(fine.clone());
    }
    let k = coarse.k();
    let mut increments = vec![0.0; coarse.num_cells()];
    let mut coarse_idx = vec![0; k];
    for (flat, &v) in fine.increments.iter().enumerate() {
        let multi = fine.grid.cell_multi(flat);
        for d in 0..k {
            coarse_idx[d] = multi[d] / r;
        }
        increments[coarse.cell_flat(&coarse_idx)] += v;
    }
    Ok(NoiseSample { grid: coarse, increments, ..fine.clone() })
}

/// Aggregation as a linear map: the `coarse x fine` 0/1 matrix along one axis.
pub fn aggregation_matrix(fine_n: usize, coarse_n: usize) -> Vec<f64> {
    let r = fine_n / coarse_n;
    let mut m = vec![0.0; coarse_n * fine_n];
    for c in 0..coarse_n {
        for f in c * r..(c + 1) * r {
            m[c * fine_n + f] = 1.0;
        }
    }
    m
}

/// Quadratic form `a^T C b` with the Kronecker covariance `C` of the cell
/// increments, computed without assembling `C`.
pub fn covariance_form(h: &HurstVector, grid: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    let axes: Vec<Vec<f64>> = h.as_slice().iter().map(|&hd| axis_covariance(hd, grid)).collect();
    let refs: Vec<&[f64]> = axes.iter().map(|m| m.as_slice()).collect();
    let cb = apply_kronecker(b, grid.n(), grid.k(), &refs, false);
    a.iter().zip(&cb).map(|(x, y)| x * y).sum()
}
