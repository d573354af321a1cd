//! Green kernels of the Dirichlet Laplacian on the unit cube: the continuum
//! kernel (closed form for `k = 1`, sine series otherwise), the lattice kernel
//! built from the discrete eigensystem, and their mollified versions.
//! Also mixed `L^{p_1,...,p_k}` norms and the kernel discrepancy terms that
//! drive the convergence rates.
//!
//! Sign convention: all kernels are inverses of negative operators and are
//! therefore non-positive on the diagonal. In one dimension
//! `G(x, y) = -((x ∧ y) - x y)`, which is the sum of the series
//! `sum_beta -2 sin(beta pi x) sin(beta pi y) / (pi^2 beta^2)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::mollifier::{decay_constant, MollifierTable};
use crate::rates::{check_hypothesis, HurstVector};
use crate::spectral::SpectralPlan;

/// Mixed-norm exponents, innermost integration axis first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedExponents(Vec<f64>);

impl MixedExponents {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|&pd| !(pd >= 1.0)) {
            return Err(Error::InvalidParameter(format!("mixed exponents {p:?} must all be >= 1")));
        }
        Ok(MixedExponents(p))
    }

    /// `(1/h_1, ..., 1/h_k)`.
    pub fn kernel(h: &HurstVector) -> Self {
        MixedExponents(h.kernel_exponents())
    }

    pub fn uniform(k: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Iterated norm of a function sampled at the midpoints of an `m^k` lattice
/// on the unit cube (flat row-major, axis 0 slowest). Axis 0 is integrated
/// first; `p = inf` takes the maximum over nodes.
pub fn mixed_norm(values: &[f64], m: usize, p: &MixedExponents) -> f64 {
    let k = p.0.len();
    assert_eq!(values.len(), m.pow(k as u32), "sample count must be m^k");
    let w = 1.0 / m as f64;
    let mut cur: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    for &pd in &p.0 {
        let rest = cur.len() / m;
        let mut next = vec![0.0; rest];
        for (r, out) in next.iter_mut().enumerate() {
            // axis being reduced is the slowest remaining one
            let fiber = (0..m).map(|i| cur[i * rest + r]);
            *out = if pd.is_infinite() {
                fiber.fold(0.0, f64::max)
            } else {
                (fiber.map(|v| v.powf(pd)).sum::<f64>() * w).powf(1.0 / pd)
            };
        }
        cur = next;
    }
    cur[0]
}

/// `-((x ∧ y) - x y)`.
pub fn green_continuum_1d(x: f64, y: f64) -> f64 {
    -(x.min(y) - x * y)
}

fn sine_products(x: &[f64], y: &[f64], b_max: usize) -> Vec<Vec<f64>> {
    x.iter()
        .zip(y)
        .map(|(&xd, &yd)| (0..=b_max).map(|b| (PI * b as f64 * xd).sin() * (PI * b as f64 * yd).sin()).collect())
        .collect()
}

/// Calls `f(beta)` for every `beta in {lo..=hi}^k` in lexicographic order.
fn for_each_multi(k: usize, lo: usize, hi: usize, mut f: impl FnMut(&[usize])) {
    if hi < lo {
        return;
    }
    let mut beta = vec![lo; k];
    loop {
        f(&beta);
        let mut d = k;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            if beta[d] < hi {
                beta[d] += 1;
                break;
            }
            beta[d] = lo;
        }
    }
}

/// Partial sum over `beta in {1..b_max}^k` of
/// `-Psi_hat(eps beta) 2^k v_beta(x) v_beta(y) / (pi^2 |beta|^2)`.
///
/// Without a mollifier this is the truncated continuum kernel, which is only
/// square integrable for `k <= 3`; the table, when given, must cover `0..=b_max`.
pub fn green_series(x: &[f64], y: &[f64], b_max: usize, mollifier: Option<&MollifierTable>) -> Result<f64> {
    let k = x.len();
    if mollifier.is_none() && k >= 4 {
        return Err(Error::KernelNotSquareIntegrable { k });
    }
    if let Some(tab) = mollifier {
        if tab.len() <= b_max {
            return Err(Error::InvalidParameter(format!(
                "mollifier table has {} entries, need {}",
                tab.len(),
                b_max + 1
            )));
        }
    }
    let s = sine_products(x, y, b_max);
    let scale = -(2f64.powi(k as i32)) / (PI * PI);
    let mut total = 0.0;
    for_each_multi(k, 1, b_max, |beta| {
        let norm2: f64 = beta.iter().map(|&b| (b * b) as f64).sum();
        let mut term = scale / norm2;
        for (d, &b) in beta.iter().enumerate() {
            term *= s[d][b];
        }
        if let Some(tab) = mollifier {
            term *= tab.multiplier(beta);
        }
        total += term;
    });
    Ok(total)
}

/// Truncated continuum kernel (no smoothing).
pub fn green_continuum_series(x: &[f64], y: &[f64], b_max: usize) -> Result<f64> {
    green_series(x, y, b_max, None)
}

/// Modal weights `[Psi_hat(eps beta)] 2^k / lambda_beta` of the lattice kernel.
pub fn discrete_weights(plan: &SpectralPlan, mollifier: Option<&MollifierTable>) -> Vec<f64> {
    let scale = 2f64.powi(plan.grid().k() as i32);
    plan.inverse_multipliers(mollifier).into_iter().map(|w| scale * w).collect()
}

/// Lattice kernel `sum_beta [Psi_hat] 2^k / lambda_beta v_beta(kappa x) v_beta(kappa y)`
/// by direct summation.
pub fn green_discrete(x: &[f64], y: &[f64], plan: &SpectralPlan, mollifier: Option<&MollifierTable>) -> f64 {
    let grid = plan.grid();
    let n = grid.n();
    let kx = grid.kappa(x);
    let ky = grid.kappa(y);
    let s = sine_products(&kx, &ky, n - 1);
    let weights = discrete_weights(plan, mollifier);
    weights
        .iter()
        .enumerate()
        .map(|(flat, w)| {
            let beta = grid.interior_multi(flat);
            beta.iter().enumerate().fold(*w, |acc, (d, &b)| acc * s[d][b])
        })
        .sum()
}

/// Row `y -> G_{D,n}(x, y)` of the lattice kernel as values on all `n^k`
/// cells (cells on the lower faces are zero). One sine transform.
pub fn green_discrete_row(x: &[f64], plan: &SpectralPlan, mollifier: Option<&MollifierTable>) -> Vec<f64> {
    let weights = discrete_weights(plan, mollifier);
    let cell = plan.grid().locate(x);
    green_discrete_row_with(plan, &weights, &cell)
}

/// Like [`green_discrete_row`] with the modal weights from
/// [`discrete_weights`] precomputed and `x` given by its cell index.
pub fn green_discrete_row_with(plan: &SpectralPlan, weights: &[f64], x_cell: &[usize]) -> Vec<f64> {
    let grid = plan.grid();
    let n = grid.n();
    let k = grid.k();
    let axis_sines: Vec<Vec<f64>> =
        x_cell.iter().map(|&j| (0..n).map(|b| (PI * (b * j) as f64 / n as f64).sin()).collect()).collect();
    let coeffs: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(flat, w)| {
            let beta = grid.interior_multi(flat);
            beta.iter().enumerate().fold(*w, |acc, (d, &b)| acc * axis_sines[d][b])
        })
        .collect();
    // sum_beta c_beta v_beta(j/n) = (n/2)^{k/2} (S c)_j with the orthonormal S
    let interior = plan.dst_inverse(&coeffs);
    let factor = (n as f64 / 2.0).powf(k as f64 / 2.0);
    let mut cells = vec![0.0; grid.num_cells()];
    for (flat, v) in interior.values.iter().enumerate() {
        cells[grid.interior_to_cell(flat)] = factor * v;
    }
    cells
}

/// Dense `(n-1)^k x (n-1)^k` matrix `G_{D,n}(i/n, j/n)` assembled by explicit
/// eigen-sums (no fast transform). Small grids only.
pub fn green_discrete_matrix(plan: &SpectralPlan, mollifier: Option<&MollifierTable>) -> Vec<f64> {
    let grid = plan.grid();
    let size = grid.num_interior();
    let n = grid.n();
    let weights = discrete_weights(plan, mollifier);
    let sin_table: Vec<f64> = (0..n * n).map(|t| (PI * (t / n * (t % n)) as f64 / n as f64).sin()).collect();
    let modes: Vec<Vec<usize>> = (0..size).map(|f| grid.interior_multi(f)).collect();
    // u[beta][i] = v_beta(i/n)
    let u: Vec<Vec<f64>> = modes
        .iter()
        .map(|beta| modes.iter().map(|i| beta.iter().zip(i).map(|(&b, &id)| sin_table[b * n + id]).product()).collect())
        .collect();
    let mut g = vec![0.0; size * size];
    g.par_chunks_mut(size).enumerate().for_each(|(i, row)| {
        for (b, ub) in u.iter().enumerate() {
            let wi = weights[b] * ub[i];
            for (j, r) in row.iter_mut().enumerate() {
                *r += wi * ub[j];
            }
        }
    });
    g
}

/// Interior nodes whose coordinates are all `<= n/2`; by reflection symmetry
/// of the cube every row norm is attained on this set.
fn reduced_nodes(grid: &GridSpec) -> Vec<Vec<usize>> {
    let half = grid.n() / 2;
    (0..grid.num_interior()).map(|f| grid.interior_multi(f)).filter(|m| m.iter().all(|&i| i <= half)).collect()
}

/// `sup_x ||G_{D,n}(x, .)||_{L^{p}}` over the interior nodes, for a mixed
/// exponent vector `p`. Lattice kernels are cell-constant, so the norm is exact.
pub fn sup_row_norm(plan: &SpectralPlan, mollifier: Option<&MollifierTable>, p: &MixedExponents) -> f64 {
    let grid = plan.grid();
    let weights = discrete_weights(plan, mollifier);
    reduced_nodes(&grid)
        .par_iter()
        .map(|x| mixed_norm(&green_discrete_row_with(plan, &weights, x), grid.n(), p))
        .reduce(|| 0.0, f64::max)
}

/// Empirical counterpart of the uniform kernel constant: the sup over grid
/// nodes of the `(1/h_1, ..., 1/h_k)` mixed norm of the lattice kernel.
pub fn kernel_mixed_bound(h: &HurstVector, plan: &SpectralPlan, mollifier: Option<&MollifierTable>) -> Result<f64> {
    if !check_hypothesis(h) {
        return Err(Error::HypothesisFails(format!("sum h = {} with k = {}", h.sum(), h.dim())));
    }
    if h.dim() != plan.grid().k() {
        return Err(Error::GridMismatch("Hurst vector and plan dimensions differ".into()));
    }
    Ok(sup_row_norm(plan, mollifier, &MixedExponents::kernel(h)))
}

/// `sup_x int_D |G_{D,n}(x, y)| dy`, the constant of the a-priori bound.
pub fn k_tilde(plan: &SpectralPlan, mollifier: Option<&MollifierTable>) -> f64 {
    let p = MixedExponents(vec![1.0; plan.grid().k()]);
    sup_row_norm(plan, mollifier, &p)
}

/// The kinds of kernel that can be sliced and exported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Continuum,
    ContinuumTruncated,
    Discrete,
    SmoothedDiscrete,
    SmoothedContinuum,
}

/// `y -> G(x, y)` sampled at the midpoints of an `m^k` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSlice {
    pub x: Vec<f64>,
    pub kind: KernelKind,
    pub m: usize,
    pub values: Vec<f64>,
}

impl KernelSlice {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.x.len();
        let cols: Vec<String> = (1..=k).map(|d| format!("j{d}")).collect();
        writeln!(out, "{},value", cols.join(","))?;
        let grid = GridSpec::new(k, self.m).map_err(|e| std::io::Error::other(e.to_string()))?;
        for (flat, v) in self.values.iter().enumerate() {
            let idx: Vec<String> = grid.cell_multi(flat).iter().map(|j| j.to_string()).collect();
            writeln!(out, "{},{:.16e}", idx.join(","), v)?;
        }
        Ok(())
    }
}

/// Source of kernel values for slices and Hölder moduli.
#[derive(Debug, Clone, Copy)]
pub enum KernelSource<'a> {
    /// Closed form, `k = 1` only.
    Continuum,
    /// Sine series truncated at `b_max`, optionally mollified.
    Series { b_max: usize, mollifier: Option<&'a MollifierTable> },
    /// Lattice kernel, optionally mollified.
    Discrete { plan: &'a SpectralPlan, mollifier: Option<&'a MollifierTable> },
}

impl KernelSource<'_> {
    pub fn kind(&self) -> KernelKind {
        match self {
            KernelSource::Continuum => KernelKind::Continuum,
            KernelSource::Series { mollifier: None, .. } => KernelKind::ContinuumTruncated,
            KernelSource::Series { mollifier: Some(_), .. } => KernelKind::SmoothedContinuum,
            KernelSource::Discrete { mollifier: None, .. } => KernelKind::Discrete,
            KernelSource::Discrete { mollifier: Some(_), .. } => KernelKind::SmoothedDiscrete,
        }
    }

    /// Slice on the midpoints of an `m^k` lattice. For lattice kernels `m`
    /// is ignored and the cells of the plan's grid are used.
    pub fn slice(&self, x: &[f64], m: usize) -> Result<KernelSlice> {
        let k = x.len();
        let (m, values) = match *self {
            KernelSource::Continuum => {
                if k != 1 {
                    return Err(Error::InvalidParameter("closed-form kernel is one-dimensional".into()));
                }
                let values = (0..m).map(|j| green_continuum_1d(x[0], (j as f64 + 0.5) / m as f64)).collect();
                (m, values)
            }
            KernelSource::Series { b_max, mollifier } => {
                let grid = GridSpec::new(k, m)?;
                let values = (0..grid.num_cells())
                    .into_par_iter()
                    .map(|flat| {
                        let y: Vec<f64> = grid.cell_multi(flat).iter().map(|&j| (j as f64 + 0.5) / m as f64).collect();
                        green_series(x, &y, b_max, mollifier)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (m, values)
            }
            KernelSource::Discrete { plan, mollifier } => (plan.grid().n(), green_discrete_row(x, plan, mollifier)),
        };
        Ok(KernelSlice { x: x.to_vec(), kind: self.kind(), m, values })
    }
}

/// `||G(x, .) - G(z, .)||` in the `(1/h_1, ..., 1/h_k)` mixed norm.
pub fn holder_modulus(h: &HurstVector, x: &[f64], z: &[f64], source: KernelSource<'_>, m: usize) -> Result<f64> {
    let gx = source.slice(x, m)?;
    let gz = source.slice(z, m)?;
    let diff: Vec<f64> = gx.values.iter().zip(&gz.values).map(|(a, b)| a - b).collect();
    Ok(mixed_norm(&diff, gx.m, &MixedExponents::kernel(h)))
}

/// `int_0^1 sin(a pi x) sin(b pi kappa_n(x)) dx`.
pub fn snapped_overlap(a: usize, b: usize, n: usize) -> f64 {
    let nf = n as f64;
    let af = a as f64 * PI;
    (0..n)
        .map(|j| {
            let lo = j as f64 / nf;
            let hi = (j + 1) as f64 / nf;
            (PI * (b * j) as f64 / nf).sin() * ((af * lo).cos() - (af * hi).cos()) / af
        })
        .sum()
}

/// Squared `L^2(D x D)` norms of the four pieces of `G^eps_D - G^eps_{D,n}`:
/// the modes beyond the lattice, the eigenvalue mismatch, and grid snapping
/// in `x` and in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub n: usize,
    pub epsilon: f64,
    pub b_max: usize,
    /// Modes in `{1..b_max}^k` outside the lattice modes.
    pub a1: f64,
    /// Analytic bound on the modes beyond `b_max`, included in `a1`.
    pub a1_tail: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    /// `sqrt(a1) + sqrt(a2) + sqrt(a3) + sqrt(a4)`, an upper bound on
    /// `||G^eps_D - G^eps_{D,n}||_{L^2(D x D)}` by the triangle inequality.
    pub discrepancy: f64,
}

/// Order of the algebraic decay used for the tail bound of the mode sum.
const TAIL_THETA: f64 = 8.0;

/// `L^2(D x D)` discrepancy between the mollified continuum kernel and the
/// mollified lattice kernel, decomposed by Parseval.
///
/// `mollifier` must cover modes `0..=b_max` (use [`MollifierTable::with_len`]).
/// Pass [`MollifierTable::identity`] for unsmoothed kernels (no tail bound
/// is then available and the tail is reported as zero).
pub fn kernel_discrepancy_l2(
    plan: &SpectralPlan,
    mollifier: &MollifierTable,
    b_max: usize,
) -> Result<DiscrepancyReport> {
    let grid = plan.grid();
    let k = grid.k();
    let n = grid.n();
    if b_max < n {
        return Err(Error::InvalidParameter(format!("b_max = {b_max} must be >= n = {n}")));
    }
    if mollifier.len() <= b_max {
        return Err(Error::InvalidParameter(format!(
            "mollifier table has {} entries, need {}",
            mollifier.len(),
            b_max + 1
        )));
    }
    let pi4 = PI.powi(4);
    let sq: Vec<f64> = (0..=b_max).map(|l| mollifier.value_1d(l).powi(2)).collect();
    let norm2 = |beta: &[usize]| beta.iter().map(|&b| (b * b) as f64).sum::<f64>();

    // modes outside the lattice, split on the first index for parallelism
    let a1_inner: f64 = (1..=b_max)
        .into_par_iter()
        .map(|b0| {
            let mut acc = 0.0;
            let mut beta = vec![b0; k];
            let visit = |rest: &[usize], acc: &mut f64, beta: &mut Vec<usize>| {
                beta[1..].copy_from_slice(rest);
                if beta.iter().all(|&b| b < n) {
                    return;
                }
                let psi2: f64 = beta.iter().map(|&b| sq[b]).product();
                let r2 = norm2(beta);
                *acc += psi2 / (pi4 * r2 * r2);
            };
            if k == 1 {
                visit(&[], &mut acc, &mut beta);
            } else {
                for_each_multi(k - 1, 1, b_max, |rest| visit(rest, &mut acc, &mut beta));
            }
            acc
        })
        .sum();

    let a1_tail = if mollifier.is_identity() {
        0.0
    } else {
        let eps = mollifier.epsilon();
        let c = decay_constant(TAIL_THETA, 400.0)?;
        let expo = 2.0 * TAIL_THETA + 4.0 - k as f64;
        k as f64 * c * c * eps.powf(-2.0 * TAIL_THETA) / pi4 * (b_max as f64).powf(-expo) / expo
    };

    let overlap: Vec<f64> = (1..n).map(|b| snapped_overlap(b, b, n)).collect();
    let two_k = 2f64.powi(k as i32);
    let mut a2 = 0.0;
    let mut a3 = 0.0;
    for flat in 0..grid.num_interior() {
        let beta = grid.interior_multi(flat);
        let psi = mollifier.multiplier(&beta);
        let lam = plan.eigenvalue_flat(flat);
        let diff = -1.0 / (PI * PI * norm2(&beta)) - 1.0 / lam;
        a2 += psi * psi * diff * diff;
        let q: f64 = beta.iter().map(|&b| overlap[b - 1]).product();
        let snap = 2.0 / two_k - 2.0 * q;
        a3 += psi * psi * two_k / (lam * lam) * snap;
    }
    // the y-snapping term has the same Parseval expression with x and y swapped
    let a4 = a3;

    let a1 = a1_inner + a1_tail;
    let total = a1 + a2 + a3 + a4;
    if a1_tail > 0.1 * total {
        return Err(Error::TailTooLarge { tail: a1_tail, sum: total });
    }
    Ok(DiscrepancyReport {
        n,
        epsilon: mollifier.epsilon(),
        b_max,
        a1,
        a1_tail,
        a2,
        a3,
        a4,
        discrepancy: a1.sqrt() + a2.sqrt() + a3.max(0.0).sqrt() + a4.max(0.0).sqrt(),
    })
}

/// `||G^eps_D(x, .)||^2_{L^2(D)} = 2^k / pi^4 sum_beta Psi_hat^2(eps beta) v_beta^2(x) / |beta|^4`,
/// truncated at `b_max`.
pub fn smoothed_row_norm_sq(x: &[f64], b_max: usize, mollifier: &MollifierTable) -> f64 {
    let k = x.len();
    let s = sine_products(x, x, b_max);
    let mut total = 0.0;
    for_each_multi(k, 1, b_max, |beta| {
        let r2: f64 = beta.iter().map(|&b| (b * b) as f64).sum();
        let mut term = mollifier.multiplier(beta).powi(2) / (r2 * r2);
        for (d, &b) in beta.iter().enumerate() {
            term *= s[d][b];
        }
        total += term;
    });
    2f64.powi(k as i32) / PI.powi(4) * total
}
