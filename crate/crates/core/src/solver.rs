//! The nonlinear lattice system `A u = f(u) + g_n + n^k B` and its mollified
//! variant, solved by damped Picard iteration on top of the spectral solver.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::green_discrete_matrix;
use crate::mollifier::MollifierTable;
use crate::noise::NoiseSample;
use crate::spectral::{LatticeField, SpectralPlan};

/// Bounded nondecreasing part of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum F1 {
    #[default]
    Zero,
    /// `M tanh(s u / M)`.
    ScaledTanh { bound: f64, slope: f64 },
    /// `(2M/pi) atan(pi s u / (2M))`.
    ScaledArctan { bound: f64, slope: f64 },
}

/// Lipschitz part of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum F2 {
    #[default]
    Zero,
    /// `-L u`.
    Linear { lipschitz: f64 },
    /// `-L u + c`.
    Affine { lipschitz: f64, offset: f64 },
}

/// `f = f1 + f2` with `f1` bounded and nondecreasing and `f2` Lipschitz, so
/// that `(u - v)(f(u) - f(v)) >= -L (u - v)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    #[serde(default)]
    pub f1: F1,
    #[serde(default)]
    pub f2: F2,
}

impl NonlinearitySpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn tanh(bound: f64, slope: f64) -> Self {
        NonlinearitySpec { f1: F1::ScaledTanh { bound, slope }, f2: F2::Zero }
    }

    pub fn linear(lipschitz: f64) -> Self {
        NonlinearitySpec { f1: F1::Zero, f2: F2::Linear { lipschitz } }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must be positive and finite")))
            }
        };
        match self.f1 {
            F1::Zero => {}
            F1::ScaledTanh { bound, slope } | F1::ScaledArctan { bound, slope } => {
                positive("f1 bound", bound)?;
                positive("f1 slope", slope)?;
            }
        }
        match self.f2 {
            F2::Zero => {}
            F2::Linear { lipschitz } | F2::Affine { lipschitz, .. } => {
                if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
                    return Err(Error::InvalidParameter(format!("f2 Lipschitz constant {lipschitz} must be >= 0")));
                }
            }
        }
        if let F2::Affine { offset, .. } = self.f2 {
            if !offset.is_finite() {
                return Err(Error::InvalidParameter("f2 offset must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn f1(&self, u: f64) -> f64 {
        match self.f1 {
            F1::Zero => 0.0,
            F1::ScaledTanh { bound, slope } => bound * (slope * u / bound).tanh(),
            F1::ScaledArctan { bound, slope } => 2.0 * bound / PI * (PI * slope * u / (2.0 * bound)).atan(),
        }
    }

    pub fn f2(&self, u: f64) -> f64 {
        match self.f2 {
            F2::Zero => 0.0,
            F2::Linear { lipschitz } => -lipschitz * u,
            F2::Affine { lipschitz, offset } => -lipschitz * u + offset,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.f1(u) + self.f2(u)
    }

    /// `sup |f1|`.
    pub fn bound(&self) -> f64 {
        match self.f1 {
            F1::Zero => 0.0,
            F1::ScaledTanh { bound, .. } | F1::ScaledArctan { bound, .. } => bound,
        }
    }

    /// `sup f1'`, attained at the origin for both families.
    pub fn f1_slope(&self) -> f64 {
        match self.f1 {
            F1::Zero => 0.0,
            F1::ScaledTanh { slope, .. } | F1::ScaledArctan { slope, .. } => slope,
        }
    }

    /// Lipschitz constant `L` of `f2`.
    pub fn lipschitz(&self) -> f64 {
        match self.f2 {
            F2::Zero => 0.0,
            F2::Linear { lipschitz } | F2::Affine { lipschitz, .. } => lipschitz,
        }
    }

    /// Global Lipschitz estimate of `f`.
    pub fn combined_lipschitz(&self) -> f64 {
        self.f1_slope() + self.lipschitz()
    }
}

/// Built-in source functions, all products of one-dimensional factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceFunction {
    Zero,
    Constant {
        value: f64,
    },
    /// `prod_d sin(pi x_d)`.
    SinProduct,
    /// `x_1`.
    Linear,
    /// Cell values on an `n^k` grid (row-major, axis 0 slowest).
    UserGrid {
        n: usize,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// `g_n(x) = g(kappa_n(x))`.
    Pointwise,
    /// Cell averages.
    #[default]
    CellAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub function: SourceFunction,
    #[serde(default)]
    pub projection: Projection,
}

impl SourceSpec {
    pub fn zero() -> Self {
        SourceSpec { function: SourceFunction::Zero, projection: Projection::CellAverage }
    }

    pub fn new(function: SourceFunction, projection: Projection) -> Self {
        SourceSpec { function, projection }
    }

    /// Point evaluation on `D`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.function {
            SourceFunction::Zero => 0.0,
            SourceFunction::Constant { value } => *value,
            SourceFunction::SinProduct => x.iter().map(|&xd| (PI * xd).sin()).product(),
            SourceFunction::Linear => x[0],
            SourceFunction::UserGrid { n, values } => {
                let grid = GridSpec::new(x.len(), *n).expect("validated user grid");
                values[grid.cell_flat(&grid.locate(x))]
            }
        }
    }

    /// One-dimensional factor along `axis`, for separable builtins.
    fn factor(&self, axis: usize, t: f64) -> f64 {
        match &self.function {
            SourceFunction::Zero => 0.0,
            SourceFunction::Constant { value } => {
                if axis == 0 {
                    *value
                } else {
                    1.0
                }
            }
            SourceFunction::SinProduct => (PI * t).sin(),
            SourceFunction::Linear => {
                if axis == 0 {
                    t
                } else {
                    1.0
                }
            }
            SourceFunction::UserGrid { .. } => unreachable!("user grids are not separable"),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match &self.function {
            SourceFunction::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidParameter("source constant must be finite".into()))
            }
            SourceFunction::UserGrid { n, values } => {
                let grid = GridSpec::new(k, *n)?;
                if values.len() != grid.num_cells() {
                    return Err(Error::GridMismatch(format!(
                        "user source has {} values, expected {}",
                        values.len(),
                        grid.num_cells()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("user source values must be finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

const GAUSS_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Gauss-Legendre average of `f` over `[a, b]`.
fn gauss_average(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GAUSS_NODES.iter().zip(GAUSS_WEIGHTS).map(|(t, w)| 0.5 * w * f(mid + half * t)).sum()
}

/// `g_n` on all `n^k` cells of `grid`.
pub fn project_source(g: &SourceSpec, grid: &GridSpec) -> Result<Vec<f64>> {
    g.validate(grid.k())?;
    let n = grid.n();
    let k = grid.k();
    if let SourceFunction::UserGrid { n: ng, values } = &g.function {
        let src = GridSpec::new(k, *ng)?;
        return match g.projection {
            Projection::Pointwise => Ok((0..grid.num_cells())
                .map(|flat| {
                    let corner: Vec<f64> = grid.cell_multi(flat).iter().map(|&j| j as f64 / n as f64).collect();
                    values[src.cell_flat(&src.locate(&corner))]
                })
                .collect()),
            Projection::CellAverage => {
                if ng % n == 0 {
                    let sample = NoiseSample {
                        grid: src,
                        h: crate::rates::HurstVector::uniform(k, 0.5)?,
                        increments: values.clone(),
                        seed: 0,
                        stream_id: 0,
                        replicate: 0,
                    };
                    let vol_ratio = ((ng / n) as f64).powi(k as i32);
                    let sums = crate::noise::aggregate(&sample, *grid)?;
                    Ok(sums.increments.into_iter().map(|s| s / vol_ratio).collect())
                } else if n.is_multiple_of(*ng) {
                    Ok((0..grid.num_cells())
                        .map(|flat| {
                            let fine = grid.cell_multi(flat);
                            let coarse: Vec<usize> = fine.iter().map(|&j| j / (n / ng)).collect();
                            values[src.cell_flat(&coarse)]
                        })
                        .collect())
                } else {
                    Err(Error::NonDivisibleResolution { fine: n.max(*ng), coarse: n.min(*ng) })
                }
            }
        };
    }
    let axis_values: Vec<Vec<f64>> = (0..k)
        .map(|d| {
            (0..n)
                .map(|j| {
                    let (a, b) = grid.cell_interval(j);
                    match g.projection {
                        Projection::Pointwise => g.factor(d, a),
                        Projection::CellAverage => gauss_average(|t| g.factor(d, t), a, b),
                    }
                })
                .collect()
        })
        .collect();
    Ok((0..grid.num_cells())
        .map(|flat| grid.cell_multi(flat).iter().enumerate().map(|(d, &j)| axis_values[d][j]).product())
        .collect())
}

/// `||g - g_n||_{L^p(D)}` by Gauss quadrature inside each cell.
pub fn source_error_norm(g: &SourceSpec, grid: &GridSpec, p: f64) -> Result<f64> {
    let gn = project_source(g, grid)?;
    let k = grid.k();
    let q = GAUSS_NODES.len();
    let local = GridSpec::new(k, q)?;
    let h = grid.h();
    let mut total = 0.0;
    for (flat, gv) in gn.iter().enumerate() {
        let j = grid.cell_multi(flat);
        for node in 0..local.num_cells() {
            let idx = local.cell_multi(node);
            let mut w = 1.0;
            let x: Vec<f64> = idx
                .iter()
                .zip(&j)
                .map(|(&l, &jd)| {
                    w *= 0.5 * GAUSS_WEIGHTS[l];
                    h * (jd as f64 + 0.5 + 0.5 * GAUSS_NODES[l])
                })
                .collect();
            total += w * (g.eval(&x) - gv).abs().powf(p);
        }
    }
    Ok((total * grid.cell_volume()).powf(1.0 / p))
}

/// Restriction of cell data to the interior nodes owning the cells.
pub fn cells_to_interior(grid: &GridSpec, cells: &[f64]) -> LatticeField {
    let values = (0..grid.num_interior()).map(|f| cells[grid.interior_to_cell(f)]).collect();
    LatticeField { grid: *grid, values }
}

/// Right-hand side `g_n + n^k B` on the interior nodes.
pub fn forcing(noise: &NoiseSample, g: &SourceSpec) -> Result<LatticeField> {
    let grid = noise.grid;
    let gn = project_source(g, &grid)?;
    let scale = 1.0 / grid.cell_volume();
    let cells: Vec<f64> = gn.iter().zip(&noise.increments).map(|(gv, b)| gv + scale * b).collect();
    Ok(cells_to_interior(&grid, &cells))
}

/// `J(x) = int_D G_{D,n}(x, y) dB^H(y)` at the interior nodes, via one
/// linear solve with right-hand side `n^k B`.
pub fn stochastic_convolution(
    noise: &NoiseSample,
    plan: &SpectralPlan,
    mollifier: Option<&MollifierTable>,
) -> Result<LatticeField> {
    let grid = noise.grid;
    if grid != plan.grid() {
        return Err(Error::GridMismatch("noise and plan grids differ".into()));
    }
    let scale = 1.0 / grid.cell_volume();
    let cells: Vec<f64> = noise.increments.iter().map(|b| scale * b).collect();
    plan.solve_linear(&cells_to_interior(&grid, &cells), mollifier)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    /// Fixed relaxation; `None` picks it from the spectrum and `f`.
    pub relaxation: Option<f64>,
    pub initial: Option<LatticeField>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tolerance: 1e-10, max_iter: 10_000, relaxation: None, initial: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: LatticeField,
    pub iterations: usize,
    /// Sup norm of the last iterate update.
    pub final_residual_sup: f64,
    pub converged: bool,
    pub relaxation: f64,
    /// Sup norm of every update, in order.
    pub update_history: Vec<f64>,
    /// `L * K~` with `K~ = sup_x int |G_{D,n}(x, y)| dy`; plain scheme only.
    pub lipschitz_k_tilde: Option<f64>,
    pub warnings: Vec<String>,
}

/// Key/value summary of a [`SolveReport`] without the field itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub n: usize,
    pub k: usize,
    pub iterations: usize,
    pub final_residual_sup: f64,
    pub converged: bool,
    pub relaxation: f64,
    pub solution_sup: f64,
    pub lipschitz_k_tilde: Option<f64>,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            n: self.solution.grid.n(),
            k: self.solution.grid.k(),
            iterations: self.iterations,
            final_residual_sup: self.final_residual_sup,
            converged: self.converged,
            relaxation: self.relaxation,
            solution_sup: self.solution.sup_norm(),
            lipschitz_k_tilde: self.lipschitz_k_tilde,
            warnings: self.warnings.clone(),
        }
    }
}

/// Relaxation that centres the spectrum of the linearised iteration.
///
/// With `f' in [-L, s]` the map `u -> A^{-1} f(u)` has linearised spectrum in
/// `[-s/Lambda, L/Lambda]` (`Lambda` the smallest `|lambda_beta|`), so the
/// damped map contracts for `omega = 2 Lambda / (2 Lambda + s - L)`, capped at 1.
pub fn default_relaxation(f: &NonlinearitySpec, plan: &SpectralPlan) -> f64 {
    let lam = plan.min_abs_eigenvalue();
    let denom = 2.0 * lam + f.f1_slope() - f.lipschitz();
    if denom <= 0.0 {
        1.0
    } else {
        (2.0 * lam / denom).min(1.0)
    }
}

/// Solves `A u = f(u) + forcing` (or the mollified system) by damped Picard
/// iteration `u <- (1 - omega) u + omega A^{-1} (f(u) + forcing)`.
pub fn solve_system(
    forcing: &LatticeField,
    f: &NonlinearitySpec,
    plan: &SpectralPlan,
    mollifier: Option<&MollifierTable>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    f.validate()?;
    let grid = plan.grid();
    if forcing.grid != grid {
        return Err(Error::GridMismatch("forcing and plan grids differ".into()));
    }
    if !(opts.tolerance > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter("tolerance must be > 0 and max_iter >= 1".into()));
    }
    let four_k = 4.0 * grid.k() as f64;
    let mut warnings = Vec::new();
    if f.lipschitz() >= four_k {
        return Err(Error::InvalidParameter(format!(
            "Lipschitz constant L = {} of f2 must be below 4k = {four_k}",
            f.lipschitz()
        )));
    }
    if f.combined_lipschitz() >= four_k {
        warnings.push(format!(
            "combined Lipschitz estimate {} is not below 4k = {four_k}; only the f2 part satisfies the admission bound",
            f.combined_lipschitz()
        ));
    }
    let omega = match opts.relaxation {
        Some(w) if w > 0.0 && w <= 1.0 => w,
        Some(w) => return Err(Error::InvalidParameter(format!("relaxation {w} must lie in (0, 1]"))),
        None => default_relaxation(f, plan),
    };
    let lipschitz_k_tilde = if mollifier.is_none() && f.lipschitz() > 0.0 {
        // G_{D,n} <= 0 entrywise, so int |G(x, .)| = -(A^{-1} 1)(x)
        let ones = LatticeField { grid, values: vec![1.0; grid.num_interior()] };
        Some(f.lipschitz() * plan.solve_linear(&ones, None)?.sup_norm())
    } else {
        None
    };

    let multipliers = plan.inverse_multipliers(mollifier);
    let mut u = match &opts.initial {
        Some(u0) if u0.grid == grid => u0.clone(),
        Some(_) => return Err(Error::GridMismatch("initial guess grid differs".into())),
        None => LatticeField::zeros(grid),
    };
    let mut history = Vec::new();
    let mut rhs = LatticeField::zeros(grid);
    for it in 1..=opts.max_iter {
        for ((r, ui), fo) in rhs.values.iter_mut().zip(&u.values).zip(&forcing.values) {
            *r = f.eval(*ui) + fo;
        }
        let v = plan.apply_multipliers(&rhs, &multipliers);
        let mut update: f64 = 0.0;
        for (ui, vi) in u.values.iter_mut().zip(&v.values) {
            let next = (1.0 - omega) * *ui + omega * vi;
            update = update.max((next - *ui).abs());
            *ui = next;
        }
        if !update.is_finite() {
            return Err(Error::Divergence(format!("non-finite iterate at iteration {it}")));
        }
        history.push(update);
        if update < opts.tolerance {
            return Ok(SolveReport {
                solution: u,
                iterations: it,
                final_residual_sup: update,
                converged: true,
                relaxation: omega,
                update_history: history,
                lipschitz_k_tilde,
                warnings,
            });
        }
    }
    Ok(SolveReport {
        solution: u,
        iterations: opts.max_iter,
        final_residual_sup: *history.last().expect("max_iter >= 1"),
        converged: false,
        relaxation: omega,
        update_history: history,
        lipschitz_k_tilde,
        warnings,
    })
}

/// Solves the lattice scheme for one noise draw and source.
pub fn solve_scheme(
    noise: &NoiseSample,
    g: &SourceSpec,
    f: &NonlinearitySpec,
    plan: &SpectralPlan,
    mollifier: Option<&MollifierTable>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if noise.grid != plan.grid() {
        return Err(Error::GridMismatch("noise and plan grids differ".into()));
    }
    solve_system(&forcing(noise, g)?, f, plan, mollifier, opts)
}

/// Largest grid accepted by [`mild_residual`], which builds the dense kernel.
pub const MILD_RESIDUAL_MAX_NODES: usize = 4096;

/// `sup_i |u(x_i) - [int G f(u) + int G g_n + int G dB](x_i)|` with the kernel
/// integrals summed cell by cell against the explicitly assembled kernel.
pub fn mild_residual(
    u: &LatticeField,
    noise: &NoiseSample,
    g: &SourceSpec,
    f: &NonlinearitySpec,
    plan: &SpectralPlan,
    mollifier: Option<&MollifierTable>,
) -> Result<f64> {
    let grid = plan.grid();
    if u.grid != grid || noise.grid != grid {
        return Err(Error::GridMismatch("field, noise and plan grids must agree".into()));
    }
    let size = grid.num_interior();
    if size > MILD_RESIDUAL_MAX_NODES {
        return Err(Error::InvalidParameter(format!(
            "mild residual uses a dense kernel; {size} nodes exceeds {MILD_RESIDUAL_MAX_NODES}"
        )));
    }
    let kernel = green_discrete_matrix(plan, mollifier);
    let gn = project_source(g, &grid)?;
    let vol = grid.cell_volume();
    // cells on the lower faces carry G = 0 and drop out
    let weights: Vec<f64> = (0..size)
        .map(|j| {
            let cell = grid.interior_to_cell(j);
            vol * (f.eval(u.values[j]) + gn[cell]) + noise.increments[cell]
        })
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..size {
        let row = &kernel[i * size..(i + 1) * size];
        let rhs: f64 = row.iter().zip(&weights).map(|(a, b)| a * b).sum();
        worst = worst.max((u.values[i] - rhs).abs());
    }
    Ok(worst)
}
