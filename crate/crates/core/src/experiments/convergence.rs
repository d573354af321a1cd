use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_log_log, mean_and_se, RateEstimate, RatePoint, StudyConfig, StudyKind};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::mollifier::MollifierTable;
use crate::noise::{aggregate, NoiseSample, NoiseSampler};
use crate::rates::convergence_rate_sup;
use crate::solver::{forcing, solve_system, SolveOptions};
use crate::spectral::{LatticeField, SpectralPlan};

/// Per-replicate `L^2(D)` errors, `errors[replicate][resolution]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub resolutions: Vec<usize>,
    pub epsilons: Vec<Option<f64>>,
    pub errors: Vec<Vec<f64>>,
}

struct Level {
    plan: SpectralPlan,
    mollifier: Option<MollifierTable>,
}

impl Level {
    fn new(cfg: &StudyConfig, n: usize) -> Result<Self> {
        let grid = GridSpec::new(cfg.k(), n)?;
        Ok(Level { mollifier: cfg.mollifier(&grid)?, plan: SpectralPlan::new(grid) })
    }

    fn solve(&self, cfg: &StudyConfig, noise: &NoiseSample, replicate: usize) -> Result<LatticeField> {
        let opts = SolveOptions { tolerance: cfg.tolerance, max_iter: cfg.max_iter, ..SolveOptions::default() };
        let rhs = forcing(noise, &cfg.source)?;
        let report = solve_system(&rhs, &cfg.nonlinearity, &self.plan, self.mollifier.as_ref(), &opts)
            .map_err(|e| Error::Replicate { replicate, message: format!("n = {}: {e}", self.plan.grid().n()) })?;
        if !report.converged {
            return Err(Error::Replicate {
                replicate,
                message: format!(
                    "n = {}: no convergence after {} iterations (update {:e})",
                    self.plan.grid().n(),
                    report.iterations,
                    report.final_residual_sup
                ),
            });
        }
        Ok(report.solution)
    }
}

/// `||u_fine - u_coarse||_{L^2(D)}` of the cell-constant extensions, where
/// node `i` carries the value of cell `i` and lower-face cells are zero.
pub fn cell_constant_distance(fine: &LatticeField, coarse: &LatticeField) -> Result<f64> {
    let ratio = fine.grid.refinement_factor(&coarse.grid)?;
    let fg = fine.grid;
    let cg = coarse.grid;
    let mut total = 0.0;
    for flat in 0..fg.num_cells() {
        let j = fg.cell_multi(flat);
        let uf = fg.cell_to_interior(flat).map_or(0.0, |i| fine.values[i]);
        let jc: Vec<usize> = j.iter().map(|&jd| jd / ratio).collect();
        let uc = cg.cell_to_interior(cg.cell_flat(&jc)).map_or(0.0, |i| coarse.values[i]);
        total += (uf - uc).powi(2);
    }
    Ok((total * fg.cell_volume()).sqrt())
}

/// Runs every replicate: one noise draw on the reference grid, aggregated to
/// each study resolution, all solves compared against the reference solve.
pub fn convergence_errors(cfg: &StudyConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let k = cfg.k();
    let ref_grid = GridSpec::new(k, cfg.reference_resolution)?;
    let reference = Level::new(cfg, cfg.reference_resolution)?;
    let levels: Vec<Level> = cfg.resolutions.iter().map(|&n| Level::new(cfg, n)).collect::<Result<_>>()?;
    let sampler = if cfg.zero_noise { None } else { Some(NoiseSampler::new(&cfg.h, ref_grid)?) };

    let results: Vec<Result<Vec<f64>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let fine = match &sampler {
                Some(s) => s.sample(cfg.seed, 0, rep as u64),
                None => NoiseSample::zeros(&cfg.h, ref_grid),
            };
            let u_ref = reference.solve(cfg, &fine, rep)?;
            levels
                .iter()
                .map(|level| {
                    let coarse = aggregate(&fine, level.plan.grid())?;
                    let u = level.solve(cfg, &coarse, rep)?;
                    cell_constant_distance(&u_ref, &u)
                })
                .collect()
        })
        .collect();
    let errors = results.into_iter().collect::<Result<Vec<_>>>()?;
    let epsilons = cfg.resolutions.iter().map(|&n| cfg.epsilon(n)).collect::<Result<_>>()?;
    Ok(ErrorTable { resolutions: cfg.resolutions.clone(), epsilons, errors })
}

impl ErrorTable {
    fn column(&self, slot: usize) -> Vec<f64> {
        self.errors.iter().map(|row| row[slot]).collect()
    }

    pub fn points(&self) -> Vec<RatePoint> {
        self.resolutions
            .iter()
            .enumerate()
            .map(|(slot, &n)| {
                let (error_mean, error_se) = mean_and_se(&self.column(slot));
                RatePoint {
                    n,
                    abscissa: n as f64,
                    epsilon: self.epsilons[slot],
                    replicates: self.errors.len(),
                    error_mean,
                    error_se,
                }
            })
            .collect()
    }
}

/// Mean `L^2(D)` error against the coupled reference, regressed on `n`.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<RateEstimate> {
    if cfg.kind != StudyKind::Convergence {
        return Err(Error::InvalidParameter("not a convergence configuration".into()));
    }
    let table = convergence_errors(cfg)?;
    RateEstimate::from_points(
        StudyKind::Convergence,
        &cfg.h,
        table.points(),
        convergence_rate_sup(&cfg.h)?,
        cfg.acceptance,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostSureReport {
    pub nu: f64,
    /// `xi = max_n error_n n^nu`, one per replicate.
    pub xi: Vec<f64>,
    pub median: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
    /// `(n, mean over replicates of error_n n^nu)`.
    pub scaled_means: Vec<(usize, f64)>,
    /// Log-log slope of `scaled_means`; positive when `nu` exceeds the
    /// empirical rate.
    pub growth_slope: Option<f64>,
    pub all_finite: bool,
}

/// Linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical distribution of `xi = max_n error_n n^nu` across replicates,
/// with `nu` from the rates module unless overridden.
pub fn almost_sure_rate_probe(cfg: &StudyConfig) -> Result<AlmostSureReport> {
    let nu = match cfg.nu_override {
        Some(v) => v,
        None => convergence_rate_sup(&cfg.h)?,
    };
    let table = convergence_errors(cfg)?;
    let scale: Vec<f64> = table.resolutions.iter().map(|&n| (n as f64).powf(nu)).collect();
    let xi: Vec<f64> =
        table.errors.iter().map(|row| row.iter().zip(&scale).map(|(e, s)| e * s).fold(0.0, f64::max)).collect();
    let mut sorted = xi.clone();
    sorted.sort_by(f64::total_cmp);
    let scaled_means: Vec<(usize, f64)> =
        table.points().iter().zip(&scale).map(|(p, s)| (p.n, p.error_mean * s)).collect();
    let growth_slope = if scaled_means.len() >= 3 && scaled_means.iter().all(|(_, v)| *v > 0.0) {
        let xs: Vec<f64> = scaled_means.iter().map(|(n, _)| *n as f64).collect();
        let ys: Vec<f64> = scaled_means.iter().map(|(_, v)| *v).collect();
        Some(fit_log_log(&xs, &ys)?.slope)
    } else {
        None
    };
    Ok(AlmostSureReport {
        nu,
        all_finite: xi.iter().all(|v| v.is_finite()),
        median: quantile(&sorted, 0.5),
        q90: quantile(&sorted, 0.9),
        q99: quantile(&sorted, 0.99),
        max: sorted.last().copied().unwrap_or(f64::NAN),
        xi,
        scaled_means,
        growth_slope,
    })
}
