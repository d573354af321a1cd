use rand::Rng;

use super::{mean_and_se, RateEstimate, RatePoint, StudyConfig, StudyKind};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::{discrete_weights, green_discrete_row_with};
use crate::noise::{covariance_form, replicate_rng};
use crate::rates::{holder_exponent_sup, HurstVector};
use crate::spectral::SpectralPlan;

const DIRECTION_STREAM: u64 = 2;

/// Exact `Var(J(x) - J(z))` for nodes `x`, `z` of the plan's grid, where
/// `J = int G_{D,n}(., y) dB^H(y)` and `weights` come from [`discrete_weights`].
pub fn holder_variance(
    h: &HurstVector,
    plan: &SpectralPlan,
    weights: &[f64],
    x_node: &[usize],
    z_node: &[usize],
) -> f64 {
    let grid = plan.grid();
    let gx = green_discrete_row_with(plan, weights, x_node);
    let gz = green_discrete_row_with(plan, weights, z_node);
    let diff: Vec<f64> = gx.iter().zip(&gz).map(|(a, b)| a - b).collect();
    covariance_form(h, &grid, &diff, &diff)
}

/// Regresses the exact variance of `J(x) - J(z)` on `|x - z|` for
/// separations `1/r`, `r` in `resolutions`, on the grid of
/// `reference_resolution`. Each replicate draws a base point in
/// `[1/4, 1/2]^k` and a direction in the positive orthant; variances are
/// averaged over replicates.
pub fn run_holder_study(cfg: &StudyConfig) -> Result<RateEstimate> {
    cfg.validate()?;
    if cfg.kind != StudyKind::Holder {
        return Err(Error::InvalidParameter("not a holder configuration".into()));
    }
    let k = cfg.k();
    let n = cfg.reference_resolution;
    if cfg.resolutions.iter().any(|&r| r < 4 || r > n) {
        return Err(Error::InvalidParameter("separations 1/r need 4 <= r <= reference_resolution".into()));
    }
    let grid = GridSpec::new(k, n)?;
    let plan = SpectralPlan::new(grid);
    let mollifier = cfg.mollifier(&grid)?;
    let weights = discrete_weights(&plan, mollifier.as_ref());

    let mut variances = vec![Vec::with_capacity(cfg.replicates); cfg.resolutions.len()];
    let mut separations = vec![Vec::with_capacity(cfg.replicates); cfg.resolutions.len()];
    for rep in 0..cfg.replicates as u64 {
        let mut rng = replicate_rng(cfg.seed, DIRECTION_STREAM, rep);
        let base: Vec<f64> = (0..k).map(|_| rng.random_range(0.25..0.5)).collect();
        let mut dir: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|d| *d /= norm);
        let x_node: Vec<usize> = base.iter().map(|b| (b * n as f64).round() as usize).collect();
        for (slot, &r) in cfg.resolutions.iter().enumerate() {
            let step = n as f64 / r as f64;
            let z_node: Vec<usize> = x_node.iter().zip(&dir).map(|(&x, d)| x + (step * d).round() as usize).collect();
            let sep =
                x_node.iter().zip(&z_node).map(|(&a, &b)| ((b - a) as f64 / n as f64).powi(2)).sum::<f64>().sqrt();
            variances[slot].push(holder_variance(&cfg.h, &plan, &weights, &x_node, &z_node));
            separations[slot].push(sep);
        }
    }
    let epsilon = cfg.epsilon(n)?;
    let points = cfg
        .resolutions
        .iter()
        .enumerate()
        .map(|(slot, &r)| {
            let (error_mean, error_se) = mean_and_se(&variances[slot]);
            let (sep, _) = mean_and_se(&separations[slot]);
            RatePoint { n: r, abscissa: sep, epsilon, replicates: cfg.replicates, error_mean, error_se }
        })
        .collect();
    let target = 2.0 * holder_exponent_sup(&cfg.h)?;
    RateEstimate::from_points(StudyKind::Holder, &cfg.h, points, target, cfg.acceptance)
}
