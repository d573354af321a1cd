use super::{RateEstimate, RatePoint, StudyConfig, StudyKind};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::kernel_discrepancy_l2;
use crate::mollifier::MollifierTable;
use crate::spectral::SpectralPlan;

/// `max(n, ceil(scale / eps))`: enough modes for `Psi_hat(eps beta)` to
/// have decayed far below the lattice terms.
pub fn default_b_max(n: usize, epsilon: f64, scale: f64) -> usize {
    ((scale / epsilon).ceil() as usize).max(n)
}

/// Kernel discrepancy across resolutions with `eps(n) = n^-mu`. For `k >= 4`
/// `(delta, mu)` come from the smoothing configuration; lower dimensions are
/// exploratory and need an explicit `mu`.
pub fn run_kernel_rate_study(cfg: &StudyConfig) -> Result<RateEstimate> {
    cfg.validate()?;
    if cfg.kind != StudyKind::KernelRate {
        return Err(Error::InvalidParameter("not a kernel_rate configuration".into()));
    }
    let k = cfg.k();
    let (mu, delta) = if k >= 4 {
        let p = cfg.smoothing.resolve(&cfg.h)?;
        (p.mu, p.delta)
    } else if k >= 2 {
        let mu = cfg
            .smoothing
            .mu
            .ok_or_else(|| Error::InvalidParameter("kernel_rate below k = 4 needs smoothing.mu".into()))?;
        (mu, cfg.smoothing.delta.unwrap_or(1.0))
    } else {
        return Err(Error::InvalidParameter("kernel_rate needs k >= 2".into()));
    };
    let mut points = Vec::with_capacity(cfg.resolutions.len());
    for &n in &cfg.resolutions {
        let eps = (n as f64).powf(-mu);
        let b_max = default_b_max(n, eps, cfg.b_max_scale);
        let plan = SpectralPlan::new(GridSpec::new(k, n)?);
        let table = MollifierTable::with_len(eps, b_max + 1)?;
        let report = kernel_discrepancy_l2(&plan, &table, b_max)?;
        points.push(RatePoint {
            n,
            abscissa: n as f64,
            epsilon: Some(eps),
            replicates: 0,
            error_mean: report.discrepancy,
            error_se: 0.0,
        });
    }
    RateEstimate::from_points(StudyKind::KernelRate, &cfg.h, points, delta / 2.0, cfg.acceptance)
}
