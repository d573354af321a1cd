use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `log y = intercept + slope log x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    /// Residual standard error `sqrt(SSR / (m - 2))`.
    pub sigma: f64,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares on `(ln x, ln y)`; needs at least three points
/// with positive coordinates.
pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidParameter(format!("log-log fit needs >= 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("log-log fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - intercept - slope * x).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let sigma = (ssr / (m - 2.0)).sqrt();
    Ok(LogLogFit { slope, slope_se: sigma / sxx.sqrt(), intercept, sigma, residuals })
}

pub(crate) struct TrimmedFit {
    pub fit: LogLogFit,
    pub dropped_first: bool,
}

/// Fits, then drops the first (coarsest) point when it lies more than three
/// residual standard errors off the fit of the remaining points, provided at
/// least three points remain.
pub(crate) fn fit_with_trim(xs: &[f64], ys: &[f64]) -> Result<TrimmedFit> {
    let fit = fit_log_log(xs, ys)?;
    if xs.len() >= 4 {
        let rest = fit_log_log(&xs[1..], &ys[1..])?;
        let predicted = rest.intercept + rest.slope * xs[0].ln();
        let tolerance = 3.0 * rest.sigma.max(1e-12);
        if (ys[0].ln() - predicted).abs() > tolerance {
            return Ok(TrimmedFit { fit: rest, dropped_first: true });
        }
    }
    Ok(TrimmedFit { fit, dropped_first: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let xs = [4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let fit = fit_log_log(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.slope_se < 1e-12);
        assert!(fit_log_log(&xs[..2], &ys[..2]).is_err());
    }

    #[test]
    fn trims_only_an_outlying_coarsest_point() {
        let xs = [4.0, 8.0, 16.0, 32.0, 64.0];
        let mut ys: Vec<f64> = xs.iter().map(|x: &f64| x.powf(-0.5)).collect();
        assert!(!fit_with_trim(&xs, &ys).unwrap().dropped_first);
        ys[0] *= 5.0;
        let t = fit_with_trim(&xs, &ys).unwrap();
        assert!(t.dropped_first);
        assert!((t.fit.slope + 0.5).abs() < 0.05);
    }
}
