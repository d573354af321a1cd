//! Monte Carlo and deterministic studies: isometry, Hölder regularity of the
//! stochastic convolution, kernel discrepancy rates and scheme convergence.
//!
//! Every study is a pure function of its [`StudyConfig`]. Replicates run in
//! parallel but are reduced in replicate order, so results do not depend on
//! the number of worker threads.

mod convergence;
mod holder;
mod isometry;
mod kernel_rate;
mod regression;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::mollifier::MollifierTable;
use crate::rates::{
    check_hypothesis, smoothing_parameters, smoothing_parameters_with_delta, HurstVector, SmoothingParameters,
    DEFAULT_SAFETY,
};
use crate::solver::{NonlinearitySpec, SourceSpec};

pub use convergence::{
    almost_sure_rate_probe, cell_constant_distance, convergence_errors, run_convergence_study, AlmostSureReport,
    ErrorTable,
};
pub use holder::{holder_variance, run_holder_study};
pub use isometry::{rectangle_indicator, run_isometry_study, IsometryPair, IsometryReport};
pub use kernel_rate::{default_b_max, run_kernel_rate_study};
pub use regression::{fit_log_log, LogLogFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Isometry,
    Holder,
    KernelRate,
    Convergence,
    AlmostSure,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::Isometry => "isometry",
            StudyKind::Holder => "holder",
            StudyKind::KernelRate => "kernel_rate",
            StudyKind::Convergence => "convergence",
            StudyKind::AlmostSure => "almost_sure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[default]
    Plain,
    Smoothed,
}

/// `(delta, mu, safety)` of the smoothed scheme. Missing values are filled
/// in from the rate-optimising choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub delta: Option<f64>,
    pub mu: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { delta: None, mu: None, safety: DEFAULT_SAFETY }
    }
}

impl SmoothingConfig {
    pub fn resolve(&self, h: &HurstVector) -> Result<SmoothingParameters> {
        let mut params = match self.delta {
            Some(delta) => smoothing_parameters_with_delta(h, delta, self.safety)?,
            None => smoothing_parameters(h, self.safety)?,
        };
        if let Some(mu) = self.mu {
            let upper = params.mu_upper(h.dim());
            if !(mu > 0.0 && mu < upper) {
                return Err(Error::InvalidParameter(format!("mu = {mu} must lie in (0, {upper})")));
            }
            params.mu = mu;
        }
        Ok(params)
    }
}

/// One-sided acceptance thresholds on a study outcome.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acceptance {
    /// Pass requires `slope <= max_slope` (decay studies).
    pub max_slope: Option<f64>,
    /// Pass requires `slope >= min_slope` (Hölder studies).
    pub min_slope: Option<f64>,
    /// Pass requires every standardized deviation `<= max_z` (isometry).
    pub max_z: Option<f64>,
}

impl Acceptance {
    fn check_slope(&self, slope: f64) -> bool {
        self.max_slope.is_none_or(|m| slope <= m) && self.min_slope.is_none_or(|m| slope >= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub h: HurstVector,
    /// Ascending powers of two.
    pub resolutions: Vec<usize>,
    /// Resolution of the coupled reference solve, a multiple of every entry
    /// of `resolutions`. Holder and isometry studies run on this grid.
    pub reference_resolution: usize,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default = "SourceSpec::zero")]
    pub source: SourceSpec,
    #[serde(default)]
    pub scheme: SchemeKind,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Drive every solve with zero noise (controls and smoke tests).
    #[serde(default)]
    pub zero_noise: bool,
    /// Overrides the exponent used by the almost-sure probe.
    #[serde(default)]
    pub nu_override: Option<f64>,
    /// `b_max = max(n, ceil(b_max_scale / eps))` for kernel-rate studies.
    #[serde(default = "default_b_max_scale")]
    pub b_max_scale: f64,
    #[serde(default)]
    pub acceptance: Acceptance,
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    10_000
}

fn default_b_max_scale() -> f64 {
    16.0
}

impl StudyConfig {
    /// A configuration with library defaults for everything but the essentials.
    pub fn new(
        kind: StudyKind,
        h: HurstVector,
        resolutions: Vec<usize>,
        reference_resolution: usize,
        replicates: usize,
        seed: u64,
    ) -> Self {
        let scheme = if h.dim() >= 4 { SchemeKind::Smoothed } else { SchemeKind::Plain };
        StudyConfig {
            kind,
            h,
            resolutions,
            reference_resolution,
            replicates,
            seed,
            nonlinearity: NonlinearitySpec::default(),
            source: SourceSpec::zero(),
            scheme,
            smoothing: SmoothingConfig::default(),
            tolerance: default_tolerance(),
            max_iter: default_max_iter(),
            zero_noise: false,
            nu_override: None,
            b_max_scale: default_b_max_scale(),
            acceptance: Acceptance::default(),
        }
    }

    pub fn k(&self) -> usize {
        self.h.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if !check_hypothesis(&self.h) {
            return Err(Error::HypothesisFails(format!("sum h = {} with k = {k}", self.h.sum())));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        let needs_resolutions =
            matches!(self.kind, StudyKind::KernelRate | StudyKind::Convergence | StudyKind::AlmostSure);
        if needs_resolutions && self.resolutions.is_empty() {
            return Err(Error::InvalidParameter("resolutions must not be empty".into()));
        }
        let mut prev = 1;
        for &n in &self.resolutions {
            if !n.is_power_of_two() || n < 2 {
                return Err(Error::InvalidParameter(format!("resolution {n} is not a power of two >= 2")));
            }
            if n <= prev {
                return Err(Error::InvalidParameter("resolutions must be strictly ascending".into()));
            }
            prev = n;
            if self.kind != StudyKind::KernelRate && !self.reference_resolution.is_multiple_of(n) {
                return Err(Error::NonDivisibleResolution { fine: self.reference_resolution, coarse: n });
            }
        }
        GridSpec::new(k, self.reference_resolution)?;
        match (self.scheme, k >= 4) {
            (SchemeKind::Plain, true) => {
                return Err(Error::InvalidParameter(format!("k = {k} requires the smoothed scheme")));
            }
            (SchemeKind::Smoothed, false) => return Err(Error::SmoothingNotApplicable { k }),
            (SchemeKind::Smoothed, true) => {
                self.smoothing.resolve(&self.h)?;
            }
            (SchemeKind::Plain, false) => {}
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("tolerance must be > 0 and max_iter >= 1".into()));
        }
        if !(self.b_max_scale > 0.0) {
            return Err(Error::InvalidParameter("b_max_scale must be > 0".into()));
        }
        self.nonlinearity.validate()?;
        self.source.validate(k)?;
        Ok(())
    }

    /// Smoothing parameters when the smoothed scheme is selected.
    pub fn smoothing_parameters(&self) -> Result<Option<SmoothingParameters>> {
        match self.scheme {
            SchemeKind::Plain => Ok(None),
            SchemeKind::Smoothed => self.smoothing.resolve(&self.h).map(Some),
        }
    }

    /// `eps(n)` for the smoothed scheme.
    pub fn epsilon(&self, n: usize) -> Result<Option<f64>> {
        Ok(self.smoothing_parameters()?.map(|p| p.epsilon(n)))
    }

    /// Mollifier table for grid `grid`, if the scheme is smoothed.
    pub fn mollifier(&self, grid: &GridSpec) -> Result<Option<MollifierTable>> {
        self.epsilon(grid.n())?.map(|eps| MollifierTable::new(eps, grid)).transpose()
    }
}

/// Mean and standard error of the error at one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    /// Separation for Hölder studies; unused otherwise.
    pub abscissa: f64,
    pub epsilon: Option<f64>,
    pub replicates: usize,
    pub error_mean: f64,
    pub error_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub kind: StudyKind,
    pub h: HurstVector,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    /// Rate predicted by the theory (`nu`, `delta/2` or `2 lambda`).
    pub theoretical_rate: f64,
    /// The coarsest point was excluded from the fit as pre-asymptotic.
    pub dropped_coarsest: bool,
    /// All errors vanished; no regression was made.
    pub exact: bool,
    pub acceptance: Acceptance,
    pub pass: bool,
}

impl RateEstimate {
    fn from_points(
        kind: StudyKind,
        h: &HurstVector,
        points: Vec<RatePoint>,
        theoretical_rate: f64,
        acceptance: Acceptance,
    ) -> Result<Self> {
        if points.iter().all(|p| p.error_mean == 0.0) {
            return Ok(RateEstimate {
                kind,
                h: h.clone(),
                points,
                slope: f64::NAN,
                slope_se: 0.0,
                intercept: f64::NAN,
                theoretical_rate,
                dropped_coarsest: false,
                exact: true,
                acceptance,
                pass: true,
            });
        }
        let xs: Vec<f64> = points.iter().map(|p| p.abscissa).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.error_mean).collect();
        let fit = regression::fit_with_trim(&xs, &ys)?;
        let pass = acceptance.check_slope(fit.fit.slope);
        Ok(RateEstimate {
            kind,
            h: h.clone(),
            points,
            slope: fit.fit.slope,
            slope_se: fit.fit.slope_se,
            intercept: fit.fit.intercept,
            theoretical_rate,
            dropped_coarsest: fit.dropped_first,
            exact: false,
            acceptance,
            pass,
        })
    }

    /// `<study> slope=<s>±<se> target=<t> PASS|FAIL`.
    pub fn summary_line(&self) -> String {
        let target = match (self.acceptance.max_slope, self.acceptance.min_slope) {
            (Some(m), _) => format!("<={m}"),
            (None, Some(m)) => format!(">={m}"),
            (None, None) => format!("{}", self.theoretical_rate),
        };
        format!(
            "{} slope={:.4}±{:.4} target={} {}",
            self.kind.name(),
            self.slope,
            self.slope_se,
            target,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }

    /// Columns `study_kind,k,h1..hk,n,epsilon,replicates,error_mean,error_se`
    /// (plus `separation` for Hölder studies).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.h.dim();
        let hcols: Vec<String> = (1..=k).map(|d| format!("h{d}")).collect();
        write!(out, "study_kind,k,{},n,epsilon,replicates,error_mean,error_se", hcols.join(","))?;
        let holder = self.kind == StudyKind::Holder;
        if holder {
            write!(out, ",separation")?;
        }
        writeln!(out)?;
        let hvals: Vec<String> = self.h.as_slice().iter().map(|v| format!("{v:.16e}")).collect();
        for p in &self.points {
            let eps = p.epsilon.map(|e| format!("{e:.16e}")).unwrap_or_default();
            write!(
                out,
                "{},{},{},{},{},{},{:.16e},{:.16e}",
                self.kind.name(),
                k,
                hvals.join(","),
                p.n,
                eps,
                p.replicates,
                p.error_mean,
                p.error_se
            )?;
            if holder {
                write!(out, ",{:.16e}", p.abscissa)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "study_kind": self.kind.name(),
            "k": self.h.dim(),
            "h": self.h.as_slice(),
            "slope": finite_or_null(self.slope),
            "slope_se": finite_or_null(self.slope_se),
            "intercept": finite_or_null(self.intercept),
            "theoretical_rate": self.theoretical_rate,
            "dropped_coarsest": self.dropped_coarsest,
            "exact": self.exact,
            "pass": self.pass,
        })
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}
