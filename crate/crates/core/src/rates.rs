//! Hurst parameters, the integrability hypotheses, and the theoretical
//! exponents that the experiments compare against.
//!
//! Every exponent below is the supremum (or closed endpoint) of an admissible
//! interval. Concrete interior values, needed to instantiate the smoothed
//! scheme, are obtained by shrinking with a safety factor `rho` in `(0, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default safety factor used to step strictly inside open intervals.
pub const DEFAULT_SAFETY: f64 = 0.98;

/// Hurst parameter vector `(h_1, ..., h_k)` with every `h_i` in `[1/2, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HurstVector(Vec<f64>);

impl HurstVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidParameter("Hurst vector must have k >= 1 entries".into()));
        }
        for (i, &hi) in h.iter().enumerate() {
            if !(0.5..1.0).contains(&hi) {
                return Err(Error::InvalidParameter(format!("h[{i}] = {hi} is outside [1/2, 1)")));
            }
        }
        Ok(HurstVector(h))
    }

    /// The same value on every axis.
    pub fn uniform(k: usize, h: f64) -> Result<Self> {
        Self::new(vec![h; k])
    }

    /// Parses a comma separated list such as `0.75,0.6`.
    pub fn parse(text: &str) -> Result<Self> {
        let values = text
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad Hurst entry {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Mixed-norm exponents `(1/h_1, ..., 1/h_k)` paired with kernels.
    pub fn kernel_exponents(&self) -> Vec<f64> {
        self.0.iter().map(|h| 1.0 / h).collect()
    }

    /// `p_0 = max_i 1/(1 - h_i)`, the exponent of the source approximation rate.
    pub fn source_exponent(&self) -> f64 {
        self.0.iter().map(|h| 1.0 / (1.0 - h)).fold(1.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for HurstVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        HurstVector::new(v)
    }
}

impl From<HurstVector> for Vec<f64> {
    fn from(h: HurstVector) -> Self {
        h.0
    }
}

impl std::fmt::Display for HurstVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|h| h.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Hypothesis (H): no extra condition for `k <= 3`, and `sum h_i > k - 2`
/// (strictly) for `k >= 4`.
pub fn check_hypothesis(h: &HurstVector) -> bool {
    let k = h.dim();
    k <= 3 || h.sum() > k as f64 - 2.0
}

/// The stronger hypothesis (H*): `sum h_i > k - 1` for `k >= 2`.
pub fn check_hypothesis_star(h: &HurstVector) -> bool {
    let k = h.dim();
    k == 1 || h.sum() > k as f64 - 1.0
}

fn require_hypothesis(h: &HurstVector) -> Result<()> {
    if check_hypothesis(h) {
        Ok(())
    } else {
        Err(Error::HypothesisFails(format!("sum h = {} is not > k - 2 = {}", h.sum(), h.dim() as f64 - 2.0)))
    }
}

/// `2 - k + sum h_i` before the cap at one.
pub fn holder_exponent_uncapped(h: &HurstVector) -> f64 {
    2.0 - h.dim() as f64 + h.sum()
}

/// Supremum of the admissible Hölder exponents of the kernel map
/// `x -> G(x, .)` in the `1/h` mixed norm.
pub fn holder_exponent_sup(h: &HurstVector) -> Result<f64> {
    require_hypothesis(h)?;
    if h.dim() == 1 {
        return Ok(1.0);
    }
    Ok(holder_exponent_uncapped(h).min(1.0))
}

/// Guaranteed convergence rate of the lattice schemes in `L^p(Omega; L^2(D))`.
///
/// `k = 1, 2` give `1/2`, `k = 3` gives `1/4`; for `k >= 4` the smoothed scheme
/// reaches `(2 - k + S) / (2 - k + 2S)` with `S = (sum h_i) ∧ (k - 1)`.
pub fn convergence_rate_sup(h: &HurstVector) -> Result<f64> {
    require_hypothesis(h)?;
    let k = h.dim();
    Ok(match k {
        1 | 2 => 0.5,
        3 => 0.25,
        _ => {
            let kf = k as f64;
            let s = h.sum().min(kf - 1.0);
            (2.0 - kf + s) / (2.0 - kf + 2.0 * s)
        }
    })
}

/// All exponents at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub lambda_sup: f64,
    pub nu_sup: f64,
    pub gamma_sup: f64,
    pub hypothesis_ok: bool,
    pub hypothesis_star_ok: bool,
}

/// Collects the exponent suprema. When (H) fails the exponents are reported
/// as `NaN` and `hypothesis_ok` is false.
pub fn exponent_report(h: &HurstVector) -> ExponentReport {
    let hypothesis_ok = check_hypothesis(h);
    let hypothesis_star_ok = check_hypothesis_star(h);
    if !hypothesis_ok {
        return ExponentReport {
            lambda_sup: f64::NAN,
            nu_sup: f64::NAN,
            gamma_sup: f64::NAN,
            hypothesis_ok,
            hypothesis_star_ok,
        };
    }
    let lambda_sup = holder_exponent_sup(h).expect("hypothesis checked");
    let nu_sup = convergence_rate_sup(h).expect("hypothesis checked");
    ExponentReport { lambda_sup, nu_sup, gamma_sup: 4.0 * nu_sup, hypothesis_ok, hypothesis_star_ok }
}

/// Parameters of the smoothed scheme: grid/mollifier coupling `eps(n) = n^-mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParameters {
    /// Kernel discrepancy exponent, `||G^eps - G^eps_n|| <= C n^{-delta/2}`.
    pub delta: f64,
    /// Mollifier exponent, already shrunk by the safety factor.
    pub mu: f64,
    /// Supremum of the Green-kernel rate `gamma = (2 mu lambda) ∧ delta`.
    pub gamma_sup: f64,
    /// Hölder exponent used to balance `2 mu lambda = delta`.
    pub lambda: f64,
    pub safety: f64,
}

impl SmoothingParameters {
    /// `eps(n) = n^{-mu}`.
    pub fn epsilon(&self, n: usize) -> f64 {
        (n as f64).powf(-self.mu)
    }

    /// Upper end of the admissible `mu` interval, `(2 - delta)/(k - 2)`.
    pub fn mu_upper(&self, k: usize) -> f64 {
        (2.0 - self.delta) / (k as f64 - 2.0)
    }
}

/// Rate-optimising `(delta, mu)` for `k >= 4`, obtained by solving
/// `2 mu lambda = delta` at the upper end of the `mu` interval.
pub fn smoothing_parameters(h: &HurstVector, safety: f64) -> Result<SmoothingParameters> {
    let k = h.dim();
    if k < 4 {
        return Err(Error::SmoothingNotApplicable { k });
    }
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::InvalidParameter(format!("safety factor {safety} must lie in (0, 1)")));
    }
    require_hypothesis(h)?;
    let kf = k as f64;
    let lambda = holder_exponent_sup(h)?;
    let delta = if check_hypothesis_star(h) {
        4.0 / kf
    } else {
        let s = h.sum();
        4.0 * (2.0 - kf + s) / (2.0 - kf + 2.0 * s)
    };
    let mu = safety * delta / (2.0 * lambda);
    Ok(SmoothingParameters { delta, mu, gamma_sup: 4.0 * convergence_rate_sup(h)?, lambda, safety })
}

/// Smoothing parameters for an explicitly chosen `delta`; `mu` is placed at
/// `safety` times the smaller of `delta/(2 lambda)` and `(2 - delta)/(k - 2)`.
pub fn smoothing_parameters_with_delta(h: &HurstVector, delta: f64, safety: f64) -> Result<SmoothingParameters> {
    let mut params = smoothing_parameters(h, safety)?;
    if !(delta > 0.0 && delta < 2.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 2)")));
    }
    let k = h.dim() as f64;
    let mu_max = (delta / (2.0 * params.lambda)).min((2.0 - delta) / (k - 2.0));
    params.delta = delta;
    params.mu = safety * mu_max;
    Ok(params)
}
