//! The bump mollifier and its Fourier multipliers.
//!
//! `psi(x) = c exp(-1/(1 - x^2))` on `]-1, 1[` with `c` chosen so that
//! `int psi = 1`. Its transform is taken with the torus convention
//!
//! ```text
//! psi_hat(t) = int_{-1}^{1} psi(x) cos(pi t x) dx
//! ```
//!
//! so that `Psi_hat(eps beta)` pairs with the sine modes `sin(pi beta x)`.
//! The transform is evaluated by the trapezoidal rule with step halving; the
//! integrand vanishes to all orders at `x = ±1`, so the rule converges faster
//! than any power of the step.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

const MAX_LEVEL: u32 = 22;
const QUAD_TOL: f64 = 1e-15;

fn bump(x: f64) -> f64 {
    let s = 1.0 - x * x;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// `2 int_0^1 bump(x) cos(pi t x) dx` by halving trapezoid steps.
fn even_cosine_integral(t: f64) -> Result<f64> {
    let w = std::f64::consts::PI * t;
    let f = |x: f64| bump(x) * (w * x).cos();
    // f(1) = 0, so only the left endpoint carries a half weight.
    let mut n: usize = 16;
    let mut h = 1.0 / n as f64;
    let mut sum = 0.5 * f(0.0) + (1..n).map(|i| f(i as f64 * h)).sum::<f64>();
    let mut prev = 2.0 * h * sum;
    for _ in 4..MAX_LEVEL {
        // new midpoints
        sum += (0..n).map(|i| f((i as f64 + 0.5) * h)).sum::<f64>();
        n *= 2;
        h *= 0.5;
        let cur = 2.0 * h * sum;
        if (cur - prev).abs() <= QUAD_TOL && n >= 64 && n as f64 >= 4.0 * t.abs() {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("psi_hat({t}) did not converge")))
}

fn normalization() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| even_cosine_integral(0.0).expect("bump mass quadrature converges"))
}

/// The normalized bump `psi`.
pub fn psi(x: f64) -> f64 {
    bump(x) / normalization()
}

/// One-dimensional transform `psi_hat(t)`; even, with `psi_hat(0) = 1`.
pub fn psi_hat(t: f64) -> Result<f64> {
    Ok(even_cosine_integral(t.abs())? / normalization())
}

/// `sup_t |t|^theta |psi_hat(t)|` over a logarithmic grid of `t in [1, t_max]`
/// together with the plateau `|psi_hat| <= 1` on `[0, 1]`.
pub fn decay_constant(theta: f64, t_max: f64) -> Result<f64> {
    let steps = 400;
    let mut best: f64 = 1.0;
    let ratio = t_max.ln() / steps as f64;
    for i in 0..=steps {
        let t = (i as f64 * ratio).exp();
        best = best.max(t.powf(theta) * psi_hat(t)?.abs());
    }
    Ok(best)
}

/// Cached multipliers `psi_hat(eps l)` for one grid, `l = 0..table_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierTable {
    epsilon: f64,
    /// `psi_hat(eps * l)`, index `l`.
    values: Vec<f64>,
    identity: bool,
}

impl MollifierTable {
    /// Multipliers for the modes of `grid`, `l = 0..n`.
    pub fn new(epsilon: f64, grid: &GridSpec) -> Result<Self> {
        Self::with_len(epsilon, grid.n())
    }

    /// Multipliers for `l = 0..len`.
    pub fn with_len(epsilon: f64, len: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be > 0")));
        }
        let values = (0..len).map(|l| psi_hat(epsilon * l as f64)).collect::<Result<Vec<_>>>()?;
        Ok(MollifierTable { epsilon, values, identity: false })
    }

    /// `Psi_hat = 1` everywhere; turns every smoothed object into its plain
    /// counterpart.
    pub fn identity(len: usize) -> Self {
        MollifierTable { epsilon: 0.0, values: vec![1.0; len], identity: true }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `psi_hat(eps l)`.
    pub fn value_1d(&self, l: usize) -> f64 {
        self.values[l]
    }

    /// `Psi_hat(eps beta) = prod_d psi_hat(eps beta_d)`.
    pub fn multiplier(&self, beta: &[usize]) -> f64 {
        beta.iter().map(|&b| self.values[b]).product()
    }

    /// Writes `(t, psi_hat(t))` rows for inspection.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,psi_hat")?;
        for (l, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.epsilon * l as f64, v)?;
        }
        Ok(())
    }
}
