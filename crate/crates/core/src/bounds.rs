//! Theoretical total-variation bounds for the law flow.
//!
//! With `q = floor(n / k)` and `r = n mod k`:
//!
//! * exponential regime (`lambda_k < alpha_k`):
//!   `b(n) = tv0 * (1 - alpha_k + lambda_k)^q * (1 + lambda_1)^r`
//! * linear regime (`lambda_k = alpha_k`):
//!   `b(n) = 2 tv0 / (2 + lambda_k n tv0) * (1 + lambda_1)^r`, which is the
//!   sequence bound `p_n <= p0 / (1 + p0 lambda_k n)` written for
//!   `tv = 2p`.
//!
//! The linear-regime rate comes from a comparison lemma: if
//! `a_{n+1} <= a_n (1 - psi(a_n))` then `a_n <= g^{-1}(n)` where
//! `g(x) = int_x^{a0} dt / (t psi(t))`. [`lemma_g`] and
//! [`lemma_bound_sequence`] evaluate that machinery numerically for any
//! admissible `psi`.

use serde::Serialize;

use crate::coefficients::{classify_regime, CoefficientReport, Regime, DEFAULT_TIE_TOL};
use crate::error::{Error, Result};
use crate::output::{fmt_f64, Table};
use crate::quadrature::integrate;

/// Relative tolerance used for the lemma integral.
pub const LEMMA_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundParams {
    pub k: usize,
    pub alpha_k: f64,
    pub lambda_k: f64,
    pub lambda_1: f64,
    /// `tv(mu_0, pi)` in the mass-2 convention.
    pub initial_tv: f64,
    pub regime: Regime,
}

impl BoundParams {
    /// Classifies the regime with [`DEFAULT_TIE_TOL`].
    pub fn new(
        k: usize,
        alpha_k: f64,
        lambda_k: f64,
        lambda_1: f64,
        initial_tv: f64,
    ) -> Result<Self> {
        let regime = classify_regime(alpha_k, lambda_k, DEFAULT_TIE_TOL);
        Self::with_regime(k, alpha_k, lambda_k, lambda_1, initial_tv, regime)
    }

    /// Uses a regime decided elsewhere (normally by a coefficient report).
    pub fn with_regime(
        k: usize,
        alpha_k: f64,
        lambda_k: f64,
        lambda_1: f64,
        initial_tv: f64,
        regime: Regime,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(alpha_k > 0.0 && alpha_k <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha_k = {alpha_k} outside (0, 1]"
            )));
        }
        if !(lambda_k >= 0.0 && lambda_k.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda_k = {lambda_k} must be >= 0"
            )));
        }
        if !(lambda_1 >= 0.0 && lambda_1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda_1 = {lambda_1} must be >= 0"
            )));
        }
        if !(0.0..=2.0).contains(&initial_tv) {
            return Err(Error::InvalidArgument(format!(
                "initial_tv = {initial_tv} outside [0, 2]"
            )));
        }
        Ok(Self {
            k,
            alpha_k,
            lambda_k,
            lambda_1,
            initial_tv,
            regime,
        })
    }

    pub fn from_report(report: &CoefficientReport, initial_tv: f64) -> Result<Self> {
        Self::with_regime(
            report.k,
            report.alpha_k,
            report.lambda_k,
            report.lambda_1,
            initial_tv,
            report.regime,
        )
    }
}

/// Upper bound on `tv(mu_n, pi)` (equivalently `tv(mu_n, nu_n)`).
pub fn bound_at(params: &BoundParams, n: usize) -> Result<f64> {
    let k = params.k;
    let blocks = (n / k) as i32;
    let rem = (n % k) as i32;
    let correction = (1.0 + params.lambda_1).powi(rem);
    let tv0 = params.initial_tv;
    match params.regime {
        Regime::Exponential => {
            Ok(tv0 * (1.0 - params.alpha_k + params.lambda_k).powi(blocks) * correction)
        }
        Regime::Linear => Ok(2.0 * tv0 / (2.0 + params.lambda_k * n as f64 * tv0) * correction),
        Regime::Inconclusive => Err(Error::Inconclusive {
            alpha_k: params.alpha_k,
            lambda_k: params.lambda_k,
        }),
    }
}

/// Geometric per-step factor `(1 - alpha_k + lambda_k)^(1/k)`.
pub fn per_step_rate(params: &BoundParams) -> Result<f64> {
    match params.regime {
        Regime::Exponential => {
            Ok((1.0 - params.alpha_k + params.lambda_k).powf(1.0 / params.k as f64))
        }
        Regime::Linear => Err(Error::InvalidArgument(
            "per-step rate is only defined in the exponential regime (lambda_k = alpha_k here)"
                .into(),
        )),
        Regime::Inconclusive => Err(Error::Inconclusive {
            alpha_k: params.alpha_k,
            lambda_k: params.lambda_k,
        }),
    }
}

/// One-step bound for a chain satisfying the k = 1 conditions with
/// `tv(mu_0, pi) <= 2`: `2 (1 - (alpha - lambda))^n`, or `4 / (2 + 2 lambda n)`
/// on a tie.
pub fn butkovsky_one_step_bound(alpha: f64, lambda: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < alpha <= 1 and lambda >= 0, got alpha = {alpha}, lambda = {lambda}"
        )));
    }
    match classify_regime(alpha, lambda, DEFAULT_TIE_TOL) {
        Regime::Exponential => Ok(2.0 * (1.0 - (alpha - lambda)).powi(n as i32)),
        Regime::Linear => Ok(4.0 / (2.0 + 2.0 * lambda * n as f64)),
        Regime::Inconclusive => Err(Error::Inconclusive {
            alpha_k: alpha,
            lambda_k: lambda,
        }),
    }
}

/// `(n, bound)` pairs for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurve {
    pub values: Vec<(usize, f64)>,
}

impl BoundCurve {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["n", "bound"]);
        for (n, b) in &self.values {
            t.push_row([n.to_string(), fmt_f64(*b)]);
        }
        t
    }
}

pub fn bound_curve(params: &BoundParams, n_max: usize) -> Result<BoundCurve> {
    let values = (0..=n_max)
        .map(|n| bound_at(params, n).map(|b| (n, b)))
        .collect::<Result<_>>()?;
    Ok(BoundCurve { values })
}

/// Non-positive or non-finite `psi` values poison the quadrature, which then
/// reports a non-finite integrand.
fn admissible(psi_t: f64) -> f64 {
    if psi_t > 0.0 && psi_t.is_finite() {
        psi_t
    } else {
        f64::NAN
    }
}

/// `g(x) = int_x^{a0} dt / (t psi(t))`, computed in the variable `u = ln t`
/// where the integrand becomes `1 / psi(e^u)`.
pub fn lemma_g<F: Fn(f64) -> f64>(a0: f64, psi: F, x: f64) -> Result<f64> {
    if !(a0 > 0.0 && a0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("a0 = {a0} outside (0, 1]")));
    }
    if !(x > 0.0 && x <= a0) {
        return Err(Error::InvalidArgument(format!(
            "x = {x} outside (0, a0 = {a0}]"
        )));
    }
    if x == a0 {
        return Ok(0.0);
    }
    integrate(
        |u| 1.0 / admissible(psi(u.exp())),
        x.ln(),
        a0.ln(),
        LEMMA_REL_TOL,
        0.0,
    )
    .map_err(|e| Error::InvalidArgument(format!("psi must be positive on (0, a0]: {e}")))
}

/// Solves `g(x) = target` for `x` in `(0, upper]`, given `g(upper) <= target`.
fn invert_g<F: Fn(f64) -> f64>(a0: f64, psi: &F, target: f64, upper: f64) -> Result<f64> {
    let mut hi = upper;
    let mut lo = upper;
    // march down until g(lo) >= target; g is unbounded near 0 for admissible psi
    loop {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::InvalidArgument(
                "g stays bounded near 0; psi is not admissible".into(),
            ));
        }
        if lemma_g(a0, psi, lo)? >= target {
            break;
        }
        hi = lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lemma_g(a0, psi, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `[g^{-1}(0), ..., g^{-1}(n_max)]` by bisection on the strictly decreasing
/// `g`. Each value is the upper end of its final bracket.
pub fn lemma_bound_sequence<F: Fn(f64) -> f64>(a0: f64, psi: F, n_max: usize) -> Result<Vec<f64>> {
    if !(a0 > 0.0 && a0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("a0 = {a0} outside (0, 1]")));
    }
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(a0);
    for n in 1..=n_max {
        let prev = *out.last().expect("nonempty");
        out.push(invert_g(a0, &psi, n as f64, prev)?);
    }
    Ok(out)
}
