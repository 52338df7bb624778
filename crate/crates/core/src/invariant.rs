//! Invariant measures `pi = pi P_pi` by law-flow iteration, and empirical
//! checks of the decay bounds against the true distance to `pi`.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{bound_at, BoundParams};
use crate::error::{Error, Result};
use crate::kernel::KernelHandle;
use crate::measure::{tv_distance, Distribution};
use crate::output::{fmt_f64, Table};

pub const DEFAULT_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
/// Absolute slack used by [`verify_bound`] callers by default.
pub const DEFAULT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub pi: Distribution,
    pub iterations: usize,
    /// `tv(pi P_pi, pi)`.
    pub residual: f64,
    pub converged: bool,
}

/// Iterates the law flow from `mu0` until two successive iterates are within
/// `tol` and the invariance residual of the last one is within `tol` as well.
///
/// Running out of iterations is not an error: the result is flagged
/// `converged = false` and carries the iterate with the smallest residual.
pub fn find_invariant(
    kernel: &KernelHandle,
    mu0: &Distribution,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let mut current = mu0.clone();
    let mut best: Option<(Distribution, f64, usize)> = None;
    for it in 1..=max_iter {
        let next = kernel.step(&current)?;
        let diff = tv_distance(&next, &current)?;
        // `diff` is also the invariance residual of `current`
        if best.as_ref().is_none_or(|b| diff < b.1) {
            best = Some((current.clone(), diff, it - 1));
        }
        if diff <= tol {
            let residual = tv_distance(&kernel.step(&next)?, &next)?;
            if residual <= tol {
                return Ok(FixedPointResult {
                    pi: next,
                    iterations: it,
                    residual,
                    converged: true,
                });
            }
        }
        current = next;
    }
    let (pi, residual, iterations) = best.expect("at least one iteration");
    Ok(FixedPointResult {
        pi,
        iterations,
        residual,
        converged: false,
    })
}

/// Multi-start solve used to probe uniqueness of the invariant measure.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessProbe {
    pub solutions: Vec<FixedPointResult>,
    /// Largest TV distance between any two solutions.
    pub max_pairwise_tv: f64,
}

pub fn uniqueness_probe(
    kernel: &KernelHandle,
    starts: &[Distribution],
    tol: f64,
    max_iter: usize,
) -> Result<UniquenessProbe> {
    let solutions: Vec<FixedPointResult> = starts
        .par_iter()
        .map(|mu| find_invariant(kernel, mu, tol, max_iter))
        .collect::<Result<_>>()?;
    let mut max_pairwise_tv = 0.0f64;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            max_pairwise_tv = max_pairwise_tv.max(tv_distance(&a.pi, &b.pi)?);
        }
    }
    Ok(UniquenessProbe {
        solutions,
        max_pairwise_tv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub empirical_tv: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DecayCurve {
    pub rows: Vec<DecayRow>,
}

impl DecayCurve {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["n", "empirical_tv", "bound"]);
        for r in &self.rows {
            t.push_row([r.n.to_string(), fmt_f64(r.empirical_tv), fmt_f64(r.bound)]);
        }
        t
    }
}

/// `tv(mu_n, pi)` alongside the theoretical bound for `n = 0..=n_max`.
///
/// `params.initial_tv` must equal `tv(mu0, pi)`.
pub fn decay_curve(
    kernel: &KernelHandle,
    mu0: &Distribution,
    pi: &Distribution,
    params: &BoundParams,
    n_max: usize,
) -> Result<DecayCurve> {
    let tv0 = tv_distance(mu0, pi)?;
    if (tv0 - params.initial_tv).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "params.initial_tv = {} but tv(mu0, pi) = {tv0}",
            params.initial_tv
        )));
    }
    let flow = kernel.law_flow(mu0, n_max)?;
    let rows = flow
        .iter()
        .enumerate()
        .map(|(n, mu)| {
            Ok(DecayRow {
                n,
                empirical_tv: tv_distance(mu, pi)?,
                bound: bound_at(params, n)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DecayCurve { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// `n` of the first row with `empirical_tv > bound + slack`.
    pub first_violation: Option<usize>,
    /// Largest `empirical_tv - bound` over the curve (`-inf` when empty).
    pub max_excess: f64,
}

pub fn verify_bound(curve: &DecayCurve, slack: f64) -> BoundCheck {
    let first_violation = curve
        .rows
        .iter()
        .find(|r| r.empirical_tv > r.bound + slack)
        .map(|r| r.n);
    let max_excess = curve
        .rows
        .iter()
        .map(|r| r.empirical_tv - r.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    BoundCheck {
        holds: first_violation.is_none(),
        first_violation,
        max_excess,
    }
}
