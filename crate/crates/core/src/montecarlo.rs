//! Path simulation of the nonlinear chain and law-of-large-numbers
//! experiments.
//!
//! Paths are conditioned on the exact law flow: `X_{t+1}` is drawn from row
//! `X_t` of `P_{mu_t}` where `mu_t` is the deterministic marginal law, not an
//! empirical particle measure. The flow is computed once and shared
//! read-only by every path.
//!
//! Path `i` of a run with seed `s` draws from a ChaCha8 generator keyed by
//! `s` on stream `i`, so changing the number of paths or threads never
//! perturbs an existing path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::Regime;
use crate::error::{Error, Result};
use crate::invariant::{find_invariant, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::kernel::KernelHandle;
use crate::measure::{check_dims, Distribution};
use crate::output::{fmt_f64, Table};

/// Recorded in output headers.
pub const RNG_NAME: &str = "chacha8 (seed_from_u64, stream = path index)";

/// Generator for path `path` of a run seeded with `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    /// 0-based state indices `X_0, ..., X_n`.
    pub states: Vec<usize>,
    pub seed: u64,
    pub path: u64,
}

/// Cumulative rows of `P_{mu_t}` for every step of a precomputed flow.
struct FlowSampler {
    n: usize,
    initial: Vec<f64>,
    steps: Vec<Vec<f64>>,
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    row.iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Index of the first cumulative entry exceeding `u`; falls back to the last
/// state with positive mass when rounding leaves the total below `u`.
fn draw(cdf: &[f64], u: f64) -> usize {
    if let Some(j) = cdf.iter().position(|&c| u < c) {
        return j;
    }
    (1..cdf.len())
        .rev()
        .find(|&j| cdf[j] > cdf[j - 1])
        .unwrap_or(0)
}

impl FlowSampler {
    fn new(kernel: &KernelHandle, mu0: &Distribution, transitions: usize) -> Result<Self> {
        check_dims(kernel.n_states(), mu0.n_states())?;
        let n = kernel.n_states();
        let mut steps = Vec::with_capacity(transitions);
        let mut mu = mu0.clone();
        for _ in 0..transitions {
            let p = kernel.evaluate(&mu)?;
            steps.push(p.rows().flat_map(cumulative).collect());
            mu = p.push_forward(&mu)?;
        }
        Ok(Self {
            n,
            initial: cumulative(mu0.probs()),
            steps,
        })
    }

    /// Walks `len` states and feeds each to `visit`.
    fn walk(&self, rng: &mut ChaCha8Rng, len: usize, mut visit: impl FnMut(usize)) {
        if len == 0 {
            return;
        }
        let mut x = draw(&self.initial, rng.random());
        visit(x);
        for cdfs in self.steps.iter().take(len - 1) {
            x = draw(&cdfs[x * self.n..(x + 1) * self.n], rng.random());
            visit(x);
        }
    }
}

/// Path `path` with `n` transitions (`n + 1` states).
fn one_path(sampler: &FlowSampler, n: usize, seed: u64, path: u64) -> Trajectory {
    let mut rng = path_rng(seed, path);
    let mut states = Vec::with_capacity(n + 1);
    sampler.walk(&mut rng, n + 1, |x| states.push(x));
    Trajectory { states, seed, path }
}

/// A single trajectory `X_0, ..., X_n` (stream 0 of `seed`).
pub fn simulate_path(
    kernel: &KernelHandle,
    mu0: &Distribution,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    let sampler = FlowSampler::new(kernel, mu0, n)?;
    Ok(one_path(&sampler, n, seed, 0))
}

/// `paths` independent trajectories; path `i` is identical to the one any
/// other call with the same seed produces at index `i`.
pub fn simulate_paths(
    kernel: &KernelHandle,
    mu0: &Distribution,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let sampler = FlowSampler::new(kernel, mu0, n)?;
    Ok((0..paths as u64)
        .into_par_iter()
        .map(|i| one_path(&sampler, n, seed, i))
        .collect())
}

/// Bounded continuous test functions applied to `S_n / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    Identity,
    Abs,
    Square,
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [
        TestFunction::Identity,
        TestFunction::Abs,
        TestFunction::Square,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            TestFunction::Identity => x,
            TestFunction::Abs => x.abs(),
            TestFunction::Square => x * x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Identity => "identity",
            TestFunction::Abs => "abs",
            TestFunction::Square => "square",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnReport {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub g_values: Vec<f64>,
    /// `S_n / n` per path, in path order.
    pub sample_means: Vec<f64>,
    pub grand_mean: f64,
    pub sample_std: f64,
    /// `sum_i g_i pi_i`.
    pub target: f64,
    pub abs_error: f64,
    /// `(grand_mean - target) / (sample_std / sqrt(n_paths))`.
    pub z_score: f64,
    pub warnings: Vec<String>,
}

impl LlnReport {
    /// Mean of `f(S_n / n)` over paths next to `f(target)`.
    pub fn test_function_gap(&self, f: TestFunction) -> (f64, f64) {
        let vals: Vec<f64> = self.sample_means.iter().map(|&m| f.apply(m)).collect();
        (
            pairwise_sum(&vals) / vals.len() as f64,
            f.apply(self.target),
        )
    }

    pub const SUMMARY_COLUMNS: [&'static str; 7] = [
        "n_steps",
        "n_paths",
        "grand_mean",
        "sample_std",
        "target",
        "abs_error",
        "z_score",
    ];

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(Self::SUMMARY_COLUMNS);
        t.push_row([
            self.n_steps.to_string(),
            self.n_paths.to_string(),
            fmt_f64(self.grand_mean),
            fmt_f64(self.sample_std),
            fmt_f64(self.target),
            fmt_f64(self.abs_error),
            fmt_f64(self.z_score),
        ]);
        t
    }

    pub fn per_path_table(&self) -> Table {
        let mut t = Table::new(["path", "sample_mean"]);
        for (i, m) in self.sample_means.iter().enumerate() {
            t.push_row([i.to_string(), fmt_f64(*m)]);
        }
        t
    }
}

/// Pairwise summation in a fixed order.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn check_g(n_states: usize, g: &[f64]) -> Result<()> {
    check_dims(n_states, g.len())?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("observable g must be finite".into()));
    }
    Ok(())
}

/// `E_pi[g]` from the invariant measure reached from `mu0`, plus a warning
/// when the solver did not converge.
fn invariant_target(
    kernel: &KernelHandle,
    mu0: &Distribution,
    g: &[f64],
) -> Result<(f64, Option<String>)> {
    let fp = find_invariant(kernel, mu0, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let warning = (!fp.converged).then(|| {
        format!(
            "invariant measure did not converge (residual {:e} after {} iterations); target is approximate",
            fp.residual, fp.iterations
        )
    });
    Ok((fp.pi.expectation(g)?, warning))
}

#[allow(clippy::too_many_arguments)]
fn run_lln(
    kernel: &KernelHandle,
    mu0: &Distribution,
    g: &[f64],
    n: usize,
    paths: usize,
    seed: u64,
    target: f64,
    mut warnings: Vec<String>,
) -> Result<LlnReport> {
    if n == 0 || paths == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and paths >= 1".into()));
    }
    let sampler = FlowSampler::new(kernel, mu0, n - 1)?;
    let sample_means: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut s = 0.0;
            sampler.walk(&mut rng, n, |x| s += g[x]);
            s / n as f64
        })
        .collect();
    let grand_mean = pairwise_sum(&sample_means) / paths as f64;
    let sample_std = if paths > 1 {
        let sq: Vec<f64> = sample_means
            .iter()
            .map(|m| (m - grand_mean).powi(2))
            .collect();
        (pairwise_sum(&sq) / (paths - 1) as f64).sqrt()
    } else {
        0.0
    };
    let abs_error = (grand_mean - target).abs();
    let std_err = sample_std / (paths as f64).sqrt();
    let z_score = if std_err > 0.0 {
        (grand_mean - target) / std_err
    } else if abs_error == 0.0 {
        0.0
    } else {
        (grand_mean - target).signum() * f64::INFINITY
    };
    if paths == 1 {
        warnings.push("single path: sample_std and z_score are degenerate".into());
    }
    Ok(LlnReport {
        n_steps: n,
        n_paths: paths,
        seed,
        g_values: g.to_vec(),
        sample_means,
        grand_mean,
        sample_std,
        target,
        abs_error,
        z_score,
        warnings,
    })
}

/// Runs `paths` trajectories and compares `S_n / n = (1/n) sum_{t<n} g(X_t)`
/// with `E_pi[g]`.
///
/// `regime` is the caller's coefficient verdict; an inconclusive (or absent)
/// regime is recorded as a warning since the limit is then not guaranteed.
pub fn lln_experiment(
    kernel: &KernelHandle,
    mu0: &Distribution,
    g: &[f64],
    n: usize,
    paths: usize,
    seed: u64,
    regime: Option<Regime>,
) -> Result<LlnReport> {
    check_g(kernel.n_states(), g)?;
    let (target, warning) = invariant_target(kernel, mu0, g)?;
    let mut warnings: Vec<String> = warning.into_iter().collect();
    match regime {
        Some(Regime::Inconclusive) => warnings.push(
            "regime inconclusive: the ergodicity conditions are not established, convergence is not guaranteed".into(),
        ),
        None => warnings.push("no coefficient report supplied; ergodicity conditions presumed".into()),
        _ => {}
    }
    run_lln(kernel, mu0, g, n, paths, seed, target, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub grand_mean: f64,
    pub abs_error: f64,
    pub sample_std: f64,
}

/// One experiment per horizon in `n_list`, all with the same seed so that
/// path `i` uses the same random stream at every horizon.
pub fn lln_convergence_table(
    kernel: &KernelHandle,
    mu0: &Distribution,
    g: &[f64],
    n_list: &[usize],
    paths: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    check_g(kernel.n_states(), g)?;
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "n_list must be strictly increasing".into(),
        ));
    }
    let (target, _) = invariant_target(kernel, mu0, g)?;
    n_list
        .iter()
        .map(|&n| {
            let r = run_lln(kernel, mu0, g, n, paths, seed, target, Vec::new())?;
            Ok(ConvergenceRow {
                n,
                grand_mean: r.grand_mean,
                abs_error: r.abs_error,
                sample_std: r.sample_std,
            })
        })
        .collect()
}

pub fn convergence_table(rows: &[ConvergenceRow]) -> Table {
    let mut t = Table::new(["n", "grand_mean", "abs_error", "sample_std"]);
    for r in rows {
        t.push_row([
            r.n.to_string(),
            fmt_f64(r.grand_mean),
            fmt_f64(r.abs_error),
            fmt_f64(r.sample_std),
        ]);
    }
    t
}
