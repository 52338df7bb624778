//! Estimation of the k-step ergodicity coefficient `alpha_k`, the
//! measure-Lipschitz constants `lambda_k` and `lambda_1`, and the resulting
//! convergence regime.
//!
//! The suprema over pairs of measures are taken over a finite search set: a
//! simplex lattice (vertices included) plus optional uniform samples. A
//! sampled supremum never exceeds the true one, so `alpha_k` comes out as an
//! upper estimate and `lambda_k` as a lower estimate of the true constants.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{AffineKernel, KernelHandle, StochasticMatrix};
use crate::measure::{check_dims, l1, sample_dirichlet, simplex_grid, Distribution, SimplexGrid};
use crate::output::fmt_f64;

pub const DEFAULT_RESOLUTION: usize = 8;
pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_MIN_SEP: f64 = 1e-6;
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Gap above which the lattice extremum for `alpha_k` is reported as not
/// attained at a pair of vertex measures.
const VERTEX_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `lambda_k < alpha_k`: geometric decay.
    Exponential,
    /// `lambda_k = alpha_k` within the tie tolerance: `O(1/n)` decay.
    Linear,
    /// `lambda_k > alpha_k` (or `alpha_k = 0`): no guarantee.
    Inconclusive,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Exponential => "exponential",
            Regime::Linear => "linear",
            Regime::Inconclusive => "inconclusive",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(Regime::Exponential),
            "linear" => Ok(Regime::Linear),
            "inconclusive" => Ok(Regime::Inconclusive),
            other => Err(Error::InvalidArgument(format!("unknown regime {other:?}"))),
        }
    }
}

/// Classifies the regime from a coefficient pair.
///
/// A vanishing `alpha_k` is inconclusive regardless of `lambda_k`: the
/// Dobrushin-type condition requires `alpha_k > 0`.
pub fn classify_regime(alpha_k: f64, lambda_k: f64, tie_tol: f64) -> Regime {
    if alpha_k <= tie_tol {
        Regime::Inconclusive
    } else if (lambda_k - alpha_k).abs() <= tie_tol {
        Regime::Linear
    } else if lambda_k < alpha_k {
        Regime::Exponential
    } else {
        Regime::Inconclusive
    }
}

/// Knobs for [`estimate_coefficients`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    pub resolution: usize,
    pub samples: usize,
    pub seed: u64,
    pub min_sep: f64,
    pub tie_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            min_sep: DEFAULT_MIN_SEP,
            tie_tol: DEFAULT_TIE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchMeta {
    pub resolution: usize,
    pub samples: usize,
    pub seed: u64,
    pub min_sep: f64,
    pub n_measures: usize,
    /// Ordered `(mu, x, nu, y)` tuples covered by the `alpha_k` search.
    pub alpha_evaluations: u64,
    /// Admissible ordered `(mu, nu, x)` tuples covered by the `lambda_k` search.
    pub lambda_evaluations: u64,
    /// Whether the `alpha_k` extremum is attained by a pair of vertex measures.
    pub alpha_extremum_at_vertices: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub k: usize,
    pub alpha_k: f64,
    pub lambda_k: f64,
    pub lambda_1: f64,
    /// `lambda_1` comes from the closed form for affine kernels.
    pub lambda_1_exact: bool,
    pub regime: Regime,
    pub tie_tol: f64,
    /// `None` for coefficients taken from closed-form values.
    pub search: Option<SearchMeta>,
}

const CSV_COLUMNS: &[&str] = &[
    "k",
    "alpha_k",
    "lambda_k",
    "lambda_1",
    "regime",
    "tie_tol",
    "lambda_1_exact",
    "resolution",
    "samples",
    "seed",
    "min_sep",
    "n_measures",
    "alpha_evaluations",
    "lambda_evaluations",
    "alpha_extremum_at_vertices",
];

impl CoefficientReport {
    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("k", self.k.to_string()),
            ("alpha_k", fmt_f64(self.alpha_k)),
            ("lambda_k", fmt_f64(self.lambda_k)),
            ("lambda_1", fmt_f64(self.lambda_1)),
            ("regime", self.regime.to_string()),
            ("tie_tol", fmt_f64(self.tie_tol)),
            ("lambda_1_exact", self.lambda_1_exact.to_string()),
        ];
        let s = self.search.as_ref();
        let opt = |f: &dyn Fn(&SearchMeta) -> String| s.map(f).unwrap_or_default();
        v.push(("resolution", opt(&|m| m.resolution.to_string())));
        v.push(("samples", opt(&|m| m.samples.to_string())));
        v.push(("seed", opt(&|m| m.seed.to_string())));
        v.push(("min_sep", opt(&|m| fmt_f64(m.min_sep))));
        v.push(("n_measures", opt(&|m| m.n_measures.to_string())));
        v.push((
            "alpha_evaluations",
            opt(&|m| m.alpha_evaluations.to_string()),
        ));
        v.push((
            "lambda_evaluations",
            opt(&|m| m.lambda_evaluations.to_string()),
        ));
        v.push((
            "alpha_extremum_at_vertices",
            opt(&|m| m.alpha_extremum_at_vertices.to_string()),
        ));
        v
    }

    /// One CSV row in the column order of [`CoefficientReport::csv_header`].
    pub fn to_csv_row(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Flat `key = value` block, including the bias direction of each
    /// estimate.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.fields() {
            if !value.is_empty() {
                let _ = writeln!(out, "{key} = {value}");
            }
        }
        if self.search.is_some() {
            out.push_str("alpha_k_bias = upper\n");
            out.push_str("lambda_k_bias = lower\n");
        }
        out
    }
}

/// Outcome of the `alpha_k` search.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSearch {
    pub alpha_k: f64,
    /// Largest TV distance between any two k-step rows.
    pub max_tv: f64,
    /// `(mu index, x, nu index, y)` realizing `max_tv`.
    pub argmax: (usize, usize, usize, usize),
    /// Same maximum restricted to vertex measures.
    pub max_tv_vertices: Option<f64>,
    pub evaluations: u64,
}

/// Outcome of the `lambda_k` search.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSearch {
    pub lambda_k: f64,
    /// `(mu index, nu index, x)` realizing the ratio.
    pub argmax: (usize, usize, usize),
    pub evaluations: u64,
}

/// Larger value wins; ties go to the lexicographically smaller index so the
/// reduction is independent of evaluation order.
fn better<I: Ord + Copy>(a: (f64, I), b: (f64, I)) -> (f64, I) {
    if a.0 > b.0 || (a.0 == b.0 && a.1 <= b.1) {
        a
    } else {
        b
    }
}

fn k_step_all(
    kernel: &KernelHandle,
    k: usize,
    measures: &[Distribution],
) -> Result<Vec<StochasticMatrix>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if measures.is_empty() {
        return Err(Error::EmptySearchSet);
    }
    for m in measures {
        check_dims(kernel.n_states(), m.n_states())?;
    }
    measures
        .par_iter()
        .map(|m| kernel.k_step_kernel(m, k))
        .collect()
}

fn search_set(grid: &SimplexGrid, extra: &[Distribution]) -> Vec<Distribution> {
    grid.points().iter().chain(extra).cloned().collect()
}

/// Max TV over all pairs of k-step rows `Q_mu(x, .)`, `Q_nu(y, .)`.
pub fn alpha_search(
    kernel: &KernelHandle,
    k: usize,
    measures: &[Distribution],
) -> Result<AlphaSearch> {
    let qs = k_step_all(kernel, k, measures)?;
    let n = kernel.n_states();
    let rows: Vec<&[f64]> = qs.iter().flat_map(StochasticMatrix::rows).collect();
    let max_pair = |idx: &[usize]| -> (f64, (usize, usize)) {
        idx.par_iter()
            .enumerate()
            .map(|(a, &i)| {
                idx[a + 1..].iter().fold((0.0, (i, i)), |best, &j| {
                    better(best, (l1(rows[i], rows[j]), (i, j)))
                })
            })
            .reduce(|| (0.0, (0, 0)), better)
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    let (max_tv, (i, j)) = max_pair(&all);
    let vertex_rows: Vec<usize> = measures
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_vertex())
        .flat_map(|(mi, _)| mi * n..(mi + 1) * n)
        .collect();
    let max_tv_vertices = (!vertex_rows.is_empty()).then(|| max_pair(&vertex_rows).0);
    let m = rows.len() as u64;
    Ok(AlphaSearch {
        alpha_k: (1.0 - max_tv / 2.0).clamp(0.0, 1.0),
        max_tv,
        argmax: (i / n, i % n, j / n, j % n),
        max_tv_vertices,
        evaluations: m * m,
    })
}

/// Max over pairs `(mu, nu)` with `tv(mu, nu) >= min_sep` and states `x` of
/// `tv(Q_mu(x, .), Q_nu(x, .)) / tv(mu, nu)`.
pub fn lambda_search(
    kernel: &KernelHandle,
    k: usize,
    measures: &[Distribution],
    min_sep: f64,
) -> Result<LambdaSearch> {
    if !(min_sep > 0.0) {
        return Err(Error::InvalidArgument("min_sep must be positive".into()));
    }
    let qs = k_step_all(kernel, k, measures)?;
    let n = kernel.n_states();
    type Best = (f64, (usize, usize, usize));
    let (best, admissible): (Option<Best>, u64) = (0..measures.len())
        .into_par_iter()
        .map(|a| {
            let mut best: Option<Best> = None;
            let mut count = 0u64;
            for b in a + 1..measures.len() {
                let sep = l1(measures[a].probs(), measures[b].probs());
                if sep < min_sep {
                    continue;
                }
                count += 1;
                for x in 0..n {
                    let r = l1(qs[a].row(x), qs[b].row(x)) / sep;
                    let cand = (r, (a, b, x));
                    best = Some(best.map_or(cand, |cur| better(cur, cand)));
                }
            }
            (best, count)
        })
        .reduce(
            || (None, 0),
            |(b1, c1), (b2, c2)| {
                let best = match (b1, b2) {
                    (Some(x), Some(y)) => Some(better(x, y)),
                    (x, y) => x.or(y),
                };
                (best, c1 + c2)
            },
        );
    let (lambda_k, argmax) = best.ok_or(Error::NoAdmissiblePair { min_sep })?;
    Ok(LambdaSearch {
        lambda_k,
        argmax,
        evaluations: 2 * admissible * n as u64,
    })
}

/// Upper estimate of `alpha_k`: `1 - S/2` with `S` the largest TV distance
/// between k-step rows over the grid and the extra samples.
pub fn estimate_alpha(
    kernel: &KernelHandle,
    k: usize,
    grid: &SimplexGrid,
    extra_samples: &[Distribution],
) -> Result<f64> {
    Ok(alpha_search(kernel, k, &search_set(grid, extra_samples))?.alpha_k)
}

/// Lower estimate of `lambda_k`. Pairs closer than `min_sep` are skipped.
pub fn estimate_lambda(
    kernel: &KernelHandle,
    k: usize,
    grid: &SimplexGrid,
    extra_samples: &[Distribution],
    min_sep: f64,
) -> Result<f64> {
    Ok(lambda_search(kernel, k, &search_set(grid, extra_samples), min_sep)?.lambda_k)
}

/// Exact one-step Lipschitz constant of an affine kernel.
///
/// `P_mu(x, .) - P_nu(x, .)` is linear in `mu - nu`, and the normalized
/// differences `(mu - nu) / tv(mu, nu)` form the convex hull of
/// `(e_a - e_b) / 2`, so the maximum ratio is attained at vertex pairs.
pub fn exact_lambda1_affine(kernel: &AffineKernel) -> f64 {
    let n = kernel.n_states();
    let mut best = 0.0f64;
    for x in 0..n {
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let s: f64 = (0..n)
                    .map(|j| (kernel.coeff(x, j, a) - kernel.coeff(x, j, b)).abs())
                    .sum();
                best = best.max(0.5 * s);
            }
        }
    }
    best
}

/// Runs the lattice-plus-samples search for `alpha_k`, `lambda_k` and
/// `lambda_1` and classifies the regime.
pub fn estimate_coefficients(
    kernel: &KernelHandle,
    k: usize,
    cfg: &SearchConfig,
) -> Result<CoefficientReport> {
    let n = kernel.n_states();
    let grid = simplex_grid(n, cfg.resolution)?;
    let samples = sample_dirichlet(n, cfg.samples, cfg.seed)?;
    let measures = search_set(&grid, &samples);

    let alpha = alpha_search(kernel, k, &measures)?;
    let lambda = lambda_search(kernel, k, &measures, cfg.min_sep)?;
    let (lambda_1, lambda_1_exact) = match kernel.as_affine() {
        Some(affine) => (exact_lambda1_affine(affine), true),
        None if k == 1 => (lambda.lambda_k, false),
        None => (
            lambda_search(kernel, 1, &measures, cfg.min_sep)?.lambda_k,
            false,
        ),
    };
    let at_vertices = alpha
        .max_tv_vertices
        .is_some_and(|v| alpha.max_tv - v <= VERTEX_GAP_TOL);

    Ok(CoefficientReport {
        k,
        alpha_k: alpha.alpha_k,
        lambda_k: lambda.lambda_k,
        lambda_1,
        lambda_1_exact,
        regime: classify_regime(alpha.alpha_k, lambda.lambda_k, cfg.tie_tol),
        tie_tol: cfg.tie_tol,
        search: Some(SearchMeta {
            resolution: cfg.resolution,
            samples: cfg.samples,
            seed: cfg.seed,
            min_sep: cfg.min_sep,
            n_measures: measures.len(),
            alpha_evaluations: alpha.evaluations,
            lambda_evaluations: lambda.evaluations,
            alpha_extremum_at_vertices: at_vertices,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casestudy::build_example;
    use crate::kernel::StochasticMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example(gamma: f64) -> KernelHandle {
        build_example(gamma).unwrap().handle()
    }

    fn random_stochastic(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect()
    }

    /// Dobrushin coefficient of a plain matrix by direct row comparison.
    fn brute_alpha(p: &StochasticMatrix) -> f64 {
        let mut worst = 0.0f64;
        for a in p.rows() {
            for b in p.rows() {
                worst = worst.max(l1(a, b));
            }
        }
        1.0 - worst / 2.0
    }

    #[test]
    fn regime_examples() {
        assert_eq!(classify_regime(0.75, 0.125, 1e-6), Regime::Exponential);
        assert_eq!(classify_regime(0.0, 0.5, 1e-6), Regime::Inconclusive);
        assert_eq!(classify_regime(0.3, 0.3, 1e-6), Regime::Linear);
        assert_eq!(classify_regime(0.0, 0.0, 1e-9), Regime::Inconclusive);
        assert_eq!("linear".parse::<Regime>().unwrap(), Regime::Linear);
    }

    #[test]
    fn alpha_examples() {
        let grid = simplex_grid(4, 6).unwrap();
        let a1 = estimate_alpha(&example(0.5), 1, &grid, &[]).unwrap();
        assert!(a1.abs() < 5e-3, "{a1}");
        let a3 = estimate_alpha(&example(0.3), 3, &grid, &[]).unwrap();
        assert!((a3 - 0.75).abs() < 5e-3, "{a3}");

        let constant = KernelHandle::from(
            AffineKernel::measure_independent(vec![vec![0.2, 0.3, 0.5]; 3]).unwrap(),
        );
        let grid3 = simplex_grid(3, 4).unwrap();
        assert_eq!(estimate_alpha(&constant, 2, &grid3, &[]).unwrap(), 1.0);
    }

    #[test]
    fn alpha_errors() {
        let grid = simplex_grid(4, 2).unwrap();
        assert!(estimate_alpha(&example(0.1), 0, &grid, &[]).is_err());
        let empty: Vec<Distribution> = vec![];
        assert!(matches!(
            alpha_search(&example(0.1), 1, &empty),
            Err(Error::EmptySearchSet)
        ));
        let wrong = simplex_grid(3, 2).unwrap();
        assert!(estimate_alpha(&example(0.1), 1, &wrong, &[]).is_err());
    }

    #[test]
    fn lambda_examples() {
        let grid = simplex_grid(4, 6).unwrap();
        let l3 = estimate_lambda(&example(0.5), 3, &grid, &[], DEFAULT_MIN_SEP).unwrap();
        assert!((l3 - 0.125).abs() < 5e-3, "{l3}");
        let l1v = estimate_lambda(&example(0.5), 1, &grid, &[], DEFAULT_MIN_SEP).unwrap();
        assert!((l1v - 0.5).abs() < 5e-3, "{l1v}");
        for k in 1..=4 {
            assert_eq!(
                estimate_lambda(&example(0.0), k, &grid, &[], DEFAULT_MIN_SEP).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn lambda_needs_admissible_pair() {
        let single = vec![Distribution::uniform(4).unwrap()];
        assert!(matches!(
            lambda_search(&example(0.2), 1, &single, DEFAULT_MIN_SEP),
            Err(Error::NoAdmissiblePair { .. })
        ));
        let grid = simplex_grid(4, 1).unwrap();
        assert!(estimate_lambda(&example(0.2), 1, &grid, &[], 0.0).is_err());
        assert!(matches!(
            estimate_lambda(&example(0.2), 1, &grid, &[], 3.0),
            Err(Error::NoAdmissiblePair { .. })
        ));
    }

    #[test]
    fn exact_lambda1_examples() {
        for (gamma, expected) in [(0.5, 0.5), (0.0, 0.0), (0.3, 0.3)] {
            let chain = build_example(gamma).unwrap();
            assert_eq!(exact_lambda1_affine(chain.kernel()), expected);
        }
        // grid estimate approaches the exact value from below
        let chain = build_example(0.3).unwrap();
        let exact = exact_lambda1_affine(chain.kernel());
        let mut prev = 0.0;
        for res in [1, 2, 4, 8] {
            let grid = simplex_grid(4, res).unwrap();
            let est = estimate_lambda(&chain.handle(), 1, &grid, &[], DEFAULT_MIN_SEP).unwrap();
            assert!(est <= exact + 1e-12);
            assert!(est >= prev - 1e-12);
            prev = est;
        }
        assert!((exact - prev).abs() < 1e-9);
    }

    #[test]
    fn refinement_is_monotone() {
        let k = example(0.4);
        let grid = simplex_grid(4, 3).unwrap();
        let extra = sample_dirichlet(4, 60, 5).unwrap();
        let a_small = estimate_alpha(&k, 2, &grid, &[]).unwrap();
        let a_big = estimate_alpha(&k, 2, &grid, &extra).unwrap();
        assert!(a_big <= a_small);
        let l_small = estimate_lambda(&k, 2, &grid, &[], DEFAULT_MIN_SEP).unwrap();
        let l_big = estimate_lambda(&k, 2, &grid, &extra, DEFAULT_MIN_SEP).unwrap();
        assert!(l_big >= l_small);
    }

    #[test]
    fn measure_independent_alpha_is_submultiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let grid = simplex_grid(3, 2).unwrap();
        for _ in 0..10 {
            let base = random_stochastic(3, &mut rng);
            let p = StochasticMatrix::from_rows(&base).unwrap();
            let k = KernelHandle::from(AffineKernel::measure_independent(base).unwrap());
            let mut prev = 0.0;
            for steps in 1..=4 {
                let est = estimate_alpha(&k, steps, &grid, &[]).unwrap();
                let brute = brute_alpha(&p.power(steps));
                assert!((est - brute).abs() < 1e-12, "{est} vs {brute}");
                assert!(est >= prev - 1e-12);
                prev = est;
                assert_eq!(
                    estimate_lambda(&k, steps, &grid, &[], DEFAULT_MIN_SEP).unwrap(),
                    0.0
                );
            }
        }
    }

    #[test]
    fn report_reflects_search() {
        let cfg = SearchConfig {
            resolution: 4,
            samples: 50,
            seed: 9,
            ..SearchConfig::default()
        };
        let report = estimate_coefficients(&example(0.5), 3, &cfg).unwrap();
        assert_eq!(report.regime, Regime::Exponential);
        assert!(report.lambda_1_exact);
        assert_eq!(report.lambda_1, 0.5);
        let meta = report.search.as_ref().unwrap();
        assert_eq!(meta.n_measures, 35 + 50);
        assert_eq!(meta.alpha_evaluations, (85u64 * 4).pow(2));
        assert!(meta.alpha_extremum_at_vertices);
        assert!((0.0..=1.0).contains(&report.alpha_k));

        let kv = report.to_kv();
        assert!(kv.contains("regime = exponential"));
        assert!(kv.contains("alpha_k_bias = upper"));
        let header = CoefficientReport::csv_header();
        let row = report.to_csv_row();
        assert_eq!(header.split(',').count(), row.split(',').count());

        let one = estimate_coefficients(&example(0.5), 1, &cfg).unwrap();
        assert_eq!(one.regime, Regime::Inconclusive);
    }

    #[test]
    fn black_box_lambda1_is_estimated() {
        let affine = build_example(0.5).unwrap();
        let inner = affine.kernel().clone();
        let bb = KernelHandle::black_box(4, move |mu: &Distribution| {
            inner
                .evaluate(mu)
                .unwrap()
                .rows()
                .flatten()
                .copied()
                .collect()
        });
        let cfg = SearchConfig {
            resolution: 3,
            samples: 0,
            ..SearchConfig::default()
        };
        let report = estimate_coefficients(&bb, 3, &cfg).unwrap();
        assert!(!report.lambda_1_exact);
        assert!((report.lambda_1 - 0.5).abs() < 1e-9);
    }
}
