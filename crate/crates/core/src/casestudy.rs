//! The four-state example chain with a single measure-dependent row.
//!
//! ```text
//!          | 0    g*m1   1/2 - g*m1   1/2 |
//! P_mu  =  | 1/2  1/2    0            0   |      m1 = mu({1}), 0 <= g <= 1/2
//!          | 1/2  0      1/2          0   |
//!          | 0    1/2    0            1/2 |
//! ```
//!
//! One step gives no contraction (`alpha = 0`, `lambda = g`), while three
//! steps give `alpha_3 = 0.75`, `lambda_3 = g / 4`. States are numbered from
//! 1 in documentation and output, from 0 in code.

use serde::Serialize;

use crate::bounds::{per_step_rate, BoundParams};
use crate::coefficients::{
    classify_regime, estimate_alpha, estimate_lambda, exact_lambda1_affine, CoefficientReport,
    DEFAULT_MIN_SEP, DEFAULT_TIE_TOL,
};
use crate::error::{Error, Result};
use crate::kernel::{AffineKernel, KernelHandle};
use crate::measure::{check_dims, simplex_grid, Distribution};
use crate::output::Table;

pub const GAMMA_MAX: f64 = 0.5;
pub const N_STATES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleChain {
    gamma: f64,
    kernel: AffineKernel,
}

impl ExampleChain {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kernel(&self) -> &AffineKernel {
        &self.kernel
    }

    pub fn handle(&self) -> KernelHandle {
        self.kernel.clone().into()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=GAMMA_MAX).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "gamma = {gamma} outside [0, {GAMMA_MAX}]"
        )));
    }
    Ok(())
}

pub fn build_example(gamma: f64) -> Result<ExampleChain> {
    check_gamma(gamma)?;
    let base = vec![
        vec![0.0, 0.0, 0.5, 0.5],
        vec![0.5, 0.5, 0.0, 0.0],
        vec![0.5, 0.0, 0.5, 0.0],
        vec![0.0, 0.5, 0.0, 0.5],
    ];
    let mut coeff = vec![vec![vec![0.0; N_STATES]; N_STATES]; N_STATES];
    coeff[0][1][0] = gamma;
    coeff[0][2][0] = -gamma;
    Ok(ExampleChain {
        gamma,
        kernel: AffineKernel::new(base, coeff)?,
    })
}

/// Closed-form three-step matrix with `nu_1 = mu({1})` and
/// `nu_2 + nu_3 = mu({2}) + mu({3})`.
pub fn symbolic_three_step(gamma: f64, mu: &Distribution) -> Result<Vec<Vec<f64>>> {
    check_dims(N_STATES, mu.n_states())?;
    let g = gamma;
    let nu1 = mu[0];
    let s = mu[1] + mu[2];
    let c = 0.0625;
    Ok(vec![
        vec![
            0.25,
            c * (4.0 + g + 4.0 * g * nu1),
            c * (4.0 - g - 4.0 * g * nu1),
            0.25,
        ],
        vec![
            0.25,
            c * (4.0 + g + 2.0 * g * s),
            c * (4.0 - g - 2.0 * g * s),
            0.25,
        ],
        vec![
            0.25,
            c * (2.0 + g + 2.0 * g * s),
            c * (6.0 - g - 2.0 * g * s),
            0.25,
        ],
        vec![0.25, c * (6.0 + g), c * (2.0 - g), 0.25],
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreeStepCheck {
    pub agrees: bool,
    pub max_abs_diff: f64,
    pub computed: Vec<Vec<f64>>,
    pub symbolic: Vec<Vec<f64>>,
}

/// Compares the composed three-step kernel at `mu` with
/// [`symbolic_three_step`], entry by entry.
pub fn check_three_step_symbolic(
    gamma: f64,
    mu: &Distribution,
    tol: f64,
) -> Result<ThreeStepCheck> {
    let chain = build_example(gamma)?;
    let computed = chain.handle().k_step_kernel(mu, 3)?.to_rows();
    let symbolic = symbolic_three_step(gamma, mu)?;
    let max_abs_diff = computed
        .iter()
        .flatten()
        .zip(symbolic.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ThreeStepCheck {
        agrees: max_abs_diff <= tol,
        max_abs_diff,
        computed,
        symbolic,
    })
}

/// Closed-form three-step coefficients `(0.75, g/4)` with `lambda_1 = g`.
pub fn closed_form_coefficients(gamma: f64) -> Result<CoefficientReport> {
    check_gamma(gamma)?;
    let (alpha_k, lambda_k) = (0.75, gamma / 4.0);
    Ok(CoefficientReport {
        k: 3,
        alpha_k,
        lambda_k,
        lambda_1: gamma,
        lambda_1_exact: true,
        regime: classify_regime(alpha_k, lambda_k, DEFAULT_TIE_TOL),
        tie_tol: DEFAULT_TIE_TOL,
        search: None,
    })
}

/// Closed-form one-step coefficients `(alpha, lambda) = (0, g)`.
pub fn closed_form_one_step_coefficients(gamma: f64) -> Result<CoefficientReport> {
    check_gamma(gamma)?;
    Ok(CoefficientReport {
        k: 1,
        alpha_k: 0.0,
        lambda_k: gamma,
        lambda_1: gamma,
        lambda_1_exact: true,
        regime: classify_regime(0.0, gamma, DEFAULT_TIE_TOL),
        tie_tol: DEFAULT_TIE_TOL,
        search: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientSource {
    ClosedForm,
    Estimated,
}

impl CoefficientSource {
    pub fn name(self) -> &'static str {
        match self {
            CoefficientSource::ClosedForm => "closed-form",
            CoefficientSource::Estimated => "estimated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub k: usize,
    pub gamma: f64,
    pub alpha_k: f64,
    pub lambda_k: f64,
    pub rate: f64,
    pub source: CoefficientSource,
}

pub const TABLE1_GAMMAS: [f64; 2] = [0.0, 0.5];

/// Per-step rates `(1 - alpha_k + lambda_k)^(1/k)` for `k in {2, 3}` and
/// `gamma in {0, 1/2}`. The k = 3 coefficients are the closed-form ones; the
/// k = 2 coefficients come from a lattice search at `resolution`.
pub fn table1(resolution: usize) -> Result<Vec<Table1Row>> {
    let grid = simplex_grid(N_STATES, resolution)?;
    let mut rows = Vec::new();
    for gamma in TABLE1_GAMMAS {
        let chain = build_example(gamma)?;
        let handle = chain.handle();
        let alpha_2 = estimate_alpha(&handle, 2, &grid, &[])?;
        let lambda_2 = estimate_lambda(&handle, 2, &grid, &[], DEFAULT_MIN_SEP)?;
        let params = BoundParams::new(
            2,
            alpha_2,
            lambda_2,
            exact_lambda1_affine(chain.kernel()),
            2.0,
        )?;
        rows.push(Table1Row {
            k: 2,
            gamma,
            alpha_k: alpha_2,
            lambda_k: lambda_2,
            rate: per_step_rate(&params)?,
            source: CoefficientSource::Estimated,
        });

        let c3 = closed_form_coefficients(gamma)?;
        let params = BoundParams::from_report(&c3, 2.0)?;
        rows.push(Table1Row {
            k: 3,
            gamma,
            alpha_k: c3.alpha_k,
            lambda_k: c3.lambda_k,
            rate: per_step_rate(&params)?,
            source: CoefficientSource::ClosedForm,
        });
    }
    Ok(rows)
}

/// Wide layout: one row per gamma, one column per k, rates to six decimals.
pub fn table1_table(rows: &[Table1Row]) -> Table {
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut gammas: Vec<f64> = Vec::new();
    for r in rows {
        if !gammas.contains(&r.gamma) {
            gammas.push(r.gamma);
        }
    }
    let mut t =
        Table::new(std::iter::once("gamma".to_string()).chain(ks.iter().map(|k| format!("k={k}"))));
    for g in gammas {
        let mut line = vec![format!("{g}")];
        for k in &ks {
            let cell = rows
                .iter()
                .find(|r| r.k == *k && r.gamma == g)
                .map(|r| format!("{:.6}", r.rate))
                .unwrap_or_default();
            line.push(cell);
        }
        t.push_row(line);
    }
    t
}

/// Long layout with the coefficients behind each rate.
pub fn table1_detail_table(rows: &[Table1Row]) -> Table {
    let mut t = Table::new(["k", "gamma", "alpha_k", "lambda_k", "rate", "source"]);
    for r in rows {
        t.push_row([
            r.k.to_string(),
            format!("{}", r.gamma),
            format!("{:?}", r.alpha_k),
            format!("{:?}", r.lambda_k),
            format!("{:?}", r.rate),
            r.source.name().to_string(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Regime;
    use crate::measure::sample_dirichlet;

    #[test]
    fn example_structure() {
        let c = build_example(0.0).unwrap();
        assert!(c.kernel().is_measure_independent());
        let p = c
            .kernel()
            .evaluate(&Distribution::uniform(4).unwrap())
            .unwrap();
        assert_eq!(p.row(0), &[0.0, 0.0, 0.5, 0.5]);

        let c = build_example(0.5).unwrap();
        let e1 = Distribution::vertex(4, 0).unwrap();
        assert_eq!(
            c.kernel().evaluate(&e1).unwrap().row(0),
            &[0.0, 0.5, 0.0, 0.5]
        );
        let nonzero: Vec<_> = c
            .kernel()
            .coeff_tensor()
            .into_iter()
            .flatten()
            .flatten()
            .filter(|v| *v != 0.0)
            .collect();
        assert_eq!(nonzero, vec![0.5, -0.5]);
        assert_eq!(c.kernel().coeff(0, 1, 0), 0.5);
        assert_eq!(c.kernel().coeff(0, 2, 0), -0.5);

        for mu in sample_dirichlet(4, 10, 1).unwrap() {
            let p = c.kernel().evaluate(&mu).unwrap();
            assert_eq!(p.row(1), &[0.5, 0.5, 0.0, 0.0]);
            assert_eq!(p.row(2), &[0.5, 0.0, 0.5, 0.0]);
            assert_eq!(p.row(3), &[0.0, 0.5, 0.0, 0.5]);
        }
        assert!(build_example(-0.1).is_err());
        assert!(build_example(0.51).is_err());
    }

    #[test]
    fn three_step_symbolic_matches() {
        for mu in sample_dirichlet(4, 25, 2).unwrap() {
            let chk = check_three_step_symbolic(0.0, &mu, 1e-12).unwrap();
            assert!(chk.agrees);
            assert_eq!(chk.computed[3], vec![0.25, 0.375, 0.125, 0.25]);
            let chk = check_three_step_symbolic(0.5, &mu, 1e-12).unwrap();
            assert!(chk.agrees, "{}", chk.max_abs_diff);
        }
        let u = Distribution::uniform(4).unwrap();
        let chk = check_three_step_symbolic(0.5, &u, 1e-12).unwrap();
        assert!(chk.agrees);
        assert!((chk.computed[3][1] - 0.40625).abs() < 1e-15);
    }

    #[test]
    fn closed_form_values() {
        let c = closed_form_coefficients(0.5).unwrap();
        assert_eq!((c.alpha_k, c.lambda_k, c.lambda_1), (0.75, 0.125, 0.5));
        assert_eq!(c.regime, Regime::Exponential);
        let c = closed_form_coefficients(0.0).unwrap();
        assert_eq!((c.alpha_k, c.lambda_k, c.lambda_1), (0.75, 0.0, 0.0));
        for g in [0.1, 0.3, 0.5] {
            let one = closed_form_one_step_coefficients(g).unwrap();
            assert_eq!((one.alpha_k, one.lambda_k), (0.0, g));
            assert_eq!(one.regime, Regime::Inconclusive);
            assert_eq!(
                closed_form_coefficients(g).unwrap().regime,
                Regime::Exponential
            );
        }
    }

    #[test]
    fn table1_values() {
        let rows = table1(4).unwrap();
        let rate = |k, g| rows.iter().find(|r| r.k == k && r.gamma == g).unwrap().rate;
        assert!((rate(3, 0.0) - 0.629961).abs() < 1e-6);
        assert!((rate(3, 0.5) - 0.721125).abs() < 1e-6);
        assert!((rate(2, 0.0) - 0.5f64.sqrt()).abs() < 1e-3);
        assert!((rate(2, 0.5) - 0.866025).abs() < 1e-3);

        let wide = table1_table(&rows).render();
        assert_eq!(
            wide,
            "gamma,k=2,k=3\n0,0.707107,0.629961\n0.5,0.866025,0.721125\n"
        );
        assert!(table1_detail_table(&rows).render().contains("closed-form"));
    }
}
