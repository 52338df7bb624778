use std::fmt;
use std::path::Path;

use nlmarkov::bounds::{bound_curve, per_step_rate, BoundParams};
use nlmarkov::casestudy::{build_example, table1, table1_detail_table, table1_table};
use nlmarkov::coefficients::{classify_regime, estimate_coefficients, Regime, SearchConfig};
use nlmarkov::invariant::{decay_curve, find_invariant, uniqueness_probe, verify_bound};
use nlmarkov::kernel_file::KernelFile;
use nlmarkov::measure::sample_dirichlet;
use nlmarkov::montecarlo::{
    convergence_table, lln_convergence_table, lln_experiment, simulate_paths, RNG_NAME,
};
use nlmarkov::output::{fmt_f64, Header, Table};
use nlmarkov::{tv_distance, Distribution, Error, KernelHandle};
use serde::Serialize;

use crate::args::{
    BoundArgs, CoeffsArgs, Command, EvolveArgs, ExampleArgs, InvariantArgs, LlnArgs, ReportFormat,
    SearchArgs, SimulateArgs, Table1Args, ValidateArgs, VerifyArgs,
};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_OTHER,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Inconclusive { .. } => EXIT_INCONCLUSIVE,
            Error::KernelFile(_)
            | Error::InvalidKernel(_)
            | Error::NonStochasticRow { .. }
            | Error::InvalidDistribution(_)
            | Error::DimensionMismatch { .. } => EXIT_VALIDATION,
            _ => EXIT_OTHER,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<Outcome, CliError>;

/// Rendered output plus the exit code and any diagnostics for stderr.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
    pub notes: Vec<String>,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self {
            text,
            code: 0,
            notes: Vec::new(),
        }
    }
}

/// Drops the flags that do not affect output (`--threads`, `--output`) and
/// the program name.
pub fn canonical_argv(raw: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = raw.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--threads" || a == "--output" || a == "-o" {
            it.next();
            continue;
        }
        if a.starts_with("--threads=")
            || a.starts_with("--output=")
            || (a.starts_with("-o") && !a.starts_with("--"))
        {
            continue;
        }
        out.push(a.clone());
    }
    out
}

fn header<A: Serialize>(command: &Command, args: &A) -> Header {
    let mut h = Header::new();
    h.push("program", format!("nlmarkov {}", env!("CARGO_PKG_VERSION")));
    h.push("command", command.name());
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(args) {
        for (k, v) in map {
            match v {
                serde_json::Value::Null => {}
                serde_json::Value::String(s) => {
                    h.push(k, s);
                }
                other => {
                    h.push(k, other);
                }
            }
        }
    }
    h
}

fn finish(mut h: Header, argv: &[String], body: &str) -> String {
    h.push(
        "argv",
        serde_json::to_string(argv).expect("strings serialize"),
    );
    let mut s = h.render();
    s.push_str(body);
    s
}

fn load_kernel(path: &Path) -> Result<(Vec<String>, KernelHandle), CliError> {
    let file = KernelFile::load(path)?;
    let kernel = file.to_kernel()?;
    Ok((file.states, kernel.into()))
}

/// `uniform`, `e<i>` with 1-based `i`, or comma-separated probabilities.
pub fn parse_mu0(spec: &str, n: usize) -> Result<Distribution, CliError> {
    let spec = spec.trim();
    if spec == "uniform" {
        return Ok(Distribution::uniform(n)?);
    }
    if let Some(i) = spec.strip_prefix('e').and_then(|s| s.parse::<usize>().ok()) {
        if i == 0 || i > n {
            return Err(CliError::validation(format!(
                "mu0 = {spec}: state must be in 1..={n}"
            )));
        }
        return Ok(Distribution::vertex(n, i - 1)?);
    }
    let probs = parse_list(spec, "mu0")?;
    if probs.len() != n {
        return Err(CliError::validation(format!(
            "mu0 has {} entries, kernel has {n} states",
            probs.len()
        )));
    }
    Ok(Distribution::new(probs)?)
}

fn parse_list(spec: &str, what: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                CliError::validation(format!("{what}: cannot parse {s:?} as a number"))
            })
        })
        .collect()
}

fn search_config(s: &SearchArgs) -> SearchConfig {
    SearchConfig {
        resolution: s.resolution,
        samples: s.samples,
        seed: s.seed,
        min_sep: s.min_sep,
        tie_tol: s.tie_tol,
    }
}

fn labelled_columns(prefix: &str, labels: &[String]) -> Vec<String> {
    labels.iter().map(|l| format!("{prefix}{l}")).collect()
}

pub fn execute(command: &Command, argv: &[String]) -> CmdResult {
    match command {
        Command::Validate(a) => validate(a),
        Command::Example(a) => example(a),
        Command::Coeffs(a) => coeffs(command, a, argv),
        Command::Evolve(a) => evolve(command, a, argv),
        Command::Invariant(a) => invariant(command, a, argv),
        Command::Bound(a) => bound(command, a, argv),
        Command::Verify(a) => verify(command, a, argv),
        Command::Simulate(a) => simulate(command, a, argv),
        Command::Lln(a) => lln(command, a, argv),
        Command::Table1(a) => table1_cmd(command, a, argv),
        Command::Replay(_) => Err(CliError::other("replay cannot be nested")),
    }
}

fn validate(a: &ValidateArgs) -> CmdResult {
    let file = KernelFile::load(&a.kernel)?;
    let kernel = file.to_kernel()?;
    let kind = if kernel.is_measure_independent() {
        "affine, measure-independent"
    } else {
        "affine"
    };
    Ok(Outcome::ok(format!(
        "ok: {} ({} states, {kind})\n",
        a.kernel.display(),
        kernel.n_states()
    )))
}

/// Kernel files are plain JSON, so this output carries no comment header.
fn example(a: &ExampleArgs) -> CmdResult {
    let chain = build_example(a.gamma)?;
    Ok(Outcome::ok(
        KernelFile::from_kernel(chain.kernel(), None).to_json(),
    ))
}

fn coeffs(command: &Command, a: &CoeffsArgs, argv: &[String]) -> CmdResult {
    let (_, kernel) = load_kernel(&a.kernel)?;
    let report = estimate_coefficients(&kernel, a.search.k, &search_config(&a.search))?;
    let mut h = header(command, a);
    h.push("rng", "chacha8 (seed_from_u64) for Dirichlet samples");
    let body = match a.format {
        ReportFormat::Kv => report.to_kv(),
        ReportFormat::Csv => format!(
            "{}\n{}\n",
            nlmarkov::coefficients::CoefficientReport::csv_header(),
            report.to_csv_row()
        ),
    };
    Ok(Outcome::ok(finish(h, argv, &body)))
}

fn evolve(command: &Command, a: &EvolveArgs, argv: &[String]) -> CmdResult {
    let (labels, kernel) = load_kernel(&a.kernel)?;
    let mu0 = parse_mu0(&a.mu0, kernel.n_states())?;
    let flow = kernel.law_flow(&mu0, a.steps)?;
    let mut t =
        Table::new(std::iter::once("n".to_string()).chain(labelled_columns("mu_", &labels)));
    for (n, mu) in flow.iter().enumerate() {
        t.push_row(std::iter::once(n.to_string()).chain(mu.probs().iter().map(|p| fmt_f64(*p))));
    }
    Ok(Outcome::ok(finish(header(command, a), argv, &t.render())))
}

fn invariant(command: &Command, a: &InvariantArgs, argv: &[String]) -> CmdResult {
    let (labels, kernel) = load_kernel(&a.kernel)?;
    let mu0 = parse_mu0(&a.mu0, kernel.n_states())?;
    let fp = find_invariant(&kernel, &mu0, a.tol, a.max_iter)?;
    let mut h = header(command, a);
    h.push("iterations", fp.iterations);
    h.push("residual", fmt_f64(fp.residual));
    h.push("converged", fp.converged);
    let mut notes = Vec::new();
    if a.starts > 0 {
        h.push("rng", "chacha8 (seed_from_u64) for Dirichlet starts");
        let mut starts = vec![mu0.clone()];
        starts.extend(sample_dirichlet(kernel.n_states(), a.starts, a.seed)?);
        let probe = uniqueness_probe(&kernel, &starts, a.tol, a.max_iter)?;
        h.push("probe_starts", starts.len());
        h.push("probe_max_pairwise_tv", fmt_f64(probe.max_pairwise_tv));
    }
    let mut t = Table::new(["state", "pi"]);
    for (l, p) in labels.iter().zip(fp.pi.probs()) {
        t.push_row([l.clone(), fmt_f64(*p)]);
    }
    let code = if fp.converged {
        0
    } else {
        notes.push(format!(
            "fixed-point iteration did not converge in {} iterations (residual {})",
            fp.iterations,
            fmt_f64(fp.residual)
        ));
        EXIT_OTHER
    };
    Ok(Outcome {
        text: finish(h, argv, &t.render()),
        code,
        notes,
    })
}

fn bound(command: &Command, a: &BoundArgs, argv: &[String]) -> CmdResult {
    let lambda_1 = match (a.lambda1, a.k) {
        (Some(l1), _) => l1,
        (None, 1) => a.lambda,
        (None, _) => return Err(CliError::validation("--lambda1 is required when k > 1")),
    };
    let regime = classify_regime(a.alpha, a.lambda, a.tie_tol);
    if regime == Regime::Inconclusive {
        return Err(Error::Inconclusive {
            alpha_k: a.alpha,
            lambda_k: a.lambda,
        }
        .into());
    }
    let params = BoundParams::with_regime(a.k, a.alpha, a.lambda, lambda_1, a.initial_tv, regime)?;
    let curve = bound_curve(&params, a.n_max)?;
    let mut h = header(command, a);
    h.push("regime", regime);
    if regime == Regime::Exponential {
        h.push("per_step_rate", fmt_f64(per_step_rate(&params)?));
    }
    Ok(Outcome::ok(finish(h, argv, &curve.to_table().render())))
}

fn verify(command: &Command, a: &VerifyArgs, argv: &[String]) -> CmdResult {
    let (_, kernel) = load_kernel(&a.kernel)?;
    let mu0 = parse_mu0(&a.mu0, kernel.n_states())?;
    let report = estimate_coefficients(&kernel, a.search.k, &search_config(&a.search))?;
    if report.regime == Regime::Inconclusive {
        return Err(Error::Inconclusive {
            alpha_k: report.alpha_k,
            lambda_k: report.lambda_k,
        }
        .into());
    }
    let fp = find_invariant(&kernel, &mu0, a.tol, a.max_iter)?;
    if !fp.converged {
        return Err(CliError::other(format!(
            "fixed-point iteration did not converge in {} iterations (residual {})",
            fp.iterations,
            fmt_f64(fp.residual)
        )));
    }
    let params = BoundParams::from_report(&report, tv_distance(&mu0, &fp.pi)?)?;
    let curve = decay_curve(&kernel, &mu0, &fp.pi, &params, a.n_max)?;
    let check = verify_bound(&curve, a.slack);

    let mut h = header(command, a);
    h.push("rng", "chacha8 (seed_from_u64) for Dirichlet samples");
    h.push("alpha_k", fmt_f64(report.alpha_k));
    h.push("lambda_k", fmt_f64(report.lambda_k));
    h.push("lambda_1", fmt_f64(report.lambda_1));
    h.push("regime", report.regime);
    h.push("pi_residual", fmt_f64(fp.residual));
    h.push("bound_holds", check.holds);
    h.push("max_excess", fmt_f64(check.max_excess));
    let mut out = Outcome::ok(finish(h, argv, &curve.to_table().render()));
    if !check.holds {
        out.code = EXIT_VIOLATION;
        out.notes.push(format!(
            "bound violated first at n = {} (max excess {})",
            check.first_violation.unwrap_or_default(),
            fmt_f64(check.max_excess)
        ));
    }
    Ok(out)
}

fn simulate(command: &Command, a: &SimulateArgs, argv: &[String]) -> CmdResult {
    let (labels, kernel) = load_kernel(&a.kernel)?;
    let mu0 = parse_mu0(&a.mu0, kernel.n_states())?;
    let paths = simulate_paths(&kernel, &mu0, a.steps, a.paths, a.seed)?;
    let mut t = Table::new(["path", "t", "state"]);
    for p in &paths {
        for (step, x) in p.states.iter().enumerate() {
            t.push_row([p.path.to_string(), step.to_string(), labels[*x].clone()]);
        }
    }
    let mut h = header(command, a);
    h.push("rng", RNG_NAME);
    Ok(Outcome::ok(finish(h, argv, &t.render())))
}

fn lln(command: &Command, a: &LlnArgs, argv: &[String]) -> CmdResult {
    let (_, kernel) = load_kernel(&a.kernel)?;
    let n = kernel.n_states();
    let mu0 = parse_mu0(&a.mu0, n)?;
    let g = match (&a.g, a.indicator) {
        (Some(spec), _) => parse_list(spec, "g")?,
        (None, Some(i)) if (1..=n).contains(&i) => {
            (0..n).map(|j| if j == i - 1 { 1.0 } else { 0.0 }).collect()
        }
        (None, Some(i)) => {
            return Err(CliError::validation(format!(
                "--indicator {i}: state must be in 1..={n}"
            )))
        }
        (None, None) => {
            return Err(CliError::validation(
                "one of --g or --indicator is required",
            ))
        }
    };
    let regime = match a.regime_k {
        Some(k) => {
            let cfg = SearchConfig {
                resolution: a.resolution,
                samples: 0,
                ..Default::default()
            };
            Some(estimate_coefficients(&kernel, k, &cfg)?.regime)
        }
        None => None,
    };

    let mut h = header(command, a);
    h.push("rng", RNG_NAME);
    if let Some(r) = regime {
        h.push("regime", r);
    }
    let mut notes = Vec::new();
    let body = if let Some(list) = &a.n_list {
        let n_list: Vec<usize> = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::validation(format!("--n-list: bad horizon {s:?}")))
            })
            .collect::<Result<_, _>>()?;
        match regime {
            None => notes.push("no coefficient report supplied; ergodicity conditions presumed".into()),
            Some(Regime::Inconclusive) => notes.push(
                "regime inconclusive: the ergodicity conditions are not established, convergence is not guaranteed".into(),
            ),
            Some(_) => {}
        }
        let rows = lln_convergence_table(&kernel, &mu0, &g, &n_list, a.paths, a.seed)?;
        convergence_table(&rows).render()
    } else {
        let report = lln_experiment(
            &kernel,
            &mu0,
            &g,
            a.steps.unwrap_or(1000),
            a.paths,
            a.seed,
            regime,
        )?;
        notes.extend(report.warnings.iter().cloned());
        if a.per_path {
            report.per_path_table().render()
        } else {
            report.summary_table().render()
        }
    };
    for w in &notes {
        h.push("warning", w);
    }
    Ok(Outcome {
        text: finish(h, argv, &body),
        code: 0,
        notes,
    })
}

fn table1_cmd(command: &Command, a: &Table1Args, argv: &[String]) -> CmdResult {
    let rows = table1(a.resolution)?;
    let t = if a.long {
        table1_detail_table(&rows)
    } else {
        table1_table(&rows)
    };
    Ok(Outcome::ok(finish(header(command, a), argv, &t.render())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn argv_drops_output_only_flags() {
        let raw = v(&[
            "nlmarkov",
            "--threads",
            "4",
            "coeffs",
            "k.json",
            "-o",
            "x.csv",
            "--k",
            "3",
            "--output=y",
            "--threads=2",
        ]);
        assert_eq!(canonical_argv(&raw), v(&["coeffs", "k.json", "--k", "3"]));
    }

    #[test]
    fn mu0_forms() {
        assert_eq!(parse_mu0("uniform", 2).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(parse_mu0("e2", 3).unwrap().probs(), &[0.0, 1.0, 0.0]);
        assert_eq!(parse_mu0("0.25, 0.75", 2).unwrap().probs(), &[0.25, 0.75]);
        assert_eq!(parse_mu0("e4", 3).unwrap_err().code, EXIT_VALIDATION);
        assert_eq!(parse_mu0("0.5,0.6", 2).unwrap_err().code, EXIT_VALIDATION);
        assert_eq!(parse_mu0("a,b", 2).unwrap_err().code, EXIT_VALIDATION);
    }
}
