use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nlmarkov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmarkov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn example_file(dir: &TempDir, gamma: &str) -> PathBuf {
    let p = dir.path().join(format!("example_{gamma}.json"));
    let o = nlmarkov(&["example", "--gamma", gamma, "-o", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    p
}

fn edit_json(src: &Path, dst: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(src).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(dst, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .to_string()
}

fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn validate_accepts_example() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.3");
    let o = nlmarkov(&["validate", k.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("ok:"));
}

#[test]
fn validate_names_bad_row() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.3");
    let bad = dir.path().join("bad.json");
    edit_json(&k, &bad, |v| {
        v["base"][2] = serde_json::json!([0.5, 0.0, 0.4, 0.0])
    });
    let o = nlmarkov(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("base row 3 sums to 0.9"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn validate_cites_mu_dependence() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.3");
    let bad = dir.path().join("bad.json");
    edit_json(&k, &bad, |v| v["coeff"][0][2][0] = serde_json::json!(0.0));
    let o = nlmarkov(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(
        e.contains("expected 0") && e.contains("depend on mu"),
        "{e}"
    );
}

#[test]
fn validate_reports_parse_location() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"states\": [\"1\"],\n  \"kind\": \"affine\",\n  \"base\": [[1.0]],\n  \"coeff\": oops\n}\n").unwrap();
    let o = nlmarkov(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));

    edit_json(&example_file(&dir, "0"), &bad, |v| {
        v["states"][3] = serde_json::json!("1")
    });
    let o = nlmarkov(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duplicate label"));
}

#[test]
fn coeffs_three_step_is_exponential() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.5");
    let o = nlmarkov(&["coeffs", k.to_str().unwrap(), "-k", "3", "--samples", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!((kv(&text, "alpha_k").parse::<f64>().unwrap() - 0.75).abs() < 5e-3);
    assert!((kv(&text, "lambda_k").parse::<f64>().unwrap() - 0.125).abs() < 5e-3);
    assert_eq!(kv(&text, "lambda_1"), "0.5");
    assert_eq!(kv(&text, "regime"), "exponential");
    assert_eq!(kv(&text, "alpha_k_bias"), "upper");
    assert!(text.starts_with("# program = nlmarkov"));
    assert!(text.contains("# seed = 0\n"));
}

#[test]
fn coeffs_one_step_is_inconclusive() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.5");
    let o = nlmarkov(&[
        "coeffs",
        k.to_str().unwrap(),
        "-k",
        "1",
        "--samples",
        "0",
        "--format",
        "csv",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = body(&text);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("k,alpha_k,lambda_k,lambda_1,regime"));
    let cells: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(cells[0], "1");
    assert_eq!(cells[1], "0.0");
    assert_eq!(cells[4], "inconclusive");
}

#[test]
fn coeffs_zero_coeff_kernel_has_zero_lambda() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0");
    for steps in ["1", "2", "4"] {
        let o = nlmarkov(&[
            "coeffs",
            k.to_str().unwrap(),
            "-k",
            steps,
            "--resolution",
            "4",
            "--samples",
            "50",
        ]);
        assert!(o.status.success());
        assert_eq!(kv(&stdout(&o), "lambda_k"), "0.0", "k={steps}");
    }
}

#[test]
fn verify_passes_three_step() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.25");
    let o = nlmarkov(&[
        "verify",
        k.to_str().unwrap(),
        "-k",
        "3",
        "--n-max",
        "200",
        "--mu0",
        "e4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# bound_holds = true"));
    let rows = body(&text);
    assert_eq!(rows[0], "n,empirical_tv,bound");
    assert_eq!(rows.len(), 202);
}

#[test]
fn verify_one_step_is_inconclusive() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.5");
    let o = nlmarkov(&["verify", k.to_str().unwrap(), "-k", "1", "--samples", "0"]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("regime inconclusive, no bound available"), "{e}");
    assert!(e.contains("either an infinite number of invariant measures or none at all"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn verify_zero_horizon_is_single_row() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.25");
    let o = nlmarkov(&[
        "verify",
        k.to_str().unwrap(),
        "-k",
        "3",
        "--n-max",
        "0",
        "--samples",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(body(&stdout(&o)).len(), 2);
}

#[test]
fn verify_flags_violation_with_exit_4() {
    // a slack far below zero forces every row to count as a violation
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.25");
    let o = nlmarkov(&[
        "verify",
        k.to_str().unwrap(),
        "-k",
        "3",
        "--n-max",
        "5",
        "--samples",
        "0",
        "--slack=-10",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("# bound_holds = false"));
    assert!(stderr(&o).contains("bound violated first at n = 0"));
}

#[test]
fn bound_subcommand() {
    let o = nlmarkov(&["bound", "--alpha", "0.5", "--lambda", "0.1", "--n-max", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# regime = exponential"));
    assert_eq!(
        body(&text),
        vec!["n,bound", "0,2.0", "1,1.2", "2,0.72", "3,0.432"]
    );

    let o = nlmarkov(&["bound", "-k", "3", "--alpha", "0.75", "--lambda", "0.125"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--lambda1"));

    let o = nlmarkov(&["bound", "--alpha", "0.2", "--lambda", "0.3"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn evolve_and_invariant() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.5");
    let o = nlmarkov(&["evolve", k.to_str().unwrap(), "--mu0", "e1", "--steps", "2"]);
    assert_eq!(
        body(&stdout(&o)),
        vec![
            "n,mu_1,mu_2,mu_3,mu_4",
            "0,1.0,0.0,0.0,0.0",
            "1,0.0,0.5,0.0,0.5",
            "2,0.25,0.5,0.0,0.25"
        ]
    );

    let o = nlmarkov(&["invariant", k.to_str().unwrap(), "--starts", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# converged = true"));
    let pi: Vec<f64> = body(&text)[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    for (p, want) in pi.iter().zip([0.25, 0.3125, 0.1875, 0.25]) {
        assert!((p - want).abs() < 1e-12);
    }

    let o = nlmarkov(&["evolve", k.to_str().unwrap(), "--mu0", "0.5,0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_uses_state_labels() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0.5");
    let labelled = dir.path().join("labelled.json");
    edit_json(&k, &labelled, |v| {
        v["states"] = serde_json::json!(["a", "b", "c", "d"])
    });
    let o = nlmarkov(&[
        "simulate",
        labelled.to_str().unwrap(),
        "--mu0",
        "e1",
        "--steps",
        "1",
        "--paths",
        "3",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = body(&text);
    assert_eq!(rows[0], "path,t,state");
    assert_eq!(rows.len(), 7);
    for r in rows[1..].iter().step_by(2) {
        assert!(r.ends_with(",0,a"), "{r}");
    }
    // from state a the next state is b or d
    for r in rows[2..].iter().step_by(2) {
        assert!(r.ends_with(",b") || r.ends_with(",d"), "{r}");
    }
}

#[test]
fn lln_subcommand() {
    let dir = TempDir::new().unwrap();
    let k = example_file(&dir, "0");
    let o = nlmarkov(&[
        "lln",
        k.to_str().unwrap(),
        "--indicator",
        "1",
        "--steps",
        "2000",
        "--paths",
        "200",
        "--regime-k",
        "3",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# regime = exponential"));
    assert!(!text.contains("# warning"));
    let rows = body(&text);
    assert_eq!(
        rows[0],
        "n_steps,n_paths,grand_mean,sample_std,target,abs_error,z_score"
    );
    let cells: Vec<f64> = rows[1].split(',').map(|c| c.parse().unwrap()).collect();
    assert!((cells[2] - 0.25).abs() < 0.01);
    assert_eq!(cells[4], 0.25);

    let o = nlmarkov(&[
        "lln",
        k.to_str().unwrap(),
        "--indicator",
        "1",
        "--n-list",
        "100,1000",
        "--paths",
        "50",
    ]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning: no coefficient report supplied"));
    assert_eq!(body(&stdout(&o)).len(), 3);

    let o = nlmarkov(&["lln", k.to_str().unwrap(), "--indicator", "9"]);
    assert_eq!(o.status.code(), Some(2));
    let o = nlmarkov(&["lln", k.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn table1_layout() {
    let o = nlmarkov(&["table1"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "# program = nlmarkov 0.1.0\n# command = table1\n# long = false\n# resolution = 8\n# argv = [\"table1\"]\n\
         gamma,k=2,k=3\n0,0.707107,0.629961\n0.5,0.866025,0.721125\n"
    );
}

#[test]
fn replay_detects_tampering() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.csv");
    assert!(nlmarkov(&[
        "table1",
        "--long",
        "--threads",
        "2",
        "-o",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# argv = [\"table1\",\"--long\"]"));

    let o = nlmarkov(&["replay", out.to_str().unwrap()]);
    assert_eq!(stdout(&o), text);
    assert_eq!(
        nlmarkov(&["replay", out.to_str().unwrap(), "--check"])
            .status
            .code(),
        Some(0)
    );

    std::fs::write(&out, text.replace("closed-form", "closed form")).unwrap();
    let o = nlmarkov(&["replay", out.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("differs at line"));

    std::fs::write(&out, "gamma,k=2\n").unwrap();
    assert_eq!(
        nlmarkov(&["replay", out.to_str().unwrap()]).status.code(),
        Some(2)
    );
}
