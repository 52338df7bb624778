mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use nlmarkov::output::Header;

use crate::args::{Cli, Command, ReplayArgs};
use crate::commands::{canonical_argv, execute, CliError, Outcome, EXIT_OTHER};

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => return fail(&CliError::other(format!("thread pool: {e}"))),
    };
    let result = pool.install(|| match &cli.command {
        Command::Replay(a) => replay(a),
        cmd => execute(cmd, &canonical_argv(&raw)),
    });
    match result {
        Ok(out) => {
            if let Err(e) = emit(&out, cli.output.as_deref()) {
                return fail(&e);
            }
            for note in &out.notes {
                eprintln!("warning: {note}");
            }
            ExitCode::from(out.code as u8)
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.code as u8)
}

fn emit(out: &Outcome, path: Option<&std::path::Path>) -> Result<(), CliError> {
    let res = match path {
        Some(p) => std::fs::write(p, &out.text),
        None => std::io::stdout().lock().write_all(out.text.as_bytes()),
    };
    res.map_err(|e| CliError::other(format!("writing output: {e}")))
}

/// Regenerates a file from the `argv` recorded in its header.
fn replay(a: &ReplayArgs) -> Result<Outcome, CliError> {
    let original = std::fs::read_to_string(&a.file)
        .map_err(|e| CliError::other(format!("{}: {e}", a.file.display())))?;
    let header = Header::parse(&original);
    let recorded = header
        .get("argv")
        .ok_or_else(|| CliError::validation(format!("{}: no argv in header", a.file.display())))?;
    let argv: Vec<String> = serde_json::from_str(recorded).map_err(|e| {
        CliError::validation(format!("{}: bad argv in header: {e}", a.file.display()))
    })?;
    let cli =
        Cli::try_parse_from(std::iter::once("nlmarkov".to_string()).chain(argv.iter().cloned()))
            .map_err(|e| CliError::validation(format!("recorded argv does not parse: {e}")))?;
    if let Command::Replay(_) = cli.command {
        return Err(CliError::validation("recorded argv is itself a replay"));
    }
    let mut out = execute(&cli.command, &argv)?;
    if a.check {
        if out.text == original {
            out.text = format!("identical: {}\n", a.file.display());
            out.code = 0;
            out.notes.clear();
        } else {
            let line = out
                .text
                .lines()
                .zip(original.lines())
                .position(|(x, y)| x != y)
                .unwrap_or_else(|| out.text.lines().count().min(original.lines().count()));
            return Err(CliError {
                code: EXIT_OTHER,
                message: format!(
                    "{}: regenerated output differs at line {}",
                    a.file.display(),
                    line + 1
                ),
            });
        }
    }
    Ok(out)
}
