//! Command-line front end: model files in, text summaries and JSON run
//! reports out. Exit codes: 0 ok, 1 usage, 2 parse or validation, 3
//! numerical failure.

pub mod args;
pub mod commands;
pub mod error;
pub mod model_file;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use serde_json::Value;

use args::{Cli, Command, Common};
use commands::Output;
use error::CliError;
use model_file::ModelFile;
use report::{sha256_hex, sig12, RunReport, Timings, TOOL_VERSION};

/// Rounds every non-integer number to 12 significant digits.
pub fn round_numbers(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            serde_json::Number::from_f64(sig12(n.as_f64().expect("f64 number")))
                .map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_numbers).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_numbers(v))).collect()),
        other => other,
    }
}

fn load(path: &Path) -> Result<(imc_hitting::Model, String), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Parse(format!("{} is not UTF-8", path.display())))?;
    let model = ModelFile::parse(&text)
        .map_err(|e| CliError::Parse(format!("{}: {}", path.display(), strip_prefix(&e))))?
        .to_model()?;
    Ok((model, sha256_hex(&bytes)))
}

fn strip_prefix(e: &CliError) -> String {
    match e {
        CliError::Parse(m) => m.clone(),
        other => other.to_string(),
    }
}

fn emit(common: &Common, report: &RunReport, out: &Output) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).expect("report serialises") + "\n";
    let to_stdout = common.json.as_deref() == Some(Path::new("-"));
    if to_stdout {
        eprint!("{}", out.text);
        print!("{json}");
    } else {
        print!("{}", out.text);
        if let Some(path) = &common.json {
            std::fs::write(path, json)
                .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    for note in &out.notes {
        eprintln!("note: {note}");
    }
    std::io::stdout().flush().ok();
    Ok(())
}

fn execute(command: &Command, echo: Vec<String>, clock: Instant) -> Result<(), CliError> {
    let (name, common) = match command {
        Command::Check(a) => ("check", &a.common),
        Command::Solve(a) => ("solve", &a.common),
        Command::Converge(a) => ("converge", &a.common),
        Command::Simulate(a) => ("simulate", &a.common),
        Command::Diagnose(a) => ("diagnose", &a.common),
    };
    let (model, hash) = load(&common.model)?;
    let mut out = match command {
        Command::Check(a) => commands::check(model, a),
        Command::Solve(a) => commands::solve(model, a),
        Command::Converge(a) => commands::converge(model, a),
        Command::Simulate(a) => commands::simulate(model, a),
        Command::Diagnose(a) => commands::diagnose(model, a),
    }?;
    let report = RunReport {
        subcommand: name.to_string(),
        command: echo,
        tool_version: TOOL_VERSION.to_string(),
        model_hash: hash,
        seed: out.seed,
        timings: Timings {
            total_seconds: clock.elapsed().as_secs_f64(),
        },
        results: round_numbers(std::mem::take(&mut out.results)),
    };
    emit(common, &report, &out)?;
    match out.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let echo = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(&cli.command, echo, Instant::now()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
