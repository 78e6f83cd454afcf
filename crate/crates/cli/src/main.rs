mod args;
mod commands;
mod config;
mod output;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command, Format};
use output::Report;

/// Exit codes: 0 ok, 1 usage or invalid input, 2 obstruction or wrong
/// dispatch, 3 budget exceeded.
fn exit_code(e: &polysum::Error) -> u8 {
    use polysum::Error::*;
    match e {
        InvalidInput(_) | Config(_) | NotTheoremMode { .. } => 1,
        Obstruction { .. } | Dispatch(_) => 2,
        BudgetExceeded(_) => 3,
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let start = Instant::now();
    let result = match &cli.command {
        Command::Replay(r) => replay(&r.file),
        _ => commands::run(&cli).map_err(|e| (exit_code(&e), e.to_string())),
    };
    let report = match result {
        Ok(r) => r,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    let header = output::header(serde_json::to_value(&cli).unwrap(), &replay_argv(&argv));
    let footer = output::footer(&report.summary, report.exit, start.elapsed().as_millis());
    let written = match &cli.output {
        Some(path) => File::create(path).and_then(|f| {
            output::write(
                &mut BufWriter::new(f),
                cli.format,
                &header,
                &report,
                &footer,
            )
        }),
        None => output::write(
            &mut std::io::stdout().lock(),
            cli.format,
            &header,
            &report,
            &footer,
        ),
    };
    if let Err(e) = written {
        eprintln!("error: writing output: {e}");
        return ExitCode::from(1);
    }
    if cli.format == Format::Csv {
        eprintln!("{}", report.summary);
    }
    ExitCode::from(report.exit as u8)
}

/// The argv that reproduces a run, without output-only flags.
fn replay_argv(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(1) {
        if skip {
            skip = false;
            continue;
        }
        if matches!(a.as_str(), "--output" | "--format" | "--threads") {
            skip = true;
            continue;
        }
        if ["--output=", "--format=", "--threads="]
            .iter()
            .any(|p| a.starts_with(p))
        {
            continue;
        }
        out.push(a.clone());
    }
    out
}

struct Stored {
    header: Value,
    records: Vec<Value>,
    summary: Value,
}

fn read_stream(path: &std::path::Path) -> Result<Stored, String> {
    let f = File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    let mut stored = Stored {
        header: Value::Null,
        records: Vec::new(),
        summary: Value::Null,
    };
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let mut v: Value =
            serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let kind = v
            .get("type")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        match kind.as_str() {
            "header" => stored.header = v,
            "record" => {
                v.as_object_mut().unwrap().remove("type");
                stored.records.push(v);
            }
            "summary" => stored.summary = v["summary"].clone(),
            _ => return Err(format!("line {}: unknown line type", i + 1)),
        }
    }
    if stored.header.is_null() {
        return Err("no header line; replay needs JSON-lines output".into());
    }
    Ok(stored)
}

/// Re-runs the argv echoed in a stored header and compares records and
/// summary. Exit 1 on any difference.
fn replay(path: &std::path::Path) -> Result<Report, (u8, String)> {
    let stored = read_stream(path).map_err(|e| (1, e))?;
    let argv: Vec<String> = serde_json::from_value(stored.header["argv"].clone())
        .map_err(|e| (1, format!("bad argv in header: {e}")))?;
    let mut full = vec!["polysum".to_string()];
    full.extend(argv.iter().cloned());
    let cli = Cli::try_parse_from(&full).map_err(|e| (1, e.to_string()))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err((1, "refusing to replay a replay".into()));
    }
    let fresh = commands::run(&cli).map_err(|e| (exit_code(&e), e.to_string()))?;
    let config_same = serde_json::to_value(&cli).unwrap() == stored.header["config"];
    let records_same = fresh.records == stored.records;
    let summary_same = fresh.summary == stored.summary;
    let first_diff = fresh
        .records
        .iter()
        .zip(&stored.records)
        .position(|(a, b)| a != b);
    let identical = config_same && records_same && summary_same;
    let mut rep = Report::new(
        Vec::new(),
        json!({
            "replayed": argv,
            "records": stored.records.len(),
            "config_identical": config_same,
            "records_identical": records_same,
            "summary_identical": summary_same,
            "first_difference": first_diff,
            "identical": identical,
        }),
    );
    if !identical {
        rep.exit = 1;
    }
    Ok(rep)
}
