use std::io::Write;

use serde_json::{Map, Value};

use crate::args::Format;

/// Everything a command produces. `records` are streamed one per line (or
/// CSV row); `summary` closes the JSON stream.
pub struct Report {
    pub records: Vec<Value>,
    pub summary: Value,
    pub exit: i32,
}

impl Report {
    pub fn new(records: Vec<Value>, summary: Value) -> Self {
        Self {
            records,
            summary,
            exit: 0,
        }
    }
}

/// Header line of a JSON-lines stream: the config echo. Nothing time-dependent.
pub fn header(config: Value, argv: &[String]) -> Value {
    serde_json::json!({
        "type": "header",
        "tool": "polysum",
        "version": env!("CARGO_PKG_VERSION"),
        "argv": argv,
        "config": config,
    })
}

/// Closing line. Wall-clock timing lives only in its `timing` field.
pub fn footer(summary: &Value, exit: i32, elapsed_ms: u128) -> Value {
    serde_json::json!({
        "type": "summary",
        "summary": summary,
        "exit": exit,
        "timing": { "elapsed_ms": elapsed_ms },
    })
}

pub fn write(
    out: &mut dyn Write,
    format: Format,
    header: &Value,
    report: &Report,
    footer: &Value,
) -> std::io::Result<()> {
    match format {
        Format::Json => {
            writeln!(out, "{header}")?;
            for r in &report.records {
                let mut line = Map::new();
                line.insert("type".into(), "record".into());
                if let Value::Object(m) = r {
                    line.extend(m.clone());
                } else {
                    line.insert("value".into(), r.clone());
                }
                writeln!(out, "{}", Value::Object(line))?;
            }
            writeln!(out, "{footer}")?;
        }
        Format::Csv => write_csv(out, &report.records)?,
    }
    out.flush()
}

/// Column order is first appearance over all records; nested values are
/// embedded as JSON text.
fn write_csv(out: &mut dyn Write, records: &[Value]) -> std::io::Result<()> {
    let mut columns: Vec<String> = Vec::new();
    for r in records {
        if let Value::Object(m) = r {
            for k in m.keys() {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&columns)?;
    for r in records {
        let row = columns.iter().map(|c| cell(r.get(c)));
        w.write_record(row)?;
    }
    w.flush()
}

pub fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}
