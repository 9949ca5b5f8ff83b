//! CSV/JSON emission with the run metadata attached.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Sorted key/value record of every resolved parameter of a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Metadata(BTreeMap<String, Value>);

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.insert("command", command);
        m.insert("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn insert<V: Serialize>(&mut self, key: &str, value: V) {
        self.0.insert(key.to_string(), serde_json::to_value(value).expect("metadata serializes"));
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(&self.0).expect("metadata serializes")
    }

    fn comment_block(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("# {k}: {s}\n"),
                other => format!("# {k}: {other}\n"),
            })
            .collect()
    }
}

/// RFC 4180 body followed by a `#` metadata block.
pub fn csv_with_metadata(header: &[&str], rows: &[Vec<String>], meta: &Metadata) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8");
    body + &meta.comment_block()
}

pub fn json_with_metadata(mut result: serde_json::Map<String, Value>, meta: &Metadata) -> String {
    result.insert("metadata".into(), meta.to_value());
    let mut s = serde_json::to_string_pretty(&Value::Object(result)).expect("json serializes");
    s.push('\n');
    s
}

pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

/// Shortest round-trip formatting, in exponent form outside `[1e-4, 1e6)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
