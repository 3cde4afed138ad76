//! Flat result records: JSON-lines with a `kind` tag per record, plus a
//! CSV projection of one record kind. Key order is fixed by insertion, so
//! identical runs serialize to identical bytes. Non-finite floats are not
//! representable in JSON and appear as the strings "inf", "-inf", "nan".

use std::fs;
use std::path::Path;

use serde_json::{Map, Number, Value};

use crate::error::Result;

/// One flat key-value record.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    map: Map<String, Value>,
}

impl Record {
    pub fn new(kind: &str) -> Self {
        let mut map = Map::new();
        map.insert("kind".into(), Value::String(kind.into()));
        Self { map }
    }

    pub fn kind(&self) -> &str {
        self.map
            .get("kind")
            .and_then(Value::as_str)
            .unwrap_or_default()
    }

    pub fn str(mut self, key: &str, value: &str) -> Self {
        self.map.insert(key.into(), Value::String(value.into()));
        self
    }

    pub fn u64(mut self, key: &str, value: u64) -> Self {
        self.map.insert(key.into(), Value::Number(value.into()));
        self
    }

    pub fn usize(self, key: &str, value: usize) -> Self {
        self.u64(key, value as u64)
    }

    pub fn bool(mut self, key: &str, value: bool) -> Self {
        self.map.insert(key.into(), Value::Bool(value));
        self
    }

    pub fn f64(mut self, key: &str, value: f64) -> Self {
        let v = match Number::from_f64(value) {
            Some(n) => Value::Number(n),
            None => Value::String(
                if value.is_nan() {
                    "nan"
                } else if value > 0.0 {
                    "inf"
                } else {
                    "-inf"
                }
                .into(),
            ),
        };
        self.map.insert(key.into(), v);
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.map.get(key)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        match self.map.get(key)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => match s.as_str() {
                "inf" => Some(f64::INFINITY),
                "-inf" => Some(f64::NEG_INFINITY),
                "nan" => Some(f64::NAN),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&Value::Object(self.map.clone())).expect("records are finite maps")
    }

    fn keys(&self) -> Vec<&str> {
        self.map.keys().map(String::as_str).collect()
    }

    fn value_as_csv(&self, key: &str) -> String {
        match self.map.get(key) {
            None => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(Value::Bool(b)) => b.to_string(),
            Some(Value::Number(n)) => n.to_string(),
            Some(other) => other.to_string(),
        }
    }
}

/// Serializes records as JSON lines.
pub fn to_jsonl(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

pub fn write_jsonl(records: &[Record], path: &Path) -> Result<()> {
    fs::write(path, to_jsonl(records))?;
    Ok(())
}

/// CSV projection of the records of one kind; the header comes from the
/// first matching record. Values in this crate never contain commas or
/// quotes, so no escaping is performed.
pub fn csv_projection(records: &[Record], kind: &str) -> String {
    let rows: Vec<&Record> = records.iter().filter(|r| r.kind() == kind).collect();
    let Some(first) = rows.first() else {
        return String::new();
    };
    let header = first.keys();
    let mut out = header.join(",");
    out.push('\n');
    for row in &rows {
        let line: Vec<String> = header.iter().map(|k| row.value_as_csv(k)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(records: &[Record], kind: &str, path: &Path) -> Result<()> {
    fs::write(path, csv_projection(records, kind))?;
    Ok(())
}
