//! Report envelope and CSV tables.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A rectangular table; cells are pre-formatted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Rows as JSON objects keyed by column, numbers parsed back where
    /// possible.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj = self.columns.iter().zip(row).map(|(c, v)| (c.clone(), cell_value(v))).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

fn cell_value(v: &str) -> Value {
    if let Ok(b) = v.parse::<bool>() {
        return Value::Bool(b);
    }
    if let Ok(i) = v.parse::<i64>() {
        return Value::from(i);
    }
    match v.parse::<f64>() {
        Ok(f) if f.is_finite() => Value::from(f),
        _ => Value::String(v.to_string()),
    }
}

fn csv_cell(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

/// Hex SHA-256 of the canonical JSON of `config`.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a subcommand reports.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub table: Table,
    /// Structured results beyond the table, JSON output only.
    pub extra: Value,
}

impl Report {
    pub fn new<C: Serialize>(command: &'static str, config: &C, seed: Option<u64>, table: Table) -> Self {
        Self {
            command,
            config: serde_json::to_value(config).expect("configs serialize"),
            config_hash: config_hash(config),
            seed,
            table,
            extra: Value::Null,
        }
    }

    pub fn with_extra(mut self, extra: Value) -> Self {
        self.extra = extra;
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut doc = serde_json::json!({
                    "schemaVersion": SCHEMA_VERSION,
                    "command": self.command,
                    "libraryVersion": env!("CARGO_PKG_VERSION"),
                    "configHash": self.config_hash,
                    "seed": self.seed,
                    "config": self.config,
                    "rows": self.table.to_json(),
                });
                if !self.extra.is_null() {
                    doc["results"] = self.extra.clone();
                }
                let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Csv => {
                let mut s = format!(
                    "# schemaVersion={SCHEMA_VERSION} command={} libraryVersion={} configHash={}\n",
                    self.command,
                    env!("CARGO_PKG_VERSION"),
                    self.config_hash
                );
                let line = |cells: &[String]| cells.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(",");
                s.push_str(&line(&self.table.columns));
                s.push('\n');
                for row in &self.table.rows {
                    s.push_str(&line(row));
                    s.push('\n');
                }
                s
            }
        }
    }
}
