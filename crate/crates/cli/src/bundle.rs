//! Result bundles: unit-annotated tables written as CSV next to a JSON
//! manifest carrying the command, config hash, metrics and provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::schema::{Kind, TableSchema};

pub const FORMAT: &str = "twomode-result-bundle/1";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    T(String),
    B(bool),
    Empty,
}

impl Cell {
    fn fits(&self, kind: Kind) -> bool {
        matches!(
            (self, kind),
            (Cell::Empty, _) | (Cell::F(_), Kind::Float) | (Cell::I(_), Kind::Int) | (Cell::T(_), Kind::Text) | (Cell::B(_), Kind::Bool)
        )
    }

    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_float(*v),
            Cell::I(v) => v.to_string(),
            Cell::T(s) => s.clone(),
            Cell::B(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::T(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::T(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub schema: &'static TableSchema,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(schema: &'static TableSchema) -> Self {
        Self { schema, rows: Vec::new() }
    }

    /// Appends a row; panics on a row that does not match the schema, which
    /// is a programming error rather than a data error.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.schema.columns.len(), "row width for table `{}`", self.schema.name);
        for (c, col) in row.iter().zip(self.schema.columns) {
            assert!(c.fits(col.kind), "cell {c:?} in column `{}` of `{}`", col.name, self.schema.name);
        }
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.schema.columns.iter().map(|c| c.header()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        Ok(w.into_inner()?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub twomode_version: &'static str,
    pub cli_version: &'static str,
}

#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    /// Keys carry their unit as a suffix.
    pub metrics: BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct ColumnEntry<'a> {
    name: &'a str,
    unit: &'a str,
    kind: Kind,
}

#[derive(Serialize)]
struct TableEntry<'a> {
    name: &'a str,
    file: String,
    rows: usize,
    columns: Vec<ColumnEntry<'a>>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    command: &'a str,
    config_hash: &'a str,
    provenance: Provenance,
    metrics: &'a BTreeMap<String, Value>,
    tables: Vec<TableEntry<'a>>,
}

impl ResultBundle {
    pub fn new(command: &'static str, config_hash: String, seed: u64) -> Self {
        Self {
            command,
            config_hash,
            seed,
            tables: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn metric(&mut self, key: &str, v: impl Into<Value>) {
        let v = v.into();
        // JSON has no NaN; keep the key and mark it missing
        let v = match v.as_f64() {
            Some(f) if !f.is_finite() => Value::Null,
            _ => v,
        };
        self.metrics.insert(key.to_string(), v);
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.schema.name == name)
    }

    pub fn manifest_json(&self) -> Result<String> {
        let m = Manifest {
            format: FORMAT,
            command: self.command,
            config_hash: &self.config_hash,
            provenance: Provenance {
                seed: self.seed,
                twomode_version: twomode::VERSION,
                cli_version: env!("CARGO_PKG_VERSION"),
            },
            metrics: &self.metrics,
            tables: self
                .tables
                .iter()
                .map(|t| TableEntry {
                    name: t.schema.name,
                    file: format!("{}.csv", t.schema.name),
                    rows: t.rows.len(),
                    columns: t
                        .schema
                        .columns
                        .iter()
                        .map(|c| ColumnEntry {
                            name: c.name,
                            unit: c.unit,
                            kind: c.kind,
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `bundle.json` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut seen = std::collections::HashSet::new();
        for t in &self.tables {
            if !seen.insert(t.schema.name) {
                bail!("duplicate table `{}`", t.schema.name);
            }
            let p = dir.join(format!("{}.csv", t.schema.name));
            fs::write(&p, t.to_csv()?).with_context(|| format!("writing {}", p.display()))?;
        }
        let p = dir.join("bundle.json");
        fs::write(&p, self.manifest_json()?).with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }
}
