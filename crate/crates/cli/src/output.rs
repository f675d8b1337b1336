//! Tabular output as CSV or JSON.

use std::io::Write;

use anyhow::Result;
use serde_json::{json, Map, Value};

use crate::config::FormatArg;

/// Bumped whenever a column or metadata key changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    /// Printed with nine significant digits.
    Float(f64),
    Text(String),
    Na,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Cell {
        v.map_or(Cell::Na, Cell::Float)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => sci(*v),
            Cell::Text(s) => s.clone(),
            Cell::Na => "NA".into(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            // round through the printed form so both formats carry the same digits
            Cell::Float(v) if v.is_finite() => json!(sci(*v).parse::<f64>().expect("formatted float")),
            Cell::Float(_) | Cell::Na => Value::Null,
            Cell::Text(s) => json!(s),
        }
    }
}

pub fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Clone, Debug)]
pub struct Table {
    pub command: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Run-level facts, printed as comment lines in CSV.
    pub meta: Vec<(&'static str, Cell)>,
}

impl Table {
    pub fn new(command: &'static str, columns: &[&'static str]) -> Table {
        Table { command, columns: columns.to_vec(), rows: Vec::new(), meta: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: &'static str, value: Cell) {
        self.meta.push((key, value));
    }

    pub fn write(&self, format: FormatArg, w: &mut impl Write) -> Result<()> {
        match format {
            FormatArg::Csv => self.write_csv(w),
            FormatArg::Json => self.write_json(w),
        }
    }

    fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
        writeln!(w, "# command={}", self.command)?;
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={}", v.csv())?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    fn write_json(&self, w: &mut impl Write) -> Result<()> {
        let meta: Map<String, Value> = self.meta.iter().map(|(k, v)| (k.to_string(), v.json())).collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect()))
            .collect();
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "meta": meta,
            "columns": self.columns,
            "rows": rows,
        });
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        writeln!(w)?;
        Ok(())
    }
}
