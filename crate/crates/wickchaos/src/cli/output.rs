//! Tables written as CSV (with `# key: value` metadata lines) or JSON.
//!
//! Numbers carry 12 significant digits and nothing time-dependent is
//! written, so a rerun with the same arguments is byte-identical.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use clap::ValueEnum;
use serde_json::{json, Map, Value};

use crate::mc::Estimate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round12(x);
    let a = r.abs();
    if r == 0.0 {
        "0".into()
    } else if (1e-5..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Self::Num(v) => fmt_num(*v),
            Self::Int(v) => v.to_string(),
            Self::Bool(b) => b.to_string(),
            Self::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Self::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Self::Num(v) => serde_json::Number::from_f64(round12(*v)).map(Value::Number).unwrap_or(Value::Null),
            Self::Int(v) => json!(v),
            Self::Bool(b) => json!(b),
            Self::Text(s) => json!(s),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self { name: name.into(), columns, rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    /// `(quantity, value, stderr)` convenience for summaries.
    pub fn push_estimate(&mut self, name: &str, e: &Estimate) {
        self.push(vec![name.into(), e.estimate.into(), e.stderr.into()]);
    }
}

/// Ordered `key: value` metadata shared by every table of a run.
#[derive(Clone, Debug, Default)]
pub struct Meta(pub Vec<(String, String)>);

impl Meta {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(kv) => kv.1 = value,
            None => self.0.push((key.into(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn render_csv(meta: &Meta, t: &Table) -> String {
    let mut s = String::new();
    for (k, v) in &meta.0 {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "# table: {}", t.name);
    let _ = writeln!(s, "{}", t.columns.join(","));
    for r in &t.rows {
        let cells: Vec<String> = r.iter().map(Cell::csv).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn table_json(meta: &Meta, t: &Table) -> Value {
    let mut m = Map::new();
    for (k, v) in &meta.0 {
        m.insert(k.clone(), json!(v));
    }
    m.insert("table".into(), json!(t.name));
    let rows: Vec<Value> = t.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
    json!({ "meta": m, "columns": t.columns, "rows": rows })
}

/// Writes each table to `DIR/<name>.<ext>`, or all of them to stdout
/// (CSV blocks separated by a blank line, JSON one object per line).
pub fn emit(meta: &Meta, tables: &[Table], format: Format, out: Option<&Path>) -> std::io::Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for t in tables {
                let body = match format {
                    Format::Csv => render_csv(meta, t),
                    Format::Json => pretty(&table_json(meta, t)),
                };
                std::fs::write(dir.join(format!("{}.{}", t.name, format.ext())), body)?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for (i, t) in tables.iter().enumerate() {
                match format {
                    Format::Csv => {
                        if i > 0 {
                            writeln!(w)?;
                        }
                        write!(w, "{}", render_csv(meta, t))?;
                    }
                    Format::Json => writeln!(w, "{}", table_json(meta, t))?,
                }
            }
        }
    }
    Ok(())
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(-2.0e-9), "-2e-9");
        assert_eq!(fmt_num(123456.0), "123456");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn csv_quotes_text_with_commas() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["p, q".into(), 1.5.into()]);
        let mut m = Meta::default();
        m.set("seed", 3);
        assert_eq!(render_csv(&m, &t), "# seed: 3\n# table: x\na,b\n\"p, q\",1.5\n");
    }
}
