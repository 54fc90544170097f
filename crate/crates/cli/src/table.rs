//! Result tables: `#`-prefixed metadata followed by comma-separated rows.

use std::fmt;
use std::io::{self, BufRead, Write};

use crate::config::num;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    F64,
    I64,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::F64 => "f64",
            Kind::I64 => "i64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: Kind,
}

impl Column {
    pub fn f64(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: Kind::F64 }
    }

    pub fn i64(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: Kind::I64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    /// No data, e.g. an empty histogram bin or an unfitted quantity.
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Float(x) => f.write_str(&num(*x)),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    /// Ordered `key: value` metadata. Keys may repeat (`config`, `warning`).
    pub header: Vec<(String, String)>,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug)]
pub enum TableError {
    Io(io::Error),
    Csv(csv::Error),
    Format(String),
}

impl fmt::Display for TableError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableError::Io(e) => write!(f, "{e}"),
            TableError::Csv(e) => write!(f, "{e}"),
            TableError::Format(m) => write!(f, "malformed table: {m}"),
        }
    }
}

impl std::error::Error for TableError {}

impl From<io::Error> for TableError {
    fn from(e: io::Error) -> Self {
        TableError::Io(e)
    }
}

impl From<csv::Error> for TableError {
    fn from(e: csv::Error) -> Self {
        TableError::Csv(e)
    }
}

impl ResultTable {
    pub fn new(columns: Vec<Column>) -> Self {
        Self { header: Vec::new(), columns, rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl fmt::Display) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn header_values(&self, key: &str) -> Vec<&str> {
        self.header.iter().filter(|(k, _)| k == key).map(|(_, v)| v.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let j = self.columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write(&self, out: &mut impl Write) -> Result<(), TableError> {
        for (k, v) in &self.header {
            writeln!(out, "# {k}: {v}")?;
        }
        let types: Vec<&str> = self.columns.iter().map(|c| c.kind.name()).collect();
        writeln!(out, "# types: {}", types.join(","))?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn read(input: impl BufRead) -> Result<Self, TableError> {
        let mut header = Vec::new();
        let mut types = None;
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest.split_once(": ").or_else(|| rest.strip_suffix(':').map(|k| (k, ""))).ok_or_else(|| TableError::Format(format!("header line `{line}`")))?;
                if k == "types" {
                    types = Some(v.split(',').map(str::to_string).collect::<Vec<_>>());
                } else {
                    header.push((k.to_string(), v.to_string()));
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let types = types.ok_or_else(|| TableError::Format("missing `# types` line".into()))?;
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let names = r.headers()?.clone();
        if names.len() != types.len() {
            return Err(TableError::Format(format!("{} columns but {} types", names.len(), types.len())));
        }
        let columns = names
            .iter()
            .zip(&types)
            .map(|(n, t)| match t.as_str() {
                "f64" => Ok(Column::f64(n)),
                "i64" => Ok(Column::i64(n)),
                other => Err(TableError::Format(format!("unknown column type `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let row = record
                .iter()
                .zip(&columns)
                .map(|(s, c)| {
                    if s.is_empty() {
                        return Ok(Cell::Empty);
                    }
                    match c.kind {
                        Kind::F64 => s.parse().map(Cell::Float).map_err(|_| TableError::Format(format!("`{s}` in column {}", c.name))),
                        Kind::I64 => s.parse().map(Cell::Int).map_err(|_| TableError::Format(format!("`{s}` in column {}", c.name))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { header, columns, rows })
    }
}

/// Recovers the config text echoed into a table header.
pub fn echoed_config(text: &str) -> Option<String> {
    let lines: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("# config:")).map(|l| l.strip_prefix(' ').unwrap_or(l)).collect();
    if lines.is_empty() {
        return None;
    }
    let mut out = lines.join("\n");
    out.push('\n');
    Some(out)
}
