//! Delimited-text input and output.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::TrainingSlice;
use crate::error::{MondrianError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    /// A bare non-negative integer is an index, anything else a name.
    pub fn parse(s: &str) -> Self {
        s.parse().map(LabelColumn::Index).unwrap_or_else(|_| LabelColumn::Name(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub label: LabelColumn,
    pub delimiter: u8,
    pub header: bool,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>, label: LabelColumn) -> Self {
        DatasetSpec { path: path.into(), label, delimiter: b',', header: true }
    }
}

/// A fully numeric table with an optional header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub width: usize,
    /// Row-major cells.
    pub cells: Vec<f64>,
}

impl Table {
    pub fn rows(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.cells.len() / self.width
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.width..(i + 1) * self.width]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.cells[i * self.width + c]).collect()
    }

    /// Row-major copy of every column except `skip`.
    pub fn without_column(&self, skip: Option<usize>) -> Vec<f64> {
        (0..self.rows())
            .flat_map(|i| {
                self.row(i).iter().enumerate().filter(move |(c, _)| Some(*c) != skip).map(|(_, &v)| v)
            })
            .collect()
    }

    pub fn resolve(&self, label: &LabelColumn) -> Result<usize> {
        match label {
            LabelColumn::Index(i) if *i < self.width => Ok(*i),
            LabelColumn::Index(i) => {
                Err(MondrianError::usage(format!("label column {i} is out of range for {} columns", self.width)))
            }
            LabelColumn::Name(name) => self
                .header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| MondrianError::usage(format!("no column named '{name}'"))),
        }
    }
}

fn parse_err(line: u64, col: usize, msg: impl Into<String>) -> MondrianError {
    MondrianError::Parse { line, col, msg: msg.into() }
}

/// Reads a delimited file of finite numbers. Lines and columns in errors are
/// 1-based.
pub fn read_table(path: &Path, delimiter: u8, header: bool) -> Result<Table> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut names = None;
    let mut width = None;
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if header && names.is_none() {
            names = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_err(line, record.len().min(w) + 1, format!("expected {w} fields, found {}", record.len())));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, c + 1, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, c + 1, format!("non-finite value '{field}'")));
            }
            cells.push(v);
        }
    }
    if cells.is_empty() {
        return Err(MondrianError::EmptyDataset);
    }
    Ok(Table { header: names, width: width.unwrap_or(0), cells })
}

pub fn load_csv(spec: &DatasetSpec) -> Result<TrainingSlice> {
    let table = read_table(&spec.path, spec.delimiter, spec.header)?;
    let label = table.resolve(&spec.label)?;
    if table.width < 2 {
        return Err(MondrianError::usage("a dataset needs at least one feature column besides the label"));
    }
    TrainingSlice::new(table.width - 1, table.without_column(Some(label)), table.column(label))
}

/// Feature-only rows, e.g. prediction inputs.
pub fn load_features(path: &Path, delimiter: u8, header: bool) -> Result<(usize, Vec<f64>)> {
    let table = read_table(path, delimiter, header)?;
    Ok((table.width, table.cells))
}

/// Round-trip float formatting with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header line and numeric rows.
pub fn write_table<W: Write, R: AsRef<[f64]>>(mut sink: W, delimiter: u8, header: &[&str], rows: &[R]) -> Result<()> {
    let sep = (delimiter as char).to_string();
    if !header.is_empty() {
        writeln!(sink, "{}", header.join(&sep))?;
    }
    for row in rows {
        let fields: Vec<String> = row.as_ref().iter().map(|&v| format_float(v)).collect();
        writeln!(sink, "{}", fields.join(&sep))?;
    }
    sink.flush()?;
    Ok(())
}

/// Writes a dataset with columns `x0..x{D-1},y`.
pub fn write_csv<W: Write>(sink: W, slice: &TrainingSlice) -> Result<()> {
    let mut header: Vec<String> = (0..slice.dim()).map(|d| format!("x{d}")).collect();
    header.push("y".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = slice
        .rows()
        .zip(slice.labels())
        .map(|(x, &y)| x.iter().copied().chain([y]).collect())
        .collect();
    write_table(sink, b',', &header, &rows)
}

/// Replaces the listed columns of row-major `points` by their natural log.
pub fn apply_log_cols(points: &mut [f64], dim: usize, cols: &[usize]) -> Result<()> {
    if let Some(&c) = cols.iter().find(|&&c| c >= dim) {
        return Err(MondrianError::usage(format!("log column {c} is out of range for {dim} columns")));
    }
    for (i, row) in points.chunks_exact_mut(dim).enumerate() {
        for &c in cols {
            if row[c] <= 0.0 {
                return Err(MondrianError::usage(format!(
                    "row {} column {c} is not positive and cannot be log-transformed",
                    i + 1
                )));
            }
            row[c] = row[c].ln();
        }
    }
    Ok(())
}
