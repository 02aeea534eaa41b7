//! Long-format result tables and their CSV/JSON emitters.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One measured value.
///
/// `x` is the abscissa for rows that belong to a curve (a tail profile
/// grid point, a recombination rate, an interval start) and empty otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub n: usize,
    pub seed: u64,
    pub t: f64,
    pub metric: String,
    pub x: Option<f64>,
    pub value: f64,
}

impl Row {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then(self.seed.cmp(&other.seed))
            .then(self.t.total_cmp(&other.t))
            .then_with(|| self.metric.cmp(&other.metric))
            .then_with(|| match (self.x, other.x) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => a.total_cmp(&b),
            })
            .then(self.value.total_cmp(&other.value))
    }
}

/// Rows of one scenario run, kept sorted by `(n, seed, t, metric, x)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputTable {
    rows: Vec<Row>,
}

pub const COLUMNS: [&str; 7] = ["scenario", "n", "seed", "t", "metric", "x", "value"];

impl OutputTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table from rows in any order.
    pub fn from_rows(rows: Vec<Row>) -> Result<Self> {
        let mut t = Self { rows };
        for r in &t.rows {
            check_row(r)?;
        }
        t.sort();
        Ok(t)
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Row) -> Result<()> {
        check_row(&row)?;
        let at = self.rows.partition_point(|r| r.key_cmp(&row).is_le());
        self.rows.insert(at, row);
        Ok(())
    }

    /// Merges another table; the result does not depend on merge order.
    pub fn merge(&mut self, other: OutputTable) {
        self.rows.extend(other.rows);
        self.sort();
    }

    fn sort(&mut self) {
        self.rows.sort_by(Row::key_cmp);
    }

    /// Rows with the given metric, in table order.
    pub fn metric<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    /// Values of `metric` for population size `n`.
    pub fn values(&self, metric: &str, n: usize) -> Vec<f64> {
        self.metric(metric).filter(|r| r.n == n).map(|r| r.value).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = writer(Vec::new());
        write_csv(&mut w, self).map_err(|e| Error::Data(e.to_string()))?;
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    /// Parses a table written by [`emit_csv`].
    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != COLUMNS {
            return Err(Error::Data(format!("unexpected CSV header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.deserialize() {
            rows.push(rec.map_err(|e| Error::Data(e.to_string()))?);
        }
        Self::from_rows(rows)
    }
}

fn check_row(r: &Row) -> Result<()> {
    if !r.value.is_finite() || !r.t.is_finite() || r.x.is_some_and(|x| !x.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite entry in row {} n={} t={} x={:?}: {}",
            r.metric, r.n, r.t, r.x, r.value
        )));
    }
    Ok(())
}

fn writer<W: Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(inner)
}

fn write_csv<W: Write>(w: &mut csv::Writer<W>, table: &OutputTable) -> csv::Result<()> {
    w.write_record(COLUMNS)?;
    for r in &table.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Writes the table as CSV with a header row.
pub fn emit_csv(table: &OutputTable, path: &Path) -> Result<()> {
    let mut w = writer(create(path)?);
    write_csv(&mut w, table).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Data(format!("{other:?}")),
    })
}

/// Writes the table as a JSON array of row objects.
pub fn emit_json(table: &OutputTable, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &table.rows).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
