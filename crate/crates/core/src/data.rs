//! Datasets: an n × d sample matrix and the regression pair (X, y).
//!
//! Rows are individuals; two datasets are adjacent when they differ in one row.
//! Both types read and write headerless CSV, one row per line. Regression
//! files carry the response in the last column.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Row-major n × d matrix of finite reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        ensure(n >= 1 && d >= 1, || format!("matrix must be at least 1 x 1, got {n} x {d}"))?;
        ensure(values.len() == n * d, || {
            format!("expected {} values for a {n} x {d} matrix, got {}", n * d, values.len())
        })?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(DataMatrix { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        ensure(!rows.is_empty(), || "matrix needs at least one row".into())?;
        let d = rows[0].len();
        ensure(rows.iter().all(|r| r.len() == d), || "rows have unequal lengths".into())?;
        DataMatrix::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    /// Sub-matrix made of the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        ensure(idx.iter().all(|&i| i < self.n), || "row index out of range".into())?;
        let mut values = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix::new(idx.len(), self.d, values)
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.d];
        for row in self.rows() {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        let n = self.n as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_rows(reader)?;
        DataMatrix::from_rows(&rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(writer, self.rows())
    }
}

/// Returns a copy of `x` with row `row` replaced by `replacement`.
pub fn adjacent_datasets(x: &DataMatrix, row: usize, replacement: &[f64]) -> Result<DataMatrix> {
    ensure(row < x.n, || format!("row {row} out of range for n = {}", x.n))?;
    ensure(replacement.len() == x.d, || {
        format!("replacement has length {}, expected {}", replacement.len(), x.d)
    })?;
    let mut values = x.values.clone();
    values[row * x.d..(row + 1) * x.d].copy_from_slice(replacement);
    DataMatrix::new(x.n, x.d, values)
}

/// Design matrix and responses for the linear model y = Xβ + noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    x: DataMatrix,
    y: Vec<f64>,
}

impl RegressionData {
    pub fn new(x: DataMatrix, y: Vec<f64>) -> Result<Self> {
        ensure(x.n == y.len(), || {
            format!("design has {} rows but {} responses", x.n, y.len())
        })?;
        ensure(y.iter().all(|v| v.is_finite()), || "non-finite response".into())?;
        Ok(RegressionData { x, y })
    }

    pub fn x(&self) -> &DataMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.n
    }

    pub fn d(&self) -> usize {
        self.x.d
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(idx)?;
        let y = idx.iter().map(|&i| self.y[i]).collect();
        RegressionData::new(x, y)
    }

    /// Replaces individual `row` with `(response, features)`.
    pub fn adjacent(&self, row: usize, response: f64, features: &[f64]) -> Result<Self> {
        let x = adjacent_datasets(&self.x, row, features)?;
        let mut y = self.y.clone();
        y[row] = response;
        RegressionData::new(x, y)
    }

    /// Reads CSV rows `x_1, ..., x_d, y`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_rows(reader)?;
        ensure(!rows.is_empty(), || "regression file is empty".into())?;
        ensure(rows[0].len() >= 2, || {
            "regression rows need at least one feature and a response".into()
        })?;
        let mut y = Vec::with_capacity(rows.len());
        let mut features = Vec::with_capacity(rows.len());
        for mut r in rows {
            y.push(r.pop().expect("checked non-empty"));
            features.push(r);
        }
        RegressionData::new(DataMatrix::from_rows(&features)?, y)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .x
            .rows()
            .zip(&self.y)
            .map(|(r, y)| {
                let mut v = r.to_vec();
                v.push(*y);
                v
            })
            .collect();
        write_rows(writer, rows.iter().map(Vec::as_slice))
    }
}

fn read_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("line {}: {e}", line + 1)))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::Data(format!("line {}: cannot parse {field:?} as a number", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("line {}: non-finite value {bad}", line + 1)));
        }
        rows.push(row);
    }
    ensure(!rows.is_empty(), || "no data rows".into()).map_err(|e| Error::Data(e.to_string()))?;
    let d = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        return Err(Error::Data(format!(
            "line {}: expected {d} fields, found {}",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(rows)
}

/// Writes rows with shortest round-trip decimal formatting.
pub(crate) fn write_rows<'a, W: Write>(
    writer: W,
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in rows {
        w.write_record(row.iter().map(|v| format_real(*v)))
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest decimal string that parses back to the same f64.
pub fn format_real(v: f64) -> String {
    format!("{v:?}")
}
