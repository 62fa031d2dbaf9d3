//! `p x T` multivariate series with optional change-point truth, plus CSV and
//! sidecar-JSON I/O.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MultivariateSeries {
    dim: usize,
    len: usize,
    /// Component-major storage.
    data: Vec<f64>,
    /// Known change-points (last index of each old regime), if any.
    pub truth: Option<Vec<usize>>,
}

impl MultivariateSeries {
    /// Build from one vector per component.
    pub fn new(components: Vec<Vec<f64>>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::Shape("series has no components".into()));
        }
        let len = components[0].len();
        let mut data = Vec::with_capacity(dim * len);
        for (j, c) in components.into_iter().enumerate() {
            if c.len() != len {
                return Err(Error::Shape(format!(
                    "component {j} has length {} instead of {len}",
                    c.len()
                )));
            }
            if let Some(t) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Parse(format!(
                    "component {j} has a non-finite value at t = {t}"
                )));
            }
            data.extend(c);
        }
        Ok(Self {
            dim,
            len,
            data,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = truth.iter().find(|&&t| t == 0 || t + 1 >= self.len) {
            return Err(Error::Shape(format!(
                "change-point {bad} is not inside (0, {})",
                self.len - 1
            )));
        }
        if truth.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape(
                "change-points must be strictly increasing".into(),
            ));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    /// Number of components `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Series length `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn component(&self, j: usize) -> &[f64] {
        &self.data[j * self.len..(j + 1) * self.len]
    }

    pub fn components(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.len.max(1)).take(self.dim)
    }

    /// Every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Parse a CSV with one row per time point and one column per component.
    /// A first row that does not parse as numbers is taken as a header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            let line = r + 1;
            if r == 0 && record.iter().any(|c| c.parse::<f64>().is_err()) {
                width = Some(record.len());
                continue;
            }
            let w = *width.get_or_insert(record.len());
            if record.len() != w {
                return Err(Error::Parse(format!(
                    "row {line} has {} columns, expected {w}",
                    record.len()
                )));
            }
            if columns.is_empty() {
                columns = vec![Vec::new(); w];
            }
            for (c, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Parse(format!(
                        "row {line}, column {}: '{cell}' is not a number",
                        c + 1
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!(
                        "row {line}, column {}: non-finite value",
                        c + 1
                    )));
                }
                columns[c].push(v);
            }
        }
        if columns.is_empty() || columns[0].is_empty() {
            return Err(Error::Parse("no data rows".into()));
        }
        Self::new(columns)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Write with a header `x0,x1,...` and one row per time point.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((0..self.dim).map(|j| format!("x{j}")))?;
        let mut row = Vec::with_capacity(self.dim);
        for t in 0..self.len {
            row.clear();
            row.extend((0..self.dim).map(|j| self.data[j * self.len + t].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn sidecar(&self, source: Option<String>) -> TruthSidecar {
        TruthSidecar {
            schema: 1,
            len: self.len,
            p: self.dim,
            change_points: self.truth.clone().unwrap_or_default(),
            source,
        }
    }
}

/// Truth metadata written next to a simulated CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub schema: u32,
    #[serde(rename = "T")]
    pub len: usize,
    pub p: usize,
    pub change_points: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}
