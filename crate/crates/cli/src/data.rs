//! CSV ingestion.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use thiserror::Error;

/// Smallest sample accepted by any command.
pub const MIN_ROWS: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}: missing header row")]
    MissingHeader(PathBuf),

    #[error("column {index} has an empty name")]
    EmptyColumnName { index: usize },

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("column {0:?} not found")]
    MissingColumn(String),

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("need at least {MIN_ROWS} rows, found {0}")]
    TooFewRows(usize),
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub names: Vec<String>,
    /// `n × names.len()`.
    pub values: DMatrix<f64>,
    pub source: PathBuf,
}

impl DataTable {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, DataError> {
        self.names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, DataError> {
        let j = self.index_of(name)?;
        Ok(self.values.column(j).iter().copied().collect())
    }

    /// Response, target covariate, and every other column in file order.
    pub fn split(&self, response: &str, component: &str) -> Result<Split, DataError> {
        let iy = self.index_of(response)?;
        let ix = self.index_of(component)?;
        if iy == ix {
            return Err(DataError::DuplicateColumn(component.to_string()));
        }
        let keep: Vec<usize> = (0..self.names.len()).filter(|&j| j != iy && j != ix).collect();
        Ok(Split {
            y: self.values.column(iy).iter().copied().collect(),
            x_target: self.values.column(ix).iter().copied().collect(),
            x_others: self.values.select_columns(&keep),
            other_names: keep.iter().map(|&j| self.names[j].clone()).collect(),
        })
    }

    /// Rows `rows` only, same columns.
    pub fn subset(&self, rows: &[usize]) -> DataTable {
        DataTable {
            names: self.names.clone(),
            values: self.values.select_rows(rows),
            source: self.source.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub y: Vec<f64>,
    pub x_target: Vec<f64>,
    pub x_others: DMatrix<f64>,
    pub other_names: Vec<String>,
}

/// Reads a headed, comma-separated numeric file; `target` must be a column.
/// Reported row numbers are 1-based and exclude the header.
pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<DataTable, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let names: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(DataError::MissingHeader(path.to_path_buf()));
    }
    let mut seen = HashSet::new();
    for (index, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(DataError::EmptyColumnName { index });
        }
        if !seen.insert(name.as_str()) {
            return Err(DataError::DuplicateColumn(name.clone()));
        }
    }
    if !seen.contains(target) {
        return Err(DataError::MissingColumn(target.to_string()));
    }

    let mut cells = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        if record.len() != names.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: names.len(),
                found: record.len(),
            });
        }
        for (field, name) in record.iter().zip(&names) {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(v),
                _ => {
                    return Err(DataError::BadCell {
                        row,
                        column: name.clone(),
                        value: field.to_string(),
                    })
                }
            }
        }
        n += 1;
    }
    if n < MIN_ROWS {
        return Err(DataError::TooFewRows(n));
    }
    Ok(DataTable {
        values: DMatrix::from_row_slice(n, names.len(), &cells),
        names,
        source: path.to_path_buf(),
    })
}
