use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major numeric matrix with named columns and an explicit
/// per-cell missing mask.
///
/// Missing cells hold `0.0` in `values`; only the mask is authoritative.
/// Labels are never stored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    column_names: Vec<String>,
    n_rows: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(column_names: Vec<String>, n_rows: usize, values: Vec<f64>) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::with_mask(column_names, n_rows, values, missing)
    }

    pub fn with_mask(
        column_names: Vec<String>,
        n_rows: usize,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let n_cols = column_names.len();
        if values.len() != n_rows * n_cols || missing.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "matrix shape {}x{} does not match {} values / {} mask cells",
                n_rows,
                n_cols,
                values.len(),
                missing.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n_cols);
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate column name `{name}`"
                )));
            }
        }
        Ok(Self {
            column_names,
            n_rows,
            values,
            missing,
        })
    }

    /// Builds a matrix from named columns of optional values.
    pub fn from_columns(columns: Vec<(String, Vec<Option<f64>>)>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |(_, c)| c.len());
        if let Some((name, _)) = columns.iter().find(|(_, c)| c.len() != n_rows) {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` length differs from {n_rows}"
            )));
        }
        let n_cols = columns.len();
        let mut values = vec![0.0; n_rows * n_cols];
        let mut missing = vec![false; n_rows * n_cols];
        let mut names = Vec::with_capacity(n_cols);
        for (j, (name, col)) in columns.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                match v {
                    Some(v) => values[i * n_cols + j] = v,
                    None => missing[i * n_cols + j] = true,
                }
            }
            names.push(name);
        }
        Self::with_mask(names, n_rows, values, missing)
    }

    pub fn empty(n_rows: usize) -> Self {
        Self {
            column_names: Vec::new(),
            n_rows,
            values: Vec::new(),
            missing: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column position of `name`; unknown names are an error.
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let n = self.n_cols();
        self.values[row * n + col] = value;
        self.missing[row * n + col] = false;
    }

    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.n_cols() + col]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.n_cols();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    /// Values of column `col` (missing cells yield their placeholder).
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, col)).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.column(self.column_index(name)?))
    }

    /// Non-missing values of column `col`.
    pub fn present_values(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows)
            .filter(|&i| !self.is_missing(i, col))
            .map(|i| self.get(i, col))
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let n = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * n);
        let mut missing = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            values.extend_from_slice(&self.values[r * n..(r + 1) * n]);
            missing.extend_from_slice(&self.missing[r * n..(r + 1) * n]);
        }
        Self {
            column_names: self.column_names.clone(),
            n_rows: rows.len(),
            values,
            missing,
        }
    }

    pub fn select_column_indices(&self, cols: &[usize]) -> Self {
        let n = self.n_cols();
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        let mut missing = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            for &c in cols {
                values.push(self.values[i * n + c]);
                missing.push(self.missing[i * n + c]);
            }
        }
        Self {
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            n_rows: self.n_rows,
            values,
            missing,
        }
    }

    /// Columns in the order given; fails on the first unknown name.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_column_indices(&idx))
    }

    /// Horizontal concatenation; row counts must agree and names stay unique.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.n_rows != other.n_rows {
            return Err(Error::InvalidArgument(format!(
                "cannot stack {} rows with {} rows",
                self.n_rows, other.n_rows
            )));
        }
        let (a, b) = (self.n_cols(), other.n_cols());
        let mut values = Vec::with_capacity(self.n_rows * (a + b));
        let mut missing = Vec::with_capacity(self.n_rows * (a + b));
        for i in 0..self.n_rows {
            values.extend_from_slice(&self.values[i * a..(i + 1) * a]);
            values.extend_from_slice(&other.values[i * b..(i + 1) * b]);
            missing.extend_from_slice(&self.missing[i * a..(i + 1) * a]);
            missing.extend_from_slice(&other.missing[i * b..(i + 1) * b]);
        }
        let mut names = self.column_names.clone();
        names.extend(other.column_names.iter().cloned());
        Self::with_mask(names, self.n_rows, values, missing)
    }

    /// Appends one fully present column.
    pub fn push_column(&self, name: impl Into<String>, column: &[f64]) -> Result<Self> {
        let extra = Self::new(vec![name.into()], column.len(), column.to_vec())?;
        self.hstack(&extra)
    }

    /// Applies `f(col, value)` to every present cell.
    pub fn map_present(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let n = self.n_cols();
        let mut out = self.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            if !self.missing[k] {
                *v = f(k % n.max(1), *v);
            }
        }
        out
    }
}
