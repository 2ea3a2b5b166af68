use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::CausalOrder;
use crate::num::Matrix;

/// Columns whose standard deviation is at or below this are rejected by [`standardize`].
pub const MIN_COLUMN_STD: f64 = 1e-12;

/// `n × d` observational sample with column names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    values: Matrix,
    column_names: Vec<String>,
    standardized: bool,
}

pub fn default_column_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

impl Dataset {
    pub fn new(values: Matrix, column_names: Vec<String>) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::Argument(format!(
                "a dataset needs at least 2 rows, got {}",
                values.rows()
            )));
        }
        if column_names.len() != values.cols() {
            return Err(Error::dim("column names", values.cols(), column_names.len()));
        }
        if values.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset contains non-finite values".into()));
        }
        Ok(Self {
            values,
            column_names,
            standardized: false,
        })
    }

    pub fn with_default_names(values: Matrix) -> Result<Self> {
        let names = default_column_names(values.cols());
        Self::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }

    /// Keeps the listed columns in the given order. The standardized flag carries over.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(cols),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            standardized: self.standardized,
        }
    }

    /// Per-column `(mean, population variance)`.
    pub fn column_moments(&self) -> Vec<(f64, f64)> {
        (0..self.d()).map(|j| moments(&self.column(j))).collect()
    }
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Centers every column and divides by its population standard deviation.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    let moments = ds.column_moments();
    for (j, &(_, var)) in moments.iter().enumerate() {
        let std = var.sqrt();
        if std <= MIN_COLUMN_STD {
            return Err(Error::DegenerateColumn { column: j, std });
        }
    }
    let m = &ds.values;
    let mut values = Matrix::from_fn(m.rows(), m.cols(), |r, c| {
        let (mean, var) = moments[c];
        (m.get(r, c) - mean) / var.sqrt()
    });
    // second pass removes the residual mean left by rounding
    for c in 0..values.cols() {
        let (mean, _) = moments_of_column(&values, c);
        for r in 0..values.rows() {
            let v = values.get(r, c) - mean;
            values.set(r, c, v);
        }
    }
    Ok(Dataset {
        values,
        column_names: ds.column_names.clone(),
        standardized: true,
    })
}

fn moments_of_column(m: &Matrix, c: usize) -> (f64, f64) {
    moments(&m.column(c))
}

/// Variables sorted by ascending marginal variance, ties to the lower index.
pub fn varsort_order(ds: &Dataset) -> CausalOrder {
    let vars: Vec<f64> = ds.column_moments().into_iter().map(|(_, v)| v).collect();
    let mut idx: Vec<usize> = (0..ds.d()).collect();
    idx.sort_by(|&a, &b| vars[a].total_cmp(&vars[b]).then(a.cmp(&b)));
    CausalOrder::new(idx).expect("sorted indices form a permutation")
}
