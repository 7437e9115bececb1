use serde::{Deserialize, Serialize};

use super::{ensure_same_schema, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-feature Z-score statistics fitted on a training set.
///
/// Standard deviations are population (divide by n). A constant column gets
/// std 1 and its own value as mean, so it maps to exact zeros on the fitted
/// set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Normalizer<T> {
    pub schema: Vec<String>,
    pub means: Vec<T>,
    pub stds: Vec<T>,
    pub fitted_on: usize,
    /// Columns whose std was substituted.
    pub constant: Vec<usize>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn fit(train: &Dataset<T>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Degenerate("cannot fit a normalizer on zero rows".into()));
        }
        let n = T::from_usize_lossy(train.len());
        let m = train.n_features();
        let mut means = Vec::with_capacity(m);
        let mut stds = Vec::with_capacity(m);
        let mut constant = Vec::new();
        for j in 0..m {
            let col = train.column(j);
            if col.iter().all(|&v| v == col[0]) {
                log::warn!(
                    "feature {} is constant ({}); substituting std = 1",
                    train.schema()[j],
                    col[0]
                );
                constant.push(j);
                means.push(col[0]);
                stds.push(T::one());
                continue;
            }
            let mean = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            means.push(mean);
            stds.push(var.sqrt());
        }
        Ok(Normalizer {
            schema: train.schema().to_vec(),
            means,
            stds,
            fitted_on: train.len(),
            constant,
        })
    }

    pub fn transform_row(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&z, (&m, &s))| z * s + m)
            .collect()
    }

    /// Transforms every row of `data` with the stored statistics.
    pub fn apply(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        ensure_same_schema(&self.schema, data.schema())?;
        let values = data.rows().flat_map(|r| self.transform_row(r)).collect();
        data.with_values(values)
    }

    pub fn inverse(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        ensure_same_schema(&self.schema, data.schema())?;
        let values = data.rows().flat_map(|r| self.inverse_row(r)).collect();
        data.with_values(values)
    }

    /// Restriction to a subset of columns.
    pub fn select(&self, columns: &[usize]) -> Normalizer<T> {
        Normalizer {
            schema: columns.iter().map(|&c| self.schema[c].clone()).collect(),
            means: columns.iter().map(|&c| self.means[c]).collect(),
            stds: columns.iter().map(|&c| self.stds[c]).collect(),
            fitted_on: self.fitted_on,
            constant: columns
                .iter()
                .enumerate()
                .filter(|(_, c)| self.constant.contains(c))
                .map(|(i, _)| i)
                .collect(),
        }
    }
}
