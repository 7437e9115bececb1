use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

const SPLIT_STREAM: u64 = 0x5350_4c49_54;

/// Disjoint, exhaustive partition of row indices (each side ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded train/test partition of `labels`.
///
/// With `stratified`, each class contributes `round(ratio * n_c)` rows to the
/// training side (clamped so both sides keep at least one row of it).
pub fn split_indices(labels: &[usize], ratio: f64, seed: u64, stratified: bool) -> Result<SplitIndices> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!(
            "split ratio {ratio} must lie strictly between 0 and 1"
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((c, rows)) = by_class.iter().enumerate().find(|(_, r)| r.len() == 1) {
        return Err(Error::Degenerate(format!(
            "class {c} has {} row; splitting needs at least 2",
            rows.len()
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    if stratified {
        for (c, mut rows) in by_class.into_iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            rows.shuffle(&mut rng::rng(seed, &[SPLIT_STREAM, c as u64]));
            let n_train = ((ratio * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
            train.extend_from_slice(&rows[..n_train]);
            test.extend_from_slice(&rows[n_train..]);
        }
    } else {
        let mut rows: Vec<usize> = (0..labels.len()).collect();
        rows.shuffle(&mut rng::rng(seed, &[SPLIT_STREAM]));
        let n_train = ((ratio * rows.len() as f64).round() as usize).clamp(1, rows.len().saturating_sub(1));
        train.extend_from_slice(&rows[..n_train]);
        test.extend_from_slice(&rows[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    if test.is_empty() || train.is_empty() {
        return Err(Error::Degenerate("split leaves one side empty".into()));
    }
    Ok(SplitIndices { train, test })
}

impl<T: Scalar> Dataset<T> {
    pub fn split(&self, ratio: f64, seed: u64, stratified: bool) -> Result<(Dataset<T>, Dataset<T>)> {
        let idx = split_indices(self.labels(), ratio, seed, stratified)?;
        Ok((self.subset(&idx.train), self.subset(&idx.test)))
    }
}
