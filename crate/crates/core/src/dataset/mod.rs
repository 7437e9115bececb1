//! Labeled feature matrices: construction, persistence, splitting and
//! Z-score normalization.

mod io;
mod normalize;
mod split;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use io::{meta_path, parse_meta, render_meta};
pub use normalize::Normalizer;
pub use split::{split_indices, SplitIndices};

/// Class names used by [`Dataset::relabel_binary`].
pub const BINARY_CLASSES: [&str; 2] = ["patched", "unpatched"];

/// Provenance carried alongside a dataset in its sidecar file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub backend: String,
    pub warmup: u64,
    pub tag: String,
    /// Seconds since the Unix epoch; excluded from reproducibility checks.
    pub timestamp: Option<u64>,
    /// Class table: `classes[label]` names the class.
    pub classes: Vec<String>,
    /// Free-form provenance (config hash, seeds, plan parameters).
    pub extra: BTreeMap<String, String>,
}

impl DatasetMeta {
    pub fn with_classes(classes: Vec<String>) -> Self {
        DatasetMeta {
            classes,
            ..Default::default()
        }
    }
}

/// Feature matrix with labels, per-row provenance tags and metadata.
///
/// Rows, labels and tags always have the same length, every row has one
/// value per schema column and every label indexes the class table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    schema: Vec<String>,
    values: Vec<T>,
    labels: Vec<usize>,
    tags: Vec<String>,
    meta: DatasetMeta,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        schema: Vec<String>,
        rows: Vec<Vec<T>>,
        labels: Vec<usize>,
        tags: Vec<String>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let width = schema.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::SchemaMismatch(format!(
                "row {i} has {} values for {width} schema columns",
                r.len()
            )));
        }
        let values = rows.into_iter().flatten().collect();
        Self::from_flat(schema, values, labels, tags, meta)
    }

    /// Builds from a row-major value buffer.
    pub fn from_flat(
        schema: Vec<String>,
        values: Vec<T>,
        labels: Vec<usize>,
        tags: Vec<String>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let data = Dataset {
            schema,
            values,
            labels,
            tags,
            meta,
        };
        data.check()?;
        Ok(data)
    }

    fn check(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for name in &self.schema {
            if !names.insert(name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate column {name}")));
            }
        }
        let n = self.labels.len();
        if self.tags.len() != n || self.values.len() != n * self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} labels, {} tags and {} values for {} columns",
                n,
                self.tags.len(),
                self.values.len(),
                self.schema.len()
            )));
        }
        let classes = self.meta.classes.len();
        if let Some(bad) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Degenerate(format!(
                "label {bad} outside class table of {classes} classes"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn n_classes(&self) -> usize {
        self.meta.classes.len()
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn row(&self, i: usize) -> &[T] {
        let m = self.schema.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        let m = self.schema.len();
        let n = self.labels.len();
        (0..n).map(move |i| &self.values[i * m..(i + 1) * m])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut DatasetMeta {
        &mut self.meta
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows per label, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Labels that occur at least once, ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, _)| l)
            .collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        let mut values = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            schema: self.schema.clone(),
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            tags: indices.iter().map(|&i| self.tags[i].clone()).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Keeps the columns at `columns`, in that order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Dataset<T>> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_features()) {
            return Err(Error::invalid(format!(
                "column {bad} out of range for {} features",
                self.n_features()
            )));
        }
        let schema = columns.iter().map(|&c| self.schema[c].clone()).collect();
        let values = self
            .rows()
            .flat_map(|r| columns.iter().map(move |&c| r[c]))
            .collect();
        Dataset::from_flat(
            schema,
            values,
            self.labels.clone(),
            self.tags.clone(),
            self.meta.clone(),
        )
    }

    /// Same rows with replacement values (same shape).
    pub fn with_values(&self, values: Vec<T>) -> Result<Dataset<T>> {
        Dataset::from_flat(
            self.schema.clone(),
            values,
            self.labels.clone(),
            self.tags.clone(),
            self.meta.clone(),
        )
    }

    /// Converts the scalar type.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            schema: self.schema.clone(),
            values: self
                .values
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
            labels: self.labels.clone(),
            tags: self.tags.clone(),
            meta: self.meta.clone(),
        }
    }

    /// Binary relabeling by row tag: tags in `positive` become label 1
    /// (unpatched), every other tag label 0 (patched).
    ///
    /// When `negative` is given, a tag in neither set is an error. A result
    /// with a single class is rejected. Row order is preserved.
    pub fn relabel_binary(
        &self,
        positive: &BTreeSet<String>,
        negative: Option<&BTreeSet<String>>,
    ) -> Result<Dataset<T>> {
        let mut labels = Vec::with_capacity(self.len());
        for (i, tag) in self.tags.iter().enumerate() {
            let is_pos = positive.contains(tag);
            if let Some(neg) = negative {
                if is_pos && neg.contains(tag) {
                    return Err(Error::Degenerate(format!("tag {tag:?} is both positive and negative")));
                }
                if !is_pos && !neg.contains(tag) {
                    return Err(Error::Degenerate(format!("row {i}: tag {tag:?} is unclassifiable")));
                }
            }
            labels.push(usize::from(is_pos));
        }
        let positives = labels.iter().filter(|&&l| l == 1).count();
        if positives == 0 || positives == labels.len() {
            return Err(Error::Degenerate(format!(
                "binary relabeling yields a single class ({positives} positive of {})",
                labels.len()
            )));
        }
        let mut meta = self.meta.clone();
        meta.classes = BINARY_CLASSES.iter().map(|s| s.to_string()).collect();
        Dataset::from_flat(
            self.schema.clone(),
            self.values.clone(),
            labels,
            self.tags.clone(),
            meta,
        )
    }

    /// Appends the rows of `other` (same schema and class table).
    pub fn concat(&self, other: &Dataset<T>) -> Result<Dataset<T>> {
        self.ensure_compatible(other)?;
        let mut out = self.clone();
        out.values.extend_from_slice(&other.values);
        out.labels.extend_from_slice(&other.labels);
        out.tags.extend(other.tags.iter().cloned());
        Ok(out)
    }

    /// Schema and class tables agree; the error names the first difference.
    pub fn ensure_compatible(&self, other: &Dataset<T>) -> Result<()> {
        ensure_same_schema(&self.schema, &other.schema)?;
        if self.meta.classes != other.meta.classes {
            return Err(Error::SchemaMismatch(format!(
                "class tables differ: {:?} vs {:?}",
                self.meta.classes, other.meta.classes
            )));
        }
        Ok(())
    }
}

pub(crate) fn ensure_same_schema(expected: &[String], found: &[String]) -> Result<()> {
    for (i, (a, b)) in expected.iter().zip(found).enumerate() {
        if a != b {
            return Err(Error::SchemaMismatch(format!(
                "column {i}: expected event {a}, found {b}"
            )));
        }
    }
    if expected.len() != found.len() {
        let first = expected
            .get(found.len())
            .or_else(|| found.get(expected.len()))
            .cloned()
            .unwrap_or_default();
        return Err(Error::SchemaMismatch(format!(
            "{} columns expected, {} found (first unmatched event {first})",
            expected.len(),
            found.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn toy(n_per_class: usize, classes: usize) -> Dataset<f64> {
        let schema = vec!["A".to_string(), "B".to_string()];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut tags = Vec::new();
        for c in 0..classes {
            for i in 0..n_per_class {
                rows.push(vec![(c * 100 + i) as f64, (i * 7 % 5) as f64]);
                labels.push(c);
                tags.push(format!("v{c}"));
            }
        }
        let meta = DatasetMeta::with_classes((0..classes).map(|c| format!("c{c}")).collect());
        Dataset::new(schema, rows, labels, tags, meta).unwrap()
    }

    #[test]
    fn construction_checks_shapes_and_labels() {
        let meta = DatasetMeta::with_classes(vec!["a".into()]);
        assert!(Dataset::<f64>::new(vec!["X".into()], vec![vec![1.0, 2.0]], vec![0], vec!["".into()], meta.clone()).is_err());
        assert!(Dataset::<f64>::new(vec!["X".into()], vec![vec![1.0]], vec![1], vec!["".into()], meta.clone()).is_err());
        assert!(Dataset::<f64>::new(vec!["X".into(), "X".into()], vec![], vec![], vec![], meta).is_err());
    }

    #[test]
    fn relabel_by_version_tags() {
        let letters = "abcdefghijklmn";
        let schema = vec!["E".to_string()];
        let tags: Vec<String> = letters.chars().map(|c| format!("v1.1.0{c}")).collect();
        let rows = (0..tags.len()).map(|i| vec![i as f64]).collect();
        let meta = DatasetMeta::with_classes((0..tags.len()).map(|i| i.to_string()).collect());
        let d = Dataset::new(schema, rows, (0..tags.len()).collect(), tags.clone(), meta).unwrap();
        let positive: BTreeSet<String> = tags[..5].iter().cloned().collect();
        let negative: BTreeSet<String> = tags[5..].iter().cloned().collect();
        let b = d.relabel_binary(&positive, Some(&negative)).unwrap();
        assert_eq!(b.labels(), &[1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(b.meta().classes, vec!["patched", "unpatched"]);
        assert_eq!(b.tags(), d.tags());
        assert_eq!(b.values(), d.values());

        assert!(matches!(d.relabel_binary(&BTreeSet::new(), None), Err(Error::Degenerate(_))));
        let partial: BTreeSet<String> = tags[5..10].iter().cloned().collect();
        assert!(d.relabel_binary(&positive, Some(&partial)).is_err());
    }

    #[test]
    fn select_and_subset() {
        let d = toy(3, 2);
        let s = d.select_features(&[1]).unwrap();
        assert_eq!(s.schema(), &["B".to_string()]);
        assert_eq!(s.column(0), d.column(1));
        let sub = d.subset(&[5, 0]);
        assert_eq!(sub.labels(), &[1, 0]);
        assert_eq!(sub.row(0), d.row(5));
    }

    #[test]
    fn schema_mismatch_names_first_difference() {
        let a = vec!["A".to_string(), "B".to_string()];
        let b = vec!["A".to_string(), "C".to_string()];
        let err = ensure_same_schema(&a, &b).unwrap_err().to_string();
        assert!(err.contains("expected event B, found C"), "{err}");
    }
}
