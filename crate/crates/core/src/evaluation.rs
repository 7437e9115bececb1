//! Test-set scoring: accuracy, confusion matrices and, for two-class
//! problems, precision / recall / F1 of the positive class (label 1).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::TrainedModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::plot::{ColorScale, Heatmap, HeatmapLayout};
use crate::scalar::Scalar;

/// Label treated as positive in two-class reports.
pub const POSITIVE_CLASS: usize = 1;

/// Metrics of the positive class. A metric whose denominator is zero is
/// `None` (undefined), never 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub positive_class: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl BinaryMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        BinaryMetrics {
            positive_class: POSITIVE_CLASS,
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }

    /// Names of the metrics that are undefined.
    pub fn undefined(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.precision.is_none() {
            out.push("precision");
        }
        if self.recall.is_none() {
            out.push("recall");
        }
        if self.f1.is_none() {
            out.push("f1");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// True rows per class.
    pub per_class_support: Vec<usize>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub binary: Option<BinaryMetrics>,
}

/// Row-normalized confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedConfusion {
    pub rows: Vec<Vec<f64>>,
    /// Classes with no true rows; their rows are all zero.
    pub empty_rows: Vec<usize>,
}

/// Divides each row by its sum; all-zero rows stay zero and are flagged.
pub fn normalize_rows(confusion: &[Vec<usize>]) -> NormalizedConfusion {
    let mut empty_rows = Vec::new();
    let rows = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                empty_rows.push(i);
                vec![0.0; row.len()]
            } else {
                row.iter().map(|&v| v as f64 / total as f64).collect()
            }
        })
        .collect();
    NormalizedConfusion { rows, empty_rows }
}

impl EvalReport {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: &[String]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::invalid(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::Degenerate("nothing to score".into()));
        }
        let c = classes.len();
        if let Some(bad) = truth.iter().chain(predicted).find(|&&l| l >= c) {
            return Err(Error::SchemaMismatch(format!("label {bad} outside class table of {c}")));
        }
        let mut confusion = vec![vec![0usize; c]; c];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let correct = (0..c).map(|i| confusion[i][i]).sum();
        let total = truth.len();
        let binary = (c == 2).then(|| {
            let p = POSITIVE_CLASS;
            let n = 1 - p;
            BinaryMetrics::from_counts(confusion[p][p], confusion[n][p], confusion[p][n], confusion[n][n])
        });
        Ok(EvalReport {
            classes: classes.to_vec(),
            correct,
            total,
            accuracy: correct as f64 / total as f64,
            per_class_support: confusion.iter().map(|r| r.iter().sum()).collect(),
            confusion,
            binary,
        })
    }

    pub fn normalized(&self) -> NormalizedConfusion {
        normalize_rows(&self.confusion)
    }

    pub fn trace(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "accuracy: {:.6} ({}/{})", self.accuracy, self.correct, self.total);
        let _ = writeln!(out, "classes:");
        for (i, name) in self.classes.iter().enumerate() {
            let _ = writeln!(out, "  {i:>3} {name} (support {})", self.per_class_support[i]);
        }
        let c = self.classes.len();
        let w = self.total.to_string().len().max(c.to_string().len()).max(3) + 1;
        let _ = writeln!(out, "confusion (rows: true class, columns: predicted class):");
        let header: String = (0..c).map(|j| format!("{j:>w$}")).collect();
        let _ = writeln!(out, "{:>5}{header}", "");
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: String = row.iter().map(|v| format!("{v:>w$}")).collect();
            let _ = writeln!(out, "{i:>5}{cells}");
        }
        let norm = self.normalized();
        let _ = writeln!(out, "normalized confusion (each row sums to 1):");
        let header: String = (0..c).map(|j| format!("{j:>7}")).collect();
        let _ = writeln!(out, "{:>5}{header}", "");
        for (i, row) in norm.rows.iter().enumerate() {
            let cells: String = row.iter().map(|v| format!("{v:>7.3}")).collect();
            let flag = if norm.empty_rows.contains(&i) { "  (no true rows)" } else { "" };
            let _ = writeln!(out, "{i:>5}{cells}{flag}");
        }
        if let Some(b) = &self.binary {
            let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6}"));
            let _ = writeln!(
                out,
                "positive class: {} ({})",
                b.positive_class, self.classes[b.positive_class]
            );
            let _ = writeln!(out, "tp {} fp {} fn {} tn {}", b.tp, b.fp, b.fn_, b.tn);
            let _ = writeln!(out, "precision: {}", show(b.precision));
            let _ = writeln!(out, "recall: {}", show(b.recall));
            let _ = writeln!(out, "f1: {}", show(b.f1));
            let undefined = b.undefined();
            if !undefined.is_empty() {
                let _ = writeln!(out, "undefined (zero denominator): {}", undefined.join(", "));
            }
        }
        out
    }

    /// Heat map of the row-normalized matrix on a fixed [0, 1] scale.
    pub fn heatmap(&self, title: &str) -> Heatmap {
        Heatmap {
            title: title.to_string(),
            values: self.normalized().rows,
            row_labels: self.classes.clone(),
            col_labels: self.classes.clone(),
            range: (0.0, 1.0),
            scale: ColorScale::Sequential,
            y_axis: "TRUE".into(),
            x_axis: "PREDICTED".into(),
        }
    }

    pub fn save_heatmap(&self, path: &Path, title: &str, provenance: &[(String, String)]) -> Result<HeatmapLayout> {
        let (canvas, layout) = self.heatmap(title).render();
        canvas.save_png(path, provenance)?;
        Ok(layout)
    }
}

/// Scores `model` on a test set normalized with the model's normalizer.
pub fn score<T: Scalar>(model: &TrainedModel<T>, test: &Dataset<T>) -> Result<EvalReport> {
    let predicted = model.predict(test)?;
    EvalReport::from_predictions(test.labels(), &predicted, &model.class_table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictor() {
        let t = vec![0, 1, 2, 2, 1];
        let r = EvalReport::from_predictions(&t, &t, &names(3)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r.confusion[i][j] > 0, i == j);
            }
        }
        assert!(r.binary.is_none());
    }

    #[test]
    fn binary_arithmetic() {
        let b = BinaryMetrics::from_counts(45, 5, 5, 45);
        assert!((b.precision.unwrap() - 0.9).abs() < 1e-15);
        assert!((b.recall.unwrap() - 0.9).abs() < 1e-15);
        assert!((b.f1.unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_denominators_are_undefined() {
        // Nothing predicted positive and no positives present.
        let truth = vec![0, 0, 0];
        let pred = vec![0, 0, 0];
        let r = EvalReport::from_predictions(&truth, &pred, &names(2)).unwrap();
        let b = r.binary.clone().unwrap();
        assert_eq!((b.precision, b.recall, b.f1), (None, None, None));
        assert!(r.render_text().contains("precision: undefined"));
        assert_eq!(r.normalized().empty_rows, vec![1]);
    }

    #[test]
    fn row_normalization() {
        let n = normalize_rows(&[vec![8, 2], vec![0, 10]]);
        assert_eq!(n.rows, vec![vec![0.8, 0.2], vec![0.0, 1.0]]);
    }

    #[test]
    fn positive_class_is_label_one() {
        // truth 1 predicted 0 is a false negative.
        let r = EvalReport::from_predictions(&[1, 1, 0], &[0, 1, 0], &names(2)).unwrap();
        let b = r.binary.unwrap();
        assert_eq!((b.tp, b.fp, b.fn_, b.tn), (1, 0, 1, 1));
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let r = EvalReport::from_predictions(&t, &p, &names(4)).unwrap();
            let sum: usize = r.confusion.iter().flatten().sum();
            prop_assert_eq!(sum, t.len());
            prop_assert_eq!(r.trace() as f64 / sum as f64, r.accuracy);
            let n = r.normalized();
            for (i, row) in n.rows.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if n.empty_rows.contains(&i) { prop_assert_eq!(s, 0.0); } else { prop_assert!((s - 1.0).abs() <= 1e-9); }
            }
        }

        #[test]
        fn f1_is_harmonic_mean(tp in 0usize..100, fp in 0usize..100, fn_ in 0usize..100) {
            let b = BinaryMetrics::from_counts(tp, fp, fn_, 0);
            if let (Some(p), Some(r), Some(f)) = (b.precision, b.recall, b.f1) {
                prop_assert!((f - 2.0 / (1.0 / p + 1.0 / r)).abs() <= 1e-12);
            }
        }
    }
}
