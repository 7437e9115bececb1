use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::plot::{ColorScale, Heatmap};
use crate::scalar::Scalar;

/// Pearson coefficients between every pair of events. Pairs involving a
/// constant event are undefined and hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub schema: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// `(i, j)` with `i <= j` for every undefined entry.
    pub undefined_pairs: Vec<(usize, usize)>,
}

pub fn correlate<T: Scalar>(data: &Dataset<T>) -> Result<CorrelationMatrix> {
    if data.len() < 2 {
        return Err(Error::Degenerate(format!(
            "correlation needs at least 2 rows, got {}",
            data.len()
        )));
    }
    let m = data.n_features();
    let n = data.len() as f64;
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| data.column(j).into_iter().map(Scalar::to_f64_lossy).collect())
        .collect();
    let constant: Vec<bool> = columns.iter().map(|c| c.iter().all(|&v| v == c[0])).collect();
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n;
            c.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut values = vec![vec![f64::NAN; m]; m];
    let mut undefined_pairs = Vec::new();
    for i in 0..m {
        for j in i..m {
            let r = if constant[i] || constant[j] {
                undefined_pairs.push((i, j));
                f64::NAN
            } else if i == j {
                1.0
            } else {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        schema: data.schema().to_vec(),
        values,
        undefined_pairs,
    })
}

impl CorrelationMatrix {
    /// Pairs `(i, j)`, `i < j`, with |r| above `threshold`, strongest first.
    pub fn strong_pairs(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        let m = self.schema.len();
        let mut out: Vec<(usize, usize, f64)> = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.values[i][j]))
            .filter(|(_, _, r)| r.abs() > threshold)
            .collect();
        out.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then((a.0, a.1).cmp(&(b.0, b.1))));
        out
    }

    /// CSV with a leading event column; undefined entries are empty.
    pub fn render_text(&self) -> String {
        let mut out = String::from("event");
        for name in &self.schema {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            out.push_str(&self.schema[i]);
            for v in row {
                out.push(',');
                if !v.is_nan() {
                    let _ = write!(out, "{v:.6}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn heatmap(&self, title: &str) -> Heatmap {
        Heatmap {
            title: title.to_string(),
            values: self.values.clone(),
            row_labels: self.schema.clone(),
            col_labels: self.schema.clone(),
            range: (-1.0, 1.0),
            scale: ColorScale::Diverging,
            y_axis: String::new(),
            x_axis: String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetMeta;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn frame(cols: Vec<Vec<f64>>) -> Dataset<f64> {
        let n = cols[0].len();
        let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let schema = (0..cols.len()).map(|j| format!("E{j}")).collect();
        Dataset::new(schema, rows, vec![0; n], vec![String::new(); n], DatasetMeta::with_classes(vec!["a".into()])).unwrap()
    }

    #[test]
    fn identities() {
        let a: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 + 0.5 * i as f64).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let m = correlate(&frame(vec![a.clone(), a.clone(), neg, vec![3.0; 50]])).unwrap();
        assert_eq!(m.values[0][0], 1.0);
        assert!((m.values[0][1] - 1.0).abs() <= 1e-12);
        assert!((m.values[0][2] + 1.0).abs() <= 1e-12);
        assert!(m.values[0][3].is_nan() && m.values[3][3].is_nan());
        assert_eq!(m.undefined_pairs, vec![(0, 3), (1, 3), (2, 3), (3, 3)]);
    }

    #[test]
    fn near_copy_is_strongly_correlated() {
        let mut r = crate::rng::rng(4, &[]);
        let a: Vec<f64> = (0..500).map(|_| r.random_range(1000.0..2000.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + r.random_range(-20.0..20.0)).collect();
        let m = correlate(&frame(vec![a, b])).unwrap();
        assert!(m.values[0][1] > 0.95);
        assert_eq!(m.strong_pairs(0.95).len(), 1);
    }

    #[test]
    fn too_few_rows() {
        assert!(correlate(&frame(vec![vec![1.0]])).is_err());
    }

    #[test]
    fn agrees_with_two_pass_formula() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y = [3.0, 1.0, 4.0, 1.0];
        let m = correlate(&frame(vec![x.to_vec(), y.to_vec()])).unwrap();
        let (mx, my) = (3.75, 2.25);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
        assert!((m.values[0][1] - sxy / (sxx * syy).sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(cols in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 12), 2..6)) {
            let m = correlate(&frame(cols)).unwrap();
            for i in 0..m.values.len() {
                for j in 0..m.values.len() {
                    let (a, b) = (m.values[i][j], m.values[j][i]);
                    prop_assert!(a.to_bits() == b.to_bits());
                    prop_assert!(a.is_nan() || (-1.0..=1.0).contains(&a));
                }
            }
        }

        #[test]
        fn affine_invariant(col in proptest::collection::vec(-1e3f64..1e3, 12), other in proptest::collection::vec(-1e3f64..1e3, 12), scale in 0.1f64..10.0, shift in -100.0f64..100.0) {
            let scaled: Vec<f64> = col.iter().map(|v| v * scale + shift).collect();
            let a = correlate(&frame(vec![col, other.clone()])).unwrap();
            let b = correlate(&frame(vec![scaled, other])).unwrap();
            if !a.values[0][1].is_nan() {
                prop_assert!((a.values[0][1] - b.values[0][1]).abs() < 1e-9);
            }
        }
    }
}
