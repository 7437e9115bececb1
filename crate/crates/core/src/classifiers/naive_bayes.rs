use serde::{Deserialize, Serialize};

use super::ClassIndex;
use crate::dataset::Dataset;
use crate::scalar::Scalar;

/// Gaussian naive Bayes with variance smoothing.
///
/// Every per-class variance is increased by `var_smoothing` times the
/// largest feature variance of the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GaussianNb<T> {
    /// Labels of the fitted classes.
    pub classes: Vec<usize>,
    pub log_priors: Vec<T>,
    /// `[class][feature]`
    pub means: Vec<Vec<T>>,
    pub vars: Vec<Vec<T>>,
    pub epsilon: T,
}

impl<T: Scalar> GaussianNb<T> {
    pub fn fit(train: &Dataset<T>, var_smoothing: f64) -> Self {
        let idx = ClassIndex::new(train);
        let m = train.n_features();
        let k = idx.present.len();
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![T::zero(); m]; k];
        for (row, &l) in train.rows().zip(train.labels()) {
            let c = idx.compact[l].expect("label present");
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(row) {
                *s = *s + x;
            }
        }
        let means: Vec<Vec<T>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| s.iter().map(|&v| v / T::from_usize_lossy(n)).collect())
            .collect();
        let mut vars = vec![vec![T::zero(); m]; k];
        for (row, &l) in train.rows().zip(train.labels()) {
            let c = idx.compact[l].expect("label present");
            for j in 0..m {
                let d = row[j] - means[c][j];
                vars[c][j] = vars[c][j] + d * d;
            }
        }
        let n = T::from_usize_lossy(train.len());
        let max_var = (0..m)
            .map(|j| {
                let col = train.column(j);
                let mean = col.iter().copied().sum::<T>() / n;
                col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n
            })
            .fold(T::zero(), T::max);
        // All-constant features leave no scale to smooth against; fall back
        // to the bare multiplier so variances stay positive.
        let scale = if max_var > T::zero() { max_var } else { T::one() };
        let epsilon = T::from_f64_lossy(var_smoothing) * scale;
        let epsilon = if epsilon > T::zero() { epsilon } else { T::min_positive_value() };
        for (c, v) in vars.iter_mut().enumerate() {
            for x in v.iter_mut() {
                *x = *x / T::from_usize_lossy(counts[c]) + epsilon;
            }
        }
        let log_priors = counts.iter().map(|&c| (T::from_usize_lossy(c) / n).ln()).collect();
        GaussianNb {
            classes: idx.present,
            log_priors,
            means,
            vars,
            epsilon,
        }
    }

    pub fn joint_log_likelihood(&self, row: &[T]) -> Vec<T> {
        let two_pi = T::from_f64_lossy(std::f64::consts::TAU);
        let half = T::from_f64_lossy(0.5);
        (0..self.classes.len())
            .map(|c| {
                let mut ll = self.log_priors[c];
                for (j, &x) in row.iter().enumerate() {
                    let v = self.vars[c][j];
                    let d = x - self.means[c][j];
                    ll = ll - half * ((two_pi * v).ln() + d * d / v);
                }
                ll
            })
            .collect()
    }

    pub fn proba(&self, row: &[T], out: &mut [T]) {
        let ll = self.joint_log_likelihood(row);
        let max = ll.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = ll.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.iter_mut().for_each(|v| *v = T::zero());
        for (c, e) in exps.into_iter().enumerate() {
            out[self.classes[c]] = e / total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{blobs, fitted};
    use super::super::{ClassifierKind, ClassifierSpec};
    use crate::dataset::{Dataset, DatasetMeta};

    #[test]
    fn point_masses_are_separated() {
        let schema = vec!["A".to_string(), "B".to_string()];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..4 {
            for _ in 0..10 {
                rows.push(vec![c as f64 * 10.0, 5.0 - c as f64]);
                labels.push(c);
            }
        }
        let meta = DatasetMeta::with_classes((0..4).map(|c| c.to_string()).collect());
        let d = Dataset::new(schema, rows, labels, vec![String::new(); 40], meta).unwrap();
        let m = fitted(&ClassifierSpec::new(ClassifierKind::GaussianNb, 0), &d);
        let z = m.normalizer.apply(&d).unwrap();
        assert_eq!(m.accuracy(&z).unwrap(), 1.0);
    }

    #[test]
    fn matches_closed_form_posterior() {
        let d = blobs(15, 2, 1, 2.0, 6);
        let m = fitted(&ClassifierSpec::new(ClassifierKind::GaussianNb, 0), &d);
        let super::super::FittedState::GaussianNb(nb) = &m.state else { panic!() };
        let x = 0.3;
        let dens = |c: usize| {
            let (mu, v) = (nb.means[c][0], nb.vars[c][0]);
            0.5 * (-(x - mu) * (x - mu) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
        };
        let want = dens(1) / (dens(0) + dens(1));
        assert!((m.proba_row(&[x])[1] - want).abs() < 1e-12);
    }
}
