use serde::{Deserialize, Serialize};

use super::ClassIndex;
use crate::dataset::Dataset;
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ITER: usize = 500;
const GRAD_TOLERANCE: f64 = 1e-6;

/// Multinomial (softmax) logistic regression with an L2 penalty, trained by
/// full-batch gradient descent on
/// `mean cross-entropy + l2 / 2 * |W|^2` (bias unpenalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Logistic<T> {
    pub classes: Vec<usize>,
    /// `[class][feature]`
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
    pub iterations: usize,
}

fn softmax_into<T: Scalar>(scores: &mut [T]) {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total = total + *s;
    }
    for s in scores.iter_mut() {
        *s = *s / total;
    }
}

impl<T: Scalar> Logistic<T> {
    pub fn fit(train: &Dataset<T>, l2: f64, learning_rate: f64, max_iter: usize) -> Self {
        let idx = ClassIndex::new(train);
        let k = idx.present.len();
        let m = train.n_features();
        let n = T::from_usize_lossy(train.len());
        let l2 = T::from_f64_lossy(l2);
        let lr = T::from_f64_lossy(learning_rate);
        let tol = T::from_f64_lossy(GRAD_TOLERANCE);
        let targets: Vec<usize> = train
            .labels()
            .iter()
            .map(|&l| idx.compact[l].expect("label present"))
            .collect();
        let mut model = Logistic {
            classes: idx.present,
            weights: vec![vec![T::zero(); m]; k],
            bias: vec![T::zero(); k],
            iterations: 0,
        };
        let mut gw = vec![vec![T::zero(); m]; k];
        let mut gb = vec![T::zero(); k];
        let mut p = vec![T::zero(); k];
        for _ in 0..max_iter {
            gw.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = T::zero()));
            gb.iter_mut().for_each(|v| *v = T::zero());
            for (row, &y) in train.rows().zip(&targets) {
                model.scores_into(row, &mut p);
                softmax_into(&mut p);
                for c in 0..k {
                    let err = p[c] - if c == y { T::one() } else { T::zero() };
                    gb[c] = gb[c] + err;
                    for (g, &x) in gw[c].iter_mut().zip(row) {
                        *g = *g + err * x;
                    }
                }
            }
            let mut max_grad = T::zero();
            for c in 0..k {
                gb[c] = gb[c] / n;
                max_grad = max_grad.max(gb[c].abs());
                for j in 0..m {
                    gw[c][j] = gw[c][j] / n + l2 * model.weights[c][j];
                    max_grad = max_grad.max(gw[c][j].abs());
                }
            }
            if max_grad < tol {
                break;
            }
            for c in 0..k {
                model.bias[c] = model.bias[c] - lr * gb[c];
                for j in 0..m {
                    model.weights[c][j] = model.weights[c][j] - lr * gw[c][j];
                }
            }
            model.iterations += 1;
        }
        model
    }

    fn scores_into(&self, row: &[T], out: &mut [T]) {
        for (c, s) in out.iter_mut().enumerate() {
            *s = self.bias[c]
                + self.weights[c]
                    .iter()
                    .zip(row)
                    .map(|(&w, &x)| w * x)
                    .sum::<T>();
        }
    }

    pub fn proba(&self, row: &[T], out: &mut [T]) {
        let mut p = vec![T::zero(); self.classes.len()];
        self.scores_into(row, &mut p);
        softmax_into(&mut p);
        out.iter_mut().for_each(|v| *v = T::zero());
        for (c, v) in p.into_iter().enumerate() {
            out[self.classes[c]] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::tests::{blobs, fitted};
    use crate::classifiers::{ClassifierKind, ClassifierSpec, FittedState, HyperValue};
    use crate::dataset::Normalizer;

    #[test]
    fn separable_two_class_reaches_high_accuracy() {
        let d = blobs(100, 2, 3, 4.0, 12);
        let spec = ClassifierSpec::new(ClassifierKind::LogisticRegression, 0).with("learning_rate", HyperValue::Float(0.5));
        let m = fitted(&spec, &d);
        let z = m.normalizer.apply(&d).unwrap();
        assert!(m.accuracy(&z).unwrap() >= 0.99);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = blobs(10, 3, 2, 1.0, 3);
        let z = Normalizer::fit(&d).unwrap().apply(&d).unwrap();
        let l2 = 0.1;
        let loss = |m: &Logistic<f64>| {
            let mut total = 0.0;
            for (row, &y) in z.rows().zip(z.labels()) {
                let mut p = vec![0.0; 3];
                m.proba(row, &mut p);
                total -= p[y].ln();
            }
            let reg: f64 = m.weights.iter().flatten().map(|w| w * w).sum();
            total / z.len() as f64 + 0.5 * l2 * reg
        };
        // One step from zero equals -lr * gradient at zero.
        let lr = 1e-3;
        let one = Logistic::fit(&z, l2, lr, 1);
        let zero = Logistic::fit(&z, l2, lr, 0);
        let h = 1e-6;
        for c in 0..3 {
            for j in 0..2 {
                let mut plus = zero.clone();
                plus.weights[c][j] += h;
                let mut minus = zero.clone();
                minus.weights[c][j] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((-one.weights[c][j] / lr - numeric).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn converged_fit_stops_early() {
        let d = blobs(20, 2, 1, 0.2, 1);
        let spec = ClassifierSpec::new(ClassifierKind::LogisticRegression, 0)
            .with("l2", HyperValue::Float(1.0))
            .with("learning_rate", HyperValue::Float(0.5));
        let m = fitted(&spec, &d);
        let FittedState::LogisticRegression(lr) = &m.state else { panic!() };
        assert!(lr.iterations < DEFAULT_MAX_ITER);
    }
}
