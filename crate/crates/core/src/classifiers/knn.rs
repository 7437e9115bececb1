use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::scalar::Scalar;

/// k-nearest neighbours by Euclidean distance with majority vote.
///
/// Equal distances are ordered by lower training-row index; the vote
/// fraction is the class probability, so equal votes go to the smaller
/// label through the arg-max rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Knn<T> {
    pub k: usize,
    pub width: usize,
    pub values: Vec<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> Knn<T> {
    pub fn fit(train: &Dataset<T>, k: usize) -> Self {
        Knn {
            k,
            width: train.n_features(),
            values: train.values().to_vec(),
            labels: train.labels().to_vec(),
        }
    }

    /// Training-row indices of the nearest neighbours of `row`, nearest first.
    pub fn neighbours(&self, row: &[T]) -> Vec<usize> {
        let n = self.labels.len();
        let mut dist: Vec<(T, usize)> = (0..n)
            .map(|i| {
                let r = &self.values[i * self.width..(i + 1) * self.width];
                let d = r.iter().zip(row).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
                (d, i)
            })
            .collect();
        let k = self.k.min(n);
        let cmp = |a: &(T, usize), b: &(T, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if k < n {
            dist.select_nth_unstable_by(k, cmp);
            dist.truncate(k);
        }
        dist.sort_unstable_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn proba(&self, row: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        let nb = self.neighbours(row);
        let mut votes = vec![0usize; out.len()];
        for &i in &nb {
            votes[self.labels[i]] += 1;
        }
        let k = T::from_usize_lossy(nb.len());
        for (o, v) in out.iter_mut().zip(votes) {
            *o = T::from_usize_lossy(v) / k;
        }
    }
}
