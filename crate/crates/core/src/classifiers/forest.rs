use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use crate::dataset::Dataset;
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

const FOREST_STREAM: u64 = 0x464f_5245_5354;

/// Bagged CART trees; each tree votes for one class and the class
/// probability is the vote fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    pub trees: Vec<Tree<T>>,
}

/// `floor(sqrt(m))`, at least 1.
pub fn sqrt_features(m: usize) -> usize {
    ((m as f64).sqrt().floor() as usize).max(1)
}

fn tree_rng(seed: u64, tree: usize) -> Rng {
    rng::rng(seed, &[FOREST_STREAM, tree as u64])
}

fn draw_bootstrap(r: &mut Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(0..n)).collect()
}

/// The bootstrap sample tree `tree` of a forest seeded with `seed` is grown on.
pub fn bootstrap_indices(seed: u64, tree: usize, n: usize) -> Vec<usize> {
    draw_bootstrap(&mut tree_rng(seed, tree), n)
}

impl<T: Scalar> Forest<T> {
    pub fn fit(train: &Dataset<T>, n_trees: usize, params: &TreeParams, seed: u64) -> Self {
        let trees = (0..n_trees)
            .map(|t| {
                let mut r = tree_rng(seed, t);
                let sample = draw_bootstrap(&mut r, train.len());
                Tree::fit(train, &sample, params, Some(&mut r))
            })
            .collect();
        Forest { trees }
    }

    pub fn proba(&self, row: &[T], out: &mut [T]) {
        let mut votes = vec![0usize; out.len()];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        let n = T::from_usize_lossy(self.trees.len());
        for (o, v) in out.iter_mut().zip(votes) {
            *o = T::from_usize_lossy(v) / n;
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
    fn proba_is_mean_of_tree_votes() {
        let d = blobs(20, 3, 4, 0.7, 4);
        let spec = ClassifierSpec::new(ClassifierKind::RandomForest, 17).with("n_trees", HyperValue::Int(3));
        let m = fitted(&spec, &d);
        let FittedState::RandomForest(forest) = &m.state else { panic!() };
        let z = m.normalizer.apply(&d).unwrap();
        for row in z.rows() {
            let mut want = [0.0; 3];
            for t in &forest.trees {
                want[t.predict_row(row)] += 1.0;
            }
            let got = m.proba_row(row);
            for c in 0..3 {
                assert!((got[c] - want[c] / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn one_tree_with_all_features_is_a_tree_on_its_bootstrap() {
        let d = blobs(25, 3, 5, 0.6, 8);
        let z = Normalizer::fit(&d).unwrap().apply(&d).unwrap();
        let params = TreeParams {
            max_features: Some(5),
            ..Default::default()
        };
        let forest = Forest::fit(&z, 1, &params, 23);
        let sample = bootstrap_indices(23, 0, z.len());
        let tree = Tree::fit(&z, &sample, &TreeParams::default(), None);
        assert_eq!(forest.trees[0], tree);
    }

    #[test]
    fn per_tree_seeds_differ() {
        assert_ne!(bootstrap_indices(1, 0, 50), bootstrap_indices(1, 1, 50));
        assert_eq!(bootstrap_indices(1, 3, 50), bootstrap_indices(1, 3, 50));
    }

    #[test]
    fn separates_blobs() {
        let d = blobs(30, 4, 6, 2.0, 1);
        let m = fitted(&ClassifierSpec::new(ClassifierKind::RandomForest, 3).with("n_trees", HyperValue::Int(20)), &d);
        let z = m.normalizer.apply(&d).unwrap();
        assert!(m.accuracy(&z).unwrap() > 0.95);
    }
}
