use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; `None` means all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Node<T> {
    /// Class distribution of the training rows that reached the leaf.
    Leaf(Vec<T>),
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

/// CART classification tree grown with Gini impurity.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// Among equally good splits the lower feature index wins, then the lower
/// threshold. An impure node is split even when no split lowers impurity,
/// so consistent training data is always fitted exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

struct Best<T> {
    score: f64,
    feature: usize,
    threshold: T,
}

impl<T: Scalar> Tree<T> {
    /// Grows a tree on the rows at `samples` (repeats allowed). `rng` is
    /// required when `params.max_features` restricts the features per split.
    pub fn fit(train: &Dataset<T>, samples: &[usize], params: &TreeParams, mut rng: Option<&mut Rng>) -> Self {
        let n_classes = train.n_classes();
        let m = train.n_features();
        let per_split = params.max_features.map_or(m, |f| f.clamp(1, m));
        let labels = train.labels();
        let mut nodes = vec![Node::Leaf(Vec::new())];
        let mut stack = vec![(0usize, samples.to_vec(), 0usize)];
        let mut pairs: Vec<(T, usize)> = Vec::with_capacity(samples.len());

        while let Some((id, rows, depth)) = stack.pop() {
            let mut counts = vec![0usize; n_classes];
            for &r in &rows {
                counts[labels[r]] += 1;
            }
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_done = params.max_depth.is_some_and(|d| depth >= d);
            let mut best: Option<Best<T>> = None;
            if !pure && !depth_done && rows.len() >= params.min_samples_split {
                let features: Vec<usize> = if per_split < m {
                    let r = rng.as_deref_mut().expect("feature sampling needs an rng");
                    let mut f = sample(r, m, per_split).into_vec();
                    f.sort_unstable();
                    f
                } else {
                    (0..m).collect()
                };
                for f in features {
                    pairs.clear();
                    pairs.extend(rows.iter().map(|&r| (train.row(r)[f], labels[r])));
                    if let Some((score, threshold)) = best_threshold(&mut pairs, &counts) {
                        if best.as_ref().is_none_or(|b| score > b.score) {
                            best = Some(Best {
                                score,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                }
            }
            match best {
                None => {
                    let total = T::from_usize_lossy(rows.len());
                    nodes[id] = Node::Leaf(counts.iter().map(|&c| T::from_usize_lossy(c) / total).collect());
                }
                Some(b) => {
                    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| train.row(r)[b.feature] <= b.threshold);
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf(Vec::new()));
                    nodes.push(Node::Leaf(Vec::new()));
                    nodes[id] = Node::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left,
                        right,
                    };
                    stack.push((right, right_rows, depth + 1));
                    stack.push((left, left_rows, depth + 1));
                }
            }
        }
        Tree { nodes }
    }

    /// Class distribution of the leaf `row` falls into.
    pub fn leaf(&self, row: &[T]) -> &[T] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, row: &[T]) -> usize {
        super::argmax(self.leaf(row))
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Best split of `pairs` on one feature as (score, threshold), where a higher
/// score means lower weighted Gini impurity. `None` if the values are all equal.
fn best_threshold<T: Scalar>(pairs: &mut [(T, usize)], counts: &[usize]) -> Option<(f64, T)> {
    pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let n = pairs.len();
    let mut left = vec![0usize; counts.len()];
    let mut right = counts.to_vec();
    // Sums of squared class counts on each side, maintained incrementally.
    let mut sq_left = 0f64;
    let mut sq_right: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    let mut best: Option<(f64, T)> = None;
    for i in 0..n - 1 {
        let k = pairs[i].1;
        sq_left += (2 * left[k] + 1) as f64;
        sq_right -= (2 * right[k] - 1) as f64;
        left[k] += 1;
        right[k] -= 1;
        let (a, b) = (pairs[i].0, pairs[i + 1].0);
        if !(a < b) {
            continue;
        }
        let (nl, nr) = ((i + 1) as f64, (n - i - 1) as f64);
        // n * weighted Gini = n - (sq_left / nl + sq_right / nr)
        let score = sq_left / nl + sq_right / nr;
        if best.is_none_or(|(s, _)| score > s) {
            let two = T::one() + T::one();
            let mid = a + (b - a) / two;
            let threshold = if mid < b && mid >= a { mid } else { a };
            best = Some((score, threshold));
        }
    }
    best
}
