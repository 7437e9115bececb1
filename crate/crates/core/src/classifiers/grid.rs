//! Exhaustive grid search with stratified k-fold cross-validation.
//!
//! Grid file (TOML):
//!
//! ```toml
//! classifier = "random_forest"   # optional
//! folds = 10                     # optional
//!
//! [grid]
//! n_trees = [100, 200]
//! max_depth = [16, "none"]
//! ```
//!
//! Points are enumerated with the last key varying fastest. Keys read from a
//! file are taken in alphabetical order.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, fit_state, ClassifierKind, ClassifierSpec, HyperValue};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

const FOLD_STREAM: u64 = 0x464f_4c44;

/// Ordered hyperparameter axes.
pub type Grid = Vec<(String, Vec<HyperValue>)>;

/// Built-in search grid for each classifier.
pub fn default_grid(kind: ClassifierKind) -> Grid {
    use HyperValue::{Float, Int, Unbounded};
    let axes: Vec<(&str, Vec<HyperValue>)> = match kind {
        ClassifierKind::GaussianNb => vec![("var_smoothing", vec![Float(1e-9), Float(1e-8), Float(1e-7)])],
        ClassifierKind::Knn => vec![("k", vec![Int(1), Int(3), Int(5), Int(7), Int(9)])],
        ClassifierKind::DecisionTree => vec![
            ("max_depth", vec![Int(8), Int(16), Int(32), Unbounded]),
            ("min_samples_split", vec![Int(2), Int(8)]),
        ],
        ClassifierKind::RandomForest => vec![
            ("n_trees", vec![Int(100), Int(200)]),
            ("max_depth", vec![Int(16), Unbounded]),
        ],
        ClassifierKind::LogisticRegression => vec![
            ("l2", vec![Float(0.0), Float(0.01), Float(0.1)]),
            ("learning_rate", vec![Float(0.1), Float(0.5)]),
        ],
    };
    axes.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Every grid point as a validated spec, last axis varying fastest.
pub fn enumerate_grid(kind: ClassifierKind, grid: &Grid, seed: u64) -> Result<Vec<ClassifierSpec>> {
    if let Some((name, _)) = grid.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::invalid(format!("grid axis {name} has no values")));
    }
    let mut points = vec![ClassifierSpec::new(kind, seed)];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| values.iter().map(move |&v| p.clone().with(name, v)))
            .collect();
    }
    for p in &points {
        p.validate()?;
    }
    Ok(points)
}

/// Fold id of every row: each class is shuffled with its own seeded stream
/// and dealt round-robin, continuing where the previous class stopped, so
/// per-class fold counts and total fold sizes each differ by at most one.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("{k} folds; at least 2 are needed")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((c, rows)) = by_class
        .iter()
        .enumerate()
        .find(|(_, r)| !r.is_empty() && r.len() < k)
    {
        return Err(Error::invalid(format!(
            "{k} folds are infeasible: class {c} has only {} rows",
            rows.len()
        )));
    }
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for (c, mut rows) in by_class.into_iter().enumerate() {
        rows.shuffle(&mut rng::rng(seed, &[FOLD_STREAM, c as u64]));
        for r in rows {
            fold[r] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub point: usize,
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ClassifierSpec,
    pub best_index: usize,
    pub best_score: f64,
    pub points: Vec<ClassifierSpec>,
    pub mean_scores: Vec<f64>,
    pub folds: usize,
    pub cv_table: Vec<CvRecord>,
}

impl GridSearchResult {
    /// CSV rendering of the cv table: `point,params,fold,accuracy`.
    pub fn render_table(&self) -> String {
        let mut out = String::from("point,params,fold,accuracy\n");
        for r in &self.cv_table {
            out.push_str(&format!(
                "{},\"{}\",{},{:?}\n",
                r.point,
                self.points[r.point].describe(),
                r.fold,
                r.accuracy
            ));
        }
        out
    }
}

/// Scores every grid point on one seeded stratified fold partition and
/// returns the point with the highest mean fold accuracy (earliest point on
/// ties). `train` must already be normalized.
pub fn grid_search<T: Scalar>(
    kind: ClassifierKind,
    grid: &Grid,
    train: &Dataset<T>,
    k: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    let points = enumerate_grid(kind, grid, seed)?;
    if train.present_classes().len() < 2 {
        return Err(Error::Degenerate("grid search needs at least 2 classes".into()));
    }
    let fold_of = stratified_folds(train.labels(), k, seed)?;
    let splits: Vec<(Dataset<T>, Dataset<T>)> = (0..k)
        .map(|f| {
            let (test, fit): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| fold_of[i] == f);
            (train.subset(&fit), train.subset(&test))
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..k).map(move |f| (p, f))).collect();
    let cv_table = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (fit_set, test_set) = &splits[f];
            let state = fit_state(&points[p], fit_set)?;
            let mut proba = vec![T::zero(); train.n_classes()];
            let hits = test_set
                .rows()
                .zip(test_set.labels())
                .filter(|(row, &y)| {
                    state.proba(row, &mut proba);
                    argmax(&proba) == y
                })
                .count();
            Ok(CvRecord {
                point: p,
                fold: f,
                accuracy: hits as f64 / test_set.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_scores: Vec<f64> = (0..points.len())
        .map(|p| cv_table[p * k..(p + 1) * k].iter().map(|r| r.accuracy).sum::<f64>() / k as f64)
        .collect();
    let best_index = argmax(&mean_scores);
    log::info!(
        "grid search {kind}: {} points x {k} folds, best {} (mean accuracy {:.4})",
        points.len(),
        points[best_index].describe(),
        mean_scores[best_index]
    );
    Ok(GridSearchResult {
        best: points[best_index].clone(),
        best_index,
        best_score: mean_scores[best_index],
        points,
        mean_scores,
        folds: k,
        cv_table,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub classifier: Option<ClassifierKind>,
    pub folds: Option<usize>,
    pub grid: Grid,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGridFile {
    classifier: Option<String>,
    folds: Option<usize>,
    grid: toml::Table,
}

pub fn parse_grid(text: &str, origin: &Path) -> Result<GridFile> {
    let cfg = |message: String| Error::Config {
        path: origin.to_path_buf(),
        message,
    };
    let raw: RawGridFile = toml::from_str(text).map_err(|e| cfg(e.to_string()))?;
    let classifier = raw.classifier.as_deref().map(str::parse).transpose()?;
    let mut grid = Grid::new();
    for (name, value) in raw.grid {
        let items = match value {
            toml::Value::Array(a) => a,
            other => vec![other],
        };
        let values = items
            .into_iter()
            .map(|v| match v {
                toml::Value::Integer(i) if i >= 0 => Ok(HyperValue::Int(i as u64)),
                toml::Value::Float(f) => Ok(HyperValue::Float(f)),
                toml::Value::String(s) => s.parse(),
                other => Err(cfg(format!("grid.{name}: unsupported value {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        grid.push((name, values));
    }
    if let Some(kind) = classifier {
        enumerate_grid(kind, &grid, 0).map_err(|e| cfg(e.to_string()))?;
    }
    Ok(GridFile {
        classifier,
        folds: raw.folds,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::tests::blobs;
    use crate::dataset::Normalizer;
    use proptest::prelude::*;

    #[test]
    fn enumeration_order_is_last_axis_fastest() {
        let pts = enumerate_grid(ClassifierKind::DecisionTree, &default_grid(ClassifierKind::DecisionTree), 0).unwrap();
        assert_eq!(pts.len(), 8);
        let d: Vec<String> = pts.iter().map(|p| p.describe()).collect();
        assert_eq!(d[0], "decision_tree(max_depth=8, min_samples_split=2)");
        assert_eq!(d[1], "decision_tree(max_depth=8, min_samples_split=8)");
        assert_eq!(d[7], "decision_tree(max_depth=none, min_samples_split=8)");
    }

    #[test]
    fn default_grids_are_valid() {
        for kind in ClassifierKind::ALL {
            assert!(!enumerate_grid(kind, &default_grid(kind), 0).unwrap().is_empty());
        }
    }

    #[test]
    fn single_point_grid() {
        let d = blobs(20, 3, 3, 1.0, 1);
        let z = Normalizer::fit(&d).unwrap().apply(&d).unwrap();
        let grid = vec![("k".to_string(), vec![HyperValue::Int(3)])];
        let r = grid_search(ClassifierKind::Knn, &grid, &z, 10, 4).unwrap();
        assert_eq!(r.cv_table.len(), 10);
        assert_eq!(r.best.hyperparams["k"], HyperValue::Int(3));
        assert_eq!(r, grid_search(ClassifierKind::Knn, &grid, &z, 10, 4).unwrap());
    }

    #[test]
    fn infeasible_folds() {
        let labels = vec![0, 0, 0, 1, 1];
        assert!(stratified_folds(&labels, 3, 0).is_err());
        assert!(stratified_folds(&labels, 2, 0).is_ok());
        assert!(stratified_folds(&labels, 1, 0).is_err());
    }

    #[test]
    fn deeper_trees_score_at_least_stumps() {
        let d = blobs(30, 4, 3, 1.5, 2);
        let z = Normalizer::fit(&d).unwrap().apply(&d).unwrap();
        let grid = vec![("max_depth".to_string(), vec![HyperValue::Int(1), HyperValue::Int(8)])];
        let r = grid_search(ClassifierKind::DecisionTree, &grid, &z, 5, 1).unwrap();
        assert!(r.mean_scores[1] >= r.mean_scores[0]);
        assert_eq!(r.best_index, 1);
    }

    #[test]
    fn grid_file_parsing() {
        let g = parse_grid(
            "classifier = \"random_forest\"\nfolds = 5\n[grid]\nn_trees = [10, 20]\nmax_depth = [4, \"none\"]\n",
            Path::new("g.toml"),
        )
        .unwrap();
        assert_eq!(g.classifier, Some(ClassifierKind::RandomForest));
        assert_eq!(g.folds, Some(5));
        assert_eq!(g.grid[0], ("max_depth".to_string(), vec![HyperValue::Int(4), HyperValue::Unbounded]));
        assert!(parse_grid("classifier = \"knn\"\n[grid]\ndepth = [1]\n", Path::new("g")).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_rows(
            counts in proptest::collection::vec(10usize..40, 1..6),
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
            let k = 10;
            let fold = stratified_folds(&labels, k, seed).unwrap();
            prop_assert!(fold.iter().all(|&f| f < k));
            let mut sizes = vec![0usize; k];
            for &f in &fold { sizes[f] += 1; }
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for (c, _) in counts.iter().enumerate() {
                let mut per = vec![0usize; k];
                for (i, &f) in fold.iter().enumerate() { if labels[i] == c { per[f] += 1; } }
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
            prop_assert_eq!(&fold, &stratified_folds(&labels, k, seed).unwrap());
        }
    }
}
