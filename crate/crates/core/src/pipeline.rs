//! The learning pipeline shared by every task: stratified split, Z-score
//! normalization fitted on the training side, grid search with k-fold
//! cross-validation, refit of the best point, and test-set scoring.

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, default_grid, enumerate_grid, grid_search, ClassifierKind, Grid, GridSearchResult, TrainedModel};
use crate::dataset::{split_indices, Dataset, Normalizer, SplitIndices};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvalReport};
use crate::scalar::Scalar;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub split_ratio: f64,
    pub split_seed: u64,
    pub stratified: bool,
    pub classifier: ClassifierKind,
    /// `None` uses the classifier's built-in grid.
    pub grid: Option<Grid>,
    /// Cross-validation folds. Below 2 the search is skipped, which is only
    /// allowed for single-point grids.
    pub folds: usize,
    pub train_seed: u64,
}

impl PipelineConfig {
    pub fn new(classifier: ClassifierKind, seed: u64) -> Self {
        PipelineConfig {
            split_ratio: DEFAULT_SPLIT_RATIO,
            split_seed: seed,
            stratified: true,
            classifier,
            grid: None,
            folds: DEFAULT_FOLDS,
            train_seed: seed,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid.clone().unwrap_or_else(|| default_grid(self.classifier))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult<T> {
    pub split: SplitIndices,
    /// Normalized training and test sets.
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub search: Option<GridSearchResult>,
    pub model: TrainedModel<T>,
    pub report: EvalReport,
}

pub fn run<T: Scalar>(data: &Dataset<T>, cfg: &PipelineConfig) -> Result<PipelineResult<T>> {
    let split = split_indices(data.labels(), cfg.split_ratio, cfg.split_seed, cfg.stratified)?;
    let (train_raw, test_raw) = (data.subset(&split.train), data.subset(&split.test));
    let normalizer = Normalizer::fit(&train_raw)?;
    let train = normalizer.apply(&train_raw)?;
    let test = normalizer.apply(&test_raw)?;
    let grid = cfg.grid();
    let (spec, search) = if cfg.folds >= 2 {
        let s = grid_search(cfg.classifier, &grid, &train, cfg.folds, cfg.train_seed)?;
        (s.best.clone(), Some(s))
    } else {
        let mut points = enumerate_grid(cfg.classifier, &grid, cfg.train_seed)?;
        if points.len() != 1 {
            return Err(Error::invalid(format!(
                "cross-validation disabled but the grid has {} points",
                points.len()
            )));
        }
        (points.remove(0), None)
    };
    let mut model = classifiers::fit(&spec, &train, normalizer)?;
    model.cv_score = search.as_ref().map(|s| s.best_score);
    let report = evaluation::score(&model, &test)?;
    Ok(PipelineResult {
        split,
        train,
        test,
        search,
        model,
        report,
    })
}
