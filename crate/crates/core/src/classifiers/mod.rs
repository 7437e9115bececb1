//! Classifier suite: Gaussian naive Bayes, k-nearest neighbours, CART
//! decision tree, random forest and multinomial logistic regression, behind
//! one fit / predict / predict-probabilities contract.
//!
//! Models are trained on normalized features and carry the normalizer that
//! produced them. Class probabilities always span the full class table;
//! classes absent from the training set get probability 0. `predict` is the
//! arg-max of `predict_proba`, ties going to the lowest label.

mod forest;
mod grid;
mod knn;
mod logistic;
mod naive_bayes;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ensure_same_schema, Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use forest::{bootstrap_indices, Forest};
pub use grid::{
    default_grid, enumerate_grid, grid_search, parse_grid, stratified_folds, CvRecord, Grid, GridFile,
    GridSearchResult,
};
pub use knn::Knn;
pub use logistic::Logistic;
pub use naive_bayes::GaussianNb;
pub use tree::{Node, Tree, TreeParams};

/// Version tag of the model file layout.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    GaussianNb,
    Knn,
    DecisionTree,
    RandomForest,
    LogisticRegression,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::GaussianNb,
        ClassifierKind::Knn,
        ClassifierKind::DecisionTree,
        ClassifierKind::RandomForest,
        ClassifierKind::LogisticRegression,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::GaussianNb => "gaussian_nb",
            ClassifierKind::Knn => "knn",
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::LogisticRegression => "logistic_regression",
        }
    }

    /// Hyperparameters accepted by this kind.
    pub fn params(self) -> &'static [&'static str] {
        match self {
            ClassifierKind::GaussianNb => &["var_smoothing"],
            ClassifierKind::Knn => &["k"],
            ClassifierKind::DecisionTree => &["max_depth", "min_samples_split"],
            ClassifierKind::RandomForest => &["n_trees", "max_depth", "min_samples_split", "max_features"],
            ClassifierKind::LogisticRegression => &["l2", "learning_rate", "max_iter"],
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = ClassifierKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!("unknown classifier {s:?} (known: {})", known.join(", ")))
            })
    }
}

/// Hyperparameter value. `Unbounded` stands for "no limit" (depth) or
/// "all" (feature count) and is written `none`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum HyperValue {
    Int(u64),
    Float(f64),
    Unbounded,
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Float(v) => write!(f, "{v:?}"),
            HyperValue::Unbounded => f.write_str("none"),
        }
    }
}

impl FromStr for HyperValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s, "none" | "inf" | "unbounded" | "all") {
            return Ok(HyperValue::Unbounded);
        }
        if let Ok(v) = s.parse::<u64>() {
            return Ok(HyperValue::Int(v));
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(HyperValue::Float(v)),
            _ => Err(Error::invalid(format!("bad hyperparameter value {s:?}"))),
        }
    }
}

impl From<HyperValue> for String {
    fn from(v: HyperValue) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for HyperValue {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl HyperValue {
    fn as_f64(self) -> Option<f64> {
        match self {
            HyperValue::Int(v) => Some(v as f64),
            HyperValue::Float(v) => Some(v),
            HyperValue::Unbounded => None,
        }
    }

    /// `None` for unbounded; errors for fractional values.
    fn as_count(self, name: &str) -> Result<Option<usize>> {
        match self {
            HyperValue::Int(v) => Ok(Some(v as usize)),
            HyperValue::Unbounded => Ok(None),
            HyperValue::Float(v) if v.fract() == 0.0 && v >= 0.0 => Ok(Some(v as usize)),
            HyperValue::Float(v) => Err(Error::invalid(format!("{name} must be an integer, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub hyperparams: BTreeMap<String, HyperValue>,
    pub seed: u64,
}

impl ClassifierSpec {
    /// Spec with every hyperparameter at its default.
    pub fn new(kind: ClassifierKind, seed: u64) -> Self {
        ClassifierSpec {
            kind,
            hyperparams: BTreeMap::new(),
            seed,
        }
    }

    pub fn with(mut self, name: &str, value: HyperValue) -> Self {
        self.hyperparams.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let allowed = self.kind.params();
        for (name, value) in &self.hyperparams {
            if !allowed.contains(&name.as_str()) {
                return Err(Error::invalid(format!(
                    "{} does not take hyperparameter {name} (accepted: {})",
                    self.kind,
                    allowed.join(", ")
                )));
            }
            let unbounded_ok = matches!(name.as_str(), "max_depth" | "max_features");
            if *value == HyperValue::Unbounded && !unbounded_ok {
                return Err(Error::invalid(format!("{name} cannot be unbounded")));
            }
        }
        match self.kind {
            ClassifierKind::GaussianNb => {
                if self.float("var_smoothing", 1e-9)? < 0.0 {
                    return Err(Error::invalid("var_smoothing must be non-negative"));
                }
            }
            ClassifierKind::Knn => {
                if self.count("k", 5)? == 0 {
                    return Err(Error::invalid("k must be at least 1"));
                }
            }
            ClassifierKind::DecisionTree | ClassifierKind::RandomForest => {
                self.tree_params()?;
                if self.count("n_trees", 100)? == 0 {
                    return Err(Error::invalid("n_trees must be at least 1"));
                }
            }
            ClassifierKind::LogisticRegression => {
                if self.float("l2", 0.0)? < 0.0 || self.float("learning_rate", 0.1)? <= 0.0 {
                    return Err(Error::invalid("l2 must be >= 0 and learning_rate > 0"));
                }
                self.count("max_iter", logistic::DEFAULT_MAX_ITER)?;
            }
        }
        Ok(())
    }

    fn float(&self, name: &str, default: f64) -> Result<f64> {
        match self.hyperparams.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::invalid(format!("{name} must be a number"))),
        }
    }

    fn count(&self, name: &str, default: usize) -> Result<usize> {
        match self.hyperparams.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_count(name)?
                .ok_or_else(|| Error::invalid(format!("{name} cannot be unbounded"))),
        }
    }

    fn optional_count(&self, name: &str, default: Option<usize>) -> Result<Option<usize>> {
        match self.hyperparams.get(name) {
            None => Ok(default),
            Some(v) => v.as_count(name),
        }
    }

    fn tree_params(&self) -> Result<TreeParams> {
        let min_samples_split = self.count("min_samples_split", 2)?;
        if min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        Ok(TreeParams {
            max_depth: self.optional_count("max_depth", None)?,
            min_samples_split,
            max_features: None,
        })
    }

    /// Hyperparameters rendered as `name=value` pairs in key order.
    pub fn describe(&self) -> String {
        let params: Vec<String> = self.hyperparams.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.kind, params.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FittedState<T> {
    GaussianNb(GaussianNb<T>),
    Knn(Knn<T>),
    DecisionTree(Tree<T>),
    RandomForest(Forest<T>),
    LogisticRegression(Logistic<T>),
}

impl<T: Scalar> FittedState<T> {
    fn proba(&self, row: &[T], out: &mut [T]) {
        match self {
            FittedState::GaussianNb(m) => m.proba(row, out),
            FittedState::Knn(m) => m.proba(row, out),
            FittedState::DecisionTree(m) => out.copy_from_slice(m.leaf(row)),
            FittedState::RandomForest(m) => m.proba(row, out),
            FittedState::LogisticRegression(m) => m.proba(row, out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedModel<T> {
    pub format_version: u32,
    pub spec: ClassifierSpec,
    pub normalizer: Normalizer<T>,
    pub class_table: Vec<String>,
    pub schema: Vec<String>,
    pub state: FittedState<T>,
    /// Mean cross-validated accuracy, when the spec came from a grid search.
    pub cv_score: Option<f64>,
    /// Free-form provenance (configuration hash, seeds, data source).
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

/// Fits `spec` on an already normalized training set.
pub fn fit<T: Scalar>(spec: &ClassifierSpec, train: &Dataset<T>, normalizer: Normalizer<T>) -> Result<TrainedModel<T>> {
    spec.validate()?;
    ensure_same_schema(&normalizer.schema, train.schema())?;
    let present = train.present_classes();
    if present.len() < 2 {
        return Err(Error::Degenerate(format!(
            "training set has {} class(es); at least 2 are needed",
            present.len()
        )));
    }
    if train.n_features() == 0 {
        return Err(Error::Degenerate("training set has no features".into()));
    }
    let state = fit_state(spec, train)?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        normalizer,
        class_table: train.meta().classes.clone(),
        schema: train.schema().to_vec(),
        state,
        cv_score: None,
        provenance: BTreeMap::new(),
    })
}

pub(crate) fn fit_state<T: Scalar>(spec: &ClassifierSpec, train: &Dataset<T>) -> Result<FittedState<T>> {
    Ok(match spec.kind {
        ClassifierKind::GaussianNb => FittedState::GaussianNb(GaussianNb::fit(train, spec.float("var_smoothing", 1e-9)?)),
        ClassifierKind::Knn => FittedState::Knn(Knn::fit(train, spec.count("k", 5)?)),
        ClassifierKind::DecisionTree => {
            let all: Vec<usize> = (0..train.len()).collect();
            FittedState::DecisionTree(Tree::fit(train, &all, &spec.tree_params()?, None))
        }
        ClassifierKind::RandomForest => {
            let mut params = spec.tree_params()?;
            params.max_features = spec.optional_count("max_features", Some(forest::sqrt_features(train.n_features())))?;
            FittedState::RandomForest(Forest::fit(train, spec.count("n_trees", 100)?, &params, spec.seed))
        }
        ClassifierKind::LogisticRegression => FittedState::LogisticRegression(Logistic::fit(
            train,
            spec.float("l2", 0.0)?,
            spec.float("learning_rate", 0.1)?,
            spec.count("max_iter", logistic::DEFAULT_MAX_ITER)?,
        )),
    })
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> TrainedModel<T> {
    pub fn n_classes(&self) -> usize {
        self.class_table.len()
    }

    /// Class probabilities for one normalized row (width unchecked).
    pub fn proba_row(&self, row: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.class_table.len()];
        self.state.proba(row, &mut out);
        out
    }

    pub fn predict_row(&self, row: &[T]) -> usize {
        argmax(&self.proba_row(row))
    }

    fn check(&self, data: &Dataset<T>) -> Result<()> {
        ensure_same_schema(&self.schema, data.schema())?;
        if data.meta().classes != self.class_table {
            return Err(Error::SchemaMismatch(format!(
                "class table {:?} differs from the model's {:?}",
                data.meta().classes,
                self.class_table
            )));
        }
        Ok(())
    }

    pub fn predict_proba(&self, data: &Dataset<T>) -> Result<Vec<Vec<T>>> {
        self.check(data)?;
        Ok(data.rows().map(|r| self.proba_row(r)).collect())
    }

    pub fn predict(&self, data: &Dataset<T>) -> Result<Vec<usize>> {
        self.check(data)?;
        Ok(data.rows().map(|r| self.predict_row(r)).collect())
    }

    /// Fraction of rows predicted correctly.
    pub fn accuracy(&self, data: &Dataset<T>) -> Result<f64> {
        let pred = self.predict(data)?;
        let hits = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("serializing model: {e}")))
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let model: TrainedModel<T> = serde_json::from_str(text).map_err(|e| Error::Malformed {
            path: origin.to_path_buf(),
            line: e.line() as u64,
            column: e.column(),
            message: e.to_string(),
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Malformed {
                path: origin.to_path_buf(),
                line: 0,
                column: 0,
                message: format!("model format version {} is not supported", model.format_version),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Compact re-indexing of the classes present in a training set.
#[derive(Debug, Clone)]
pub(crate) struct ClassIndex {
    pub present: Vec<usize>,
    pub compact: Vec<Option<usize>>,
}

impl ClassIndex {
    pub fn new<T: Scalar>(data: &Dataset<T>) -> Self {
        let present = data.present_classes();
        let mut compact = vec![None; data.n_classes()];
        for (i, &c) in present.iter().enumerate() {
            compact[c] = Some(i);
        }
        ClassIndex { present, compact }
    }
}
