//! Experiment configuration.
//!
//! ```toml
//! out = "out/walkthrough"          # relative to this file
//! task = "multiclass"              # or "binary" (needs [vuln].case)
//!
//! [backend]
//! kind = "synthetic"               # synthetic | os | replay
//! config = "synthetic-16x12.toml"  # synthetic profile, or recorded dataset for replay
//!
//! [plan]                           # acquisition plan; seed comes from [seeds]
//! instances_per_class = 200
//!
//! [seeds]
//! acquire = 1
//! split = 2
//! train = 3
//! shap = 4
//!
//! [train]
//! classifier = "random_forest"
//! grid = "grids/rf.toml"
//! folds = 10
//!
//! [analysis]
//! top_n = [1, 2, 3]
//! background = 32
//! explain = 200
//! permutations = 2000
//!
//! [vuln]
//! case = "vuln-case.toml"
//! instances_per_version = 60
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fnprint::analysis::ShapleyMode;
use fnprint::classifiers::{default_grid, parse_grid, ClassifierKind, Grid};
use fnprint::counters::SyntheticConfig;
use fnprint::harness::{PlanFile, DEFAULT_WARMUP};
use fnprint::pipeline::{PipelineConfig, DEFAULT_FOLDS, DEFAULT_SPLIT_RATIO};
use fnprint::vulnmode::VulnCase;
use fnprint::workloads::crypto::sha256;
use fnprint::{Error, Result};
use serde::{Deserialize, Serialize};

pub const OUT_ENV: &str = "FNPRINT_OUT";
const DEFAULT_OUT: &str = "fnprint-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Synthetic,
    Os,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Multiclass,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ShapMode {
    #[default]
    Auto,
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default)]
    pub kind: BackendKind,
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub include_kernel: bool,
    #[serde(default = "yes")]
    pub pin: bool,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Synthetic,
            config: None,
            include_kernel: false,
            pin: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    #[serde(default = "default_instances")]
    pub instances_per_class: usize,
    #[serde(default = "default_warmup")]
    pub warmup_executions: u64,
    #[serde(default)]
    pub tag: String,
    #[serde(default)]
    pub randomize_event_order: bool,
    pub events: Option<Vec<String>>,
    pub workloads: Option<Vec<String>>,
    pub suite: Option<PathBuf>,
}

impl Default for PlanSection {
    fn default() -> Self {
        PlanSection {
            instances_per_class: default_instances(),
            warmup_executions: DEFAULT_WARMUP,
            tag: String::new(),
            randomize_event_order: false,
            events: None,
            workloads: None,
            suite: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "one")]
    pub acquire: u64,
    #[serde(default = "one")]
    pub split: u64,
    #[serde(default = "one")]
    pub train: u64,
    #[serde(default = "one")]
    pub shap: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            acquire: 1,
            split: 1,
            train: 1,
            shap: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_classifier")]
    pub classifier: String,
    pub grid: Option<PathBuf>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_ratio")]
    pub split_ratio: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            classifier: default_classifier(),
            grid: None,
            folds: DEFAULT_FOLDS,
            split_ratio: DEFAULT_SPLIT_RATIO,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_top_n")]
    pub top_n: Vec<usize>,
    #[serde(default = "default_background")]
    pub background: usize,
    #[serde(default = "default_explain")]
    pub explain: usize,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub mode: ShapMode,
    #[serde(default = "default_threshold")]
    pub correlation_threshold: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            top_n: default_top_n(),
            background: default_background(),
            explain: default_explain(),
            permutations: default_permutations(),
            mode: ShapMode::Auto,
            correlation_threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VulnSection {
    pub case: PathBuf,
    #[serde(default = "default_instances")]
    pub instances_per_version: usize,
}

fn yes() -> bool {
    true
}
fn one() -> u64 {
    1
}
fn default_instances() -> usize {
    100
}
fn default_warmup() -> u64 {
    DEFAULT_WARMUP
}
fn default_classifier() -> String {
    ClassifierKind::RandomForest.name().to_string()
}
fn default_folds() -> usize {
    DEFAULT_FOLDS
}
fn default_ratio() -> f64 {
    DEFAULT_SPLIT_RATIO
}
fn default_top_n() -> Vec<usize> {
    (1..=10).collect()
}
fn default_background() -> usize {
    32
}
fn default_explain() -> usize {
    200
}
fn default_permutations() -> usize {
    2000
}
fn default_threshold() -> f64 {
    0.95
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub plan: PlanSection,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    pub vuln: Option<VulnSection>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub classifier: Option<String>,
    pub grid: Option<PathBuf>,
    pub folds: Option<usize>,
    pub task: Option<Task>,
    pub top_n: Option<Vec<usize>>,
    pub permutations: Option<usize>,
    pub background: Option<usize>,
    pub shap_mode: Option<ShapMode>,
}

/// A validated configuration with every path resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub classifier: ClassifierKind,
    pub grid: Grid,
    pub case: Option<VulnCase>,
    /// Hex SHA-256 over the configuration, every file it references and the
    /// command-line overrides.
    pub config_hash: String,
}

fn config_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_err(path, format!("cannot read: {e}")))
}

/// Parses a top-N list such as `1-10` or `1,2,5`.
pub fn parse_top_n(text: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.trim().parse().map_err(|e| format!("{part}: {e}"))?,
                    b.trim().parse().map_err(|e| format!("{part}: {e}"))?,
                );
                if a > b {
                    return Err(format!("empty range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|e| format!("{part}: {e}"))?),
        }
    }
    if out.is_empty() {
        return Err("no sizes given".into());
    }
    Ok(out)
}

impl Experiment {
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self> {
        let mut digest_input = String::new();
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = read(p)?;
                let _ = writeln!(digest_input, "config\n{text}");
                let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| config_err(p, e.to_string()))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (cfg, base)
            }
            None => {
                digest_input.push_str("config\n(default)\n");
                (ExperimentConfig::default(), PathBuf::new())
            }
        };
        let origin = path.unwrap_or(Path::new("(default config)")).to_path_buf();

        if let Some(b) = ov.backend {
            cfg.backend.kind = b;
        }
        if let Some(s) = ov.seed {
            cfg.seeds = Seeds {
                acquire: s,
                split: s,
                train: s,
                shap: s,
            };
        }
        if let Some(c) = &ov.classifier {
            cfg.train.classifier = c.clone();
        }
        if let Some(f) = ov.folds {
            cfg.train.folds = f;
        }
        if let Some(t) = ov.task {
            cfg.task = t;
        }
        if let Some(n) = &ov.top_n {
            cfg.analysis.top_n = n.clone();
        }
        if let Some(p) = ov.permutations {
            cfg.analysis.permutations = p;
        }
        if let Some(b) = ov.background {
            cfg.analysis.background = b;
        }
        if let Some(m) = ov.shap_mode {
            cfg.analysis.mode = m;
        }
        // Paths from the file are relative to it; paths from flags to the
        // working directory.
        cfg.backend.config = cfg.backend.config.map(|p| resolve(&base, &p));
        cfg.plan.suite = cfg.plan.suite.map(|p| resolve(&base, &p));
        cfg.train.grid = match &ov.grid {
            Some(g) => Some(g.clone()),
            None => cfg.train.grid.map(|p| resolve(&base, &p)),
        };
        if let Some(v) = cfg.vuln.as_mut() {
            v.case = resolve(&base, &v.case);
        }
        let out = match (&ov.out, &cfg.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => resolve(&base, o),
            (None, None) => std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from),
        };

        let classifier: ClassifierKind = cfg
            .train
            .classifier
            .parse()
            .map_err(|e: Error| config_err(&origin, e.to_string()))?;
        let grid = match &cfg.train.grid {
            Some(g) => {
                let text = read(g)?;
                let _ = writeln!(digest_input, "grid\n{text}");
                let file = parse_grid(&text, g)?;
                if let Some(k) = file.classifier {
                    if k != classifier {
                        return Err(config_err(
                            g,
                            format!("grid is for {} but the classifier is {}", k.name(), classifier.name()),
                        ));
                    }
                }
                if ov.folds.is_none() {
                    if let Some(f) = file.folds {
                        cfg.train.folds = f;
                    }
                }
                file.grid
            }
            None => default_grid(classifier),
        };
        for (label, p) in [("backend", &cfg.backend.config), ("suite", &cfg.plan.suite)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(config_err(&origin, format!("{label} file {} does not exist", p.display())));
                }
                if cfg.backend.kind == BackendKind::Synthetic || label == "suite" {
                    let _ = writeln!(digest_input, "{label}\n{}", read(p)?);
                } else {
                    let _ = writeln!(digest_input, "{label}\n{}", p.display());
                }
            }
        }
        if cfg.backend.kind == BackendKind::Replay && cfg.backend.config.is_none() {
            return Err(config_err(&origin, "the replay backend needs `backend.config` naming a recorded dataset"));
        }
        let case = match &cfg.vuln {
            Some(v) => {
                let _ = writeln!(digest_input, "case\n{}", read(&v.case)?);
                Some(VulnCase::load(&v.case)?)
            }
            None => None,
        };
        if cfg.task == Task::Binary && case.is_none() {
            return Err(config_err(&origin, "task = binary needs a [vuln] case to map version tags to labels"));
        }
        if !(cfg.train.split_ratio > 0.0 && cfg.train.split_ratio < 1.0) {
            return Err(config_err(&origin, "train.split_ratio must lie strictly between 0 and 1"));
        }
        if cfg.analysis.background == 0 || cfg.analysis.explain == 0 || cfg.analysis.permutations == 0 {
            return Err(config_err(&origin, "analysis.background, explain and permutations must be positive"));
        }
        let _ = writeln!(
            digest_input,
            "effective\n{}",
            toml::to_string(&cfg).map_err(|e| config_err(&origin, e.to_string()))?
        );
        let config_hash = sha256(digest_input.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Experiment {
            cfg,
            out,
            classifier,
            grid,
            case,
            config_hash,
        })
    }

    pub fn plan_file(&self) -> PlanFile {
        let p = &self.cfg.plan;
        PlanFile {
            instances_per_class: p.instances_per_class,
            warmup_executions: p.warmup_executions,
            seed: self.cfg.seeds.acquire,
            tag: p.tag.clone(),
            randomize_event_order: p.randomize_event_order,
            events: p.events.clone(),
            workloads: p.workloads.clone(),
            suite: p.suite.clone(),
        }
    }

    /// Synthetic profile from `backend.config`, or the built-in default
    /// (16 classes, 12 events) seeded with the acquisition seed.
    pub fn synthetic_config(&self) -> Result<SyntheticConfig> {
        match &self.cfg.backend.config {
            Some(p) => SyntheticConfig::load(p),
            None => Ok(default_synthetic(self.cfg.seeds.acquire)),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let mut p = PipelineConfig::new(self.classifier, self.cfg.seeds.split);
        p.train_seed = self.cfg.seeds.train;
        p.split_ratio = self.cfg.train.split_ratio;
        p.grid = Some(self.grid.clone());
        p.folds = self.cfg.train.folds;
        p
    }

    pub fn shapley_mode(&self, features: usize) -> ShapleyMode {
        let a = &self.cfg.analysis;
        let sampled = ShapleyMode::Sampled {
            permutations: a.permutations,
            seed: self.cfg.seeds.shap,
        };
        match a.mode {
            ShapMode::Auto => ShapleyMode::auto(features, a.permutations, self.cfg.seeds.shap),
            ShapMode::Exact => ShapleyMode::Exact,
            ShapMode::Sampled => sampled,
        }
    }

    /// Key/value pairs embedded in every artifact.
    pub fn provenance(&self) -> BTreeMap<String, String> {
        let s = &self.cfg.seeds;
        [
            ("config_hash", self.config_hash.clone()),
            ("seed_acquire", s.acquire.to_string()),
            ("seed_split", s.split.to_string()),
            ("seed_train", s.train.to_string()),
            ("seed_shap", s.shap.to_string()),
            ("tool", format!("fnprint {}", env!("CARGO_PKG_VERSION"))),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Event names shared by the built-in synthetic profile and the OS backend.
pub const DEFAULT_EVENTS: [(&str, f64); 12] = [
    ("TOT_INS", 250_000.0),
    ("TOT_CYC", 180_000.0),
    ("REF_CYC", 170_000.0),
    ("BR_INS", 40_000.0),
    ("BR_MSP", 1_500.0),
    ("STL_ICY", 30_000.0),
    ("RES_STL", 60_000.0),
    ("LLC_TCA", 2_000.0),
    ("LLC_TCM", 300.0),
    ("L1_DCA", 90_000.0),
    ("L1_DCM", 3_000.0),
    ("L1_ICM", 800.0),
];

pub fn default_synthetic(seed: u64) -> SyntheticConfig {
    let mut cfg = SyntheticConfig::new(seed, 16, &DEFAULT_EVENTS);
    cfg.noise_cv = 0.02;
    cfg.overcount_rate = 0.01;
    cfg
}
