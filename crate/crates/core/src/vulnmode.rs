//! Patched/unpatched detection across builds of one library.
//!
//! Each version of the library is one acquisition class; rows are tagged with
//! the version tag and then relabeled binary by the version's patched flag
//! (unpatched = label 1, the positive class).
//!
//! Case file (TOML):
//!
//! ```toml
//! case_id = "CVE-2018-0734"
//! target_symbol = "dsa_sign_entry"
//! # Used for versions without a `library`; lets a case run on the
//! # synthetic or replay backends.
//! builtin = "sha256"
//! input_policy = "random_length"      # or "fixed"; `input = "..."` for literal bytes
//! input_len = [64, 256]
//! signature = { args = "ptr_len", returns = "status" }
//!
//! [[version]]
//! tag = "1.1.0a"
//! library = "/opt/openssl-1.1.0a/libcrypto.so"
//! patched = false
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::counters::{CounterBackend, ProfileOverride, SyntheticConfig, SyntheticEvent};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::EvalReport;
use crate::harness::{self, AcquisitionPlan, DEFAULT_WARMUP};
use crate::pipeline::{self, PipelineConfig};
use crate::rng;
use crate::scalar::Scalar;
use crate::workloads::{BuiltinKind, InputPolicy, SymbolSignature, WorkloadKind, WorkloadSpec, DEFAULT_INPUT_RANGE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionSpec {
    pub tag: String,
    #[serde(default)]
    pub library: Option<PathBuf>,
    pub patched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VulnCase {
    pub case_id: String,
    pub target_symbol: String,
    pub signature: SymbolSignature,
    pub versions: Vec<VersionSpec>,
    pub input_policy: InputPolicy,
    pub input_len_range: (usize, usize),
    /// Stand-in for versions that name no library.
    pub builtin: Option<BuiltinKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    case_id: String,
    target_symbol: String,
    #[serde(default)]
    signature: SymbolSignature,
    #[serde(default)]
    builtin: Option<String>,
    #[serde(default = "default_policy")]
    input_policy: String,
    #[serde(default)]
    input: Option<String>,
    #[serde(default)]
    input_len: Option<(usize, usize)>,
    #[serde(rename = "version")]
    versions: Vec<VersionSpec>,
}

fn default_policy() -> String {
    "random_length".into()
}

impl VulnCase {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg_err = |message: String| Error::Config {
            path: origin.to_path_buf(),
            message,
        };
        let f: CaseFile = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        let input_policy = match (f.input_policy.as_str(), f.input) {
            (_, Some(literal)) => InputPolicy::Literal(literal.into_bytes()),
            ("fixed", None) => InputPolicy::Fixed,
            ("random_length", None) => InputPolicy::RandomLength,
            (other, None) => return Err(cfg_err(format!("unknown input policy {other:?}"))),
        };
        let builtin = f
            .builtin
            .map(|b| b.parse::<BuiltinKind>())
            .transpose()
            .map_err(|e| cfg_err(e.to_string()))?;
        let case = VulnCase {
            case_id: f.case_id,
            target_symbol: f.target_symbol,
            signature: f.signature,
            versions: f.versions,
            input_policy,
            input_len_range: f.input_len.unwrap_or(DEFAULT_INPUT_RANGE),
            builtin,
        };
        case.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(case)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for v in &self.versions {
            if v.tag.is_empty() || v.tag.contains(',') {
                return Err(Error::invalid(format!("version tag {:?} is empty or contains a comma", v.tag)));
            }
            if !seen.insert(v.tag.as_str()) {
                return Err(Error::invalid(format!("version {} listed twice", v.tag)));
            }
            if v.library.is_none() && self.builtin.is_none() {
                return Err(Error::invalid(format!(
                    "version {} names no library and the case has no builtin stand-in",
                    v.tag
                )));
            }
        }
        let patched = self.versions.iter().filter(|v| v.patched).count();
        if patched == 0 || patched == self.versions.len() {
            return Err(Error::Degenerate(format!(
                "case {} needs patched and unpatched versions ({patched} of {} patched)",
                self.case_id,
                self.versions.len()
            )));
        }
        Ok(())
    }

    fn tags_where(&self, patched: bool) -> BTreeSet<String> {
        self.versions
            .iter()
            .filter(|v| v.patched == patched)
            .map(|v| v.tag.clone())
            .collect()
    }

    /// One workload per version; id = version position.
    pub fn workloads(&self, seed: u64) -> Vec<WorkloadSpec> {
        self.versions
            .iter()
            .enumerate()
            .map(|(id, v)| WorkloadSpec {
                id,
                name: v.tag.clone(),
                kind: match (&v.library, self.builtin) {
                    (Some(lib), _) => WorkloadKind::DynamicSymbol {
                        library: lib.clone(),
                        symbol: self.target_symbol.clone(),
                        signature: self.signature,
                    },
                    (None, Some(b)) => WorkloadKind::Builtin(b),
                    (None, None) => unreachable!("validated"),
                },
                input_policy: self.input_policy.clone(),
                input_len_range: self.input_len_range,
                // Every version sees the same input stream.
                seed: rng::derive(seed, &[0]),
            })
            .collect()
    }
}

/// Acquisition parameters shared by every version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnPlan {
    pub events: Vec<String>,
    pub instances_per_version: usize,
    pub warmup_executions: u64,
    pub seed: u64,
}

impl VulnPlan {
    pub fn new(events: Vec<String>, instances_per_version: usize, seed: u64) -> Self {
        VulnPlan {
            events,
            instances_per_version,
            warmup_executions: DEFAULT_WARMUP,
            seed,
        }
    }

    fn acquisition_plan(&self, case: &VulnCase) -> AcquisitionPlan {
        let mut plan = AcquisitionPlan::new(
            case.workloads(self.seed),
            self.events.clone(),
            self.instances_per_version,
            self.seed,
        );
        plan.warmup_executions = self.warmup_executions;
        plan.tag = case.case_id.clone();
        plan
    }
}

/// Acquires every version in turn; labels are version positions and each
/// row's tag is its version tag.
pub fn acquire_case<T: Scalar>(case: &VulnCase, plan: &VulnPlan, backend: &mut dyn CounterBackend) -> Result<Dataset<T>> {
    case.validate()?;
    let data: Dataset<T> = harness::acquire_as(&plan.acquisition_plan(case), backend)?;
    retag(case, &data)
}

/// Like [`acquire_case`] for backends whose counts do not depend on running
/// the versions locally (replay).
pub fn acquire_case_recorded<T: Scalar>(
    case: &VulnCase,
    plan: &VulnPlan,
    backend: &mut dyn CounterBackend,
) -> Result<Dataset<T>> {
    case.validate()?;
    let data: Dataset<T> = harness::acquire_labels(&plan.acquisition_plan(case), backend)?;
    retag(case, &data)
}

fn retag<T: Scalar>(case: &VulnCase, data: &Dataset<T>) -> Result<Dataset<T>> {
    let tags = data.labels().iter().map(|&l| case.versions[l].tag.clone()).collect();
    let mut meta = data.meta().clone();
    meta.extra.insert("case_id".into(), case.case_id.clone());
    Dataset::from_flat(data.schema().to_vec(), data.values().to_vec(), data.labels().to_vec(), tags, meta)
}

/// Binary labels from version tags: unpatched tags become 1, patched 0, and
/// any other tag is an error.
pub fn relabel<T: Scalar>(case: &VulnCase, data: &Dataset<T>) -> Result<Dataset<T>> {
    data.relabel_binary(&case.tags_where(false), Some(&case.tags_where(true)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnReport {
    pub case_id: String,
    pub patched_rows: usize,
    pub unpatched_rows: usize,
    /// `(tag, patched, rows)` per version.
    pub versions: Vec<(String, bool, usize)>,
    pub report: EvalReport,
    pub best: String,
}

impl VulnReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "case: {}", self.case_id);
        let _ = writeln!(out, "model: {}", self.best);
        let _ = writeln!(
            out,
            "rows: {} unpatched, {} patched (imbalance {:.3})",
            self.unpatched_rows,
            self.patched_rows,
            self.unpatched_rows as f64 / (self.patched_rows + self.unpatched_rows) as f64
        );
        for (tag, patched, n) in &self.versions {
            let _ = writeln!(out, "  {tag}: {} ({n} rows)", if *patched { "patched" } else { "unpatched" });
        }
        out.push_str(&self.report.render_text());
        out
    }
}

/// Relabels a version-tagged dataset and runs the binary pipeline.
pub fn evaluate_case<T: Scalar>(case: &VulnCase, data: &Dataset<T>, cfg: &PipelineConfig) -> Result<VulnReport> {
    case.validate()?;
    let binary = relabel(case, data)?;
    let counts = binary.class_counts();
    let versions = case
        .versions
        .iter()
        .map(|v| (v.tag.clone(), v.patched, data.tags().iter().filter(|t| **t == v.tag).count()))
        .collect();
    let mut cfg = cfg.clone();
    cfg.stratified = true;
    let r = pipeline::run(&binary, &cfg)?;
    Ok(VulnReport {
        case_id: case.case_id.clone(),
        patched_rows: counts[0],
        unpatched_rows: counts[1],
        versions,
        best: r.model.spec.describe(),
        report: r.report,
    })
}

/// Acquire, relabel, split, train and score.
pub fn run_case<T: Scalar>(
    case: &VulnCase,
    plan: &VulnPlan,
    backend: &mut dyn CounterBackend,
    cfg: &PipelineConfig,
) -> Result<VulnReport> {
    let data: Dataset<T> = acquire_case(case, plan, backend)?;
    evaluate_case(case, &data, cfg)
}

/// A synthetic stand-in for a lettered-release series: 14 versions,
/// `1.1.0a` to `1.1.0e` unpatched and `1.1.0f` to `1.1.0n` patched. All
/// versions share one profile except that unpatched builds shift the means
/// of `BR_INS` and `BR_MSP` up by `shift_sigmas` standard deviations.
pub fn synthetic_demo(seed: u64, shift_sigmas: f64) -> (VulnCase, SyntheticConfig) {
    const CV: f64 = 0.02;
    let events = [
        ("TOT_INS", 120_000.0),
        ("TOT_CYC", 90_000.0),
        ("BR_INS", 18_000.0),
        ("BR_MSP", 900.0),
        ("L1_DCM", 2_400.0),
        ("L2_DCM", 600.0),
    ];
    let versions: Vec<VersionSpec> = (b'a'..=b'n')
        .map(|c| VersionSpec {
            tag: format!("1.1.0{}", c as char),
            library: None,
            patched: c >= b'f',
        })
        .collect();
    let mut cfg = SyntheticConfig::new(seed, versions.len(), &events);
    cfg.noise_cv = CV;
    for e in cfg.events.iter_mut() {
        *e = SyntheticEvent {
            informative: false,
            ..e.clone()
        };
    }
    for class_id in (0..versions.len()).filter(|&i| !versions[i].patched) {
        cfg.profiles.push(ProfileOverride {
            class_id,
            base: [("BR_INS", 18_000.0), ("BR_MSP", 900.0)]
                .into_iter()
                .map(|(n, b)| (n.to_string(), b * (1.0 + shift_sigmas * CV)))
                .collect(),
        });
    }
    let case = VulnCase {
        case_id: "CVE-2018-0734".into(),
        target_symbol: "dsa_sign_entry".into(),
        signature: SymbolSignature::default(),
        versions,
        input_policy: InputPolicy::RandomLength,
        input_len_range: (64, 256),
        builtin: Some(BuiltinKind::Sha256),
    };
    (case, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::ClassifierKind;
    use crate::counters::SyntheticBackend;

    fn demo_plan(cfg: &SyntheticConfig, n: usize) -> VulnPlan {
        let mut p = VulnPlan::new(cfg.events.iter().map(|e| e.name.clone()).collect(), n, 11);
        p.warmup_executions = 0;
        p
    }

    #[test]
    fn three_sigma_shift_is_detected() {
        let (case, syn) = synthetic_demo(5, 3.0);
        let plan = demo_plan(&syn, 60);
        let mut backend = SyntheticBackend::new(syn).unwrap();
        let mut cfg = PipelineConfig::new(ClassifierKind::GaussianNb, 2);
        cfg.folds = 3;
        let r = run_case::<f64>(&case, &plan, &mut backend, &cfg).unwrap();
        assert_eq!((r.unpatched_rows, r.patched_rows), (300, 540));
        let b = r.report.binary.clone().unwrap();
        assert!(b.precision.unwrap() >= 0.9, "{}", r.render_text());
        assert!(b.recall.unwrap() >= 0.9, "{}", r.render_text());
    }

    #[test]
    fn tags_survive_and_drive_labels() {
        let (case, syn) = synthetic_demo(1, 3.0);
        let plan = demo_plan(&syn, 3);
        let data: Dataset<f64> = acquire_case(&case, &plan, &mut SyntheticBackend::new(syn).unwrap()).unwrap();
        assert_eq!(data.tags()[0], "1.1.0a");
        assert_eq!(data.tags()[data.len() - 1], "1.1.0n");
        let bin = relabel(&case, &data).unwrap();
        for (t, &l) in bin.tags().iter().zip(bin.labels()) {
            let v = case.versions.iter().find(|v| &v.tag == t).unwrap();
            assert_eq!(l, usize::from(!v.patched));
        }
        assert_eq!(bin.meta().classes, vec!["patched", "unpatched"]);
    }

    #[test]
    fn all_patched_is_rejected() {
        let (mut case, _) = synthetic_demo(1, 3.0);
        case.versions.iter_mut().for_each(|v| v.patched = true);
        assert!(matches!(case.validate(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn missing_library_is_unresolvable() {
        let (mut case, syn) = synthetic_demo(1, 3.0);
        case.versions[0].library = Some("/nonexistent/libcrypto.so".into());
        let plan = demo_plan(&syn, 2);
        let err = acquire_case::<f64>(&case, &plan, &mut SyntheticBackend::new(syn).unwrap()).unwrap_err();
        assert!(err.is_environmental(), "{err}");
    }

    #[test]
    fn parses_case_file() {
        let text = r#"
case_id = "CVE-2018-0737"
target_symbol = "rsa_keygen_entry"
builtin = "crc32"
input = "fixed message"
signature = { args = "ptr_len", returns = "status" }

[[version]]
tag = "1.1.0g"
patched = false

[[version]]
tag = "1.1.0h"
patched = true
library = "/tmp/libcrypto-h.so"
"#;
        let case = VulnCase::parse(text, Path::new("case.toml")).unwrap();
        assert_eq!(case.versions.len(), 2);
        assert_eq!(case.input_policy, InputPolicy::Literal(b"fixed message".to_vec()));
        let w = case.workloads(0);
        assert!(matches!(w[0].kind, WorkloadKind::Builtin(BuiltinKind::Crc32)));
        assert!(matches!(w[1].kind, WorkloadKind::DynamicSymbol { .. }));
        assert!(VulnCase::parse(&text.replace("patched = false", "patched = true"), Path::new("c")).is_err());
    }
}
