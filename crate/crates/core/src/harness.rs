//! Acquisition: warm each workload, then build every instance from one
//! execution per event.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use serde::Deserialize;

use crate::counters::{find_event, CounterBackend, EventDescriptor, LabelTarget, Target};
use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::workloads::{self, BuiltinKind, Workload, WorkloadSpec};

pub const DEFAULT_WARMUP: u64 = 10;

const WARMUP_STREAM: u64 = u64::MAX;
const ORDER_STREAM: u64 = 0x4f52_4445_52;
const MIX_STREAM: u64 = 0x4d49_58;

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionPlan {
    /// Class `i` is `workloads[i]`; ids must equal positions.
    pub workloads: Vec<WorkloadSpec>,
    /// Event names in feature-column order.
    pub events: Vec<String>,
    pub instances_per_class: usize,
    pub warmup_executions: u64,
    pub seed: u64,
    pub tag: String,
    /// Sweep events in a seeded per-instance order instead of plan order.
    /// Features are stored in plan order either way.
    pub randomize_event_order: bool,
}

impl AcquisitionPlan {
    pub fn new(workloads: Vec<WorkloadSpec>, events: Vec<String>, instances_per_class: usize, seed: u64) -> Self {
        AcquisitionPlan {
            workloads,
            events,
            instances_per_class,
            warmup_executions: DEFAULT_WARMUP,
            seed,
            tag: String::new(),
            randomize_event_order: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workloads.is_empty() {
            return Err(Error::invalid("plan has no workloads"));
        }
        if self.events.is_empty() {
            return Err(Error::invalid("plan has no events"));
        }
        if self.instances_per_class == 0 {
            return Err(Error::invalid("instances_per_class must be at least 1"));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = self.events.iter().find(|e| !seen.insert(e.as_str())) {
            return Err(Error::invalid(format!("event {dup} listed twice")));
        }
        if let Some((i, w)) = self.workloads.iter().enumerate().find(|(i, w)| w.id != *i) {
            return Err(Error::invalid(format!(
                "workload {} at position {i} has id {}",
                w.name, w.id
            )));
        }
        Ok(())
    }

    /// Measured executions plus warmup executions.
    pub fn total_executions(&self) -> u64 {
        let w = self.workloads.len() as u64;
        w * self.instances_per_class as u64 * self.events.len() as u64 + w * self.warmup_executions
    }

    pub fn class_names(&self) -> Vec<String> {
        self.workloads.iter().map(|w| w.name.clone()).collect()
    }

    fn instance_seed(&self, class: usize, instance: usize) -> u64 {
        rng::derive(self.seed, &[class as u64, instance as u64])
    }
}

/// Plan file (TOML).
///
/// ```toml
/// instances_per_class = 200
/// warmup_executions = 10        # optional, default 10
/// seed = 1
/// tag = "O0"                    # optional
/// randomize_event_order = false # optional
/// events = ["TOT_INS", "BR_MSP"] # optional, default: whole backend catalog
/// workloads = ["quicksort", "sha256"] # optional builtin subset
/// suite = "suite.toml"          # optional workload suite file instead
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub instances_per_class: usize,
    #[serde(default = "default_warmup")]
    pub warmup_executions: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tag: String,
    #[serde(default)]
    pub randomize_event_order: bool,
    pub events: Option<Vec<String>>,
    pub workloads: Option<Vec<String>>,
    pub suite: Option<PathBuf>,
}

fn default_warmup() -> u64 {
    DEFAULT_WARMUP
}

impl PlanFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::parse(&text, path)?;
        if let (Some(suite), Some(dir)) = (&plan.suite, path.parent()) {
            if suite.is_relative() {
                plan.suite = Some(dir.join(suite));
            }
        }
        Ok(plan)
    }

    /// Resolves workloads and events (missing events mean the whole catalog).
    pub fn resolve(&self, catalog: &[EventDescriptor]) -> Result<AcquisitionPlan> {
        let workloads = match (&self.suite, &self.workloads) {
            (Some(_), Some(_)) => return Err(Error::invalid("plan sets both `suite` and `workloads`")),
            (Some(path), None) => workloads::load_suite(path)?,
            (None, Some(names)) => names
                .iter()
                .enumerate()
                .map(|(id, n)| {
                    let kind: BuiltinKind = n.parse()?;
                    Ok(WorkloadSpec::builtin(id, kind, rng::derive(self.seed, &[id as u64])))
                })
                .collect::<Result<_>>()?,
            (None, None) => workloads::builtin_suite_seeded(self.seed),
        };
        let events = match &self.events {
            Some(e) => e.clone(),
            None => catalog.iter().map(|e| e.name.clone()).collect(),
        };
        let plan = AcquisitionPlan {
            workloads,
            events,
            instances_per_class: self.instances_per_class,
            warmup_executions: self.warmup_executions,
            seed: self.seed,
            tag: self.tag.clone(),
            randomize_event_order: self.randomize_event_order,
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Runs `target` `executions` times through the backend, keeping nothing.
pub fn warmup(backend: &mut dyn CounterBackend, target: &mut dyn Target, executions: u64) -> Result<()> {
    for _ in 0..executions {
        backend.warm(target)?;
    }
    Ok(())
}

/// Acquires the plan by invoking its workloads.
pub fn acquire(plan: &AcquisitionPlan, backend: &mut dyn CounterBackend) -> Result<Dataset<f64>> {
    acquire_as(plan, backend)
}

/// [`acquire`] for any scalar type.
pub fn acquire_as<T: Scalar>(plan: &AcquisitionPlan, backend: &mut dyn CounterBackend) -> Result<Dataset<T>> {
    plan.validate()?;
    let loaded = plan
        .workloads
        .iter()
        .map(Workload::load)
        .collect::<Result<Vec<_>>>()?;
    run(plan, backend, |class, seed| Box::new(loaded[class].prepare(seed)))
}

/// Acquires the plan with targets that only carry a label; for backends such
/// as replay whose counts do not depend on running anything locally.
pub fn acquire_labels<T: Scalar>(plan: &AcquisitionPlan, backend: &mut dyn CounterBackend) -> Result<Dataset<T>> {
    plan.validate()?;
    let names = plan.class_names();
    run(plan, backend, |class, _| {
        Box::new(LabelTarget {
            label: class,
            name: names[class].clone(),
        })
    })
}

struct Progress {
    start: Instant,
    last_report: Instant,
    executions: u64,
    total: u64,
}

impl Progress {
    fn new(total: u64) -> Self {
        let now = Instant::now();
        Progress {
            start: now,
            last_report: now,
            executions: 0,
            total,
        }
    }

    fn add(&mut self, n: u64) {
        self.executions += n;
        if self.last_report.elapsed().as_secs_f64() >= 2.0 {
            self.last_report = Instant::now();
            self.report();
        }
    }

    fn report(&self) {
        let secs = self.start.elapsed().as_secs_f64().max(1e-9);
        log::info!(
            "acquired {}/{} executions ({:.0} executions/s)",
            self.executions,
            self.total,
            self.executions as f64 / secs
        );
    }
}

fn run<'a, T: Scalar>(
    plan: &AcquisitionPlan,
    backend: &mut dyn CounterBackend,
    mut target_for: impl FnMut(usize, u64) -> Box<dyn Target + 'a>,
) -> Result<Dataset<T>> {
    let catalog = backend.catalog()?;
    let events: Vec<EventDescriptor> = plan
        .events
        .iter()
        .map(|name| {
            find_event(&catalog, name)
                .cloned()
                .ok_or_else(|| Error::UnknownEvent(name.clone()))
        })
        .collect::<Result<_>>()?;

    let n_classes = plan.workloads.len();
    let total_instances = n_classes * plan.instances_per_class;
    let mut progress = Progress::new(plan.total_executions());
    let mut values = Vec::with_capacity(total_instances * events.len());
    let mut labels = Vec::with_capacity(total_instances);
    let mut completed = 0;
    let abort = |completed: usize, e: Error| Error::AcquisitionAborted {
        completed,
        total: total_instances,
        source: Box::new(e),
    };

    for class in 0..n_classes {
        let mut warm = target_for(class, plan.instance_seed(class, WARMUP_STREAM as usize));
        warmup(backend, warm.as_mut(), plan.warmup_executions).map_err(|e| abort(completed, e))?;
        progress.add(plan.warmup_executions);
        drop(warm);

        for instance in 0..plan.instances_per_class {
            let seed = plan.instance_seed(class, instance);
            let mut order: Vec<usize> = (0..events.len()).collect();
            if plan.randomize_event_order {
                order.shuffle(&mut rng::rng(plan.seed, &[ORDER_STREAM, class as u64, instance as u64]));
            }
            let mut attempt = || -> Result<Vec<u64>> {
                let mut target = target_for(class, seed);
                sweep(backend, &events, &order, target.as_mut())
            };
            let row = match attempt() {
                Ok(row) => row,
                Err(first) => {
                    log::warn!(
                        "class {class} instance {instance}: {first}; discarding and retrying once"
                    );
                    attempt().map_err(|e| abort(completed, e))?
                }
            };
            values.extend(row.into_iter().map(T::from_count));
            labels.push(class);
            completed += 1;
            progress.add(events.len() as u64);
        }
    }
    progress.report();

    let mut meta = DatasetMeta::with_classes(plan.class_names());
    meta.seed = plan.seed;
    meta.backend = backend.identity();
    meta.warmup = plan.warmup_executions;
    meta.tag = plan.tag.clone();
    meta.timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs());
    meta.extra
        .insert("instances_per_class".into(), plan.instances_per_class.to_string());
    meta.extra.insert("n_events".into(), events.len().to_string());
    meta.extra.insert(
        "event_order".into(),
        if plan.randomize_event_order { "randomized" } else { "plan" }.into(),
    );
    let tags = vec![plan.tag.clone(); labels.len()];
    Dataset::from_flat(plan.events.clone(), values, labels, tags, meta)
}

/// Measures each event once, in `order`, and returns counts in event order.
fn sweep(
    backend: &mut dyn CounterBackend,
    events: &[EventDescriptor],
    order: &[usize],
    target: &mut dyn Target,
) -> Result<Vec<u64>> {
    let mut row = vec![0u64; events.len()];
    let mut used = BTreeSet::new();
    for &j in order {
        let sample = backend.measure_one(&events[j], target)?;
        if !used.insert(sample.exec_index) {
            return Err(Error::MeasurementFailed {
                event: events[j].name.clone(),
                reason: format!("execution {} reused within one instance", sample.exec_index),
            });
        }
        row[j] = sample.value;
    }
    Ok(row)
}

/// Concatenates datasets and shuffles rows with a seeded permutation. Row
/// tags are kept so each row's provenance survives.
pub fn mix<T: Scalar>(datasets: &[Dataset<T>], seed: u64) -> Result<Dataset<T>> {
    let (first, rest) = datasets
        .split_first()
        .ok_or_else(|| Error::invalid("nothing to mix"))?;
    let mut all = first.clone();
    for d in rest {
        all = all.concat(d)?;
    }
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut rng::rng(seed, &[MIX_STREAM]));
    let mut out = all.subset(&order);
    let mut tags: Vec<&str> = Vec::new();
    for d in datasets {
        if !tags.contains(&d.meta().tag.as_str()) {
            tags.push(&d.meta().tag);
        }
    }
    let tag = tags.join("+");
    let meta = out.meta_mut();
    meta.tag = tag;
    meta.extra.insert("mix_seed".into(), seed.to_string());
    meta.extra.insert("mixed_from".into(), datasets.len().to_string());
    Ok(out)
}
