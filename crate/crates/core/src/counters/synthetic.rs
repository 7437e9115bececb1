//! Deterministic synthetic counters.
//!
//! Each class has a per-event base count. The mean used for a draw is a
//! log-space interpolation between a shared base and the class base,
//! controlled by `separation`: at 0 every class has the shared mean, at 1
//! every class has its own base. Draws carry mean-preserving lognormal noise
//! with the configured coefficient of variation and an optional additive
//! overcount spike.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BackendCode, CounterBackend, CounterSample, EventDescriptor, Privilege, Target};
use crate::error::{Error, Result};
use crate::rng;

const RANK_STREAM: u64 = 0x5241_4e4b;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEvent {
    pub name: String,
    pub base: f64,
    #[serde(default = "yes")]
    pub informative: bool,
    #[serde(default)]
    pub privilege: Privilege,
    /// Overrides the global coefficient of variation for this event.
    #[serde(default)]
    pub noise_cv: Option<f64>,
}

fn yes() -> bool {
    true
}

/// Elevated counts during a class's first executions, decaying linearly to
/// the steady state after `executions` runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Warming {
    pub executions: u64,
    pub amplitude: f64,
}

impl Warming {
    pub fn multiplier(&self, prior_executions: u64) -> f64 {
        if prior_executions >= self.executions || self.executions == 0 {
            1.0
        } else {
            1.0 + self.amplitude * (1.0 - prior_executions as f64 / self.executions as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverride {
    pub class_id: usize,
    pub base: BTreeMap<String, f64>,
}

/// Synthetic backend configuration file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub classes: usize,
    #[serde(default)]
    pub noise_cv: f64,
    #[serde(default = "one")]
    pub separation: f64,
    /// Ratio between adjacent class levels of an informative event.
    #[serde(default = "default_step")]
    pub class_step: f64,
    #[serde(default)]
    pub overcount_rate: f64,
    /// Spike magnitude as a fraction of the mean.
    #[serde(default = "default_overcount_scale")]
    pub overcount_scale: f64,
    #[serde(default)]
    pub mode: Privilege,
    #[serde(default)]
    pub warming: Option<Warming>,
    pub events: Vec<SyntheticEvent>,
    #[serde(default)]
    pub profiles: Vec<ProfileOverride>,
}

fn one() -> f64 {
    1.0
}
fn default_step() -> f64 {
    0.1
}
fn default_overcount_scale() -> f64 {
    0.05
}

impl SyntheticConfig {
    /// Uniform configuration: `events` informative events with the given
    /// base counts.
    pub fn new(seed: u64, classes: usize, events: &[(&str, f64)]) -> Self {
        SyntheticConfig {
            seed,
            classes,
            noise_cv: 0.0,
            separation: 1.0,
            class_step: default_step(),
            overcount_rate: 0.0,
            overcount_scale: default_overcount_scale(),
            mode: Privilege::User,
            warming: None,
            events: events
                .iter()
                .map(|(name, base)| SyntheticEvent {
                    name: (*name).to_string(),
                    base: *base,
                    informative: true,
                    privilege: Privilege::User,
                    noise_cv: None,
                })
                .collect(),
            profiles: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: SyntheticConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::invalid("synthetic config lists no events"));
        }
        if self.classes == 0 {
            return Err(Error::invalid("synthetic config needs at least one class"));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.events {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::invalid(format!("duplicate event {}", e.name)));
            }
            if !(e.base > 0.0 && e.base.is_finite()) {
                return Err(Error::invalid(format!("event {} base must be positive", e.name)));
            }
            if let Some(cv) = e.noise_cv {
                check_cv(cv)?;
            }
        }
        check_cv(self.noise_cv)?;
        if !(0.0..=1.0).contains(&self.overcount_rate) {
            return Err(Error::invalid("overcount_rate must lie in [0, 1]"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("separation must be finite and non-negative"));
        }
        if !(self.class_step > -1.0 && self.class_step.is_finite()) {
            return Err(Error::invalid("class_step must exceed -1"));
        }
        for p in &self.profiles {
            if p.class_id >= self.classes {
                return Err(Error::invalid(format!(
                    "profile override for class {} but only {} classes",
                    p.class_id, self.classes
                )));
            }
            for (name, base) in &p.base {
                if !self.events.iter().any(|e| &e.name == name) {
                    return Err(Error::UnknownEvent(name.clone()));
                }
                if !(*base > 0.0 && base.is_finite()) {
                    return Err(Error::invalid(format!(
                        "class {} base for {name} must be positive",
                        p.class_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Expands the configuration into one profile per class.
    pub fn profiles(&self) -> Vec<SyntheticProfile> {
        let ranks: Vec<Vec<usize>> = self
            .events
            .iter()
            .map(|e| {
                let mut perm: Vec<usize> = (0..self.classes).collect();
                let mut r = rng::rng(self.seed, &[RANK_STREAM, rng::hash_str(&e.name)]);
                perm.shuffle(&mut r);
                perm
            })
            .collect();

        (0..self.classes)
            .map(|class_id| {
                let mut per_event_base = BTreeMap::new();
                let mut shared_base = BTreeMap::new();
                let mut noise_cv = BTreeMap::new();
                for (e, rank) in self.events.iter().zip(&ranks) {
                    let level = if e.informative { rank[class_id] as f64 } else { 0.0 };
                    per_event_base.insert(e.name.clone(), e.base * (1.0 + self.class_step).powf(level));
                    shared_base.insert(e.name.clone(), e.base);
                    noise_cv.insert(e.name.clone(), e.noise_cv.unwrap_or(self.noise_cv));
                }
                for o in self.profiles.iter().filter(|o| o.class_id == class_id) {
                    for (name, base) in &o.base {
                        per_event_base.insert(name.clone(), *base);
                    }
                }
                SyntheticProfile {
                    class_id,
                    per_event_base,
                    shared_base,
                    noise_cv,
                    separation: self.separation,
                    overcount_rate: self.overcount_rate,
                    overcount_scale: self.overcount_scale,
                    seed: self.seed,
                }
            })
            .collect()
    }
}

fn check_cv(cv: f64) -> Result<()> {
    if cv >= 0.0 && cv.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("noise_cv must be finite and non-negative"))
    }
}

/// Count-generation parameters of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProfile {
    pub class_id: usize,
    pub per_event_base: BTreeMap<String, f64>,
    /// Mean every class collapses to at zero separation.
    pub shared_base: BTreeMap<String, f64>,
    pub noise_cv: BTreeMap<String, f64>,
    pub separation: f64,
    pub overcount_rate: f64,
    pub overcount_scale: f64,
    pub seed: u64,
}

impl SyntheticProfile {
    /// Noise-free mean of `event` for this class.
    pub fn mean(&self, event: &str) -> Result<f64> {
        let base = self
            .per_event_base
            .get(event)
            .ok_or_else(|| Error::UnknownEvent(event.to_string()))?;
        let shared = self.shared_base.get(event).copied().unwrap_or(*base);
        if self.separation == 1.0 {
            Ok(*base)
        } else {
            Ok(shared * (base / shared).powf(self.separation))
        }
    }
}

/// Draws the count of `event` for execution `exec_index`.
///
/// A pure function of `(seed, class_id, event, exec_index)`.
pub fn synth_generate(profile: &SyntheticProfile, event: &str, exec_index: u64) -> Result<u64> {
    generate_scaled(profile, event, exec_index, 1.0)
}

fn generate_scaled(
    profile: &SyntheticProfile,
    event: &str,
    exec_index: u64,
    scale: f64,
) -> Result<u64> {
    let mean = profile.mean(event)? * scale;
    let cv = profile.noise_cv.get(event).copied().unwrap_or(0.0);
    let mut r = rng::rng(
        profile.seed,
        &[profile.class_id as u64, rng::hash_str(event), exec_index],
    );
    // Both variates are always drawn so the stream layout is independent of
    // the parameters.
    let z: f64 = StandardNormal.sample(&mut r);
    let u: f64 = r.random();
    let factor = if cv > 0.0 {
        let sigma = (1.0 + cv * cv).ln().sqrt();
        (sigma * z - 0.5 * sigma * sigma).exp()
    } else {
        1.0
    };
    let spike = if u < profile.overcount_rate {
        mean * profile.overcount_scale
    } else {
        0.0
    };
    Ok((mean * factor + spike).round().max(0.0) as u64)
}

/// Backend serving counts from [`SyntheticProfile`]s, keyed by target label.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    config: SyntheticConfig,
    profiles: Vec<SyntheticProfile>,
    catalog: Vec<EventDescriptor>,
    exec_counter: u64,
    per_class_runs: HashMap<usize, u64>,
}

impl SyntheticBackend {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let profiles = config.profiles();
        let catalog = config
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| EventDescriptor {
                name: e.name.clone(),
                description: format!("synthetic event {}", e.name),
                privilege: e.privilege,
                backend_code: BackendCode::Synthetic(i),
            })
            .collect();
        Ok(SyntheticBackend {
            config,
            profiles,
            catalog,
            exec_counter: 0,
            per_class_runs: HashMap::new(),
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn profiles(&self) -> &[SyntheticProfile] {
        &self.profiles
    }

    /// Number of executions performed so far, warmups included.
    pub fn executions(&self) -> u64 {
        self.exec_counter
    }

    fn run(&mut self, target: &mut dyn Target) -> Result<(u64, u64)> {
        target.invoke()?;
        let index = self.exec_counter;
        self.exec_counter += 1;
        let runs = self.per_class_runs.entry(target.label()).or_insert(0);
        let prior = *runs;
        *runs += 1;
        Ok((index, prior))
    }
}

impl CounterBackend for SyntheticBackend {
    fn identity(&self) -> String {
        format!("synthetic(seed={})", self.config.seed)
    }

    fn catalog(&self) -> Result<Vec<EventDescriptor>> {
        Ok(self.catalog.clone())
    }

    fn measure_one(
        &mut self,
        event: &EventDescriptor,
        target: &mut dyn Target,
    ) -> Result<CounterSample> {
        if !self.catalog.iter().any(|e| e.name == event.name) {
            return Err(Error::UnknownEvent(event.name.clone()));
        }
        if event.privilege == Privilege::Privileged && self.config.mode == Privilege::User {
            return Err(Error::PrivilegedEvent(event.name.clone()));
        }
        let label = target.label();
        if label >= self.profiles.len() {
            return Err(Error::MeasurementFailed {
                event: event.name.clone(),
                reason: format!("no synthetic profile for class {label}"),
            });
        }
        let (exec_index, prior) = self.run(target).map_err(|e| Error::MeasurementFailed {
            event: event.name.clone(),
            reason: e.to_string(),
        })?;
        let scale = self.config.warming.map_or(1.0, |w| w.multiplier(prior));
        let value = generate_scaled(&self.profiles[label], &event.name, exec_index, scale)?;
        Ok(CounterSample {
            event: event.name.clone(),
            value,
            exec_index,
        })
    }

    fn warm(&mut self, target: &mut dyn Target) -> Result<()> {
        self.run(target).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counters::LabelTarget;

    fn twelve_events() -> Vec<(String, f64)> {
        (0..12).map(|i| (format!("EV{i:02}"), 1000.0 * (i + 1) as f64)).collect()
    }

    fn config_with(events: &[(String, f64)]) -> SyntheticConfig {
        let refs: Vec<(&str, f64)> = events.iter().map(|(n, b)| (n.as_str(), *b)).collect();
        SyntheticConfig::new(11, 4, &refs)
    }

    #[test]
    fn catalog_mirrors_configuration() {
        let backend = SyntheticBackend::new(config_with(&twelve_events())).unwrap();
        let cat = backend.catalog().unwrap();
        assert_eq!(cat.len(), 12);
        assert!(cat.iter().all(|e| e.privilege == Privilege::User));
        assert_eq!(cat, backend.catalog().unwrap());
    }

    #[test]
    fn zero_noise_class_override_is_exact() {
        let mut cfg = SyntheticConfig::new(3, 8, &[("TOT_INS", 1.0)]);
        cfg.profiles.push(ProfileOverride {
            class_id: 7,
            base: [("TOT_INS".to_string(), 10000.0)].into_iter().collect(),
        });
        let mut backend = SyntheticBackend::new(cfg).unwrap();
        let ev = backend.catalog().unwrap().remove(0);
        let mut t = LabelTarget { label: 7, name: "c7".into() };
        for _ in 0..5 {
            assert_eq!(backend.measure_one(&ev, &mut t).unwrap().value, 10000);
        }
    }

    #[test]
    fn constant_without_noise_or_spikes() {
        let cfg = SyntheticConfig::new(1, 1, &[("A", 500.0)]);
        let p = &cfg.profiles()[0];
        for i in 0..100 {
            assert_eq!(synth_generate(p, "A", i).unwrap(), 500);
        }
    }

    #[test]
    fn zero_separation_collapses_classes() {
        let mut cfg = config_with(&twelve_events());
        cfg.separation = 0.0;
        let profiles = cfg.profiles();
        for e in &cfg.events {
            let m0 = profiles[0].mean(&e.name).unwrap();
            for p in &profiles[1..] {
                assert_eq!(p.mean(&e.name).unwrap(), m0);
            }
        }
    }

    #[test]
    fn unknown_event_is_rejected() {
        let cfg = SyntheticConfig::new(1, 1, &[("A", 500.0)]);
        let p = &cfg.profiles()[0];
        assert!(matches!(synth_generate(p, "B", 0), Err(Error::UnknownEvent(_))));
    }

    #[test]
    fn noise_matches_requested_cv() {
        let mut cfg = SyntheticConfig::new(5, 1, &[("A", 100_000.0)]);
        cfg.noise_cv = 0.02;
        let p = &cfg.profiles()[0];
        let xs: Vec<f64> = (0..10_000).map(|i| synth_generate(p, "A", i).unwrap() as f64).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let cv = var.sqrt() / mean;
        assert!((0.015..=0.025).contains(&cv), "cv = {cv}");
    }

    #[test]
    fn fresh_instances_agree() {
        let mut cfg = config_with(&twelve_events());
        cfg.noise_cv = 0.05;
        cfg.overcount_rate = 0.1;
        let draw = || {
            let mut b = SyntheticBackend::new(cfg.clone()).unwrap();
            let cat = b.catalog().unwrap();
            let mut t = LabelTarget { label: 2, name: "x".into() };
            cat.iter().map(|e| b.measure_one(e, &mut t).unwrap().value).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn privileged_event_needs_privileged_mode() {
        let mut cfg = SyntheticConfig::new(1, 1, &[("A", 10.0)]);
        cfg.events[0].privilege = Privilege::Privileged;
        let mut b = SyntheticBackend::new(cfg.clone()).unwrap();
        let ev = b.catalog().unwrap().remove(0);
        let mut t = LabelTarget { label: 0, name: "x".into() };
        assert!(matches!(b.measure_one(&ev, &mut t), Err(Error::PrivilegedEvent(_))));
        cfg.mode = Privilege::Privileged;
        let mut b = SyntheticBackend::new(cfg).unwrap();
        assert_eq!(b.measure_one(&ev, &mut t).unwrap().value, 10);
    }

    #[test]
    fn warming_ramp_decays() {
        let w = Warming { executions: 10, amplitude: 0.5 };
        assert_eq!(w.multiplier(0), 1.5);
        assert!(w.multiplier(9) > 1.0);
        assert_eq!(w.multiplier(10), 1.0);
    }

    #[test]
    fn config_file_parses_and_validates() {
        let text = r#"
            seed = 4
            classes = 2
            noise_cv = 0.01
            [[events]]
            name = "TOT_INS"
            base = 1000.0
            [[events]]
            name = "BR_MSP"
            base = 20.0
            informative = false
            privilege = "privileged"
        "#;
        let cfg = SyntheticConfig::from_toml_str(text, Path::new("inline")).unwrap();
        assert_eq!(cfg.events.len(), 2);
        assert_eq!(cfg.events[1].privilege, Privilege::Privileged);

        let bad = text.replace("base = 20.0", "base = -1.0");
        assert!(matches!(
            SyntheticConfig::from_toml_str(&bad, Path::new("inline")),
            Err(Error::Config { .. })
        ));
        let bad = format!("overcount_rate = 2.0\n{text}");
        assert!(SyntheticConfig::from_toml_str(&bad, Path::new("inline")).is_err());
    }
}
