//! Counter backends.
//!
//! A backend exposes a catalog of events and measures exactly one event per
//! execution of a target: it arms a single counter, reads it immediately
//! before the call, runs the target once, reads it again after return and
//! reports the delta. Batching several counters into one execution and
//! software multiplexing are deliberately not offered.
//!
//! Three implementations exist:
//!
//! * [`SyntheticBackend`] draws deterministic counts from per-class profiles.
//! * [`ReplayBackend`] plays back counts recorded elsewhere (for example by a
//!   measurement agent that cannot run this crate).
//! * `PerfBackend` (Linux only) uses the kernel's `perf_event_open` interface.

mod replay;
mod synthetic;

#[cfg(target_os = "linux")]
mod perf;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use replay::ReplayBackend;
pub use synthetic::{
    synth_generate, ProfileOverride, SyntheticBackend, SyntheticConfig, SyntheticEvent, SyntheticProfile,
    Warming,
};

#[cfg(target_os = "linux")]
pub use perf::{PerfBackend, PerfConfig};

/// Access level needed to read an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Privilege {
    #[default]
    User,
    Privileged,
}

impl fmt::Display for Privilege {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Privilege::User => f.write_str("user"),
            Privilege::Privileged => f.write_str("privileged"),
        }
    }
}

/// Backend-specific encoding of an event. Opaque to everything except the
/// backend that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendCode {
    Perf { kind: u32, config: u64 },
    TimestampCounter,
    Synthetic(usize),
    Replay(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventDescriptor {
    pub name: String,
    pub description: String,
    pub privilege: Privilege,
    pub backend_code: BackendCode,
}

/// One counter delta around one execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterSample {
    pub event: String,
    pub value: u64,
    /// Ordinal of the execution within the backend instance.
    pub exec_index: u64,
}

/// Something a backend can run and measure.
pub trait Target {
    /// Class identifier of the function behind this target.
    fn label(&self) -> usize;

    fn name(&self) -> &str;

    /// Runs the function exactly once.
    fn invoke(&mut self) -> Result<()>;
}

/// Measurement backend contract.
///
/// Instances are confined to one thread; `measure_one` is never called
/// concurrently on the same backend.
pub trait CounterBackend {
    /// Stable identifier recorded in dataset metadata.
    fn identity(&self) -> String;

    /// Every measurable event, in a stable order.
    fn catalog(&self) -> Result<Vec<EventDescriptor>>;

    /// Arms `event` alone, runs `target` once and returns the delta.
    fn measure_one(
        &mut self,
        event: &EventDescriptor,
        target: &mut dyn Target,
    ) -> Result<CounterSample>;

    /// Runs `target` once without retaining a measurement.
    fn warm(&mut self, target: &mut dyn Target) -> Result<()> {
        target.invoke()
    }
}

/// Looks up `name` in a catalog.
pub fn find_event<'a>(catalog: &'a [EventDescriptor], name: &str) -> Option<&'a EventDescriptor> {
    catalog.iter().find(|e| e.name == name)
}

/// Target that does nothing; used where only the label matters (replay).
#[derive(Debug, Clone)]
pub struct LabelTarget {
    pub label: usize,
    pub name: String,
}

impl Target for LabelTarget {
    fn label(&self) -> usize {
        self.label
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn invoke(&mut self) -> Result<()> {
        Ok(())
    }
}

pub(crate) fn delta(event: &str, before: u64, after: u64) -> Result<u64> {
    after
        .checked_sub(before)
        .ok_or_else(|| crate::Error::MeasurementFailed {
            event: event.to_string(),
            reason: format!("post-read {after} is lower than pre-read {before}"),
        })
}
