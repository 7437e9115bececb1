//! Function fingerprinting from hardware performance counters.
//!
//! Counter values are collected one event per execution of a target
//! function, assembled into labeled datasets, and used to train and explain
//! classifiers that identify which function (or which library version) ran.

pub mod analysis;
pub mod classifiers;
pub mod counters;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod scalar;
pub mod vulnmode;
pub mod workloads;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset64 = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
pub type Normalizer64 = dataset::Normalizer<f64>;
pub type Normalizer32 = dataset::Normalizer<f32>;
