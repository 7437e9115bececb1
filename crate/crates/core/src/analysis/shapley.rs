//! Shapley-value attributions of a model's prediction.
//!
//! For an instance `x`, the game value of a feature coalition `S` is the
//! interventional expectation
//! `v(S) = mean_b f(x_S, b_rest)` over background rows `b`, where `f` is the
//! model's probability for the class it predicts for `x`. Attributions are
//!
//! `phi_i = sum over S not containing i of |S|! (M-|S|-1)! / M! * (v(S+i) - v(S))`
//!
//! computed exactly by enumerating every coalition, or estimated by
//! averaging marginal contributions along random feature orderings.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{argmax, TrainedModel};
use crate::error::{Error, Result};
use crate::plot::BarChart;
use crate::rng;
use crate::scalar::Scalar;

/// Largest feature count explained by full coalition enumeration.
pub const MAX_EXACT_FEATURES: usize = 12;
/// Largest feature count supported by the sampled estimator.
const MAX_FEATURES: usize = 128;
const SAMPLE_STREAM: u64 = 0x5348_4150;

/// Anything that maps a row to class probabilities.
pub trait Explainable<T>: Sync {
    fn proba(&self, row: &[T]) -> Vec<T>;
}

impl<T: Scalar> Explainable<T> for TrainedModel<T> {
    fn proba(&self, row: &[T]) -> Vec<T> {
        self.proba_row(row)
    }
}

/// Adapter for closures.
pub struct FnModel<F>(pub F);

impl<T, F: Fn(&[T]) -> Vec<T> + Sync> Explainable<T> for FnModel<F> {
    fn proba(&self, row: &[T]) -> Vec<T> {
        (self.0)(row)
    }
}

type Mask = u128;

fn contains(mask: Mask, i: usize) -> bool {
    mask >> i & 1 == 1
}

/// Game of one instance with memoized coalition values.
struct Game<'a, T, M: ?Sized> {
    model: &'a M,
    x: &'a [T],
    background: &'a [Vec<T>],
    class: usize,
    cache: HashMap<Mask, f64>,
    composite: Vec<T>,
}

impl<'a, T: Scalar, M: Explainable<T> + ?Sized> Game<'a, T, M> {
    fn new(model: &'a M, x: &'a [T], background: &'a [Vec<T>]) -> Self {
        let class = argmax(&model.proba(x));
        Game {
            model,
            x,
            background,
            class,
            cache: HashMap::new(),
            composite: x.to_vec(),
        }
    }

    fn value(&mut self, mask: Mask) -> f64 {
        if let Some(&v) = self.cache.get(&mask) {
            return v;
        }
        let mut total = 0.0;
        for b in self.background {
            for (j, slot) in self.composite.iter_mut().enumerate() {
                *slot = if contains(mask, j) { self.x[j] } else { b[j] };
            }
            total += self.model.proba(&self.composite)[self.class].to_f64_lossy();
        }
        let v = total / self.background.len() as f64;
        self.cache.insert(mask, v);
        v
    }
}

fn check_inputs<T>(x: &[T], background: &[Vec<T>]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::invalid("background set is empty"));
    }
    if let Some(b) = background.iter().find(|b| b.len() != x.len()) {
        return Err(Error::SchemaMismatch(format!(
            "background row has {} features, instance has {}",
            b.len(),
            x.len()
        )));
    }
    if x.len() > MAX_FEATURES {
        return Err(Error::invalid(format!("{} features exceed the supported {MAX_FEATURES}", x.len())));
    }
    Ok(())
}

fn mask_of(subset: &[usize], m: usize) -> Result<Mask> {
    let mut mask = 0;
    for &i in subset {
        if i >= m {
            return Err(Error::invalid(format!("feature {i} out of range for {m} features")));
        }
        mask |= 1 << i;
    }
    Ok(mask)
}

/// `v(S)` for the coalition `subset`.
pub fn value_function<T: Scalar, M: Explainable<T> + ?Sized>(
    model: &M,
    x: &[T],
    subset: &[usize],
    background: &[Vec<T>],
) -> Result<f64> {
    check_inputs(x, background)?;
    let mask = mask_of(subset, x.len())?;
    Ok(Game::new(model, x, background).value(mask))
}

/// `|S|! (M-|S|-1)! / M!`, the weight of a coalition of size `s`.
pub fn shapley_weight(m: usize, s: usize) -> f64 {
    // 1 / (M * C(M-1, s))
    let mut binom = 1.0f64;
    for k in 0..s {
        binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
    }
    1.0 / (m as f64 * binom)
}

/// Attributions of one instance by `attribute`, with `(v(empty), v(all))`.
#[derive(Debug, Clone, PartialEq)]
struct Attribution {
    phi: Vec<f64>,
    baseline: f64,
    full: f64,
    class: usize,
}

fn exact<T: Scalar, M: Explainable<T> + ?Sized>(model: &M, x: &[T], background: &[Vec<T>]) -> Result<Attribution> {
    check_inputs(x, background)?;
    let m = x.len();
    if m > MAX_EXACT_FEATURES {
        return Err(Error::invalid(format!(
            "exact Shapley values are limited to {MAX_EXACT_FEATURES} features, got {m}; use sampling"
        )));
    }
    let mut game = Game::new(model, x, background);
    let all: Mask = (1 << m) - 1;
    let values: Vec<f64> = (0..=all).map(|s| game.value(s)).collect();
    let weights: Vec<f64> = (0..m).map(|s| shapley_weight(m, s)).collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0..=all {
            if !contains(s, i) {
                let size = s.count_ones() as usize;
                *p += weights[size] * (values[(s | 1 << i) as usize] - values[s as usize]);
            }
        }
    }
    Ok(Attribution {
        phi,
        baseline: values[0],
        full: values[all as usize],
        class: game.class,
    })
}

fn sampled<T: Scalar, M: Explainable<T> + ?Sized>(
    model: &M,
    x: &[T],
    background: &[Vec<T>],
    permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    check_inputs(x, background)?;
    if permutations == 0 {
        return Err(Error::invalid("at least one permutation is needed"));
    }
    let m = x.len();
    let mut game = Game::new(model, x, background);
    let mut r = rng::rng(seed, &[SAMPLE_STREAM]);
    let mut order: Vec<usize> = (0..m).collect();
    let mut phi = vec![0.0; m];
    let baseline = game.value(0);
    for _ in 0..permutations {
        order.shuffle(&mut r);
        let mut mask: Mask = 0;
        let mut prev = baseline;
        for &i in &order {
            mask |= 1 << i;
            let cur = game.value(mask);
            phi[i] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut().for_each(|p| *p /= permutations as f64);
    let full = game.value(if m == MAX_FEATURES { Mask::MAX } else { (1 << m) - 1 });
    Ok(Attribution {
        phi,
        baseline,
        full,
        class: game.class,
    })
}

/// Exact attributions by enumerating all `2^M` coalitions (`M <= 12`).
pub fn shapley_exact<T: Scalar, M: Explainable<T> + ?Sized>(model: &M, x: &[T], background: &[Vec<T>]) -> Result<Vec<f64>> {
    exact(model, x, background).map(|a| a.phi)
}

/// Monte Carlo attributions from `permutations` seeded random orderings.
pub fn shapley_sampled<T: Scalar, M: Explainable<T> + ?Sized>(
    model: &M,
    x: &[T],
    background: &[Vec<T>],
    permutations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    sampled(model, x, background, permutations, seed).map(|a| a.phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyMode {
    Exact,
    Sampled { permutations: usize, seed: u64 },
}

impl ShapleyMode {
    /// Exact up to [`MAX_EXACT_FEATURES`], sampled beyond.
    pub fn auto(features: usize, permutations: usize, seed: u64) -> Self {
        if features <= MAX_EXACT_FEATURES {
            ShapleyMode::Exact
        } else {
            ShapleyMode::Sampled { permutations, seed }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub schema: Vec<String>,
    pub mode: ShapleyMode,
    pub background_size: usize,
    /// `[instance][feature]`
    pub per_instance_phi: Vec<Vec<f64>>,
    pub predicted_class: Vec<usize>,
    pub value_baseline: Vec<f64>,
    pub value_full: Vec<f64>,
    /// Mean |phi| per feature.
    pub global_importance: Vec<f64>,
    /// Feature indices by descending importance, schema order on ties.
    pub ranking: Vec<usize>,
}

impl ShapleyReport {
    /// Largest `|sum(phi) - (v(all) - v(empty))|` over the instances.
    pub fn max_efficiency_gap(&self) -> f64 {
        self.per_instance_phi
            .iter()
            .zip(self.value_full.iter().zip(&self.value_baseline))
            .map(|(phi, (full, base))| (phi.iter().sum::<f64>() - (full - base)).abs())
            .fold(0.0, f64::max)
    }

    pub fn ranked_names(&self) -> Vec<&str> {
        self.ranking.iter().map(|&i| self.schema[i].as_str()).collect()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mode = match self.mode {
            ShapleyMode::Exact => "exact".to_string(),
            ShapleyMode::Sampled { permutations, seed } => format!("sampled ({permutations} permutations, seed {seed})"),
        };
        let _ = writeln!(out, "mode: {mode}");
        let _ = writeln!(out, "explained instances: {}", self.per_instance_phi.len());
        let _ = writeln!(out, "background rows: {}", self.background_size);
        let _ = writeln!(out, "rank,event,mean_abs_phi");
        for (rank, &i) in self.ranking.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:.9}", rank + 1, self.schema[i], self.global_importance[i]);
        }
        let gap = self.max_efficiency_gap();
        match self.mode {
            ShapleyMode::Exact => {
                let verdict = if gap <= 1e-9 { "holds" } else { "VIOLATED" };
                let _ = writeln!(out, "efficiency check: max |sum(phi) - (v(N) - v(empty))| = {gap:.3e} ({verdict} at 1e-9)");
            }
            ShapleyMode::Sampled { .. } => {
                let _ = writeln!(out, "efficiency gap (sampled estimate): {gap:.3e}");
            }
        }
        out
    }

    /// Per-instance attributions as CSV.
    pub fn render_instances(&self) -> String {
        let mut out = String::from("instance,predicted_class,v_empty,v_full");
        for name in &self.schema {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (k, phi) in self.per_instance_phi.iter().enumerate() {
            let _ = write!(out, "{k},{},{:?},{:?}", self.predicted_class[k], self.value_baseline[k], self.value_full[k]);
            for p in phi {
                let _ = write!(out, ",{p:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn bar_chart(&self, title: &str, top: usize) -> BarChart {
        let ids: Vec<usize> = self.ranking.iter().take(top).copied().collect();
        BarChart {
            title: title.to_string(),
            labels: ids.iter().map(|&i| self.schema[i].clone()).collect(),
            values: ids.iter().map(|&i| self.global_importance[i]).collect(),
        }
    }
}

/// Attributions for every row of `explain`, aggregated into mean |phi|.
/// Instances are processed concurrently; results are ordered by instance.
pub fn global_importance<T: Scalar, M: Explainable<T> + ?Sized>(
    model: &M,
    schema: &[String],
    explain: &[Vec<T>],
    background: &[Vec<T>],
    mode: ShapleyMode,
) -> Result<ShapleyReport> {
    if explain.is_empty() {
        return Err(Error::invalid("no rows to explain"));
    }
    if let Some(r) = explain.iter().find(|r| r.len() != schema.len()) {
        return Err(Error::SchemaMismatch(format!(
            "explained row has {} features, schema has {}",
            r.len(),
            schema.len()
        )));
    }
    let results = explain
        .par_iter()
        .enumerate()
        .map(|(k, x)| match mode {
            ShapleyMode::Exact => exact(model, x, background),
            ShapleyMode::Sampled { permutations, seed } => {
                sampled(model, x, background, permutations, rng::derive(seed, &[k as u64]))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let m = schema.len();
    let n = results.len() as f64;
    let global: Vec<f64> = (0..m)
        .map(|i| results.iter().map(|a| a.phi[i].abs()).sum::<f64>() / n)
        .collect();
    let mut ranking: Vec<usize> = (0..m).collect();
    ranking.sort_by(|&a, &b| global[b].total_cmp(&global[a]).then(a.cmp(&b)));
    Ok(ShapleyReport {
        schema: schema.to_vec(),
        mode,
        background_size: background.len(),
        predicted_class: results.iter().map(|a| a.class).collect(),
        value_baseline: results.iter().map(|a| a.baseline).collect(),
        value_full: results.iter().map(|a| a.full).collect(),
        per_instance_phi: results.into_iter().map(|a| a.phi).collect(),
        global_importance: global,
        ranking,
    })
}

/// Up to `n` row indices drawn evenly across classes: each class is shuffled
/// with its own seeded stream and classes are visited round-robin.
/// Returned ascending.
pub fn stratified_sample(labels: &[usize], n: usize, seed: u64) -> Vec<usize> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        pools[l].push(i);
    }
    for (c, p) in pools.iter_mut().enumerate() {
        p.shuffle(&mut rng::rng(seed, &[SAMPLE_STREAM, c as u64]));
        p.reverse();
    }
    let mut out = Vec::with_capacity(n.min(labels.len()));
    while out.len() < n.min(labels.len()) {
        for p in pools.iter_mut() {
            if out.len() == n {
                break;
            }
            if let Some(i) = p.pop() {
                out.push(i);
            }
        }
    }
    out.sort_unstable();
    out
}
