use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{self, PipelineConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationRow {
    /// `None` for the all-features baseline.
    pub n: Option<usize>,
    pub features: Vec<String>,
    pub accuracy: f64,
    pub cv_score: Option<f64>,
    pub best: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationTable {
    pub rows: Vec<EliminationRow>,
}

impl EliminationTable {
    pub fn baseline(&self) -> Option<&EliminationRow> {
        self.rows.iter().find(|r| r.n.is_none())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::from("n,accuracy,cv_score,best,features\n");
        for r in &self.rows {
            let n = r.n.map_or("all".to_string(), |n| n.to_string());
            let cv = r.cv_score.map_or(String::new(), |c| format!("{c:.6}"));
            let _ = writeln!(out, "{n},{:.6},{cv},\"{}\",{}", r.accuracy, r.best, r.features.join(" "));
        }
        out
    }
}

/// Retrains on the `n` top-ranked features for each `n` in `ns`, plus one
/// run on every feature, with the same pipeline seeds throughout. Selected
/// columns keep their original schema order, so `n = M` repeats the
/// baseline exactly.
pub fn eliminate_and_retrain<T: Scalar>(
    data: &Dataset<T>,
    ranking: &[usize],
    ns: &[usize],
    cfg: &PipelineConfig,
) -> Result<EliminationTable> {
    let m = data.n_features();
    let mut seen = vec![false; m];
    for &i in ranking {
        if i >= m || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("ranking entry {i} is out of range or repeated")));
        }
    }
    if let Some(&bad) = ns.iter().find(|&&n| n == 0 || n > ranking.len()) {
        return Err(Error::invalid(format!(
            "top-{bad} is outside [1, {}]",
            ranking.len()
        )));
    }
    let run = |n: Option<usize>, subset: &Dataset<T>| -> Result<EliminationRow> {
        let r = pipeline::run(subset, cfg)?;
        log::info!(
            "top-{}: accuracy {:.4}",
            n.map_or("all".to_string(), |n| n.to_string()),
            r.report.accuracy
        );
        Ok(EliminationRow {
            n,
            features: subset.schema().to_vec(),
            accuracy: r.report.accuracy,
            cv_score: r.model.cv_score,
            best: r.model.spec.describe(),
        })
    };
    let mut rows = Vec::with_capacity(ns.len() + 1);
    for &n in ns {
        let mut cols = ranking[..n].to_vec();
        cols.sort_unstable();
        rows.push(run(Some(n), &data.select_features(&cols)?)?);
    }
    rows.push(run(None, data)?);
    Ok(EliminationTable { rows })
}
