use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fnprint::analysis::{self, ShapleyReport};
use fnprint::classifiers::TrainedModel;
use fnprint::counters::{CounterBackend, ReplayBackend, SyntheticBackend};
use fnprint::dataset::{split_indices, Dataset};
use fnprint::evaluation::{self, EvalReport};
use fnprint::harness;
use fnprint::pipeline;
use fnprint::vulnmode::{self, VulnCase, VulnPlan, VulnReport};
use fnprint::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{BackendKind, Experiment, Task};

pub const DATASET: &str = "dataset.csv";
pub const MODEL: &str = "model.json";
pub const SHAP_JSON: &str = "shap.json";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn header(prov: &BTreeMap<String, String>) -> String {
    prov.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
}

fn write_report(path: &Path, prov: &BTreeMap<String, String>, body: &str) -> Result<()> {
    fs::write(path, header(prov) + body).map_err(|e| io_err(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, prov: &BTreeMap<String, String>, report: &S) -> Result<()> {
    #[derive(Serialize)]
    struct Wrapped<'a, S> {
        provenance: &'a BTreeMap<String, String>,
        report: &'a S,
    }
    let text = serde_json::to_string_pretty(&Wrapped { provenance: prov, report })
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn pairs(prov: &BTreeMap<String, String>) -> Vec<(String, String)> {
    prov.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
}

fn save_png(path: &Path, canvas: &fnprint::plot::Canvas, prov: &BTreeMap<String, String>) -> Result<()> {
    canvas.save_png(path, &pairs(prov))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn open_backend(exp: &Experiment) -> Result<Box<dyn CounterBackend>> {
    Ok(match exp.cfg.backend.kind {
        BackendKind::Synthetic => Box::new(SyntheticBackend::new(exp.synthetic_config()?)?),
        BackendKind::Replay => {
            let path = exp.cfg.backend.config.as_deref().expect("validated");
            Box::new(ReplayBackend::open(path)?)
        }
        BackendKind::Os => open_os(exp)?,
    })
}

#[cfg(target_os = "linux")]
fn open_os(exp: &Experiment) -> Result<Box<dyn CounterBackend>> {
    use fnprint::counters::{PerfBackend, PerfConfig};
    Ok(Box::new(PerfBackend::open(PerfConfig {
        include_kernel: exp.cfg.backend.include_kernel,
        pin: exp.cfg.backend.pin,
    })?))
}

#[cfg(not(target_os = "linux"))]
fn open_os(_: &Experiment) -> Result<Box<dyn CounterBackend>> {
    Err(Error::BackendUnavailable {
        capability: "perf_event_open".into(),
        reason: "the OS backend is only available on Linux".into(),
    })
}

fn stamp_meta<T: fnprint::Scalar>(exp: &Experiment, data: &mut Dataset<T>) {
    for (k, v) in exp.provenance() {
        data.meta_mut().extra.insert(k, v);
    }
}

fn save_dataset(path: &Path, data: &Dataset<f64>) -> Result<()> {
    data.save(path)?;
    println!("wrote {} ({} rows, {} events, {} classes)", path.display(), data.len(), data.n_features(), data.n_classes());
    Ok(())
}

pub fn acquire(exp: &Experiment) -> Result<PathBuf> {
    ensure_dir(&exp.out)?;
    let mut backend = open_backend(exp)?;
    let plan = exp.plan_file().resolve(&backend.catalog()?)?;
    log::info!(
        "acquiring {} classes x {} instances x {} events on {}",
        plan.workloads.len(),
        plan.instances_per_class,
        plan.events.len(),
        backend.identity()
    );
    let mut data = if exp.cfg.backend.kind == BackendKind::Replay {
        let mut d: Dataset<f64> = harness::acquire_labels(&plan, backend.as_mut())?;
        // Recorded class names win over the plan's workload names.
        let recorded: Dataset<f64> = Dataset::load(exp.cfg.backend.config.as_deref().expect("validated"))?;
        if recorded.meta().classes.len() == d.meta().classes.len() {
            d.meta_mut().classes = recorded.meta().classes.clone();
        }
        d
    } else {
        harness::acquire(&plan, backend.as_mut())?
    };
    stamp_meta(exp, &mut data);
    let path = exp.out.join(DATASET);
    save_dataset(&path, &data)?;
    Ok(path)
}

pub fn mix(exp: &Experiment, inputs: &[PathBuf], output: Option<&Path>) -> Result<PathBuf> {
    let sets = inputs
        .iter()
        .map(|p| Dataset::<f64>::load(p))
        .collect::<Result<Vec<_>>>()?;
    let mut mixed = harness::mix(&sets, exp.cfg.seeds.acquire)?;
    stamp_meta(exp, &mut mixed);
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            ensure_dir(&exp.out)?;
            exp.out.join("mixed.csv")
        }
    };
    save_dataset(&path, &mixed)?;
    Ok(path)
}

fn dataset_path(exp: &Experiment, data: Option<&Path>) -> PathBuf {
    data.map_or_else(|| exp.out.join(DATASET), Path::to_path_buf)
}

/// The dataset for the configured task (binary relabels by version tag).
pub fn load_task_data(exp: &Experiment, data: Option<&Path>) -> Result<Dataset<f64>> {
    let d = Dataset::load(&dataset_path(exp, data))?;
    match exp.cfg.task {
        Task::Multiclass => Ok(d),
        Task::Binary => vulnmode::relabel(exp.case.as_ref().expect("validated"), &d),
    }
}

fn model_path(exp: &Experiment, model: Option<&Path>) -> PathBuf {
    model.map_or_else(|| exp.out.join(MODEL), Path::to_path_buf)
}

pub fn train(exp: &Experiment, data: Option<&Path>) -> Result<TrainedModel<f64>> {
    ensure_dir(&exp.out)?;
    let d = load_task_data(exp, data)?;
    let cfg = exp.pipeline();
    let r = pipeline::run(&d, &cfg)?;
    let mut prov = exp.provenance();
    if let Some(s) = &r.search {
        write_report(&exp.out.join("cv.csv"), &prov, &s.render_table())?;
    }
    prov.insert("split_ratio".into(), format!("{:?}", cfg.split_ratio));
    let mut model = r.model;
    model.provenance = prov;
    let path = exp.out.join(MODEL);
    model.save(&path)?;
    println!("wrote {}", path.display());
    println!(
        "best {} (cv {}), test accuracy {:.4}",
        model.spec.describe(),
        model.cv_score.map_or("n/a".into(), |c| format!("{c:.4}")),
        r.report.accuracy
    );
    Ok(model)
}

/// Normalized training and test sides of `d` under the split the model was
/// trained with.
fn resplit(exp: &Experiment, model: &TrainedModel<f64>, d: &Dataset<f64>) -> Result<(Dataset<f64>, Dataset<f64>)> {
    let seed = model
        .provenance
        .get("seed_split")
        .and_then(|s| s.parse().ok())
        .unwrap_or(exp.cfg.seeds.split);
    let ratio = model
        .provenance
        .get("split_ratio")
        .and_then(|s| s.parse().ok())
        .unwrap_or(exp.cfg.train.split_ratio);
    let idx = split_indices(d.labels(), ratio, seed, true)?;
    Ok((
        model.normalizer.apply(&d.subset(&idx.train))?,
        model.normalizer.apply(&d.subset(&idx.test))?,
    ))
}

fn load_model(exp: &Experiment, model: Option<&Path>) -> Result<TrainedModel<f64>> {
    TrainedModel::load(&model_path(exp, model))
}

fn test_report(exp: &Experiment, data: Option<&Path>, model: Option<&Path>) -> Result<EvalReport> {
    let d = load_task_data(exp, data)?;
    let m = load_model(exp, model)?;
    let (_, test) = resplit(exp, &m, &d)?;
    evaluation::score(&m, &test)
}

pub fn evaluate(exp: &Experiment, data: Option<&Path>, model: Option<&Path>) -> Result<EvalReport> {
    ensure_dir(&exp.out)?;
    let r = test_report(exp, data, model)?;
    let prov = exp.provenance();
    write_report(&exp.out.join("report.txt"), &prov, &r.render_text())?;
    write_json(&exp.out.join("report.json"), &prov, &r)?;
    println!("test accuracy {:.4} ({}/{})", r.accuracy, r.correct, r.total);
    if let Some(b) = &r.binary {
        let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
        println!("precision {} recall {} f1 {}", show(b.precision), show(b.recall), show(b.f1));
    }
    Ok(r)
}

pub fn confusion(exp: &Experiment, data: Option<&Path>, model: Option<&Path>) -> Result<EvalReport> {
    ensure_dir(&exp.out)?;
    let r = test_report(exp, data, model)?;
    let prov = exp.provenance();
    let norm = r.normalized();
    let mut counts = String::from("true\\predicted");
    let mut normalized = counts.clone();
    for c in &r.classes {
        counts.push(',');
        counts.push_str(c);
        normalized.push(',');
        normalized.push_str(c);
    }
    counts.push('\n');
    normalized.push('\n');
    for (i, c) in r.classes.iter().enumerate() {
        counts.push_str(c);
        normalized.push_str(c);
        for (v, p) in r.confusion[i].iter().zip(&norm.rows[i]) {
            counts.push_str(&format!(",{v}"));
            normalized.push_str(&format!(",{p:?}"));
        }
        counts.push('\n');
        normalized.push('\n');
    }
    write_report(&exp.out.join("confusion.csv"), &prov, &counts)?;
    write_report(&exp.out.join("confusion_normalized.csv"), &prov, &normalized)?;
    let png = exp.out.join("confusion.png");
    let layout = r.save_heatmap(&png, "CONFUSION MATRIX", &pairs(&prov))?;
    println!("wrote {} ({}x{}px)", png.display(), layout.width, layout.height);
    if !norm.empty_rows.is_empty() {
        println!("classes without test rows: {:?}", norm.empty_rows);
    }
    Ok(r)
}

pub fn correlate(exp: &Experiment, data: Option<&Path>) -> Result<analysis::CorrelationMatrix> {
    ensure_dir(&exp.out)?;
    let d = Dataset::<f64>::load(&dataset_path(exp, data))?;
    let c = analysis::correlate(&d)?;
    let prov = exp.provenance();
    write_report(&exp.out.join("correlation.csv"), &prov, &c.render_text())?;
    let threshold = exp.cfg.analysis.correlation_threshold;
    let mut strong = format!("event_a,event_b,pearson (|r| > {threshold})\n");
    for (i, j, r) in c.strong_pairs(threshold) {
        strong.push_str(&format!("{},{},{r:.6}\n", c.schema[i], c.schema[j]));
    }
    write_report(&exp.out.join("correlation_strong.csv"), &prov, &strong)?;
    save_png(&exp.out.join("correlation.png"), &c.heatmap("PEARSON CORRELATION").render().0, &prov)?;
    Ok(c)
}

#[derive(Serialize, Deserialize)]
struct ShapFile {
    provenance: BTreeMap<String, String>,
    report: ShapleyReport,
}

pub fn shap(exp: &Experiment, data: Option<&Path>, model: Option<&Path>) -> Result<ShapleyReport> {
    ensure_dir(&exp.out)?;
    let d = load_task_data(exp, data)?;
    let m = load_model(exp, model)?;
    let (train, test) = resplit(exp, &m, &d)?;
    let a = &exp.cfg.analysis;
    let seed = exp.cfg.seeds.shap;
    let rows = |set: &Dataset<f64>, idx: Vec<usize>| idx.into_iter().map(|i| set.row(i).to_vec()).collect::<Vec<_>>();
    let background = rows(&train, analysis::stratified_sample(train.labels(), a.background, seed));
    let explain = rows(
        &test,
        analysis::stratified_sample(test.labels(), a.explain, fnprint::rng::derive(seed, &[1])),
    );
    let mode = exp.shapley_mode(m.schema.len());
    log::info!(
        "explaining {} rows against {} background rows ({mode:?})",
        explain.len(),
        background.len()
    );
    let report = analysis::global_importance(&m, &m.schema, &explain, &background, mode)?;
    let prov = exp.provenance();
    write_report(&exp.out.join("shap.csv"), &prov, &report.render_text())?;
    write_report(&exp.out.join("shap_instances.csv"), &prov, &report.render_instances())?;
    write_json(&exp.out.join(SHAP_JSON), &prov, &report)?;
    save_png(
        &exp.out.join("shap.png"),
        &report.bar_chart("MEAN |SHAPLEY VALUE|", 20).render(),
        &prov,
    )?;
    println!("top features: {}", report.ranked_names().iter().take(5).cloned().collect::<Vec<_>>().join(", "));
    Ok(report)
}

fn load_ranking(path: &Path) -> Result<ShapleyReport> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let f: ShapFile = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: e.line() as u64,
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(f.report)
}

pub fn eliminate(exp: &Experiment, data: Option<&Path>, ranking: Option<&Path>) -> Result<analysis::EliminationTable> {
    ensure_dir(&exp.out)?;
    let d = load_task_data(exp, data)?;
    let rank_path = ranking.map_or_else(|| exp.out.join(SHAP_JSON), Path::to_path_buf);
    let report = load_ranking(&rank_path)?;
    if report.schema != d.schema() {
        return Err(Error::SchemaMismatch(format!(
            "ranking in {} covers {:?}, dataset has {:?}",
            rank_path.display(),
            report.schema,
            d.schema()
        )));
    }
    let table = analysis::eliminate_and_retrain(&d, &report.ranking, &exp.cfg.analysis.top_n, &exp.pipeline())?;
    write_report(&exp.out.join("elimination.csv"), &exp.provenance(), &table.render_text())?;
    for r in &table.rows {
        println!(
            "top-{:<4} accuracy {:.4}",
            r.n.map_or("all".to_string(), |n| n.to_string()),
            r.accuracy
        );
    }
    Ok(table)
}

pub fn vuln(exp: &Experiment, case: Option<&Path>) -> Result<VulnReport> {
    ensure_dir(&exp.out)?;
    let case = match (case, &exp.case) {
        (Some(p), _) => VulnCase::load(p)?,
        (None, Some(c)) => c.clone(),
        (None, None) => return Err(Error::InvalidArgument("no case given; pass --case or set [vuln].case".into())),
    };
    let mut backend = open_backend(exp)?;
    let events = match &exp.cfg.plan.events {
        Some(e) => e.clone(),
        None => backend.catalog()?.into_iter().map(|e| e.name).collect(),
    };
    let per_version = exp.cfg.vuln.as_ref().map_or(100, |v| v.instances_per_version);
    let mut plan = VulnPlan::new(events, per_version, exp.cfg.seeds.acquire);
    plan.warmup_executions = exp.cfg.plan.warmup_executions;
    let mut data: Dataset<f64> = if exp.cfg.backend.kind == BackendKind::Replay {
        vulnmode::acquire_case_recorded(&case, &plan, backend.as_mut())?
    } else {
        vulnmode::acquire_case(&case, &plan, backend.as_mut())?
    };
    stamp_meta(exp, &mut data);
    save_dataset(&exp.out.join("vuln_dataset.csv"), &data)?;
    let report = vulnmode::evaluate_case(&case, &data, &exp.pipeline())?;
    let prov = exp.provenance();
    write_report(&exp.out.join("vuln.txt"), &prov, &report.render_text())?;
    write_json(&exp.out.join("vuln.json"), &prov, &report)?;
    let b = report.report.binary.clone().expect("binary task");
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
    println!(
        "{}: accuracy {:.4} precision {} recall {} f1 {} ({} unpatched / {} patched rows)",
        report.case_id,
        report.report.accuracy,
        show(b.precision),
        show(b.recall),
        show(b.f1),
        report.unpatched_rows,
        report.patched_rows
    );
    Ok(report)
}

pub fn walkthrough(exp: &Experiment) -> Result<()> {
    let data = acquire(exp)?;
    train(exp, Some(&data))?;
    evaluate(exp, Some(&data), None)?;
    confusion(exp, Some(&data), None)?;
    correlate(exp, Some(&data))?;
    shap(exp, Some(&data), None)?;
    eliminate(exp, Some(&data), None)?;
    Ok(())
}
