//! Acceptance checks. Prints one `PASS`/`FAIL`/`SKIP` line per criterion
//! and exits non-zero if any criterion fails.

// `ensure!(x >= bound)` negates the comparison so NaN fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use fnprint::analysis::{self, FnModel, ShapleyMode};
use fnprint::classifiers::{self, grid_search, stratified_folds, ClassifierKind, ClassifierSpec, HyperValue, TrainedModel};
use fnprint::counters::{CounterBackend, SyntheticBackend, SyntheticConfig};
use fnprint::dataset::{Dataset, DatasetMeta, Normalizer};
use fnprint::evaluation::{BinaryMetrics, EvalReport};
use fnprint::harness::{acquire, AcquisitionPlan};
use fnprint::pipeline::{self, PipelineConfig};
use fnprint::vulnmode;
use fnprint::workloads::{builtin_suite, BuiltinKind, WorkloadSpec};
use rand::Rng as _;

type Check = Result<String, String>;

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

struct Capture;

impl log::Log for Capture {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= log::Level::Warn
    }
    fn log(&self, r: &log::Record) {
        if self.enabled(r.metadata()) {
            WARNINGS.lock().unwrap().push(r.args().to_string());
        }
    }
    fn flush(&self) {}
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn synthetic(classes: usize, events: &[String], informative: usize, cv: f64, seed: u64) -> SyntheticConfig {
    let ev: Vec<(&str, f64)> = events.iter().map(|n| (n.as_str(), 20_000.0)).collect();
    let mut cfg = SyntheticConfig::new(seed, classes, &ev);
    cfg.noise_cv = cv;
    for e in cfg.events.iter_mut().skip(informative) {
        e.informative = false;
    }
    cfg
}

fn acquire_synthetic(cfg: SyntheticConfig, instances: usize, seed: u64) -> Dataset<f64> {
    let events: Vec<String> = cfg.events.iter().map(|e| e.name.clone()).collect();
    let classes = cfg.classes;
    let workloads: Vec<WorkloadSpec> = (0..classes)
        .map(|id| WorkloadSpec::builtin(id, BuiltinKind::Fibonacci, id as u64))
        .collect();
    let mut plan = AcquisitionPlan::new(workloads, events, instances, seed);
    plan.warmup_executions = 2;
    acquire(&plan, &mut SyntheticBackend::new(cfg).unwrap()).unwrap()
}

fn rf(seed: u64, trees: u64) -> PipelineConfig {
    let mut p = PipelineConfig::new(ClassifierKind::RandomForest, seed);
    p.grid = Some(vec![("n_trees".into(), vec![HyperValue::Int(trees)])]);
    p.folds = 10;
    p
}

fn rows(d: &Dataset<f64>, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| d.row(i).to_vec()).collect()
}

fn c1_recognition() -> Check {
    let start = Instant::now();
    let events = names("E", 12);
    let cfg = synthetic(16, &events, 12, 0.02, 11);
    // Every pair of classes differs by at least 3 sigma on some event.
    let profiles = cfg.profiles();
    let mut min_gap = f64::INFINITY;
    for a in 0..16 {
        for b in a + 1..16 {
            let gap = events
                .iter()
                .map(|e| {
                    let (ma, mb) = (profiles[a].mean(e).unwrap(), profiles[b].mean(e).unwrap());
                    (ma - mb).abs() / (0.02 * ma.max(mb))
                })
                .fold(0.0, f64::max);
            min_gap = min_gap.min(gap);
        }
    }
    ensure!(min_gap >= 3.0, "closest class pair separated by only {min_gap:.2} sigma");

    let plan = AcquisitionPlan::new(builtin_suite(), events.clone(), 200, 5);
    let data = acquire(&plan, &mut SyntheticBackend::new(cfg.clone()).unwrap()).map_err(|e| e.to_string())?;
    let acc = pipeline::run(&data, &rf(3, 50)).map_err(|e| e.to_string())?.report.accuracy;

    let mut flat = cfg;
    flat.separation = 0.0;
    let noise = acquire(&plan, &mut SyntheticBackend::new(flat).unwrap()).map_err(|e| e.to_string())?;
    let chance = pipeline::run(&noise, &rf(3, 50)).map_err(|e| e.to_string())?.report.accuracy;
    let secs = start.elapsed().as_secs_f64();
    ensure!(acc >= 0.95, "accuracy {acc:.4} < 0.95");
    ensure!(chance <= 1.0 / 16.0 + 0.05, "separation 0 accuracy {chance:.4} > 0.1125");
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!(
        "accuracy {acc:.4} (min pair gap {min_gap:.1} sigma), separation 0 accuracy {chance:.4}, {secs:.1} s"
    ))
}

fn fitted_on(data: &Dataset<f64>, spec: &ClassifierSpec) -> (TrainedModel<f64>, Dataset<f64>) {
    let norm = Normalizer::fit(data).unwrap();
    let z = norm.apply(data).unwrap();
    (classifiers::fit(spec, &z, norm).unwrap(), z)
}

fn c2_shapley_axioms() -> Check {
    // Event 7 is constant, so no model can use it.
    let events = names("E", 8);
    let mut cfg = synthetic(4, &events, 6, 0.02, 3);
    cfg.events[7].base = 5.0;
    cfg.events[7].noise_cv = Some(0.0);
    let data = acquire_synthetic(cfg, 40, 1);
    let mut worst = 0.0f64;
    let mut dummy = 0.0f64;
    let mut checked = 0;
    for spec in [
        ClassifierSpec::new(ClassifierKind::RandomForest, 1).with("n_trees", HyperValue::Int(20)),
        ClassifierSpec::new(ClassifierKind::LogisticRegression, 1),
        ClassifierSpec::new(ClassifierKind::Knn, 1),
    ] {
        let (m, z) = fitted_on(&data, &spec);
        let bg = rows(&z, &analysis::stratified_sample(z.labels(), 16, 2));
        let ex = rows(&z, &analysis::stratified_sample(z.labels(), 24, 3));
        let r = analysis::global_importance(&m, z.schema(), &ex, &bg, ShapleyMode::Exact).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_efficiency_gap());
        dummy = dummy.max(r.per_instance_phi.iter().map(|p| p[7].abs()).fold(0.0, f64::max));
        checked += ex.len();
    }
    ensure!(worst <= 1e-9, "efficiency gap {worst:e}");
    ensure!(dummy == 0.0, "dummy feature got |phi| up to {dummy:e}");

    // Exchangeable features 0 and 1 of a model symmetric in them.
    let model = FnModel(|r: &[f64]| {
        let z = 0.8 * (r[0] + r[1]) + 0.3 * r[0] * r[1] - 0.5 * r[2] + 0.2 * r[3];
        let p = 1.0 / (1.0 + (-z).exp());
        vec![1.0 - p, p]
    });
    let mut rng = fnprint::rng::rng(9, &[]);
    let mut sym_gap = 0.0f64;
    for _ in 0..20 {
        let mut bg = Vec::new();
        for _ in 0..8 {
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            bg.push(vec![b[1], b[0], b[2], b[3]]);
            bg.push(b);
        }
        let v = rng.random_range(-2.0..2.0);
        let x = vec![v, v, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let phi = analysis::shapley_exact(&model, &x, &bg).map_err(|e| e.to_string())?;
        sym_gap = sym_gap.max((phi[0] - phi[1]).abs());
    }
    ensure!(sym_gap <= 1e-9, "exchangeable features differ by {sym_gap:e}");
    Ok(format!(
        "{checked} instances: max efficiency gap {worst:.1e}, dummy |phi| {dummy:e}, symmetry gap {sym_gap:.1e}"
    ))
}

fn c3_sampled_vs_exact() -> Check {
    let events = names("E", 8);
    let data = acquire_synthetic(synthetic(4, &events, 8, 0.05, 21), 60, 2);
    let (m, z) = fitted_on(&data, &ClassifierSpec::new(ClassifierKind::LogisticRegression, 1));
    let bg = rows(&z, &analysis::stratified_sample(z.labels(), 32, 4));
    let ex = rows(&z, &analysis::stratified_sample(z.labels(), 8, 5));
    let mut total = 0.0;
    let mut n = 0;
    for (i, x) in ex.iter().enumerate() {
        let exact = analysis::shapley_exact(&m, x, &bg).map_err(|e| e.to_string())?;
        let sampled = analysis::shapley_sampled(&m, x, &bg, 2000, i as u64).map_err(|e| e.to_string())?;
        total += exact.iter().zip(&sampled).map(|(a, b)| (a - b).abs()).sum::<f64>();
        n += exact.len();
    }
    let mean = total / n as f64;
    ensure!(mean <= 0.02, "mean |delta phi| {mean:.4} > 0.02");
    Ok(format!("mean |delta phi| {mean:.5} over {} instances", ex.len()))
}

fn c4_normalization() -> Check {
    let events = names("E", 6);
    let mut cfg = synthetic(3, &events, 5, 0.05, 4);
    cfg.events[5].noise_cv = Some(0.0);
    let data = acquire_synthetic(cfg, 50, 3);
    let (train, test) = data.split(0.8, 1, true).map_err(|e| e.to_string())?;
    WARNINGS.lock().unwrap().clear();
    let norm = Normalizer::fit(&train).map_err(|e| e.to_string())?;
    let warned = WARNINGS.lock().unwrap().iter().any(|w| w.contains("E5"));
    let z = norm.apply(&train).map_err(|e| e.to_string())?;
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for j in 0..5 {
        let c = z.column(j);
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        let std = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());
    }
    ensure!(worst_mean <= 1e-9, "|mean| {worst_mean:e}");
    ensure!(worst_std <= 1e-9, "|std - 1| {worst_std:e}");
    ensure!(norm.constant == vec![5], "constant columns {:?}", norm.constant);
    ensure!(z.column(5).iter().all(|&v| v == 0.0), "constant column not mapped to zero");
    ensure!(norm.apply(&test).unwrap().column(5).iter().all(|&v| v == 0.0), "constant column non-zero on test");
    ensure!(warned, "no warning logged for the constant column");
    Ok(format!("|mean| <= {worst_mean:.1e}, |std-1| <= {worst_std:.1e}, constant column zeroed with warning"))
}

fn c5_pearson() -> Check {
    let mut rng = fnprint::rng::rng(5, &[]);
    let n = 500;
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(1000.0..2000.0)).collect();
    let near: Vec<f64> = a.iter().map(|v| v * 1.02 + rng.random_range(-15.0..15.0)).collect();
    let other: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![a[i], a[i], -a[i], near[i], other[i]]).collect();
    let d = Dataset::new(
        vec!["TOT_CYC".into(), "DUP".into(), "NEG".into(), "RDTSCP".into(), "NOISE".into()],
        rows,
        vec![0; n],
        vec![String::new(); n],
        DatasetMeta::with_classes(vec!["x".into()]),
    )
    .unwrap();
    let c = analysis::correlate(&d).map_err(|e| e.to_string())?;
    let v = &c.values;
    ensure!((v[0][0] - 1.0).abs() <= 1e-12, "self {}", v[0][0]);
    ensure!((v[0][1] - 1.0).abs() <= 1e-12, "duplicate {}", v[0][1]);
    ensure!((v[0][2] + 1.0).abs() <= 1e-12, "negation {}", v[0][2]);
    ensure!(v[0][3] > 0.95, "near copy {}", v[0][3]);
    Ok(format!(
        "self {:.15}, duplicate {:.15}, negation {:.15}, near copy {:.4}",
        v[0][0], v[0][1], v[0][2], v[0][3]
    ))
}

/// Independent exhaustive kNN: full sort by (distance, index), count votes,
/// highest count wins and the smaller label breaks ties.
fn brute_knn(train: &Dataset<f64>, k: usize, x: &[f64]) -> usize {
    let mut d: Vec<(f64, usize)> = train
        .rows()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = BTreeMap::new();
    for &(_, i) in d.iter().take(k) {
        *votes.entry(train.labels()[i]).or_insert(0usize) += 1;
    }
    let best = *votes.values().max().unwrap();
    *votes.iter().find(|(_, &v)| v == best).unwrap().0
}

fn c6_knn_oracle() -> Check {
    let mut compared = 0;
    for seed in 0..3u64 {
        let mut rng = fnprint::rng::rng(seed, &[]);
        // Coarse integer grid so distance ties occur.
        let mk = |rng: &mut fnprint::rng::Rng, n: usize| {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(0..5) as f64).collect()).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            Dataset::new(names("F", 4), rows, labels, vec![String::new(); n], DatasetMeta::with_classes(names("c", 4)))
                .unwrap()
        };
        let train = mk(&mut rng, 200);
        let test = mk(&mut rng, 200);
        for k in [1u64, 3, 5] {
            let spec = ClassifierSpec::new(ClassifierKind::Knn, 0).with("k", HyperValue::Int(k));
            let m = classifiers::fit(&spec, &train, Normalizer::fit(&train).unwrap()).map_err(|e| e.to_string())?;
            let got = m.predict(&test).map_err(|e| e.to_string())?;
            for (i, x) in test.rows().enumerate() {
                let want = brute_knn(&train, k as usize, x);
                ensure!(got[i] == want, "seed {seed} k {k} row {i}: {} vs oracle {want}", got[i]);
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} predictions identical to brute force (k = 1, 3, 5)"))
}

fn c7_cv_mechanics() -> Check {
    let counts = [37usize, 52, 41, 60, 23];
    let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    let fold = stratified_folds(&labels, 10, 17).map_err(|e| e.to_string())?;
    ensure!(fold.len() == labels.len() && fold.iter().all(|&f| f < 10), "fold ids out of range");
    for (c, &n) in counts.iter().enumerate() {
        let per: Vec<usize> = (0..10)
            .map(|f| (0..labels.len()).filter(|&i| labels[i] == c && fold[i] == f).count())
            .collect();
        let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
        ensure!(hi - lo <= 1, "class {c} fold counts {per:?}");
        ensure!(per.iter().sum::<usize>() == n, "class {c} not covered");
    }
    ensure!(fold == stratified_folds(&labels, 10, 17).unwrap(), "folds not deterministic");
    ensure!(fold != stratified_folds(&labels, 10, 18).unwrap(), "seed ignored");

    let data = acquire_synthetic(synthetic(4, &names("E", 5), 3, 0.05, 8), 40, 1);
    let z = Normalizer::fit(&data).unwrap().apply(&data).unwrap();
    let grid = vec![
        ("max_depth".to_string(), vec![HyperValue::Int(2), HyperValue::Unbounded]),
        ("n_trees".to_string(), vec![HyperValue::Int(5), HyperValue::Int(10)]),
    ];
    let a = grid_search(ClassifierKind::RandomForest, &grid, &z, 10, 4).map_err(|e| e.to_string())?;
    let b = grid_search(ClassifierKind::RandomForest, &grid, &z, 10, 4).map_err(|e| e.to_string())?;
    ensure!(a == b, "grid search differs between identical runs");
    Ok(format!(
        "10 folds disjoint, exhaustive, per-class spread <= 1; grid search repeatable (best {})",
        a.best.describe()
    ))
}

fn c8_elimination() -> Check {
    let events = names("E", 12);
    let data = acquire_synthetic(synthetic(8, &events, 3, 0.02, 31), 100, 6);
    let cfg = rf(7, 30);
    let base = pipeline::run(&data, &cfg).map_err(|e| e.to_string())?;
    let bg = rows(&base.train, &analysis::stratified_sample(base.train.labels(), 16, 1));
    let ex = rows(&base.test, &analysis::stratified_sample(base.test.labels(), 32, 2));
    let shap = analysis::global_importance(&base.model, data.schema(), &ex, &bg, ShapleyMode::Exact)
        .map_err(|e| e.to_string())?;
    let table = analysis::eliminate_and_retrain(&data, &shap.ranking, &[3, 12], &cfg).map_err(|e| e.to_string())?;
    let all = table.baseline().unwrap().accuracy;
    let top3 = table.rows[0].accuracy;
    ensure!((all - top3).abs() <= 0.05, "top-3 {top3:.4} vs all {all:.4}");
    let m_row = &table.rows[1];
    ensure!(
        m_row.accuracy == base.report.accuracy && m_row.cv_score == base.model.cv_score && all == base.report.accuracy,
        "N = M run differs from baseline"
    );
    let everything: Vec<usize> = (0..12).collect();
    let again = pipeline::run(&data.select_features(&everything).unwrap(), &cfg).map_err(|e| e.to_string())?;
    ensure!(again.model.to_json().unwrap() == base.model.to_json().unwrap(), "N = M model differs");
    ensure!(again.report == base.report, "N = M report differs");
    Ok(format!(
        "top-3 ({}) accuracy {top3:.4} vs all {all:.4}; N = M bit-identical",
        table.rows[0].features.join(" ")
    ))
}

fn c9_vuln() -> Check {
    let (case, syn) = vulnmode::synthetic_demo(5, 3.0);
    let mut plan = vulnmode::VulnPlan::new(syn.events.iter().map(|e| e.name.clone()).collect(), 60, 3);
    plan.warmup_executions = 2;
    let mut backend = SyntheticBackend::new(syn).unwrap();
    let mut cfg = PipelineConfig::new(ClassifierKind::GaussianNb, 2);
    cfg.folds = 10;
    let r = vulnmode::run_case::<f64>(&case, &plan, &mut backend, &cfg).map_err(|e| e.to_string())?;
    let b = r.report.binary.clone().ok_or("no binary metrics")?;
    let (p, rc, f) = (b.precision.unwrap_or(0.0), b.recall.unwrap_or(0.0), b.f1.unwrap_or(0.0));
    ensure!(p >= 0.9 && rc >= 0.9 && f >= 0.9, "precision {p:.4} recall {rc:.4} f1 {f:.4}");

    // Nothing predicted positive: precision undefined, never zero.
    let none = BinaryMetrics::from_counts(0, 0, 4, 6);
    ensure!(none.precision.is_none() && none.f1.is_none(), "undefined precision reported as a number");
    ensure!(none.recall == Some(0.0), "recall should be 0");
    let classes = vec!["patched".to_string(), "unpatched".to_string()];
    let rep = EvalReport::from_predictions(&[0, 0, 0], &[0, 0, 0], &classes).unwrap();
    let text = rep.render_text();
    ensure!(text.contains("precision: undefined") && text.contains("recall: undefined"), "undefined metrics not flagged:\n{text}");
    Ok(format!(
        "precision {p:.4} recall {rc:.4} f1 {f:.4} ({} unpatched / {} patched rows); undefined metrics flagged",
        r.unpatched_rows, r.patched_rows
    ))
}

fn c10_confusion() -> Check {
    let mut rng = fnprint::rng::rng(10, &[]);
    for c in [2usize, 5, 16, 64] {
        let truth: Vec<usize> = (0..1000).map(|_| rng.random_range(0..c)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random_range(0.0..1.0) < 0.7 { t } else { rng.random_range(0..c) })
            .collect();
        let r = EvalReport::from_predictions(&truth, &pred, &names("class_", c)).unwrap();
        let sum: usize = r.confusion.iter().flatten().sum();
        ensure!(r.trace() as f64 / sum as f64 == r.accuracy, "{c} classes: trace/sum != accuracy");
        for (i, row) in r.normalized().rows.iter().enumerate() {
            if r.per_class_support[i] > 0 {
                let s: f64 = row.iter().sum();
                ensure!((s - 1.0).abs() <= 1e-9, "{c} classes: row {i} sums to {s}");
            }
        }
    }
    let truth: Vec<usize> = (0..640).map(|i| i % 64).collect();
    let r = EvalReport::from_predictions(&truth, &truth, &names("function_", 64)).unwrap();
    let (canvas, layout) = r.heatmap("64 CLASSES").render();
    let png = canvas.encode_png(&[]).map_err(|e| e.to_string())?;
    ensure!(png.starts_with(b"\x89PNG"), "not a PNG");
    Ok(format!(
        "trace/sum == accuracy, rows sum to 1; 64-class heat map {}x{} px (tick stride {})",
        layout.width, layout.height, layout.tick_stride
    ))
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn c11_reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = workspace().join("configs/walkthrough.toml");
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_fnprint"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .arg("walkthrough")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "walkthrough failed: {}", String::from_utf8_lossy(&status.stderr));
        outs.push(out);
    }
    let mut files: Vec<_> = std::fs::read_dir(&outs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    for f in &files {
        let read = |d: &Path| std::fs::read(d.join(f)).unwrap();
        let (a, b) = (read(&outs[0]), read(&outs[1]));
        let strip = |v: Vec<u8>| -> Vec<u8> {
            String::from_utf8_lossy(&v)
                .lines()
                .filter(|l| !l.starts_with("timestamp ="))
                .collect::<Vec<_>>()
                .join("\n")
                .into_bytes()
        };
        let same = if f.to_string_lossy().ends_with(".meta") { strip(a) == strip(b) } else { a == b };
        ensure!(same, "{} differs between runs", f.to_string_lossy());
    }
    ensure!(files.len() >= 15, "only {} artifacts", files.len());
    Ok(format!("{} artifacts bit-identical across two walkthrough runs (timestamps excluded)", files.len()))
}

#[cfg(target_os = "linux")]
fn c12_os_backend() -> Result<Option<String>, String> {
    use fnprint::counters::{find_event, PerfBackend, PerfConfig, Target};
    struct Loop;
    impl Target for Loop {
        fn label(&self) -> usize {
            0
        }
        fn name(&self) -> &str {
            "add_loop"
        }
        fn invoke(&mut self) -> fnprint::Result<()> {
            let mut acc = 0u64;
            for i in 0..1_000_000u64 {
                acc = std::hint::black_box(acc.wrapping_add(i));
            }
            std::hint::black_box(acc);
            Ok(())
        }
    }
    let mut backend = match PerfBackend::open(PerfConfig::default()) {
        Ok(b) => b,
        Err(e) => return Ok(None).inspect(|_| eprintln!("  (OS backend unavailable: {e})")),
    };
    let catalog = backend.catalog().map_err(|e| e.to_string())?;
    let Some(ev) = find_event(&catalog, "TOT_INS").cloned() else {
        eprintln!("  (host does not advertise an instructions-retired counter)");
        return Ok(None);
    };
    let mut target = Loop;
    for _ in 0..3 {
        backend.warm(&mut target).map_err(|e| e.to_string())?;
    }
    let mut values = Vec::new();
    for _ in 0..20 {
        values.push(backend.measure_one(&ev, &mut target).map_err(|e| e.to_string())?.value as f64);
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let spread = (sorted[sorted.len() * 9 / 10] - sorted[sorted.len() / 10]) / median;
    ensure!(min >= 1_000_000.0, "instructions retired {min} < 1,000,000");
    ensure!(spread <= 0.05, "relative spread {spread:.4} > 5%");
    Ok(Some(format!("median {median:.0} instructions, 10-90% spread {:.3}%", spread * 100.0)))
}

#[cfg(not(target_os = "linux"))]
fn c12_os_backend() -> Result<Option<String>, String> {
    Ok(None)
}

fn main() {
    log::set_logger(&Capture).unwrap();
    log::set_max_level(log::LevelFilter::Warn);
    // Keep criterion output readable.
    std::panic::set_hook(Box::new(|_| {}));

    let criteria: Vec<(u32, &str, fn() -> Check)> = vec![
        (1, "end-to-end synthetic recognition", c1_recognition),
        (2, "Shapley efficiency, dummy and symmetry", c2_shapley_axioms),
        (3, "sampled vs exact Shapley", c3_sampled_vs_exact),
        (4, "normalization", c4_normalization),
        (5, "Pearson correlation", c5_pearson),
        (6, "kNN oracle equivalence", c6_knn_oracle),
        (7, "cross-validation mechanics", c7_cv_mechanics),
        (8, "feature elimination", c8_elimination),
        (9, "binary vulnerability mode", c9_vuln),
        (10, "confusion matrices", c10_confusion),
        (11, "reproducibility", c11_reproducibility),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let t = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{t:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {why} [{t:.1}s]");
            }
        }
    }
    match std::panic::catch_unwind(c12_os_backend) {
        Ok(Ok(Some(detail))) => println!("PASS 12 OS backend smoke: {detail}"),
        Ok(Ok(None)) => println!("SKIP 12 OS backend smoke: hardware counters unavailable in this environment"),
        Ok(Err(why)) => {
            failed += 1;
            println!("FAIL 12 OS backend smoke: {why}");
        }
        Err(_) => {
            failed += 1;
            println!("FAIL 12 OS backend smoke: panicked");
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
