//! `fnprint`: acquire counter datasets, train and evaluate function
//! classifiers, and explain them.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 environment or
//! backend failure, 4 data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fnprint::Error;

use config::{parse_top_n, BackendKind, Experiment, Overrides, ShapMode, Task};

/// Alias so clap parses the list as one value rather than many.
type FeatureCounts = Vec<usize>;

#[derive(Parser)]
#[command(name = "fnprint", version, about = "Function fingerprinting from hardware performance counters")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Sets every seed (acquire, split, train, shap).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $FNPRINT_OUT, else ./fnprint-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    classifier: Option<String>,
    /// Grid file (TOML with a [grid] table).
    #[arg(long, global = true)]
    grid: Option<PathBuf>,
    /// Cross-validation folds; below 2 skips the search [default: 10].
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true, value_enum)]
    task: Option<Task>,
    /// Feature counts to retrain with, e.g. `1-10` or `1,3,5`.
    #[arg(long, global = true, value_parser = parse_top_n)]
    top_n: Option<FeatureCounts>,
    #[arg(long, global = true)]
    permutations: Option<usize>,
    /// Background rows for Shapley values.
    #[arg(long, global = true)]
    background: Option<usize>,
    #[arg(long, global = true, value_enum)]
    shap_mode: Option<ShapMode>,
    /// -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure the configured workloads into <out>/dataset.csv.
    Acquire,
    /// Concatenate datasets and shuffle rows.
    Mix {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Split, normalize, grid-search and fit; writes model.json and cv.csv.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score the model on its held-out split.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Confusion matrix tables and heat map.
    Confusion {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Pearson correlation of raw counts.
    Correlate {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Shapley feature importance.
    Shap {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Retrain on the top-N ranked features.
    Eliminate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// shap.json holding the ranking [default: <out>/shap.json].
        #[arg(long)]
        ranking: Option<PathBuf>,
    },
    /// Patched/unpatched detection for one case.
    Vuln {
        #[arg(long)]
        case: Option<PathBuf>,
    },
    /// acquire, train, evaluate, confusion, correlate, shap and eliminate.
    Walkthrough,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Config { .. } => 2,
        Error::UnknownEvent(_) => 3,
        Error::Malformed { .. } | Error::Degenerate(_) | Error::SchemaMismatch(_) => 4,
        Error::AcquisitionAborted { source, .. } => exit_code(source),
        e if e.is_environmental() => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let overrides = Overrides {
        backend: cli.backend,
        seed: cli.seed,
        out: cli.out,
        classifier: cli.classifier,
        grid: cli.grid,
        folds: cli.folds,
        task: cli.task,
        top_n: cli.top_n,
        permutations: cli.permutations,
        background: cli.background,
        shap_mode: cli.shap_mode,
    };
    let result = Experiment::load(cli.config.as_deref(), &overrides).and_then(|exp| {
        use commands as c;
        match cli.command {
            Command::Acquire => c::acquire(&exp).map(drop),
            Command::Mix { inputs, output } => c::mix(&exp, &inputs, output.as_deref()).map(drop),
            Command::Train { data } => c::train(&exp, data.as_deref()).map(drop),
            Command::Evaluate { data, model } => c::evaluate(&exp, data.as_deref(), model.as_deref()).map(drop),
            Command::Confusion { data, model } => c::confusion(&exp, data.as_deref(), model.as_deref()).map(drop),
            Command::Correlate { data } => c::correlate(&exp, data.as_deref()).map(drop),
            Command::Shap { data, model } => c::shap(&exp, data.as_deref(), model.as_deref()).map(drop),
            Command::Eliminate { data, ranking } => c::eliminate(&exp, data.as_deref(), ranking.as_deref()).map(drop),
            Command::Vuln { case } => c::vuln(&exp, case.as_deref()).map(drop),
            Command::Walkthrough => c::walkthrough(&exp),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
