//! `rpforest` — accuracy and timing sweeps for random projection forests.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal invariant violation.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rpforest::{
    closest_pair, load_input, run_experiment, theorem_bound, time_parallel_scaling, write_report,
    ExperimentConfig, ForestParams, InputFormat, ReportFormat, ReportRow, RowKind,
    SeparationBoundParams, TreeParams,
};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(
    name = "rpforest",
    version,
    about = "Random projection forest kNN benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Accuracy and timing sweep over tree counts and nTry values
    Run(SweepArgs),
    /// Time a fixed-size forest at several worker counts
    Scaling {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Worker counts to time, comma separated [default: 1,2,4]
        #[arg(long, value_delimiter = ',')]
        worker_list: Option<Vec<usize>>,
        /// Trees in the timed forest
        #[arg(long)]
        scaling_trees: Option<usize>,
    },
    /// Estimate how often the closest pair is separated by a whole forest
    Separation(SeparationArgs),
    /// Evaluate the separation-probability upper bound
    Bound(BoundArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DataFormat {
    Csv,
}

/// Flags shared by sweeps. Every flag may also come from `--config`;
/// flags given on the command line win.
#[derive(Args, Debug, Default)]
struct SweepArgs {
    /// TOML file whose keys mirror the long flag names
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<DataFormat>,
    /// Input has a header row
    #[arg(long)]
    header: bool,
    /// Label for report rows (defaults to the input file stem)
    #[arg(long)]
    dataset_id: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Tree counts, comma separated [default: 10,20,40,60,80,100]
    #[arg(long, value_delimiter = ',')]
    trees: Option<Vec<usize>>,
    /// Candidate directions per split, comma separated [default: 1]
    #[arg(long, value_delimiter = ',')]
    ntry: Option<Vec<usize>>,
    /// Leaf capacity [default: 20 for K <= 5, else 30]
    #[arg(long)]
    leaf_size: Option<usize>,
    /// Repetitions per cell [default: 20]
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Center and scale every coordinate to unit variance
    #[arg(long)]
    standardize: bool,
    /// Skip the exact oracle (timing only; required above 60,000 points)
    #[arg(long)]
    no_oracle: bool,
    /// Directory caching exact neighbor tables between invocations
    #[arg(long)]
    oracle_cache: Option<PathBuf>,
    /// Report path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    out_format: Option<OutFormat>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    input: Option<PathBuf>,
    format: Option<DataFormat>,
    header: Option<bool>,
    dataset_id: Option<String>,
    k: Option<usize>,
    trees: Option<Vec<usize>>,
    ntry: Option<Vec<usize>>,
    leaf_size: Option<usize>,
    runs: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    standardize: Option<bool>,
    no_oracle: Option<bool>,
    oracle_cache: Option<PathBuf>,
    out: Option<PathBuf>,
    out_format: Option<OutFormat>,
    worker_list: Option<Vec<usize>>,
    scaling_trees: Option<usize>,
}

#[derive(Args, Debug)]
struct SeparationArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    standardize: bool,
    /// Forest sizes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    trees: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    leaf_size: usize,
    #[arg(long, default_value_t = 1)]
    ntry: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// Distance between the two points
    #[arg(long)]
    distance: f64,
    /// Neck size of the enclosing point set
    #[arg(long)]
    neck: f64,
    /// Per-level shrink factor of the neck, in (0, 1)
    #[arg(long)]
    gamma: f64,
    /// Maximum number of splits on a root-to-leaf path (at least 2)
    #[arg(long)]
    max_splits: u32,
    /// Ensemble sizes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1")]
    trees: Vec<u32>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Exit(u8, anyhow::Error);

fn classify(err: anyhow::Error) -> Exit {
    let code = match err.downcast_ref::<rpforest::Error>() {
        Some(e) if e.is_data_error() => 2,
        Some(rpforest::Error::Invariant(_)) => 3,
        _ => 1,
    };
    Exit(code, err)
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Merge flags over the config file. Returns the experiment config, the
/// report destination and the file config (for subcommand-specific keys).
fn resolve(
    args: SweepArgs,
) -> Result<(ExperimentConfig, Option<PathBuf>, ReportFormat, FileConfig)> {
    let file = match &args.config {
        Some(path) => read_config(path)?,
        None => FileConfig::default(),
    };
    let base = ExperimentConfig::default();
    let DataFormat::Csv = args.format.or(file.format).unwrap_or(DataFormat::Csv);
    let cfg = ExperimentConfig {
        input: args.input.or(file.input.clone()),
        format: InputFormat::Csv,
        has_header: args.header || file.header.unwrap_or(false),
        dataset_id: args.dataset_id.or(file.dataset_id.clone()),
        k: args.k.or(file.k).unwrap_or(base.k),
        tree_counts: args
            .trees
            .or(file.trees.clone())
            .unwrap_or(base.tree_counts),
        n_try_list: args.ntry.or(file.ntry.clone()).unwrap_or(base.n_try_list),
        leaf_capacity: args.leaf_size.or(file.leaf_size),
        runs: args.runs.or(file.runs).unwrap_or(base.runs),
        master_seed: args.seed.or(file.seed).unwrap_or(base.master_seed),
        workers: args.workers.or(file.workers).unwrap_or(base.workers),
        standardize: args.standardize || file.standardize.unwrap_or(false),
        no_oracle: args.no_oracle || file.no_oracle.unwrap_or(false),
        oracle_cache: args.oracle_cache.or(file.oracle_cache.clone()),
        scaling_trees: file.scaling_trees.unwrap_or(base.scaling_trees),
    };
    if cfg.input.is_none() {
        bail!("no input given (use --input or an `input` key in --config)");
    }
    cfg.validate()?;
    let format = match args.out_format.or(file.out_format) {
        Some(OutFormat::Json) => ReportFormat::Json,
        Some(OutFormat::Csv) | None => ReportFormat::Csv,
    };
    Ok((cfg, args.out.or(file.out.clone()), format, file))
}

fn emit(rows: &[ReportRow], format: ReportFormat, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => rpforest::emit_report(rows, format, path)?,
        None => write_report(rows, format, io::stdout().lock())?,
    }
    Ok(())
}

fn summarize(rows: &[ReportRow]) {
    for r in rows.iter().filter(|r| r.kind == RowKind::Mean) {
        match (r.missing_rate, r.discrepancy) {
            (Some(m), Some(d)) => eprintln!(
                "T={:<4} nTry={:<3} missing={m:.4} discrepancy={d:.4} build={:.1}ms query={:.1}ms",
                r.trees, r.n_try, r.build_ms, r.query_ms
            ),
            _ => eprintln!(
                "T={:<4} nTry={:<3} workers={:<3} build={:.1}ms query={:.1}ms",
                r.trees, r.n_try, r.workers, r.build_ms, r.query_ms
            ),
        }
    }
}

/// Rows are written before the check so a violating run can be inspected.
fn check_dominance(rows: &[ReportRow]) -> std::result::Result<(), Exit> {
    let bad: usize = rows
        .iter()
        .filter(|r| r.kind == RowKind::Run)
        .filter_map(|r| r.dominance_violations)
        .sum();
    if bad > 0 {
        return Err(Exit(
            3,
            anyhow::anyhow!("{bad} query results fall below the exact K-th neighbor distance"),
        ));
    }
    Ok(())
}

fn cmd_run(args: SweepArgs) -> std::result::Result<(), Exit> {
    let (cfg, out, format, _) = resolve(args).map_err(classify)?;
    let rows = run_experiment(&cfg).map_err(|e| classify(e.into()))?;
    emit(&rows, format, out.as_deref()).map_err(classify)?;
    summarize(&rows);
    check_dominance(&rows)
}

fn cmd_scaling(
    sweep: SweepArgs,
    worker_list: Option<Vec<usize>>,
    scaling_trees: Option<usize>,
) -> std::result::Result<(), Exit> {
    let (mut cfg, out, format, file) = resolve(sweep).map_err(classify)?;
    if let Some(t) = scaling_trees {
        cfg.scaling_trees = t;
    }
    let workers = worker_list
        .or(file.worker_list)
        .unwrap_or_else(|| vec![1, 2, 4]);
    let run = || -> rpforest::Result<Vec<ReportRow>> {
        let data = load_input(&cfg)?;
        time_parallel_scaling(&data, &cfg, &workers)
    };
    let rows = run().map_err(|e| classify(e.into()))?;
    emit(&rows, format, out.as_deref()).map_err(classify)?;
    summarize(&rows);
    Ok(())
}

fn cmd_separation(args: SeparationArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        input: Some(args.input.clone()),
        has_header: args.header,
        standardize: args.standardize,
        ..Default::default()
    };
    let data = load_input(&cfg)?;
    let pair = closest_pair(&data)?;
    let distance = data.distance(pair.0, pair.1)?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "# closest pair ({}, {}) at distance {distance}",
        pair.0 .0, pair.1 .0
    )?;
    writeln!(out, "trees,trials,separated,probability")?;
    for &trees in &args.trees {
        let params =
            ForestParams::new(trees, TreeParams::new(args.leaf_size, args.ntry), args.seed)
                .with_workers(args.workers);
        let count = rpforest::separation_count(&data, pair, &params, args.trials)?;
        let p = count as f64 / args.trials as f64;
        writeln!(out, "{trees},{},{count},{p}", args.trials)?;
    }
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "trees,bound")?;
    for &t in &args.trees {
        let b = theorem_bound(&SeparationBoundParams {
            distance: args.distance,
            neck: args.neck,
            gamma: args.gamma,
            max_splits: args.max_splits,
            ensemble_size: t,
        })?;
        writeln!(out, "{t},{b:e}")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Scaling {
            sweep,
            worker_list,
            scaling_trees,
        } => cmd_scaling(sweep, worker_list, scaling_trees),
        Command::Separation(args) => cmd_separation(args).map_err(classify),
        Command::Bound(args) => cmd_bound(args).map_err(classify),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
