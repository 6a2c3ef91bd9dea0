//! Accuracy sweeps and parallel timing runs over a dataset.
//!
//! A sweep builds one forest per `(nTry, T, run)` cell, queries every
//! dataset row against it and scores the answers with the exact oracle.
//! Run `r` uses forest seed `derive_seed(master_seed, r)` in every cell, so
//! within a run the forests for different T share their leading trees and
//! every row can be rebuilt from its logged seed.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_points, Dataset, InputFormat};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, exact_knn, AccuracyReport, ExactKnnTable, OracleCache};
use crate::forest::{build_forest, ForestParams};
use crate::report::{ReportRow, RowKind};
use crate::rng::derive_seed;
use crate::rptree::{default_leaf_capacity, TreeParams};

/// Largest dataset the quadratic oracle is run on.
pub const ORACLE_LIMIT: usize = 60_000;

pub const DEFAULT_TREE_COUNTS: [usize; 6] = [10, 20, 40, 60, 80, 100];
pub const DEFAULT_RUNS: usize = 20;
pub const DEFAULT_SCALING_TREES: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub has_header: bool,
    /// Label for report rows; defaults to the input file stem.
    pub dataset_id: Option<String>,
    pub k: usize,
    pub tree_counts: Vec<usize>,
    pub n_try_list: Vec<usize>,
    /// Defaults to 20 for K <= 5, otherwise 30.
    pub leaf_capacity: Option<usize>,
    pub runs: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub standardize: bool,
    /// Skip the exact oracle; rows carry timings only.
    pub no_oracle: bool,
    pub oracle_cache: Option<PathBuf>,
    /// Tree count for [`time_parallel_scaling`].
    pub scaling_trees: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            input: None,
            format: InputFormat::Csv,
            has_header: false,
            dataset_id: None,
            k: 5,
            tree_counts: DEFAULT_TREE_COUNTS.to_vec(),
            n_try_list: vec![1],
            leaf_capacity: None,
            runs: DEFAULT_RUNS,
            master_seed: 0,
            workers: 1,
            standardize: false,
            no_oracle: false,
            oracle_cache: None,
            scaling_trees: DEFAULT_SCALING_TREES,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::param(format!("{name} must be at least 1")))
            } else {
                Ok(())
            }
        };
        positive("K", self.k)?;
        positive("runs", self.runs)?;
        positive("workers", self.workers)?;
        positive("scaling tree count", self.scaling_trees)?;
        if self.tree_counts.is_empty() || self.n_try_list.is_empty() {
            return Err(Error::param("tree counts and nTry list must be nonempty"));
        }
        for &t in &self.tree_counts {
            positive("tree count", t)?;
        }
        for &t in &self.n_try_list {
            positive("nTry", t)?;
        }
        TreeParams::new(self.leaf_size(), 1).validate()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_capacity
            .unwrap_or_else(|| default_leaf_capacity(self.k))
    }

    fn label(&self) -> String {
        self.dataset_id.clone().unwrap_or_else(|| {
            self.input
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    /// Forest seed of run `run`.
    pub fn run_seed(&self, run: usize) -> u64 {
        derive_seed(self.master_seed, run as u64)
    }

    fn forest_params(&self, trees: usize, n_try: usize, run: usize) -> ForestParams {
        ForestParams::new(
            trees,
            TreeParams::new(self.leaf_size(), n_try),
            self.run_seed(run),
        )
        .with_workers(self.workers)
    }
}

/// Load the configured input, applying standardization if requested.
pub fn load_input(cfg: &ExperimentConfig) -> Result<Dataset> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::param("no input file configured"))?;
    load_points(path, cfg.format, cfg.has_header)
}

fn prepare(data: &Dataset, cfg: &ExperimentConfig) -> Result<Option<ExactKnnTable>> {
    cfg.validate()?;
    if cfg.k >= data.n() {
        return Err(Error::param(format!(
            "K = {} needs at least {} points, dataset has {}",
            cfg.k,
            cfg.k + 1,
            data.n()
        )));
    }
    if cfg.no_oracle {
        return Ok(None);
    }
    if data.n() > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            n: data.n(),
            limit: ORACLE_LIMIT,
        });
    }
    let table = match &cfg.oracle_cache {
        Some(dir) => OracleCache::new(dir).get_or_compute(data, cfg.k)?,
        None => exact_knn(data, cfg.k)?,
    };
    Ok(Some(table))
}

struct Measured {
    report: Option<AccuracyReport>,
    build_ms: f64,
    query_ms: f64,
    results: Vec<crate::forest::QueryResult>,
}

fn measure(
    data: &Dataset,
    params: &ForestParams,
    k: usize,
    exact: Option<&ExactKnnTable>,
) -> Result<Measured> {
    let t0 = Instant::now();
    let forest = build_forest(data, params)?;
    let build_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let results = forest.batch_knn_all(k)?;
    let query_ms = t1.elapsed().as_secs_f64() * 1e3;
    let report = exact
        .map(|table| evaluate(&results, table, k, params))
        .transpose()?;
    Ok(Measured {
        report,
        build_ms,
        query_ms,
        results,
    })
}

fn mean_sd(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.len() > 1)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

struct RowBase<'a> {
    label: &'a str,
    data: &'a Dataset,
    cfg: &'a ExperimentConfig,
}

impl RowBase<'_> {
    fn run_row(&self, params: &ForestParams, run: usize, m: &Measured) -> ReportRow {
        let r = m.report.as_ref();
        ReportRow {
            dataset: self.label.to_string(),
            n: self.data.n(),
            dim: self.data.dim(),
            standardized: self.cfg.standardize,
            k: self.cfg.k,
            trees: params.trees,
            n_try: params.tree.n_try,
            leaf_size: params.tree.leaf_capacity,
            kind: RowKind::Run,
            run: Some(run),
            runs: 1,
            seed: params.master_seed,
            missing_rate: r.map(|r| r.missing_rate),
            missing_rate_sd: None,
            discrepancy: r.map(|r| r.normalized_discrepancy),
            discrepancy_sd: None,
            mean_exact_dk: r.map(|r| r.mean_exact_dk),
            mean_approx_dk: r.map(|r| r.mean_approx_dk),
            shortfalls: r.map(|r| r.shortfalls),
            dominance_violations: r.map(|r| r.dominance_violations),
            build_ms: m.build_ms,
            build_ms_sd: None,
            query_ms: m.query_ms,
            query_ms_sd: None,
            workers: params.workers,
        }
    }

    fn mean_row(&self, runs: &[ReportRow]) -> ReportRow {
        let first = &runs[0];
        let opt = |f: fn(&ReportRow) -> Option<f64>| -> (Option<f64>, Option<f64>) {
            let xs: Option<Vec<f64>> = runs.iter().map(f).collect();
            match xs {
                Some(xs) => {
                    let (m, sd) = mean_sd(&xs);
                    (Some(m), sd)
                }
                None => (None, None),
            }
        };
        let sum =
            |f: fn(&ReportRow) -> Option<usize>| -> Option<usize> { runs.iter().map(f).sum() };
        let (missing_rate, missing_rate_sd) = opt(|r| r.missing_rate);
        let (discrepancy, discrepancy_sd) = opt(|r| r.discrepancy);
        let (mean_exact_dk, _) = opt(|r| r.mean_exact_dk);
        let (mean_approx_dk, _) = opt(|r| r.mean_approx_dk);
        let (build_ms, build_ms_sd) = mean_sd(&runs.iter().map(|r| r.build_ms).collect::<Vec<_>>());
        let (query_ms, query_ms_sd) = mean_sd(&runs.iter().map(|r| r.query_ms).collect::<Vec<_>>());
        ReportRow {
            kind: RowKind::Mean,
            run: None,
            runs: runs.len(),
            seed: self.cfg.master_seed,
            missing_rate,
            missing_rate_sd,
            discrepancy,
            discrepancy_sd,
            mean_exact_dk,
            mean_approx_dk,
            shortfalls: sum(|r| r.shortfalls),
            dominance_violations: sum(|r| r.dominance_violations),
            build_ms,
            build_ms_sd,
            query_ms,
            query_ms_sd,
            ..first.clone()
        }
    }
}

/// Load the configured input and run the accuracy sweep on it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let raw = load_input(cfg)?;
    run_experiment_on(&raw, cfg)
}

/// Accuracy sweep over `tree_counts x n_try_list`, `runs` forests per cell.
///
/// For each cell the per-run rows come first, followed by one mean row.
/// `data` is standardized first if the config says so.
pub fn run_experiment_on(data: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let scaled;
    let data = if cfg.standardize {
        scaled = data.standardized();
        &scaled
    } else {
        data
    };
    let exact = prepare(data, cfg)?;
    let label = cfg.label();
    let base = RowBase {
        label: &label,
        data,
        cfg,
    };
    let mut rows = Vec::new();
    for &n_try in &cfg.n_try_list {
        for &trees in &cfg.tree_counts {
            let mut cell = Vec::with_capacity(cfg.runs);
            for run in 0..cfg.runs {
                let params = cfg.forest_params(trees, n_try, run);
                let m = measure(data, &params, cfg.k, exact.as_ref())?;
                cell.push(base.run_row(&params, run, &m));
            }
            let mean = base.mean_row(&cell);
            rows.extend(cell);
            rows.push(mean);
        }
    }
    Ok(rows)
}

/// Build and query a `scaling_trees`-tree forest once per worker count,
/// `runs` times each, reporting mean wall times. Uses the first nTry of
/// the config. Fails if any worker count changes the query results.
pub fn time_parallel_scaling(
    data: &Dataset,
    cfg: &ExperimentConfig,
    worker_list: &[usize],
) -> Result<Vec<ReportRow>> {
    if worker_list.is_empty() || worker_list.contains(&0) {
        return Err(Error::param("worker list must be nonempty and positive"));
    }
    let scaled;
    let data = if cfg.standardize {
        scaled = data.standardized();
        &scaled
    } else {
        data
    };
    let exact = prepare(data, cfg)?;
    let label = cfg.label();
    let n_try = cfg.n_try_list[0];
    let mut rows = Vec::new();
    let mut reference: Vec<Option<Vec<crate::forest::QueryResult>>> = vec![None; cfg.runs];
    for &workers in worker_list {
        let wcfg = ExperimentConfig {
            workers,
            ..cfg.clone()
        };
        let base = RowBase {
            label: &label,
            data,
            cfg: &wcfg,
        };
        let mut cell = Vec::with_capacity(cfg.runs);
        for (run, slot) in reference.iter_mut().enumerate() {
            let params = wcfg.forest_params(cfg.scaling_trees, n_try, run);
            let m = measure(data, &params, cfg.k, exact.as_ref())?;
            match slot {
                Some(expected) if *expected != m.results => {
                    return Err(Error::Invariant(format!(
                        "query results changed with {workers} workers (run {run})"
                    )));
                }
                Some(_) => {}
                None => *slot = Some(m.results.clone()),
            }
            cell.push(base.run_row(&params, run, &m));
        }
        rows.push(base.mean_row(&cell));
    }
    Ok(rows)
}
