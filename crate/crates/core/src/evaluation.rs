//! Ground truth and accuracy measurement.
//!
//! * [`exact_knn`] is the brute-force oracle every approximate result is
//!   scored against.
//! * [`missing_rate`] and [`discrepancy`] are the two accuracy metrics:
//!   the average fraction of true neighbors missed, and the excess of the
//!   average K-th neighbor distance over the exact one.
//! * [`theorem_bound`], [`estimate_neck`] and [`separation_probability`]
//!   cover the probability that a close pair ends up in different leaves
//!   of every tree of an ensemble.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{euclidean, Dataset, Fingerprint, Neighbor, PointRef};
use crate::error::{Error, Result};
use crate::forest::{top_k, ForestParams, QueryOrigin, QueryResult};
use crate::parallel::with_workers;
use crate::projection::{project, random_direction};
use crate::rng::{derive_seed, RngStream};
use crate::rptree::build_tree;

/// Exact K nearest other points of every dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactKnnTable {
    k: usize,
    /// Row-major `n x k`.
    neighbors: Vec<Neighbor>,
}

impl ExactKnnTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// `d_k(i)`, the distance from point `i` to its K-th nearest neighbor.
    pub fn kth_distance(&self, i: usize) -> f64 {
        self.row(i)[self.k - 1].distance
    }
}

/// Exhaustive scan; ties broken by smaller index.
pub fn exact_knn(data: &Dataset, k: usize) -> Result<ExactKnnTable> {
    if k == 0 || k >= data.n() {
        return Err(Error::param(format!(
            "K = {k} out of range for {} points (need 1 <= K <= n - 1)",
            data.n()
        )));
    }
    let rows: Vec<Vec<Neighbor>> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let q = data.point(i);
            let all: Vec<Neighbor> = (0..data.n())
                .filter(|&j| j != i)
                .map(|j| Neighbor::new(j, euclidean(q, data.point(j))))
                .collect();
            top_k(all, k)
        })
        .collect();
    Ok(ExactKnnTable {
        k,
        neighbors: rows.into_iter().flatten().collect(),
    })
}

/// On-disk cache of exact tables keyed by dataset checksum and K.
#[derive(Debug, Clone)]
pub struct OracleCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CachedTable {
    fingerprint: Fingerprint,
    table: ExactKnnTable,
}

impl OracleCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OracleCache { dir: dir.into() }
    }

    pub fn path_for(&self, fp: &Fingerprint, k: usize) -> PathBuf {
        self.dir
            .join(format!("exact-{}-k{k}.json", &fp.checksum[..16]))
    }

    /// Load the table for `(data, k)` or compute and store it.
    pub fn get_or_compute(&self, data: &Dataset, k: usize) -> Result<ExactKnnTable> {
        let fp = data.fingerprint();
        let path = self.path_for(&fp, k);
        if let Ok(file) = File::open(&path) {
            if let Ok(cached) = serde_json::from_reader::<_, CachedTable>(BufReader::new(file)) {
                if cached.fingerprint == fp && cached.table.k == k && cached.table.n() == data.n() {
                    return Ok(cached.table);
                }
            }
        }
        let table = exact_knn(data, k)?;
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer(
            BufWriter::new(file),
            &CachedTable {
                fingerprint: fp,
                table: table.clone(),
            },
        )?;
        Ok(table)
    }
}

fn check_alignment(approx: &[QueryResult], exact: &ExactKnnTable, k: usize) -> Result<()> {
    if k != exact.k {
        return Err(Error::param(format!(
            "K = {k} but exact table has K = {}",
            exact.k
        )));
    }
    if approx.len() != exact.n() {
        return Err(Error::param(format!(
            "{} results for {} points",
            approx.len(),
            exact.n()
        )));
    }
    for (i, r) in approx.iter().enumerate() {
        if r.origin != QueryOrigin::Point(PointRef(i)) {
            return Err(Error::param(format!(
                "result {i} is not the query for point {i}"
            )));
        }
    }
    Ok(())
}

/// Number of true K nearest neighbors of point `i` absent from `result`.
/// A returned neighbor no farther than `d_k(i)` is never a miss, so
/// distance ties do not produce phantom misses.
fn misses(result: &QueryResult, exact: &ExactKnnTable, i: usize, k: usize) -> usize {
    let truth = exact.row(i);
    let dk = exact.kth_distance(i);
    let hits = result
        .neighbors
        .iter()
        .take(k)
        .filter(|nb| nb.distance <= dk || truth.iter().any(|t| t.index == nb.index))
        .count();
    k - hits
}

/// Average missing rate `(1 / nK) * sum_i m(i)` over results for every
/// dataset row, in row order.
pub fn missing_rate(approx: &[QueryResult], exact: &ExactKnnTable, k: usize) -> Result<f64> {
    check_alignment(approx, exact, k)?;
    let total: usize = approx
        .iter()
        .enumerate()
        .map(|(i, r)| misses(r, exact, i, k))
        .sum();
    Ok(total as f64 / (approx.len() * k) as f64)
}

/// K-th neighbor distance averages over the points that have K results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub mean_exact_dk: f64,
    pub mean_approx_dk: f64,
    /// `(mean_approx_dk - mean_exact_dk) / mean_exact_dk`, with 0/0 = 0.
    pub normalized: f64,
    /// Points left out because fewer than K neighbors were found.
    pub shortfalls: usize,
}

pub fn discrepancy(approx: &[QueryResult], exact: &ExactKnnTable, k: usize) -> Result<Discrepancy> {
    check_alignment(approx, exact, k)?;
    let (mut sum_exact, mut sum_approx, mut used) = (0.0, 0.0, 0usize);
    for (i, r) in approx.iter().enumerate() {
        if let Some(d) = r.kth_distance(k) {
            sum_exact += exact.kth_distance(i);
            sum_approx += d;
            used += 1;
        }
    }
    let shortfalls = approx.len() - used;
    if used == 0 {
        return Ok(Discrepancy {
            mean_exact_dk: 0.0,
            mean_approx_dk: 0.0,
            normalized: 0.0,
            shortfalls,
        });
    }
    let mean_exact_dk = sum_exact / used as f64;
    let mean_approx_dk = sum_approx / used as f64;
    let gap = mean_approx_dk - mean_exact_dk;
    let normalized = if gap == 0.0 { 0.0 } else { gap / mean_exact_dk };
    Ok(Discrepancy {
        mean_exact_dk,
        mean_approx_dk,
        normalized,
        shortfalls,
    })
}

/// Points whose approximate K-th distance is below the exact one. Always
/// zero for a correct search, since candidates are a subset of all points.
pub fn dominance_violations(
    approx: &[QueryResult],
    exact: &ExactKnnTable,
    k: usize,
) -> Result<usize> {
    check_alignment(approx, exact, k)?;
    Ok(approx
        .iter()
        .enumerate()
        .filter(|(i, r)| {
            r.neighbors
                .iter()
                .zip(exact.row(*i))
                .any(|(a, e)| a.distance < e.distance)
        })
        .count())
}

/// Accuracy of one forest on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub missing_rate: f64,
    pub mean_exact_dk: f64,
    pub mean_approx_dk: f64,
    pub normalized_discrepancy: f64,
    pub shortfalls: usize,
    pub dominance_violations: usize,
    pub k: usize,
    pub trees: usize,
    pub n_try: usize,
    pub leaf_capacity: usize,
    pub seed: u64,
}

/// Score results for every dataset row against the exact table.
pub fn evaluate(
    approx: &[QueryResult],
    exact: &ExactKnnTable,
    k: usize,
    params: &ForestParams,
) -> Result<AccuracyReport> {
    let missing_rate = missing_rate(approx, exact, k)?;
    let d = discrepancy(approx, exact, k)?;
    Ok(AccuracyReport {
        missing_rate,
        mean_exact_dk: d.mean_exact_dk,
        mean_approx_dk: d.mean_approx_dk,
        normalized_discrepancy: d.normalized,
        shortfalls: d.shortfalls,
        dominance_violations: dominance_violations(approx, exact, k)?,
        k,
        trees: params.trees,
        n_try: params.tree.n_try,
        leaf_capacity: params.tree.leaf_capacity,
        seed: params.master_seed,
    })
}

/// Inputs of the ensemble separation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationBoundParams {
    /// Distance between the two points.
    pub distance: f64,
    /// Neck size of the point set.
    pub neck: f64,
    /// Per-split neck shrink factor, in (0, 1).
    pub gamma: f64,
    /// Maximum number of splits per tree, at least 2.
    pub max_splits: u32,
    /// Number of trees, at least 1.
    pub ensemble_size: u32,
}

impl SeparationBoundParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.distance > 0.0
            && self.distance.is_finite()
            && self.neck > 0.0
            && self.neck.is_finite()
            && self.gamma > 0.0
            && self.gamma < 1.0
            && self.max_splits >= 2
            && self.ensemble_size >= 1
            && self.ensemble_size <= i32::MAX as u32;
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid bound parameters {self:?}")))
        }
    }
}

/// Single-tree factor `2d / (pi nu gamma^(J-2) (1 - gamma))`.
pub fn bound_base(p: &SeparationBoundParams) -> Result<f64> {
    p.validate()?;
    let shrink = p.gamma.powi(p.max_splits as i32 - 2);
    Ok((2.0 * p.distance) / (PI * p.neck * shrink * (1.0 - p.gamma)))
}

/// Upper bound on the probability that two points at distance `d` are
/// separated by every tree of the ensemble: the single-tree factor raised
/// to the ensemble size. Not clamped, so values above 1 (a vacuous bound)
/// are reported as computed.
pub fn theorem_bound(p: &SeparationBoundParams) -> Result<f64> {
    Ok(bound_base(p)?.powi(p.ensemble_size as i32))
}

/// Upper estimate of the neck size (the smallest projected range over all
/// directions), minimizing over `n_dirs` sampled directions. Drawing more
/// directions from the same stream can only lower the estimate.
pub fn estimate_neck(
    indices: &[usize],
    data: &Dataset,
    n_dirs: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if indices.len() < 2 {
        return Err(Error::param("neck estimate needs at least two points"));
    }
    if n_dirs == 0 {
        return Err(Error::param("neck estimate needs at least one direction"));
    }
    let mut best = f64::INFINITY;
    for _ in 0..n_dirs {
        let dir = random_direction(data.dim(), rng);
        best = best.min(project(indices, data, &dir)?.extent());
    }
    Ok(best)
}

/// Number of trials, out of `trials`, in which `pair` lands in different
/// leaves in every tree of a freshly built forest. Trial `t` grows its
/// forest from the seed derived from `(params.master_seed, t)`.
pub fn separation_count(
    data: &Dataset,
    pair: (PointRef, PointRef),
    params: &ForestParams,
    trials: usize,
) -> Result<usize> {
    params.validate()?;
    let (a, b) = pair;
    data.check_index(a)?;
    data.check_index(b)?;
    if a == b {
        return Err(Error::param("pair must be two distinct points"));
    }
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    let (xa, xb) = (data.point(a.0), data.point(b.0));
    let separated = with_workers(params.workers, || {
        (0..trials)
            .into_par_iter()
            .map(|t| -> Result<bool> {
                let trial = ForestParams {
                    master_seed: derive_seed(params.master_seed, t as u64),
                    ..*params
                };
                for i in 0..trial.trees {
                    let tree = build_tree(data, &trial.tree, &mut trial.tree_stream(i))?;
                    if tree.leaf_id(xa) == tree.leaf_id(xb) {
                        return Ok(false);
                    }
                }
                Ok(true)
            })
            .collect::<Result<Vec<bool>>>()
    })??;
    Ok(separated.into_iter().filter(|s| *s).count())
}

/// Empirical ensemble separation probability; see [`separation_count`].
pub fn separation_probability(
    data: &Dataset,
    pair: (PointRef, PointRef),
    params: &ForestParams,
    trials: usize,
) -> Result<f64> {
    Ok(separation_count(data, pair, params, trials)? as f64 / trials as f64)
}

/// The pair of distinct points at minimum distance (smallest indices on
/// ties).
pub fn closest_pair(data: &Dataset) -> Result<(PointRef, PointRef)> {
    if data.n() < 2 {
        return Err(Error::param("need at least two points"));
    }
    let mut best = (f64::INFINITY, 0, 1);
    for i in 0..data.n() {
        for j in i + 1..data.n() {
            let d = euclidean(data.point(i), data.point(j));
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    Ok((PointRef(best.1), PointRef(best.2)))
}
