//! Ensembles of random projection trees and kNN search over the union of
//! the leaves a query reaches.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{euclidean, Dataset, Fingerprint, Neighbor, PointRef};
use crate::error::{Error, Result};
use crate::parallel::with_workers;
use crate::rng::RngStream;
use crate::rptree::{build_tree, RpTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub tree: TreeParams,
    pub master_seed: u64,
    /// Worker threads. Never affects results.
    pub workers: usize,
}

impl ForestParams {
    pub fn new(trees: usize, tree: TreeParams, master_seed: u64) -> Self {
        ForestParams {
            trees,
            tree,
            master_seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::param("forest needs at least one tree"));
        }
        if self.workers == 0 {
            return Err(Error::param("workers must be at least 1"));
        }
        self.tree.validate()
    }

    /// Random stream of tree `i`.
    pub fn tree_stream(&self, i: usize) -> RngStream {
        RngStream::derived(self.master_seed, i as u64)
    }
}

/// A kNN query: either a dataset row, which is excluded from its own
/// answer, or free coordinates, which exclude nothing.
#[derive(Debug, Clone, Copy)]
pub enum Query<'q> {
    Point(PointRef),
    Coords(&'q [f64]),
}

impl From<PointRef> for Query<'_> {
    fn from(p: PointRef) -> Self {
        Query::Point(p)
    }
}

impl<'q> From<&'q [f64]> for Query<'q> {
    fn from(c: &'q [f64]) -> Self {
        Query::Coords(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOrigin {
    Point(PointRef),
    Coords(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub origin: QueryOrigin,
    /// Up to K neighbors, ascending by distance then index.
    pub neighbors: Vec<Neighbor>,
    /// Size of the deduplicated candidate set.
    pub candidate_count: usize,
    /// Fewer than K candidates were available.
    pub shortfall: bool,
}

impl QueryResult {
    /// Distance of the K-th neighbor, if K were found.
    pub fn kth_distance(&self, k: usize) -> Option<f64> {
        if self.neighbors.len() >= k && k > 0 {
            Some(self.neighbors[k - 1].distance)
        } else {
            None
        }
    }
}

/// Select the `k` smallest by distance (ties by index), sorted.
pub(crate) fn top_k(mut all: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, Neighbor::rank_cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(Neighbor::rank_cmp);
    all
}

#[derive(Debug, Clone)]
pub struct Forest<'a> {
    data: &'a Dataset,
    trees: Vec<RpTree>,
    params: ForestParams,
}

/// Build `params.trees` trees; tree `i` draws from the stream derived from
/// `(master_seed, i)`, so the forest does not depend on `workers`.
pub fn build_forest<'a>(data: &'a Dataset, params: &ForestParams) -> Result<Forest<'a>> {
    params.validate()?;
    let trees = with_workers(params.workers, || {
        (0..params.trees)
            .into_par_iter()
            .map(|i| build_tree(data, &params.tree, &mut params.tree_stream(i)))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(Forest {
        data,
        trees,
        params: *params,
    })
}

impl<'a> Forest<'a> {
    /// Assemble a forest from already built trees.
    pub fn from_trees(data: &'a Dataset, trees: Vec<RpTree>, params: ForestParams) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::param("forest needs at least one tree"));
        }
        for t in &trees {
            if t.n() != data.n() || t.dim() != data.dim() {
                return Err(Error::param("tree was not built over this dataset"));
            }
        }
        let params = ForestParams {
            trees: trees.len(),
            ..params
        };
        Ok(Forest {
            data,
            trees,
            params,
        })
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn trees(&self) -> &[RpTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// Forest of the first `t` trees.
    pub fn prefix(&self, t: usize) -> Result<Forest<'a>> {
        if t == 0 || t > self.trees.len() {
            return Err(Error::param(format!(
                "prefix of {t} trees out of {}",
                self.trees.len()
            )));
        }
        Forest::from_trees(self.data, self.trees[..t].to_vec(), self.params)
    }

    /// Same forest with a different worker count for queries.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.params.workers = workers;
        self
    }

    fn resolve<'q>(&self, q: Query<'q>) -> Result<(&'q [f64], Option<usize>)>
    where
        'a: 'q,
    {
        match q {
            Query::Point(p) => {
                self.data.check_index(p)?;
                Ok((self.data.point(p.0), Some(p.0)))
            }
            Query::Coords(c) => {
                self.data.check_dim(c)?;
                Ok((c, None))
            }
        }
    }

    fn union_of_leaves(&self, coords: &[f64], exclude: Option<usize>) -> Vec<usize> {
        let mut set: Vec<usize> = Vec::new();
        for tree in &self.trees {
            set.extend_from_slice(tree.bucket(tree.leaf_id(coords)));
        }
        set.sort_unstable();
        set.dedup();
        if let Some(me) = exclude {
            if let Ok(pos) = set.binary_search(&me) {
                set.remove(pos);
            }
        }
        set
    }

    /// Deduplicated union of the buckets `q` reaches, ascending.
    pub fn candidates(&self, q: Query<'_>) -> Result<Vec<usize>> {
        let (coords, exclude) = self.resolve(q)?;
        Ok(self.union_of_leaves(coords, exclude))
    }

    /// Exact top-K among the candidates of `q`.
    pub fn knn_query(&self, q: Query<'_>, k: usize) -> Result<QueryResult> {
        if k == 0 {
            return Err(Error::param("K must be at least 1"));
        }
        let (coords, exclude) = self.resolve(q)?;
        let cand = self.union_of_leaves(coords, exclude);
        let candidate_count = cand.len();
        let scored: Vec<Neighbor> = cand
            .into_iter()
            .map(|i| Neighbor::new(i, euclidean(coords, self.data.point(i))))
            .collect();
        let neighbors = top_k(scored, k);
        Ok(QueryResult {
            origin: match q {
                Query::Point(p) => QueryOrigin::Point(p),
                Query::Coords(c) => QueryOrigin::Coords(c.to_vec()),
            },
            shortfall: neighbors.len() < k,
            neighbors,
            candidate_count,
        })
    }

    /// [`Forest::knn_query`] for each dataset row in `queries`, in order,
    /// spread over `params.workers` threads.
    pub fn batch_knn(&self, queries: &[PointRef], k: usize) -> Result<Vec<QueryResult>> {
        if queries.is_empty() {
            return Err(Error::param("query batch is empty"));
        }
        with_workers(self.params.workers, || {
            queries
                .par_iter()
                .map(|&p| self.knn_query(Query::Point(p), k))
                .collect::<Result<Vec<_>>>()
        })?
    }

    /// Every dataset row queried against the forest.
    pub fn batch_knn_all(&self, k: usize) -> Result<Vec<QueryResult>> {
        let all: Vec<PointRef> = (0..self.data.n()).map(PointRef).collect();
        self.batch_knn(&all, k)
    }

    /// Write the forest as versioned JSON, stamped with the dataset's
    /// fingerprint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let doc = ForestFile {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            fingerprint: self.data.fingerprint(),
            params: self.params,
            trees: self.trees.clone(),
        };
        serde_json::to_writer(BufWriter::new(file), &doc)?;
        Ok(())
    }

    /// Read a forest saved by [`Forest::save`], refusing it unless it was
    /// built over exactly `data`.
    pub fn load(path: &Path, data: &'a Dataset) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let doc: ForestFile = serde_json::from_reader(BufReader::new(file))?;
        if doc.format != FOREST_FORMAT {
            return Err(Error::FingerprintMismatch(format!(
                "not a forest file (format {:?})",
                doc.format
            )));
        }
        if doc.version != FOREST_VERSION {
            return Err(Error::FormatVersion {
                expected: FOREST_VERSION,
                found: doc.version,
            });
        }
        let fp = data.fingerprint();
        if doc.fingerprint != fp {
            return Err(Error::FingerprintMismatch(format!(
                "file has n={} D={} checksum {}, dataset has n={} D={} checksum {}",
                doc.fingerprint.n,
                doc.fingerprint.dim,
                doc.fingerprint.checksum,
                fp.n,
                fp.dim,
                fp.checksum
            )));
        }
        for t in &doc.trees {
            t.validate()?;
        }
        Forest::from_trees(data, doc.trees, doc.params)
    }
}

const FOREST_FORMAT: &str = "rpforest";
const FOREST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    fingerprint: Fingerprint,
    params: ForestParams,
    trees: Vec<RpTree>,
}
