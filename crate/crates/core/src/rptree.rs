//! Random projection trees.
//!
//! A node with at least `leaf_capacity` points is split along a direction
//! chosen by [`select_direction`](crate::select_direction) at a cut drawn uniformly between the
//! smallest and largest projection coefficient. Points with coefficient
//! strictly below the cut go left, the rest go right. Routing uses the
//! identical comparison, so every dataset point routes to the leaf that
//! holds it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::projection::{select_direction_block, Direction};
use crate::rng::RngStream;

/// Leaf capacity used when the caller only knows K.
pub fn default_leaf_capacity(k: usize) -> usize {
    if k <= 5 {
        20
    } else {
        30
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Nodes with at least this many points are split.
    pub leaf_capacity: usize,
    /// Candidate directions drawn per split.
    pub n_try: usize,
    /// Extra cut draws allowed when a cut leaves one side empty.
    pub max_retries: usize,
    /// Relative extent below which a node is unsplittable: the node becomes
    /// a leaf when `max - min <= min_extent * max(1, |min|, |max|)`.
    pub min_extent: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            leaf_capacity: 20,
            n_try: 1,
            max_retries: 3,
            min_extent: 1e-12,
        }
    }
}

impl TreeParams {
    pub fn new(leaf_capacity: usize, n_try: usize) -> Self {
        TreeParams {
            leaf_capacity,
            n_try,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.leaf_capacity < 2 {
            return Err(Error::param("leaf capacity must be at least 2"));
        }
        if self.n_try < 1 {
            return Err(Error::param("nTry must be at least 1"));
        }
        if !(self.min_extent >= 0.0 && self.min_extent.is_finite()) {
            return Err(Error::param("min_extent must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Hyperplane of an internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub direction: Direction,
    pub cut: f64,
}

impl SplitRecord {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        self.direction.coefficient(x) < self.cut
    }
}

/// Why a node stopped splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafKind {
    /// Fewer than `leaf_capacity` points.
    Regular,
    /// Projection extent at or below the `min_extent` threshold.
    ZeroExtent,
    /// Every cut draw left one side empty.
    RetriesExhausted,
}

impl LeafKind {
    pub fn is_degenerate(self) -> bool {
        self != LeafKind::Regular
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        split: SplitRecord,
        left: usize,
        right: usize,
    },
    /// Bucket is `items[start..end]` of the owning tree.
    Leaf {
        start: usize,
        end: usize,
        kind: LeafKind,
    },
}

/// Result of splitting one node.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitOutcome {
    Split {
        left: Vec<usize>,
        right: Vec<usize>,
        record: SplitRecord,
    },
    Leaf(LeafKind),
}

/// Pick the hyperplane for a node, or say why it must stay a leaf.
/// On success also returns each point's coefficient along the direction.
/// `block` holds the node's points as contiguous rows of `dim` values.
fn choose_split(
    block: &[f64],
    dim: usize,
    params: &TreeParams,
    rng: &mut RngStream,
) -> Result<std::result::Result<(SplitRecord, Vec<f64>), LeafKind>> {
    if block.len() / dim < params.leaf_capacity {
        return Ok(Err(LeafKind::Regular));
    }
    let (direction, coeffs) = select_direction_block(block, dim, params.n_try, rng)?;
    let (a, b) = (coeffs.min, coeffs.max);
    let scale = 1f64.max(a.abs()).max(b.abs());
    if b - a <= params.min_extent * scale {
        return Ok(Err(LeafKind::ZeroExtent));
    }
    for _ in 0..=params.max_retries {
        let cut = rng.random_range(a..=b);
        // The point at `b` always lands right; only the left side can be empty.
        if coeffs.values.iter().any(|&v| v < cut) {
            return Ok(Ok((SplitRecord { direction, cut }, coeffs.values)));
        }
    }
    Ok(Err(LeafKind::RetriesExhausted))
}

/// Split the node holding `indices`.
///
/// Nodes smaller than the leaf capacity are returned as regular leaves.
/// Both sides of a split are nonempty and preserve input order.
pub fn split_node(
    indices: &[usize],
    data: &Dataset,
    params: &TreeParams,
    rng: &mut RngStream,
) -> Result<SplitOutcome> {
    params.validate()?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.n()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            n: data.n(),
        });
    }
    let block: Vec<f64> = indices
        .iter()
        .flat_map(|&i| data.point(i))
        .copied()
        .collect();
    Ok(match choose_split(&block, data.dim(), params, rng)? {
        Err(kind) => SplitOutcome::Leaf(kind),
        Ok((record, coeffs)) => {
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for (&i, &c) in indices.iter().zip(&coeffs) {
                if c < record.cut {
                    left.push(i)
                } else {
                    right.push(i)
                }
            }
            SplitOutcome::Split {
                left,
                right,
                record,
            }
        }
    })
}

/// A single random projection tree over a dataset of `n` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpTree {
    dim: usize,
    n: usize,
    params: TreeParams,
    /// `nodes[0]` is the root.
    nodes: Vec<Node>,
    /// Permutation of `0..n`; leaf buckets are contiguous ranges.
    items: Vec<usize>,
}

/// Grow a tree over every point of `data`.
pub fn build_tree(data: &Dataset, params: &TreeParams, rng: &mut RngStream) -> Result<RpTree> {
    params.validate()?;
    let n = data.n();
    let mut items: Vec<usize> = (0..n).collect();
    let mut nodes = vec![Node::Leaf {
        start: 0,
        end: n,
        kind: LeafKind::Regular,
    }];
    let mut work = vec![(0usize, 0usize, n)];
    let mut scratch = Vec::new();
    // Rows are permuted alongside `items` so every node reads a contiguous
    // block instead of gathering scattered rows.
    let dim = data.dim();
    let mut rows = data.coords().to_vec();
    let mut scratch_rows = Vec::new();

    while let Some((id, lo, hi)) = work.pop() {
        let bucket = &mut items[lo..hi];
        let block = &mut rows[lo * dim..hi * dim];
        match choose_split(block, dim, params, rng)? {
            Err(kind) => {
                nodes[id] = Node::Leaf {
                    start: lo,
                    end: hi,
                    kind,
                }
            }
            Ok((split, coeffs)) => {
                scratch.clear();
                scratch_rows.clear();
                let mut n_left = 0;
                for k in 0..bucket.len() {
                    if coeffs[k] < split.cut {
                        bucket[n_left] = bucket[k];
                        block.copy_within(k * dim..(k + 1) * dim, n_left * dim);
                        n_left += 1;
                    } else {
                        scratch.push(bucket[k]);
                        scratch_rows.extend_from_slice(&block[k * dim..(k + 1) * dim]);
                    }
                }
                bucket[n_left..].copy_from_slice(&scratch);
                block[n_left * dim..].copy_from_slice(&scratch_rows);
                let mid = lo + n_left;
                let (left, right) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf {
                    start: lo,
                    end: mid,
                    kind: LeafKind::Regular,
                });
                nodes.push(Node::Leaf {
                    start: mid,
                    end: hi,
                    kind: LeafKind::Regular,
                });
                nodes[id] = Node::Split { split, left, right };
                work.push((right, mid, hi));
                work.push((left, lo, mid));
            }
        }
    }

    Ok(RpTree {
        dim: data.dim(),
        n,
        params: *params,
        nodes,
        items,
    })
}

impl RpTree {
    /// Assemble a tree from explicit nodes, e.g. a hand-built or
    /// deserialized one. The structure is validated.
    pub fn from_parts(
        dim: usize,
        params: TreeParams,
        nodes: Vec<Node>,
        items: Vec<usize>,
    ) -> Result<Self> {
        let tree = RpTree {
            dim,
            n: items.len(),
            params,
            nodes,
            items,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of indexed points.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_single_leaf(&self) -> bool {
        matches!(self.nodes[0], Node::Leaf { .. })
    }

    /// Leaf buckets with their kinds, in node order.
    pub fn leaves(&self) -> impl Iterator<Item = (&[usize], LeafKind)> + '_ {
        self.nodes.iter().filter_map(move |node| match *node {
            Node::Leaf { start, end, kind } => Some((&self.items[start..end], kind)),
            Node::Split { .. } => None,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    /// Maximum root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, d)) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { .. } => best = best.max(d),
                Node::Split { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
        best
    }

    /// Node id of the leaf `q` falls into. `q` must have the tree's dimension.
    #[inline]
    pub fn leaf_id(&self, q: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split { split, left, right } => {
                    id = if split.goes_left(q) { *left } else { *right };
                }
            }
        }
    }

    /// Bucket of the leaf that `q` falls into.
    pub fn route(&self, q: &[f64]) -> Result<&[usize]> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        Ok(self.bucket(self.leaf_id(q)))
    }

    #[inline]
    pub(crate) fn bucket(&self, leaf: usize) -> &[usize] {
        match self.nodes[leaf] {
            Node::Leaf { start, end, .. } => &self.items[start..end],
            Node::Split { .. } => unreachable!("leaf_id returns leaves only"),
        }
    }

    /// Structural audit: every node is reached exactly once and the leaf
    /// buckets partition `0..n`. Routing is checked by
    /// [`RpTree::audit_against`].
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invariant(msg));
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let mut seen_node = vec![false; self.nodes.len()];
        let mut seen_item = vec![false; self.n];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if id >= self.nodes.len() || std::mem::replace(&mut seen_node[id], true) {
                return bad(format!("node {id} missing or reached twice"));
            }
            match &self.nodes[id] {
                Node::Split { split, left, right } => {
                    if split.direction.dim() != self.dim || !split.cut.is_finite() {
                        return bad(format!("node {id} has a malformed split"));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf { start, end, .. } => {
                    if start > end || *end > self.items.len() {
                        return bad(format!("leaf {id} has range {start}..{end}"));
                    }
                    for &i in &self.items[*start..*end] {
                        if i >= self.n || std::mem::replace(&mut seen_item[i], true) {
                            return bad(format!("point {i} missing or in two leaves"));
                        }
                    }
                }
            }
        }
        if let Some(i) = seen_item.iter().position(|s| !s) {
            return bad(format!("point {i} is in no leaf"));
        }
        if seen_node.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }

    /// Full audit against the dataset the tree was built on: structure,
    /// self-routing of every point, and leaf capacity.
    pub fn audit_against(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        if data.n() != self.n || data.dim() != self.dim {
            return Err(Error::Invariant("tree and dataset shapes differ".into()));
        }
        for leaf in self.nodes.iter().enumerate().filter_map(|(id, n)| match n {
            Node::Leaf { .. } => Some(id),
            _ => None,
        }) {
            let bucket = self.bucket(leaf);
            if let Node::Leaf {
                kind: LeafKind::Regular,
                ..
            } = self.nodes[leaf]
            {
                if bucket.len() >= self.params.leaf_capacity {
                    return Err(Error::Invariant(format!(
                        "regular leaf {leaf} holds {} >= capacity {}",
                        bucket.len(),
                        self.params.leaf_capacity
                    )));
                }
            }
            for &i in bucket {
                if self.leaf_id(data.point(i)) != leaf {
                    return Err(Error::Invariant(format!("point {i} does not route home")));
                }
            }
        }
        Ok(())
    }
}
