//! k-nearest-neighbor search with random projection forests.
//!
//! A forest is an ensemble of independently grown random projection trees.
//! To answer a query, the query is routed to one leaf in every tree, the
//! leaves are unioned into a candidate set, and the exact K nearest
//! candidates are returned. More trees give a larger candidate set and
//! fewer missed neighbors.
//!
//! ```
//! use rpforest::{build_forest, gen_gaussian, ForestParams, PointRef, Query, TreeParams};
//!
//! let data = gen_gaussian(500, 8, &[1.0; 8], 7).unwrap();
//! let params = ForestParams::new(20, TreeParams::new(20, 1), 42);
//! let forest = build_forest(&data, &params).unwrap();
//! let hit = forest.knn_query(Query::Point(PointRef(0)), 5).unwrap();
//! assert_eq!(hit.neighbors.len(), 5);
//! ```

pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod forest;
mod parallel;
pub mod projection;
pub mod report;
pub mod rng;
pub mod rptree;

pub use data::{
    euclidean, gen_gaussian, load_points, read_csv, save_points, Dataset, Fingerprint, InputFormat,
    Neighbor, PointRef,
};
pub use error::{Error, Result};
pub use evaluation::{
    closest_pair, discrepancy, dominance_violations, estimate_neck, evaluate, exact_knn,
    missing_rate, separation_count, separation_probability, theorem_bound, AccuracyReport,
    Discrepancy, ExactKnnTable, OracleCache, SeparationBoundParams,
};
pub use experiment::{
    load_input, run_experiment, run_experiment_on, time_parallel_scaling, ExperimentConfig,
    ORACLE_LIMIT,
};
pub use forest::{build_forest, Forest, ForestParams, Query, QueryOrigin, QueryResult};
pub use projection::{
    project, random_direction, select_direction, spread, Direction, ProjectionCoeffs,
};
pub use report::{
    emit_report, metrics_csv, read_report, write_report, ReportFormat, ReportRow, RowKind,
};
pub use rng::{derive_seed, RngStream};
pub use rptree::{
    build_tree, default_leaf_capacity, split_node, LeafKind, RpTree, SplitOutcome, SplitRecord,
    TreeParams,
};
