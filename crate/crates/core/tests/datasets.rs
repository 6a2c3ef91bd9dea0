use std::path::PathBuf;

use rpforest::{
    build_forest, gen_gaussian, load_points, ForestParams, InputFormat, PointRef, Query, TreeParams,
};

fn wdbc_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/wdbc.csv")
}

#[test]
fn wdbc_loads_with_expected_shape() {
    let data = load_points(&wdbc_path(), InputFormat::Csv, true).unwrap();
    assert_eq!((data.n(), data.dim()), (569, 30));
    // First record of the public dataset: radius, texture, perimeter.
    assert_eq!(&data.point(0)[..3], &[17.99, 10.38, 122.8]);
    let again = load_points(&wdbc_path(), InputFormat::Csv, true).unwrap();
    assert_eq!(data.fingerprint(), again.fingerprint());
}

#[test]
fn wdbc_without_header_flag_is_a_data_error() {
    let err = load_points(&wdbc_path(), InputFormat::Csv, false).unwrap_err();
    assert!(err.is_data_error(), "{err}");
}

/// Forty trees over a dataset the size of the largest desk-scale benchmark
/// (58,509 points, 49 features).
#[test]
fn forty_trees_on_large_dataset() {
    let data = gen_gaussian(58_509, 49, &[1.0; 49], 58).unwrap();
    let params = ForestParams::new(40, TreeParams::new(20, 1), 7);
    let forest = build_forest(&data, &params).unwrap();
    assert_eq!(forest.trees().len(), 40);
    for tree in forest.trees() {
        tree.audit_against(&data).unwrap();
    }
    for i in [0, 29_000, 58_508] {
        let res = forest.knn_query(Query::Point(PointRef(i)), 5).unwrap();
        assert_eq!(res.neighbors.len(), 5);
        assert!(res.neighbors.iter().all(|nb| nb.index != PointRef(i)));
    }
}
