//! Immutable point sets, Euclidean distance and CSV ingestion.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Index of a row in a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointRef(pub usize);

impl PointRef {
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for PointRef {
    fn from(i: usize) -> Self {
        PointRef(i)
    }
}

/// A point together with its distance to some query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: PointRef,
    pub distance: f64,
}

impl Neighbor {
    pub fn new(index: usize, distance: f64) -> Self {
        Neighbor {
            index: PointRef(index),
            distance,
        }
    }

    /// Ascending by distance, ties broken by smaller index.
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

/// Euclidean distance between two coordinate slices of equal length.
///
/// Every component that ranks neighbors (forest search, exact oracle,
/// metrics) goes through this function, so equal inputs always produce
/// bit-identical distances.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Identity of a dataset used to validate persisted indexes and caches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub n: usize,
    pub dim: usize,
    /// Hex SHA-256 over the little-endian bit patterns of all coordinates.
    pub checksum: String,
}

/// Row-major matrix of `n` finite points in `dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    coords: Vec<f64>,
    n: usize,
    dim: usize,
    ids: Option<Vec<String>>,
}

impl Dataset {
    /// Build from a flat row-major buffer.
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        if coords.is_empty() {
            return Err(Error::param("dataset must contain at least one point"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::param(format!(
                "buffer of {} values is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite coordinate at point {}, axis {}",
                pos / dim,
                pos % dim
            )));
        }
        let n = coords.len() / dim;
        Ok(Dataset {
            coords,
            n,
            dim,
            ids: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::param(format!(
                    "row {i} has {} values, expected {dim}",
                    row.len()
                )));
            }
            coords.extend_from_slice(row);
        }
        Self::new(coords, dim)
    }

    /// Attach external row labels, one per point.
    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::param(format!(
                "{} ids supplied for {} points",
                ids.len(),
                self.n
            )));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Coordinates of point `i`. Panics if `i >= n`.
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn check_index(&self, p: PointRef) -> Result<()> {
        if p.0 < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: p.0,
                n: self.n,
            })
        }
    }

    pub fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            })
        }
    }

    pub fn distance(&self, a: PointRef, b: PointRef) -> Result<f64> {
        self.check_index(a)?;
        self.check_index(b)?;
        Ok(euclidean(self.point(a.0), self.point(b.0)))
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        hasher.update((self.dim as u64).to_le_bytes());
        for v in &self.coords {
            hasher.update(v.to_bits().to_le_bytes());
        }
        let checksum = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Fingerprint {
            n: self.n,
            dim: self.dim,
            checksum,
        }
    }

    /// Per-column z-scores. Constant columns are centered to zero.
    pub fn standardized(&self) -> Dataset {
        let n = self.n as f64;
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.dim];
        for row in self.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let sd: Vec<f64> = var
            .iter()
            .map(|s| {
                if self.n > 1 {
                    (s / (n - 1.0)).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let coords = self
            .rows()
            .flat_map(|row| {
                row.iter()
                    .zip(&mean)
                    .zip(&sd)
                    .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
                    .collect::<Vec<_>>()
            })
            .collect();
        Dataset {
            coords,
            n: self.n,
            dim: self.dim,
            ids: self.ids.clone(),
        }
    }
}

/// Supported input formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Csv,
}

/// Read a dataset from a file. Row order is preserved.
pub fn load_points(path: &Path, format: InputFormat, has_header: bool) -> Result<Dataset> {
    match format {
        InputFormat::Csv => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            read_csv(file, path, has_header)
        }
    }
}

/// Parse comma-separated reals. `origin` is only used in error messages.
pub fn read_csv<R: Read>(reader: R, origin: &Path, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |source| Error::Csv {
        path: origin.to_path_buf(),
        source,
    };

    let mut coords = Vec::new();
    let mut dim = 0usize;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(csv_err)? {
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        // Blank lines are skipped by the csv reader; a lone empty field is
        // still a row and fails below.
        if dim == 0 {
            dim = record.len();
        } else if record.len() != dim {
            return Err(Error::RaggedRow {
                path: origin.to_path_buf(),
                row,
                expected: dim,
                found: record.len(),
            });
        }
        for (column, cell) in record.iter().enumerate() {
            let bad = |reason: String| Error::BadCell {
                path: origin.to_path_buf(),
                row,
                column: column + 1,
                reason,
            };
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value: {cell:?}")));
            }
            coords.push(v);
        }
    }
    if coords.is_empty() {
        return Err(Error::EmptyInput {
            path: origin.to_path_buf(),
        });
    }
    Dataset::new(coords, dim)
}

/// Write a dataset as header-less CSV with shortest round-trip formatting.
pub fn save_points(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in data.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Axis-aligned Gaussian cloud centered at the origin with per-axis
/// standard deviations `scales`.
pub fn gen_gaussian(n: usize, dim: usize, scales: &[f64], seed: u64) -> Result<Dataset> {
    if n == 0 || dim == 0 {
        return Err(Error::param("n and dimension must be at least 1"));
    }
    if scales.len() != dim {
        return Err(Error::param(format!(
            "{} scales given for dimension {dim}",
            scales.len()
        )));
    }
    if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::param("scales must be finite and nonnegative"));
    }
    let mut rng = RngStream::new(seed);
    let mut coords = Vec::with_capacity(n * dim);
    for _ in 0..n {
        for s in scales {
            let z: f64 = StandardNormal.sample(&mut rng);
            coords.push(s * z);
        }
    }
    Dataset::new(coords, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, header: bool) -> Result<Dataset> {
        read_csv(text.as_bytes(), Path::new("mem.csv"), header)
    }

    #[test]
    fn parses_small_csv() {
        let d = parse("1,2\n3,4\n5,6", false).unwrap();
        assert_eq!((d.n(), d.dim()), (3, 2));
        assert_eq!(d.point(2), &[5.0, 6.0]);
    }

    #[test]
    fn header_row_is_skipped() {
        let d = parse("x,y\n1,2\n3,4\n", true).unwrap();
        assert_eq!((d.n(), d.dim()), (2, 2));
    }

    #[test]
    fn ragged_row_reports_position() {
        match parse("1,2\n3", false) {
            Err(Error::RaggedRow {
                row,
                expected,
                found,
                ..
            }) => assert_eq!((row, expected, found), (2, 2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        match parse("1,2\n3,abc\n", false) {
            Err(Error::BadCell { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("1,NaN\n", false),
            Err(Error::BadCell { .. })
        ));
        assert!(matches!(
            parse("1,inf\n", false),
            Err(Error::BadCell { .. })
        ));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(parse("", false), Err(Error::EmptyInput { .. })));
        assert!(matches!(
            parse("a,b\n", true),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load_points(Path::new("/nonexistent/x.csv"), InputFormat::Csv, false).unwrap_err();
        assert!(matches!(e, Error::Io { .. }));
        assert!(e.is_data_error());
    }

    #[test]
    fn dataset_rejects_bad_shapes() {
        assert!(Dataset::new(vec![], 2).is_err());
        assert!(Dataset::new(vec![1.0], 0).is_err());
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], 2).is_err());
    }

    #[test]
    fn distance_examples() {
        let d = Dataset::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert_eq!(d.distance(PointRef(0), PointRef(1)).unwrap(), 5.0);
        assert_eq!(d.distance(PointRef(1), PointRef(1)).unwrap(), 0.0);
        assert!(matches!(
            d.distance(PointRef(0), PointRef(2)),
            Err(Error::IndexOutOfRange { index: 2, n: 2 })
        ));
    }

    #[test]
    fn distance_matches_scalar_recomputation() {
        let d = gen_gaussian(2, 10, &[1.0; 10], 3).unwrap();
        let (a, b) = (d.point(0), d.point(1));
        let mut sum = 0.0f64;
        for k in 0..10 {
            sum += (a[k] - b[k]).powi(2);
        }
        let got = d.distance(PointRef(0), PointRef(1)).unwrap();
        assert!((got - sum.sqrt()).abs() <= 1e-12 * sum.sqrt());
    }

    #[test]
    fn gaussian_is_reproducible() {
        let a = gen_gaussian(5, 2, &[1.0, 1.0], 7).unwrap();
        let b = gen_gaussian(5, 2, &[1.0, 1.0], 7).unwrap();
        assert_eq!(a, b);
        let c = gen_gaussian(5, 2, &[1.0, 1.0], 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_scales_collapse_to_mean() {
        let d = gen_gaussian(5, 2, &[0.0, 0.0], 1).unwrap();
        assert!(d.coords().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gaussian_sample_variance_matches_scales() {
        let scales: Vec<f64> = (0..20).map(|i| 0.5 + 0.25 * i as f64).collect();
        let d = gen_gaussian(2000, 20, &scales, 11).unwrap();
        for (axis, s) in scales.iter().enumerate() {
            let xs: Vec<f64> = d.rows().map(|r| r[axis]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            let rel = (var - s * s).abs() / (s * s);
            assert!(rel < 0.2, "axis {axis}: var {var} vs {}", s * s);
        }
    }

    #[test]
    fn gaussian_rejects_bad_parameters() {
        assert!(gen_gaussian(0, 2, &[1.0, 1.0], 0).is_err());
        assert!(gen_gaussian(3, 2, &[1.0], 0).is_err());
        assert!(gen_gaussian(3, 1, &[-1.0], 0).is_err());
    }

    #[test]
    fn standardize_gives_unit_columns() {
        let d = gen_gaussian(500, 3, &[5.0, 0.1, 0.0], 2)
            .unwrap()
            .standardized();
        for axis in 0..2 {
            let xs: Vec<f64> = d.rows().map(|r| r[axis]).collect();
            let mean = xs.iter().sum::<f64>() / 500.0;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 499.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        assert!(d.rows().all(|r| r[2] == 0.0));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = gen_gaussian(10, 3, &[1.0; 3], 1).unwrap();
        let b = gen_gaussian(10, 3, &[1.0; 3], 2).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint().checksum, b.fingerprint().checksum);
        assert_eq!(a.fingerprint().checksum.len(), 64);
    }

    fn triple() -> impl Strategy<Value = Vec<[f64; 4]>> {
        prop::collection::vec(prop::array::uniform4(-1e3f64..1e3), 3)
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(rows in triple()) {
            let d = Dataset::from_rows(&rows).unwrap();
            let dist = |a, b| d.distance(PointRef(a), PointRef(b)).unwrap();
            prop_assert!(dist(0, 1) >= 0.0);
            prop_assert_eq!(dist(0, 1), dist(1, 0));
            prop_assert_eq!(dist(2, 2), 0.0);
            prop_assert!(dist(0, 2) <= (dist(0, 1) + dist(1, 2)) * (1.0 + 1e-12));
        }

        #[test]
        fn csv_round_trips_bit_identical(rows in prop::collection::vec(prop::array::uniform3(any::<f64>().prop_filter("finite", |v| v.is_finite())), 1..20)) {
            let d = Dataset::from_rows(&rows).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("pts.csv");
            save_points(&path, &d).unwrap();
            let back = load_points(&path, InputFormat::Csv, false).unwrap();
            prop_assert_eq!(d.coords().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            back.coords().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
