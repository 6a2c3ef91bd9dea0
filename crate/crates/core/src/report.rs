//! Tabular experiment output.
//!
//! CSV reports have a fixed header ([`COLUMNS`]); empty optional cells mean
//! "not measured" (for example metrics in timing-only runs, or standard
//! deviations on per-run rows). JSON reports wrap the same rows in a
//! versioned envelope.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "rpforest-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    /// One forest, one run.
    Run,
    /// Mean and standard deviation over the runs of a cell.
    Mean,
}

/// One line of an experiment report. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub n: usize,
    pub dim: usize,
    pub standardized: bool,
    pub k: usize,
    pub trees: usize,
    pub n_try: usize,
    pub leaf_size: usize,
    pub kind: RowKind,
    /// Run index for run rows.
    pub run: Option<usize>,
    /// Number of runs summarized (1 for run rows).
    pub runs: usize,
    /// Forest seed for run rows; master seed for mean rows.
    pub seed: u64,
    pub missing_rate: Option<f64>,
    pub missing_rate_sd: Option<f64>,
    pub discrepancy: Option<f64>,
    pub discrepancy_sd: Option<f64>,
    pub mean_exact_dk: Option<f64>,
    pub mean_approx_dk: Option<f64>,
    pub shortfalls: Option<usize>,
    pub dominance_violations: Option<usize>,
    pub build_ms: f64,
    pub build_ms_sd: Option<f64>,
    pub query_ms: f64,
    pub query_ms_sd: Option<f64>,
    pub workers: usize,
}

pub const COLUMNS: [&str; 25] = [
    "dataset",
    "n",
    "dim",
    "standardized",
    "k",
    "trees",
    "n_try",
    "leaf_size",
    "kind",
    "run",
    "runs",
    "seed",
    "missing_rate",
    "missing_rate_sd",
    "discrepancy",
    "discrepancy_sd",
    "mean_exact_dk",
    "mean_approx_dk",
    "shortfalls",
    "dominance_violations",
    "build_ms",
    "build_ms_sd",
    "query_ms",
    "query_ms_sd",
    "workers",
];

/// Columns that may legitimately differ between otherwise identical runs.
pub const TIMING_COLUMNS: [&str; 5] = [
    "build_ms",
    "build_ms_sd",
    "query_ms",
    "query_ms_sd",
    "workers",
];

#[derive(Serialize, Deserialize)]
struct JsonReport {
    schema: String,
    version: u32,
    columns: Vec<String>,
    rows: Vec<ReportRow>,
}

fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Render rows as CSV text.
pub fn to_csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).map_err(|source| Error::Csv {
        path: "<memory>".into(),
        source,
    })?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// CSV of only the non-timing columns. Identical configurations produce
/// identical bytes regardless of worker count or machine load.
pub fn metrics_csv(rows: &[ReportRow]) -> Result<String> {
    let full = to_csv_string(rows)?;
    let keep: Vec<usize> = COLUMNS
        .iter()
        .enumerate()
        .filter(|(_, c)| !TIMING_COLUMNS.contains(c))
        .map(|(i, _)| i)
        .collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(full.as_bytes());
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: "<memory>".into(),
            source,
        })?;
        w.write_record(keep.iter().map(|&i| &rec[i]))
            .map_err(|source| Error::Csv {
                path: "<memory>".into(),
                source,
            })?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
}

/// Write rows in `format` to any writer (a file, stdout, a buffer).
pub fn write_report<W: Write>(rows: &[ReportRow], format: ReportFormat, out: W) -> Result<()> {
    let origin = || std::path::PathBuf::from("<report>");
    match format {
        ReportFormat::Csv => write_csv(rows, out).map_err(|source| Error::Csv {
            path: origin(),
            source,
        }),
        ReportFormat::Json => {
            let doc = JsonReport {
                schema: REPORT_SCHEMA.into(),
                version: REPORT_VERSION,
                columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
                rows: rows.to_vec(),
            };
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &doc)?;
            out.write_all(b"\n").map_err(|e| Error::io(origin(), e))?;
            out.flush().map_err(|e| Error::io(origin(), e))
        }
    }
}

pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(rows, format, BufWriter::new(file)).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Read a report written by [`emit_report`].
pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<ReportRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(BufReader::new(file));
            let header = rdr.headers().map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            if header.iter().ne(COLUMNS.iter().copied()) {
                return Err(Error::param(format!(
                    "{}: unexpected report columns",
                    path.display()
                )));
            }
            rdr.deserialize()
                .collect::<std::result::Result<Vec<ReportRow>, _>>()
                .map_err(|source| Error::Csv {
                    path: path.to_path_buf(),
                    source,
                })
        }
        ReportFormat::Json => {
            let doc: JsonReport = serde_json::from_reader(BufReader::new(file))?;
            if doc.schema != REPORT_SCHEMA {
                return Err(Error::param(format!(
                    "unknown report schema {:?}",
                    doc.schema
                )));
            }
            if doc.version != REPORT_VERSION {
                return Err(Error::FormatVersion {
                    expected: REPORT_VERSION,
                    found: doc.version,
                });
            }
            Ok(doc.rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_row() -> ReportRow {
        ReportRow {
            dataset: "toy".into(),
            n: 100,
            dim: 3,
            standardized: false,
            k: 5,
            trees: 10,
            n_try: 1,
            leaf_size: 20,
            kind: RowKind::Run,
            run: Some(3),
            runs: 1,
            seed: u64::MAX - 7,
            missing_rate: Some(0.1 + 0.2),
            missing_rate_sd: None,
            discrepancy: Some(1.0 / 3.0),
            discrepancy_sd: None,
            mean_exact_dk: Some(std::f64::consts::PI),
            mean_approx_dk: Some(3.5),
            shortfalls: Some(0),
            dominance_violations: Some(0),
            build_ms: 12.25,
            build_ms_sd: None,
            query_ms: 3.0,
            query_ms_sd: None,
            workers: 2,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let text = to_csv_string(&[]).unwrap();
        assert_eq!(text, format!("{}\n", COLUMNS.join(",")));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let rows = vec![
            sample_row(),
            ReportRow {
                kind: RowKind::Mean,
                run: None,
                missing_rate: None,
                ..sample_row()
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        for format in [ReportFormat::Csv, ReportFormat::Json] {
            let path = dir.path().join("r.out");
            emit_report(&rows, format, &path).unwrap();
            assert_eq!(read_report(&path, format).unwrap(), rows);
        }
    }

    #[test]
    fn metrics_csv_drops_timing() {
        let a = sample_row();
        let b = ReportRow {
            build_ms: 99.0,
            query_ms: 1.0,
            workers: 4,
            ..a.clone()
        };
        assert_ne!(
            to_csv_string(std::slice::from_ref(&a)).unwrap(),
            to_csv_string(std::slice::from_ref(&b)).unwrap()
        );
        assert_eq!(metrics_csv(&[a]).unwrap(), metrics_csv(&[b]).unwrap());
        let header = metrics_csv(&[]).unwrap();
        assert!(!header.contains("build_ms") && header.contains("missing_rate"));
    }

    #[test]
    fn column_list_matches_struct() {
        let text = to_csv_string(&[sample_row()]).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        let record = lines.next().unwrap();
        assert_eq!(header.split(',').count(), record.split(',').count());
    }
}
