use std::fs;
use std::path::{Path, PathBuf};

use hypent_core::spectral::SparseMatrix;
use serde::Serialize;

use crate::error::RunError;

/// A file produced by a run, held in memory until every stage has succeeded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Row layout shared by the per-analysis CSV files.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub series: String,
    pub n: usize,
    pub value: f64,
    pub bracket_lo: Option<f64>,
    pub bracket_hi: Option<f64>,
}

impl SeriesRow {
    pub fn point(series: impl Into<String>, n: usize, value: f64) -> Self {
        SeriesRow { series: series.into(), n, value, bracket_lo: None, bracket_hi: None }
    }

    pub fn bracketed(series: impl Into<String>, n: usize, value: f64, lo: f64, hi: f64) -> Self {
        SeriesRow { series: series.into(), n, value, bracket_lo: Some(lo), bracket_hi: Some(hi) }
    }
}

pub fn csv_artifact<R: Serialize>(name: &str, rows: &[R]) -> Result<Artifact, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Io(e.into_error()))?;
    Ok(Artifact { name: name.to_string(), bytes })
}

fn csv_error(e: csv::Error) -> RunError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => RunError::Io(io),
        other => RunError::Config(format!("csv: {other:?}")),
    }
}

pub fn json_artifact<T: Serialize>(name: &str, value: &T) -> Result<Artifact, RunError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| RunError::Config(format!("json: {e}")))?;
    bytes.push(b'\n');
    Ok(Artifact { name: name.to_string(), bytes })
}

/// Matrix Market coordinate file with 1-based `row col value` lines.
pub fn coo_artifact(name: &str, m: &SparseMatrix, n: usize) -> Artifact {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    s.push_str(&format!("{n} {n} {}\n", m.nnz()));
    for (i, j, v) in m.triplets() {
        s.push_str(&format!("{} {} {v:e}\n", i + 1, j + 1));
    }
    Artifact { name: name.to_string(), bytes: s.into_bytes() }
}

/// Writes the artifacts into `dir`. Each file goes to a temporary name first
/// and is renamed into place, so readers never see a half-written file.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.partial", a.name));
        fs::write(&tmp, &a.bytes)?;
        fs::rename(&tmp, &path)?;
        paths.push(path);
    }
    Ok(paths)
}
