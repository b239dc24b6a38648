use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("polygon has only {vertices} distinct vertices")]
    Degenerate { vertices: usize },
    #[error("polygon is not convex at vertex {vertex}")]
    NotConvex { vertex: usize },
    #[error("polygon area {area:e} is below tolerance")]
    ZeroArea { area: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("zero direction vector")]
    ZeroDirection,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("unknown builtin map `{0}`")]
    UnknownBuiltin(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain {index}: {source}")]
    InvalidDomain { index: usize, source: GeomError },
    #[error("domain {index} leaves the unit square")]
    OutsideAmbient { index: usize },
    #[error("branch {branch} refers to missing domain {domain}")]
    MissingDomain { branch: usize, domain: usize },
    #[error("domain {domain} has {count} branches, expected exactly one")]
    BranchCount { domain: usize, count: usize },
    #[error("domains {a} and {b} overlap in area {area:e}")]
    DomainsOverlap { a: usize, b: usize, area: f64 },
    #[error("domains cover area {covered}, expected 1")]
    DomainsDoNotCover { covered: f64 },
    #[error("images {a} and {b} overlap in area {area:e}")]
    ImagesOverlap { a: usize, b: usize, area: f64 },
    #[error("images cover area {covered}, expected 1")]
    ImagesDoNotCover { covered: f64 },
    #[error("image of domain {index} is degenerate or leaves the unit square")]
    BadImage { index: usize },
    #[error("branch {branch} is not invertible (det = {det:e})")]
    NonInvertible { branch: usize, det: f64 },
    #[error("branch {branch} is not hyperbolic")]
    NotHyperbolic { branch: usize },
    #[error("{which} singular segment {index} lies inside the cone (angle {angle_deg:.3} deg)")]
    NotTransversal { which: &'static str, index: usize, angle_deg: f64 },
    #[error("cone certification failed on branch {branch}: {reason}")]
    CertificationFailed { branch: usize, reason: &'static str },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("refinement needs {projected} cells at step {step}, cap is {cap}")]
    CapExceeded { step: usize, projected: usize, cap: usize },
    #[error("count sequence too short for the fit window ({have} < {need})")]
    InsufficientData { have: usize, need: usize },
    #[error("fit window contains non-positive counts")]
    BadCounts,
    #[error("area accounting failed: {0:e}")]
    AreaAccounting(f64),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("segment is not in the stable cone (off by {excess_deg:.3} deg)")]
    NotStable { excess_deg: f64 },
    #[error("segment is too long ({length} > {max})")]
    TooLong { length: f64, max: f64 },
    #[error("segment has zero length")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("power iteration did not converge: residual {residual:e} after {iterations} steps")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("seed vector has no positive mass")]
    EmptySeed,
    #[error("left and right vectors pair to {pairing:e}")]
    DegenerateSeed { pairing: f64 },
    #[error("cell {cell}: image area accounting off by {error:e}")]
    AreaAccounting { cell: usize, error: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("exploration exceeded {0} nodes")]
    Budget(usize),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}
