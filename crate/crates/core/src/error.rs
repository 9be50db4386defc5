use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("vertices {0} and {1} lie in different components (disconnected)")]
    Disconnected(usize, usize),

    #[error("closed subdomain: the face subset has no boundary")]
    ClosedSubdomain,

    #[error("angle undefined: |Omega(e1,e2)| != 1 (max |cos alpha| = {max_cos:.3e})")]
    AngleUndefined { max_cos: f64 },

    #[error("weight singular: cos alpha = {cos:.3e} at vertex {vertex}")]
    WeightSingular { vertex: usize, cos: f64 },

    #[error("no blow-up detected: {0}")]
    NoBlowup(String),

    #[error("no blow-up in window for sequence entry {k}")]
    EmptyWindow { k: usize },

    #[error("insufficient sequence: {valid} valid entries, need at least {needed}")]
    InsufficientSequence { valid: usize, needed: usize },

    #[error(
        "normalization failed at entry {k}: |A|(0,0) = {at_origin:.4}, max |A|^2 = {max_a2:.4}"
    )]
    Normalization {
        k: usize,
        at_origin: f64,
        max_a2: f64,
    },

    #[error("empty limit: no rescaled geometry inside the ball")]
    EmptyLimit,

    #[error("insufficient temporal coverage: {0}")]
    InsufficientCoverage(String),

    #[error("mesh failure at t = {t}: {diagnostic}")]
    MeshFailure { t: f64, diagnostic: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
