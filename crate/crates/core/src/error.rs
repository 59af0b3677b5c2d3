use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not square: {rows} x {cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("unsupported Matrix Market field or format: {0}")]
    UnsupportedField(String),
    #[error("malformed Matrix Market header: {0}")]
    MalformedHeader(String),
    #[error("malformed Matrix Market entry at line {line}: {reason}")]
    MalformedEntry { line: usize, reason: String },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("matrix has no stored nonzero entries")]
    EmptyMatrix,
    #[error("block resolution must be at least 1, got {0}")]
    BadResolution(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("preconditioner breakdown: {0}")]
    Breakdown(String),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("index {index} out of range for {len} entries")]
    IndexError { index: usize, len: usize },
    #[error("invalid PDE specification: {0}")]
    SpecError(String),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("catalog fingerprint mismatch: model {model}, data {data}")]
    CatalogMismatch { model: String, data: String },
    #[error("unsupported file version {found} (expected {expected})")]
    VersionError { found: u32, expected: u32 },
    #[error("malformed binary record: {0}")]
    FormatError(String),
    #[error("corpus has no labeled entries")]
    EmptyCorpus,
}
