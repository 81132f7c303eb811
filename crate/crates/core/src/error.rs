use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constraint row {0} has zero norm")]
    ZeroRow(usize),
    #[error("non-finite value in polytope data")]
    NonFinite,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("polytope is empty")]
    Empty,
    #[error("operation requires a planar polytope, got dimension {0}")]
    NotPlanar(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state has length {got}, model expects {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("input has length {got}, model expects {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("invalid model parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NmpcError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("unsupported schema_version {found}, expected {expected}")]
    Schema { found: u32, expected: u32 },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

impl ConfigError {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Nmpc(#[from] NmpcError),
    #[error("robot {robot} infeasible for {count} consecutive steps at t = {t}")]
    RepeatedInfeasibility { robot: usize, count: usize, t: usize },
    #[error("message bus: {0}")]
    Bus(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("error bound: {0}")]
    Bound(#[from] BoundError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("matrix is rank deficient (rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },
    #[error("state set is unbounded or inverted")]
    UnboundedSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
