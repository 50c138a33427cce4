use thiserror::Error;

/// Errors raised anywhere in the detection toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input text is not well-formed JSON.
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },

    /// A structurally valid document is missing a required field or carries
    /// a value of the wrong shape.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    /// Parsed values violate a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A row of a delimited table could not be read.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("unknown {kind} `{id}`")]
    Dangling { kind: &'static str, id: String },

    #[error("invalid polygon: {0}")]
    Polygon(String),

    #[error("invalid interval [{start_ms}, {end_ms}]")]
    Interval { start_ms: i64, end_ms: i64 },

    #[error("invalid threshold: {0}")]
    Threshold(String),

    #[error("{0}")]
    Precondition(String),

    /// Outcomes are perfectly predicted by the covariates.
    #[error("complete or quasi-complete separation (max |beta| = {max_abs_beta:.3e})")]
    Separation { max_abs_beta: f64 },

    #[error("singular information matrix: `{first}` and `{second}` are collinear")]
    Collinear { first: String, second: String },

    #[error("covariate `{0}` is not part of the model")]
    UnknownCovariate(String),

    #[error("covariate `{0}` is not binary")]
    NotBinary(String),

    #[error("infeasible schedule: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
