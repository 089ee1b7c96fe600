use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report. The CLI maps these onto exit codes
/// through [`Error::is_input_error`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("unsupported family `{0}`; supported families: goursat, evolution1, evolution2, mixed_xy, spectral3")]
    UnsupportedFamily(String),

    #[error("incomplete Jordan set: chain {chain}: {detail}")]
    IncompleteJordanSet { chain: usize, detail: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("Schmidt bordering failed: bordered operator is singular (condition number {condition:.3e})")]
    SchmidtBorderingFailed { condition: f64 },

    #[error("commutability violation: operator {operator} does not (P_k, Q_k)-commute (residual {residual:.3e})")]
    CommutabilityViolation { operator: String, residual: f64 },

    #[error("spec error: {0}")]
    Spec(String),

    #[error("underdetermined C-row: {0}")]
    UnderdeterminedRow(String),

    #[error("quasitriangularity not certified: {0}")]
    NotQuasitriangular(String),

    #[error("series truncation failure: {0}")]
    SeriesTruncation(String),

    #[error("resonant λ: λ = {lambda} equals {index}² for a retained mode")]
    ResonantLambda { lambda: f64, index: usize },

    #[error("singular row: {0}")]
    SingularRow(String),

    #[error("compatibility violated: residual {residual:.3e} exceeds {tolerance:.3e}")]
    CompatibilityViolated { residual: f64, tolerance: f64 },
}

impl Error {
    /// Errors caused by malformed input rather than by the mathematics of the
    /// problem.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Usage(_)
                | Error::Parse { .. }
                | Error::Schema { .. }
                | Error::Io(_)
                | Error::UnsupportedFamily(_)
                | Error::Spec(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
