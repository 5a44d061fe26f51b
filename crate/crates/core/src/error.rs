use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong between reading a trial and reporting an estimate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} in column `{column}` at data row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("invalid assignment {value:?} at data row {row}: arm must be 0 or 1")]
    InvalidAssignment { row: usize, value: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid randomization scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite entries in matrix")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("singular rank-one downdate: denominator {0:e}")]
    SingularDowndate(f64),

    #[error("degenerate stratum `{stratum}`: {reason}")]
    DegenerateStratum { stratum: String, reason: String },

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// `3` marks statistical degeneracy (an empty arm, too few units for a
    /// U-statistic); every other failure is a validation failure (`2`).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateStratum { .. } => 3,
            Error::Replicate { source, .. } => source.exit_code(),
            _ => 2,
        }
    }

    /// Short machine-readable tag for the error object emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Empty(_) => "empty_input",
            Error::MissingColumn(_) => "missing_column",
            Error::NonNumeric { .. } => "non_numeric",
            Error::InvalidAssignment { .. } => "invalid_assignment",
            Error::InvalidData(_) => "invalid_data",
            Error::Dimension(_) => "dimension_mismatch",
            Error::InvalidScheme(_) => "invalid_scheme",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Config(_) => "invalid_config",
            Error::NonFinite => "non_finite",
            Error::Asymmetric(_) => "asymmetric",
            Error::SingularDowndate(_) => "singular_downdate",
            Error::DegenerateStratum { .. } => "degenerate_stratum",
            Error::Replicate { source, .. } => source.kind(),
        }
    }

    pub(crate) fn degenerate(stratum: &str, reason: impl Into<String>) -> Self {
        Error::DegenerateStratum {
            stratum: stratum.to_string(),
            reason: reason.into(),
        }
    }
}
