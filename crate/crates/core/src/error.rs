use std::path::PathBuf;

/// Errors produced by the library.
///
/// Variants fall into two families that the CLI maps to distinct exit codes:
/// configuration problems ([`Error::is_config`]) and numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    ConfigSyntax {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("subcarrier index {k} outside 1..={max}")]
    SubcarrierOutOfRange { k: usize, max: usize },

    #[error("combiner mode {mode} incompatible with N = {n_antennas}, M = {n_rfc}")]
    CombinerMode {
        mode: &'static str,
        n_antennas: usize,
        n_rfc: usize,
    },

    #[error("singular bound: numerical rank {rank} of {dim}, condition {condition:.3e}")]
    SingularBound {
        rank: usize,
        dim: usize,
        condition: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("nothing to export")]
    EmptyRecords,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed dump: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than by
    /// the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::ConfigSyntax { .. }
                | Error::CombinerMode { .. }
                | Error::OutOfRange { .. }
                | Error::SubcarrierOutOfRange { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
