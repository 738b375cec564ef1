use std::io;

use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("feature norm {norm} exceeds the unit-ball bound")]
    FeatureBound { norm: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix-game solver did not converge ({context}); residual {residual:e}")]
    Solver { context: String, residual: f64 },

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Wraps the error with location information, keeping its category.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Param(m) => Error::Param(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            Error::Solver { context, residual } => Error::Solver {
                context: format!("{ctx}: {context}"),
                residual,
            },
            Error::Generation(m) => Error::Generation(format!("{ctx}: {m}")),
            Error::Consistency(m) => Error::Consistency(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            other => other,
        }
    }

    /// Process exit code used by the CLI: 2 config, 3 numeric/solver, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) | Error::Config(_) | Error::Generation(_) => 2,
            Error::FeatureBound { .. }
            | Error::Numeric(_)
            | Error::Solver { .. }
            | Error::Consistency(_) => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
        }
    }
}
