use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scenario file: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    /// The scenario admits no feasible operating point. `constraint` names the
    /// binding requirement.
    #[error("infeasible scenario ({constraint}): {detail}")]
    Infeasible { constraint: String, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("subproblem construction failed: {0}")]
    Subproblem(String),

    #[error("grid search found no feasible point")]
    NoFeasibleGridPoint,

    #[error("output error: {0}")]
    Output(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
