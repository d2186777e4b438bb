use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    Index { index: usize, n_qubits: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("patch selection is empty: {0}")]
    Selection(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("SMO did not converge: {0}")]
    Convergence(String),
    #[error("internal consistency error: {0}")]
    Consistency(String),
    #[error("optimization aborted: {0}")]
    NonFinite(String),
    #[error("split {split}, stage {stage}: {source}")]
    Stage {
        split: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, split: usize, stage: &'static str) -> Self {
        Error::Stage {
            split,
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the CLI: 3 for data problems, 4 for solver
    /// convergence failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::Selection(_)
            | Error::Sampling(_)
            | Error::Degenerate(_)
            | Error::Domain(_) => 3,
            Error::Convergence(_) => 4,
            _ => 1,
        }
    }
}
