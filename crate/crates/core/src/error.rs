use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),
    #[error("type hierarchy contains a cycle through {0}")]
    HierarchyCycle(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Referential or schema failure detected before any work is done.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("bad container format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's data rather than the runtime.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Json { .. }
                | Error::DuplicateEntity(_)
                | Error::HierarchyCycle(_)
                | Error::Validation(_)
                | Error::Format(_)
        )
    }
}
