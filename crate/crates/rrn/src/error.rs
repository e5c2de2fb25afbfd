use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum RrnError {
    #[error(transparent)]
    Core(#[from] rrn_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// `row` counts data rows from 1 (the header is not a data row); `column` counts from 1.
    #[error("{source_name}: row {row}, column {column}: {message}")]
    Parse {
        source_name: String,
        row: usize,
        column: usize,
        message: String,
    },
    #[error("{source_name}: {message}")]
    Format { source_name: String, message: String },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint does not match the graph: {0}")]
    GraphMismatch(String),
}

pub type Result<T, E = RrnError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RrnError {
    let path = path.into();
    move |source| RrnError::Io { path, source }
}
