use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("`{key}`: {reason}")]
    Key { key: String, reason: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: agf_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {reason}", path.display())]
    Schema { path: PathBuf, reason: String },
}

impl LabError {
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(agf_core::Error) -> LabError {
        move |source| LabError::Stage { stage, source }
    }
}
