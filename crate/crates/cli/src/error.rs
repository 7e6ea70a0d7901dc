use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("empty corpus: no PNG frames in {0}")]
    EmptyCorpus(PathBuf),

    #[error(transparent)]
    Core(#[from] rvf_core::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// `1` for configuration and usage problems, `2` for anything touching files.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Image { .. } | CliError::EmptyCorpus(_) => 2,
            CliError::Core(e) => match e {
                rvf_core::Error::Io { .. } | rvf_core::Error::Format(_) => 2,
                _ => 1,
            },
        }
    }
}
