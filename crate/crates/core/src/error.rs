use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model file: {0}")]
    Model(#[from] ModelError),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed on sample `{sample}`: {source}")]
    Stage {
        stage: &'static str,
        sample: String,
        #[source]
        source: Box<Error>,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("not a model archive (bad magic)")]
    BadMagic,
    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checksum failure in component `{0}`")]
    Checksum(String),
    #[error("missing component `{0}`")]
    MissingComponent(String),
    #[error("malformed component `{component}`: {message}")]
    Malformed { component: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn in_stage(self, stage: &'static str, sample: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            sample: sample.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code for this error: 1 for bad configuration, 2 for data
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numerical(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
