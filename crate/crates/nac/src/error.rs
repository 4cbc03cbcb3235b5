use std::path::PathBuf;

pub type Result<T, E = NacError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum NacError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A malformed entry in a dataset or config file; `line` is 1-based.
    #[error("{file} line {line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("{file}: {message}")]
    Format { file: String, message: String },
    #[error(transparent)]
    Core(#[from] nac_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl NacError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<String>, line: u64, message: impl Into<String>) -> Self {
        Self::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub fn format(file: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Format {
            file: file.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}
