use std::path::PathBuf;

/// Failures surfaced by the file formats and the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: line {line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: qpp_core::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl Error {
    pub fn parse(file: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub fn core(context: impl Into<String>, source: qpp_core::Error) -> Self {
        Error::Core {
            context: context.into(),
            source,
        }
    }

    /// 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. } | Error::Parse { .. } | Error::Data(_) => 2,
            Error::Core { source, .. } if source.is_numerical() => 3,
            Error::Core { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }
}

impl From<qpp_core::Error> for Error {
    fn from(source: qpp_core::Error) -> Self {
        Error::Core {
            context: "error".into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &std::path::Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
