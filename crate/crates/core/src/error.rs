use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Data(_) | Error::Io { .. } => ErrorKind::Data,
            Error::Numeric(_) => ErrorKind::Numeric,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }

    /// Single-line, machine-parsable rendering: `error kind=<k> msg=<json string>`.
    pub fn one_line(&self) -> String {
        let kind = match self.kind() {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        };
        let msg = serde_json::to_string(&self.to_string()).unwrap_or_default();
        format!("error kind={kind} msg={msg}")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
