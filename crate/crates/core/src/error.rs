use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = EtlpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EtlpError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    Numeric(&'static str),

    #[error("format error at byte offset {offset}: {msg}")]
    ByteFormat { offset: usize, msg: String },

    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },

    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("gradient unit: {0}")]
    Fsm(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EtlpError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        EtlpError::Parameter(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        EtlpError::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EtlpError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Returns a shape error unless `got == expected`.
pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(EtlpError::Shape {
            context,
            expected,
            got,
        })
    }
}
