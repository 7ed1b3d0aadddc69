// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index:?} out of range for shape {shape:?}")]
    IndexOutOfRange { index: Vec<usize>, shape: Vec<usize> },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("32-bit accumulator overflow in {0}")]
    Overflow(&'static str),

    #[error("bank `{bank}`: access [{addr}, {end}) exceeds capacity of {capacity} words")]
    Capacity { bank: String, addr: usize, end: usize, capacity: usize },

    #[error("invalid selector pattern {0:#05b}")]
    Selector(u8),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("unsupported layer: {0}")]
    Unsupported(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("format error at offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by unreadable or malformed inputs, as opposed
    /// to failures raised while simulating.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Format { .. } | Error::Io { .. } | Error::Parse { .. } | Error::Config(_))
    }
}

/// Checked 32-bit add that reports which operation overflowed.
#[inline]
pub(crate) fn add_i32(a: i32, b: i32, what: &'static str) -> Result<i32> {
    a.checked_add(b).ok_or(Error::Overflow(what))
}
