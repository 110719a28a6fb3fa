use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {left:?} vs {right:?} ({context})")]
    Shape {
        context: &'static str,
        left: alloc::vec::Vec<usize>,
        right: alloc::vec::Vec<usize>,
    },
    #[error("no pupil found: search box has no image gradient")]
    NoPupil,
    #[error("non-finite value in tensor #{node} produced by {op}")]
    NonFinite { node: usize, op: &'static str },
    #[error("checkpoint does not match model config: {0}")]
    ConfigMismatch(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
