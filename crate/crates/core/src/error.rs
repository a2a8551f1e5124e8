use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("construction failed: {0}")]
    Construction(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
