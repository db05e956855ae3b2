use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid shift: |sigma|_1 = {0} exceeds 1")]
    InvalidShift(i64),
    #[error("empty set: {0}")]
    EmptySet(&'static str),
    #[error("graph is disconnected: {0:?} and {1:?} lie in different components")]
    Disconnected(Vec<i32>, Vec<i32>),
    #[error("vertex {0:?} is closed")]
    ClosedVertex(Vec<i32>),
    #[error("vertex {0:?} lies outside the region")]
    OutsideRegion(Vec<i32>),
    #[error("size cap exceeded: {what} has {size} elements, cap is {cap}")]
    CapExceeded { what: &'static str, size: usize, cap: usize },
    #[error("vertex {0:?} has no path to the Dirichlet boundary")]
    NoPathToBoundary(Vec<i32>),
    #[error("function is not strictly positive on the inner ball (min {0})")]
    NonPositive(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
