use alloc::string::String;
use alloc::vec::Vec;

use crate::scene::Category;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("parameter `{param}` has no gradient")]
    MissingGrad { param: String },
    #[error("non-finite value: {context}")]
    NonFinite { context: String },
    #[error("no decoder registered for category {0}")]
    Routing(Category),
    #[error("missing category {0} in weighted score")]
    MissingCategory(Category),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
