use super::Shape;
use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("tensor of shape {shape} cannot hold {len} values")]
    DataLength { shape: Shape, len: usize },
    #[error("backward needs a 1x1 loss, got {0}")]
    NotScalarLoss(Shape),
    #[error("{0}")]
    Invalid(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
}
