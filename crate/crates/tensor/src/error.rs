use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but data has {len}", expected = shape.iter().product::<usize>())]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },

    #[error("{op}: axis {axis} mismatch, expected {expected} got {got}")]
    AxisMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: expected rank-{expected} input, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("tensor of shape {shape:?} is not a scalar")]
    NotScalar { shape: Vec<usize> },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("batchnorm2d in training mode needs at least 2 values per channel, got {got}")]
    BatchTooSmall { got: usize },

    #[error("optimizer state holds {expected} parameters, got {got}")]
    ParamCountMismatch { expected: usize, got: usize },
}
