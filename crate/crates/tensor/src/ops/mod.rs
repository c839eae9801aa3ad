//! Operator library. Forward passes validate shapes and produce fresh
//! tensors; each constructs the matching [`BackwardOp`].

mod act;
mod conv;
mod elementwise;
mod matmul;
mod norm;

pub use act::*;
pub use conv::*;
pub use matmul::*;
pub use norm::*;

use crate::{Result, Scalar, Tensor, TensorError};

pub(crate) fn check_same_shape<S: Scalar>(
    op: &'static str,
    a: &Tensor<S>,
    b: &Tensor<S>,
) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::Invalid {
            op,
            msg: format!("shape mismatch: {:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}
