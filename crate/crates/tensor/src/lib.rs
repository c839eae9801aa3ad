//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: contiguous row-major storage, a tape
//! rebuilt on every forward pass, and exactly the layer primitives a
//! convolutional encoder/decoder needs (convolutions, batched matmul,
//! softmax, layer/batch normalization, PReLU) plus an Adam optimizer and a
//! finite-difference gradient checker.
//!
//! Tensors are immutable after creation and cheap to clone (shared storage).
//! Every operation uses a fixed summation order, so results are reproducible
//! bit-for-bit across runs. Scalar type is generic over [`Scalar`]
//! (`f32`/`f64`); the concrete aliases below pin the 64-bit variant used
//! throughout training so gradient checks have headroom.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use num_traits::{Float, FromPrimitive, ToPrimitive};

mod error;
mod graph;
pub mod gradcheck;
pub mod init;
pub mod ops;
pub mod optim;

pub use error::TensorError;
pub use gradcheck::grad_check;
pub use graph::{backward, BackwardOp};
pub use optim::Adam;

pub type Result<T> = std::result::Result<T, TensorError>;

/// Floating-point scalar usable as tensor element.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from `f64` (constants, hyperparameters).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Default scalar for training and evaluation.
pub type TensorF64 = Tensor<f64>;
pub type TensorF32 = Tensor<f32>;

static NEXT_SEQ: AtomicU64 = AtomicU64::new(1);

pub(crate) struct Node<S: Scalar> {
    /// Global creation counter; ancestors always have smaller ids, so sorting
    /// by `seq` recovers execution order for the reverse sweep.
    seq: u64,
    shape: Vec<usize>,
    data: Vec<S>,
    /// Leaf flag: gradients are stored here after `backward`.
    requires_grad: bool,
    /// True when a gradient must flow through this node.
    track: bool,
    grad: Mutex<Option<Vec<S>>>,
    op: Option<Box<dyn BackwardOp<S>>>,
}

/// Handle to an immutable n-dimensional array, optionally recorded on the
/// autodiff tape.
pub struct Tensor<S: Scalar>(Arc<Node<S>>);

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<S: Scalar> Tensor<S> {
    /// Plain leaf without gradient tracking.
    pub fn new(shape: &[usize], data: Vec<S>) -> Result<Self> {
        Self::leaf(shape, data, false)
    }

    /// Leaf tensor; `requires_grad` marks it as a differentiation target.
    pub fn leaf(shape: &[usize], data: Vec<S>, requires_grad: bool) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Tensor(Arc::new(Node {
            seq: NEXT_SEQ.fetch_add(1, Ordering::Relaxed),
            shape: shape.to_vec(),
            data,
            requires_grad,
            track: requires_grad,
            grad: Mutex::new(None),
            op: None,
        })))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![S::zero(); numel]).expect("zeros")
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel]).expect("full")
    }

    pub fn scalar(value: S) -> Self {
        Self::new(&[1], vec![value]).expect("scalar")
    }

    /// Result of an operation; `op` captures the inputs needed for the
    /// reverse sweep. The node only joins the tape when a parent is tracked.
    pub fn from_op(shape: &[usize], data: Vec<S>, op: Box<dyn BackwardOp<S>>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "op output shape/data mismatch");
        let track = op.parents().iter().any(|p| p.track());
        Tensor(Arc::new(Node {
            seq: NEXT_SEQ.fetch_add(1, Ordering::Relaxed),
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            track,
            grad: Mutex::new(None),
            op: if track { Some(op) } else { None },
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.0.data
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// True when a gradient must flow through this node (custom ops use this
    /// to skip gradient buffers for constant inputs).
    pub fn track(&self) -> bool {
        self.0.track
    }

    pub(crate) fn seq(&self) -> u64 {
        self.0.seq
    }

    pub(crate) fn op(&self) -> Option<&dyn BackwardOp<S>> {
        self.0.op.as_deref()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: self.shape().to_vec(),
            });
        }
        Ok(self.0.data[0])
    }

    /// Gradient accumulated by the last `backward` call, if any.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.0.grad.lock().unwrap().clone()
    }

    /// Adds `g` into the stored gradient buffer (creating it when absent).
    pub fn accumulate_grad(&self, g: &[S]) {
        assert_eq!(g.len(), self.numel(), "gradient length mismatch");
        let mut slot = self.0.grad.lock().unwrap();
        match slot.as_mut() {
            Some(buf) => {
                for (b, &v) in buf.iter_mut().zip(g) {
                    *b = *b + v;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    pub fn clear_grad(&self) {
        *self.0.grad.lock().unwrap() = None;
    }

    /// Identical values in a fresh untracked leaf.
    pub fn detach(&self) -> Self {
        Self::new(self.shape(), self.data().to_vec()).expect("detach")
    }
}

/// Panics in debug builds when an op emits NaN/Inf from finite inputs.
pub(crate) fn debug_check_finite<S: Scalar>(op: &str, data: &[S]) {
    if cfg!(debug_assertions) {
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "{op} produced a non-finite value"
        );
    }
}
