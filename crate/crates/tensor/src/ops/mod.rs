pub mod activation;
pub mod arith;
pub mod conv;
pub mod layout;
pub mod linalg;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod resize;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub(crate) fn ensure_same_shape<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() });
    }
    Ok(())
}

pub(crate) fn ensure_rank<T: Element>(op: &'static str, t: &Tensor<T>, rank: usize) -> Result<()> {
    if t.shape().len() != rank {
        return Err(TensorError::Rank { op, expected: rank, shape: t.shape().to_vec() });
    }
    Ok(())
}

/// Gradient slot for an input: `Some` only when that input participates in autodiff.
pub(crate) fn wants<T: Element>(t: &Tensor<T>) -> bool {
    t.tracks_grad()
}
