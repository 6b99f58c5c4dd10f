use std::cell::Cell;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::element::Element;
use crate::error::{Result, TensorError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Gradient of one op output w.r.t. each of its inputs, in input order.
/// `None` for inputs that do not require gradients.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>>>;

pub(crate) struct GradFn<T: Element> {
    pub(crate) op: &'static str,
    pub(crate) inputs: Vec<Tensor<T>>,
    pub(crate) backward: BackwardFn<T>,
}

pub(crate) struct Node<T: Element> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Rc<Vec<T>>,
    pub(crate) requires_grad: bool,
    pub(crate) grad_fn: Option<GradFn<T>>,
}

/// Dense row-major tensor with an optional autodiff history.
///
/// Cloning is cheap: the buffer and graph node are reference counted.
#[derive(Clone)]
pub struct Tensor<T: Element> {
    pub(crate) node: Rc<Node<T>>,
}

/// Runs `f` without recording any autodiff history.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn from_parts(data: Rc<Vec<T>>, shape: Vec<usize>, requires_grad: bool, grad_fn: Option<GradFn<T>>) -> Self {
        debug_assert_eq!(data.len(), numel(&shape));
        Self {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad_fn,
            }),
        }
    }

    /// Constant tensor (never receives gradients).
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(TensorError::DataLength { expected: numel(shape), actual: data.len(), shape: shape.to_vec() });
        }
        Ok(Self::from_parts(Rc::new(data), shape.to_vec(), false, None))
    }

    /// Leaf tensor that accumulates gradients during [`Tensor::backward`].
    pub fn variable(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Ok(Self::from_vec(data, shape)?.requires_grad())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_parts(Rc::new(vec![value; numel(shape)]), shape.to_vec(), false, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::full(&[1], value)
    }

    /// Same buffer as a fresh leaf that requires grad.
    pub fn requires_grad(self) -> Self {
        Self::from_parts(self.node.data.clone(), self.node.shape.clone(), true, None)
    }

    /// Same buffer with the history dropped.
    pub fn detach(&self) -> Self {
        Self::from_parts(self.node.data.clone(), self.node.shape.clone(), false, None)
    }

    /// Builds the output of an op. History is only kept when grads are enabled
    /// and at least one input takes part in differentiation.
    pub(crate) fn from_op(
        data: impl Into<Rc<Vec<T>>>,
        shape: Vec<usize>,
        op: &'static str,
        inputs: &[&Tensor<T>],
        backward: impl Fn(&[T]) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Self {
        let tracked = is_grad_enabled() && inputs.iter().any(|t| t.tracks_grad());
        let grad_fn = tracked.then(|| GradFn {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        });
        Self::from_parts(data.into(), shape, false, grad_fn)
    }

    /// Whether gradients flow into this tensor (leaf variable or op with history).
    pub fn tracks_grad(&self) -> bool {
        self.node.requires_grad || self.node.grad_fn.is_some()
    }

    pub fn is_leaf_variable(&self) -> bool {
        self.node.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape() {
            &[n, c, h, w] => Ok([n, c, h, w]),
            other => Err(TensorError::Rank { op: "dims4", expected: 4, shape: other.to_vec() }),
        }
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<T>> {
        self.node.data.clone()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.node.data.as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(TensorError::Rank { op: "item", expected: 0, shape: self.shape().to_vec() });
        }
        Ok(self.node.data[0])
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.node.grad_fn.as_ref().map(|g| g.op)
    }

    /// Element type conversion; the result carries no history.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self.data().iter().map(|v| U::of(v.as_f64())).collect();
        Tensor::from_parts(Rc::new(data), self.shape().to_vec(), false, None)
    }

    pub fn all_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<T> {
        crate::ops::ensure_same_shape("max_abs_diff", self, other)?;
        Ok(self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<_> = self.data().iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("dtype", &T::DTYPE)
            .field("grad", &self.tracks_grad())
            .field("data", &preview)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length() {
        assert!(Tensor::<f32>::from_vec(vec![1.0; 5], &[2, 3]).is_err());
    }

    #[test]
    fn no_grad_scope_restores_flag() {
        assert!(is_grad_enabled());
        no_grad(|| assert!(!is_grad_enabled()));
        assert!(is_grad_enabled());
    }

    #[test]
    fn cast_round_trips_values() {
        let t = Tensor::<f64>::from_vec(vec![0.5, -1.25], &[2]).unwrap();
        assert_eq!(t.cast::<f32>().data(), &[0.5f32, -1.25]);
    }
}
