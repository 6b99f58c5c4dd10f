use std::collections::{HashMap, HashSet};

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Gradients of a scalar w.r.t. the leaf variables that contributed to it.
#[derive(Default)]
pub struct Gradients<T: Element> {
    by_leaf: HashMap<u64, Vec<T>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient for `leaf`, or `None` when it did not influence the output.
    pub fn get(&self, leaf: &Tensor<T>) -> Option<&[T]> {
        self.by_leaf.get(&leaf.id()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }
}

fn accumulate<T: Element>(slot: &mut Vec<T>, incoming: Vec<T>) {
    if slot.is_empty() {
        *slot = incoming;
    } else {
        for (s, g) in slot.iter_mut().zip(incoming) {
            *s += g;
        }
    }
}

/// Post-order of the history graph rooted at `root` (inputs before outputs).
fn topo_order<T: Element>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(gf) = &t.node.grad_fn {
            for input in gf.inputs.iter().filter(|i| i.tracks_grad()) {
                if !visited.contains(&input.id()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    order
}

impl<T: Element> Tensor<T> {
    /// Reverse-mode differentiation of a single-element tensor.
    pub fn backward(&self) -> Result<Gradients<T>> {
        if self.numel() != 1 {
            return Err(TensorError::Rank { op: "backward", expected: 0, shape: self.shape().to_vec() });
        }
        let mut out = Gradients::default();
        if !self.tracks_grad() {
            return Ok(out);
        }
        let order = topo_order(self);
        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);

        for t in order.iter().rev() {
            let Some(grad) = pending.remove(&t.id()) else { continue };
            if t.node.requires_grad {
                accumulate(out.by_leaf.entry(t.id()).or_default(), grad);
                continue;
            }
            let Some(gf) = &t.node.grad_fn else { continue };
            let input_grads = (gf.backward)(&grad);
            debug_assert_eq!(input_grads.len(), gf.inputs.len(), "op {} returned wrong arity", gf.op);
            for (input, g) in gf.inputs.iter().zip(input_grads) {
                if let Some(g) = g {
                    if input.tracks_grad() {
                        debug_assert_eq!(g.len(), input.numel(), "op {} gradient size", gf.op);
                        accumulate(pending.entry(input.id()).or_default(), g);
                    }
                }
            }
        }
        Ok(out)
    }
}
