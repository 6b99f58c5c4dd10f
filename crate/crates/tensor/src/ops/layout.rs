use crate::element::Element;
use crate::error::{invalid, Result, TensorError};
use crate::tensor::{numel, Tensor};

fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Element> Tensor<T> {
    /// Same buffer viewed with a different shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() {
            return Err(TensorError::DataLength { expected: numel(shape), actual: self.numel(), shape: shape.to_vec() });
        }
        Ok(Tensor::from_op(
            self.data_rc(),
            shape.to_vec(),
            "reshape",
            &[self],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn cat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts.first().ok_or_else(|| invalid("cat", "no inputs"))?;
        let rank = first.shape().len();
        if axis >= rank {
            return Err(TensorError::Rank { op: "cat", expected: axis + 1, shape: first.shape().to_vec() });
        }
        for p in parts {
            let same_rank = p.shape().len() == rank;
            let others_match = same_rank
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !others_match {
                return Err(TensorError::ShapeMismatch { op: "cat", lhs: first.shape().to_vec(), rhs: p.shape().to_vec() });
            }
        }
        let (outer, _, inner) = split_at_axis(first.shape(), axis);
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
        let total_width: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(outer * total_width);
        for o in 0..outer {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        let wanted: Vec<bool> = parts.iter().map(|p| p.tracks_grad()).collect();
        Ok(Tensor::from_op(out, shape, "cat", parts, move |g| {
            let mut grads: Vec<Option<Vec<T>>> =
                wanted.iter().zip(&widths).map(|(&w, &width)| w.then(|| Vec::with_capacity(outer * width))).collect();
            for o in 0..outer {
                let mut offset = o * total_width;
                for (slot, &w) in grads.iter_mut().zip(&widths) {
                    if let Some(v) = slot {
                        v.extend_from_slice(&g[offset..offset + w]);
                    }
                    offset += w;
                }
            }
            grads
        }))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(invalid("narrow", format!("range {start}..{} out of bounds for axis {axis} of {shape:?}", start + len)));
        }
        let (outer, width, inner) = split_at_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * width + start) * inner;
            out.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let mut new_shape = shape.clone();
        new_shape[axis] = len;
        let full = self.numel();
        Ok(Tensor::from_op(out, new_shape, "narrow", &[self], move |g| {
            let mut d = vec![T::zero(); full];
            for o in 0..outer {
                let base = (o * width + start) * inner;
                d[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(d)]
        }))
    }
}
