use crate::element::Element;
use crate::error::{invalid, Result, TensorError};
use crate::ops::{ensure_rank, wants};
use crate::profile;
use crate::tensor::Tensor;

/// Strides of `op(X)` for a row-major stored matrix with `cols` columns.
fn op_strides(transposed: bool, cols: usize) -> (isize, isize) {
    if transposed {
        (1, cols as isize)
    } else {
        (cols as isize, 1)
    }
}

fn swap((a, b): (isize, isize)) -> (isize, isize) {
    (b, a)
}

impl<T: Element> Tensor<T> {
    /// Batched matrix product `op(self) · op(rhs)` over `(B, rows, cols)` tensors,
    /// where `op` transposes when the matching flag is set. Either operand may have
    /// batch size 1 and is then shared across the batch.
    pub fn bmm(&self, rhs: &Tensor<T>, trans_lhs: bool, trans_rhs: bool) -> Result<Tensor<T>> {
        ensure_rank("bmm", self, 3)?;
        ensure_rank("bmm", rhs, 3)?;
        let (ab, ar, ac) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (bb, br, bc) = (rhs.shape()[0], rhs.shape()[1], rhs.shape()[2]);
        let (m, k) = if trans_lhs { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if trans_rhs { (bc, br) } else { (br, bc) };
        let batch = ab.max(bb);
        if k != k2 || (ab != batch && ab != 1) || (bb != batch && bb != 1) {
            return Err(TensorError::ShapeMismatch { op: "bmm", lhs: self.shape().to_vec(), rhs: rhs.shape().to_vec() });
        }
        if batch == 0 {
            return Err(invalid("bmm", "empty batch"));
        }
        let (a_len, b_len, c_len) = (ar * ac, br * bc, m * n);
        let a_off = move |i: usize| if ab == 1 { 0 } else { i * a_len };
        let b_off = move |i: usize| if bb == 1 { 0 } else { i * b_len };
        let sa = op_strides(trans_lhs, ac);
        let sb = op_strides(trans_rhs, bc);
        let sc = (n as isize, 1);

        let mut out = vec![T::zero(); batch * c_len];
        let (ad, bd) = (self.data_rc(), rhs.data_rc());
        for i in 0..batch {
            T::gemm(m, k, n, T::one(), &ad[a_off(i)..a_off(i) + a_len], sa, &bd[b_off(i)..b_off(i) + b_len], sb, T::zero(), &mut out[i * c_len..(i + 1) * c_len], sc);
        }
        profile::record(batch * m * n * k);

        let (wa, wb) = (wants(self), wants(rhs));
        Ok(Tensor::from_op(out, vec![batch, m, n], "bmm", &[self, rhs], move |g| {
            let mut da = wa.then(|| vec![T::zero(); ab * a_len]);
            let mut db = wb.then(|| vec![T::zero(); bb * b_len]);
            for i in 0..batch {
                let gi = &g[i * c_len..(i + 1) * c_len];
                let (a, b) = (&ad[a_off(i)..a_off(i) + a_len], &bd[b_off(i)..b_off(i) + b_len]);
                if let Some(da) = da.as_mut() {
                    // d op(A) = dC · op(B)ᵀ, written through op's strides into storage.
                    T::gemm(m, n, k, T::one(), gi, sc, b, swap(sb), T::one(), &mut da[a_off(i)..a_off(i) + a_len], sa);
                }
                if let Some(db) = db.as_mut() {
                    // d op(B) = op(A)ᵀ · dC
                    T::gemm(k, m, n, T::one(), a, swap(sa), gi, sc, T::one(), &mut db[b_off(i)..b_off(i) + b_len], sb);
                }
            }
            vec![da, db]
        }))
    }

    /// Softmax along `axis`, numerically stabilised by the running maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Rank { op: "softmax", expected: axis + 1, shape });
        }
        let outer: usize = shape[..axis].iter().product();
        let dim = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for j in 0..inner {
                let idx = |d: usize| (o * dim + d) * inner + j;
                let max = (0..dim).map(|d| x[idx(d)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for d in 0..dim {
                    let e = (x[idx(d)] - max).exp();
                    out[idx(d)] = e;
                    total += e;
                }
                for d in 0..dim {
                    out[idx(d)] /= total;
                }
            }
        }
        profile::record(out.len());
        let y = std::rc::Rc::new(out.clone());
        Ok(Tensor::from_op(out, shape, "softmax", &[self], move |g| {
            let mut dx = vec![T::zero(); g.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let idx = |d: usize| (o * dim + d) * inner + j;
                    let dot: T = (0..dim).map(|d| g[idx(d)] * y[idx(d)]).sum();
                    for d in 0..dim {
                        dx[idx(d)] = y[idx(d)] * (g[idx(d)] - dot);
                    }
                }
            }
            vec![Some(dx)]
        }))
    }
}
