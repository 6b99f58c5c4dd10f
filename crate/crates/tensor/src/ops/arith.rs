//! Element-wise arithmetic and reductions.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::ops::wants;
use crate::profile;
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    /// Right operand is a single element.
    RhsScalar,
    /// Left operand is a single element.
    LhsScalar,
}

fn broadcast_kind<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.numel() == 1 {
        Ok(Broadcast::RhsScalar)
    } else if a.numel() == 1 {
        Ok(Broadcast::LhsScalar)
    } else {
        Err(TensorError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() })
    }
}

/// Reduces a full-size gradient back onto the operand's shape.
fn reduce_for<T: Element>(kind: Broadcast, lhs: bool, g: Vec<T>) -> Vec<T> {
    let collapse = matches!((kind, lhs), (Broadcast::RhsScalar, false) | (Broadcast::LhsScalar, true));
    if collapse {
        vec![g.into_iter().sum()]
    } else {
        g
    }
}

fn binary<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: fn(T, T) -> T,
    // partials (d/da, d/db) at (a, b)
    df: fn(T, T) -> (T, T),
) -> Result<Tensor<T>> {
    let kind = broadcast_kind(op, a, b)?;
    let (ad, bd) = (a.data_rc(), b.data_rc());
    let pair = move |i: usize| -> (T, T) {
        match kind {
            Broadcast::Same => (ad[i], bd[i]),
            Broadcast::RhsScalar => (ad[i], bd[0]),
            Broadcast::LhsScalar => (ad[0], bd[i]),
        }
    };
    let shape = match kind {
        Broadcast::LhsScalar => b.shape().to_vec(),
        _ => a.shape().to_vec(),
    };
    let n: usize = shape.iter().product();
    let out: Vec<T> = (0..n).map(|i| {
        let (x, y) = pair(i);
        f(x, y)
    }).collect();
    profile::record(n);
    let (wa, wb) = (wants(a), wants(b));
    Ok(Tensor::from_op(out, shape, op, &[a, b], move |g| {
        let mut ga = wa.then(|| Vec::with_capacity(g.len()));
        let mut gb = wb.then(|| Vec::with_capacity(g.len()));
        for (i, &gi) in g.iter().enumerate() {
            let (x, y) = pair(i);
            let (dx, dy) = df(x, y);
            if let Some(ga) = ga.as_mut() {
                ga.push(gi * dx);
            }
            if let Some(gb) = gb.as_mut() {
                gb.push(gi * dy);
            }
        }
        vec![ga.map(|v| reduce_for(kind, true, v)), gb.map(|v| reduce_for(kind, false, v))]
    }))
}

fn unary<T: Element>(op: &'static str, a: &Tensor<T>, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Tensor<T> {
    let ad = a.data_rc();
    let out: Vec<T> = ad.iter().map(|&x| f(x)).collect();
    profile::record(out.len());
    let od = std::rc::Rc::new(out.clone());
    Tensor::from_op(out, a.shape().to_vec(), op, &[a], move |g| {
        vec![Some(g.iter().zip(ad.iter()).zip(od.iter()).map(|((&gi, &x), &y)| gi * df(x, y)).collect())]
    })
}

impl<T: Element> Tensor<T> {
    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary("add", self, rhs, |x, y| x + y, |_, _| (T::one(), T::one()))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary("sub", self, rhs, |x, y| x - y, |_, _| (T::one(), -T::one()))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary("mul", self, rhs, |x, y| x * y, |x, y| (y, x))
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary("div", self, rhs, |x, y| x / y, |x, y| (T::one() / y, -x / (y * y)))
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        unary("add_scalar", self, move |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&self, c: T) -> Tensor<T> {
        unary("mul_scalar", self, move |x| x * c, move |_, _| c)
    }

    /// `c - self`
    pub fn rsub_scalar(&self, c: T) -> Tensor<T> {
        unary("rsub_scalar", self, move |x| c - x, |_, _| -T::one())
    }

    pub fn square(&self) -> Tensor<T> {
        unary("square", self, |x| x * x, |x, _| x + x)
    }

    pub fn sum(&self) -> Tensor<T> {
        let n = self.numel();
        let total: T = self.data().iter().copied().sum();
        profile::record(n);
        Tensor::from_op(vec![total], vec![1], "sum", &[self], move |g| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum().mul_scalar(T::one() / T::of(n as f64))
    }

    /// Sum over every axis except the leading batch axis; shape `[N]`.
    pub fn sum_per_sample(&self) -> Result<Tensor<T>> {
        let batch = *self.shape().first().ok_or_else(|| TensorError::Rank {
            op: "sum_per_sample",
            expected: 1,
            shape: vec![],
        })?;
        let per = if batch == 0 { 0 } else { self.numel() / batch };
        let out: Vec<T> = self.data().chunks(per.max(1)).take(batch).map(|c| c.iter().copied().sum()).collect();
        profile::record(self.numel());
        Ok(Tensor::from_op(out, vec![batch], "sum_per_sample", &[self], move |g| {
            let mut d = Vec::with_capacity(batch * per);
            for &gi in g {
                d.extend(std::iter::repeat_n(gi, per));
            }
            vec![Some(d)]
        }))
    }
}
