use crate::element::Element;
use crate::error::{invalid, Result};
use crate::ops::wants;
use crate::profile;
use crate::tensor::Tensor;

fn pointwise<T: Element>(op: &'static str, x: &Tensor<T>, f: fn(T) -> T, df: fn(T, T) -> T) -> Tensor<T> {
    let xd = x.data_rc();
    let out: Vec<T> = xd.iter().map(|&v| f(v)).collect();
    profile::record(out.len());
    let yd = std::rc::Rc::new(out.clone());
    Tensor::from_op(out, x.shape().to_vec(), op, &[x], move |g| {
        vec![Some(g.iter().zip(xd.iter().zip(yd.iter())).map(|(&gi, (&xi, &yi))| gi * df(xi, yi)).collect())]
    })
}

pub(crate) fn sigmoid_scalar<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Element> Tensor<T> {
    pub fn relu(&self) -> Tensor<T> {
        pointwise("relu", self, |v| v.max(T::zero()), |x, _| if x > T::zero() { T::one() } else { T::zero() })
    }

    /// `min(max(x, 0), 6)`
    pub fn relu6(&self) -> Tensor<T> {
        pointwise(
            "relu6",
            self,
            |v| v.max(T::zero()).min(T::of(6.0)),
            |x, _| if x > T::zero() && x < T::of(6.0) { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        pointwise("sigmoid", self, sigmoid_scalar, |_, y| y * (T::one() - y))
    }

    /// Parametric ReLU with one slope shared by every entry: `x` if `x >= 0`, else `slope * x`.
    pub fn prelu(&self, slope: &Tensor<T>) -> Result<Tensor<T>> {
        if slope.numel() != 1 {
            return Err(invalid("prelu", format!("expected a single shared slope, got shape {:?}", slope.shape())));
        }
        let a = slope.data()[0];
        let xd = self.data_rc();
        let out: Vec<T> = xd.iter().map(|&v| if v >= T::zero() { v } else { a * v }).collect();
        profile::record(out.len());
        let (wx, wa) = (wants(self), wants(slope));
        Ok(Tensor::from_op(out, self.shape().to_vec(), "prelu", &[self, slope], move |g| {
            let gx = wx.then(|| {
                g.iter().zip(xd.iter()).map(|(&gi, &v)| if v >= T::zero() { gi } else { gi * a }).collect()
            });
            let ga = wa.then(|| {
                vec![g.iter().zip(xd.iter()).filter(|(_, &v)| v < T::zero()).map(|(&gi, &v)| gi * v).sum()]
            });
            vec![gx, ga]
        }))
    }

    /// Inverted dropout: zeroes each entry with probability `p` and rescales survivors by `1/(1-p)`.
    pub fn dropout<R: rand::Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("dropout", format!("probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.numel()).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect();
        let out: Vec<T> = self.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Ok(Tensor::from_op(out, self.shape().to_vec(), "dropout", &[self], move |g| {
            vec![Some(g.iter().zip(&mask).map(|(&gi, &m)| gi * m).collect())]
        }))
    }
}
