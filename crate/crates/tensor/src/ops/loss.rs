use crate::element::Element;
use crate::error::Result;
use crate::ops::activation::sigmoid_scalar;
use crate::ops::ensure_same_shape;
use crate::tensor::Tensor;

impl<T: Element> Tensor<T> {
    /// Mean binary cross-entropy between `sigmoid(self)` and `target`, computed from logits
    /// as `max(x, 0) - x·t + ln(1 + e^{-|x|})`. The target receives no gradient.
    pub fn bce_with_logits(&self, target: &Tensor<T>) -> Result<Tensor<T>> {
        ensure_same_shape("bce_with_logits", self, target)?;
        let n = self.numel().max(1);
        let scale = T::one() / T::of(n as f64);
        let total: T = self
            .data()
            .iter()
            .zip(target.data())
            .map(|(&x, &t)| x.max(T::zero()) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        let (xd, td) = (self.data_rc(), target.data_rc());
        Ok(Tensor::from_op(vec![total * scale], vec![1], "bce_with_logits", &[self], move |g| {
            let k = g[0] * scale;
            vec![Some(xd.iter().zip(td.iter()).map(|(&x, &t)| k * (sigmoid_scalar(x) - t)).collect())]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_probability_form() {
        let logits = [-3.0, -0.2, 0.0, 1.7, 25.0];
        let target = [0.0, 1.0, 1.0, 0.0, 1.0];
        let x = Tensor::<f64>::from_vec(logits.to_vec(), &[5]).unwrap();
        let t = Tensor::from_vec(target.to_vec(), &[5]).unwrap();
        let expected: f64 = logits
            .iter()
            .zip(target)
            .map(|(&l, t)| {
                let p = 1.0 / (1.0 + (-l as f64).exp());
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 5.0;
        assert!((x.bce_with_logits(&t).unwrap().item().unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn large_logits_stay_finite() {
        let x = Tensor::<f32>::from_vec(vec![-500.0, 500.0], &[2]).unwrap();
        let t = Tensor::from_vec(vec![1.0, 0.0], &[2]).unwrap();
        let l = x.bce_with_logits(&t).unwrap().item().unwrap();
        assert!((l - 500.0).abs() < 1e-3);
    }
}
