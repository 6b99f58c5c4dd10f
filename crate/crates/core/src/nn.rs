//! Parameter containers and the small layer vocabulary the network is built from.

use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use seanet_tensor::{Conv2dOptions, Element, Tensor};

use crate::error::{Error, Result};

/// Trainable tensor. The optimizer swaps in a fresh leaf after every update.
pub struct Param<T: Element> {
    shape: Vec<usize>,
    value: RefCell<Tensor<T>>,
}

impl<T: Element> Param<T> {
    pub fn new(data: Vec<T>, shape: &[usize]) -> Self {
        let value = Tensor::variable(data, shape).expect("parameter data matches its shape");
        Self { shape: shape.to_vec(), value: RefCell::new(value) }
    }

    pub fn tensor(&self) -> Tensor<T> {
        self.value.borrow().clone()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.value.borrow().to_vec()
    }

    pub fn set(&self, data: Vec<T>) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::Shape(format!("parameter of shape {:?} cannot take {} values", self.shape, data.len())));
        }
        *self.value.borrow_mut() = Tensor::variable(data, &self.shape)?;
        Ok(())
    }
}

/// Non-trainable state such as running normalization statistics.
pub struct Buffer<T: Element> {
    shape: Vec<usize>,
    value: RefCell<Vec<T>>,
}

impl<T: Element> Buffer<T> {
    pub fn new(data: Vec<T>, shape: &[usize]) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Self { shape: shape.to_vec(), value: RefCell::new(data) }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.value.borrow().clone()
    }

    pub fn set(&self, data: Vec<T>) -> Result<()> {
        if data.len() != self.shape.iter().product::<usize>() {
            return Err(Error::Shape(format!("buffer of shape {:?} cannot take {} values", self.shape, data.len())));
        }
        *self.value.borrow_mut() = data;
        Ok(())
    }
}

pub enum Slot<'a, T: Element> {
    Param(&'a Param<T>),
    Buffer(&'a Buffer<T>),
}

/// Anything owning parameters or buffers, addressable by dotted names.
pub trait Module<T: Element> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn named_params<'a, T: Element>(m: &'a (impl Module<T> + ?Sized), prefix: &str) -> Vec<(String, &'a Param<T>)> {
    let mut out = Vec::new();
    m.visit(prefix, &mut |name, slot| {
        if let Slot::Param(p) = slot {
            out.push((name, p));
        }
    });
    out
}

pub fn named_buffers<'a, T: Element>(m: &'a (impl Module<T> + ?Sized), prefix: &str) -> Vec<(String, &'a Buffer<T>)> {
    let mut out = Vec::new();
    m.visit(prefix, &mut |name, slot| {
        if let Slot::Buffer(b) = slot {
            out.push((name, b));
        }
    });
    out
}

pub fn param_count<T: Element>(m: &(impl Module<T> + ?Sized)) -> usize {
    named_params(m, "").iter().map(|(_, p)| p.numel()).sum()
}

impl<T: Element, M: Module<T>> Module<T> for Option<M> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        if let Some(m) = self {
            m.visit(prefix, f);
        }
    }
}

/// Forward-pass context: mode switch plus the stream that drives dropout.
pub struct Ctx {
    training: bool,
    rng: RefCell<ChaCha8Rng>,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Self { training: true, rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn eval() -> Self {
        Self { training: false, rng: RefCell::new(ChaCha8Rng::seed_from_u64(0)) }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn with_rng<R>(&self, f: impl FnOnce(&mut ChaCha8Rng) -> R) -> R {
        f(&mut self.rng.borrow_mut())
    }
}

/// Kaiming-normal initializer (`std = sqrt(2 / fan_in)`), seeded.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn kaiming<T: Element>(&mut self, shape: &[usize], fan_in: usize) -> Param<T> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..shape.iter().product()).map(|_| T::of(normal.sample(&mut self.rng))).collect();
        Param::new(data, shape)
    }

    pub fn constant<T: Element>(&mut self, shape: &[usize], value: f64) -> Param<T> {
        Param::new(vec![T::of(value); shape.iter().product()], shape)
    }
}

pub struct Conv2d<T: Element> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub opts: Conv2dOptions,
}

impl<T: Element> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(init: &mut Init, cin: usize, cout: usize, k: usize, stride: usize, groups: usize, bias: bool) -> Self {
        Self::dilated(init, cin, cout, k, stride, 1, groups, bias)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn dilated(init: &mut Init, cin: usize, cout: usize, k: usize, stride: usize, dilation: usize, groups: usize, bias: bool) -> Self {
        let fan_in = cin / groups * k * k;
        Self {
            weight: init.kaiming(&[cout, cin / groups, k, k], fan_in),
            bias: bias.then(|| init.constant(&[cout], 0.0)),
            opts: Conv2dOptions::new(stride, dilation * (k / 2), dilation, groups),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1] * self.opts.groups
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let bias = self.bias.as_ref().map(Param::tensor);
        Ok(x.conv2d(&self.weight.tensor(), bias.as_ref(), self.opts)?)
    }
}

impl<T: Element> Module<T> for Conv2d<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        f(join(prefix, "weight"), Slot::Param(&self.weight));
        if let Some(b) = &self.bias {
            f(join(prefix, "bias"), Slot::Param(b));
        }
    }
}

pub struct BatchNorm2d<T: Element> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

impl<T: Element> BatchNorm2d<T> {
    pub fn new(init: &mut Init, c: usize) -> Self {
        Self {
            weight: init.constant(&[c], 1.0),
            bias: init.constant(&[c], 0.0),
            running_mean: Buffer::new(vec![T::zero(); c], &[c]),
            running_var: Buffer::new(vec![T::one(); c], &[c]),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        let (gamma, beta) = (self.weight.tensor(), self.bias.tensor());
        if !ctx.is_training() {
            let (mean, var) = (self.running_mean.value.borrow(), self.running_var.value.borrow());
            return Ok(x.batch_norm_eval(&gamma, &beta, &mean, &var, T::of(BN_EPS))?);
        }
        let (y, stats) = x.batch_norm_train(&gamma, &beta, T::of(BN_EPS))?;
        let m = T::of(BN_MOMENTUM);
        let blend = |buf: &Buffer<T>, batch: &[T]| {
            for (r, &b) in buf.value.borrow_mut().iter_mut().zip(batch) {
                *r = (T::one() - m) * *r + m * b;
            }
        };
        blend(&self.running_mean, &stats.mean);
        blend(&self.running_var, &stats.var_unbiased);
        Ok(y)
    }
}

impl<T: Element> Module<T> for BatchNorm2d<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        f(join(prefix, "weight"), Slot::Param(&self.weight));
        f(join(prefix, "bias"), Slot::Param(&self.bias));
        f(join(prefix, "running_mean"), Slot::Buffer(&self.running_mean));
        f(join(prefix, "running_var"), Slot::Buffer(&self.running_var));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    None,
    Relu,
    Relu6,
}

impl Act {
    pub fn apply<T: Element>(self, x: Tensor<T>) -> Tensor<T> {
        match self {
            Act::None => x,
            Act::Relu => x.relu(),
            Act::Relu6 => x.relu6(),
        }
    }
}

/// Convolution → batch norm → activation; children are named `0` and `1`.
pub struct ConvBn<T: Element> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    pub act: Act,
}

impl<T: Element> ConvBn<T> {
    pub fn new(init: &mut Init, cin: usize, cout: usize, k: usize, stride: usize, groups: usize, act: Act) -> Self {
        Self { conv: Conv2d::new(init, cin, cout, k, stride, groups, false), bn: BatchNorm2d::new(init, cout), act }
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        let y = self.bn.forward(&self.conv.forward(x)?, ctx)?;
        Ok(self.act.apply(y))
    }
}

impl<T: Element> Module<T> for ConvBn<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.conv.visit(&join(prefix, "0"), f);
        self.bn.visit(&join(prefix, "1"), f);
    }
}

/// 3×3 depthwise separable convolution: depthwise → BN → ReLU → pointwise → BN → ReLU.
pub struct DsConv<T: Element> {
    pub depthwise: ConvBn<T>,
    pub pointwise: ConvBn<T>,
}

impl<T: Element> DsConv<T> {
    pub fn new(init: &mut Init, cin: usize, cout: usize) -> Self {
        Self {
            depthwise: ConvBn::new(init, cin, cin, 3, 1, cin, Act::Relu),
            pointwise: ConvBn::new(init, cin, cout, 1, 1, 1, Act::Relu),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.depthwise.conv.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.pointwise.conv.out_channels()
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        self.pointwise.forward(&self.depthwise.forward(x, ctx)?, ctx)
    }
}

impl<T: Element> Module<T> for DsConv<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.depthwise.visit(&join(prefix, "dw"), f);
        self.pointwise.visit(&join(prefix, "pw"), f);
    }
}

/// Fails with a message naming the expected `(C, H, W)` when `x` does not match.
pub fn expect_chw<T: Element>(what: &str, x: &Tensor<T>, c: usize, h: usize, w: usize) -> Result<()> {
    let [_, xc, xh, xw] = x.dims4()?;
    if (xc, xh, xw) != (c, h, w) {
        return Err(Error::Shape(format!("{what}: expected (N, {c}, {h}, {w}), got {:?}", x.shape())));
    }
    Ok(())
}
