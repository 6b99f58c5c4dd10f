//! Reverse-mode autodiff over dense NCHW tensors.
//!
//! The op set is exactly what a lightweight encoder-decoder saliency network needs:
//! grouped/dilated convolution, per-sample dynamic depthwise convolution, batch
//! normalization, pooling, bilinear resampling, batched matrix products, softmax and
//! the usual element-wise arithmetic. All ops are generic over [`Element`] so the same
//! graph runs in `f32` for training and `f64` for finite-difference checks.

mod autograd;
mod element;
mod error;
pub mod ops;
pub mod profile;
mod tensor;

pub use autograd::Gradients;
pub use element::Element;
pub use error::{Result, TensorError};
pub use ops::conv::Conv2dOptions;
pub use ops::resize::resize_bilinear_plane;
pub use tensor::{is_grad_enabled, no_grad, Tensor};
