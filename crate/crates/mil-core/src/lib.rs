//! Minimal dense numerical stack for desk-scale multiple-instance learning.
//!
//! Everything here is a pure function of its explicit inputs plus an explicit
//! random stream; there is no global mutable state. Backpropagation is written
//! by hand per layer and verified against central finite differences
//! (see [`grad_check`]).
//!
//! The element type is generic over [`Real`]: training runs in `f32`, while
//! gradient verification and oracle tests can instantiate the same layers in
//! `f64` for tighter tolerances.

mod error;
mod gradcheck;
mod layers;
mod loss;
mod optim;
mod real;
mod sparsemax;
mod tensor;

pub use error::{CoreError, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{
    max_pool2, max_pool2_backward, relu, relu_backward, sigmoid, sigmoid_derivative, tanh_backward,
    tanh_forward, Conv2d, ConvGrads, Dense, DenseGrads, Dropout, DropoutMask, SIGMOID_CLAMP,
};
pub use loss::{FocalLoss, PROB_EPS};
pub use optim::{OptimKind, Optimizer};
pub use real::{real, Real};
pub use sparsemax::{sparsemax, sparsemax_backward};
pub use tensor::Tensor;
