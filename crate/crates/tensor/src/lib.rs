//! Minimal dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Only the operators needed by small convolutional encoder/decoders and
//! fully connected regressors are provided: dense layers, ReLU and sigmoid,
//! 2D/3D "same" convolutions, max pooling, nearest-neighbour upsampling,
//! channel concatenation and an MSE loss. [`optim`] holds Adam and
//! [`gradcheck`] a finite-difference verifier.
//!
//! ```
//! use gazefollow_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 1.0]);
//! ```

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
mod kernels;
pub mod optim;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tensor::Tensor;
