//! Minimal reverse-mode automatic differentiation over dense `f64`
//! tensors.
//!
//! A [`Graph`] records every operation as it is evaluated. Calling
//! [`Graph::backward`] on a scalar node walks the tape once in reverse and
//! returns a [`Gradients`] map. Trainable tensors live in a
//! [`ParamStore`]; [`adam_step`] updates them in place.
//!
//! ```
//! use profiti_autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let p = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
//! let sq = g.mul(p, p).unwrap();
//! let loss = g.sum(sq).unwrap();
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(p).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

pub mod check;
mod error;
mod graph;
pub mod linalg;
mod optim;
mod params;
mod tensor;

pub use error::{AdError, Result};
pub use graph::{Gradients, Graph, Var};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tensor::Tensor;
