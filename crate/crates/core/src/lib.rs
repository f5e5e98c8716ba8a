//! Physics-informed neural networks for option pricing PDEs, with adaptive
//! movement of collocation points.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod matrix;
pub mod models;
pub mod network;
pub mod optim;
pub mod oracles;
pub mod points;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
