// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anthro;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod mechanism;
pub mod optimizer;
pub mod reference;
pub mod sts_sim;

pub use error::{Error, Result};
