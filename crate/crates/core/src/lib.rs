// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod momentsys;
pub mod polyalg;
pub mod problem;
pub mod relaxation;
pub mod sdp;

pub use error::{Error, Result};
