// `!(x > 0.0)` is used on purpose to reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod expr;
pub mod graphon;
pub mod graphs;
pub mod harness;
pub mod limitsolver;
pub mod measures;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
