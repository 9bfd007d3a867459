// Negated comparisons below deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod design;
pub mod error;
pub mod gp;
pub mod harness;
pub mod inference;
pub mod models;
pub mod special;
pub mod testbeds;

pub use error::{Error, Result};
