// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod certify;
pub mod cli;
pub mod compfun;
pub mod config;
pub mod error;
pub mod gains;
pub mod gronwall;
pub mod hybrid_time;
pub mod quad;
pub mod signals;
pub mod simulator;

pub use error::{Error, Result};
