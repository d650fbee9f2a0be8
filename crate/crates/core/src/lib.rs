// `!(x > 0.0)` is the NaN-rejecting form of the parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conv;
pub mod error;
pub mod evolve;
pub mod field;
pub mod fronts;
pub mod interp;
pub mod kernels;
pub mod par;
pub mod reactions;
pub mod stability;
pub mod waves;

pub use error::{FrontError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
