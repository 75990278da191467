// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod episodes;
pub mod error;
pub mod field;
pub mod gmrf;
pub mod inference;
pub mod marginals;
pub mod mesh;
pub mod model;
pub mod optim;
pub mod par;
pub mod simulate;
pub mod sparse;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
