//! Price-formation free boundary: a heat equation on [-1, 1] with Neumann walls,
//! driven by a source/sink pair that follows the zero of the solution.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod duhamel;
pub mod error;
pub mod fd;
pub mod front;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod particles;
pub mod picard;
pub mod quadrature;
pub mod spline;

pub use error::{Error, InitialDataIssue, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
