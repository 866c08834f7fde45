//! Time-discretized variable-density incompressible flow with mass
//! diffusion on a staggered box grid, with discrete energy audits.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod convergence;
pub mod density;
pub mod energy;
pub mod error;
pub mod fields;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod momentum;
pub mod operators;
pub mod physics;
pub mod scenario;
pub mod sparse;
pub mod time_loop;

pub use error::{Error, Result};
