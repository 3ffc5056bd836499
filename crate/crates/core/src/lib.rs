//! Numerical core for a nonlinear Fokker-Planck equation describing red
//! particles diffusing among fixed obstacles, its asymptotic gradient-flow
//! surrogates, and the hard-sphere particle system behind it.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod fvm;
pub mod grid;
pub mod model;
pub mod particles;
pub mod stationary;

pub use error::{Error, Result};
pub use grid::{Field, Grid1D};
pub use model::{EntropyPair, FeasibleSet, ModelParams};
