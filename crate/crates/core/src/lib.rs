//! Topological features of grayscale images from pairs of group-equivariant
//! operators.
//!
//! An image is pushed through a bank of two operators, the pair of outputs
//! grades a grid triangulation as a bifiltration, and the bifiltration is
//! summarized by rank invariants, Hilbert functions and persistence
//! landscapes.

// `!(x > y)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complex;
pub mod error;
pub mod fixture;
pub mod geneo;
pub mod img;
pub mod ml;
pub mod mpl;
pub mod ph;
pub mod pipeline;
pub mod vec;

pub use error::{Error, Result};
