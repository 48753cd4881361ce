//! Chart-based engine for time-dependent Lagrangian mechanics.
//!
//! From a Lagrangian `L(t, x, y)` the engine derives the Lagrangian vector
//! field, semisprays and nonlinear connections, builds the vector-bundle
//! trivializations of the second-order tangent bundle they induce, integrates
//! the equations of motion (with potentials, external forces and holonomic
//! constraints) and audits every change-of-coordinates and invariance law
//! numerically.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
pub mod diffkernel;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod lagrangian;
pub mod linalg;
pub mod point;
pub mod sampling;
pub mod riemann;
pub mod scenario;
pub mod semispray;
pub mod cli;

pub use error::{Error, Result};
pub use point::{Jet2, TangentSample, TangentVector, Trivialized};
