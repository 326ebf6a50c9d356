//! Distributed control of steady generalized Navier-Stokes flow with a
//! spatially varying power-law exponent.
//!
//! The crate is layered bottom-up: pointwise stress law ([`tensor`]), exponent
//! fields ([`exponent`]), MAC discretization ([`grid`], [`ops`]), the nonlinear
//! state solver ([`state`]), the adjoint-based optimizer ([`control`]) and the
//! verification harness ([`verification`]). [`io`] handles run configuration
//! and field export.

pub mod control;
pub mod dual;
pub mod error;
pub mod exponent;
pub mod expr;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod ops;
pub mod poincare;
pub mod state;
pub mod tensor;
pub mod verification;

pub use error::{Error, Result};
