//! Numerical laboratory for the Toda hierarchy on Jacobi matrices, its
//! SL(2) cocycles and m-function maps, and canonical systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod cocycle;
pub mod error;
pub mod experiment;
pub mod herglotz;
pub mod jacobi;
pub mod mobius;
pub mod ode;
pub mod toda;

pub use error::{Error, Result};
pub use jacobi::{JacobiMatrix, RealPolynomial};
pub use mobius::{Mat2C, Mat2R, SpherePoint, C64};
