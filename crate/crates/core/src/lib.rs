//! Finite element library for the Poisson problem with boundary and interface
//! constraints imposed through Lagrange multipliers, with several
//! stabilisation strategies.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod spaces;
pub mod solver;
pub mod sparse;
pub mod stabilization;
pub mod unfitted;

pub use error::{Error, Result};
