//! Asymptotic-preserving IMEX Runge-Kutta schemes for the Boltzmann
//! equation with a penalised collision operator.

pub mod collision;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod limits;
pub mod tableaux;
pub mod velocity;

pub use error::{Error, Result};
