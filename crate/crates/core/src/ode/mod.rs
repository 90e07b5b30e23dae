//! Stiff time integration for the method-of-lines solvers.

mod banded;
mod bdf;

pub use banded::{BandLu, BandMatrix};
pub use bdf::{finite_difference_jacobian, integrate, BdfOptions, BdfSolution, BdfStats, OdeSystem};
