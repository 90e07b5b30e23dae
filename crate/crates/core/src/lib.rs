//! Thermal desorption spectroscopy simulation and inverse trap fitting.

pub mod analytic;
pub mod domain;
pub mod error;
pub mod fit;
pub mod forward;
pub mod io;
pub mod mcnabb_foster;
mod mol;
pub mod nondim;
pub mod ode;
pub mod oriani;
pub mod project;
pub mod pso;
pub mod result;
pub mod spectrum;
pub mod units;

pub use error::{Error, Result};
