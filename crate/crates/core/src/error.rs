use thiserror::Error;

/// Errors raised by the simulation and inference engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set violates a type invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Conversion requested between incompatible unit families.
    #[error("unit error: cannot convert {from} to {to}")]
    Unit { from: String, to: String },

    /// Spatial grid too coarse for the requested post-processing.
    #[error("grid error: {0}")]
    Grid(String),

    /// An occupancy left its admissible range during integration.
    #[error("solver instability: {0}")]
    SolverInstability(String),

    /// The adaptive integrator could not make progress.
    #[error("step size collapsed to {step:e} at t = {time:e}")]
    StepSizeCollapse { time: f64, step: f64 },

    /// The mass balance is undefined (no initial hydrogen).
    #[error("mass-balance residual undefined: initial content is zero")]
    UndefinedResidual,

    /// Search bounds could not be built.
    #[error("bounds error: {0}")]
    Bounds(String),

    /// The initial-concentration equation has no root in its bracket.
    #[error("infeasible initial concentration: {0}")]
    Infeasible(String),

    /// Every objective evaluation in an iteration failed.
    #[error("optimization stalled at iteration {0}: all evaluations failed")]
    OptimizationStalled(usize),

    /// Malformed input file.
    #[error("format error: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
