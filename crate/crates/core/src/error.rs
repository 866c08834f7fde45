use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("{method} did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { method: &'static str, iterations: usize, residual: f64, history: Vec<f64> },
    #[error("{method} broke down after {iterations} iterations: {detail}")]
    Breakdown { method: &'static str, iterations: usize, detail: String },
    #[error("{method} stagnated at iteration {iterations} (estimate {estimate:e})")]
    Stagnation { method: &'static str, iterations: usize, estimate: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("ghost layer of {0} field has not been filled")]
    GhostsUnfilled(&'static str),
    #[error("boundary rule {rule} is not accepted for {role} fields")]
    BoundaryRule { rule: &'static str, role: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("transport velocity has nonzero normal component on the boundary (max {0:e})")]
    BoundaryFlux(f64),
    #[error("density outside admissible range: {0}")]
    DensityRange(String),
    #[error("viscosity is not positive: {0}")]
    Viscosity(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },
    #[error("scenario: {0}")]
    ScenarioValidation(String),
    #[error("ledger: {0}")]
    Ledger(String),
    #[error("snapshot file: {0}")]
    Snapshot(String),
    #[error("output directory {0} is locked by another run")]
    Locked(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
