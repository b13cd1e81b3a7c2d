//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition between modules was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Scenario/input validation failed; every problem is listed.
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    /// The nadir threshold equation has no root for any reserve level.
    #[error("hour {hour}: nadir requirement infeasible at any reserve level (rhs {rhs:.6} ≤ -DΔP {limit:.6})")]
    NadirInfeasible { hour: usize, rhs: f64, limit: f64 },

    /// Aggregate damping cannot arrest the disturbance.
    #[error("quasi-steady-state deviation unbounded: zero damping and insufficient reserve")]
    UnboundedDeviation,

    /// Integration step too coarse for the staged dynamics.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// Solver backend configuration problem.
    #[error("solver configuration error: {0}")]
    Config(String),

    /// Solver runtime / parse failure.
    #[error("solver error: {0}")]
    Solver(String),

    /// A solved binary variable was not within tolerance of {0, 1}.
    #[error("integrality error: variable {name} = {value}")]
    Integrality { name: String, value: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
