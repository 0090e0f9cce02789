use thiserror::Error;

use crate::geometry::Violation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
    #[error("series tolerance needs {required} terms, above the limit of {limit}")]
    Truncation { required: usize, limit: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point {0:?} lies outside the domain")]
    OutsideDomain([f64; 3]),
    #[error("direction lies outside the closed opening")]
    OutsideOpening,
    #[error("expected a point of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid domain: {}", .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("requested {requested} modes, more than the supported {limit}")]
    TooManyModes { requested: usize, limit: usize },
    #[error("requested at least one mode")]
    NoModes,
    #[error("shooting found only {found} of {requested} eigenvalues with degree in [{lo}, {hi}]")]
    Bracket {
        lo: f64,
        hi: f64,
        found: usize,
        requested: usize,
    },
    #[error("mode index {index} outside 1..={count}")]
    ModeIndex { index: usize, count: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("start point must lie strictly inside the domain")]
    StartOutside,
    #[error("path {path} exhausted its step budget of {budget} steps")]
    StepBudget { path: u64, budget: u64 },
    #[error("evaluation point is within {distance} of the boundary, need more than {required}")]
    TooCloseToBoundary { distance: f64, required: f64 },
    #[error("ensemble is empty")]
    Empty,
    #[error("insufficient survivors: {got} < {required}")]
    InsufficientSurvivors { got: usize, required: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

/// Crate-level error used by the experiment layer and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}
