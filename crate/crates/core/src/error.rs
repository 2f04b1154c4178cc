use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while loading, solving or post-processing a game.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown built-in problem `{0}`")]
    UnknownProblem(String),

    #[error("coefficient `{what}` is not finite at t={t}, x={x:?}")]
    NonFiniteCoefficient { what: String, t: f64, x: Vec<f64> },

    #[error("volatility matrix is singular at t={t}, x={x:?}")]
    SingularSigma { t: f64, x: Vec<f64> },

    #[error("non-finite input value at simplex node {0}")]
    NonFiniteInput(usize),

    #[error("value field diverged at step {k}: |V| = {value} exceeds guard {bound}")]
    DivergedField { k: usize, value: f64, bound: f64 },

    #[error("split is inconsistent with its base point in coordinate {coord}: {got} vs {expected}")]
    InconsistentSplit { coord: usize, got: f64, expected: f64 },

    #[error("terminal payoff is not of the form sin(x) + c: `{0}`")]
    UnsupportedG(String),

    #[error("missing solve artifact {0}")]
    MissingArtifacts(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
