use std::io;

use thiserror::Error;

/// Errors produced by mesh handling, assembly, solving and time stepping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("element {element}: degenerate simplex (det(E) = {det:e})")]
    DegenerateElement { element: usize, det: f64 },

    #[error("element {element}: non-positive orientation (det(E) = {det:e})")]
    Orientation { element: usize, det: f64 },

    #[error("vertex index {index} out of range (mesh has {n_vertices} vertices)")]
    IndexOutOfRange { index: usize, n_vertices: usize },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid diffusion field: {0}")]
    InvalidField(String),

    #[error("invalid reaction function: {0}")]
    InvalidReaction(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported analysis: {0}")]
    UnsupportedAnalysis(String),

    #[error("step {step}: dt = {dt} outside the admissible window [{lower}, {upper}] (mesh_ok = {mesh_ok})")]
    ConditionViolated {
        step: usize,
        dt: f64,
        lower: f64,
        upper: f64,
        mesh_ok: bool,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
