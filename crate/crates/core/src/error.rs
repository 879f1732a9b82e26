//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by shape-graph construction, evaluation and optimization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("component {component} is degenerate: vertices {index} and {} coincide", index + 1)]
    DegeneratePolyline { component: usize, index: usize },

    #[error("component {component} has {got} vertices; at least 2 required")]
    TooFewVertices { component: usize, got: usize },

    #[error("resampling component {component} produced a zero-length edge at index {index}")]
    ZeroLengthEdge { component: usize, index: usize },

    #[error("shape graph failed validation:\n{report}")]
    InvalidShapeGraph { report: String },

    #[error("immersion violated: |∂_θ c| = {speed:e} at component {component}, node {node}")]
    ImmersionViolation {
        component: usize,
        node: usize,
        speed: f64,
    },

    #[error("parameter {value} outside [0, 1]")]
    ParameterOutOfRange { value: f64 },

    #[error("derivative order {requested} exceeds spline degree {degree}")]
    DerivativeOrderTooHigh { requested: usize, degree: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite {term} encountered during energy evaluation")]
    NonFiniteEnergy { term: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty polygonal graph passed to {0}")]
    EmptyGraph(&'static str),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
