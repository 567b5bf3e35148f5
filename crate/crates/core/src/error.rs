use thiserror::Error;

/// Failures raised by the geometry and flow routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("spacelike violation at node {node}: |Du|^2 = {gradient_norm2:.6e} (guard {guard:.1e})")]
    SpacelikeViolation {
        node: usize,
        gradient_norm2: f64,
        guard: f64,
    },

    #[error("nonpositive mean curvature H = {value:.6e} at node {node} with fractional exponent p = {p}")]
    NonpositiveCurvature { node: usize, value: f64, p: f64 },

    #[error("time step {dt:.3e} underflowed the stiffness floor")]
    Stiffness { dt: f64 },

    #[error("tilt {vtilde:.6e} exceeded the abort guard {limit:.3e}")]
    TiltExceeded { vtilde: f64, limit: f64 },

    #[error("initial data violates min H^p >= tau: min H^p - tau = {gap:.6e}")]
    InadmissibleInitialData { gap: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;
