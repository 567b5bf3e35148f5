//! Numerical tolerances shared by the engine, the verifier and the tests.

/// Slack allowed when admitting initial data with `min H^p - tau` at zero.
pub const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// Constant `C` in the tolerance model `C (h^2 + dt)` used when comparing
/// discrete monitors against continuum inequalities.
pub const BOUND_TOL_C: f64 = 1.0;

/// Residuals at or below this are treated as exact zeros by the verifier.
pub const EXACT_RESIDUAL: f64 = 1e-13;

/// Minimum observed orders for identity residuals.
pub const MIN_SLOPE_DT: f64 = 1.0;
pub const MIN_SLOPE_H: f64 = 1.8;

/// Temporal part of a residual treated as roundoff of the fine time quotient.
pub const EXACT_TEMPORAL: f64 = 1e-8;
