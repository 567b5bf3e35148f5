//! Power mean curvature flow `x' = (H^p - tau) nu` of closed spacelike graphs
//! in Lorentzian product spacetimes, with the monitors and identity checks
//! used to validate the discretization.
//!
//! * [`spacetime`]: ambient charts, connection, curvature, Ricci lower bound.
//! * [`geometry`]: induced geometry of a discretized graph.
//! * [`flow`]: explicit time integration, monitors and a-priori bound checks.
//! * [`lagrangian`]: parametric curve flow and evolution-identity residuals.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod lagrangian;
pub mod linalg;
pub mod spacetime;
pub mod tolerances;

pub use error::{FlowError, Result};
pub use flow::{FlowConfig, Integrator, MonitorRecord, RunOutcome, Termination};
pub use geometry::{GeometryFields, GraphState};
pub use grid::Grid;
pub use spacetime::{ChartPoint, Family, ScaleFactor, SpacetimeChart, TimeSlab};
