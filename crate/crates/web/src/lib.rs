//! Browser bindings for the curve flow. Every export takes plain numbers and
//! returns a flat `Float64Array`, so the page needs no glue beyond the
//! generated module.

use std::sync::Arc;

use powerflow::flow::{run_observed, RunObserver};
use powerflow::spacetime::{lambda_bound, DEFAULT_RAPIDITIES};
use powerflow::{FlowConfig, GraphState, Grid, Integrator, MonitorRecord, ScaleFactor, SpacetimeChart, TimeSlab};
use wasm_bindgen::prelude::*;

const MAX_NODES: usize = 512;

fn chart(scale: &str) -> Result<Arc<SpacetimeChart>, String> {
    let chart = match scale {
        "minkowski" => SpacetimeChart::minkowski(1),
        other => {
            let a = ScaleFactor::preset(other, 1).ok_or_else(|| format!("unknown scale factor `{other}`"))?;
            SpacetimeChart::robertson_walker(1, a)
        }
    };
    chart.map(Arc::new).map_err(|e| e.to_string())
}

fn sinusoid(scale: &str, offset: f64, amplitude: f64, mode: i32, nodes: usize) -> Result<GraphState, String> {
    if !(4..=MAX_NODES).contains(&nodes) {
        return Err(format!("nodes must lie in 4..={MAX_NODES}"));
    }
    let grid = Grid::uniform(1, nodes).map_err(|e| e.to_string())?;
    GraphState::from_fn(grid, chart(scale)?, |x| offset + amplitude * (f64::from(mode) * x[0]).sin())
        .map_err(|e| e.to_string())
}

/// Rows of `[x, u, H, v~]` for a sinusoidal graph, flattened.
pub fn curvature_profile(scale: &str, offset: f64, amplitude: f64, mode: i32, nodes: usize) -> Result<Vec<f64>, String> {
    let state = sinusoid(scale, offset, amplitude, mode, nodes)?;
    let fields = state.geometry().map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(4 * nodes);
    for k in 0..nodes {
        out.extend([state.grid.coords(k)[0], state.u[k], fields.h_mean[k], fields.vtilde[k]]);
    }
    Ok(out)
}

struct Frames {
    every: f64,
    next: f64,
    data: Vec<f64>,
}

impl RunObserver for Frames {
    fn on_record(&mut self, record: &MonitorRecord, state: &GraphState) {
        if record.t >= self.next {
            self.data.push(record.t);
            self.data.extend_from_slice(&state.u);
            self.next = record.t + self.every;
        }
    }
}

/// Frames `[t, u_0, ..., u_{nodes-1}]` sampled about every `t_max / frames`,
/// flattened. The last frame is the final state.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    scale: &str,
    p: f64,
    tau: f64,
    offset: f64,
    amplitude: f64,
    mode: i32,
    nodes: usize,
    t_max: f64,
    frames: usize,
) -> Result<Vec<f64>, String> {
    let initial = sinusoid(scale, offset, amplitude, mode, nodes)?;
    let config = FlowConfig {
        t_max,
        integrator: Integrator::Rk2,
        ..FlowConfig::new(p, tau)
    };
    let mut obs = Frames {
        every: t_max / frames.max(1) as f64,
        next: 0.0,
        data: Vec::new(),
    };
    let outcome = run_observed(&initial, &config, &mut obs).map_err(|e| e.to_string())?;
    let last = &outcome.final_state;
    if obs.data.len() < nodes + 1 || obs.data[obs.data.len() - nodes - 1] != last.t {
        obs.data.push(last.t);
        obs.data.extend_from_slice(&last.u);
    }
    Ok(obs.data)
}

/// Ricci lower bound over heights `[lo, hi]`.
pub fn ricci_bound(scale: &str, lo: f64, hi: f64) -> Result<f64, String> {
    lambda_bound(&*chart(scale)?, &TimeSlab::new(lo, hi), 256, &DEFAULT_RAPIDITIES).map_err(|e| e.to_string())
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = curvatureProfile)]
pub fn curvature_profile_js(scale: &str, offset: f64, amplitude: f64, mode: i32, nodes: usize) -> Result<Vec<f64>, JsError> {
    js(curvature_profile(scale, offset, amplitude, mode, nodes))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = evolve)]
pub fn evolve_js(
    scale: &str,
    p: f64,
    tau: f64,
    offset: f64,
    amplitude: f64,
    mode: i32,
    nodes: usize,
    t_max: f64,
    frames: usize,
) -> Result<Vec<f64>, JsError> {
    js(evolve(scale, p, tau, offset, amplitude, mode, nodes, t_max, frames))
}

#[wasm_bindgen(js_name = ricciBound)]
pub fn ricci_bound_js(scale: &str, lo: f64, hi: f64) -> Result<f64, JsError> {
    js(ricci_bound(scale, lo, hi))
}
