//! Explicit integration of the graph equation
//! `du/dt = -e^{-psi} v (H^p - tau)` with monitors for the a-priori estimates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::geometry::{GeometryFields, GraphState, SPACELIKE_GUARD};
use crate::linalg;
use crate::spacetime::{lambda_bound, TimeSlab, DEFAULT_RAPIDITIES};
use crate::tolerances;

/// Time steps below this are treated as a stiffness failure.
pub const DT_FLOOR: f64 = 1e-14;
/// Lattice size used when the run has to estimate its own Ricci bound.
pub const LAMBDA_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub p: f64,
    pub tau: f64,
    pub cfl_safety: f64,
    pub t_max: f64,
    pub eps_stationary: f64,
    pub integrator: Integrator,
    pub vtilde_max: f64,
    /// Record a monitor (and snapshot) every `stride` accepted steps.
    pub stride: usize,
    /// Ricci lower bound used for the envelope columns; estimated over the
    /// slab visited by the flow when absent.
    pub lambda: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            tau: 0.0,
            cfl_safety: 0.2,
            t_max: 1.0,
            eps_stationary: 1e-6,
            integrator: Integrator::Rk2,
            vtilde_max: 1e3,
            stride: 1,
            lambda: None,
        }
    }
}

impl FlowConfig {
    pub fn new(p: f64, tau: f64) -> Self {
        Self {
            p,
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(FlowError::Config(format!("{key}: {msg}")));
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p", format!("exponent must lie in (0, 1], got {}", self.p));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad("tau", format!("must be finite and >= 0, got {}", self.tau));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max", format!("must be positive, got {}", self.t_max));
        }
        if !(self.eps_stationary > 0.0) {
            return bad("eps_stationary", format!("must be positive, got {}", self.eps_stationary));
        }
        if !(self.vtilde_max > 1.0) {
            return bad("vtilde_max", format!("must exceed 1, got {}", self.vtilde_max));
        }
        if self.stride == 0 {
            return bad("output.stride", "must be at least 1".into());
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad("lambda", format!("must be finite and >= 0, got {l}"));
            }
        }
        Ok(())
    }
}

/// `H^p`, with `p = 1` passed through so signed curvature stays usable.
pub fn power(h: f64, p: f64) -> f64 {
    if p == 1.0 {
        h
    } else {
        h.powf(p)
    }
}

fn check_curvature(fields: &GeometryFields, p: f64) -> Result<()> {
    if p < 1.0 {
        if let Some((node, &value)) = fields
            .h_mean
            .iter()
            .enumerate()
            .find(|(_, &h)| !(h > 0.0))
        {
            return Err(FlowError::NonpositiveCurvature { node, value, p });
        }
    }
    Ok(())
}

/// `du/dt` from assembled geometry.
pub fn rhs_from(fields: &GeometryFields, p: f64, tau: f64) -> Result<Vec<f64>> {
    check_curvature(fields, p)?;
    Ok((0..fields.len())
        .map(|k| -(-fields.psi[k]).exp() * fields.v[k] * (power(fields.h_mean[k], p) - tau))
        .collect())
}

pub fn rhs(state: &GraphState, config: &FlowConfig) -> Result<Vec<f64>> {
    rhs_from(&state.geometry()?, config.p, config.tau)
}

/// Largest `|H^p - tau|` over the nodes.
pub fn stationarity_gap(fields: &GeometryFields, p: f64, tau: f64) -> f64 {
    fields
        .h_mean
        .iter()
        .map(|&h| (power(h, p) - tau).abs())
        .fold(0.0, f64::max)
}

/// Explicit stability limit from the principal coefficient
/// `p H^{p-1} g^{ij}` of the linearized graph equation, capped so the step
/// does not pass `t_max`.
pub fn stable_dt(state: &GraphState, fields: &GeometryFields, config: &FlowConfig) -> Result<f64> {
    check_curvature(fields, config.p)?;
    let n = state.grid.n();
    let mut coeff: f64 = 0.0;
    for k in 0..fields.len() {
        let lead = if config.p == 1.0 {
            1.0
        } else {
            config.p * fields.h_mean[k].powf(config.p - 1.0)
        };
        let lam = linalg::max_eigenvalue_sym(&fields.ginv[k], n);
        coeff = coeff.max(lead * lam);
    }
    let h = state.grid.min_spacing();
    let mut dt = if coeff > 0.0 {
        config.cfl_safety * h * h / coeff
    } else {
        f64::INFINITY
    };
    let remaining = config.t_max - state.t;
    if dt > remaining {
        dt = remaining;
    }
    if !(dt >= DT_FLOOR) {
        return Err(FlowError::Stiffness { dt });
    }
    Ok(dt)
}

fn axpy(u: &[f64], dt: f64, k: &[f64]) -> Vec<f64> {
    u.iter().zip(k).map(|(a, b)| a + dt * b).collect()
}

/// Advance with a known first stage `k1 = rhs(state)`.
fn advance(state: &GraphState, k1: &[f64], dt: f64, config: &FlowConfig) -> Result<Vec<f64>> {
    match config.integrator {
        Integrator::Euler => Ok(axpy(&state.u, dt, k1)),
        Integrator::Rk2 => {
            let stage = axpy(&state.u, dt, k1);
            let fields = GeometryFields::assemble(&stage, &state.grid, &state.chart, SPACELIKE_GUARD)?;
            let k2 = rhs_from(&fields, config.p, config.tau)?;
            Ok(state
                .u
                .iter()
                .zip(k1.iter().zip(&k2))
                .map(|(u, (a, b))| u + 0.5 * dt * (a + b))
                .collect())
        }
    }
}

/// One explicit step; the result is re-validated as spacelike.
pub fn step(state: &GraphState, dt: f64, config: &FlowConfig) -> Result<GraphState> {
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let fields = state.geometry()?;
    let k1 = rhs_from(&fields, config.p, config.tau)?;
    let u = advance(state, &k1, dt, config)?;
    crate::geometry::tilt(&u, &state.grid, &state.chart, SPACELIKE_GUARD)?;
    GraphState::new(state.t + dt, u, state.grid, Arc::clone(&state.chart))
}

/// One row of the monitor time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub step: usize,
    pub t: f64,
    pub inf_u: f64,
    pub sup_u: f64,
    pub mean_u: f64,
    #[serde(rename = "sup_H")]
    pub sup_h: f64,
    #[serde(rename = "inf_H")]
    pub inf_h: f64,
    #[serde(rename = "min_HpMinusTau")]
    pub min_hp_minus_tau: f64,
    pub max_vtilde: f64,
    #[serde(rename = "max_normA")]
    pub max_norm_a: f64,
    /// `sup H^{1-p}(t)` and its envelope, for `p < 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound44_lhs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound44_rhs: Option<f64>,
    /// `sup H(t)` and its exponential envelope, for `p = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound45_lhs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound45_rhs: Option<f64>,
    pub dt_used: f64,
}

impl MonitorRecord {
    pub fn observe(
        step: usize,
        state: &GraphState,
        fields: &GeometryFields,
        config: &FlowConfig,
        sup_h0: f64,
        lambda: f64,
        dt_used: f64,
    ) -> Self {
        let (p, tau) = (config.p, config.tau);
        let sup_h = fields.sup_h();
        let min_gap = fields
            .h_mean
            .iter()
            .map(|&h| power(h, p) - tau)
            .fold(f64::INFINITY, f64::min);
        let (b44l, b44r, b45l, b45r) = if p < 1.0 {
            (
                Some(sup_h.powf(1.0 - p)),
                Some(sup_h0.powf(1.0 - p) + (1.0 - p) * lambda * state.t),
                None,
                None,
            )
        } else {
            (None, None, Some(sup_h), Some(sup_h0 * (lambda * state.t).exp()))
        };
        Self {
            step,
            t: state.t,
            inf_u: state.inf(),
            sup_u: state.sup(),
            mean_u: state.mean(),
            sup_h,
            inf_h: fields.inf_h(),
            min_hp_minus_tau: min_gap,
            max_vtilde: fields.max_vtilde(),
            max_norm_a: fields.max_norm_a(),
            bound44_lhs: b44l,
            bound44_rhs: b44r,
            bound45_lhs: b45l,
            bound45_rhs: b45r,
            dt_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Stationary,
    TimeExhausted,
    Aborted(FlowError),
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Stationary => "Stationary",
            Termination::TimeExhausted => "TimeExhausted",
            Termination::Aborted(_) => "Aborted",
        }
    }

    pub fn is_success(&self) -> bool {
        !matches!(self, Termination::Aborted(_))
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub termination: Termination,
    pub monitors: Vec<MonitorRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: GraphState,
    pub steps: usize,
    /// Ricci bound over every height the run visited.
    pub lambda: f64,
    /// Largest step taken.
    pub dt_max: f64,
}

/// Streaming hooks for [`run_observed`].
pub trait RunObserver {
    fn on_record(&mut self, _record: &MonitorRecord, _state: &GraphState) {}
}

impl RunObserver for () {}

/// Slab bottoms are rounded down to multiples of this, so the Ricci bound
/// is re-estimated only when the flow descends into a new band.
pub const LAMBDA_BAND: f64 = 0.05;

/// Ricci bound over the slab visited so far, `[band floor of inf u, sup u_0]`.
struct LambdaTracker {
    fixed: Option<f64>,
    top: f64,
    band: i64,
    value: f64,
}

impl LambdaTracker {
    fn new(config: &FlowConfig, initial: &GraphState) -> Result<Self> {
        let mut tracker = Self {
            fixed: config.lambda,
            top: initial.sup(),
            band: i64::MAX,
            value: config.lambda.unwrap_or(0.0),
        };
        tracker.update(initial)?;
        Ok(tracker)
    }

    fn update(&mut self, state: &GraphState) -> Result<f64> {
        if self.fixed.is_some() {
            return Ok(self.value);
        }
        let band = (state.inf() / LAMBDA_BAND).floor() as i64;
        if band < self.band {
            self.band = band;
            let slab = TimeSlab::new(band as f64 * LAMBDA_BAND, self.top);
            let fresh = lambda_bound(&state.chart, &slab, LAMBDA_SAMPLES, &DEFAULT_RAPIDITIES)?;
            self.value = self.value.max(fresh);
        }
        Ok(self.value)
    }
}

/// Check the run preconditions and return the initial geometry.
pub fn admit(initial: &GraphState, config: &FlowConfig) -> Result<GeometryFields> {
    config.validate()?;
    let fields = initial.geometry()?;
    check_curvature(&fields, config.p)?;
    if config.tau == 0.0 && !(fields.inf_h() > 0.0) {
        return Err(FlowError::InadmissibleInitialData {
            gap: fields.inf_h(),
        });
    }
    let gap = fields
        .h_mean
        .iter()
        .map(|&h| power(h, config.p) - config.tau)
        .fold(f64::INFINITY, f64::min);
    if gap < -tolerances::ADMISSIBILITY_SLACK {
        return Err(FlowError::InadmissibleInitialData { gap });
    }
    Ok(fields)
}

pub fn run(initial: &GraphState, config: &FlowConfig) -> Result<RunOutcome> {
    run_observed(initial, config, &mut ())
}

/// Integrate until stationary, out of time, or aborted. Precondition
/// failures are returned as errors; failures during stepping end the run
/// with [`Termination::Aborted`].
pub fn run_observed(
    initial: &GraphState,
    config: &FlowConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome> {
    let mut fields = admit(initial, config)?;
    let sup_h0 = fields.sup_h();
    let mut lambda = LambdaTracker::new(config, initial)?;

    let mut state = initial.clone();
    let mut monitors = Vec::new();
    let mut snapshots = Vec::new();
    let mut step_index = 0usize;
    let mut dt_used = 0.0;
    let mut dt_max: f64 = 0.0;
    let mut last_recorded = None;
    let time_slack = 1e-12 * config.t_max.max(1.0);

    let mut record = |state: &GraphState,
                      fields: &GeometryFields,
                      step_index: usize,
                      dt_used: f64,
                      monitors: &mut Vec<MonitorRecord>,
                      snapshots: &mut Vec<Snapshot>,
                      lambda: f64| {
        let rec = MonitorRecord::observe(step_index, state, fields, config, sup_h0, lambda, dt_used);
        observer.on_record(&rec, state);
        monitors.push(rec);
        snapshots.push(Snapshot {
            step: step_index,
            t: state.t,
            u: state.u.clone(),
        });
    };

    let termination = loop {
        let lam = match lambda.update(&state) {
            Ok(l) => l,
            Err(e) => break Termination::Aborted(e),
        };
        if step_index.is_multiple_of(config.stride) {
            record(&state, &fields, step_index, dt_used, &mut monitors, &mut snapshots, lam);
            last_recorded = Some(step_index);
        }
        let verdict = if stationarity_gap(&fields, config.p, config.tau) < config.eps_stationary {
            Some(Termination::Stationary)
        } else if state.t >= config.t_max - time_slack {
            Some(Termination::TimeExhausted)
        } else if fields.max_vtilde() > config.vtilde_max {
            Some(Termination::Aborted(FlowError::TiltExceeded {
                vtilde: fields.max_vtilde(),
                limit: config.vtilde_max,
            }))
        } else {
            None
        };
        if let Some(t) = verdict {
            break t;
        }

        let outcome = (|| -> Result<(GraphState, GeometryFields, f64)> {
            let dt = stable_dt(&state, &fields, config)?;
            let k1 = rhs_from(&fields, config.p, config.tau)?;
            let u = advance(&state, &k1, dt, config)?;
            let t_next = if config.t_max - (state.t + dt) <= time_slack {
                config.t_max
            } else {
                state.t + dt
            };
            let next = GraphState::new(t_next, u, state.grid, Arc::clone(&state.chart))?;
            let next_fields = next.geometry()?;
            Ok((next, next_fields, dt))
        })();
        match outcome {
            Ok((next, next_fields, dt)) => {
                state = next;
                fields = next_fields;
                dt_used = dt;
                dt_max = dt_max.max(dt);
                step_index += 1;
            }
            Err(e) => break Termination::Aborted(e),
        }
    };
    if last_recorded != Some(step_index) {
        let lam = lambda.update(&state).unwrap_or(lambda.value);
        record(&state, &fields, step_index, dt_used, &mut monitors, &mut snapshots, lam);
    }

    Ok(RunOutcome {
        termination,
        monitors,
        snapshots,
        final_state: state,
        steps: step_index,
        lambda: lambda.value,
        dt_max,
    })
}

/// Tolerance model `C (h^2 + dt)` for comparing discrete monitors with the
/// continuum inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceModel {
    pub c: f64,
    pub h: f64,
    pub dt: f64,
}

impl ToleranceModel {
    pub fn new(c: f64, h: f64, dt: f64) -> Self {
        Self { c, h, dt }
    }

    pub fn for_run(outcome: &RunOutcome) -> Self {
        Self::new(
            tolerances::BOUND_TOL_C,
            outcome.final_state.grid.max_spacing(),
            outcome.dt_max,
        )
    }

    pub fn value(&self) -> f64 {
        self.c * (self.h * self.h + self.dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub passed: bool,
    /// Largest `lhs - rhs` observed (negative means slack).
    pub worst_excess: f64,
    pub worst_time: f64,
    /// First time at which the check failed, if any.
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub tolerance: f64,
    pub model: ToleranceModel,
    pub checks: Vec<BoundCheck>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The first failing check as an error naming the bound and time.
    pub fn ensure(&self) -> Result<()> {
        match self.checks.iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(FlowError::Contract(format!(
                "bound {} violated at t = {} (excess {:.3e} over tolerance {:.3e})",
                c.name,
                c.first_violation.unwrap_or(c.worst_time),
                c.worst_excess,
                self.tolerance
            ))),
        }
    }
}

pub const BOUND_SUP_H_POWER: &str = "sup_H_power_envelope";
pub const BOUND_SUP_H_EXP: &str = "sup_H_exponential_envelope";
pub const BOUND_HP_FLOOR: &str = "Hp_minus_tau_floor";
pub const BOUND_INF_U_MONOTONE: &str = "inf_u_nonincreasing";

fn scan(name: &str, tol: f64, items: impl Iterator<Item = (f64, f64)>) -> BoundCheck {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    let mut first = None;
    for (t, excess) in items {
        if excess > worst {
            worst = excess;
            worst_t = t;
        }
        if first.is_none() && !(excess <= tol) {
            first = Some(t);
        }
    }
    BoundCheck {
        name: name.to_string(),
        passed: first.is_none(),
        worst_excess: worst,
        worst_time: worst_t,
        first_violation: first,
    }
}

/// Check the sup-H envelopes, the `H^p >= tau` floor and the monotonicity of
/// `inf u` over a monitor series.
pub fn check_bounds(
    monitors: &[MonitorRecord],
    lambda: f64,
    p: f64,
    model: ToleranceModel,
) -> Result<BoundsReport> {
    let first = monitors
        .first()
        .ok_or_else(|| FlowError::Contract("check_bounds needs a nonempty monitor series".into()))?;
    let tol = model.value();
    let sup0 = first.sup_h;
    let t0 = first.t;
    let mut checks = Vec::new();
    if p < 1.0 {
        let q = 1.0 - p;
        checks.push(scan(
            BOUND_SUP_H_POWER,
            tol,
            monitors.iter().map(|m| {
                let envelope = sup0.powf(q) + q * lambda * (m.t - t0);
                (m.t, m.sup_h.powf(q) - envelope)
            }),
        ));
    } else {
        checks.push(scan(
            BOUND_SUP_H_EXP,
            tol,
            monitors
                .iter()
                .map(|m| (m.t, m.sup_h - sup0 * (lambda * (m.t - t0)).exp())),
        ));
    }
    checks.push(scan(
        BOUND_HP_FLOOR,
        tol,
        monitors.iter().map(|m| (m.t, -m.min_hp_minus_tau)),
    ));
    checks.push(scan(
        BOUND_INF_U_MONOTONE,
        tol,
        monitors
            .windows(2)
            .map(|w| (w[1].t, w[1].inf_u - w[0].inf_u)),
    ));
    Ok(BoundsReport {
        tolerance: tol,
        model,
        checks,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub tau: f64,
    pub termination: String,
    pub t_final: f64,
    pub steps: usize,
    pub stationarity_gap: f64,
    pub target_height: f64,
    pub mean_u: f64,
    pub limit: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub p: f64,
    pub entries: Vec<SweepEntry>,
    /// Sup-norm distances between successive limits.
    pub distances: Vec<f64>,
    pub cauchy: bool,
    pub aborted: Option<String>,
}

/// Strictly descending, finite, nonnegative list of regularizers.
pub fn validate_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(FlowError::Config("tau list is empty".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(FlowError::Config(format!("tau values must be finite and >= 0, got {t}")));
    }
    if taus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(FlowError::Config(format!("tau list must be strictly descending: {taus:?}")));
    }
    Ok(())
}

/// Run to stationarity for each regularizer in turn and measure how the
/// limits approach one another.
pub fn tau_sweep(initial: &GraphState, config: &FlowConfig, taus: &[f64]) -> Result<SweepReport> {
    validate_taus(taus)?;
    let mut entries: Vec<SweepEntry> = Vec::new();
    let mut aborted = None;
    for &tau in taus {
        let cfg = FlowConfig {
            tau,
            ..config.clone()
        };
        let outcome = match run(initial, &cfg) {
            Ok(o) => o,
            Err(e) => {
                aborted = Some(format!("tau = {tau}: {e}"));
                break;
            }
        };
        let fields = outcome.final_state.geometry()?;
        let entry = SweepEntry {
            tau,
            termination: outcome.termination.label().to_string(),
            t_final: outcome.final_state.t,
            steps: outcome.steps,
            stationarity_gap: stationarity_gap(&fields, cfg.p, tau),
            target_height: if tau > 0.0 { tau.powf(1.0 / cfg.p) } else { 0.0 },
            mean_u: outcome.final_state.mean(),
            limit: outcome.final_state.u.clone(),
        };
        let failed = !matches!(outcome.termination, Termination::Stationary);
        if let Termination::Aborted(e) = &outcome.termination {
            aborted = Some(format!("tau = {tau}: {e}"));
        }
        entries.push(entry);
        if failed && aborted.is_some() {
            break;
        }
    }
    let distances: Vec<f64> = entries
        .windows(2)
        .map(|w| {
            w[0].limit
                .iter()
                .zip(&w[1].limit)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let all_stationary = entries.iter().all(|e| e.termination == "Stationary");
    let cauchy = aborted.is_none()
        && entries.len() == taus.len()
        && all_stationary
        && distances.windows(2).all(|w| w[1] < w[0]);
    Ok(SweepReport {
        p: config.p,
        entries,
        distances,
        cauchy,
        aborted,
    })
}
