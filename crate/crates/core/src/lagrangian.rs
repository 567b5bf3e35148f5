//! Parametric flow `x' = (H^p - tau) nu` of closed spacelike curves in 1+1
//! charts, and residuals of the evolution identities measured along
//! material points.
//!
//! Material time derivatives are taken with a symmetric pair of Euler
//! steps `S(+dt)`, `S(-dt)` from a common base state; the centered quotient
//! is second order in `dt` and the right-hand sides are assembled at the
//! base state.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::flow::{power, Integrator};
use crate::linalg::{self, Mat3, Vec3};
use crate::spacetime::{ChartPoint, ScaleFactor, SpacetimeChart};
use crate::tolerances;

/// Sampled closed curve `x^a(xi_k)`; `x^1` is stored unwrapped so that
/// `x^1(xi + L) = x^1(xi) + L`.
#[derive(Debug, Clone)]
pub struct ParametricState {
    pub t: f64,
    pub positions: Vec<[f64; 2]>,
    pub chart: Arc<SpacetimeChart>,
}

impl ParametricState {
    pub fn new(t: f64, positions: Vec<[f64; 2]>, chart: Arc<SpacetimeChart>) -> Result<Self> {
        if chart.n() != 1 {
            return Err(FlowError::Contract("parametric curves need a 1+1 chart".into()));
        }
        if positions.len() < 8 {
            return Err(FlowError::Contract(format!(
                "need at least 8 samples, got {}",
                positions.len()
            )));
        }
        Ok(Self { t, positions, chart })
    }

    /// The graph `(u(xi), xi)` sampled at `samples` points.
    pub fn graph(chart: Arc<SpacetimeChart>, samples: usize, u: impl Fn(f64) -> f64) -> Result<Self> {
        let l = chart.periods()[0];
        let h = l / samples as f64;
        let positions = (0..samples)
            .map(|k| {
                let xi = k as f64 * h;
                [u(xi), xi]
            })
            .collect();
        Self::new(0.0, positions, chart)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.chart.periods()[0] / self.len() as f64
    }

    fn at(&self, k: isize) -> [f64; 2] {
        let n = self.len() as isize;
        let wraps = k.div_euclid(n);
        let p = self.positions[k.rem_euclid(n) as usize];
        [p[0], p[1] + wraps as f64 * self.chart.periods()[0]]
    }
}

/// Per-sample geometry of a parametric curve.
#[derive(Debug, Clone)]
pub struct CurveGeometry {
    pub points: Vec<ChartPoint>,
    pub tangent: Vec<Vec3>,
    pub g11: Vec<f64>,
    pub h11: Vec<f64>,
    pub h_mean: Vec<f64>,
    pub norm_a2: Vec<f64>,
    pub nu: Vec<Vec3>,
    pub metric: Vec<Mat3>,
}

pub fn curve_geometry(state: &ParametricState) -> Result<CurveGeometry> {
    let chart = &state.chart;
    let h = state.spacing();
    let len = state.len();
    let mut out = CurveGeometry {
        points: Vec::with_capacity(len),
        tangent: Vec::with_capacity(len),
        g11: Vec::with_capacity(len),
        h11: Vec::with_capacity(len),
        h_mean: Vec::with_capacity(len),
        norm_a2: Vec::with_capacity(len),
        nu: Vec::with_capacity(len),
        metric: Vec::with_capacity(len),
    };
    for k in 0..len as isize {
        let (m, c, p) = (state.at(k - 1), state.at(k), state.at(k + 1));
        let pt = chart.point(c[0], &[c[1]]);
        let g = chart.metric(&pt)?;
        let gamma = chart.christoffel_bar(&pt)?;
        let tan = [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h), 0.0];
        let acc = [
            (p[0] - 2.0 * c[0] + m[0]) / (h * h),
            (p[1] - 2.0 * c[1] + m[1]) / (h * h),
            0.0,
        ];
        let g11 = linalg::quad(&g, &tan, &tan, 2);
        if !(g11 > 0.0) {
            return Err(FlowError::SpacelikeViolation {
                node: k as usize,
                gradient_norm2: g11,
                guard: 0.0,
            });
        }
        let low = linalg::lower(&g, &tan, 2);
        let mut nu = [low[1], -low[0], 0.0];
        let nn = linalg::quad(&g, &nu, &nu, 2);
        let scale = 1.0 / (-nn).sqrt();
        let sign = if nu[0] > 0.0 { -1.0 } else { 1.0 };
        nu[0] *= sign * scale;
        nu[1] *= sign * scale;

        let mut cov = acc;
        for a in 0..2 {
            for b in 0..2 {
                for c2 in 0..2 {
                    cov[a] += gamma[a][b][c2] * tan[b] * tan[c2];
                }
            }
        }
        let h11 = -linalg::quad(&g, &cov, &nu, 2);
        let hm = h11 / g11;
        out.points.push(pt);
        out.tangent.push(tan);
        out.g11.push(g11);
        out.h11.push(h11);
        out.h_mean.push(hm);
        out.norm_a2.push(hm * hm);
        out.nu.push(nu);
        out.metric.push(g);
    }
    Ok(out)
}

fn velocity(state: &ParametricState, p: f64, tau: f64) -> Result<Vec<[f64; 2]>> {
    let geo = curve_geometry(state)?;
    geo.h_mean
        .iter()
        .zip(&geo.nu)
        .enumerate()
        .map(|(k, (&h, nu))| {
            if p < 1.0 && !(h > 0.0) {
                return Err(FlowError::NonpositiveCurvature { node: k, value: h, p });
            }
            let speed = power(h, p) - tau;
            Ok([speed * nu[0], speed * nu[1]])
        })
        .collect()
}

/// One Euler or Heun step of the normal flow. Negative `dt` steps backward.
pub fn flow_step_lagrangian(
    state: &ParametricState,
    dt: f64,
    p: f64,
    tau: f64,
    integrator: Integrator,
) -> Result<ParametricState> {
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let k1 = velocity(state, p, tau)?;
    let euler: Vec<[f64; 2]> = state
        .positions
        .iter()
        .zip(&k1)
        .map(|(x, v)| [x[0] + dt * v[0], x[1] + dt * v[1]])
        .collect();
    let positions = match integrator {
        Integrator::Euler => euler,
        Integrator::Rk2 => {
            let stage = ParametricState::new(state.t + dt, euler, Arc::clone(&state.chart))?;
            let k2 = velocity(&stage, p, tau)?;
            state
                .positions
                .iter()
                .zip(k1.iter().zip(&k2))
                .map(|(x, (a, b))| {
                    [
                        x[0] + 0.5 * dt * (a[0] + b[0]),
                        x[1] + 0.5 * dt * (a[1] + b[1]),
                    ]
                })
                .collect()
        }
    };
    ParametricState::new(state.t + dt, positions, Arc::clone(&state.chart))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Identity {
    #[serde(rename = "metric_evolution")]
    MetricEvolution,
    #[serde(rename = "H_evolution")]
    HEvolution,
    #[serde(rename = "Hp_evolution")]
    HpEvolution,
    #[serde(rename = "mixed_hij")]
    MixedHij,
    #[serde(rename = "tilt")]
    Tilt,
    #[serde(rename = "codazzi")]
    Codazzi,
    #[serde(rename = "gauss")]
    Gauss,
}

impl Identity {
    pub const ALL: [Identity; 7] = [
        Identity::MetricEvolution,
        Identity::HEvolution,
        Identity::HpEvolution,
        Identity::MixedHij,
        Identity::Tilt,
        Identity::Codazzi,
        Identity::Gauss,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Identity::MetricEvolution => "metric_evolution",
            Identity::HEvolution => "H_evolution",
            Identity::HpEvolution => "Hp_evolution",
            Identity::MixedHij => "mixed_hij",
            Identity::Tilt => "tilt",
            Identity::Codazzi => "codazzi",
            Identity::Gauss => "gauss",
        }
    }

    /// Structure equations hold pointwise; nothing is time-differenced.
    pub fn is_static(&self) -> bool {
        matches!(self, Identity::Codazzi | Identity::Gauss)
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Identity {
    type Err = FlowError;
    fn from_str(s: &str) -> Result<Self> {
        Identity::ALL
            .iter()
            .copied()
            .find(|i| i.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FlowError::Config(format!("unknown identity '{s}'")))
    }
}

/// Named initial curves for the identity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fixture {
    /// `(0.3 sin xi, xi)` in the flat torus, `p = 1`, `tau = 0`.
    #[serde(rename = "minkowski")]
    MinkowskiSinusoid,
    /// `(1 + 0.1 sin xi, xi)` in the crossing Robertson-Walker chart,
    /// `p = 1/2`, `tau = 0.2`.
    #[serde(rename = "robertson-walker")]
    RobertsonWalkerSinusoid,
}

impl Fixture {
    pub const ALL: [Fixture; 2] = [Fixture::MinkowskiSinusoid, Fixture::RobertsonWalkerSinusoid];

    pub fn name(&self) -> &'static str {
        match self {
            Fixture::MinkowskiSinusoid => "minkowski",
            Fixture::RobertsonWalkerSinusoid => "robertson-walker",
        }
    }

    pub fn chart(&self) -> Arc<SpacetimeChart> {
        let chart = match self {
            Fixture::MinkowskiSinusoid => SpacetimeChart::minkowski(1),
            Fixture::RobertsonWalkerSinusoid => {
                SpacetimeChart::robertson_walker(1, ScaleFactor::crossing(1))
            }
        };
        Arc::new(chart.expect("built-in fixture chart"))
    }

    /// `(p, tau)` of the fixture flow.
    pub fn exponents(&self) -> (f64, f64) {
        match self {
            Fixture::MinkowskiSinusoid => (1.0, 0.0),
            Fixture::RobertsonWalkerSinusoid => (0.5, 0.2),
        }
    }

    pub fn initial(&self, samples: usize) -> Result<ParametricState> {
        match self {
            Fixture::MinkowskiSinusoid => {
                ParametricState::graph(self.chart(), samples, |xi| 0.3 * xi.sin())
            }
            Fixture::RobertsonWalkerSinusoid => {
                ParametricState::graph(self.chart(), samples, |xi| 1.0 + 0.1 * xi.sin())
            }
        }
    }
}

impl FromStr for Fixture {
    type Err = FlowError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minkowski" => Ok(Fixture::MinkowskiSinusoid),
            "robertson-walker" | "rw" => Ok(Fixture::RobertsonWalkerSinusoid),
            other => Err(FlowError::Config(format!("unknown fixture '{other}'"))),
        }
    }
}

/// Ambient curvature of a 1+1 chart: `R_abcd = K (g_ac g_bd - g_ad g_bc)`.
fn riemann(k: f64, g: &Mat3, a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    let q = |x: &Vec3, y: &Vec3| linalg::quad(g, x, y, 2);
    k * (q(a, c) * q(b, d) - q(a, d) * q(b, c))
}

/// `(grad_e R)_abcd X^e = (dK . X) (g_ac g_bd - g_ad g_bc)` in two dimensions.
fn riemann_gradient(dk: &Vec3, g: &Mat3, a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> f64 {
    let directional = dk[0] * e[0] + dk[1] * e[1];
    riemann(directional, g, a, b, c, d)
}

fn gauss_curvature_gradient(chart: &SpacetimeChart, pt: &ChartPoint) -> Result<Vec3> {
    let step = 1e-5;
    let k0p = chart.gauss_curvature(&chart.point(pt.x0 + step, &[pt.x[0]]))?;
    let k0m = chart.gauss_curvature(&chart.point(pt.x0 - step, &[pt.x[0]]))?;
    let k1p = chart.gauss_curvature(&chart.point(pt.x0, &[pt.x[0] + step]))?;
    let k1m = chart.gauss_curvature(&chart.point(pt.x0, &[pt.x[0] - step]))?;
    Ok([(k0p - k0m) / (2.0 * step), (k1p - k1m) / (2.0 * step), 0.0])
}

fn periodic_d1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|k| (f[(k + 1) % n] - f[(k + n - 1) % n]) / (2.0 * h))
        .collect()
}

fn periodic_d2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|k| (f[(k + 1) % n] - 2.0 * f[k] + f[(k + n - 1) % n]) / (h * h))
        .collect()
}

/// Laplace-Beltrami operator on the curve, `g^11 (f'' - G^1_11 f')`.
fn laplacian(f: &[f64], g11: &[f64], h: f64) -> Vec<f64> {
    let d1 = periodic_d1(f, h);
    let d2 = periodic_d2(f, h);
    let dg = periodic_d1(g11, h);
    (0..f.len())
        .map(|k| {
            let ginv = 1.0 / g11[k];
            let gamma = 0.5 * ginv * dg[k];
            ginv * (d2[k] - gamma * d1[k])
        })
        .collect()
}

fn tilt_field(chart: &SpacetimeChart, geo: &CurveGeometry) -> Result<Vec<f64>> {
    geo.points
        .iter()
        .zip(&geo.nu)
        .map(|(pt, nu)| {
            let jet = chart.eta_jet(pt)?;
            Ok(jet.eta[0] * nu[0] + jet.eta[1] * nu[1])
        })
        .collect()
}

/// Quantity whose material derivative forms the left-hand side.
fn tracked_quantity(identity: Identity, chart: &SpacetimeChart, geo: &CurveGeometry, p: f64) -> Result<Vec<f64>> {
    Ok(match identity {
        Identity::MetricEvolution => geo.g11.clone(),
        Identity::HEvolution => geo.h_mean.clone(),
        Identity::HpEvolution => geo.h_mean.iter().map(|&h| power(h, p)).collect(),
        Identity::MixedHij => geo.h11.iter().zip(&geo.g11).map(|(h, g)| h / g).collect(),
        Identity::Tilt => tilt_field(chart, geo)?,
        Identity::Codazzi | Identity::Gauss => vec![0.0; geo.g11.len()],
    })
}

/// Scalars shared by the right-hand sides at one sample.
struct Local {
    h: f64,
    hp: f64,
    speed: f64,
    lead: f64,
    ginv: f64,
    norm_a2: f64,
    ric_nn: f64,
    k: f64,
    dk: Vec3,
    g: Mat3,
    nu: Vec3,
    x1: Vec3,
}

fn h_power_m2(h: f64, p: f64) -> f64 {
    if p == 1.0 {
        0.0
    } else {
        h.powf(p - 2.0)
    }
}

/// Right-hand sides assembled term by term at the base state.
fn assemble_rhs(
    identity: Identity,
    chart: &SpacetimeChart,
    geo: &CurveGeometry,
    spacing: f64,
    p: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    let len = geo.g11.len();
    let hs = &geo.h_mean;
    let hp: Vec<f64> = hs.iter().map(|&h| power(h, p)).collect();
    let mixed: Vec<f64> = geo.h11.iter().zip(&geo.g11).map(|(h, g)| h / g).collect();
    let lap_h = laplacian(hs, &geo.g11, spacing);
    let lap_hp = laplacian(&hp, &geo.g11, spacing);
    let lap_mixed = laplacian(&mixed, &geo.g11, spacing);
    let dh = periodic_d1(hs, spacing);
    let dh11 = periodic_d1(&geo.h11, spacing);

    let mut out = Vec::with_capacity(len);
    for s in 0..len {
        let pt = &geo.points[s];
        let g = geo.metric[s];
        let nu = geo.nu[s];
        let ric = chart.ricci(pt)?;
        let loc = Local {
            h: hs[s],
            hp: hp[s],
            speed: hp[s] - tau,
            lead: if p == 1.0 { 1.0 } else { p * hs[s].powf(p - 1.0) },
            ginv: 1.0 / geo.g11[s],
            norm_a2: geo.norm_a2[s],
            ric_nn: linalg::quad(&ric, &nu, &nu, 2),
            k: chart.gauss_curvature(pt)?,
            dk: gauss_curvature_gradient(chart, pt)?,
            g,
            nu,
            x1: geo.tangent[s],
        };
        let grad_h2 = loc.ginv * dh[s] * dh[s];
        let value = match identity {
            Identity::MetricEvolution => 2.0 * loc.speed * geo.h11[s],
            Identity::HEvolution => {
                loc.lead * lap_h[s] + p * (p - 1.0) * h_power_m2(loc.h, p) * grad_h2
                    - loc.speed * (loc.norm_a2 + loc.ric_nn)
            }
            Identity::HpEvolution => {
                loc.lead * lap_hp[s] - loc.lead * (loc.norm_a2 + loc.ric_nn) * loc.speed
            }
            Identity::MixedHij => mixed_rhs(&loc, mixed[s], lap_mixed[s], dh[s], geo.h11[s], p, tau),
            Identity::Tilt => {
                let jet = chart.eta_jet(pt)?;
                let x1 = loc.x1;
                let eta_xx = bilinear(&jet.first, &x1, &x1);
                let eta_nn = bilinear(&jet.first, &nu, &nu);
                let mut eta2 = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        for c in 0..2 {
                            eta2 += jet.second[a][b][c] * nu[a] * x1[b] * x1[c];
                        }
                    }
                }
                let eta_x = jet.eta[0] * x1[0] + jet.eta[1] * x1[1];
                let ric_nx = linalg::quad(&ric, &nu, &x1, 2);
                let vt = jet.eta[0] * nu[0] + jet.eta[1] * nu[1];
                let h_upper = loc.ginv * loc.ginv * geo.h11[s];
                -loc.lead * loc.norm_a2 * vt
                    - 2.0 * loc.lead * h_upper * eta_xx
                    - loc.lead * loc.ginv * eta2
                    - loc.lead * ric_nx * eta_x * loc.ginv
                    - (p - 1.0) * loc.hp * eta_nn
                    - tau * eta_nn
            }
            // the index form degenerates in one dimension; keep it literal
            #[allow(clippy::eq_op)]
            Identity::Codazzi => {
                // h_11,1 - h_11,1 against Rbar(nu, x1, x1, x1)
                (dh11[s] - dh11[s]) - riemann(loc.k, &g, &nu, &loc.x1, &loc.x1, &loc.x1)
            }
            #[allow(clippy::eq_op)]
            Identity::Gauss => {
                // intrinsic R_1111 of a curve vanishes
                let extrinsic = -(geo.h11[s] * geo.h11[s] - geo.h11[s] * geo.h11[s]);
                0.0 - (extrinsic + riemann(loc.k, &g, &loc.x1, &loc.x1, &loc.x1, &loc.x1))
            }
        };
        out.push(value);
    }
    Ok(out)
}

fn bilinear(m: &Mat3, a: &Vec3, b: &Vec3) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += m[i][j] * a[i] * b[j];
        }
    }
    s
}

/// Evolution of the mixed tensor `h_1^1` with every curvature term written
/// out; in one space dimension the fully tangential contractions vanish by
/// antisymmetry and the gradient terms vanish because `nu` is normal.
fn mixed_rhs(loc: &Local, h11_mixed: f64, lap_mixed: f64, dh: f64, h11: f64, p: f64, tau: f64) -> f64 {
    let (g, nu, x) = (&loc.g, &loc.nu, &loc.x1);
    let gi = loc.ginv;
    let h_upper = gi * gi * h11;
    let r_nxnx = riemann(loc.k, g, nu, x, nu, x);
    let r_xxxx = riemann(loc.k, g, x, x, x, x);
    let mut v = loc.lead * lap_mixed - loc.lead * (loc.norm_a2 + loc.ric_nn) * h11_mixed;
    v += (p - 1.0) * loc.hp * h11_mixed * h11_mixed;
    v += tau * h11_mixed * h11_mixed;
    v += p * (p - 1.0) * h_power_m2(loc.h, p) * dh * (gi * dh);
    v += 2.0 * loc.lead * r_xxxx * h_upper * gi;
    v += tau * r_nxnx * gi;
    v -= loc.lead * gi * r_xxxx * (h11_mixed * gi + h_upper);
    v += (p - 1.0) * loc.hp * r_nxnx * gi;
    let grad1 = riemann_gradient(&loc.dk, g, nu, x, x, x, x);
    let grad2 = riemann_gradient(&loc.dk, g, nu, x, x, x, x);
    v += loc.lead * gi * (grad1 * gi + grad2 * gi);
    v
}

/// Pointwise residual `LHS - RHS` of an identity for a base state.
pub fn residual_field(
    identity: Identity,
    base: &ParametricState,
    dt: f64,
    p: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    let chart = &base.chart;
    let geo = curve_geometry(base)?;
    let rhs = assemble_rhs(identity, chart, &geo, base.spacing(), p, tau)?;
    if identity.is_static() {
        return Ok(rhs);
    }
    let fwd = flow_step_lagrangian(base, dt, p, tau, Integrator::Euler)?;
    let bwd = flow_step_lagrangian(base, -dt, p, tau, Integrator::Euler)?;
    let qf = tracked_quantity(identity, chart, &curve_geometry(&fwd)?, p)?;
    let qb = tracked_quantity(identity, chart, &curve_geometry(&bwd)?, p)?;
    let mut lhs: Vec<f64> = qf.iter().zip(&qb).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
    if identity == Identity::Tilt {
        let vt = tilt_field(chart, &geo)?;
        let lap = laplacian(&vt, &geo.g11, base.spacing());
        for (s, l) in lhs.iter_mut().enumerate() {
            let lead = if p == 1.0 { 1.0 } else { p * geo.h_mean[s].powf(p - 1.0) };
            *l -= lead * lap[s];
        }
    }
    Ok(lhs.iter().zip(&rhs).map(|(l, r)| l - r).collect())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, r| m.max(r.abs()))
}

pub fn max_residual(identity: Identity, fixture: Fixture, dt: f64, samples: usize) -> Result<f64> {
    let (p, tau) = fixture.exponents();
    let base = fixture.initial(samples)?;
    Ok(sup_norm(&residual_field(identity, &base, dt, p, tau)?))
}

/// Part of the residual due to `dt` alone: the pointwise difference from the
/// residual at `reference_dt` on the same samples, which cancels the
/// spatial truncation.
pub fn temporal_residual(
    identity: Identity,
    fixture: Fixture,
    dt: f64,
    reference_dt: f64,
    samples: usize,
) -> Result<f64> {
    let (p, tau) = fixture.exponents();
    let base = fixture.initial(samples)?;
    let coarse = residual_field(identity, &base, dt, p, tau)?;
    let fine = residual_field(identity, &base, reference_dt, p, tau)?;
    let diff: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| a - b).collect();
    Ok(sup_norm(&diff))
}

/// Refinement ladder: `levels` halvings of `dt` (at `fine_samples`) and
/// `levels` doublings of the sample count (at `fine_dt`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementPlan {
    pub levels: usize,
    pub coarse_dt: f64,
    pub coarse_samples: usize,
    pub fine_dt: f64,
    pub fine_samples: usize,
}

impl RefinementPlan {
    pub fn with_levels(levels: usize) -> Self {
        Self {
            levels,
            ..Self::default()
        }
    }

    pub fn dt_list(&self) -> Vec<f64> {
        (0..self.levels).map(|i| self.coarse_dt / 2f64.powi(i as i32)).collect()
    }

    pub fn sample_list(&self) -> Vec<usize> {
        (0..self.levels).map(|i| self.coarse_samples << i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 3 {
            return Err(FlowError::Config(format!(
                "a slope fit needs at least 3 refinement levels, got {}",
                self.levels
            )));
        }
        if !(self.coarse_dt > 0.0 && self.fine_dt > 0.0) || self.coarse_samples < 8 {
            return Err(FlowError::Config("refinement plan needs positive steps and >= 8 samples".into()));
        }
        Ok(())
    }
}

impl Default for RefinementPlan {
    fn default() -> Self {
        Self {
            levels: 4,
            coarse_dt: 0.2,
            coarse_samples: 32,
            fine_dt: 1e-4,
            fine_samples: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub dt: f64,
    pub h: f64,
    pub max_residual: f64,
    /// Temporal part of the residual; only filled on the `dt` series.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub temporal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub identity: Identity,
    pub fixture: Fixture,
    /// Residual against `dt` at `fine_samples`.
    pub dt_series: Vec<ResidualPoint>,
    /// Residual against `h` at `fine_dt`.
    pub h_series: Vec<ResidualPoint>,
    /// Joint refinement `(dt_i, h_i)`.
    pub joint_series: Vec<ResidualPoint>,
    pub slope_dt: Option<f64>,
    pub slope_h: Option<f64>,
    /// Every residual at or below [`tolerances::EXACT_RESIDUAL`].
    pub exact: bool,
    /// The time quotient is exact for this identity: the temporal part sits
    /// at roundoff on every level.
    pub exact_in_dt: bool,
    pub passed: bool,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

pub fn verify_identity(identity: Identity, fixture: Fixture, plan: &RefinementPlan) -> Result<ResidualReport> {
    plan.validate()?;
    let period = fixture.chart().periods()[0];
    let spacing = |samples: usize| period / samples as f64;
    let point = |dt: f64, samples: usize| -> Result<ResidualPoint> {
        Ok(ResidualPoint {
            dt,
            h: spacing(samples),
            max_residual: max_residual(identity, fixture, dt, samples)?,
            temporal: None,
        })
    };
    let dts = plan.dt_list();
    let samples = plan.sample_list();
    let dt_series = dts
        .iter()
        .map(|&dt| {
            let mut pt = point(dt, plan.fine_samples)?;
            pt.temporal = Some(if identity.is_static() {
                0.0
            } else {
                temporal_residual(identity, fixture, dt, plan.fine_dt, plan.fine_samples)?
            });
            Ok(pt)
        })
        .collect::<Result<Vec<_>>>()?;
    let h_series = samples
        .iter()
        .map(|&s| point(plan.fine_dt, s))
        .collect::<Result<Vec<_>>>()?;
    let joint_series = dts
        .iter()
        .zip(&samples)
        .map(|(&dt, &s)| point(dt, s))
        .collect::<Result<Vec<_>>>()?;

    let all = dt_series.iter().chain(&h_series).chain(&joint_series);
    let exact = all.clone().all(|r| r.max_residual <= tolerances::EXACT_RESIDUAL);
    let exact_in_dt = dt_series
        .iter()
        .all(|r| r.temporal.unwrap_or(0.0) <= tolerances::EXACT_TEMPORAL);
    let (slope_dt, slope_h) = if exact {
        (None, None)
    } else {
        let xs: Vec<f64> = dt_series.iter().map(|r| r.dt).collect();
        let ys: Vec<f64> = dt_series.iter().map(|r| r.temporal.unwrap_or(0.0)).collect();
        let hx: Vec<f64> = h_series.iter().map(|r| r.h).collect();
        let hy: Vec<f64> = h_series.iter().map(|r| r.max_residual).collect();
        let sdt = if exact_in_dt { None } else { fit_slope(&xs, &ys) };
        (sdt, fit_slope(&hx, &hy))
    };
    let joint_decreasing = joint_series
        .windows(2)
        .all(|w| w[1].max_residual <= w[0].max_residual);
    let passed = if exact {
        true
    } else {
        (exact_in_dt || slope_dt.is_some_and(|s| s >= tolerances::MIN_SLOPE_DT))
            && slope_h.is_some_and(|s| s >= tolerances::MIN_SLOPE_H)
            && joint_decreasing
    };
    Ok(ResidualReport {
        identity,
        fixture,
        dt_series,
        h_series,
        joint_series,
        slope_dt,
        slope_h,
        exact,
        exact_in_dt,
        passed,
    })
}

/// Evolution of `H^p` obtained from the `H` equation by the chain rule,
/// written with `Delta H^p = p H^{p-1} Delta H + p (p-1) H^{p-2} |grad H|^2`.
pub fn hp_rhs_from_h_terms(h: f64, lap_h: f64, grad_h2: f64, reaction: f64, p: f64, tau: f64) -> f64 {
    let lead = p * h.powf(p - 1.0);
    let lap_hp = lead * lap_h + p * (p - 1.0) * h.powf(p - 2.0) * grad_h2;
    lead * lap_hp - lead * reaction * (h.powf(p) - tau)
}

/// Right-hand side of the `H` equation from the same scalars.
pub fn h_rhs_from_h_terms(h: f64, lap_h: f64, grad_h2: f64, reaction: f64, p: f64, tau: f64) -> f64 {
    p * h.powf(p - 1.0) * lap_h + p * (p - 1.0) * h.powf(p - 2.0) * grad_h2
        - (h.powf(p) - tau) * reaction
}

/// Default period of the fixtures.
pub const FIXTURE_PERIOD: f64 = TAU;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_slice_in_minkowski_is_flat() {
        let chart = Arc::new(SpacetimeChart::minkowski(1).unwrap());
        let s = ParametricState::graph(chart, 32, |_| 0.4).unwrap();
        let geo = curve_geometry(&s).unwrap();
        for k in 0..s.len() {
            assert_eq!(geo.h11[k], 0.0);
            assert_eq!(geo.h_mean[k], 0.0);
            assert!((geo.g11[k] - 1.0).abs() < 1e-12);
            assert_eq!(geo.nu[k][0], -1.0);
        }
    }

    #[test]
    fn slice_in_exp_decay_has_unit_mean_curvature() {
        let chart = Arc::new(SpacetimeChart::robertson_walker(1, ScaleFactor::exp_decay()).unwrap());
        let s = ParametricState::graph(chart, 32, |_| 0.0).unwrap();
        let geo = curve_geometry(&s).unwrap();
        for h in &geo.h_mean {
            assert!((h - 1.0).abs() < 1e-12, "H = {h}");
        }
    }

    #[test]
    fn normal_is_unit_past_directed_and_orthogonal() {
        let fx = Fixture::RobertsonWalkerSinusoid;
        let s = fx.initial(64).unwrap();
        let geo = curve_geometry(&s).unwrap();
        for k in 0..s.len() {
            let g = &geo.metric[k];
            assert!((linalg::quad(g, &geo.nu[k], &geo.nu[k], 2) + 1.0).abs() < 1e-12);
            assert!(linalg::quad(g, &geo.nu[k], &geo.tangent[k], 2).abs() < 1e-12);
            assert!(geo.nu[k][0] < 0.0);
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let s = Fixture::MinkowskiSinusoid.initial(32).unwrap();
        let s2 = flow_step_lagrangian(&s, 0.0, 1.0, 0.0, Integrator::Euler).unwrap();
        assert_eq!(s.positions, s2.positions);
    }

    #[test]
    fn minkowski_slice_is_stationary() {
        let chart = Arc::new(SpacetimeChart::minkowski(1).unwrap());
        let s = ParametricState::graph(chart, 32, |_| 0.25).unwrap();
        let s2 = flow_step_lagrangian(&s, 0.1, 1.0, 0.0, Integrator::Rk2).unwrap();
        assert_eq!(s.positions, s2.positions);
    }

    #[test]
    fn exp_decay_slice_moves_down_uniformly() {
        let chart = Arc::new(SpacetimeChart::robertson_walker(1, ScaleFactor::exp_decay()).unwrap());
        let s = ParametricState::graph(chart, 32, |_| 0.0).unwrap();
        let (p, tau, dt) = (0.5, 0.25, 0.01);
        let s2 = flow_step_lagrangian(&s, dt, p, tau, Integrator::Euler).unwrap();
        for (a, b) in s.positions.iter().zip(&s2.positions) {
            assert!((b[0] - (a[0] - dt * (1.0 - tau))).abs() < 1e-14);
            assert!((b[1] - a[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn fractional_power_rejects_nonpositive_curvature() {
        let s = Fixture::MinkowskiSinusoid.initial(32).unwrap();
        assert!(matches!(
            flow_step_lagrangian(&s, 0.01, 0.5, 0.0, Integrator::Euler),
            Err(FlowError::NonpositiveCurvature { .. })
        ));
    }

    #[test]
    fn structure_equations_vanish_identically() {
        for fx in Fixture::ALL {
            for id in [Identity::Codazzi, Identity::Gauss] {
                assert_eq!(max_residual(id, fx, 0.01, 64).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn curvature_gradient_terms_vanish_in_two_dimensions() {
        // With R = K (g g - g g), every gradient term pairs nu with a tangent
        // slot through the metric, and <nu, x> = 0.
        let fx = Fixture::RobertsonWalkerSinusoid;
        let s = fx.initial(64).unwrap();
        let geo = curve_geometry(&s).unwrap();
        let chart = fx.chart();
        for k in 0..s.len() {
            let dk = gauss_curvature_gradient(&chart, &geo.points[k]).unwrap();
            assert!(dk[0].abs() > 0.1, "crossing chart has varying curvature");
            let x = geo.tangent[k];
            let nu = geo.nu[k];
            let g = geo.metric[k];
            assert!(riemann_gradient(&dk, &g, &nu, &x, &x, &x, &x).abs() < 1e-12);
        }
    }

    #[test]
    fn flipped_ricci_sign_does_not_converge() {
        // Reversing the sign of the Ricci reaction adds 2 (H^p - tau) Ric(nu, nu),
        // an O(1) defect that refinement cannot remove.
        let fx = Fixture::RobertsonWalkerSinusoid;
        let (p, tau) = fx.exponents();
        let chart = fx.chart();
        let defect = |samples: usize, dt: f64| {
            let base = fx.initial(samples).unwrap();
            let geo = curve_geometry(&base).unwrap();
            let res = residual_field(Identity::HEvolution, &base, dt, p, tau).unwrap();
            res.iter()
                .enumerate()
                .map(|(k, r)| {
                    let ric = chart.ricci(&geo.points[k]).unwrap();
                    let rnn = linalg::quad(&ric, &geo.nu[k], &geo.nu[k], 2);
                    (r - 2.0 * (power(geo.h_mean[k], p) - tau) * rnn).abs()
                })
                .fold(0.0, f64::max)
        };
        let coarse = defect(64, 0.01);
        let fine = defect(256, 0.0025);
        assert!(fine > 0.5 * coarse, "coarse {coarse}, fine {fine}");
        assert!(fine > 1e-2);
    }

    #[test]
    fn plateau_series_fails_slope_threshold() {
        let x = [0.1, 0.05, 0.025, 0.0125];
        let y = [1e-3, 9.9e-4, 9.8e-4, 9.8e-4];
        assert!(fit_slope(&x, &y).unwrap() < tolerances::MIN_SLOPE_DT);
        let y2: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!((fit_slope(&x, &y2).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_slope(&x, &[0.0; 4]).is_none());
    }

    #[test]
    fn chain_rule_consistency() {
        for &(h, lap, grad, react, p, tau) in &[
            (0.8, 0.3, 0.02, 1.1, 0.5, 0.2),
            (1.7, -2.0, 0.5, -0.3, 0.25, 0.0),
            (0.3, 4.0, 1.5, 2.0, 0.9, 0.1),
        ] {
            let hp = hp_rhs_from_h_terms(h, lap, grad, react, p, tau);
            let chain = p * h.powf(p - 1.0) * h_rhs_from_h_terms(h, lap, grad, react, p, tau);
            assert!((hp - chain).abs() <= 1e-10);
        }
    }

    #[test]
    fn identity_names_round_trip() {
        for id in Identity::ALL {
            assert_eq!(id.name().parse::<Identity>().unwrap(), id);
        }
        assert!("nope".parse::<Identity>().is_err());
    }

    #[test]
    fn plan_rejects_too_few_levels() {
        assert!(RefinementPlan::with_levels(2).validate().is_err());
    }
}
