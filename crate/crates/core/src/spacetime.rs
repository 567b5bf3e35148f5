//! Ambient Lorentzian charts of the form
//! `e^{2 psi} ( -(dx^0)^2 + sigma_ij dx^i dx^j )` over a flat torus.
//!
//! Ambient indices are `0` (time) and `1..=n` (space). Every routine returns
//! fixed-size arrays padded to three ambient slots; only the leading
//! `n + 1` entries are meaningful.
//!
//! The curvature convention is
//! `R^a_{bcd} = d_c G^a_{db} - d_d G^a_{cb} + G^a_{ce} G^e_{db} - G^a_{de} G^e_{cb}`
//! with Ricci `R_bd = R^a_{bad}`. Under it Minkowski is flat and the
//! homogeneous-slice reduction of the mean curvature evolution closes with
//! the `+ Ric(nu, nu)` sign carried by the reaction term.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::linalg::{self, Mat2, Mat3, Rank3, Rank4, Vec3, ZERO3, ZERO_RANK3, ZERO_RANK4};

/// Default metric differencing step for custom charts.
pub const CUSTOM_FD_STEP: f64 = 1e-5;
/// Timelike unit-norm tolerance accepted by [`SpacetimeChart::ricci_timelike`].
pub const UNIT_TIMELIKE_TOL: f64 = 1e-10;
/// Default boost rapidities sampled by [`lambda_bound`].
pub const DEFAULT_RAPIDITIES: [f64; 3] = [0.0, 0.5, 1.0];

/// A point `(x^0, x)`; spatial coordinates are reduced into `[0, L_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub x0: f64,
    pub x: [f64; 2],
}

impl ChartPoint {
    pub fn coords(&self) -> Vec3 {
        [self.x0, self.x[0], self.x[1]]
    }
}

/// Scale function `a(x^0)` of a Robertson-Walker chart with its first two
/// derivatives in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScaleFactor {
    /// `a = exp(rate * t)`.
    Exponential { rate: f64 },
    /// `a = exp(-t^2 / (2 width))`. With `width = n` the coordinate slice at
    /// `x^0 = t` has mean curvature exactly `t`.
    Gaussian { width: f64 },
}

impl ScaleFactor {
    /// The `exp(-t)` preset.
    pub fn exp_decay() -> Self {
        ScaleFactor::Exponential { rate: -1.0 }
    }

    /// The crossing preset for spatial dimension `n`.
    pub fn crossing(n: usize) -> Self {
        ScaleFactor::Gaussian { width: n as f64 }
    }

    /// Resolve a named preset (`exp(-t)`, `exp(t)`, `crossing`).
    pub fn preset(name: &str, n: usize) -> Option<Self> {
        match name.trim() {
            "exp(-t)" | "exp-decay" => Some(Self::exp_decay()),
            "exp(t)" | "exp-growth" => Some(ScaleFactor::Exponential { rate: 1.0 }),
            "crossing" => Some(Self::crossing(n)),
            _ => None,
        }
    }

    /// `(a, a', a'')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            ScaleFactor::Exponential { rate } => {
                let a = (rate * t).exp();
                (a, rate * a, rate * rate * a)
            }
            ScaleFactor::Gaussian { width } => {
                let a = (-t * t / (2.0 * width)).exp();
                let s = t / width;
                (a, -s * a, (s * s - 1.0 / width) * a)
            }
        }
    }
}

pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type SpatialMetricField = Arc<dyn Fn(f64, &[f64]) -> Mat2 + Send + Sync>;

/// User-supplied conformal factor and spatial metric. All derivatives are
/// taken by centered differences.
#[derive(Clone)]
pub struct CustomMetric {
    pub psi: ScalarField,
    pub sigma: SpatialMetricField,
    /// Step for metric derivatives; connection derivatives use ten times it.
    pub fd_step: f64,
}

impl CustomMetric {
    pub fn new(psi: ScalarField, sigma: SpatialMetricField) -> Self {
        Self {
            psi,
            sigma,
            fd_step: CUSTOM_FD_STEP,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }
}

impl fmt::Debug for CustomMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMetric")
            .field("fd_step", &self.fd_step)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    MinkowskiTorus,
    RobertsonWalker(ScaleFactor),
    Custom(CustomMetric),
}

/// Value, gradient and Hessian of a scalar field in ambient coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarJet {
    pub value: f64,
    pub grad: Vec3,
    pub hess: Mat3,
}

impl ScalarJet {
    fn zero() -> Self {
        Self {
            value: 0.0,
            grad: [0.0; 3],
            hess: ZERO3,
        }
    }
}

/// The covector `eta = e^psi (-1, 0, .., 0)` with its first two covariant
/// derivatives `eta_{a;b}` and `eta_{a;b;c}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaJet {
    pub eta: Vec3,
    pub first: Mat3,
    pub second: Rank3,
}

#[derive(Debug, Clone)]
pub struct SpacetimeChart {
    n: usize,
    periods: [f64; 2],
    family: Family,
}

impl SpacetimeChart {
    pub fn new(n: usize, family: Family) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(FlowError::Contract(format!(
                "spatial dimension must be 1 or 2, got {n}"
            )));
        }
        Ok(Self {
            n,
            periods: [TAU; 2],
            family,
        })
    }

    pub fn minkowski(n: usize) -> Result<Self> {
        Self::new(n, Family::MinkowskiTorus)
    }

    pub fn robertson_walker(n: usize, scale: ScaleFactor) -> Result<Self> {
        Self::new(n, Family::RobertsonWalker(scale))
    }

    pub fn custom(n: usize, metric: CustomMetric) -> Result<Self> {
        Self::new(n, Family::Custom(metric))
    }

    pub fn with_periods(mut self, periods: [f64; 2]) -> Result<Self> {
        if periods[..self.n].iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(FlowError::Contract(format!(
                "torus periods must be positive, got {periods:?}"
            )));
        }
        self.periods = periods;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn periods(&self) -> [f64; 2] {
        self.periods
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn point(&self, x0: f64, x: &[f64]) -> ChartPoint {
        let mut reduced = [0.0; 2];
        for i in 0..self.n {
            let l = self.periods[i];
            let r = x[i].rem_euclid(l);
            reduced[i] = if r >= l { 0.0 } else { r };
        }
        ChartPoint { x0, x: reduced }
    }

    fn check_point(&self, pt: &ChartPoint) -> Result<()> {
        if !pt.x0.is_finite() || pt.x[..self.n].iter().any(|v| !v.is_finite()) {
            return Err(FlowError::Domain(format!("non-finite chart point {pt:?}")));
        }
        Ok(())
    }

    pub fn psi_jet(&self, pt: &ChartPoint) -> Result<ScalarJet> {
        self.check_point(pt)?;
        match &self.family {
            Family::MinkowskiTorus | Family::RobertsonWalker(_) => Ok(ScalarJet::zero()),
            Family::Custom(c) => Ok(custom::psi_jet(self, c, pt)),
        }
    }

    /// `sigma_ij` at `pt`, rejected unless positive definite.
    pub fn sigma(&self, pt: &ChartPoint) -> Result<Mat2> {
        self.check_point(pt)?;
        let s = match &self.family {
            Family::MinkowskiTorus => linalg::identity2(),
            Family::RobertsonWalker(scale) => {
                let (a, _, _) = scale.eval(pt.x0);
                [[a * a, 0.0], [0.0, a * a]]
            }
            Family::Custom(c) => (c.sigma)(pt.x0, &pt.x[..self.n]),
        };
        self.check_sigma(&s, pt)?;
        Ok(s)
    }

    fn check_sigma(&self, s: &Mat2, pt: &ChartPoint) -> Result<()> {
        let sym = if self.n == 2 {
            [[s[0][0], 0.5 * (s[0][1] + s[1][0])], [0.5 * (s[0][1] + s[1][0]), s[1][1]]]
        } else {
            *s
        };
        let lo = linalg::min_eigenvalue_sym(&sym, self.n);
        if !(lo > 0.0) {
            return Err(FlowError::Domain(format!(
                "spatial metric not positive definite at {pt:?} (min eigenvalue {lo:e})"
            )));
        }
        Ok(())
    }

    /// `d sigma_ij / d x^0`.
    pub fn sigma_dot(&self, pt: &ChartPoint) -> Result<Mat2> {
        self.sigma(pt)?;
        Ok(match &self.family {
            Family::MinkowskiTorus => [[0.0; 2]; 2],
            Family::RobertsonWalker(scale) => {
                let (a, ad, _) = scale.eval(pt.x0);
                let d = 2.0 * a * ad;
                [[d, 0.0], [0.0, d]]
            }
            Family::Custom(c) => custom::sigma_dot(self, c, pt),
        })
    }

    /// Full ambient metric `g_ab`.
    pub fn metric(&self, pt: &ChartPoint) -> Result<Mat3> {
        let s = self.sigma(pt)?;
        let psi = self.psi_jet(pt)?.value;
        Ok(assemble_metric(self.n, psi, &s))
    }

    /// Ambient connection coefficients `G^a_{bc}` as `out[a][b][c]`.
    pub fn christoffel_bar(&self, pt: &ChartPoint) -> Result<Rank3> {
        self.sigma(pt)?;
        match &self.family {
            Family::MinkowskiTorus => Ok(ZERO_RANK3),
            Family::RobertsonWalker(scale) => Ok(rw::christoffel(self.n, scale, pt.x0)),
            Family::Custom(c) => custom::christoffel(self, c, pt),
        }
    }

    /// `d_m G^a_{bc}` as `out[m][a][b][c]`.
    pub fn christoffel_derivative(&self, pt: &ChartPoint) -> Result<Rank4> {
        self.sigma(pt)?;
        match &self.family {
            Family::MinkowskiTorus => Ok(ZERO_RANK4),
            Family::RobertsonWalker(scale) => Ok(rw::christoffel_derivative(self.n, scale, pt.x0)),
            Family::Custom(c) => custom::christoffel_derivative(self, c, pt),
        }
    }

    /// Ricci tensor `R_ab`. Closed form for the built-in families; custom
    /// charts contract differenced connection coefficients.
    pub fn ricci(&self, pt: &ChartPoint) -> Result<Mat3> {
        self.sigma(pt)?;
        match &self.family {
            Family::MinkowskiTorus => Ok(ZERO3),
            Family::RobertsonWalker(scale) => Ok(rw::ricci(self.n, scale, pt.x0)),
            Family::Custom(_) => {
                let gamma = self.christoffel_bar(pt)?;
                let dgamma = self.christoffel_derivative(pt)?;
                Ok(ricci_from_connection(self.dim(), &gamma, &dgamma))
            }
        }
    }

    /// `Ric(nu, nu)` for a unit timelike `nu`.
    pub fn ricci_timelike(&self, pt: &ChartPoint, nu: &Vec3) -> Result<f64> {
        let g = self.metric(pt)?;
        let d = self.dim();
        let norm = linalg::quad(&g, nu, nu, d);
        if (norm + 1.0).abs() > UNIT_TIMELIKE_TOL {
            return Err(FlowError::Contract(format!(
                "direction is not unit timelike: <nu, nu> = {norm:.12}"
            )));
        }
        let ric = self.ricci(pt)?;
        Ok(linalg::quad(&ric, nu, nu, d))
    }

    /// Second fundamental form of the coordinate slice through `pt`,
    /// `e^psi ( -sigma_dot/2 - psi_dot sigma )`.
    pub fn slice_second_fundamental_form(&self, pt: &ChartPoint) -> Result<Mat2> {
        let s = self.sigma(pt)?;
        let sd = self.sigma_dot(pt)?;
        let psi = self.psi_jet(pt)?;
        let e = psi.value.exp();
        let mut out = [[0.0; 2]; 2];
        for i in 0..self.n {
            for j in 0..self.n {
                out[i][j] = e * (-0.5 * sd[i][j] - psi.grad[0] * s[i][j]);
            }
        }
        Ok(out)
    }

    /// Mean curvature of the coordinate slice, traced with its induced
    /// metric `e^{2 psi} sigma`.
    pub fn slice_mean_curvature(&self, pt: &ChartPoint) -> Result<f64> {
        let h = self.slice_second_fundamental_form(pt)?;
        let s = self.sigma(pt)?;
        let psi = self.psi_jet(pt)?.value;
        let sinv = linalg::inverse2(&s, self.n)
            .ok_or_else(|| FlowError::Domain("singular spatial metric".into()))?;
        let mut tr = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                tr += sinv[i][j] * h[j][i];
            }
        }
        Ok((-2.0 * psi).exp() * tr)
    }

    /// Gauss curvature of a two-dimensional ambient chart (`n = 1`), where
    /// `R_abcd = K (g_ac g_bd - g_ad g_bc)` and `Ric = K g`.
    pub fn gauss_curvature(&self, pt: &ChartPoint) -> Result<f64> {
        if self.n != 1 {
            return Err(FlowError::Contract(
                "gauss curvature is only defined for 1+1 charts".into(),
            ));
        }
        let g = self.metric(pt)?;
        let ginv = linalg::inverse(&g, 2)
            .ok_or_else(|| FlowError::Domain("singular ambient metric".into()))?;
        let ric = self.ricci(pt)?;
        let mut scalar = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                scalar += ginv[a][b] * ric[a][b];
            }
        }
        Ok(0.5 * scalar)
    }

    /// `eta = e^psi (-1, 0, ..)` and its covariant derivatives.
    pub fn eta_jet(&self, pt: &ChartPoint) -> Result<EtaJet> {
        let d = self.dim();
        let psi = self.psi_jet(pt)?;
        let gamma = self.christoffel_bar(pt)?;
        let dgamma = self.christoffel_derivative(pt)?;
        let e = psi.value.exp();

        let mut eta = [0.0; 3];
        eta[0] = -e;
        // partial derivatives of eta_a: only a = 0 is nonzero
        let mut d_eta = ZERO3; // [a][b] = d_b eta_a
        let mut dd_eta = ZERO_RANK3; // [a][b][c] = d_c d_b eta_a
        for b in 0..d {
            d_eta[0][b] = -e * psi.grad[b];
            for c in 0..d {
                dd_eta[0][b][c] = -e * (psi.hess[b][c] + psi.grad[b] * psi.grad[c]);
            }
        }

        let mut first = ZERO3;
        for a in 0..d {
            for b in 0..d {
                let mut s = d_eta[a][b];
                for l in 0..d {
                    s -= gamma[l][b][a] * eta[l];
                }
                first[a][b] = s;
            }
        }

        let mut second = ZERO_RANK3;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    // d_c (eta_{a;b})
                    let mut s = dd_eta[a][b][c];
                    for l in 0..d {
                        s -= dgamma[c][l][b][a] * eta[l] + gamma[l][b][a] * d_eta[l][c];
                    }
                    for l in 0..d {
                        s -= gamma[l][c][a] * first[l][b] + gamma[l][c][b] * first[a][l];
                    }
                    second[a][b][c] = s;
                }
            }
        }
        Ok(EtaJet { eta, first, second })
    }

    /// Orthonormal frame `(e_0, e_1, .., e_n)` at `pt` with `e_0` future
    /// pointing along the slice normal.
    pub fn orthonormal_frame(&self, pt: &ChartPoint) -> Result<[Vec3; 3]> {
        let s = self.sigma(pt)?;
        let e = (-self.psi_jet(pt)?.value).exp();
        let mut frame = [[0.0; 3]; 3];
        frame[0][0] = e;
        if self.n == 1 {
            frame[1][1] = e / s[0][0].sqrt();
        } else {
            let a = s[0][0].sqrt();
            frame[1][1] = e / a;
            // Gram-Schmidt of d_2 against d_1 in sigma
            let proj = s[0][1] / s[0][0];
            let norm2 = s[1][1] - s[0][1] * s[0][1] / s[0][0];
            let inv = e / norm2.sqrt();
            frame[2][1] = -proj * inv;
            frame[2][2] = inv;
        }
        Ok(frame)
    }
}

pub fn assemble_metric(n: usize, psi: f64, sigma: &Mat2) -> Mat3 {
    let e2 = (2.0 * psi).exp();
    let mut g = ZERO3;
    g[0][0] = -e2;
    for i in 0..n {
        for j in 0..n {
            g[i + 1][j + 1] = e2 * sigma[i][j];
        }
    }
    g
}

/// Levi-Civita connection from the metric, its inverse and its partials
/// `dg[m][a][b] = d_m g_ab`.
pub fn levi_civita(dim: usize, ginv: &Mat3, dg: &Rank3) -> Rank3 {
    let mut out = ZERO_RANK3;
    for a in 0..dim {
        for b in 0..dim {
            for c in b..dim {
                let mut s = 0.0;
                for l in 0..dim {
                    s += ginv[a][l] * (dg[b][l][c] + dg[c][l][b] - dg[l][b][c]);
                }
                out[a][b][c] = 0.5 * s;
                out[a][c][b] = 0.5 * s;
            }
        }
    }
    out
}

/// Ricci contraction `R_bd = d_a G^a_{db} - d_d G^a_{ab} + G^a_{ae} G^e_{db} - G^a_{de} G^e_{ab}`.
pub fn ricci_from_connection(dim: usize, gamma: &Rank3, dgamma: &Rank4) -> Mat3 {
    let mut out = ZERO3;
    for b in 0..dim {
        for d in 0..dim {
            let mut s = 0.0;
            for a in 0..dim {
                s += dgamma[a][a][d][b] - dgamma[d][a][a][b];
                for e in 0..dim {
                    s += gamma[a][a][e] * gamma[e][d][b] - gamma[a][d][e] * gamma[e][a][b];
                }
            }
            out[b][d] = s;
        }
    }
    out
}

/// Closed forms for `-dt^2 + a(t)^2 delta_ij`.
mod rw {
    use super::*;

    pub fn christoffel(n: usize, scale: &ScaleFactor, t: f64) -> Rank3 {
        let (a, ad, _) = scale.eval(t);
        let hubble = ad / a;
        let mut out = ZERO_RANK3;
        for i in 1..=n {
            out[0][i][i] = a * ad;
            out[i][0][i] = hubble;
            out[i][i][0] = hubble;
        }
        out
    }

    pub fn christoffel_derivative(n: usize, scale: &ScaleFactor, t: f64) -> Rank4 {
        let (a, ad, add) = scale.eval(t);
        let dh = add / a - (ad / a) * (ad / a);
        let mut out = ZERO_RANK4;
        for i in 1..=n {
            out[0][0][i][i] = ad * ad + a * add;
            out[0][i][0][i] = dh;
            out[0][i][i][0] = dh;
        }
        out
    }

    pub fn ricci(n: usize, scale: &ScaleFactor, t: f64) -> Mat3 {
        let (a, ad, add) = scale.eval(t);
        let nf = n as f64;
        let mut out = ZERO3;
        out[0][0] = -nf * add / a;
        for i in 1..=n {
            out[i][i] = a * add + (nf - 1.0) * ad * ad;
        }
        out
    }
}

/// Finite-difference path for user-supplied metrics.
mod custom {
    use super::*;

    fn shifted(pt: &ChartPoint, axis: usize, delta: f64) -> (f64, [f64; 2]) {
        let mut x0 = pt.x0;
        let mut x = pt.x;
        if axis == 0 {
            x0 += delta;
        } else {
            x[axis - 1] += delta;
        }
        (x0, x)
    }

    fn psi_at(chart: &SpacetimeChart, c: &CustomMetric, x0: f64, x: &[f64; 2]) -> f64 {
        (c.psi)(x0, &x[..chart.n])
    }

    fn metric_at(chart: &SpacetimeChart, c: &CustomMetric, x0: f64, x: &[f64; 2]) -> Mat3 {
        let psi = psi_at(chart, c, x0, x);
        let s = (c.sigma)(x0, &x[..chart.n]);
        assemble_metric(chart.n, psi, &s)
    }

    pub fn psi_jet(chart: &SpacetimeChart, c: &CustomMetric, pt: &ChartPoint) -> ScalarJet {
        let d = chart.dim();
        let h = c.fd_step;
        // second derivatives need a wider step to keep round-off in check
        let h2 = 10.0 * h;
        let f = |m: usize, dm: f64, k: usize, dk: f64| {
            let (x0, x) = shifted(pt, m, dm);
            let p2 = ChartPoint { x0, x };
            let (x0, x) = shifted(&p2, k, dk);
            psi_at(chart, c, x0, &x)
        };
        let value = psi_at(chart, c, pt.x0, &pt.x);
        let mut grad = [0.0; 3];
        let mut hess = ZERO3;
        for m in 0..d {
            grad[m] = (f(m, h, 0, 0.0) - f(m, -h, 0, 0.0)) / (2.0 * h);
            for k in 0..d {
                hess[m][k] = if m == k {
                    (f(m, h2, 0, 0.0) - 2.0 * value + f(m, -h2, 0, 0.0)) / (h2 * h2)
                } else {
                    (f(m, h2, k, h2) - f(m, h2, k, -h2) - f(m, -h2, k, h2) + f(m, -h2, k, -h2))
                        / (4.0 * h2 * h2)
                };
            }
        }
        ScalarJet { value, grad, hess }
    }

    pub fn sigma_dot(chart: &SpacetimeChart, c: &CustomMetric, pt: &ChartPoint) -> Mat2 {
        let h = c.fd_step;
        let sp = (c.sigma)(pt.x0 + h, &pt.x[..chart.n]);
        let sm = (c.sigma)(pt.x0 - h, &pt.x[..chart.n]);
        let mut out = [[0.0; 2]; 2];
        for i in 0..chart.n {
            for j in 0..chart.n {
                out[i][j] = (sp[i][j] - sm[i][j]) / (2.0 * h);
            }
        }
        out
    }

    fn christoffel_at(chart: &SpacetimeChart, c: &CustomMetric, x0: f64, x: &[f64; 2]) -> Result<Rank3> {
        let d = chart.dim();
        let h = c.fd_step;
        let g = metric_at(chart, c, x0, x);
        let ginv = linalg::inverse(&g, d)
            .ok_or_else(|| FlowError::Domain("singular ambient metric".into()))?;
        let base = ChartPoint { x0, x: *x };
        let mut dg = ZERO_RANK3;
        for m in 0..d {
            let (xp0, xp) = shifted(&base, m, h);
            let (xm0, xm) = shifted(&base, m, -h);
            let gp = metric_at(chart, c, xp0, &xp);
            let gm = metric_at(chart, c, xm0, &xm);
            for a in 0..d {
                for b in 0..d {
                    dg[m][a][b] = (gp[a][b] - gm[a][b]) / (2.0 * h);
                }
            }
        }
        Ok(levi_civita(d, &ginv, &dg))
    }

    pub fn christoffel(chart: &SpacetimeChart, c: &CustomMetric, pt: &ChartPoint) -> Result<Rank3> {
        christoffel_at(chart, c, pt.x0, &pt.x)
    }

    pub fn christoffel_derivative(
        chart: &SpacetimeChart,
        c: &CustomMetric,
        pt: &ChartPoint,
    ) -> Result<Rank4> {
        let d = chart.dim();
        let h = 10.0 * c.fd_step;
        let mut out = ZERO_RANK4;
        for m in 0..d {
            let (xp0, xp) = shifted(pt, m, h);
            let (xm0, xm) = shifted(pt, m, -h);
            let gp = christoffel_at(chart, c, xp0, &xp)?;
            let gm = christoffel_at(chart, c, xm0, &xm)?;
            for a in 0..d {
                for b in 0..d {
                    for cc in 0..d {
                        out[m][a][b][cc] = (gp[a][b][cc] - gm[a][b][cc]) / (2.0 * h);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Sampling region for [`lambda_bound`]: an `x^0` interval times the torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSlab {
    pub x0_min: f64,
    pub x0_max: f64,
}

impl TimeSlab {
    pub fn new(x0_min: f64, x0_max: f64) -> Self {
        Self { x0_min, x0_max }
    }
}

fn radical_inverse(mut k: usize, base: usize) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// The `k`-th sample point of the nested Halton lattice over the slab.
pub fn halton_point(chart: &SpacetimeChart, region: &TimeSlab, k: usize) -> ChartPoint {
    let span = region.x0_max - region.x0_min;
    let x0 = region.x0_min + span * radical_inverse(k, 2);
    let p = chart.periods();
    let x = [p[0] * radical_inverse(k, 3), p[1] * radical_inverse(k, 5)];
    chart.point(x0, &x)
}

/// Unit timelike probe directions at `pt`: the slice normal boosted along
/// each spatial frame axis (both senses) at each rapidity.
pub fn probe_directions(chart: &SpacetimeChart, pt: &ChartPoint, rapidities: &[f64]) -> Result<Vec<Vec3>> {
    let frame = chart.orthonormal_frame(pt)?;
    let mut out = Vec::new();
    for &r in rapidities {
        let (ch, sh) = (r.cosh(), r.sinh());
        if r == 0.0 {
            out.push(frame[0]);
            continue;
        }
        for axis in 1..=chart.n() {
            for sign in [1.0, -1.0] {
                let mut v = [0.0; 3];
                for a in 0..3 {
                    v[a] = ch * frame[0][a] + sign * sh * frame[axis][a];
                }
                out.push(v);
            }
        }
    }
    Ok(out)
}

/// Lower Ricci bound `Lambda = max(0, -min Ric(nu, nu))` over the first
/// `samples` lattice points of the slab and the boosted probe directions.
/// The lattice is nested, so the result is nondecreasing in `samples`.
pub fn lambda_bound(
    chart: &SpacetimeChart,
    region: &TimeSlab,
    samples: usize,
    rapidities: &[f64],
) -> Result<f64> {
    if samples == 0 {
        return Err(FlowError::Contract("lambda_bound needs at least one sample".into()));
    }
    if !(region.x0_min.is_finite() && region.x0_max.is_finite()) || region.x0_min > region.x0_max {
        return Err(FlowError::Contract(format!("empty sampling region {region:?}")));
    }
    if rapidities.is_empty() {
        return Err(FlowError::Contract("no probe rapidities".into()));
    }
    let mut lowest = f64::INFINITY;
    for k in 0..samples {
        let pt = halton_point(chart, region, k);
        for nu in probe_directions(chart, &pt, rapidities)? {
            // boosted frames are unit up to round-off; renormalize before the check
            let g = chart.metric(&pt)?;
            let norm = linalg::quad(&g, &nu, &nu, chart.dim());
            let scale = 1.0 / (-norm).sqrt();
            let nu = [nu[0] * scale, nu[1] * scale, nu[2] * scale];
            lowest = lowest.min(chart.ricci_timelike(&pt, &nu)?);
        }
    }
    Ok((-lowest).max(0.0))
}
