//! Induced geometry of a graph `x^0 = u(x)` over the torus.

use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{FlowError, Result};
use crate::grid::{self, Grid};
use crate::linalg::{self, Mat2, Vec3};
use crate::spacetime::SpacetimeChart;

/// Gradients with `sigma^ij u_i u_j >= 1 - SPACELIKE_GUARD` abort the flow.
pub const SPACELIKE_GUARD: f64 = 1e-6;

/// A height function on the grid at flow time `t`.
#[derive(Debug, Clone)]
pub struct GraphState {
    pub t: f64,
    pub u: Vec<f64>,
    pub grid: Grid,
    pub chart: Arc<SpacetimeChart>,
}

impl GraphState {
    pub fn new(t: f64, u: Vec<f64>, grid: Grid, chart: Arc<SpacetimeChart>) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(FlowError::Contract(format!(
                "height field has {} values for {} nodes",
                u.len(),
                grid.len()
            )));
        }
        if grid.n() != chart.n() {
            return Err(FlowError::Contract(format!(
                "grid dimension {} does not match chart dimension {}",
                grid.n(),
                chart.n()
            )));
        }
        for (a, (&lg, &lc)) in grid.periods().iter().zip(chart.periods().iter()).enumerate() {
            if (lg - lc).abs() > 1e-12 * lc {
                return Err(FlowError::Contract(format!(
                    "grid period {lg} on axis {a} differs from chart period {lc}"
                )));
            }
        }
        if let Some(k) = u.iter().position(|v| !v.is_finite()) {
            return Err(FlowError::Domain(format!("non-finite height at node {k}")));
        }
        Ok(Self { t, u, grid, chart })
    }

    pub fn from_fn(
        grid: Grid,
        chart: Arc<SpacetimeChart>,
        f: impl Fn([f64; 2]) -> f64,
    ) -> Result<Self> {
        let u = grid.sample(f);
        Self::new(0.0, u, grid, chart)
    }

    pub fn geometry(&self) -> Result<GeometryFields> {
        GeometryFields::assemble(&self.u, &self.grid, &self.chart, SPACELIKE_GUARD)
    }

    pub fn mean(&self) -> f64 {
        self.u.iter().sum::<f64>() / self.u.len() as f64
    }

    pub fn inf(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-node derived quantities of a spacelike graph.
#[derive(Debug, Clone)]
pub struct GeometryFields {
    pub n: usize,
    pub du: Vec<[f64; 2]>,
    pub v: Vec<f64>,
    pub vtilde: Vec<f64>,
    /// Conformal factor `psi` at `(u(x), x)`.
    pub psi: Vec<f64>,
    pub g: Vec<Mat2>,
    pub ginv: Vec<Mat2>,
    pub hij: Vec<Mat2>,
    pub h_mean: Vec<f64>,
    pub norm_a2: Vec<f64>,
    /// Past-directed unit normal `nu^a`.
    pub nu: Vec<Vec3>,
}

struct NodeAmbient {
    psi: f64,
    sigma_inv: Mat2,
    gamma0: [[f64; 3]; 3],
    sigma: Mat2,
}

fn ambient_at(chart: &SpacetimeChart, grid: &Grid, u: &[f64], k: usize) -> Result<NodeAmbient> {
    let n = grid.n();
    let pt = chart.point(u[k], &grid.coords(k));
    let sigma = chart.sigma(&pt)?;
    let sigma_inv = linalg::inverse2(&sigma, n)
        .ok_or_else(|| FlowError::Domain(format!("singular spatial metric at node {k}")))?;
    let psi = chart.psi_jet(&pt)?.value;
    let gamma = chart.christoffel_bar(&pt)?;
    Ok(NodeAmbient {
        psi,
        sigma_inv,
        gamma0: gamma[0],
        sigma,
    })
}

/// `v` and `1/v` per node; fails with [`FlowError::SpacelikeViolation`] where
/// `sigma^ij u_i u_j >= 1 - guard`.
pub fn tilt(u: &[f64], grid: &Grid, chart: &SpacetimeChart, guard: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let du = grid::spatial_gradient(u, grid);
    let mut v = Vec::with_capacity(u.len());
    let mut vt = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        let amb = ambient_at(chart, grid, u, k)?;
        let s2 = gradient_norm2(&amb.sigma_inv, &du[k], grid.n());
        check_spacelike(k, s2, guard)?;
        let vk = (1.0 - s2).sqrt();
        v.push(vk);
        vt.push(1.0 / vk);
    }
    Ok((v, vt))
}

fn gradient_norm2(sigma_inv: &Mat2, du: &[f64; 2], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += sigma_inv[i][j] * du[i] * du[j];
        }
    }
    s
}

fn check_spacelike(node: usize, s2: f64, guard: f64) -> Result<()> {
    if !(s2 < 1.0 - guard) {
        return Err(FlowError::SpacelikeViolation {
            node,
            gradient_norm2: s2,
            guard,
        });
    }
    Ok(())
}

/// `h_ij` of the graph.
pub fn second_fundamental_form(u: &[f64], grid: &Grid, chart: &SpacetimeChart) -> Result<Vec<Mat2>> {
    Ok(GeometryFields::assemble(u, grid, chart, SPACELIKE_GUARD)?.hij)
}

/// Past-directed unit normal `-v^{-1} e^{-psi} (1, u^i)` per node.
pub fn normal_vector(u: &[f64], grid: &Grid, chart: &SpacetimeChart) -> Result<Vec<Vec3>> {
    Ok(GeometryFields::assemble(u, grid, chart, SPACELIKE_GUARD)?.nu)
}

pub fn mean_curvature(fields: &GeometryFields) -> &[f64] {
    &fields.h_mean
}

pub fn second_fundamental_norm(fields: &GeometryFields) -> &[f64] {
    &fields.norm_a2
}

impl GeometryFields {
    pub fn assemble(u: &[f64], grid: &Grid, chart: &SpacetimeChart, guard: f64) -> Result<Self> {
        let n = grid.n();
        let len = grid.len();
        let du = grid::spatial_gradient(u, grid);
        let d2u = grid::second_partials(u, grid);

        let mut v = Vec::with_capacity(len);
        let mut vtilde = Vec::with_capacity(len);
        let mut psi = Vec::with_capacity(len);
        let mut g = Vec::with_capacity(len);
        let mut ginv = Vec::with_capacity(len);
        let mut nu = Vec::with_capacity(len);
        let mut gamma0 = Vec::with_capacity(len);

        for k in 0..len {
            let amb = ambient_at(chart, grid, u, k)?;
            let d = &du[k];
            let s2 = gradient_norm2(&amb.sigma_inv, d, n);
            check_spacelike(k, s2, guard)?;
            let vk = (1.0 - s2).sqrt();
            let e2 = (2.0 * amb.psi).exp();
            let mut up = [0.0; 2];
            for i in 0..n {
                for j in 0..n {
                    up[i] += amb.sigma_inv[i][j] * d[j];
                }
            }
            let mut gk = [[0.0; 2]; 2];
            let mut gi = [[0.0; 2]; 2];
            for i in 0..n {
                for j in 0..n {
                    gk[i][j] = e2 * (-d[i] * d[j] + amb.sigma[i][j]);
                    gi[i][j] = (up[i] * up[j] / (vk * vk) + amb.sigma_inv[i][j]) / e2;
                }
            }
            let scale = -(-amb.psi).exp() / vk;
            nu.push([scale, scale * up[0], scale * up[1]]);
            v.push(vk);
            vtilde.push(1.0 / vk);
            psi.push(amb.psi);
            g.push(gk);
            ginv.push(gi);
            gamma0.push(amb.gamma0);
        }

        // Connection of the induced metric from differenced g_ij.
        let packed: Vec<[f64; 3]> = g.iter().map(|m| [m[0][0], m[0][1], m[1][1]]).collect();
        let dg_packed = grid::gradient_of(&packed, grid);
        let unpack = |p: &[f64; 3], i: usize, j: usize| match (i, j) {
            (0, 0) => p[0],
            (1, 1) => p[2],
            _ => p[1],
        };

        let mut hij = Vec::with_capacity(len);
        let mut h_mean = Vec::with_capacity(len);
        let mut norm_a2 = Vec::with_capacity(len);
        for k in 0..len {
            let gi = &ginv[k];
            let d = &du[k];
            // dg[l][i][j] = d_l g_ij
            let mut dg = [[[0.0; 2]; 2]; 2];
            for l in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        dg[l][i][j] = unpack(&dg_packed[k][l], i, j);
                    }
                }
            }
            let mut hess = [[0.0; 2]; 2];
            for i in 0..n {
                for j in 0..n {
                    let mut christoffel_term = 0.0;
                    for c in 0..n {
                        let mut gamma_c = 0.0;
                        for l in 0..n {
                            gamma_c += gi[c][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                        }
                        christoffel_term += 0.5 * gamma_c * d[c];
                    }
                    hess[i][j] = d2u[k][i][j] - christoffel_term;
                }
            }
            let gb = &gamma0[k];
            let pref = -psi[k].exp() * v[k];
            let mut h = [[0.0; 2]; 2];
            for i in 0..n {
                for j in 0..n {
                    h[i][j] = pref
                        * (hess[i][j]
                            + gb[0][0] * d[i] * d[j]
                            + gb[0][j + 1] * d[i]
                            + gb[0][i + 1] * d[j]
                            + gb[i + 1][j + 1]);
                }
            }
            if n == 2 {
                let s = 0.5 * (h[0][1] + h[1][0]);
                h[0][1] = s;
                h[1][0] = s;
            }
            let mut hm = 0.0;
            for i in 0..n {
                for j in 0..n {
                    hm += gi[i][j] * h[i][j];
                }
            }
            // mixed tensor h_i^k, then |A|^2 = h_i^k h_k^i
            let mut mixed = [[0.0; 2]; 2];
            for i in 0..n {
                for c in 0..n {
                    for j in 0..n {
                        mixed[i][c] += h[i][j] * gi[j][c];
                    }
                }
            }
            let mut a2 = 0.0;
            for i in 0..n {
                for c in 0..n {
                    a2 += mixed[i][c] * mixed[c][i];
                }
            }
            hij.push(h);
            h_mean.push(hm);
            norm_a2.push(a2);
        }

        Ok(Self {
            n,
            du,
            v,
            vtilde,
            psi,
            g,
            ginv,
            hij,
            h_mean,
            norm_a2,
            nu,
        })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn max_vtilde(&self) -> f64 {
        self.vtilde.iter().copied().fold(0.0, f64::max)
    }

    pub fn sup_h(&self) -> f64 {
        self.h_mean.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf_h(&self) -> f64 {
        self.h_mean.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_norm_a(&self) -> f64 {
        self.norm_a2.iter().copied().fold(0.0, f64::max).sqrt()
    }

    /// CSV dump: one row per node with coordinates, `u`, `v`, `H`, `|A|^2`.
    pub fn write_csv<W: Write>(&self, grid: &Grid, u: &[f64], mut w: W) -> io::Result<()> {
        if grid.n() == 1 {
            writeln!(w, "x1,u,v,H,normA2")?;
        } else {
            writeln!(w, "x1,x2,u,v,H,normA2")?;
        }
        for k in 0..self.len() {
            let x = grid.coords(k);
            if grid.n() == 1 {
                write!(w, "{:e},", x[0])?;
            } else {
                write!(w, "{:e},{:e},", x[0], x[1])?;
            }
            writeln!(
                w,
                "{:e},{:e},{:e},{:e}",
                u[k], self.v[k], self.h_mean[k], self.norm_a2[k]
            )?;
        }
        Ok(())
    }
}
