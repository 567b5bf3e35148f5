//! Periodic structured grids over the torus and their centered stencils.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::linalg::Mat2;

pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    sizes: [usize; 2],
    periods: [f64; 2],
}

impl Grid {
    pub fn new(n: usize, sizes: &[usize], periods: &[f64]) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(FlowError::Config(format!("grid.n must be 1 or 2, got {n}")));
        }
        if sizes.len() != n || periods.len() != n {
            return Err(FlowError::Config(format!(
                "grid.sizes and grid.periods need {n} entries"
            )));
        }
        let mut s = [1usize; 2];
        let mut l = [TAU; 2];
        for i in 0..n {
            if sizes[i] < MIN_NODES {
                return Err(FlowError::Config(format!(
                    "grid.sizes[{i}] = {} is below the minimum of {MIN_NODES}",
                    sizes[i]
                )));
            }
            if !(periods[i].is_finite() && periods[i] > 0.0) {
                return Err(FlowError::Config(format!(
                    "grid.periods[{i}] must be positive, got {}",
                    periods[i]
                )));
            }
            s[i] = sizes[i];
            l[i] = periods[i];
        }
        Ok(Self {
            n,
            sizes: s,
            periods: l,
        })
    }

    /// `n`-dimensional grid with `size` nodes per axis over `[0, 2 pi)^n`.
    pub fn uniform(n: usize, size: usize) -> Result<Self> {
        Self::new(n, &vec![size; n], &vec![TAU; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes[..self.n]
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods[..self.n]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.sizes[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.n).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.n).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.sizes[0] * if self.n == 2 { self.sizes[1] } else { 1 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis-0-fastest multi-index of node `k`.
    pub fn index(&self, k: usize) -> [usize; 2] {
        [k % self.sizes[0], k / self.sizes[0]]
    }

    pub fn node(&self, idx: [usize; 2]) -> usize {
        idx[0] + self.sizes[0] * idx[1]
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let idx = self.index(k);
        let mut x = [0.0; 2];
        for a in 0..self.n {
            x[a] = idx[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Node reached from `k` by `offset[a]` steps along each axis, wrapping.
    pub fn shift(&self, k: usize, offset: [isize; 2]) -> usize {
        let idx = self.index(k);
        let mut out = [0usize; 2];
        for a in 0..2 {
            let s = self.sizes[a] as isize;
            out[a] = (idx[a] as isize + offset[a]).rem_euclid(s) as usize;
        }
        self.node(out)
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(self.coords(k))).collect()
    }
}

fn unit(axis: usize, step: isize) -> [isize; 2] {
    let mut o = [0isize; 2];
    o[axis] = step;
    o
}

/// Centered first differences with periodic wrap.
pub fn spatial_gradient(u: &[f64], grid: &Grid) -> Vec<[f64; 2]> {
    debug_assert_eq!(u.len(), grid.len());
    (0..grid.len())
        .map(|k| {
            let mut du = [0.0; 2];
            for a in 0..grid.n() {
                let p = u[grid.shift(k, unit(a, 1))];
                let m = u[grid.shift(k, unit(a, -1))];
                du[a] = (p - m) / (2.0 * grid.spacing(a));
            }
            du
        })
        .collect()
}

/// Centered first differences of a vector-valued field, one component slice
/// per entry of `fields`.
pub fn gradient_of<const C: usize>(fields: &[[f64; C]], grid: &Grid) -> Vec<[[f64; C]; 2]> {
    (0..grid.len())
        .map(|k| {
            let mut out = [[0.0; C]; 2];
            for a in 0..grid.n() {
                let p = &fields[grid.shift(k, unit(a, 1))];
                let m = &fields[grid.shift(k, unit(a, -1))];
                let inv = 1.0 / (2.0 * grid.spacing(a));
                for c in 0..C {
                    out[a][c] = (p[c] - m[c]) * inv;
                }
            }
            out
        })
        .collect()
}

/// Second partials: three-point stencil on the diagonal and the four-point
/// cross stencil for the mixed derivative.
pub fn second_partials(u: &[f64], grid: &Grid) -> Vec<Mat2> {
    (0..grid.len())
        .map(|k| {
            let mut d2 = [[0.0; 2]; 2];
            let c = u[k];
            for a in 0..grid.n() {
                let h = grid.spacing(a);
                let p = u[grid.shift(k, unit(a, 1))];
                let m = u[grid.shift(k, unit(a, -1))];
                d2[a][a] = (p - 2.0 * c + m) / (h * h);
            }
            if grid.n() == 2 {
                let pp = u[grid.shift(k, [1, 1])];
                let pm = u[grid.shift(k, [1, -1])];
                let mp = u[grid.shift(k, [-1, 1])];
                let mm = u[grid.shift(k, [-1, -1])];
                let x = (pp - pm - mp + mm) / (4.0 * grid.spacing(0) * grid.spacing(1));
                d2[0][1] = x;
                d2[1][0] = x;
            }
            d2
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_has_zero_derivatives() {
        let g = Grid::uniform(2, 16).unwrap();
        let u = vec![3.5; g.len()];
        assert!(spatial_gradient(&u, &g).iter().all(|d| d == &[0.0, 0.0]));
        assert!(second_partials(&u, &g).iter().all(|d| d == &[[0.0; 2]; 2]));
    }

    #[test]
    fn sine_gradient_within_truncation_bound() {
        let g = Grid::uniform(1, 64).unwrap();
        let u = g.sample(|x| x[0].sin());
        let h = g.spacing(0);
        let err = spatial_gradient(&u, &g)
            .iter()
            .enumerate()
            .map(|(k, d)| (d[0] - g.coords(k)[0].cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= h * h, "err={err}");
    }

    #[test]
    fn gradient_converges_at_second_order() {
        let err = |size| {
            let g = Grid::uniform(1, size).unwrap();
            let u = g.sample(|x| (2.0 * x[0]).sin() + 0.3 * x[0].cos());
            spatial_gradient(&u, &g)
                .iter()
                .enumerate()
                .map(|(k, d)| {
                    let x = g.coords(k)[0];
                    (d[0] - (2.0 * (2.0 * x).cos() - 0.3 * x.sin())).abs()
                })
                .fold(0.0, f64::max)
        };
        let order = (err(64) / err(128)).log2();
        assert!(order >= 1.9, "order={order}");
    }

    #[test]
    fn mixed_partial_of_product() {
        let g = Grid::uniform(2, 48).unwrap();
        let u = g.sample(|x| x[0].sin() * x[1].cos());
        let d2 = second_partials(&u, &g);
        let h = g.spacing(0);
        for k in 0..g.len() {
            let x = g.coords(k);
            let exact = -x[0].cos() * x[1].sin();
            assert!((d2[k][0][1] - exact).abs() < h * h);
            assert_eq!(d2[k][0][1], d2[k][1][0]);
        }
    }

    #[test]
    fn shift_wraps_both_axes() {
        let g = Grid::new(2, &[8, 10], &[1.0, 2.0]).unwrap();
        let k = g.node([0, 9]);
        assert_eq!(g.index(g.shift(k, [-1, 1])), [7, 0]);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(Grid::uniform(1, 4).is_err());
        assert!(Grid::uniform(3, 16).is_err());
    }
}
