//! Small fixed-size tensor helpers. Ambient indices run over `0..dim` with
//! `dim <= 3`; unused slots stay zero.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
pub type Mat2 = [[f64; 2]; 2];
/// `c[a][b][c]` holds a rank-3 array such as the connection coefficients.
pub type Rank3 = [[[f64; 3]; 3]; 3];
/// `d[m][a][b][c]`, the coordinate derivative of a [`Rank3`] along `m`.
pub type Rank4 = [[[[f64; 3]; 3]; 3]; 3];

pub const ZERO3: Mat3 = [[0.0; 3]; 3];
pub const ZERO_RANK3: Rank3 = [[[0.0; 3]; 3]; 3];
pub const ZERO_RANK4: Rank4 = [[[[0.0; 3]; 3]; 3]; 3];

pub fn identity2() -> Mat2 {
    [[1.0, 0.0], [0.0, 1.0]]
}

/// Inverse of the leading `dim x dim` block, or `None` when singular.
pub fn inverse(m: &Mat3, dim: usize) -> Option<Mat3> {
    let mut out = ZERO3;
    match dim {
        1 => {
            if m[0][0] == 0.0 {
                return None;
            }
            out[0][0] = 1.0 / m[0][0];
        }
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            out[0][0] = m[1][1] / det;
            out[1][1] = m[0][0] / det;
            out[0][1] = -m[0][1] / det;
            out[1][0] = -m[1][0] / det;
        }
        3 => {
            let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
            let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
            let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
            let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            let inv = 1.0 / det;
            out[0][0] = c00 * inv;
            out[1][0] = c01 * inv;
            out[2][0] = c02 * inv;
            out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv;
            out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv;
            out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv;
            out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv;
            out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv;
            out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv;
        }
        _ => return None,
    }
    Some(out)
}

pub fn inverse2(m: &Mat2, n: usize) -> Option<Mat2> {
    let inv = inverse(&embed2(m), n)?;
    Some([[inv[0][0], inv[0][1]], [inv[1][0], inv[1][1]]])
}

pub fn embed2(m: &Mat2) -> Mat3 {
    [
        [m[0][0], m[0][1], 0.0],
        [m[1][0], m[1][1], 0.0],
        [0.0, 0.0, 0.0],
    ]
}

/// Largest eigenvalue of a symmetric `n x n` block (`n <= 2`).
pub fn max_eigenvalue_sym(m: &Mat2, n: usize) -> f64 {
    if n == 1 {
        return m[0][0];
    }
    let tr = m[0][0] + m[1][1];
    let diff = m[0][0] - m[1][1];
    let disc = (0.25 * diff * diff + m[0][1] * m[1][0]).max(0.0).sqrt();
    0.5 * tr + disc
}

/// Smallest eigenvalue of a symmetric `n x n` block (`n <= 2`).
pub fn min_eigenvalue_sym(m: &Mat2, n: usize) -> f64 {
    if n == 1 {
        return m[0][0];
    }
    let tr = m[0][0] + m[1][1];
    let diff = m[0][0] - m[1][1];
    let disc = (0.25 * diff * diff + m[0][1] * m[1][0]).max(0.0).sqrt();
    0.5 * tr - disc
}

/// `g(a, b)` over the leading `dim` components.
pub fn quad(g: &Mat3, a: &Vec3, b: &Vec3, dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += g[i][j] * a[i] * b[j];
        }
    }
    s
}

/// Index lowering `g_ab v^b`.
pub fn lower(g: &Mat3, v: &Vec3, dim: usize) -> Vec3 {
    let mut out = [0.0; 3];
    for a in 0..dim {
        for b in 0..dim {
            out[a] += g[a][b] * v[b];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse3_roundtrip() {
        let m = [[2.0, 0.3, -0.1], [0.3, 1.5, 0.2], [-0.1, 0.2, 3.0]];
        let inv = inverse(&m, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eigen_bounds_of_diagonal() {
        let m = [[3.0, 0.0], [0.0, 0.5]];
        assert_eq!(max_eigenvalue_sym(&m, 2), 3.0);
        assert_eq!(min_eigenvalue_sym(&m, 2), 0.5);
        assert_eq!(max_eigenvalue_sym(&m, 1), 3.0);
    }

    #[test]
    fn singular_block_has_no_inverse() {
        let m = [[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(inverse(&m, 2).is_none());
    }
}
