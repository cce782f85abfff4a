//! Rotation matrices and intrinsic Z-Y-X Euler angles.
//!
//! `R = Rz(α) · Ry(β) · Rx(γ)`; angles are returned as `(α, β, γ)`.

use crate::error::{PotrError, Result};

pub type Mat3 = [[f64; 3]; 3];

const ORTHO_TOL: f64 = 1e-6;
const GIMBAL_TOL: f64 = 1e-9;

pub fn euler_zyx_to_rotmat(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    [
        [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
        [sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg],
        [-sb, cb * sg, cb * cg],
    ]
}

fn det(r: &Mat3) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            if (dot - expect).abs() > tol {
                return false;
            }
        }
    }
    (det(r) - 1.0).abs() <= tol
}

/// Inverse of [`euler_zyx_to_rotmat`]. At gimbal lock (`|R₃₁| ≥ 1 − 1e-9`)
/// `γ` is fixed to zero and `α` absorbs the remaining rotation.
pub fn rotmat_to_euler(r: &Mat3) -> Result<(f64, f64, f64)> {
    if !r.iter().flatten().all(|v| v.is_finite()) || !is_rotation(r, ORTHO_TOL) {
        return Err(PotrError::Validation(format!("not a rotation matrix: {r:?}")));
    }
    let s = -r[2][0];
    if s.abs() >= 1.0 - GIMBAL_TOL {
        let beta = std::f64::consts::FRAC_PI_2.copysign(s);
        let alpha = (-r[0][1]).atan2(r[1][1]);
        return Ok((alpha, beta, 0.0));
    }
    let beta = s.asin();
    let alpha = r[1][0].atan2(r[0][0]);
    let gamma = r[2][1].atan2(r[2][2]);
    Ok((alpha, beta, gamma))
}

pub fn mat3_from_slice(v: &[f64]) -> Mat3 {
    [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
}

/// Gram-Schmidt orthonormalisation of the rows, giving a proper rotation
/// for any matrix whose first two rows are independent.
pub fn orthonormalize(m: &Mat3) -> Mat3 {
    let norm = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
        [v[0] / n, v[1] / n, v[2] / n]
    };
    let x = norm(m[0]);
    let d = x[0] * m[1][0] + x[1] * m[1][1] + x[2] * m[1][2];
    let y = norm([m[1][0] - d * x[0], m[1][1] - d * x[1], m[1][2] - d * x[2]]);
    let z = [x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]];
    [x, y, z]
}
