//! Small numerical toolkit shared by the physics modules.

pub mod fd;
pub mod ode;
pub mod quadrature;
pub mod spline;
pub mod tridiag;

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
/// 3×3 matrix. Gradients of vector fields use `m[(i, j)] = ∂_i v_j`.
pub type Mat3 = Matrix3<f64>;

pub fn unit(i: usize) -> Vec3 {
    let mut v = Vec3::zeros();
    v[i] = 1.0;
    v
}

pub fn to_array(v: &Vec3) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Full contraction `a : b = Σ a_ij b_ij`.
pub fn ddot(a: &Mat3, b: &Mat3) -> f64 {
    a.component_mul(b).sum()
}

/// Curl from a gradient matrix with `m[(i, j)] = ∂_i v_j`.
pub fn curl_from_grad(m: &Mat3) -> Vec3 {
    Vec3::new(m[(1, 2)] - m[(2, 1)], m[(2, 0)] - m[(0, 2)], m[(0, 1)] - m[(1, 0)])
}

/// Relative difference with an absolute floor of one unit.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    num / den
}
