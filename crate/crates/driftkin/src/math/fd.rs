//! Fourth-order central finite differences.

use super::{Mat3, Vec3};

/// Default step for derivatives of O(1)-scaled smooth functions.
pub const DEFAULT_STEP: f64 = 1e-3;

pub fn d1<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

pub fn d1_vec<F: Fn(f64) -> Vec3>(f: F, x: f64, h: f64) -> Vec3 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

pub fn d1_mat<F: Fn(f64) -> Mat3>(f: F, x: f64, h: f64) -> Mat3 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

/// Directional derivative of a scalar field along `dir` (not normalized).
pub fn directional<F: Fn(&Vec3) -> f64>(f: F, x: &Vec3, dir: &Vec3, h: f64) -> f64 {
    d1(|s| f(&(x + dir * s)), 0.0, h)
}

pub fn gradient<F: Fn(&Vec3) -> f64>(f: F, x: &Vec3, h: f64) -> Vec3 {
    let mut g = Vec3::zeros();
    for i in 0..3 {
        g[i] = d1(
            |s| {
                let mut y = *x;
                y[i] += s;
                f(&y)
            },
            0.0,
            h,
        );
    }
    g
}

/// Gradient matrix `m[(i, j)] = ∂_i v_j`.
pub fn jacobian<F: Fn(&Vec3) -> Vec3>(f: F, x: &Vec3, h: f64) -> Mat3 {
    let mut m = Mat3::zeros();
    for i in 0..3 {
        let row = d1_vec(
            |s| {
                let mut y = *x;
                y[i] += s;
                f(&y)
            },
            0.0,
            h,
        );
        for j in 0..3 {
            m[(i, j)] = row[j];
        }
    }
    m
}

pub fn divergence<F: Fn(&Vec3) -> Vec3>(f: F, x: &Vec3, h: f64) -> f64 {
    let mut div = 0.0;
    for i in 0..3 {
        div += d1(
            |s| {
                let mut y = *x;
                y[i] += s;
                f(&y)[i]
            },
            0.0,
            h,
        );
    }
    div
}

/// Row-wise divergence of a matrix field: `(∇·P)_j = Σ_i ∂_i P_ij`.
pub fn tensor_divergence<F: Fn(&Vec3) -> Mat3>(f: F, x: &Vec3, h: f64) -> Vec3 {
    let mut out = Vec3::zeros();
    for i in 0..3 {
        let dm = d1_mat(
            |s| {
                let mut y = *x;
                y[i] += s;
                f(&y)
            },
            0.0,
            h,
        );
        for j in 0..3 {
            out[j] += dm[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_is_exact() {
        let f = |x: f64| x.powi(4) - 2.0 * x.powi(3) + x;
        let d = d1(f, 0.7, 1e-2);
        let exact = 4.0 * 0.7f64.powi(3) - 6.0 * 0.49 + 1.0;
        assert!((d - exact).abs() < 1e-11);
    }

    #[test]
    fn divergence_of_linear_field() {
        let f = |x: &Vec3| Vec3::new(2.0 * x[0], -x[1], 3.0 * x[2] + x[0]);
        let d = divergence(f, &Vec3::new(0.3, -1.0, 2.0), 1e-3);
        assert!((d - 4.0).abs() < 1e-10);
    }
}
