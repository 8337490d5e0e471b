//! Natural cubic spline with exact antiderivative.

use super::tridiag;
use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
    /// cumulative integral from x[0] to each knot
    cum: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(invalid("spline needs at least two matching knots"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("spline knots must be strictly increasing"));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut lower = vec![0.0; k];
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                lower[i - 1] = h0 / 6.0;
                diag[i - 1] = (h0 + h1) / 3.0;
                upper[i - 1] = h1 / 6.0;
                rhs[i - 1] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
            }
            let sol = tridiag::solve(&lower, &diag, &upper, &rhs)?;
            m[1..n - 1].copy_from_slice(&sol);
        }
        let mut cum = vec![0.0; n];
        for i in 0..n - 1 {
            let h = x[i + 1] - x[i];
            cum[i + 1] = cum[i] + 0.5 * h * (y[i] + y[i + 1]) - h * h * h * (m[i] + m[i + 1]) / 24.0;
        }
        Ok(CubicSpline { x, y, m, cum })
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// ∫_{x0}^{t} of the spline (extrapolates the end cubics outside the knots).
    pub fn integral_from_start(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        // antiderivative in the local variable b = (t - x_i)/h, a = 1 - b
        let prim = |b: f64| {
            let a = 1.0 - b;
            h * (-(a * a) / 2.0 * y0 + b * b / 2.0 * y1)
                + h * h * h / 6.0 * (m0 * (-(a.powi(4)) / 4.0 + a * a / 2.0) + m1 * (b.powi(4) / 4.0 - b * b / 2.0))
        };
        let b = (t - self.x[i]) / h;
        self.cum[i] + prim(b) - prim(0.0)
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data_and_integral() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let s = CubicSpline::new(x, y).unwrap();
        assert!((s.value(0.123) - 1.246).abs() < 1e-14);
        let prim = |t: f64| t * t + t;
        let v = s.integral_from_start(0.77);
        assert!((v - (prim(0.77) - prim(-1.0))).abs() < 1e-13);
    }

    #[test]
    fn integral_converges_for_smooth_data() {
        // sin has zero curvature at 0 and π, matching the natural end conditions
        let n = 200;
        let x: Vec<f64> = (0..=n).map(|i| std::f64::consts::PI * i as f64 / n as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let s = CubicSpline::new(x, y).unwrap();
        let err = (s.integral_from_start(1.555) - (1.0 - 1.555f64.cos())).abs();
        assert!(err < 1e-8, "{err:e}");
    }
}
