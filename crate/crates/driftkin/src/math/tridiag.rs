//! Tridiagonal and cyclic tridiagonal systems.
//!
//! Row convention throughout: `lower[i] = A[i][i-1]`, `diag[i] = A[i][i]`,
//! `upper[i] = A[i][i+1]`, all of length n. For plain systems `lower[0]` and
//! `upper[n-1]` are ignored; for cyclic ones they hold the corner couplings
//! `A[0][n-1]` and `A[n-1][0]`.

use crate::error::{Error, Result};

/// Gaussian elimination with partial pivoting (second superdiagonal fill-in).
pub fn solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::InvalidInput("tridiagonal band lengths differ".into()));
    }
    if n == 0 {
        return Ok(vec![]);
    }
    let scale = diag
        .iter()
        .chain(&lower[1..])
        .chain(&upper[..n - 1])
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = scale * 1e-300_f64.max(f64::EPSILON * 1e-6);
    let mut d = diag.to_vec();
    let mut du: Vec<f64> = upper.to_vec();
    let mut du2 = vec![0.0; n];
    let mut dl: Vec<f64> = (0..n).map(|i| if i + 1 < n { lower[i + 1] } else { 0.0 }).collect();
    let mut b = rhs.to_vec();
    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if d[i].abs() <= tiny {
                return Err(Error::Conditioning(format!("zero pivot in row {i}")));
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
            dl[i] = 0.0;
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - fact * tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -fact;
            }
            du[i] = tmp;
            b.swap(i, i + 1);
            b[i + 1] -= fact * b[i];
        }
    }
    if d[n - 1].abs() <= tiny {
        return Err(Error::Conditioning(format!("zero pivot in row {}", n - 1)));
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n > 1 {
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    Ok(x)
}

/// Periodic tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cyclic {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Cyclic {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let im = (i + n - 1) % n;
                let ip = (i + 1) % n;
                self.lower[i] * u[im] + self.diag[i] * u[i] + self.upper[i] * u[ip]
            })
            .collect()
    }

    pub fn transpose(&self) -> Cyclic {
        let n = self.len();
        // A^T[i][i-1] = A[i-1][i]
        let lower = (0..n).map(|i| self.upper[(i + n - 1) % n]).collect();
        let upper = (0..n).map(|i| self.lower[(i + 1) % n]).collect();
        Cyclic { lower, diag: self.diag.clone(), upper }
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.len())
            .map(|i| self.lower[i].abs() + self.diag[i].abs() + self.upper[i].abs())
            .fold(0.0, f64::max)
    }

    /// Sherman–Morrison reduction to two plain tridiagonal solves.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if n < 3 {
            return Err(Error::InvalidInput("cyclic system needs at least 3 rows".into()));
        }
        let alpha = self.upper[n - 1];
        let beta = self.lower[0];
        let gamma = if self.diag[0] != 0.0 { -self.diag[0] } else { 1.0 };
        let mut d = self.diag.clone();
        d[0] -= gamma;
        d[n - 1] -= alpha * beta / gamma;
        let y = solve(&self.lower, &d, &self.upper, rhs)?;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let z = solve(&self.lower, &d, &self.upper, &u)?;
        let vy = y[0] + beta / gamma * y[n - 1];
        let vz = z[0] + beta / gamma * z[n - 1];
        let den = 1.0 + vz;
        if den.abs() < 1e-14 * (1.0 + vz.abs()) {
            return Err(Error::Conditioning("cyclic correction is singular".into()));
        }
        let f = vy / den;
        Ok(y.iter().zip(&z).map(|(a, b)| a - f * b).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(l: &[f64], d: &[f64], u: &[f64], x: &[f64], cyclic: bool) -> Vec<f64> {
        let n = d.len();
        (0..n)
            .map(|i| {
                let mut s = d[i] * x[i];
                if i > 0 {
                    s += l[i] * x[i - 1];
                } else if cyclic {
                    s += l[0] * x[n - 1];
                }
                if i + 1 < n {
                    s += u[i] * x[i + 1];
                } else if cyclic {
                    s += u[n - 1] * x[0];
                }
                s
            })
            .collect()
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let l = [0.0, 1.0, 2.0, 1.0];
        let d = [0.0, 0.0, 3.0, 1.0];
        let u = [1.0, 4.0, 1.0, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let b = dense(&l, &d, &u, &x, false);
        let s = solve(&l, &d, &u, &b).unwrap();
        for (a, e) in s.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn cyclic_roundtrip() {
        let n = 9;
        let l: Vec<f64> = (0..n).map(|i| -1.0 + 0.1 * i as f64).collect();
        let d: Vec<f64> = (0..n).map(|i| 4.0 + (i as f64).sin()).collect();
        let u: Vec<f64> = (0..n).map(|i| -0.7 - 0.05 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let a = Cyclic { lower: l.clone(), diag: d.clone(), upper: u.clone() };
        let b = dense(&l, &d, &u, &x, true);
        assert_eq!(a.apply(&x).len(), n);
        for (p, q) in a.apply(&x).iter().zip(&b) {
            assert!((p - q).abs() < 1e-14);
        }
        let s = a.solve(&b).unwrap();
        for (p, q) in s.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_matches_dense_transpose() {
        let a = Cyclic {
            lower: vec![1.0, 2.0, 3.0, 4.0],
            diag: vec![5.0, 6.0, 7.0, 8.0],
            upper: vec![9.0, 10.0, 11.0, 12.0],
        };
        let t = a.transpose();
        let x = [0.3, -1.0, 2.0, 0.7];
        let y = [1.5, 0.2, -0.4, 1.1];
        let lhs: f64 = a.apply(&x).iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs: f64 = t.apply(&y).iter().zip(&x).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
