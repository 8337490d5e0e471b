//! The elliptic equation for u∥ along a closed field line, its right-hand
//! side R₃, and the zero-Mach parallel force balance.
//!
//! Along the line b·∇φ = φ′ and ∇·(bφ) = φ′ + κφ with κ = ∇·b. The operator
//!
//!   −3 (b·∇)(∇·(p∥u b)) + 2∇·(u ∇·(p∥b) b) + E∥ ∇·(n u b)
//!   + κ ∇·((−3p∥ + p⊥) u b) + p⊥ κ² u
//!
//! is discretized with centred differences on a uniform periodic s-grid,
//! products being formed before differencing.

use serde::Serialize;

use crate::distribution::{ScalarField, VectorField};
use crate::error::{invalid, Error, Result};
use crate::field::{FieldConfiguration, FieldSample};
use crate::field_line::FieldLine;
use crate::math::tridiag::{self, Cyclic};
use crate::math::{fd, Vec3};
use crate::moments::div_pressure_tensor;

pub const DEFAULT_TOL_COMPAT: f64 = 1e-6;
/// Relative size of ‖A·1‖ below which constants are treated as a null vector.
const NULL_TOL: f64 = 1e-10;

/// Coefficients of the u∥ equation on a uniform periodic grid (no repeated end node).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineProblem {
    pub s: Vec<f64>,
    pub h: f64,
    pub period: f64,
    pub n: Vec<f64>,
    pub p_par: Vec<f64>,
    pub p_perp: Vec<f64>,
    pub e_par: Vec<f64>,
    pub div_b: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl LineProblem {
    /// Build from coefficient functions of s on `cells` equal cells of [0, period).
    pub fn from_profiles<F>(period: f64, cells: usize, coeff: F, rhs: &dyn Fn(f64) -> f64) -> Result<Self>
    where
        F: Fn(f64) -> NodeCoefficients,
    {
        if cells < 3 {
            return Err(invalid("the periodic grid needs at least 3 nodes"));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(invalid("period must be positive"));
        }
        let h = period / cells as f64;
        let s: Vec<f64> = (0..cells).map(|i| i as f64 * h).collect();
        let c: Vec<NodeCoefficients> = s.iter().map(|v| coeff(*v)).collect();
        let p = LineProblem {
            h,
            period,
            n: c.iter().map(|v| v.n).collect(),
            p_par: c.iter().map(|v| v.p_par).collect(),
            p_perp: c.iter().map(|v| v.p_perp).collect(),
            e_par: c.iter().map(|v| v.e_par).collect(),
            div_b: c.iter().map(|v| v.div_b).collect(),
            rhs: s.iter().map(|v| rhs(*v)).collect(),
            s,
        };
        p.validate()?;
        Ok(p)
    }

    /// Build from a closed line resampled on equal arc-length cells; the
    /// closing node is dropped. E∥ and ∇·b come from the stored samples.
    pub fn from_line(
        line: &FieldLine,
        n: &dyn ScalarField,
        p_par: &dyn ScalarField,
        p_perp: &dyn ScalarField,
        t: f64,
        rhs: Vec<f64>,
    ) -> Result<Self> {
        let period = match (line.closed, line.period) {
            (true, Some(p)) => p,
            _ => return Err(Error::Geometry("the u_par equation is only solved on closed lines".into())),
        };
        let cells = line.len().saturating_sub(1);
        if cells < 3 {
            return Err(invalid("closed line has too few nodes"));
        }
        let h = period / cells as f64;
        for w in line.s.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
                return Err(Error::Geometry("line nodes are not equally spaced; resample first".into()));
            }
        }
        let samples = &line.samples[..cells];
        let p = LineProblem {
            s: line.s[..cells].to_vec(),
            h,
            period,
            n: samples.iter().map(|s| n.value(&s.x, t)).collect(),
            p_par: samples.iter().map(|s| p_par.value(&s.x, t)).collect(),
            p_perp: samples.iter().map(|s| p_perp.value(&s.x, t)).collect(),
            e_par: samples.iter().map(|s| s.e.dot(&s.b)).collect(),
            div_b: samples.iter().map(|s| s.div_b).collect(),
            rhs,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.s.len();
        let lens = [self.n.len(), self.p_par.len(), self.p_perp.len(), self.e_par.len(), self.div_b.len(), self.rhs.len()];
        if lens.iter().any(|l| *l != n) {
            return Err(invalid("coefficient arrays do not match the node count"));
        }
        let all = [&self.n, &self.p_par, &self.p_perp, &self.e_par, &self.div_b, &self.rhs];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(invalid("non-finite coefficient on the line"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCoefficients {
    pub n: f64,
    pub p_par: f64,
    pub p_perp: f64,
    pub e_par: f64,
    pub div_b: f64,
}

#[derive(Debug, Clone)]
pub struct ParallelOperator {
    pub matrix: Cyclic,
    /// constants lie in the kernel
    pub nullspace: bool,
}

impl ParallelOperator {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.apply(u)
    }
}

pub fn assemble_parallel_operator(p: &LineProblem) -> Result<ParallelOperator> {
    p.validate()?;
    let m = p.len();
    if m < 3 {
        return Err(invalid("the periodic grid needs at least 3 nodes"));
    }
    let h = p.h;
    let prev = |i: usize| (i + m - 1) % m;
    let next = |i: usize| (i + 1) % m;
    let pp = &p.p_par;
    let k = &p.div_b;
    // w = ∇·(p∥ b), q = −3p∥ + p⊥
    let w: Vec<f64> = (0..m).map(|i| (pp[next(i)] - pp[prev(i)]) / (2.0 * h) + k[i] * pp[i]).collect();
    let q: Vec<f64> = (0..m).map(|i| -3.0 * pp[i] + p.p_perp[i]).collect();
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let h2 = h * h;
    for i in 0..m {
        let (a, c) = (prev(i), next(i));
        let e = p.e_par[i];
        lower[i] = -3.0 * (pp[a] / h2 - k[a] * pp[a] / (2.0 * h)) - 2.0 * w[a] / (2.0 * h) - e * p.n[a] / (2.0 * h)
            - k[i] * q[a] / (2.0 * h);
        diag[i] = 6.0 * pp[i] / h2 + 2.0 * k[i] * w[i] + e * k[i] * p.n[i] + k[i] * k[i] * q[i] + p.p_perp[i] * k[i] * k[i];
        upper[i] = -3.0 * (pp[c] / h2 + k[c] * pp[c] / (2.0 * h)) + 2.0 * w[c] / (2.0 * h) + e * p.n[c] / (2.0 * h)
            + k[i] * q[c] / (2.0 * h);
    }
    let matrix = Cyclic { lower, diag, upper };
    let ones = vec![1.0; m];
    let a1 = matrix.apply(&ones).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let nullspace = a1 <= NULL_TOL * matrix.norm_inf();
    Ok(ParallelOperator { matrix, nullspace })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gauge {
    ZeroMean,
    Pinned { s0: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub nullspace: bool,
    /// |ℓ·r| / (‖ℓ‖ ‖r‖) with ℓ the left null vector; zero without a nullspace
    pub compatibility_residual: f64,
    /// ‖A u − r‖∞ after projection
    pub residual: f64,
    /// ‖A‖∞ ‖u‖∞ / ‖r‖∞, a cheap lower bound on the condition number
    pub condition_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelSolution {
    pub s: Vec<f64>,
    pub u_par: Vec<f64>,
    pub report: SolveReport,
}

impl ParallelSolution {
    /// Columns s, u_par, residual (pointwise A u − r).
    pub fn csv(&self, op: &ParallelOperator, rhs: &[f64]) -> String {
        let au = op.apply(&self.u_par);
        let mut out = String::from("s,u_par,residual\n");
        for i in 0..self.s.len() {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", self.s[i], self.u_par[i], au[i] - rhs[i]));
        }
        out
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solve the system with the first unknown fixed to `pin`, dropping the first equation.
fn solve_pinned(a: &Cyclic, rhs: &[f64], pin: f64) -> Result<Vec<f64>> {
    let m = a.len();
    let lower: Vec<f64> = (1..m).map(|i| if i == 1 { 0.0 } else { a.lower[i] }).collect();
    let upper: Vec<f64> = (1..m).map(|i| if i == m - 1 { 0.0 } else { a.upper[i] }).collect();
    let diag: Vec<f64> = a.diag[1..].to_vec();
    let mut r: Vec<f64> = rhs[1..].to_vec();
    // column 0 couples to rows 1 (lower) and m−1 (upper wrap)
    r[0] -= a.lower[1] * pin;
    r[m - 2] -= a.upper[m - 1] * pin;
    let sol = tridiag::solve(&lower, &diag, &upper, &r)?;
    Ok(std::iter::once(pin).chain(sol).collect())
}

/// Left null vector ℓ (Aᵀℓ = 0) normalized with ℓ₀ = 1.
fn left_null_vector(a: &Cyclic) -> Result<Vec<f64>> {
    let at = a.transpose();
    let zero = vec![0.0; a.len()];
    solve_pinned(&at, &zero, 1.0)
}

pub fn solve_u_parallel(op: &ParallelOperator, rhs: &[f64], gauge: Gauge, s: &[f64], tol_compat: f64) -> Result<ParallelSolution> {
    let a = &op.matrix;
    let m = a.len();
    if rhs.len() != m || s.len() != m {
        return Err(invalid("right-hand side length does not match the operator"));
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite right-hand side"));
    }
    let r_norm = norm_inf(rhs);
    let (u, rhs_used, compat) = if op.nullspace {
        let l = left_null_vector(a)?;
        let ll: f64 = l.iter().map(|v| v * v).sum();
        let lr: f64 = l.iter().zip(rhs).map(|(a, b)| a * b).sum();
        let rr: f64 = rhs.iter().map(|v| v * v).sum();
        let compat = if rr == 0.0 { 0.0 } else { lr.abs() / (ll.sqrt() * rr.sqrt()) };
        if compat > tol_compat {
            return Err(Error::Incompatible { residual: compat });
        }
        let projected: Vec<f64> = rhs.iter().zip(&l).map(|(r, li)| r - lr / ll * li).collect();
        let mut u = solve_pinned(a, &projected, 0.0)?;
        apply_gauge(&mut u, gauge, s)?;
        (u, projected, compat)
    } else {
        (a.solve(rhs)?, rhs.to_vec(), 0.0)
    };
    let au = a.apply(&u);
    let residual = norm_inf(&au.iter().zip(&rhs_used).map(|(x, y)| x - y).collect::<Vec<_>>());
    let scale = a.norm_inf() * norm_inf(&u) + norm_inf(&rhs_used);
    if !(residual <= 1e-8 * scale.max(f64::MIN_POSITIVE)) && residual > 0.0 {
        return Err(Error::Conditioning(format!("residual {residual:e} against scale {scale:e}")));
    }
    let condition_estimate = if r_norm > 0.0 { a.norm_inf() * norm_inf(&u) / r_norm } else { 0.0 };
    Ok(ParallelSolution {
        s: s.to_vec(),
        u_par: u,
        report: SolveReport { nullspace: op.nullspace, compatibility_residual: compat, residual, condition_estimate },
    })
}

fn apply_gauge(u: &mut [f64], gauge: Gauge, s: &[f64]) -> Result<()> {
    let shift = match gauge {
        Gauge::ZeroMean => u.iter().sum::<f64>() / u.len() as f64,
        Gauge::Pinned { s0, value } => {
            let m = s.len();
            let h = s[1] - s[0];
            let period = h * m as f64;
            let x = (s0 - s[0]).rem_euclid(period) / h;
            let i = (x.floor() as usize).min(m - 1);
            let frac = x - i as f64;
            let at = u[i] * (1.0 - frac) + u[(i + 1) % m] * frac;
            if !at.is_finite() || !value.is_finite() {
                return Err(invalid("pinned gauge needs finite s0 and value"));
            }
            at - value
        }
    };
    u.iter_mut().for_each(|v| *v -= shift);
    Ok(())
}

/// One-call convenience: assemble and solve.
pub fn solve_line_problem(p: &LineProblem, gauge: Gauge, tol_compat: f64) -> Result<(ParallelOperator, ParallelSolution)> {
    let op = assemble_parallel_operator(p)?;
    let sol = solve_u_parallel(&op, &p.rhs, gauge, &p.s, tol_compat)?;
    Ok((op, sol))
}

/// Fields entering R₃. Higher moments are required; K-moments default to zero.
pub struct R3Inputs<'a> {
    pub field: &'a FieldConfiguration,
    pub n: &'a dyn ScalarField,
    pub p_par: &'a dyn ScalarField,
    pub p_perp: &'a dyn ScalarField,
    pub m21: Option<&'a dyn ScalarField>,
    pub m40: Option<&'a dyn ScalarField>,
    pub m02: Option<&'a dyn ScalarField>,
    pub u_perp: &'a dyn VectorField,
    pub k30: Option<&'a dyn ScalarField>,
    pub k10: Option<&'a dyn ScalarField>,
    pub k11: Option<&'a dyn ScalarField>,
    /// finite-difference step for the spatial derivatives of composite fields
    pub h: f64,
}

fn nan3() -> Vec3 {
    Vec3::repeat(f64::NAN)
}

impl R3Inputs<'_> {
    fn sample(&self, x: &Vec3, t: f64) -> Option<FieldSample> {
        self.field.eval(x, t).ok()
    }

    fn moments(&self) -> Result<(&dyn ScalarField, &dyn ScalarField, &dyn ScalarField)> {
        match (self.m21, self.m40, self.m02) {
            (Some(a), Some(b), Some(c)) => Ok((a, b, c)),
            _ => Err(Error::Capability("R3 needs the moments M(2,1), M(4,0) and M(0,2)".into())),
        }
    }

    fn k_value(k: Option<&dyn ScalarField>, x: &Vec3, t: f64) -> f64 {
        k.map_or(0.0, |k| k.value(x, t))
    }

    /// 𝔽 = ∇·ℙ / n at x (NaN outside the field domain).
    pub fn force(&self, x: &Vec3, t: f64) -> Vec3 {
        match self.sample(x, t) {
            Some(s) => div_pressure_tensor(self.p_perp, self.p_par, &s, t) / self.n.value(x, t),
            None => nan3(),
        }
    }

    /// b × 𝔽 / |B|
    fn b_cross_force(&self, x: &Vec3, t: f64) -> Vec3 {
        match self.sample(x, t) {
            Some(s) => s.b.cross(&self.force(x, t)) / s.mag_b,
            None => nan3(),
        }
    }

    fn div(&self, f: impl Fn(&Vec3) -> Vec3, x: &Vec3) -> f64 {
        fd::divergence(f, x, self.h)
    }

    /// ∇·(𝐟/|B|)
    fn div_f_over_b(&self, x: &Vec3, t: f64) -> f64 {
        self.div(|y| self.sample(y, t).map_or(nan3(), |s| s.f_vec / s.mag_b), x)
    }

    pub fn r1(&self, x: &Vec3, t: f64) -> Result<f64> {
        let (m21, m40, _) = self.moments()?;
        let s = self.field.eval(x, t)?;
        let flux = |y: &Vec3| -> Vec3 {
            let Some(sy) = self.sample(y, t) else { return nan3() };
            let drift = self.u_perp.value(y, t) - self.b_cross_force(y, t);
            let twist = sy.curl_b + sy.b.cross(&sy.grad_mag_b) / sy.mag_b - sy.f_vec;
            drift * self.p_par.value(y, t) + twist * m21.value(y, t) + sy.f_vec / sy.mag_b * m40.value(y, t)
        };
        let ju = self.u_perp.jacobian(x, t);
        let bb = s.b.dot(&(ju * s.b));
        let f = self.force(x, t);
        let k30b = self.div(|y| self.sample(y, t).map_or(nan3(), |sy| sy.b * Self::k_value(self.k30, y, t)), x);
        let v = -self.div(flux, x) + 2.0 * (-bb + f.dot(&s.f_vec) / s.mag_b) * self.p_par.value(x, t)
            + 2.0 * s.mag_b * self.div_f_over_b(x, t) * m21.value(x, t)
            - k30b
            + 2.0 * s.b.dot(&f) * Self::k_value(self.k10, x, t)
            - 2.0 * s.b.dot(&s.grad_mag_b) * Self::k_value(self.k11, x, t);
        finite(v, "R1")
    }

    pub fn r2(&self, x: &Vec3, t: f64) -> Result<f64> {
        let (m21, _, m02) = self.moments()?;
        let s = self.field.eval(x, t)?;
        let flux = |y: &Vec3| -> Vec3 {
            let Some(sy) = self.sample(y, t) else { return nan3() };
            let drift = self.u_perp.value(y, t) - self.b_cross_force(y, t);
            let twist = sy.curl_b + sy.b.cross(&sy.grad_mag_b) / sy.mag_b - sy.f_vec;
            drift * self.p_perp.value(y, t) + twist * (sy.mag_b * m02.value(y, t)) + sy.f_vec * m21.value(y, t)
        };
        let ju = self.u_perp.jacobian(x, t);
        let bb = s.b.dot(&(ju * s.b));
        let f = self.force(x, t);
        let div_bxf = self.div(|y| self.b_cross_force(y, t), x);
        let k11b = self.div(|y| self.sample(y, t).map_or(nan3(), |sy| sy.b * Self::k_value(self.k11, y, t)), x);
        let v = -self.div(flux, x)
            + (bb - f.dot(&s.f_vec) / s.mag_b - ju.trace() + div_bxf) * self.p_perp.value(x, t)
            - self.div_f_over_b(x, t) * s.mag_b * m21.value(x, t)
            - s.mag_b * k11b;
        finite(v, "R2")
    }

    pub fn r3(&self, x: &Vec3, t: f64) -> Result<f64> {
        self.moments()?;
        let s = self.field.eval(x, t)?;
        let r1 = self.r1(x, t)?;
        let r2 = self.r2(x, t)?;
        let dr1 = fd::directional(|y| self.r1(y, t).unwrap_or(f64::NAN), x, &s.b, self.h);
        let n = self.n.value(x, t);
        let div_nu = self.div(|y| self.u_perp.value(y, t) * self.n.value(y, t), x);
        let dt_e_par = s.dt_e.dot(&s.b) + s.e.dot(&s.dt_b);
        let div_dtb = self.div(|y| self.sample(y, t).map_or(nan3(), |sy| sy.dt_b), x);
        let (pl, pp) = (self.p_par.value(x, t), self.p_perp.value(x, t));
        let v = -dr1 - s.e.dot(&s.b) * div_nu - s.div_b * (r1 - r2) + n * dt_e_par
            - s.dt_b.dot(&self.p_par.gradient(x, t))
            - (pl - pp) * div_dtb;
        finite(v, "R3")
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{what} evaluated to a non-finite value")))
    }
}

/// R₃ at the nodes of a line (closing node excluded when the line is closed).
pub fn compute_r3(inputs: &R3Inputs<'_>, line: &FieldLine, t: f64) -> Result<Vec<f64>> {
    let count = if line.closed { line.len() - 1 } else { line.len() };
    line.nodes[..count].iter().map(|x| inputs.r3(x, t)).collect()
}

/// n (E·b) − (b·∇p∥ + (p∥ − p⊥) ∇·b).
pub fn parallel_constraint_residual(n: &dyn ScalarField, p_par: &dyn ScalarField, p_perp: &dyn ScalarField, sample: &FieldSample, t: f64) -> f64 {
    let x = &sample.x;
    n.value(x, t) * sample.e.dot(&sample.b)
        - (sample.b.dot(&p_par.gradient(x, t)) + (p_par.value(x, t) - p_perp.value(x, t)) * sample.div_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn reduced(cells: usize, p: f64) -> LineProblem {
        let c = move |_s: f64| NodeCoefficients { n: 1.0, p_par: p, p_perp: p, e_par: 0.0, div_b: 0.0 };
        LineProblem::from_profiles(TAU, cells, c, &|s: f64| s.sin()).unwrap()
    }

    #[test]
    fn reduced_case_recovers_sine() {
        let p = reduced(256, 3.0);
        let (op, sol) = solve_line_problem(&p, Gauge::ZeroMean, DEFAULT_TOL_COMPAT).unwrap();
        assert!(op.nullspace);
        let err = sol.u_par.iter().zip(&p.s).map(|(u, s)| (u - s.sin() / 9.0).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err:e}");
    }

    #[test]
    fn reduced_operator_is_symmetric() {
        let op = assemble_parallel_operator(&reduced(16, 2.0)).unwrap();
        let t = op.matrix.transpose();
        for i in 0..16 {
            assert!((t.lower[i] - op.matrix.lower[i]).abs() < 1e-12);
            assert!((t.upper[i] - op.matrix.upper[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn incompatible_rhs_rejected() {
        let c = |_s: f64| NodeCoefficients { n: 1.0, p_par: 1.0, p_perp: 1.0, e_par: 0.0, div_b: 0.0 };
        let p = LineProblem::from_profiles(TAU, 32, c, &|s: f64| 1.0 + s.sin()).unwrap();
        assert!(matches!(solve_line_problem(&p, Gauge::ZeroMean, 1e-6), Err(Error::Incompatible { .. })));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let c = |_s: f64| NodeCoefficients { n: 1.0, p_par: 1.0, p_perp: 1.0, e_par: 0.0, div_b: 0.0 };
        let p = LineProblem::from_profiles(TAU, 32, c, &|_| 0.0).unwrap();
        let (_, sol) = solve_line_problem(&p, Gauge::ZeroMean, 1e-6).unwrap();
        assert!(sol.u_par.iter().all(|u| *u == 0.0));
    }
}
