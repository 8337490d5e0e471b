//! Fast parallel motion along field lines, mirror points, and the full
//! finite-ε characteristics used as the reference for the guiding-center limit.
//!
//! The fast motion is dX/dτ = C∥ b, dC∥/dτ = b·(𝔽 − μ∇|B|) at frozen t. The
//! state is augmented with s = ∫C∥ dτ and I = ∫ b·𝔽 ds so that the invariant
//! W = C∥²/2 + μ(|B(X)| − |B(x0)|) − I can be monitored without quadrature.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::Serialize;

use crate::drifts::{drift_velocities, effective_potential};
use crate::error::{invalid, Error, Result};
use crate::field::{FieldConfiguration, FieldSample};
use crate::field_line::FieldLine;
use crate::math::ode::{hermite, Dopri5, OdeOptions};
use crate::math::{loglog_slope, to_array, Vec3};

/// Ratio between the requested tolerance and the integrator's local tolerance,
/// leaving room for accumulation of the invariant drift over many steps.
const LOCAL_TOL_RATIO: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct FastTrajectory {
    pub tau: Vec<f64>,
    pub x: Vec<Vec3>,
    pub c_par: Vec<f64>,
    pub mu: f64,
    pub invariant_w: Vec<f64>,
    pub s: Vec<f64>,
    pub exited: bool,
    states: Vec<[f64; 6]>,
    derivs: Vec<[f64; 6]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurningPoint {
    pub tau: f64,
    pub x: Vec3,
    pub s: f64,
}

impl FastTrajectory {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Largest |W(τ) − W(0)| / max(|W(0)|, 1).
    pub fn max_w_drift(&self) -> f64 {
        let w0 = self.invariant_w[0];
        self.invariant_w.iter().map(|w| (w - w0).abs()).fold(0.0, f64::max) / w0.abs().max(1.0)
    }

    fn interval(&self, tau: f64) -> Option<usize> {
        let n = self.tau.len();
        if n < 2 || tau < self.tau[0] || tau > self.tau[n - 1] {
            return None;
        }
        Some(self.tau.partition_point(|t| *t <= tau).clamp(1, n - 1) - 1)
    }

    fn dense(&self, k: usize, tau: f64) -> [f64; 6] {
        hermite(
            self.tau[k],
            &self.states[k],
            &self.derivs[k],
            self.tau[k + 1],
            &self.states[k + 1],
            &self.derivs[k + 1],
            tau,
        )
    }

    /// (X, C∥, s) at an arbitrary τ inside the integrated range.
    pub fn state_at(&self, tau: f64) -> Option<(Vec3, f64, f64)> {
        let k = self.interval(tau)?;
        let y = self.dense(k, tau);
        Some((Vec3::new(y[0], y[1], y[2]), y[3], y[5]))
    }

    /// Zeros of C∥, refined on the cubic Hermite interpolant.
    pub fn turning_points(&self) -> Vec<TurningPoint> {
        let mut out = Vec::new();
        for k in 0..self.tau.len().saturating_sub(1) {
            let (c0, c1) = (self.c_par[k], self.c_par[k + 1]);
            if c0 == 0.0 || c0 * c1 >= 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (self.tau[k], self.tau[k + 1]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.dense(k, mid)[3] * c0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                    break;
                }
            }
            let tau = 0.5 * (lo + hi);
            let y = self.dense(k, tau);
            out.push(TurningPoint { tau, x: Vec3::new(y[0], y[1], y[2]), s: y[5] });
        }
        out
    }

    /// Columns tau, x1, x2, x3, c_par, mu, W.
    pub fn csv(&self) -> String {
        let mut out = String::from("tau,x1,x2,x3,c_par,mu,W\n");
        for k in 0..self.tau.len() {
            let x = self.x[k];
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.tau[k], x[0], x[1], x[2], self.c_par[k], self.mu, self.invariant_w[k]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FastOptions {
    pub tol: f64,
    pub max_step: f64,
}

impl FastOptions {
    pub fn new(tol: f64) -> Self {
        FastOptions { tol, max_step: 0.05 }
    }
}

/// Integrate the fast motion over τ ∈ [0, tau_end] at frozen time t.
pub fn integrate_fast_motion<F>(
    config: &FieldConfiguration,
    x0: &Vec3,
    c_par0: f64,
    mu: f64,
    t: f64,
    tau_end: f64,
    opts: FastOptions,
    force: F,
) -> Result<FastTrajectory>
where
    F: Fn(&FieldSample) -> Vec3,
{
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(invalid("fast-motion tolerance must be positive"));
    }
    if !(tau_end >= 0.0 && tau_end.is_finite()) {
        return Err(invalid("tau_end must be nonnegative and finite"));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(invalid("magnetic moment must be nonnegative"));
    }
    let s0 = config.eval(x0, t)?;
    let b_ref = s0.mag_b;
    let rhs = |_tau: f64, y: &[f64; 6]| -> Result<[f64; 6]> {
        let s = config.eval(&Vec3::new(y[0], y[1], y[2]), t)?;
        let f = force(&s);
        let c = y[3];
        Ok([
            c * s.b[0],
            c * s.b[1],
            c * s.b[2],
            s.b.dot(&(f - s.grad_mag_b * mu)),
            c * s.b.dot(&f),
            c,
        ])
    };
    let local = (opts.tol * LOCAL_TOL_RATIO).max(1e-14);
    let oo = OdeOptions { rtol: local, atol: local, h_init: opts.max_step.min(1e-2), h_max: opts.max_step, h_min: 1e-14 };
    let mut st = Dopri5::new(rhs, 0.0, [x0[0], x0[1], x0[2], c_par0, 0.0, 0.0], oo)?;
    let w_of = |y: &[f64; 6]| {
        let mb = config.magnetic(&Vec3::new(y[0], y[1], y[2]), t).norm();
        0.5 * y[3] * y[3] + mu * (mb - b_ref) - y[4]
    };
    let mut traj = FastTrajectory {
        tau: vec![0.0],
        x: vec![*x0],
        c_par: vec![c_par0],
        mu,
        invariant_w: vec![w_of(&st.y)],
        s: vec![0.0],
        exited: false,
        states: vec![st.y],
        derivs: vec![st.dy],
    };
    while st.t < tau_end {
        match st.step(tau_end) {
            Ok(_) => {}
            Err(Error::OutsideDomain { .. }) => {
                traj.exited = true;
                break;
            }
            Err(e) => return Err(e),
        }
        let y = st.y;
        traj.tau.push(st.t);
        traj.x.push(Vec3::new(y[0], y[1], y[2]));
        traj.c_par.push(y[3]);
        traj.invariant_w.push(w_of(&y));
        traj.s.push(y[5]);
        traj.states.push(y);
        traj.derivs.push(st.dy);
    }
    Ok(traj)
}

/// Mirror points: the interval around s = 0 bounded by the first zeros of
/// W − V(s) on either side; `None` when W exceeds V everywhere on the line.
pub fn find_mirror_points<F>(line: &FieldLine, mu: f64, w: f64, force: F) -> Result<Option<(f64, f64)>>
where
    F: Fn(&FieldSample) -> Vec3,
{
    let v = effective_potential(line, mu, force)?;
    let s = &line.s;
    let (k_min, v_min) = s
        .iter()
        .map(|si| v.value(*si))
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, val)| if val < acc.1 { (k, val) } else { acc });
    let slack = 1e-13 * w.abs().max(1.0);
    if w < v_min - slack {
        return Err(Error::NoMotion { w, v_min });
    }
    if w <= v_min + slack {
        return Ok(Some((s[k_min], s[k_min])));
    }
    let gap = |si: f64| w - v.value(si);
    if gap(0.0) < 0.0 {
        return Err(invalid("s = 0 lies in a classically forbidden region"));
    }
    let k0 = s.iter().position(|si| *si >= 0.0).unwrap_or(0);
    let refine = |a: f64, b: f64| {
        // gap(a) > 0 ≥ gap(b)
        let (mut lo, mut hi) = (a, b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let right = (k0..s.len().saturating_sub(1)).find(|&k| gap(s[k + 1]) <= 0.0).map(|k| refine(s[k].max(0.0), s[k + 1]));
    let left = (1..=k0).rev().find(|&k| gap(s[k - 1]) <= 0.0).map(|k| refine(s[k].min(0.0), s[k - 1]));
    match (left, right) {
        (Some(a), Some(b)) => Ok(Some((a, b))),
        (None, None) => Ok(None),
        _ => Err(Error::Geometry("only one mirror point lies on the traced segment".into())),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FullOptions {
    /// step as a fraction of the local cyclotron period 2πε²/|B(x0)|
    pub dt_frac: f64,
    /// largest admissible fraction at any visited point
    pub max_frac: f64,
}

impl Default for FullOptions {
    fn default() -> Self {
        FullOptions { dt_frac: 1.0 / 20.0, max_frac: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct FullTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub epsilon: f64,
    pub energy_proxy: Vec<f64>,
    pub dt: f64,
    pub exited: bool,
}

impl FullTrajectory {
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy_proxy[0];
        self.energy_proxy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE)
    }
}

/// Rotation of `w` about the unit axis `b` by `angle` (right-handed).
fn rotate(w: &Vec3, b: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    w * c + b.cross(w) * s + b * (b.dot(w) * (1.0 - c))
}

/// Exact solution of dv/dt = (E + v×B)/ε² over `dt` at frozen E and B.
fn velocity_substep(v: &Vec3, sample: &FieldSample, eps2: f64, dt: f64) -> Vec3 {
    let b = &sample.b;
    let mb = sample.mag_b;
    let v_e = sample.e.cross(&sample.b_vec) / (mb * mb);
    let mut w = v - v_e;
    let e_par = sample.e.dot(b);
    w += b * (e_par * dt / eps2);
    let w_par = b * w.dot(b);
    let w_perp = w - w_par;
    v_e + w_par + rotate(&w_perp, b, -mb * dt / eps2)
}

/// Strang splitting: half drift in x, exact velocity update at the midpoint, half drift.
pub fn integrate_full_characteristics(
    config: &FieldConfiguration,
    x0: &Vec3,
    v0: &Vec3,
    epsilon: f64,
    t_end: f64,
    opts: FullOptions,
) -> Result<FullTrajectory> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon must be positive"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("t_end must be nonnegative and finite"));
    }
    let eps2 = epsilon * epsilon;
    let s0 = config.eval(x0, 0.0)?;
    let period0 = TAU * eps2 / s0.mag_b;
    let dt = opts.dt_frac * period0;
    let check = |mb: f64, at: &Vec3| -> Result<()> {
        let frac = dt * mb / (TAU * eps2);
        if !(frac <= opts.max_frac) {
            return Err(Error::Stability(format!(
                "dt = {dt:e} is {frac:.3} of the cyclotron period at {:?}, above {}",
                to_array(at),
                opts.max_frac
            )));
        }
        Ok(())
    };
    check(s0.mag_b, x0)?;
    let n_steps = (t_end / dt).ceil() as usize;
    let mut traj = FullTrajectory {
        t: Vec::with_capacity(n_steps + 1),
        x: Vec::with_capacity(n_steps + 1),
        v: Vec::with_capacity(n_steps + 1),
        epsilon,
        energy_proxy: Vec::with_capacity(n_steps + 1),
        dt,
        exited: false,
    };
    let (mut x, mut v) = (*x0, *v0);
    let push = |traj: &mut FullTrajectory, t: f64, x: Vec3, v: Vec3| {
        traj.t.push(t);
        traj.x.push(x);
        traj.v.push(v);
        traj.energy_proxy.push(0.5 * v.norm_squared());
    };
    push(&mut traj, 0.0, x, v);
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let xh = x + v * (0.5 * dt);
        let s = match config.eval(&xh, t + 0.5 * dt) {
            Ok(s) => s,
            Err(Error::OutsideDomain { .. }) => {
                traj.exited = true;
                break;
            }
            Err(e) => return Err(e),
        };
        check(s.mag_b, &xh)?;
        v = velocity_substep(&v, &s, eps2, dt);
        x = xh + v * (0.5 * dt);
        push(&mut traj, (k + 1) as f64 * dt, x, v);
    }
    Ok(traj)
}

/// Position averaged over one local cyclotron period, centred on each sample
/// whose window fits inside the trajectory.
pub fn gyro_averaged_positions(config: &FieldConfiguration, full: &FullTrajectory) -> Result<Vec<(f64, Vec3)>> {
    let n = full.t.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let dt = full.dt;
    let eps2 = full.epsilon * full.epsilon;
    // running trapezoid integral of x(t)
    let mut prefix = vec![Vec3::zeros(); n];
    for k in 1..n {
        prefix[k] = prefix[k - 1] + (full.x[k - 1] + full.x[k]) * (0.5 * dt);
    }
    let integral_to = |tq: f64| -> Vec3 {
        let j = ((tq / dt).floor() as usize).min(n - 2);
        let frac = tq / dt - j as f64;
        let xq = full.x[j] * (1.0 - frac) + full.x[j + 1] * frac;
        prefix[j] + (full.x[j] + xq) * (0.5 * frac * dt)
    };
    let t_last = full.t[n - 1];
    let mut out = Vec::new();
    for k in 0..n {
        let mb = config.magnetic(&full.x[k], full.t[k]).norm();
        let period = TAU * eps2 / mb;
        let (a, b) = (full.t[k] - 0.5 * period, full.t[k] + 0.5 * period);
        if a < 0.0 || b > t_last {
            continue;
        }
        out.push((full.t[k], (integral_to(b) - integral_to(a)) / period));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GuidingCenterReport {
    pub max_position_error: f64,
    pub drift_velocity_error: f64,
    pub samples: usize,
}

/// Compare the gyro-averaged full orbit against the fast-motion reference
/// started from the same (x0, c∥, μ), with τ identified with t, over t ≤ window.
pub fn guiding_center_error(
    config: &FieldConfiguration,
    full: &FullTrajectory,
    reference: &FastTrajectory,
    window: f64,
) -> Result<GuidingCenterReport> {
    let x0 = full.x[0];
    let s0 = config.eval(&x0, 0.0)?;
    let v0 = full.v[0];
    let c0 = v0.dot(&s0.b);
    let mu0 = (v0 - s0.b * c0).norm_squared() / (2.0 * s0.mag_b);
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    if (reference.x[0] - x0).norm() > 1e-12 || !same(reference.c_par[0], c0) || !same(reference.mu, mu0) {
        return Err(invalid("reference and full trajectories start from different invariants"));
    }
    let eps2 = full.epsilon * full.epsilon;
    let gc: Vec<(f64, Vec3)> = gyro_averaged_positions(config, full)?.into_iter().filter(|(t, _)| *t <= window).collect();
    let mut max_err = 0.0f64;
    let mut count = 0;
    for (t, xg) in &gc {
        if let Some((xr, _, _)) = reference.state_at(*t) {
            max_err = max_err.max(config.domain.displacement(xg, &xr).norm());
            count += 1;
        }
    }
    let mut num = Vec3::zeros();
    let mut refd = Vec3::zeros();
    let mut pairs = 0usize;
    for w in gc.windows(2) {
        let ((t0, x0), (t1, x1)) = (w[0], w[1]);
        let Some((_, c_ref, _)) = reference.state_at(t0) else { continue };
        let s = config.eval(&x0, t0)?;
        let vel = (x1 - x0) / (t1 - t0);
        num += vel - s.b * vel.dot(&s.b);
        let d = drift_velocities(c_ref, reference.mu, &Vec3::zeros(), &s);
        refd += d.v_ed + (d.v_gd + d.v_cd) * eps2;
        pairs += 1;
    }
    let drift_velocity_error = if pairs == 0 { 0.0 } else { ((num - refd) / pairs as f64).norm() };
    Ok(GuidingCenterReport { max_position_error: max_err, drift_velocity_error, samples: count })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub epsilon: Vec<f64>,
    pub error: Vec<f64>,
    pub slope: f64,
}

/// Guiding-center error for a decreasing list of ε in test-particle mode (𝔽 = 0).
pub fn epsilon_sweep(
    config: &FieldConfiguration,
    x0: &Vec3,
    v0: &Vec3,
    epsilons: &[f64],
    t_end: f64,
    opts: FullOptions,
    tol: f64,
) -> Result<ConvergenceReport> {
    if epsilons.len() < 2 || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("epsilon list must be strictly decreasing with at least two entries"));
    }
    let s0 = config.eval(x0, 0.0)?;
    let c0 = v0.dot(&s0.b);
    let mu = (v0 - s0.b * c0).norm_squared() / (2.0 * s0.mag_b);
    let reference =
        integrate_fast_motion(config, x0, c0, mu, 0.0, t_end, FastOptions::new(tol), crate::drifts::zero_force)?;
    let error = epsilons
        .par_iter()
        .map(|&eps| {
            let full = integrate_full_characteristics(config, x0, v0, eps, t_end, opts)?;
            Ok(guiding_center_error(config, &full, &reference, t_end)?.max_position_error)
        })
        .collect::<Result<Vec<f64>>>()?;
    let slope = loglog_slope(epsilons, &error);
    Ok(ConvergenceReport { epsilon: epsilons.to_vec(), error, slope })
}
