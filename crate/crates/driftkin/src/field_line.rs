//! Magnetic field-line tracing, dX/ds = b.

use crate::error::{invalid, Error, Result};
use crate::field::{FieldConfiguration, FieldSample, MAG_B_FLOOR};
use crate::math::ode::{Dopri5, OdeOptions};
use crate::math::{to_array, Vec3};

#[derive(Debug, Clone)]
pub struct FieldLine {
    pub nodes: Vec<Vec3>,
    pub s: Vec<f64>,
    /// arc length of one turn when closed
    pub period: Option<f64>,
    pub samples: Vec<FieldSample>,
    pub closed: bool,
    /// the line left the field domain before reaching `max_arc`
    pub exited: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    pub max_arc: f64,
    /// arc length traced against b before the forward pass (no closure test there)
    pub backward_arc: f64,
    pub tol: f64,
    pub max_step: f64,
}

impl TraceOptions {
    pub fn new(max_arc: f64, tol: f64) -> Self {
        TraceOptions { max_arc, backward_arc: 0.0, tol, max_step: 0.05 }
    }
}

fn validate(opts: &TraceOptions) -> Result<()> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(invalid("trace tolerance must be positive and finite"));
    }
    if !(opts.max_arc > 0.0 && opts.max_arc.is_finite()) {
        return Err(invalid("max_arc must be positive and finite"));
    }
    if !(opts.backward_arc >= 0.0 && opts.backward_arc.is_finite()) {
        return Err(invalid("backward_arc must be nonnegative and finite"));
    }
    if !(opts.max_step > 0.0) {
        return Err(invalid("max_step must be positive"));
    }
    Ok(())
}

fn unit_field(config: &FieldConfiguration, x: &Vec3, t: f64, sign: f64) -> Result<Vec3> {
    config.check_point(x)?;
    let b = config.magnetic(x, t);
    let m = b.norm();
    if !(m >= MAG_B_FLOOR) {
        return Err(Error::DegenerateField { mag_b: m, x: to_array(x) });
    }
    Ok(b * (sign / m))
}

fn ode_options(opts: &TraceOptions) -> OdeOptions {
    let tol = (opts.tol * 1e-3).max(1e-13);
    OdeOptions { rtol: tol, atol: tol, h_init: opts.max_step.min(1e-2), h_max: opts.max_step, h_min: 1e-14 }
}

struct Pass {
    nodes: Vec<Vec3>,
    s: Vec<f64>,
    exited: bool,
    period: Option<f64>,
}

fn make_stepper<'a>(
    config: &'a FieldConfiguration,
    x: Vec3,
    t: f64,
    sign: f64,
    oo: OdeOptions,
) -> Result<Dopri5<3, impl FnMut(f64, &[f64; 3]) -> Result<[f64; 3]> + 'a>> {
    let rhs = move |_s: f64, y: &[f64; 3]| {
        let b = unit_field(config, &Vec3::new(y[0], y[1], y[2]), t, sign)?;
        Ok([b[0], b[1], b[2]])
    };
    Dopri5::new(rhs, 0.0, [x[0], x[1], x[2]], oo)
}

fn pass(config: &FieldConfiguration, x0: &Vec3, t: f64, arc: f64, sign: f64, closure: bool, opts: &TraceOptions) -> Result<Pass> {
    let oo = ode_options(opts);
    let b0 = unit_field(config, x0, t, 1.0)?;
    let mut st = make_stepper(config, *x0, t, sign, oo)?;
    let mut out = Pass { nodes: vec![*x0], s: vec![0.0], exited: false, period: None };
    let gap = |x: &Vec3| config.domain.displacement(x, x0);
    while st.t < arc {
        let prev = Vec3::from(st.y);
        let s_prev = st.t;
        match st.step(arc) {
            Ok(_) => {}
            Err(Error::OutsideDomain { .. }) => {
                out.exited = true;
                break;
            }
            Err(e) => return Err(e),
        }
        let cur = Vec3::from(st.y);
        let h = st.t - s_prev;
        if closure && s_prev > 0.0 {
            let (d0, d1) = (gap(&prev), gap(&cur));
            let (g0, g1) = (d0.dot(&b0), d1.dot(&b0));
            if g0 < 0.0 && g1 >= 0.0 && d0.norm() <= 2.0 * h && d1.norm() <= 2.0 * h {
                // bisection on a fresh single step from the previous node
                let mut sub = make_stepper(config, prev, t, sign, oo)?;
                let (mut lo, mut hi) = (0.0, h);
                let mut x_star = cur;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let y = sub.probe(mid)?;
                    let xm = Vec3::from(y);
                    if gap(&xm).dot(&b0) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    x_star = xm;
                    if hi - lo < 1e-15 * (1.0 + s_prev) {
                        break;
                    }
                }
                let s_star = s_prev + 0.5 * (lo + hi);
                let tangent = unit_field(config, &x_star, t, 1.0)?;
                if gap(&x_star).norm() < opts.tol && tangent.dot(&b0) > 1.0 - opts.tol {
                    out.nodes.push(x_star);
                    out.s.push(s_star);
                    out.period = Some(s_star);
                    return Ok(out);
                }
            }
        }
        out.nodes.push(cur);
        out.s.push(st.t);
    }
    Ok(out)
}

fn sample_all(config: &FieldConfiguration, nodes: &[Vec3], t: f64) -> Result<Vec<FieldSample>> {
    nodes.iter().map(|x| config.eval(x, t)).collect()
}

/// Trace forward along b from `x0` over at most `max_arc`.
pub fn trace_field_line(config: &FieldConfiguration, x0: &Vec3, t: f64, max_arc: f64, tol: f64) -> Result<FieldLine> {
    trace_field_line_with(config, x0, t, &TraceOptions::new(max_arc, tol))
}

pub fn trace_field_line_with(config: &FieldConfiguration, x0: &Vec3, t: f64, opts: &TraceOptions) -> Result<FieldLine> {
    validate(opts)?;
    config.eval(x0, t)?;
    let mut nodes = Vec::new();
    let mut s = Vec::new();
    let mut exited = false;
    if opts.backward_arc > 0.0 {
        let back = pass(config, x0, t, opts.backward_arc, -1.0, false, opts)?;
        exited |= back.exited;
        for (x, a) in back.nodes.iter().zip(&back.s).skip(1).rev() {
            nodes.push(*x);
            s.push(-a);
        }
    }
    let fwd = pass(config, x0, t, opts.max_arc, 1.0, true, opts)?;
    exited |= fwd.exited;
    nodes.extend_from_slice(&fwd.nodes);
    s.extend_from_slice(&fwd.s);
    let samples = sample_all(config, &nodes, t)?;
    Ok(FieldLine { nodes, s, period: fwd.period, samples, closed: fwd.period.is_some(), exited })
}

impl FieldLine {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Re-integrate a closed line onto `n` equal arc-length cells.
    /// The result holds n + 1 nodes, the last one closing onto the first.
    pub fn resample_uniform(&self, config: &FieldConfiguration, t: f64, n: usize, tol: f64) -> Result<FieldLine> {
        let period = match (self.closed, self.period) {
            (true, Some(p)) => p,
            _ => return Err(Error::Geometry("uniform resampling needs a closed line".into())),
        };
        if n < 3 {
            return Err(invalid("resampling needs at least 3 cells"));
        }
        let x0 = self.nodes[self.s.iter().position(|v| *v == 0.0).unwrap_or(0)];
        let opts = TraceOptions { tol, ..TraceOptions::new(period, tol) };
        let mut st = make_stepper(config, x0, t, 1.0, ode_options(&opts))?;
        let mut nodes = vec![x0];
        let mut s = vec![0.0];
        for k in 1..=n {
            let target = period * k as f64 / n as f64;
            st.advance_to(target)?;
            nodes.push(Vec3::from(st.y));
            s.push(target);
        }
        let samples = sample_all(config, &nodes, t)?;
        Ok(FieldLine { nodes, s, period: Some(period), samples, closed: true, exited: false })
    }
}
