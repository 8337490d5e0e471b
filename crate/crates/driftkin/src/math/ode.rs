//! Adaptive Dormand–Prince 5(4) integrator on fixed-size states.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, h_init: 1e-3, h_max: f64::INFINITY, h_min: 1e-14 }
    }
}

pub struct Dopri5<const N: usize, F> {
    f: F,
    opts: OdeOptions,
    h: f64,
    pub t: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
}

impl<const N: usize, F> Dopri5<N, F>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    pub fn new(mut f: F, t0: f64, y0: [f64; N], opts: OdeOptions) -> Result<Self> {
        if !(opts.rtol > 0.0 && opts.atol > 0.0) {
            return Err(Error::InvalidInput("integrator tolerances must be positive".into()));
        }
        let dy = f(t0, &y0)?;
        Ok(Dopri5 { f, h: opts.h_init.min(opts.h_max), opts, t: t0, y: y0, dy })
    }

    /// Single fixed step of size `h` from the current state, without error control.
    /// The stepper itself is left untouched.
    pub fn probe(&mut self, h: f64) -> Result<[f64; N]> {
        let (y, _, _) = self.trial(h)?;
        Ok(y)
    }

    fn trial(&mut self, h: f64) -> Result<([f64; N], [f64; N], f64)> {
        let mut k = [[0.0; N]; 7];
        k[0] = self.dy;
        for s in 1..7 {
            let mut ys = self.y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[s] = (self.f)(self.t + C[s] * h, &ys)?;
        }
        // stage 7 evaluated at the 5th-order solution (FSAL)
        let mut y_new = self.y;
        for (j, kj) in k.iter().enumerate().take(6) {
            for i in 0..N {
                y_new[i] += h * A[6][j] * kj[i];
            }
        }
        let mut err = 0.0;
        for i in 0..N {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            e *= h;
            let sc = self.opts.atol + self.opts.rtol * self.y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / N as f64).sqrt();
        Ok((y_new, k[6], err))
    }

    /// Take one accepted step, never passing `t_limit`. Returns the step size used.
    pub fn step(&mut self, t_limit: f64) -> Result<f64> {
        loop {
            let remaining = t_limit - self.t;
            if remaining <= 0.0 {
                return Ok(0.0);
            }
            let mut h = self.h.min(self.opts.h_max);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let (y_new, dy_new, err) = self.trial(h)?;
            if !err.is_finite() {
                self.h = h * 0.2;
            } else if err <= 1.0 {
                self.t = if last { t_limit } else { self.t + h };
                self.y = y_new;
                self.dy = dy_new;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
                return Ok(h);
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            }
            if self.h < self.opts.h_min {
                return Err(Error::Stability(format!(
                    "step size underflow at t = {} (h = {:e})",
                    self.t, self.h
                )));
            }
        }
    }

    /// Integrate up to exactly `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end {
            self.step(t_end)?;
        }
        Ok(())
    }
}

/// Cubic Hermite interpolation between two states with derivatives.
pub fn hermite<const N: usize>(
    t0: f64,
    y0: &[f64; N],
    d0: &[f64; N],
    t1: f64,
    y1: &[f64; N],
    d1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let mut s = Dopri5::new(f, 0.0, [1.0, 0.0], OdeOptions::with_tol(1e-11)).unwrap();
        s.advance_to(2.0 * std::f64::consts::PI).unwrap();
        assert!((s.y[0] - 1.0).abs() < 1e-9);
        assert!(s.y[1].abs() < 1e-9);
    }

    #[test]
    fn exponential_growth() {
        let f = |_t: f64, y: &[f64; 1]| Ok([y[0]]);
        let mut s = Dopri5::new(f, 0.0, [1.0], OdeOptions::with_tol(1e-12)).unwrap();
        s.advance_to(1.0).unwrap();
        assert!((s.y[0] - std::f64::consts::E).abs() < 1e-10);
    }
}
