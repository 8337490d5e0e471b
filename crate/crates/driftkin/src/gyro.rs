//! Gyrophase calculus: Π, harmonic projectors, the operators L, T, A, D, the
//! Green-kernel pseudo-inverse of L and closed forms for Π(c γ₁) and
//! (∇b):∂_{c∥}Π(c⊗c γ₁).

use std::f64::consts::TAU;
use std::ops::{AddAssign, Mul};
use std::sync::Arc;

use crate::distribution::{EnergyDistribution, PhaseFunction, VectorField, ZeroVector};
use crate::error::{invalid, Error, Result};
use crate::field::{FieldConfiguration, FieldSample};
use crate::frame::{check_admissible, GyroFrame};
use crate::math::{ddot, fd, Mat3, Vec3};

pub const DEFAULT_N_ALPHA: usize = 64;
/// Solvability tolerance for L⁻¹, relative to max |h̃|.
pub const DEFAULT_TOL_SOLV: f64 = 1e-9;

pub fn check_n_alpha(n_alpha: usize) -> Result<()> {
    if n_alpha < 4 || !n_alpha.is_multiple_of(2) {
        return Err(invalid(format!("N_alpha must be even and at least 4 (got {n_alpha})")));
    }
    Ok(())
}

/// Values that can be averaged over the gyrophase.
pub trait Accumulate: Copy + AddAssign + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn is_finite_value(&self) -> bool;
}

impl Accumulate for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Accumulate for Vec3 {
    fn zero() -> Self {
        Vec3::zeros()
    }
    fn is_finite_value(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl Accumulate for Mat3 {
    fn zero() -> Self {
        Mat3::zeros()
    }
    fn is_finite_value(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

pub fn phase_nodes(n_alpha: usize) -> impl Iterator<Item = f64> {
    (0..n_alpha).map(move |k| TAU * k as f64 / n_alpha as f64)
}

/// Trapezoidal mean over the gyrophase of `f(α, c(α))` with weight w(α).
fn weighted_mean<T, F, W>(frame: &GyroFrame, e: f64, c_par: f64, n_alpha: usize, weight: W, mut f: F) -> Result<T>
where
    T: Accumulate,
    F: FnMut(f64, &Vec3) -> T,
    W: Fn(f64) -> f64,
{
    check_n_alpha(n_alpha)?;
    check_admissible(e, c_par)?;
    let mut acc = T::zero();
    for alpha in phase_nodes(n_alpha) {
        let c = frame.velocity_unchecked(e, c_par, alpha);
        let v = f(alpha, &c);
        if !v.is_finite_value() {
            return Err(Error::NonFinite { alpha });
        }
        acc += v * weight(alpha);
    }
    Ok(acc * (1.0 / n_alpha as f64))
}

/// Π h at (e, c∥): the mean of h̃ over the gyrophase.
pub fn gyroaverage<T, F>(frame: &GyroFrame, e: f64, c_par: f64, n_alpha: usize, h: F) -> Result<T>
where
    T: Accumulate,
    F: Fn(&Vec3) -> T,
{
    weighted_mean(frame, e, c_par, n_alpha, |_| 1.0, |_, c| h(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Harmonic {
    Sin,
    Cos,
}

/// Π_S^m h or Π_C^m h: (1/2π) ∫ sin(mα) h̃ dα, resp. cos.
pub fn gyro_harmonic<T, F>(frame: &GyroFrame, e: f64, c_par: f64, m: usize, kind: Harmonic, n_alpha: usize, h: F) -> Result<T>
where
    T: Accumulate,
    F: Fn(&Vec3) -> T,
{
    check_n_alpha(n_alpha)?;
    if m == 0 {
        return Err(invalid("harmonic order must be positive"));
    }
    if m >= n_alpha / 2 {
        return Err(Error::Aliasing { m, n_alpha });
    }
    let mf = m as f64;
    match kind {
        Harmonic::Sin => weighted_mean(frame, e, c_par, n_alpha, |a| (mf * a).sin(), |_, c| h(c)),
        Harmonic::Cos => weighted_mean(frame, e, c_par, n_alpha, |a| (mf * a).cos(), |_, c| h(c)),
    }
}

/// L g = −(c × B)·∇_c g.
pub fn apply_l<G: PhaseFunction + ?Sized>(g: &G, x: &Vec3, c: &Vec3, t: f64, b_vec: &Vec3) -> f64 {
    -c.cross(b_vec).dot(&g.grad_c(x, c, t))
}

/// Forces entering T, A and D.
#[derive(Clone)]
pub struct ForceInput {
    pub f0: Arc<dyn VectorField>,
    pub f1: Arc<dyn VectorField>,
    pub u0: Arc<dyn VectorField>,
}

impl ForceInput {
    pub fn zero() -> Self {
        ForceInput { f0: Arc::new(ZeroVector), f1: Arc::new(ZeroVector), u0: Arc::new(ZeroVector) }
    }

    pub fn with_f0<V: VectorField + 'static>(mut self, f0: V) -> Self {
        self.f0 = Arc::new(f0);
        self
    }

    pub fn with_f1<V: VectorField + 'static>(mut self, f1: V) -> Self {
        self.f1 = Arc::new(f1);
        self
    }

    pub fn with_u0<V: VectorField + 'static>(mut self, u0: V) -> Self {
        self.u0 = Arc::new(u0);
        self
    }
}

/// T g = c·∇_x g + 𝔽₀·∇_c g.
pub fn apply_t<G: PhaseFunction + ?Sized>(g: &G, x: &Vec3, c: &Vec3, t: f64, forces: &ForceInput) -> f64 {
    c.dot(&g.grad_x(x, c, t)) + forces.f0.value(x, t).dot(&g.grad_c(x, c, t))
}

/// A g = ∂_t g + u₀·∇_x g − c·((∇u₀)∇_c g).
pub fn apply_a<G: PhaseFunction + ?Sized>(g: &G, x: &Vec3, c: &Vec3, t: f64, forces: &ForceInput) -> f64 {
    let ju = forces.u0.jacobian(x, t);
    g.dt(x, c, t) + forces.u0.value(x, t).dot(&g.grad_x(x, c, t)) - c.dot(&(ju * g.grad_c(x, c, t)))
}

/// D g = 𝔽₁·∇_c g; 𝔽₁ must be perpendicular to b.
pub fn apply_d<G: PhaseFunction + ?Sized>(g: &G, x: &Vec3, c: &Vec3, t: f64, forces: &ForceInput, b: &Vec3) -> Result<f64> {
    let f1 = forces.f1.value(x, t);
    if f1.dot(b).abs() > 1e-12 * f1.norm().max(1.0) {
        return Err(invalid(format!("F1·b = {:e} is not zero", f1.dot(b))));
    }
    Ok(f1.dot(&g.grad_c(x, c, t)))
}

/// Green kernel Γ(α, φ) of L⁻¹ on [0, 2π)².
pub fn green_kernel(alpha: f64, phi: f64) -> f64 {
    if phi < alpha {
        phi / TAU
    } else {
        phi / TAU - 1.0
    }
}

/// L⁻¹ on gyrophase samples.
///
/// `values[k] = h̃(2πk/N)`. The Green-kernel integral is evaluated exactly on
/// the trigonometric interpolant of the samples, which is spectrally accurate
/// for smooth h; the mean must vanish to within `tol_solv · max|h̃|`.
pub fn pseudo_inverse_samples(values: &[f64], mag_b: f64, tol_solv: f64) -> Result<Vec<f64>> {
    let n = values.len();
    check_n_alpha(n)?;
    if !(mag_b > 0.0) {
        return Err(Error::DegenerateField { mag_b, x: [f64::NAN; 3] });
    }
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean.abs() > tol_solv * max {
        return Err(Error::Solvability { mean: mean.abs(), limit: tol_solv * max });
    }
    Ok(invert_harmonics(values, mag_b))
}

/// Fourier-space inversion of |B| ∂_α, dropping the mean.
fn invert_harmonics(values: &[f64], mag_b: f64) -> Vec<f64> {
    let n = values.len();
    let half = n / 2;
    let phases: Vec<f64> = phase_nodes(n).collect();
    let mut out = vec![0.0; n];
    for m in 1..=half {
        let mf = m as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for (v, p) in values.iter().zip(&phases) {
            a += v * (mf * p).cos();
            b += v * (mf * p).sin();
        }
        // the Nyquist mode carries half weight and has no sine part
        let scale = if m == half { 1.0 / n as f64 } else { 2.0 / n as f64 };
        a *= scale;
        b = if m == half { 0.0 } else { b * scale };
        for (o, p) in out.iter_mut().zip(&phases) {
            *o += (a * (mf * p).sin() - b * (mf * p).cos()) / (mf * mag_b);
        }
    }
    out
}

/// Evaluate the interpolated L⁻¹h at an arbitrary phase.
fn invert_at(values: &[f64], mag_b: f64, alpha: f64) -> f64 {
    let n = values.len();
    let half = n / 2;
    let mut out = 0.0;
    for m in 1..=half {
        let mf = m as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for (k, v) in values.iter().enumerate() {
            let p = TAU * k as f64 / n as f64;
            a += v * (mf * p).cos();
            b += v * (mf * p).sin();
        }
        let scale = if m == half { 1.0 / n as f64 } else { 2.0 / n as f64 };
        a *= scale;
        b = if m == half { 0.0 } else { b * scale };
        out += (a * (mf * alpha).sin() - b * (mf * alpha).cos()) / (mf * mag_b);
    }
    out
}

/// (L⁻¹h)(e, c∥, α) for a velocity function h at fixed (x, t).
pub fn pseudo_inverse<F>(frame: &GyroFrame, e: f64, c_par: f64, alpha: f64, n_alpha: usize, tol_solv: f64, h: F) -> Result<f64>
where
    F: Fn(&Vec3) -> f64,
{
    check_n_alpha(n_alpha)?;
    check_admissible(e, c_par)?;
    let mut values = Vec::with_capacity(n_alpha);
    for a in phase_nodes(n_alpha) {
        let v = h(&frame.velocity_unchecked(e, c_par, a));
        if !v.is_finite() {
            return Err(Error::NonFinite { alpha: a });
        }
        values.push(v);
    }
    pseudo_inverse_samples(&values, frame.mag_b, tol_solv)?;
    Ok(invert_at(&values, frame.mag_b, alpha))
}

/// (∇_x + 𝔽₀ ∂_e) G.
fn drift_gradient<G: EnergyDistribution + ?Sized>(g: &G, f0: &Vec3, x: &Vec3, e: f64, c: f64, t: f64) -> Vec3 {
    g.grad_x(x, e, c, t) + f0 * g.d_e(x, e, c, t)
}

/// Π(c γ₁) = (1/|B|)(e − c∥²/2) b × [(∇_x + 𝔽₀∂_e)G + c∥ ∂_{c∥}G (b·∇)b].
pub fn pi_c_gamma1_closed<G: EnergyDistribution + ?Sized>(g: &G, f0: &Vec3, sample: &FieldSample, e: f64, c_par: f64, t: f64) -> Vec3 {
    let x = &sample.x;
    let v = drift_gradient(g, f0, x, e, c_par, t) + sample.curvature * (c_par * g.d_c(x, e, c_par, t));
    sample.b.cross(&v) * ((e - 0.5 * c_par * c_par) / sample.mag_b)
}

/// (∇b):∂_{c∥}Π(c⊗c γ₁) = −(1/|B|) ∂_{c∥}[(e − c∥²/2) c∥ 𝐟·(∇_x + 𝔽₀∂_e)G].
pub fn pi_cc_gamma1_contracted_closed<G: EnergyDistribution + ?Sized>(g: &G, f0: &Vec3, sample: &FieldSample, e: f64, c_par: f64, t: f64) -> f64 {
    let x = &sample.x;
    let bracket = |c: f64| (e - 0.5 * c * c) * c * sample.f_vec.dot(&drift_gradient(g, f0, x, e, c, t));
    -fd::d1(bracket, c_par, fd::DEFAULT_STEP) / sample.mag_b
}

/// g₀(x, c, t) = G(x, |c|²/2, c·b(x, t), t) as a phase-space function.
pub struct LiftedDistribution<'a, G: ?Sized> {
    pub g: &'a G,
    pub field: &'a FieldConfiguration,
}

impl<G: EnergyDistribution + ?Sized> PhaseFunction for LiftedDistribution<'_, G> {
    fn value(&self, x: &Vec3, c: &Vec3, t: f64) -> f64 {
        let b = self.field.direction(x, t);
        self.g.value(x, 0.5 * c.norm_squared(), c.dot(&b), t)
    }
}

/// Samples of γ₁ = L⁻¹[(Id − Π) T g₀] at the gyrophase nodes, with the
/// matching velocities. T is applied by finite differences on the lifted g₀.
fn gamma1_samples<G: EnergyDistribution + ?Sized>(
    g: &G,
    field: &FieldConfiguration,
    forces: &ForceInput,
    frame: &GyroFrame,
    x: &Vec3,
    e: f64,
    c_par: f64,
    t: f64,
    n_alpha: usize,
) -> Result<(Vec<Vec3>, Vec<f64>)> {
    check_n_alpha(n_alpha)?;
    check_admissible(e, c_par)?;
    let g0 = LiftedDistribution { g, field };
    let cs: Vec<Vec3> = phase_nodes(n_alpha).map(|a| frame.velocity_unchecked(e, c_par, a)).collect();
    let mut tg: Vec<f64> = cs.iter().map(|c| apply_t(&g0, x, c, t, forces)).collect();
    let mean = tg.iter().sum::<f64>() / n_alpha as f64;
    tg.iter_mut().for_each(|v| *v -= mean);
    Ok((cs, invert_harmonics(&tg, frame.mag_b)))
}

/// Brute-force Π(c γ₁) by composing T, L⁻¹ and Π numerically.
#[allow(clippy::too_many_arguments)]
pub fn pi_c_gamma1_quadrature<G: EnergyDistribution + ?Sized>(
    g: &G,
    field: &FieldConfiguration,
    forces: &ForceInput,
    x: &Vec3,
    e: f64,
    c_par: f64,
    t: f64,
    n_alpha: usize,
) -> Result<Vec3> {
    let sample = field.eval(x, t)?;
    let frame = GyroFrame::new(&sample, &Vec3::x());
    let (cs, gamma) = gamma1_samples(g, field, forces, &frame, x, e, c_par, t, n_alpha)?;
    let sum = cs.iter().zip(&gamma).fold(Vec3::zeros(), |acc, (c, v)| acc + c * *v);
    Ok(sum / n_alpha as f64)
}

/// Brute-force Π(c⊗c γ₁).
#[allow(clippy::too_many_arguments)]
pub fn pi_cc_gamma1_quadrature<G: EnergyDistribution + ?Sized>(
    g: &G,
    field: &FieldConfiguration,
    forces: &ForceInput,
    x: &Vec3,
    e: f64,
    c_par: f64,
    t: f64,
    n_alpha: usize,
) -> Result<Mat3> {
    let sample = field.eval(x, t)?;
    let frame = GyroFrame::new(&sample, &Vec3::x());
    let (cs, gamma) = gamma1_samples(g, field, forces, &frame, x, e, c_par, t, n_alpha)?;
    let sum = cs.iter().zip(&gamma).fold(Mat3::zeros(), |acc, (c, v)| acc + c * c.transpose() * *v);
    Ok(sum / n_alpha as f64)
}

/// Brute-force (∇b):∂_{c∥}Π(c⊗c γ₁), the c∥ derivative taken by finite differences at fixed e.
#[allow(clippy::too_many_arguments)]
pub fn pi_cc_gamma1_contracted_quadrature<G: EnergyDistribution + ?Sized>(
    g: &G,
    field: &FieldConfiguration,
    forces: &ForceInput,
    x: &Vec3,
    e: f64,
    c_par: f64,
    t: f64,
    n_alpha: usize,
) -> Result<f64> {
    let sample = field.eval(x, t)?;
    let h = fd::DEFAULT_STEP;
    if (c_par.abs() + 2.0 * h).powi(2) > 2.0 * e {
        return Err(Error::OutsideVelocityDomain { e, c_par });
    }
    let mut mats = [Mat3::zeros(); 4];
    for (slot, off) in mats.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
        *slot = pi_cc_gamma1_quadrature(g, field, forces, x, e, c_par + off * h, t, n_alpha)?;
    }
    let d = (8.0 * (mats[2] - mats[1]) - (mats[3] - mats[0])) / (12.0 * h);
    Ok(ddot(&sample.jac_b, &d))
}

/// Π(c g) = c∥ G b for g ∈ ker L.
pub fn pi_c_kernel(g_value: f64, c_par: f64, b: &Vec3) -> Vec3 {
    b * (c_par * g_value)
}

/// Π(c⊗c g) = G[(e − c∥²/2)(Id − b⊗b) + c∥² b⊗b] for g ∈ ker L.
pub fn pi_cc_kernel(g_value: f64, e: f64, c_par: f64, b: &Vec3) -> Mat3 {
    let bb = b * b.transpose();
    ((Mat3::identity() - bb) * (e - 0.5 * c_par * c_par) + bb * (c_par * c_par)) * g_value
}

/// Residuals of the three Π-commutation identities at one (x, e, c∥, t):
/// Π(∂g/∂x_i) − ∂_{x_i}Πg − ∂_{x_i}b·∂_{c∥}Π(cg), the t analogue, and
/// Π(∂g/∂c_i) − ∂_eΠ(g c_i) − b_i ∂_{c∥}Πg. Outer derivatives by finite differences.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CommutationResiduals {
    pub x: [f64; 3],
    pub t: f64,
    pub c: [f64; 3],
}

impl CommutationResiduals {
    pub fn max_abs(&self) -> f64 {
        self.x.iter().chain(&self.c).fold(self.t.abs(), |m, v| m.max(v.abs()))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn commutation_residuals<G: PhaseFunction + ?Sized>(
    g: &G,
    field: &FieldConfiguration,
    x: &Vec3,
    e: f64,
    c_par: f64,
    t: f64,
    n_alpha: usize,
) -> Result<CommutationResiduals> {
    let h = fd::DEFAULT_STEP;
    if (c_par.abs() + 2.0 * h).powi(2) > 2.0 * (e - 2.0 * h) {
        return Err(Error::OutsideVelocityDomain { e, c_par });
    }
    let sample = field.eval(x, t)?;
    let frame_at = |y: &Vec3, s: f64| -> Result<GyroFrame> { Ok(GyroFrame::new(&field.eval(y, s)?, &Vec3::x())) };
    let pi_g = |y: &Vec3, s: f64, e: f64, cp: f64| -> Result<f64> {
        gyroaverage(&frame_at(y, s)?, e, cp, n_alpha, |c| g.value(y, c, s))
    };
    let pi_cg = |y: &Vec3, s: f64, e: f64, cp: f64| -> Result<Vec3> {
        gyroaverage(&frame_at(y, s)?, e, cp, n_alpha, |c| c * g.value(y, c, s))
    };
    let stencil = |f: &dyn Fn(f64) -> Result<f64>, at: f64| -> Result<f64> {
        let v = [f(at - 2.0 * h)?, f(at - h)?, f(at + h)?, f(at + 2.0 * h)?];
        Ok((8.0 * (v[2] - v[1]) - (v[3] - v[0])) / (12.0 * h))
    };
    let stencil_vec = |f: &dyn Fn(f64) -> Result<Vec3>, at: f64| -> Result<Vec3> {
        let v = [f(at - 2.0 * h)?, f(at - h)?, f(at + h)?, f(at + 2.0 * h)?];
        Ok((8.0 * (v[2] - v[1]) - (v[3] - v[0])) / (12.0 * h))
    };
    let frame = GyroFrame::new(&sample, &Vec3::x());
    let dc_pi_cg = stencil_vec(&|cp| pi_cg(x, t, e, cp), c_par)?;

    let mut rx = [0.0; 3];
    for (i, r) in rx.iter_mut().enumerate() {
        let lhs: f64 = gyroaverage(&frame, e, c_par, n_alpha, |c| g.grad_x(x, c, t)[i])?;
        let mut dir = Vec3::zeros();
        dir[i] = 1.0;
        let d_pi = stencil(&|a| pi_g(&(x + dir * a), t, e, c_par), 0.0)?;
        let dib = Vec3::new(sample.jac_b[(i, 0)], sample.jac_b[(i, 1)], sample.jac_b[(i, 2)]);
        *r = lhs - d_pi - dib.dot(&dc_pi_cg);
    }

    let lhs_t: f64 = gyroaverage(&frame, e, c_par, n_alpha, |c| g.dt(x, c, t))?;
    let dt_pi = stencil(&|s| pi_g(x, s, e, c_par), t)?;
    let rt = lhs_t - dt_pi - sample.dt_b.dot(&dc_pi_cg);

    let lhs_c: Vec3 = gyroaverage(&frame, e, c_par, n_alpha, |c| g.grad_c(x, c, t))?;
    let de_pi_cg = stencil_vec(&|ee| pi_cg(x, t, ee, c_par), e)?;
    let dc_pi_g = stencil(&|cp| pi_g(x, t, e, cp), c_par)?;
    let rc = lhs_c - de_pi_cg - sample.b * dc_pi_g;

    Ok(CommutationResiduals { x: rx, t: rt, c: [rc[0], rc[1], rc[2]] })
}

/// Spectral α-derivative of h̃ times |B|, used to cross-check `apply_l`.
pub fn spectral_l<F>(frame: &GyroFrame, e: f64, c_par: f64, alpha: f64, n_alpha: usize, h: F) -> Result<f64>
where
    F: Fn(&Vec3) -> f64,
{
    check_n_alpha(n_alpha)?;
    check_admissible(e, c_par)?;
    let n = n_alpha;
    let values: Vec<f64> = phase_nodes(n).map(|a| h(&frame.velocity_unchecked(e, c_par, a))).collect();
    let mut d = 0.0;
    for m in 1..n / 2 {
        let mf = m as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for (k, v) in values.iter().enumerate() {
            let p = TAU * k as f64 / n as f64;
            a += v * (mf * p).cos();
            b += v * (mf * p).sin();
        }
        a *= 2.0 / n as f64;
        b *= 2.0 / n as f64;
        d += mf * (b * (mf * alpha).cos() - a * (mf * alpha).sin());
    }
    Ok(frame.mag_b * d)
}
