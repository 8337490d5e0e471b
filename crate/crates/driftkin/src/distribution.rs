//! Callable fields and gyrotropic distributions with their first partials.
//!
//! Every trait carries fourth-order finite-difference defaults for the partial
//! derivatives; built-in types override them with analytic expressions.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::field::FieldConfiguration;
use crate::math::{fd, Mat3, Vec3};

/// Step used by the finite-difference fallbacks.
pub const FD_STEP: f64 = fd::DEFAULT_STEP;

pub trait ScalarField: Send + Sync {
    fn value(&self, x: &Vec3, t: f64) -> f64;

    fn gradient(&self, x: &Vec3, t: f64) -> Vec3 {
        fd::gradient(|y| self.value(y, t), x, FD_STEP)
    }

    fn dt(&self, x: &Vec3, t: f64) -> f64 {
        fd::d1(|s| self.value(x, s), t, FD_STEP)
    }
}

impl<F> ScalarField for F
where
    F: Fn(&Vec3, f64) -> f64 + Send + Sync,
{
    fn value(&self, x: &Vec3, t: f64) -> f64 {
        self(x, t)
    }
}

pub trait VectorField: Send + Sync {
    fn value(&self, x: &Vec3, t: f64) -> Vec3;

    /// `m[(i, j)] = ∂_i v_j`
    fn jacobian(&self, x: &Vec3, t: f64) -> Mat3 {
        fd::jacobian(|y| self.value(y, t), x, FD_STEP)
    }

    fn divergence(&self, x: &Vec3, t: f64) -> f64 {
        self.jacobian(x, t).trace()
    }

    fn dt(&self, x: &Vec3, t: f64) -> Vec3 {
        fd::d1_vec(|s| self.value(x, s), t, FD_STEP)
    }
}

impl<F> VectorField for F
where
    F: Fn(&Vec3, f64) -> Vec3 + Send + Sync,
{
    fn value(&self, x: &Vec3, t: f64) -> Vec3 {
        self(x, t)
    }
}

/// The identically-zero vector field.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroVector;

impl VectorField for ZeroVector {
    fn value(&self, _x: &Vec3, _t: f64) -> Vec3 {
        Vec3::zeros()
    }
    fn jacobian(&self, _x: &Vec3, _t: f64) -> Mat3 {
        Mat3::zeros()
    }
    fn dt(&self, _x: &Vec3, _t: f64) -> Vec3 {
        Vec3::zeros()
    }
}

/// Smooth positive profile base·(1 + g·x + a sin(k·x + φ))·(1 + r t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub base: f64,
    pub gradient: Vec3,
    pub amplitude: f64,
    pub wave: Vec3,
    pub phase: f64,
    pub rate: f64,
}

impl Profile {
    pub fn constant(base: f64) -> Self {
        Profile { base, gradient: Vec3::zeros(), amplitude: 0.0, wave: Vec3::zeros(), phase: 0.0, rate: 0.0 }
    }

    pub fn linear(base: f64, gradient: Vec3) -> Self {
        Profile { gradient, ..Self::constant(base) }
    }

    pub fn with_wave(mut self, amplitude: f64, wave: Vec3, phase: f64) -> Self {
        self.amplitude = amplitude;
        self.wave = wave;
        self.phase = phase;
        self
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    fn spatial(&self, x: &Vec3) -> f64 {
        1.0 + self.gradient.dot(x) + self.amplitude * (self.wave.dot(x) + self.phase).sin()
    }

    fn spatial_grad(&self, x: &Vec3) -> Vec3 {
        self.gradient + self.wave * (self.amplitude * (self.wave.dot(x) + self.phase).cos())
    }
}

impl ScalarField for Profile {
    fn value(&self, x: &Vec3, t: f64) -> f64 {
        self.base * self.spatial(x) * (1.0 + self.rate * t)
    }

    fn gradient(&self, x: &Vec3, t: f64) -> Vec3 {
        self.spatial_grad(x) * (self.base * (1.0 + self.rate * t))
    }

    fn dt(&self, x: &Vec3, _t: f64) -> f64 {
        self.base * self.spatial(x) * self.rate
    }
}

/// Scalar function g(x, c, t) on full phase space.
pub trait PhaseFunction: Send + Sync {
    fn value(&self, x: &Vec3, c: &Vec3, t: f64) -> f64;

    fn grad_x(&self, x: &Vec3, c: &Vec3, t: f64) -> Vec3 {
        fd::gradient(|y| self.value(y, c, t), x, FD_STEP)
    }

    fn grad_c(&self, x: &Vec3, c: &Vec3, t: f64) -> Vec3 {
        fd::gradient(|v| self.value(x, v, t), c, FD_STEP)
    }

    fn dt(&self, x: &Vec3, c: &Vec3, t: f64) -> f64 {
        fd::d1(|s| self.value(x, c, s), t, FD_STEP)
    }
}

impl<F> PhaseFunction for F
where
    F: Fn(&Vec3, &Vec3, f64) -> f64 + Send + Sync,
{
    fn value(&self, x: &Vec3, c: &Vec3, t: f64) -> f64 {
        self(x, c, t)
    }
}

/// Gyrotropic distribution G(x, e, c∥, t).
pub trait EnergyDistribution: Send + Sync {
    fn value(&self, x: &Vec3, e: f64, c_par: f64, t: f64) -> f64;

    fn grad_x(&self, x: &Vec3, e: f64, c_par: f64, t: f64) -> Vec3 {
        fd::gradient(|y| self.value(y, e, c_par, t), x, FD_STEP)
    }

    fn d_e(&self, x: &Vec3, e: f64, c_par: f64, t: f64) -> f64 {
        fd::d1(|v| self.value(x, v, c_par, t), e, FD_STEP)
    }

    fn d_c(&self, x: &Vec3, e: f64, c_par: f64, t: f64) -> f64 {
        fd::d1(|v| self.value(x, e, v, t), c_par, FD_STEP)
    }

    fn d_t(&self, x: &Vec3, e: f64, c_par: f64, t: f64) -> f64 {
        fd::d1(|s| self.value(x, e, c_par, s), t, FD_STEP)
    }

    /// Largest velocity-space temperature at (x, t); sets quadrature bounds.
    fn temperature_scale(&self, _x: &Vec3, _t: f64) -> f64 {
        1.0
    }
}

/// Gyrotropic distribution Ḡ(x, μ, c∥, t).
pub trait MuDistribution: Send + Sync {
    fn value(&self, x: &Vec3, mu: f64, c_par: f64, t: f64) -> f64;

    fn grad_x(&self, x: &Vec3, mu: f64, c_par: f64, t: f64) -> Vec3 {
        fd::gradient(|y| self.value(y, mu, c_par, t), x, FD_STEP)
    }

    fn d_mu(&self, x: &Vec3, mu: f64, c_par: f64, t: f64) -> f64 {
        fd::d1(|v| self.value(x, v, c_par, t), mu, FD_STEP)
    }

    fn d_c(&self, x: &Vec3, mu: f64, c_par: f64, t: f64) -> f64 {
        fd::d1(|v| self.value(x, mu, v, t), c_par, FD_STEP)
    }

    fn d_t(&self, x: &Vec3, mu: f64, c_par: f64, t: f64) -> f64 {
        fd::d1(|s| self.value(x, mu, c_par, s), t, FD_STEP)
    }

    fn temperature_scale(&self, _x: &Vec3, _t: f64) -> f64 {
        1.0
    }
}

impl<D: EnergyDistribution + ?Sized> EnergyDistribution for Arc<D> {
    fn value(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        (**self).value(x, e, c, t)
    }
    fn grad_x(&self, x: &Vec3, e: f64, c: f64, t: f64) -> Vec3 {
        (**self).grad_x(x, e, c, t)
    }
    fn d_e(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        (**self).d_e(x, e, c, t)
    }
    fn d_c(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        (**self).d_c(x, e, c, t)
    }
    fn d_t(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        (**self).d_t(x, e, c, t)
    }
    fn temperature_scale(&self, x: &Vec3, t: f64) -> f64 {
        (**self).temperature_scale(x, t)
    }
}

impl<D: MuDistribution + ?Sized> MuDistribution for Arc<D> {
    fn value(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> f64 {
        (**self).value(x, mu, c, t)
    }
    fn grad_x(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> Vec3 {
        (**self).grad_x(x, mu, c, t)
    }
    fn d_mu(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> f64 {
        (**self).d_mu(x, mu, c, t)
    }
    fn d_c(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> f64 {
        (**self).d_c(x, mu, c, t)
    }
    fn d_t(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> f64 {
        (**self).d_t(x, mu, c, t)
    }
    fn temperature_scale(&self, x: &Vec3, t: f64) -> f64 {
        (**self).temperature_scale(x, t)
    }
}

/// Gaussian with distinct perpendicular and parallel temperatures:
/// G = n (2π)^{-3/2} T⊥^{-1} T∥^{-1/2} exp(−(e − c∥²/2)/T⊥ − c∥²/(2T∥)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiMaxwellian {
    pub n: Profile,
    pub t_perp: Profile,
    pub t_par: Profile,
}

impl BiMaxwellian {
    pub fn isotropic(n0: f64, temperature: f64) -> Self {
        let t = Profile::constant(temperature);
        BiMaxwellian { n: Profile::constant(n0), t_perp: t, t_par: t }
    }

    pub fn homogeneous(n0: f64, t_perp: f64, t_par: f64) -> Self {
        BiMaxwellian { n: Profile::constant(n0), t_perp: Profile::constant(t_perp), t_par: Profile::constant(t_par) }
    }

    fn parts(&self, x: &Vec3, t: f64) -> (f64, f64, f64) {
        (self.n.value(x, t), self.t_perp.value(x, t), self.t_par.value(x, t))
    }

    /// Exact pressures (p⊥, p∥) = (n T⊥, n T∥).
    pub fn pressures(&self, x: &Vec3, t: f64) -> (f64, f64) {
        let (n, tp, tl) = self.parts(x, t);
        (n * tp, n * tl)
    }

    /// Logarithmic sensitivities: d ln G = a_n dn + a_perp dT⊥ + a_par dT∥.
    fn log_weights(&self, e: f64, c: f64, n: f64, tp: f64, tl: f64) -> (f64, f64, f64) {
        let w = e - 0.5 * c * c;
        (1.0 / n, -1.0 / tp + w / (tp * tp), -0.5 / tl + 0.5 * c * c / (tl * tl))
    }
}

impl EnergyDistribution for BiMaxwellian {
    fn value(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let (n, tp, tl) = self.parts(x, t);
        n / ((2.0 * PI).powf(1.5) * tp * tl.sqrt()) * (-(e - 0.5 * c * c) / tp - 0.5 * c * c / tl).exp()
    }

    fn grad_x(&self, x: &Vec3, e: f64, c: f64, t: f64) -> Vec3 {
        let (n, tp, tl) = self.parts(x, t);
        let (an, ap, al) = self.log_weights(e, c, n, tp, tl);
        let g = self.value(x, e, c, t);
        (self.n.gradient(x, t) * an + self.t_perp.gradient(x, t) * ap + self.t_par.gradient(x, t) * al) * g
    }

    fn d_e(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        -self.value(x, e, c, t) / self.t_perp.value(x, t)
    }

    fn d_c(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let (_, tp, tl) = self.parts(x, t);
        self.value(x, e, c, t) * c * (1.0 / tp - 1.0 / tl)
    }

    fn d_t(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let (n, tp, tl) = self.parts(x, t);
        let (an, ap, al) = self.log_weights(e, c, n, tp, tl);
        self.value(x, e, c, t) * (self.n.dt(x, t) * an + self.t_perp.dt(x, t) * ap + self.t_par.dt(x, t) * al)
    }

    fn temperature_scale(&self, x: &Vec3, t: f64) -> f64 {
        let (_, tp, tl) = self.parts(x, t);
        tp.max(tl)
    }
}

/// Polynomial-weighted Gaussian (1 + a1 c∥ + a2 c∥² + a3 (e − c∥²/2)) · M,
/// M an isotropic Maxwellian; not even in c∥ when a1 ≠ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedGaussian {
    pub base: BiMaxwellian,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl WeightedGaussian {
    fn poly(&self, e: f64, c: f64) -> (f64, f64, f64) {
        let p = 1.0 + self.a1 * c + self.a2 * c * c + self.a3 * (e - 0.5 * c * c);
        (p, self.a3, self.a1 + 2.0 * self.a2 * c - self.a3 * c)
    }
}

impl EnergyDistribution for WeightedGaussian {
    fn value(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        self.poly(e, c).0 * self.base.value(x, e, c, t)
    }
    fn grad_x(&self, x: &Vec3, e: f64, c: f64, t: f64) -> Vec3 {
        self.base.grad_x(x, e, c, t) * self.poly(e, c).0
    }
    fn d_e(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let (p, pe, _) = self.poly(e, c);
        pe * self.base.value(x, e, c, t) + p * self.base.d_e(x, e, c, t)
    }
    fn d_c(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let (p, _, pc) = self.poly(e, c);
        pc * self.base.value(x, e, c, t) + p * self.base.d_c(x, e, c, t)
    }
    fn d_t(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        self.base.d_t(x, e, c, t) * self.poly(e, c).0
    }
    fn temperature_scale(&self, x: &Vec3, t: f64) -> f64 {
        self.base.temperature_scale(x, t)
    }
}

/// View of an energy-form distribution in (x, μ, c∥) variables,
/// Ḡ(x, μ, c∥, t) = G(x, μ|B(x,t)| + c∥²/2, c∥, t).
#[derive(Clone)]
pub struct MuView<D> {
    pub inner: D,
    pub field: Arc<FieldConfiguration>,
}

impl<D> MuView<D> {
    pub fn new(inner: D, field: Arc<FieldConfiguration>) -> Self {
        MuView { inner, field }
    }

    fn mag_b(&self, x: &Vec3, t: f64) -> f64 {
        self.field.magnetic(x, t).norm()
    }
}

impl<D: EnergyDistribution> MuView<D> {
    /// (|B|, ∇|B|, ∂_t|B|); NaN outside the field domain.
    fn geometry(&self, x: &Vec3, t: f64) -> (f64, Vec3, f64) {
        match self.field.eval(x, t) {
            Ok(s) => (s.mag_b, s.grad_mag_b, s.dt_ln_b * s.mag_b),
            Err(_) => (f64::NAN, Vec3::repeat(f64::NAN), f64::NAN),
        }
    }
}

impl<D: EnergyDistribution> MuDistribution for MuView<D> {
    fn value(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> f64 {
        self.inner.value(x, mu * self.mag_b(x, t) + 0.5 * c * c, c, t)
    }

    fn grad_x(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> Vec3 {
        let (mb, gb, _) = self.geometry(x, t);
        let e = mu * mb + 0.5 * c * c;
        self.inner.grad_x(x, e, c, t) + gb * (mu * self.inner.d_e(x, e, c, t))
    }

    fn d_mu(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> f64 {
        let mb = self.mag_b(x, t);
        self.inner.d_e(x, mu * mb + 0.5 * c * c, c, t) * mb
    }

    fn d_c(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> f64 {
        let e = mu * self.mag_b(x, t) + 0.5 * c * c;
        self.inner.d_c(x, e, c, t) + c * self.inner.d_e(x, e, c, t)
    }

    fn d_t(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> f64 {
        let (mb, _, dtb) = self.geometry(x, t);
        let e = mu * mb + 0.5 * c * c;
        self.inner.d_t(x, e, c, t) + self.inner.d_e(x, e, c, t) * mu * dtb
    }

    fn temperature_scale(&self, x: &Vec3, t: f64) -> f64 {
        self.inner.temperature_scale(x, t)
    }
}

/// View of a μ-form distribution in (x, e, c∥) variables.
#[derive(Clone)]
pub struct EnergyView<D> {
    pub inner: D,
    pub field: Arc<FieldConfiguration>,
}

impl<D> EnergyView<D> {
    pub fn new(inner: D, field: Arc<FieldConfiguration>) -> Self {
        EnergyView { inner, field }
    }
}

impl<D: MuDistribution> EnergyView<D> {
    fn geometry(&self, x: &Vec3, t: f64) -> (f64, Vec3, f64) {
        match self.field.eval(x, t) {
            Ok(s) => (s.mag_b, s.grad_mag_b, s.dt_ln_b),
            Err(_) => (f64::NAN, Vec3::repeat(f64::NAN), f64::NAN),
        }
    }
}

impl<D: MuDistribution> EnergyDistribution for EnergyView<D> {
    fn value(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let mb = self.field.magnetic(x, t).norm();
        self.inner.value(x, (e - 0.5 * c * c) / mb, c, t)
    }

    fn grad_x(&self, x: &Vec3, e: f64, c: f64, t: f64) -> Vec3 {
        let (mb, gb, _) = self.geometry(x, t);
        let mu = (e - 0.5 * c * c) / mb;
        self.inner.grad_x(x, mu, c, t) - gb * (mu * self.inner.d_mu(x, mu, c, t) / mb)
    }

    fn d_e(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let mb = self.field.magnetic(x, t).norm();
        self.inner.d_mu(x, (e - 0.5 * c * c) / mb, c, t) / mb
    }

    fn d_c(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let mb = self.field.magnetic(x, t).norm();
        let mu = (e - 0.5 * c * c) / mb;
        self.inner.d_c(x, mu, c, t) - c / mb * self.inner.d_mu(x, mu, c, t)
    }

    fn d_t(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
        let (mb, _, dtl) = self.geometry(x, t);
        let mu = (e - 0.5 * c * c) / mb;
        self.inner.d_t(x, mu, c, t) - mu * self.inner.d_mu(x, mu, c, t) * dtl
    }

    fn temperature_scale(&self, x: &Vec3, t: f64) -> f64 {
        self.inner.temperature_scale(x, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Plain(BiMaxwellian);

    impl EnergyDistribution for Plain {
        fn value(&self, x: &Vec3, e: f64, c: f64, t: f64) -> f64 {
            self.0.value(x, e, c, t)
        }
    }

    #[test]
    fn bimaxwellian_partials_match_fd() {
        let g = BiMaxwellian {
            n: Profile::linear(1.2, Vec3::new(0.1, -0.2, 0.05)).with_rate(0.3),
            t_perp: Profile::constant(0.8).with_wave(0.1, Vec3::new(1.0, 2.0, 0.0), 0.3),
            t_par: Profile::linear(1.5, Vec3::new(0.0, 0.1, 0.2)).with_rate(-0.1),
        };
        let fdg = Plain(g);
        let x = Vec3::new(0.3, -0.4, 0.2);
        let (e, c, t) = (1.3, 0.7, 0.2);
        assert!((g.grad_x(&x, e, c, t) - fdg.grad_x(&x, e, c, t)).norm() < 1e-10);
        assert!((g.d_e(&x, e, c, t) - fdg.d_e(&x, e, c, t)).abs() < 1e-10);
        assert!((g.d_c(&x, e, c, t) - fdg.d_c(&x, e, c, t)).abs() < 1e-10);
        assert!((g.d_t(&x, e, c, t) - fdg.d_t(&x, e, c, t)).abs() < 1e-10);
    }
}
