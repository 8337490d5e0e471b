//! Pointwise evaluators of the limit transport system in (x, μ, c∥):
//! 𝒮†, 𝒮, 𝒞, 𝒞†, the transport residual, the (e, c∥) explicit model and
//! the moment hierarchy.
//!
//! Distributions are passed in μ-form as Ḡ; the conservative unknowns are
//! 𝒢 = 2π|B|Ḡ and 𝒦 = 2π|B|K̄.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::distribution::{EnergyDistribution, MuDistribution, VectorField};
use crate::drifts::drift_velocities;
use crate::error::{invalid, Result};
use crate::field::{FieldConfiguration, FieldSample};
use crate::math::quadrature::GaussLegendre;
use crate::math::{fd, Mat3, Vec3};
use crate::moments::MomentQuadrature;

const STENCIL: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

/// Velocity field u, force 𝔽 and the step for spatial derivatives of composite coefficients.
#[derive(Clone)]
pub struct TransportInputs {
    pub field: Arc<FieldConfiguration>,
    pub u: Arc<dyn VectorField>,
    pub force: Arc<dyn VectorField>,
    pub h: f64,
}

/// Geometric and flow quantities that fix the transport coefficients at one point.
#[derive(Debug, Clone)]
pub struct LocalCoefficients {
    pub sample: FieldSample,
    pub u: Vec3,
    /// `[(i, j)] = ∂_i u_j`
    pub grad_u: Mat3,
    pub force: Vec3,
    /// ∇·𝐟
    pub div_f: f64,
    /// ∇·(b × 𝔽)
    pub div_b_cross_force: f64,
}

impl LocalCoefficients {
    /// ∇u : (b ⊗ b)
    pub fn strain_bb(&self) -> f64 {
        let b = &self.sample.b;
        b.dot(&(self.grad_u * b))
    }

    /// Φ = (𝔽 − μ∇|B|)/|B|
    pub fn phi(&self, mu: f64) -> Vec3 {
        (self.force - self.sample.grad_mag_b * mu) / self.sample.mag_b
    }

    /// B·Φ = b·(𝔽 − μ∇|B|)
    pub fn parallel_force(&self, mu: f64) -> f64 {
        self.sample.b.dot(&(self.force - self.sample.grad_mag_b * mu))
    }

    /// S_x = u + μ∇×b − b×Φ + (c∥²/|B| − μ) 𝐟
    pub fn spatial_flux(&self, mu: f64, c: f64) -> Vec3 {
        let s = &self.sample;
        self.u + s.curl_b * mu - s.b.cross(&self.phi(mu)) + s.f_vec * (c * c / s.mag_b - mu)
    }

    /// S_c / c∥ = −∇u:(b⊗b) + μ∇·𝐟 + Φ·𝐟
    pub fn c_rate(&self, mu: f64) -> f64 {
        -self.strain_bb() + mu * self.div_f + self.phi(mu).dot(&self.sample.f_vec)
    }

    pub fn c_flux(&self, mu: f64, c: f64) -> f64 {
        c * self.c_rate(mu)
    }

    /// Coefficients (a₀, a₁, a₂) with S_μ = μ (a₀ + μ a₁ + c∥² a₂).
    pub fn mu_rates(&self) -> (f64, f64, f64) {
        let s = &self.sample;
        let mb = s.mag_b;
        let a0 = -s.dt_ln_b - self.u.dot(&s.grad_mag_b) / mb - self.grad_u.trace() + self.strain_bb()
            + self.div_b_cross_force / mb
            - self.force.dot(&s.f_vec) / mb;
        // ∇·(b × ∇|B|) = ∇|B|·(∇×b)
        let a1 = -s.grad_mag_b.dot(&s.curl_b) / mb + s.f_vec.dot(&s.grad_mag_b) / mb;
        let a2 = -self.div_f / mb;
        (a0, a1, a2)
    }

    pub fn mu_flux(&self, mu: f64, c: f64) -> f64 {
        let (a0, a1, a2) = self.mu_rates();
        mu * (a0 + mu * a1 + c * c * a2)
    }

    /// ∂S_μ/∂μ
    pub fn mu_flux_slope(&self, mu: f64, c: f64) -> f64 {
        let (a0, a1, a2) = self.mu_rates();
        a0 + 2.0 * mu * a1 + c * c * a2
    }
}

/// Coefficients at x and on the fourth-order stencil x ± h eᵢ, x ± 2h eᵢ.
#[derive(Debug, Clone)]
pub struct CoefficientStencil {
    pub h: f64,
    pub center: LocalCoefficients,
    /// `points[i][k]` sits at x + STENCIL[k] h eᵢ
    pub points: Vec<[LocalCoefficients; 4]>,
}

fn weighted(g: &dyn MuDistribution, s: &FieldSample, mu: f64, c: f64, t: f64) -> f64 {
    2.0 * PI * s.mag_b * g.value(&s.x, mu, c, t)
}

impl CoefficientStencil {
    /// 𝒮†𝒢 at (x, μ, c∥) for 𝒢 = 2π|B|Ḡ.
    pub fn s_dagger(&self, g: &dyn MuDistribution, mu: f64, c: f64, t: f64) -> f64 {
        let mut div = 0.0;
        for (i, row) in self.points.iter().enumerate() {
            let v: Vec<f64> = row.iter().map(|p| p.spatial_flux(mu, c)[i] * weighted(g, &p.sample, mu, c, t)).collect();
            div += (8.0 * (v[2] - v[1]) - (v[3] - v[0])) / (12.0 * self.h);
        }
        let p = &self.center;
        let x = &p.sample.x;
        let w = 2.0 * PI * p.sample.mag_b;
        let cal_g = w * g.value(x, mu, c, t);
        let c_part = p.c_rate(mu) * cal_g + p.c_flux(mu, c) * w * g.d_c(x, mu, c, t);
        let mu_part = p.mu_flux_slope(mu, c) * cal_g + p.mu_flux(mu, c) * w * g.d_mu(x, mu, c, t);
        div + c_part + mu_part
    }
}

impl TransportInputs {
    pub fn new(field: Arc<FieldConfiguration>, u: Arc<dyn VectorField>, force: Arc<dyn VectorField>) -> Self {
        let h = field.h_fd;
        TransportInputs { field, u, force, h }
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    fn f_vec_at(&self, y: &Vec3, t: f64) -> Vec3 {
        self.field.eval(y, t).map_or(Vec3::repeat(f64::NAN), |s| s.f_vec)
    }

    fn b_cross_force_at(&self, y: &Vec3, t: f64) -> Vec3 {
        self.field.eval(y, t).map_or(Vec3::repeat(f64::NAN), |s| s.b.cross(&self.force.value(y, t)))
    }

    pub fn coefficients(&self, x: &Vec3, t: f64) -> Result<LocalCoefficients> {
        let sample = self.field.eval(x, t)?;
        let c = LocalCoefficients {
            u: self.u.value(x, t),
            grad_u: self.u.jacobian(x, t),
            force: self.force.value(x, t),
            div_f: fd::divergence(|y| self.f_vec_at(y, t), x, self.h),
            div_b_cross_force: fd::divergence(|y| self.b_cross_force_at(y, t), x, self.h),
            sample,
        };
        let finite = c.div_f.is_finite()
            && c.div_b_cross_force.is_finite()
            && c.u.iter().chain(c.force.iter()).chain(c.grad_u.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(invalid(format!("transport coefficients are not finite near {:?}", x.as_slice())));
        }
        Ok(c)
    }

    pub fn stencil(&self, x: &Vec3, t: f64) -> Result<CoefficientStencil> {
        let center = self.coefficients(x, t)?;
        let mut points = Vec::with_capacity(3);
        for i in 0..3 {
            let at = |k: usize| {
                let mut y = *x;
                y[i] += STENCIL[k] * self.h;
                self.coefficients(&y, t)
            };
            points.push([at(0)?, at(1)?, at(2)?, at(3)?]);
        }
        Ok(CoefficientStencil { h: self.h, center, points })
    }

    /// Conservative form 𝒮†𝒢 with 𝒢 = 2π|B|Ḡ: the spatial divergence is a
    /// finite difference of S_x 𝒢; the velocity fluxes are polynomial in
    /// (μ, c∥) and are differentiated exactly.
    pub fn apply_s_dagger(&self, g: &dyn MuDistribution, x: &Vec3, mu: f64, c: f64, t: f64) -> Result<f64> {
        Ok(self.stencil(x, t)?.s_dagger(g, mu, c, t))
    }

    /// Advective form 𝒮Ḡ = S_x·∇Ḡ + S_c ∂Ḡ/∂c∥ + S_μ ∂Ḡ/∂μ.
    pub fn apply_s_advective(&self, g: &dyn MuDistribution, x: &Vec3, mu: f64, c: f64, t: f64) -> Result<f64> {
        let p = self.coefficients(x, t)?;
        Ok(p.spatial_flux(mu, c).dot(&g.grad_x(x, mu, c, t))
            + p.c_flux(mu, c) * g.d_c(x, mu, c, t)
            + p.mu_flux(mu, c) * g.d_mu(x, mu, c, t))
    }

    /// 𝒞Ḡ = c∥ b·∇Ḡ + b·(𝔽 − μ∇|B|) ∂Ḡ/∂c∥.
    pub fn apply_c(&self, g: &dyn MuDistribution, x: &Vec3, mu: f64, c: f64, t: f64) -> Result<f64> {
        let s = self.field.eval(x, t)?;
        let bf = s.b.dot(&(self.force.value(x, t) - s.grad_mag_b * mu));
        Ok(c * s.b.dot(&g.grad_x(x, mu, c, t)) + bf * g.d_c(x, mu, c, t))
    }

    /// 𝒞†𝒦 = ∇·(c∥ 𝒦 b) + ∂/∂c∥((B·Φ) 𝒦) with 𝒦 = 2π|B|K̄; B·Φ does not depend on c∥.
    pub fn apply_c_dagger(&self, k: &dyn MuDistribution, x: &Vec3, mu: f64, c: f64, t: f64) -> Result<f64> {
        let s = self.field.eval(x, t)?;
        let flux = |y: &Vec3| match self.field.eval(y, t) {
            Ok(sy) => sy.b * (c * weighted(k, &sy, mu, c, t)),
            Err(_) => Vec3::repeat(f64::NAN),
        };
        let div = fd::divergence(flux, x, self.h);
        let bf = s.b.dot(&(self.force.value(x, t) - s.grad_mag_b * mu));
        let v = div + bf * 2.0 * PI * s.mag_b * k.d_c(x, mu, c, t);
        if !v.is_finite() {
            return Err(invalid("C-dagger stencil left the field domain"));
        }
        Ok(v)
    }

    /// ∂𝒢/∂t for 𝒢 = 2π|B|Ḡ.
    pub fn dt_weighted(&self, g: &dyn MuDistribution, x: &Vec3, mu: f64, c: f64, t: f64) -> Result<f64> {
        let s = self.field.eval(x, t)?;
        Ok(2.0 * PI * s.mag_b * (s.dt_ln_b * g.value(x, mu, c, t) + g.d_t(x, mu, c, t)))
    }

    /// Spatial flux velocity and its drift decomposition u∥b + V_d∥ + V_ed + V_cd + V_gd.
    /// The two agree when 𝔽 = E + u×B.
    pub fn drift_decomposition(&self, x: &Vec3, mu: f64, c: f64, t: f64) -> Result<(Vec3, Vec3)> {
        let p = self.coefficients(x, t)?;
        let s = &p.sample;
        let drifts = drift_velocities(c, mu, &p.force, s);
        Ok((p.spatial_flux(mu, c), s.b * p.u.dot(&s.b) + drifts.total()))
    }

    /// ∂ₜ𝒢 + 𝒮†𝒢 + 𝒞†𝒦 with its terms. `dgdt` overrides ∂ₜ𝒢.
    pub fn transport_residual(
        &self,
        g: &dyn MuDistribution,
        k: Option<&dyn MuDistribution>,
        dgdt: Option<&dyn Fn(&Vec3, f64, f64, f64) -> f64>,
        x: &Vec3,
        mu: f64,
        c: f64,
        t: f64,
    ) -> Result<TransportResidual> {
        let dt_term = match dgdt {
            Some(f) => f(x, mu, c, t),
            None => self.dt_weighted(g, x, mu, c, t)?,
        };
        let s_dagger = self.apply_s_dagger(g, x, mu, c, t)?;
        let c_dagger = match k {
            Some(k) => self.apply_c_dagger(k, x, mu, c, t)?,
            None => 0.0,
        };
        Ok(TransportResidual { dt_term, s_dagger, c_dagger, total: dt_term + s_dagger + c_dagger })
    }

    /// ∂ₜḠ + 𝒮Ḡ + 𝒞K̄, the μ-form model.
    pub fn mu_model_lhs(&self, g: &dyn MuDistribution, k: Option<&dyn MuDistribution>, x: &Vec3, mu: f64, c: f64, t: f64) -> Result<f64> {
        let kc = match k {
            Some(k) => self.apply_c(k, x, mu, c, t)?,
            None => 0.0,
        };
        Ok(g.d_t(x, mu, c, t) + self.apply_s_advective(g, x, mu, c, t)? + kc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportResidual {
    pub dt_term: f64,
    pub s_dagger: f64,
    pub c_dagger: f64,
    pub total: f64,
}

// ---------------------------------------------------------------------------
// The explicit model in (e, c∥)

impl TransportInputs {
    /// (∇ + 𝔽 ∂/∂e) G
    fn big_d(&self, g: &dyn EnergyDistribution, y: &Vec3, e: f64, c: f64, t: f64) -> Vec3 {
        g.grad_x(y, e, c, t) + self.force.value(y, t) * g.d_e(y, e, c, t)
    }

    /// Left side of the explicit (e, c∥) model, including ∂G/∂t and the K terms.
    pub fn explicit_model_lhs(
        &self,
        g: &dyn EnergyDistribution,
        k: Option<&dyn EnergyDistribution>,
        x: &Vec3,
        e: f64,
        c: f64,
        t: f64,
    ) -> Result<f64> {
        let s = self.field.eval(x, t)?;
        let h = self.h;
        let u = self.u.value(x, t);
        let div_u = self.u.divergence(x, t);
        let beta = s.b.dot(&(self.u.jacobian(x, t) * s.b));
        let gv = g.value(x, e, c, t);
        let (ge, gc) = (g.d_e(x, e, c, t), g.d_c(x, e, c, t));
        let w = e - 0.5 * c * c;

        let t1 = g.d_t(x, e, c, t);
        let t2 = div_u * gv + u.dot(&g.grad_x(x, e, c, t));
        let t3 = -div_u * (gv + w * ge);
        let t4 = -beta * ((-e + 1.5 * c * c) * ge + c * gc);

        // (∇ + 𝔽∂ₑ)·V with V = (e − c∥²/2)/|B| b × [DG + c∥ ∂G/∂c∥ (b·∇)b]
        let v = |y: &Vec3, ee: f64| -> Vec3 {
            match self.field.eval(y, t) {
                Ok(sy) => {
                    let inner = self.big_d(g, y, ee, c, t) + sy.curvature * (c * g.d_c(y, ee, c, t));
                    sy.b.cross(&inner) * ((ee - 0.5 * c * c) / sy.mag_b)
                }
                Err(_) => Vec3::repeat(f64::NAN),
            }
        };
        let force = self.force.value(x, t);
        let t5 = fd::divergence(|y| v(y, e), x, h) + force.dot(&fd::d1_vec(|ee| v(x, ee), e, h));

        // −(1/|B|) ∂_c[(e − c²/2) c 𝐟·DG]
        let q = |cc: f64| (e - 0.5 * cc * cc) * cc * s.f_vec.dot(&(g.grad_x(x, e, cc, t) + force * g.d_e(x, e, cc, t)));
        let t6 = -fd::d1(q, c, h) / s.mag_b;

        let kt = match k {
            Some(k) => {
                let kv = k.value(x, e, c, t);
                let fb = force.dot(&s.b);
                c * (s.div_b * kv + s.b.dot(&k.grad_x(x, e, c, t)) + fb * k.d_e(x, e, c, t))
                    + s.div_b * (-c * kv + w * k.d_c(x, e, c, t))
                    + fb * k.d_c(x, e, c, t)
            }
            None => 0.0,
        };
        let total = t1 + t2 + t3 + t4 + t5 + t6 + kt;
        if !total.is_finite() {
            return Err(invalid("explicit model stencil left the field domain"));
        }
        Ok(total)
    }

    /// Constraint of the explicit model:
    /// (∇ + 𝔽∂ₑ)·(c∥ G b) + (∇·b) ∂_c((e − c∥²/2) G) + (𝔽·b) ∂G/∂c∥.
    pub fn explicit_constraint(&self, g: &dyn EnergyDistribution, x: &Vec3, e: f64, c: f64, t: f64) -> Result<f64> {
        let s = self.field.eval(x, t)?;
        let fb = self.force.value(x, t).dot(&s.b);
        let gv = g.value(x, e, c, t);
        let w = e - 0.5 * c * c;
        Ok(c * (s.div_b * gv + s.b.dot(&g.grad_x(x, e, c, t)) + fb * g.d_e(x, e, c, t))
            + s.div_b * (-c * gv + w * g.d_c(x, e, c, t))
            + fb * g.d_c(x, e, c, t))
    }
}

// ---------------------------------------------------------------------------
// Moment hierarchy

/// One moment identity: the quadrature of the pointwise residual against
/// the closed form assembled from moment fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentIdentity {
    pub m: i32,
    pub q: i32,
    pub quadrature_side: f64,
    pub closed_form: f64,
    pub discrepancy: f64,
}

/// Moment evaluator for 𝒢 = 2π|B|Ḡ and 𝒦 = 2π|B|K̄.
pub struct MomentHierarchy<'a> {
    pub inputs: &'a TransportInputs,
    pub g: &'a dyn MuDistribution,
    pub k: Option<&'a dyn MuDistribution>,
    pub quad: &'a MomentQuadrature,
}

fn nan3() -> Vec3 {
    Vec3::repeat(f64::NAN)
}

impl MomentHierarchy<'_> {
    fn moment_of(&self, d: &dyn MuDistribution, m: i32, q: i32, x: &Vec3, t: f64) -> f64 {
        if m < 0 || q < 0 {
            return 0.0;
        }
        let Ok(s) = self.inputs.field.eval(x, t) else { return f64::NAN };
        let temp = self.g.temperature_scale(x, t);
        let w = 2.0 * PI * s.mag_b;
        self.quad
            .integrate_mu(s.mag_b, temp, |mu, c| w * d.value(x, mu, c, t) * c.powi(m) * mu.powi(q))
            .unwrap_or(f64::NAN)
    }

    /// M_{m,q}(x, t); zero for negative indices.
    pub fn m(&self, m: i32, q: i32, x: &Vec3, t: f64) -> f64 {
        self.moment_of(self.g, m, q, x, t)
    }

    /// K_{m,q}(x, t); zero without a multiplier.
    pub fn k(&self, m: i32, q: i32, x: &Vec3, t: f64) -> f64 {
        match self.k {
            Some(k) => self.moment_of(k, m, q, x, t),
            None => 0.0,
        }
    }

    fn check(&self, m: i32, q: i32) -> Result<()> {
        self.quad.check_order(m + 2, q)?;
        self.quad.check_order(m, q + 1)?;
        Ok(())
    }

    fn h(&self) -> f64 {
        self.inputs.h
    }

    fn force(&self, y: &Vec3, t: f64) -> Vec3 {
        self.inputs.force.value(y, t)
    }

    /// ∫(∂ₜ𝒢 + 𝒮†𝒢 + 𝒞†𝒦) c∥^m μ^q dμ dc∥ from the pointwise operators.
    pub fn quadrature_side(&self, m: i32, q: i32, x: &Vec3, t: f64) -> Result<f64> {
        self.check(m, q)?;
        let st = self.inputs.stencil(x, t)?;
        let s = &st.center.sample;
        let temp = self.g.temperature_scale(x, t);
        let mut err = None;
        let v = self.quad.integrate_mu(s.mag_b, temp, |mu, c| {
            let dt = 2.0 * PI * s.mag_b * (s.dt_ln_b * self.g.value(x, mu, c, t) + self.g.d_t(x, mu, c, t));
            let cd = match self.k {
                Some(k) => match self.inputs.apply_c_dagger(k, x, mu, c, t) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                None => 0.0,
            };
            (dt + st.s_dagger(self.g, mu, c, t) + cd) * c.powi(m) * mu.powi(q)
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// Closed-form left side of the moment equation for (m, q).
    pub fn closed_form(&self, m: i32, q: i32, x: &Vec3, t: f64) -> Result<f64> {
        self.check(m, q)?;
        let fld = &self.inputs.field;
        let s = fld.eval(x, t)?;
        let h = self.h();
        let (mf, qf) = (m as f64, q as f64);
        let mb = s.mag_b;
        let force = self.force(x, t);
        let u = self.inputs.u.value(x, t);
        let ju = self.inputs.u.jacobian(x, t);
        let bb = s.b.dot(&(ju * s.b));

        let dt_m = fd::d1(|tt| self.m(m, q, x, tt), t, h);
        let flux = |y: &Vec3| -> Vec3 {
            let Ok(sy) = fld.eval(y, t) else { return nan3() };
            let v = self.inputs.u.value(y, t) - sy.b.cross(&self.force(y, t)) / sy.mag_b;
            let w = sy.curl_b + sy.b.cross(&sy.grad_mag_b) / sy.mag_b - sy.f_vec;
            v * self.m(m, q, y, t) + w * self.m(m, q + 1, y, t) + sy.f_vec / sy.mag_b * self.m(m + 2, q, y, t)
        };
        let div_flux = fd::divergence(flux, x, h);
        let div_f = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.f_vec), x, h);
        let div_bxf = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.b.cross(&self.force(y, t))), x, h);
        let dlnb = s.dt_ln_b + u.dot(&s.grad_mag_b) / mb;

        let c0 = (mf - qf) * bb - (mf - qf) * force.dot(&s.f_vec) / mb + qf * dlnb + qf * ju.trace() - qf / mb * div_bxf;
        let c1 = -mf * div_f + (mf - qf) * s.grad_mag_b.dot(&s.f_vec) / mb + qf / mb * s.grad_mag_b.dot(&s.curl_b);
        let c2 = qf / mb * div_f;

        let k_div = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.b * self.k(m + 1, q, y, t)), x, h);
        let k_terms = k_div - mf * s.b.dot(&force) * self.k(m - 1, q, x, t)
            + mf * s.b.dot(&s.grad_mag_b) * self.k(m - 1, q + 1, x, t);

        let v = dt_m + div_flux + c0 * self.m(m, q, x, t) + c1 * self.m(m, q + 1, x, t) + c2 * self.m(m + 2, q, x, t) + k_terms;
        if !v.is_finite() {
            return Err(invalid(format!("closed-form moment equation ({m},{q}) is not finite")));
        }
        Ok(v)
    }

    pub fn identity(&self, m: i32, q: i32, x: &Vec3, t: f64) -> Result<MomentIdentity> {
        let quadrature_side = self.quadrature_side(m, q, x, t)?;
        let closed_form = self.closed_form(m, q, x, t)?;
        Ok(MomentIdentity { m, q, quadrature_side, closed_form, discrepancy: quadrature_side - closed_form })
    }

    /// ∂ₜn + ∇·(n u) + ∇·(K_{1,0} b)
    pub fn mass_conservation_lhs(&self, x: &Vec3, t: f64) -> Result<f64> {
        let fld = &self.inputs.field;
        let h = self.h();
        let dt_n = fd::d1(|tt| self.m(0, 0, x, tt), t, h);
        let div_nu = fd::divergence(|y| self.inputs.u.value(y, t) * self.m(0, 0, y, t), x, h);
        let div_k = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.b * self.k(1, 0, y, t)), x, h);
        finite(dt_n + div_nu + div_k, "mass conservation")
    }

    /// Left side of the parallel-pressure equation written with p∥, M_{2,1}, M_{4,0}.
    pub fn p_par_equation_lhs(&self, x: &Vec3, t: f64) -> Result<f64> {
        let fld = &self.inputs.field;
        let h = self.h();
        let s = fld.eval(x, t)?;
        let force = self.force(x, t);
        let dt = fd::d1(|tt| self.m(2, 0, x, tt), t, h);
        let flux = |y: &Vec3| -> Vec3 {
            let Ok(sy) = fld.eval(y, t) else { return nan3() };
            let v = self.inputs.u.value(y, t) - sy.b.cross(&self.force(y, t)) / sy.mag_b;
            let w = sy.curl_b + sy.b.cross(&sy.grad_mag_b) / sy.mag_b - sy.f_vec;
            v * self.m(2, 0, y, t) + w * self.m(2, 1, y, t) + sy.f_vec / sy.mag_b * self.m(4, 0, y, t)
        };
        let bb = s.b.dot(&(self.inputs.u.jacobian(x, t) * s.b));
        let div_fb = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.f_vec / sy.mag_b), x, h);
        let k_div = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.b * self.k(3, 0, y, t)), x, h);
        let v = dt + fd::divergence(flux, x, h) + 2.0 * (bb - force.dot(&s.f_vec) / s.mag_b) * self.m(2, 0, x, t)
            - 2.0 * s.mag_b * div_fb * self.m(2, 1, x, t)
            + k_div
            - 2.0 * s.b.dot(&force) * self.k(1, 0, x, t)
            + 2.0 * s.b.dot(&s.grad_mag_b) * self.k(1, 1, x, t);
        finite(v, "parallel pressure equation")
    }

    /// Left side of the perpendicular-pressure equation written with p⊥ = |B|M_{0,1}, M_{0,2}, M_{2,1}.
    pub fn p_perp_equation_lhs(&self, x: &Vec3, t: f64) -> Result<f64> {
        let fld = &self.inputs.field;
        let h = self.h();
        let s = fld.eval(x, t)?;
        let force = self.force(x, t);
        let p_perp = |y: &Vec3, tt: f64| fld.eval(y, tt).map_or(f64::NAN, |sy| sy.mag_b * self.m(0, 1, y, tt));
        let dt = fd::d1(|tt| p_perp(x, tt), t, h);
        let flux = |y: &Vec3| -> Vec3 {
            let Ok(sy) = fld.eval(y, t) else { return nan3() };
            let v = self.inputs.u.value(y, t) - sy.b.cross(&self.force(y, t)) / sy.mag_b;
            let w = sy.curl_b + sy.b.cross(&sy.grad_mag_b) / sy.mag_b - sy.f_vec;
            v * p_perp(y, t) + w * (sy.mag_b * self.m(0, 2, y, t)) + sy.f_vec * self.m(2, 1, y, t)
        };
        let ju = self.inputs.u.jacobian(x, t);
        let bb = s.b.dot(&(ju * s.b));
        let div_bxf =
            fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.b.cross(&self.force(y, t)) / sy.mag_b), x, h);
        let div_fb = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.f_vec / sy.mag_b), x, h);
        let k_div = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.b * self.k(1, 1, y, t)), x, h);
        let v = dt + fd::divergence(flux, x, h)
            + (-bb + force.dot(&s.f_vec) / s.mag_b + ju.trace() - div_bxf) * p_perp(x, t)
            + div_fb * s.mag_b * self.m(2, 1, x, t)
            + s.mag_b * k_div;
        finite(v, "perpendicular pressure equation")
    }

    /// ∇·(M_{m+1,q} b) − m (b·𝔽) M_{m−1,q} + m (b·∇|B|) M_{m−1,q+1}
    pub fn constraint_moment(&self, m: i32, q: i32, x: &Vec3, t: f64) -> Result<f64> {
        let fld = &self.inputs.field;
        let s = fld.eval(x, t)?;
        let mf = m as f64;
        let div = fd::divergence(|y| fld.eval(y, t).map_or(nan3(), |sy| sy.b * self.m(m + 1, q, y, t)), x, self.h());
        let v = div - mf * s.b.dot(&self.force(x, t)) * self.m(m - 1, q, x, t)
            + mf * s.b.dot(&s.grad_mag_b) * self.m(m - 1, q + 1, x, t);
        finite(v, "constraint moment")
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{what} evaluated to a non-finite value")))
    }
}

// ---------------------------------------------------------------------------
// Phase-space pairings on a periodic box

/// Periodic trapezoid rule in x, Gauss–Legendre in μ ∈ [0, μ_max] and c∥ ∈ [−c_max, c_max].
#[derive(Debug, Clone)]
pub struct PairingQuadrature {
    pub lower: Vec3,
    pub upper: Vec3,
    pub n_x: usize,
    pub mu_max: f64,
    pub c_max: f64,
    pub n_mu: usize,
    pub n_c: usize,
}

impl PairingQuadrature {
    /// ∫ f(x, μ, c∥) dx dμ dc∥, summed in a fixed order.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&Vec3, f64, f64) -> Result<f64> + Sync,
    {
        if self.n_x < 2 || self.n_mu < 1 || self.n_c < 1 {
            return Err(invalid("pairing quadrature needs at least two x nodes per axis"));
        }
        let d = self.upper - self.lower;
        let dx = d / self.n_x as f64;
        let cell = dx[0] * dx[1] * dx[2];
        let gm: Vec<(f64, f64)> = GaussLegendre::new(self.n_mu).on(0.0, self.mu_max).collect();
        let gc: Vec<(f64, f64)> = GaussLegendre::new(self.n_c).on(-self.c_max, self.c_max).collect();
        let n = self.n_x;
        let partial: Vec<Result<f64>> = (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
                let x = self.lower + Vec3::new(i as f64 * dx[0], j as f64 * dx[1], k as f64 * dx[2]);
                let mut acc = 0.0;
                for &(mu, wm) in &gm {
                    for &(c, wc) in &gc {
                        acc += wm * wc * f(&x, mu, c)?;
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut sum = 0.0;
        for p in partial {
            sum += p?;
        }
        Ok(sum * cell)
    }
}

/// ⟨𝒞†𝒦, F⟩ + ⟨𝒦, 𝒞F⟩ with its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdjointPairing {
    pub c_dagger_side: f64,
    pub c_side: f64,
    pub residual: f64,
}

impl TransportInputs {
    pub fn adjoint_pairing(&self, k: &dyn MuDistribution, test: &dyn MuDistribution, q: &PairingQuadrature, t: f64) -> Result<AdjointPairing> {
        let c_dagger_side = q.integrate(|x, mu, c| Ok(self.apply_c_dagger(k, x, mu, c, t)? * test.value(x, mu, c, t)))?;
        let c_side = q.integrate(|x, mu, c| {
            let s = self.field.eval(x, t)?;
            Ok(weighted(k, &s, mu, c, t) * self.apply_c(test, x, mu, c, t)?)
        })?;
        Ok(AdjointPairing { c_dagger_side, c_side, residual: c_dagger_side + c_side })
    }
}
