//! Force fields, guiding-center drifts, the perpendicular bulk velocity and
//! the effective potential along a field line.

use serde::Serialize;

use crate::distribution::ScalarField;
use crate::error::{Error, Result};
use crate::field::FieldSample;
use crate::field_line::FieldLine;
use crate::math::spline::CubicSpline;
use crate::math::Vec3;
use crate::moments::{div_pressure_tensor, N_FLOOR};

/// 𝔽 = ∇·ℙ / n.
pub fn force_f(div_p: &Vec3, n: f64) -> Result<Vec3> {
    if !(n > N_FLOOR) {
        return Err(Error::Vacuum { n });
    }
    Ok(div_p / n)
}

/// 𝔽 from density and pressure fields at the sample point.
pub fn force_from_fields(n: &dyn ScalarField, p_perp: &dyn ScalarField, p_par: &dyn ScalarField, sample: &FieldSample, t: f64) -> Result<Vec3> {
    force_f(&div_pressure_tensor(p_perp, p_par, sample, t), n.value(&sample.x, t))
}

/// Φ = (𝔽 − μ∇|B|) / |B|.
pub fn phi_field(mu: f64, force: &Vec3, sample: &FieldSample) -> Vec3 {
    (force - sample.grad_mag_b * mu) / sample.mag_b
}

/// B·Φ = b·(𝔽 − μ∇|B|).
pub fn parallel_force(mu: f64, force: &Vec3, sample: &FieldSample) -> f64 {
    sample.b.dot(&(force - sample.grad_mag_b * mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftSet {
    /// curvature drift (c∥²/|B|) 𝐟
    pub v_cd: Vec3,
    /// gradient drift (μ/|B|) b × ∇|B|
    pub v_gd: Vec3,
    /// electric drift (E × b)/|B|
    pub v_ed: Vec3,
    /// parallel drift μ (b·∇×b) b
    pub v_dpar: Vec3,
    pub phi: Vec3,
    pub parallel_force: f64,
}

impl DriftSet {
    pub fn total(&self) -> Vec3 {
        self.v_cd + self.v_gd + self.v_ed + self.v_dpar
    }
}

/// The four drifts at (x, c∥, μ); E is taken from the sample, 𝔽 enters Φ only.
pub fn drift_velocities(c_par: f64, mu: f64, force: &Vec3, sample: &FieldSample) -> DriftSet {
    let (b, mb) = (&sample.b, sample.mag_b);
    DriftSet {
        v_cd: sample.f_vec * (c_par * c_par / mb),
        v_gd: b.cross(&sample.grad_mag_b) * (mu / mb),
        v_ed: sample.e.cross(b) / mb,
        v_dpar: b * (mu * b.dot(&sample.curl_b)),
        phi: phi_field(mu, force, sample),
        parallel_force: parallel_force(mu, force, sample),
    }
}

/// u⊥ = (E×b)/|B| + (b×∇p⊥)/(n|B|) + (p∥ − p⊥)/(n|B|) 𝐟.
pub fn perp_velocity(n: f64, p_perp: f64, p_par: f64, grad_p_perp: &Vec3, sample: &FieldSample) -> Result<Vec3> {
    if !(n > N_FLOOR) {
        return Err(Error::Vacuum { n });
    }
    let (b, mb) = (&sample.b, sample.mag_b);
    Ok(sample.e.cross(b) / mb + b.cross(grad_p_perp) / (n * mb) + sample.f_vec * ((p_par - p_perp) / (n * mb)))
}

pub fn perp_velocity_from_fields(
    n: &dyn ScalarField,
    p_perp: &dyn ScalarField,
    p_par: &dyn ScalarField,
    sample: &FieldSample,
    t: f64,
) -> Result<Vec3> {
    let x = &sample.x;
    perp_velocity(n.value(x, t), p_perp.value(x, t), p_par.value(x, t), &p_perp.gradient(x, t), sample)
}

/// b × (𝔽 − E)/|B|, the perpendicular velocity that makes E + u×B equal 𝔽.
pub fn force_balance_velocity(force: &Vec3, sample: &FieldSample) -> Vec3 {
    sample.b.cross(&(force - sample.e)) / sample.mag_b
}

/// V(s) = −∫₀^s b·(𝔽 − μ∇|B|) ds′ along a traced line, V(0) = 0.
#[derive(Debug, Clone)]
pub struct EffectivePotential {
    integrand: CubicSpline,
    offset: f64,
    pub mu: f64,
}

impl EffectivePotential {
    pub fn value(&self, s: f64) -> f64 {
        -(self.integrand.integral_from_start(s) - self.offset)
    }

    /// dV/ds = −B·Φ, from the interpolated integrand.
    pub fn derivative(&self, s: f64) -> f64 {
        -self.integrand.value(s)
    }

    pub fn knots(&self) -> &[f64] {
        self.integrand.knots()
    }
}

pub fn effective_potential<F>(line: &FieldLine, mu: f64, force: F) -> Result<EffectivePotential>
where
    F: Fn(&FieldSample) -> Vec3,
{
    let vals: Vec<f64> = line.samples.iter().map(|s| parallel_force(mu, &force(s), s)).collect();
    let integrand = CubicSpline::new(line.s.clone(), vals)?;
    let offset = integrand.integral_from_start(0.0);
    Ok(EffectivePotential { integrand, offset, mu })
}

/// Test-particle mode: 𝔽 ≡ 0.
pub fn zero_force(_s: &FieldSample) -> Vec3 {
    Vec3::zeros()
}

/// `x1,x2,x3,` followed by the four drift vectors, one row per point.
pub fn drift_csv(rows: &[(Vec3, DriftSet)]) -> String {
    let mut out = String::from("x1,x2,x3,vcd1,vcd2,vcd3,vgd1,vgd2,vgd3,ved1,ved2,ved3,vdpar1,vdpar2,vdpar3\n");
    for (x, d) in rows {
        let vals: Vec<String> = [*x, d.v_cd, d.v_gd, d.v_ed, d.v_dpar]
            .iter()
            .flat_map(|v| v.iter().map(|c| format!("{c:.16e}")).collect::<Vec<_>>())
            .collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    out
}
