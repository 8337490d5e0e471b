//! Residual computations behind the verify run. Each function returns raw
//! residuals; thresholds are applied by the caller.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distribution::{BiMaxwellian, EnergyDistribution, MuView, Profile, WeightedGaussian};
use crate::drifts::{drift_velocities, DriftSet, force_from_fields, perp_velocity_from_fields, zero_force};
use crate::error::{Error, Result};
use crate::fast_motion::{find_mirror_points, integrate_fast_motion, FastOptions};
use crate::field::{ElectricField, FieldConfiguration, Geometry};
use crate::field_line::{trace_field_line, trace_field_line_with, TraceOptions};
use crate::frame::{energy_from_moment, from_gyro, magnetic_moment, to_gyro, GyroFrame};
use crate::gyro::{
    apply_l, commutation_residuals, gyroaverage, phase_nodes, pi_c_gamma1_closed, pi_c_gamma1_quadrature,
    pi_cc_gamma1_contracted_closed, pi_cc_gamma1_contracted_quadrature, pseudo_inverse, pseudo_inverse_samples,
    ForceInput,
};
use crate::math::{fd, Mat3, Vec3};
use crate::moments::{
    density, div_pressure_tensor, moment_table, pressure_tensor, pressures, Coordinates,
    MomentField, MomentKind, MomentQuadrature,
};
use crate::parallel::{solve_line_problem, Gauge, LineProblem, NodeCoefficients, DEFAULT_TOL_COMPAT};
use crate::reduced::{step_reduced_transport, ReducedGrid, ReducedState, ReducedStepper};
use crate::transport::{MomentHierarchy, TransportInputs};

/// Phase-space sample (x, e, c∥) with c∥² inside 2e by a margin.
pub type PhasePoint = (Vec3, f64, f64);

/// Reproducible sample points in [−0.5, 0.5]² × [−0.8, 0.8].
pub fn sample_points(n: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.8..0.8));
            let e: f64 = rng.gen_range(0.3..3.0);
            let c = rng.gen_range(-0.8..0.8) * (2.0 * e).sqrt();
            (x, e, c)
        })
        .collect()
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Evaluate `f` on every point in parallel, keeping input order.
fn per_point<T, F>(points: &[PhasePoint], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&PhasePoint) -> Result<T> + Sync + Send,
{
    points.par_iter().map(f).collect()
}

/// Smooth phase-space function with no gyrophase symmetry.
pub fn wavy(x: &Vec3, c: &Vec3, t: f64) -> f64 {
    (0.7 * c[0] - 0.4 * c[1] + 0.3 * c[2] + 0.5 * x[0] - 0.2 * x[2] + 0.3 * t).sin() * (-c.norm_squared() / 8.0).exp()
        + 0.2 * c[0] * c[1] * (1.0 + 0.1 * x[1])
}

// field_model

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct FieldResiduals {
    pub unit_b: f64,
    pub b_dot_curvature: f64,
    pub grad_b_b: f64,
    pub divergence_identity: f64,
    pub div_free: f64,
}

pub fn field_identities(cfg: &FieldConfiguration, points: &[PhasePoint], t: f64) -> Result<FieldResiduals> {
    let rows = per_point(points, |(x, _, _)| {
        let s = cfg.eval(x, t)?;
        let div_free = fd::divergence(|y| cfg.magnetic(y, t), x, cfg.h_fd).abs() / s.mag_b;
        Ok(FieldResiduals {
            unit_b: (s.b.norm() - 1.0).abs(),
            b_dot_curvature: s.b.dot(&s.curvature).abs(),
            grad_b_b: (s.jac_b * s.b).amax(),
            divergence_identity: (s.div_b + s.b.dot(&s.grad_mag_b) / s.mag_b).abs(),
            div_free,
        })
    })?;
    Ok(rows.iter().fold(FieldResiduals::default(), |a, r| FieldResiduals {
        unit_b: a.unit_b.max(r.unit_b),
        b_dot_curvature: a.b_dot_curvature.max(r.b_dot_curvature),
        grad_b_b: a.grad_b_b.max(r.grad_b_b),
        divergence_identity: a.divergence_identity.max(r.divergence_identity),
        div_free: a.div_free.max(r.div_free),
    }))
}

/// Max node distance from the analytic helix divided by tol × arc length.
pub fn helix_deviation(b0: f64, major_radius: f64, q0: f64, q2: f64, x0: &Vec3, max_arc: f64, tol: f64) -> Result<f64> {
    let cfg = FieldConfiguration::screw_pinch(b0, major_radius, q0, q2);
    let line = trace_field_line(&cfg, x0, 0.0, max_arc, tol)?;
    let r0 = x0.xy().norm();
    let th0 = x0[1].atan2(x0[0]);
    let q = q0 + q2 * r0 * r0;
    let pitch = (1.0 + (r0 / (major_radius * q)).powi(2)).sqrt();
    let mut worst = 0.0f64;
    for (x, s) in line.nodes.iter().zip(&line.s) {
        // z advances by s/pitch, θ by z/(R₀q)
        let z = x0[2] + s / pitch;
        let th = th0 + (z - x0[2]) / (major_radius * q);
        let exact = Vec3::new(r0 * th.cos(), r0 * th.sin(), z);
        worst = worst.max((x - exact).norm() / (tol * s.abs().max(1.0)));
    }
    Ok(worst)
}

// velocity_frame

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct FrameResiduals {
    pub round_trip: f64,
    pub moment_round_trip: f64,
}

pub fn frame_round_trip(cfg: &FieldConfiguration, points: &[PhasePoint], t: f64) -> Result<FrameResiduals> {
    let rows = per_point(points, |(x, e, c)| {
        let s = cfg.eval(x, t)?;
        let seed = Vec3::new(0.3, 1.0, -0.2);
        let v = GyroFrame::new(&s, &seed).velocity(*e, *c, 1.9)?;
        let g = to_gyro(&v, &s, &seed);
        let back = from_gyro(g.e, g.c_par, g.alpha, &s, (g.e1, g.e2))?;
        let mu = magnetic_moment(*e, *c, s.mag_b)?;
        let e2 = energy_from_moment(mu, *c, s.mag_b);
        Ok(((back - v).norm() / v.norm().max(1.0), (e2 - e).abs() / e.max(1.0)))
    })?;
    Ok(FrameResiduals {
        round_trip: max_of(rows.iter().map(|r| r.0)),
        moment_round_trip: max_of(rows.iter().map(|r| r.1)),
    })
}

// gyro_ops

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GyroCalculus {
    /// |Π(L g)|
    pub pi_l: f64,
    /// |L(L⁻¹h) − h| / max|h|
    pub l_inverse: f64,
    /// |Π(L⁻¹h)|
    pub pi_l_inverse: f64,
    /// |L⁻¹h| difference under a change of perpendicular basis, over max|h|
    pub basis_rotation: f64,
}

pub fn gyro_calculus(cfg: &FieldConfiguration, points: &[PhasePoint], n_alpha: usize, tol_solv: f64, t: f64) -> Result<GyroCalculus> {
    let rows = per_point(points, |(x, e, c)| {
        let (e, c) = (*e, *c);
        let s = cfg.eval(x, t)?;
        let frame = GyroFrame::new(&s, &Vec3::x());
        let pi_l: f64 = gyroaverage(&frame, e, c, n_alpha, |v| apply_l(&wavy, x, v, t, &s.b_vec))?;

        let mean: f64 = gyroaverage(&frame, e, c, n_alpha, |v| wavy(x, v, t))?;
        let h = |v: &Vec3| wavy(x, v, t) - mean;
        let samples: Vec<f64> = phase_nodes(n_alpha).map(|a| h(&frame.velocity_unchecked(e, c, a))).collect();
        let scale = max_of(samples.iter().map(|v| v.abs())).max(f64::MIN_POSITIVE);
        let inv = pseudo_inverse_samples(&samples, s.mag_b, tol_solv)?;
        let pi_inv = inv.iter().sum::<f64>() / n_alpha as f64;

        // L⁻¹h lifted to a function of the Cartesian velocity, then L applied by differentiation
        let lifted = |_y: &Vec3, v: &Vec3, _t: f64| {
            let (ee, cc, aa) = frame.coordinates(v);
            pseudo_inverse(&frame, ee, cc, aa, n_alpha, f64::INFINITY, h).unwrap_or(f64::NAN)
        };
        let rotated = GyroFrame::new(&s, &Vec3::new(0.3, 1.0, 0.2));
        let mut l_inv = 0.0f64;
        let mut rotation = 0.0f64;
        for a in [0.3, 2.9, 5.1] {
            let v = frame.velocity(e, c, a)?;
            l_inv = l_inv.max((apply_l(&lifted, x, &v, t, &s.b_vec) - h(&v)).abs() / scale);
            let (e2, c2, a2) = rotated.coordinates(&v);
            let other = pseudo_inverse(&rotated, e2, c2, a2, n_alpha, tol_solv, h)?;
            rotation = rotation.max((other - lifted(x, &v, t)).abs() / scale);
        }
        Ok(GyroCalculus { pi_l: pi_l.abs(), l_inverse: l_inv, pi_l_inverse: pi_inv.abs(), basis_rotation: rotation })
    })?;
    Ok(rows.iter().fold(GyroCalculus::default(), |a, r| GyroCalculus {
        pi_l: a.pi_l.max(r.pi_l),
        l_inverse: a.l_inverse.max(r.l_inverse),
        pi_l_inverse: a.pi_l_inverse.max(r.pi_l_inverse),
        basis_rotation: a.basis_rotation.max(r.basis_rotation),
    }))
}

/// Relative mismatch of the two closed forms against brute-force gyrophase quadrature.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ClosedFormResiduals {
    pub pi_c_gamma1: f64,
    pub pi_cc_gamma1_contracted: f64,
}

/// Background force used with the closed forms.
pub fn closed_form_force(x: &Vec3, _t: f64) -> Vec3 {
    Vec3::new(0.1 * x[1], -0.2, 0.15)
}

pub fn closed_forms(cfg: &FieldConfiguration, g: &BiMaxwellian, points: &[PhasePoint], n_alpha: usize, t: f64) -> Result<ClosedFormResiduals> {
    let forces = ForceInput::zero().with_f0(closed_form_force);
    let rows = per_point(points, |(x, e, c)| {
        let s = cfg.eval(x, t)?;
        let f0 = closed_form_force(x, t);
        let closed = pi_c_gamma1_closed(g, &f0, &s, *e, *c, t);
        let brute = pi_c_gamma1_quadrature(g, cfg, &forces, x, *e, *c, t, n_alpha)?;
        let r1 = (closed - brute).norm() / closed.norm().max(1e-12);
        let closed = pi_cc_gamma1_contracted_closed(g, &f0, &s, *e, *c, t);
        let brute = pi_cc_gamma1_contracted_quadrature(g, cfg, &forces, x, *e, *c, t, n_alpha)?;
        let r2 = (closed - brute).abs() / closed.abs().max(1e-12);
        Ok((r1, r2))
    })?;
    Ok(ClosedFormResiduals {
        pi_c_gamma1: max_of(rows.iter().map(|r| r.0)),
        pi_cc_gamma1_contracted: max_of(rows.iter().map(|r| r.1)),
    })
}

/// Max of the three Π-commutation residuals.
pub fn commutation(cfg: &FieldConfiguration, points: &[PhasePoint], n_alpha: usize, t: f64) -> Result<f64> {
    let rows = per_point(points, |(x, e, c)| Ok(commutation_residuals(&wavy, cfg, x, *e, 0.8 * c, t, n_alpha)?.max_abs()))?;
    Ok(max_of(rows))
}

// moments

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MaxwellianResiduals {
    pub density: f64,
    pub p_perp: f64,
    pub p_par: f64,
}

/// Relative errors of n, p⊥, p∥ against n₀, n₀T⊥, n₀T∥ for a homogeneous bi-Maxwellian.
pub fn maxwellian_moments(cfg: &FieldConfiguration, n0: f64, t_perp: f64, t_par: f64, x: &Vec3, quad: &MomentQuadrature) -> Result<MaxwellianResiduals> {
    let g = BiMaxwellian::homogeneous(n0, t_perp, t_par);
    let s = cfg.eval(x, 0.0)?;
    let p = pressures(&g, &s, 0.0, quad)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    Ok(MaxwellianResiduals {
        density: rel(density(&g, &s, 0.0, quad)?, n0),
        p_perp: rel(p.p_perp, n0 * t_perp),
        p_par: rel(p.p_par, n0 * t_par),
    })
}

/// Max |∇·ℙ closed form − FD divergence of the assembled tensor|.
pub fn pressure_divergence(cfg: &FieldConfiguration, g: &BiMaxwellian, points: &[PhasePoint], t: f64) -> Result<f64> {
    let g = *g;
    let p_perp = move |y: &Vec3, s: f64| g.pressures(y, s).0;
    let p_par = move |y: &Vec3, s: f64| g.pressures(y, s).1;
    let rows = per_point(points, |(x, _, _)| {
        let s = cfg.eval(x, t)?;
        let closed = div_pressure_tensor(&p_perp, &p_par, &s, t);
        let tensor = |y: &Vec3| -> Mat3 { pressure_tensor(p_perp(y, t), p_par(y, t), &cfg.direction(y, t)) };
        Ok((closed - fd::tensor_divergence(tensor, x, 1e-3)).norm())
    })?;
    Ok(max_of(rows))
}

/// Parallel moment redundancy ∇·(p∥b) − b·(∇·ℙ) + (b·∇|B|/|B|)p⊥ with pressures from
/// quadrature of `g`; both divergences by finite differences of the assembled fields.
pub fn redundancy(cfg: Arc<FieldConfiguration>, g: Arc<dyn EnergyDistribution>, quad: Arc<MomentQuadrature>, points: &[PhasePoint], t: f64) -> Result<f64> {
    let p_perp = MomentField::new(g.clone(), cfg.clone(), quad.clone(), MomentKind::PPerp);
    let p_par = MomentField::new(g, cfg.clone(), quad, MomentKind::PPar);
    let h = 1e-3;
    let rows = per_point(points, |(x, _, _)| {
        let s = cfg.eval(x, t)?;
        let div_p_par_b = fd::divergence(|y| cfg.direction(y, t) * p_par.try_value(y, t).unwrap_or(f64::NAN), x, h);
        let tensor = |y: &Vec3| -> Mat3 {
            pressure_tensor(p_perp.try_value(y, t).unwrap_or(f64::NAN), p_par.try_value(y, t).unwrap_or(f64::NAN), &cfg.direction(y, t))
        };
        let b_div_p = s.b.dot(&fd::tensor_divergence(tensor, x, h));
        let mirror = s.b.dot(&s.grad_mag_b) / s.mag_b * p_perp.try_value(x, t)?;
        Ok((div_p_par_b - b_div_p + mirror).abs())
    })?;
    Ok(max_of(rows))
}

/// Relative spread between (μ, c∥) and (e, c∥) quadrature of the same moment table.
pub fn coordinate_equivalence(cfg: &FieldConfiguration, g: &BiMaxwellian, quad: &MomentQuadrature, points: &[PhasePoint], t: f64) -> Result<f64> {
    let w = WeightedGaussian { base: *g, a1: 0.2, a2: 0.1, a3: 0.05 };
    let mu_quad = quad.clone().with_coordinates(Coordinates::Mu);
    let e_quad = quad.clone().with_coordinates(Coordinates::Energy);
    let rows = per_point(points, |(x, _, _)| {
        let s = cfg.eval(x, t)?;
        let a = moment_table(&w, &s, t, &mu_quad, &[(1, 0), (2, 1)])?;
        let b = moment_table(&w, &s, t, &e_quad, &[(1, 0), (2, 1)])?;
        Ok(max_of(a.m.iter().map(|(k, v)| (v - b.m[k]).abs() / v.abs().max(1.0))))
    })?;
    Ok(max_of(rows))
}

// drift_kinematics and transport_residual

/// Prescribed bulk flow used by the transport checks.
pub fn manufactured_flow(x: &Vec3, t: f64) -> Vec3 {
    Vec3::new(0.1 * (x[1] + t).sin(), -0.2 * x[0] * x[2], 0.05 * (x[0] - x[1]).cos())
}

/// Force with no relation to the pressure, for identities that hold for any 𝔽.
pub fn manufactured_force(x: &Vec3, t: f64) -> Vec3 {
    Vec3::new(0.3 * x[1] + 0.1 * t, 0.2 * x[2].cos(), -0.1 * x[0] * x[1] + 0.05)
}

/// 𝔽 = ∇·ℙ/n from the exact moments of a bi-Maxwellian.
pub fn pressure_force(field: Arc<FieldConfiguration>, g: BiMaxwellian) -> impl Fn(&Vec3, f64) -> Vec3 + Send + Sync {
    move |x: &Vec3, t: f64| {
        let p_perp = move |y: &Vec3, s: f64| g.pressures(y, s).0;
        let p_par = move |y: &Vec3, s: f64| g.pressures(y, s).1;
        match field.eval(x, t) {
            Ok(s) => force_from_fields(&g.n, &p_perp, &p_par, &s, t).unwrap_or(Vec3::repeat(f64::NAN)),
            Err(_) => Vec3::repeat(f64::NAN),
        }
    }
}

/// Sample points for the (x, μ, c∥) transport checks.
pub fn transport_points(points: &[PhasePoint], cfg: &FieldConfiguration, t: f64) -> Result<Vec<(Vec3, f64, f64)>> {
    points
        .iter()
        .map(|(x, e, c)| {
            let mb = cfg.eval(x, t)?.mag_b;
            Ok((*x, (e - 0.5 * c * c) / mb, *c))
        })
        .collect()
}

fn close_rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct TransportResiduals {
    /// ∂ₜ𝒢 + 𝒮†𝒢 against 2π|B|(∂ₜḠ + 𝒮Ḡ)
    pub conservative_form: f64,
    /// 𝒞†(2π|B|Ḡ) against 2π|B|𝒞Ḡ
    pub c_dagger: f64,
    /// (e, c∥) explicit model against the (μ, c∥) model
    pub explicit_model: f64,
}

pub fn transport_forms(field: Arc<FieldConfiguration>, g: &BiMaxwellian, points: &[PhasePoint], t: f64) -> Result<TransportResiduals> {
    let inp = TransportInputs::new(field.clone(), Arc::new(manufactured_flow), Arc::new(manufactured_force));
    let gm = MuView::new(*g, field.clone());
    let k_e = WeightedGaussian { base: BiMaxwellian::isotropic(0.5, 1.0), a1: 0.3, a2: 0.2, a3: -0.1 };
    let km = MuView::new(k_e, field.clone());
    let mu_points = transport_points(points, &field, t)?;
    let rows: Vec<TransportResiduals> = mu_points
        .par_iter()
        .map(|(x, mu, c)| -> Result<TransportResiduals> {
            let (mu, c) = (*mu, *c);
            let s = field.eval(x, t)?;
            let w = 2.0 * PI * s.mag_b;
            let lhs = inp.dt_weighted(&gm, x, mu, c, t)? + inp.apply_s_dagger(&gm, x, mu, c, t)?;
            let rhs = w * (crate::distribution::MuDistribution::d_t(&gm, x, mu, c, t) + inp.apply_s_advective(&gm, x, mu, c, t)?);
            let cd = close_rel(inp.apply_c_dagger(&gm, x, mu, c, t)?, w * inp.apply_c(&gm, x, mu, c, t)?);
            let e = energy_from_moment(mu, c, s.mag_b);
            let a = inp.explicit_model_lhs(g, Some(&k_e), x, e, c, t)?;
            let b = inp.mu_model_lhs(&gm, Some(&km), x, mu, c, t)?;
            Ok(TransportResiduals { conservative_form: close_rel(lhs, rhs), c_dagger: cd, explicit_model: close_rel(a, b) })
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().fold(TransportResiduals::default(), |a, r| TransportResiduals {
        conservative_form: a.conservative_form.max(r.conservative_form),
        c_dagger: a.c_dagger.max(r.c_dagger),
        explicit_model: a.explicit_model.max(r.explicit_model),
    }))
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct HierarchyResiduals {
    /// max over (m, q) ∈ {(0,0), (1,0), (2,0), (0,1)} of quadrature side − closed form
    pub identities: f64,
    pub mass_conservation: f64,
    pub p_par_equation: f64,
    pub p_perp_equation: f64,
}

/// Moment identities with 𝒦 = 0 and 𝔽 = ∇·ℙ/n.
pub fn moment_hierarchy(field: Arc<FieldConfiguration>, g: &BiMaxwellian, quad: &MomentQuadrature, x: &Vec3, t: f64) -> Result<HierarchyResiduals> {
    let inp = TransportInputs::new(field.clone(), Arc::new(manufactured_flow), Arc::new(pressure_force(field.clone(), *g)));
    let gm = MuView::new(*g, field.clone());
    let h = MomentHierarchy { inputs: &inp, g: &gm, k: None, quad };
    let pairs = [(0, 0), (1, 0), (2, 0), (0, 1)];
    let ids: Vec<f64> = pairs
        .par_iter()
        .map(|(m, q)| Ok(h.identity(*m, *q, x, t)?.discrepancy.abs()))
        .collect::<Result<_>>()?;
    let mb = field.eval(x, t)?.mag_b;
    Ok(HierarchyResiduals {
        identities: max_of(ids),
        mass_conservation: (h.closed_form(0, 0, x, t)? - h.mass_conservation_lhs(x, t)?).abs(),
        p_par_equation: (h.closed_form(2, 0, x, t)? - h.p_par_equation_lhs(x, t)?).abs(),
        p_perp_equation: (mb * h.closed_form(0, 1, x, t)? - h.p_perp_equation_lhs(x, t)?).abs(),
    })
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct DriftResiduals {
    /// |(E + u⊥×B − 𝔽)⊥| / max(|𝔽|, 1) with u⊥ from the moment formula and 𝔽 = ∇·ℙ/n
    pub force_balance: f64,
    /// spatial flux of the limit model against u∥b plus the four drifts, with 𝔽 = E + u×B
    pub decomposition: f64,
}

pub fn drift_consistency(field: Arc<FieldConfiguration>, g: &BiMaxwellian, points: &[PhasePoint], t: f64) -> Result<DriftResiduals> {
    let g = *g;
    let p_perp = move |y: &Vec3, s: f64| g.pressures(y, s).0;
    let p_par = move |y: &Vec3, s: f64| g.pressures(y, s).1;
    let ef = field.clone();
    let lorentz = move |x: &Vec3, t: f64| ef.electric_field(x, t) + manufactured_flow(x, t).cross(&ef.magnetic(x, t));
    let balanced = TransportInputs::new(field.clone(), Arc::new(manufactured_flow), Arc::new(lorentz));
    let rows = per_point(points, |(x, e, c)| {
        let s = field.eval(x, t)?;
        let f = force_from_fields(&g.n, &p_perp, &p_par, &s, t)?;
        let u = perp_velocity_from_fields(&g.n, &p_perp, &p_par, &s, t)?;
        let mismatch = s.e + u.cross(&s.b_vec) - f;
        let perp = mismatch - s.b * s.b.dot(&mismatch);
        let mu = (e - 0.5 * c * c) / s.mag_b;
        let (flux, drifts) = balanced.drift_decomposition(x, mu, *c, t)?;
        Ok((perp.norm() / f.norm().max(1.0), (flux - drifts).norm() / flux.norm().max(1.0)))
    })?;
    Ok(DriftResiduals { force_balance: max_of(rows.iter().map(|r| r.0)), decomposition: max_of(rows.iter().map(|r| r.1)) })
}

/// (x, drifts) rows for the drift table, with 𝔽 = ∇·ℙ/n.
pub fn drift_table(field: Arc<FieldConfiguration>, g: &BiMaxwellian, points: &[PhasePoint], t: f64) -> Result<Vec<(Vec3, DriftSet)>> {
    let force = pressure_force(field.clone(), *g);
    per_point(points, |(x, e, c)| {
        let s = field.eval(x, t)?;
        let mu = (e - 0.5 * c * c) / s.mag_b;
        Ok((*x, drift_velocities(*c, mu, &force(x, t), &s)))
    })
}

// fast_motion

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MirrorResiduals {
    pub w_drift: f64,
    pub mu_drift: f64,
    /// max ||z| − √0.5| over the trajectory's turning points
    pub turning_points: f64,
    pub turning_point_count: usize,
    /// mirror points from the effective potential against ±√0.5
    pub mirror_points: f64,
}

/// Bounce in B₀ = 1, L = 1 from the midplane with μ = 1, C∥ = 1, 𝔽 = 0, over `periods` bounces.
pub fn mirror_bounce(tol: f64, periods: f64) -> Result<MirrorResiduals> {
    let cfg = FieldConfiguration::mirror(1.0, 1.0);
    // on the axis the motion is harmonic with ω² = 2μB₀/L²
    let tau_end = periods * TAU / 2.0f64.sqrt();
    let tr = integrate_fast_motion(&cfg, &Vec3::zeros(), 1.0, 1.0, 0.0, tau_end, FastOptions::new(tol), zero_force)?;
    let tps = tr.turning_points();
    let target = 0.5f64.sqrt();
    let opts = TraceOptions { backward_arc: 1.5, max_step: 0.01, ..TraceOptions::new(1.5, 1e-11) };
    let line = trace_field_line_with(&cfg, &Vec3::zeros(), 0.0, &opts)?;
    let (a, b) = find_mirror_points(&line, 1.0, 0.5, zero_force)?
        .ok_or_else(|| Error::Geometry("no mirror points on the mirror axis".into()))?;
    Ok(MirrorResiduals {
        w_drift: tr.max_w_drift(),
        mu_drift: (tr.mu - 1.0).abs(),
        turning_points: max_of(tps.iter().map(|tp| (tp.x[2].abs() - target).abs())),
        turning_point_count: tps.len(),
        mirror_points: (a + target).abs().max((b - target).abs()),
    })
}

// parallel_elliptic

/// Max error against sin(s)/9 for −9u″ = sin s on [0, 2π).
pub fn upar_reduced_error(cells: usize) -> Result<f64> {
    let c = |_s: f64| NodeCoefficients { n: 1.0, p_par: 3.0, p_perp: 3.0, e_par: 0.0, div_b: 0.0 };
    let p = LineProblem::from_profiles(TAU, cells, c, &|s: f64| s.sin())?;
    let (_, sol) = solve_line_problem(&p, Gauge::ZeroMean, DEFAULT_TOL_COMPAT)?;
    Ok(max_of(sol.u_par.iter().zip(&p.s).map(|(u, s)| (u - s.sin() / 9.0).abs())))
}

/// Line length of the manufactured problem.
pub const MANUFACTURED_PERIOD: f64 = 3.0;

pub fn manufactured_coefficients(s: f64) -> NodeCoefficients {
    let k = TAU / MANUFACTURED_PERIOD;
    NodeCoefficients {
        n: 1.0 + 0.2 * (2.0 * k * s + 0.3).sin(),
        p_par: 2.0 + 0.3 * (k * s).sin(),
        p_perp: 1.5 + 0.2 * (k * s).cos(),
        e_par: 0.4 * (k * s).cos(),
        div_b: 0.3 * (k * s + 1.0).sin(),
    }
}

pub fn manufactured_u(s: f64) -> f64 {
    let k = TAU / MANUFACTURED_PERIOD;
    (k * s).sin() + 0.3 * (2.0 * k * s).cos()
}

/// The continuous operator applied to `manufactured_u`, by nested central differences.
pub fn manufactured_rhs(s: f64) -> f64 {
    let h = 1e-3;
    let co = manufactured_coefficients;
    let d = |f: &dyn Fn(f64) -> f64, x: f64| fd::d1(f, x, h);
    let div_b = |phi: &dyn Fn(f64) -> f64, x: f64| d(phi, x) + co(x).div_b * phi(x);
    let w = |x: f64| div_b(&|y| co(y).p_par, x);
    let c = co(s);
    let u = manufactured_u;
    let t1 = -3.0 * d(&|x| div_b(&|y| co(y).p_par * u(y), x), s);
    let t2 = 2.0 * div_b(&|y| u(y) * w(y), s);
    let t3 = c.e_par * div_b(&|y| co(y).n * u(y), s);
    let t4 = c.div_b * div_b(&|y| (-3.0 * co(y).p_par + co(y).p_perp) * u(y), s);
    let t5 = c.p_perp * c.div_b * c.div_b * u(s);
    t1 + t2 + t3 + t4 + t5
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RefinementStudy {
    pub cells: Vec<usize>,
    pub h: Vec<f64>,
    pub max_error: Vec<f64>,
    /// observed order between consecutive refinements
    pub order: Vec<f64>,
}

impl RefinementStudy {
    pub fn min_order(&self) -> f64 {
        self.order.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn upar_manufactured(cells: &[usize]) -> Result<RefinementStudy> {
    let solved: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|n| {
            let p = LineProblem::from_profiles(MANUFACTURED_PERIOD, *n, manufactured_coefficients, &manufactured_rhs)?;
            let (_, sol) = solve_line_problem(&p, Gauge::ZeroMean, DEFAULT_TOL_COMPAT)?;
            Ok((p.h, max_of(sol.u_par.iter().zip(&p.s).map(|(u, s)| (u - manufactured_u(*s)).abs()))))
        })
        .collect::<Result<_>>()?;
    let h: Vec<f64> = solved.iter().map(|r| r.0).collect();
    let err: Vec<f64> = solved.iter().map(|r| r.1).collect();
    let order = (1..err.len()).map(|i| (err[i - 1] / err[i]).ln() / (h[i - 1] / h[i]).ln()).collect();
    Ok(RefinementStudy { cells: cells.to_vec(), h, max_error: err, order })
}

// reduced transport

/// Unit-square grid with a small (μ, c∥) tensor grid.
pub fn reduced_grid(n: usize) -> Result<ReducedGrid> {
    ReducedGrid::new([n, n], [0.0, 0.0], [1.0, 1.0], 4, 6.0, 6, 4.0)
}

/// Gaussian blob over a floor, Maxwellian in velocity.
pub fn reduced_pulse(x1: f64, x2: f64, mu: f64, c: f64) -> f64 {
    let r2 = (x1 - 0.5).powi(2) + (x2 - 0.7).powi(2);
    (1e-3 + (-r2 / 0.01).exp()) * (-mu - 0.5 * c * c).exp()
}

/// Relative mass drift over `steps` steps at 0.4 of the stable step, oscillating E.
pub fn reduced_mass_drift(n: usize, steps: usize) -> Result<f64> {
    let field = Arc::new(
        FieldConfiguration::uniform(1.5, Vec3::z())
            .with_electric(ElectricField::Oscillating { e0: Vec3::new(0.3, -0.2, 0.0), amplitude: 0.5, omega: 2.0 }),
    );
    let grid = reduced_grid(n)?;
    let stepper = ReducedStepper::new(field, &grid)?;
    let dt = 0.4 * stepper.suggest_dt(&grid, 0.0);
    let mut state = ReducedState::from_fn(grid, 0.0, reduced_pulse);
    Ok(step_reduced_transport(&stepper, &mut state, dt, steps)?.relative_mass_drift)
}

/// Centroid speed of a pulse advected by uniform E = E₀x̂ in B = B₀ẑ, against −E₀/B₀.
pub fn reduced_exb_speed(n: usize, e0: f64, b0: f64) -> Result<(f64, f64)> {
    let field = Arc::new(FieldConfiguration::uniform(b0, Vec3::z()).with_electric(ElectricField::Uniform(Vec3::new(e0, 0.0, 0.0))));
    let grid = reduced_grid(n)?;
    let stepper = ReducedStepper::new(field, &grid)?;
    let dt = 0.8 * stepper.suggest_dt(&grid, 0.0);
    let blob = |x1: f64, x2: f64, mu: f64, c: f64| {
        let r2 = (x1 - 0.5).powi(2) + (x2 - 0.75).powi(2);
        (-r2 / 0.01).exp() * (-mu - 0.5 * c * c).exp()
    };
    let mut state = ReducedState::from_fn(grid, 0.0, blob);
    let c0 = state.centroid(b0);
    // travel 0.3, clear of the periodic wrap
    let steps = (0.3 / (e0 / b0).abs() / dt).round() as usize;
    let report = step_reduced_transport(&stepper, &mut state, dt, steps)?;
    let speed = (state.centroid(b0)[1] - c0[1]) / report.t_final;
    let expected = -e0 / b0;
    Ok((speed, ((speed - expected) / expected).abs()))
}

/// The screw-pinch geometry parameters, if `cfg` is one.
pub fn pinch_parameters(cfg: &FieldConfiguration) -> Option<(f64, f64, f64, f64)> {
    match cfg.geometry {
        Geometry::ScrewPinch { b0, major_radius, q0, q2 } => Some((b0, major_radius, q0, q2)),
        _ => None,
    }
}

/// Reference plasma for the suites when the scenario gives none.
pub fn default_plasma() -> BiMaxwellian {
    BiMaxwellian {
        n: Profile::linear(1.0, Vec3::new(0.1, -0.05, 0.0)).with_wave(0.1, Vec3::new(0.7, 0.3, 0.5), 0.2).with_rate(0.05),
        t_perp: Profile::linear(1.2, Vec3::new(-0.1, 0.08, 0.0)).with_wave(0.1, Vec3::new(0.2, 0.9, 0.4), 1.0),
        t_par: Profile::linear(0.8, Vec3::new(0.05, 0.1, 0.0)).with_wave(0.1, Vec3::new(0.5, -0.6, 0.3), 0.4).with_rate(-0.03),
    }
}
