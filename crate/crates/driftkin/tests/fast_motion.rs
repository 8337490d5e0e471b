use std::f64::consts::TAU;

use driftkin::drifts::zero_force;
use driftkin::fast_motion::*;
use driftkin::field::{ElectricField, FieldConfiguration};
use driftkin::field_line::{trace_field_line_with, TraceOptions};
use driftkin::{Error, Vec3};

fn mirror() -> FieldConfiguration {
    FieldConfiguration::mirror(1.0, 1.0)
}

#[test]
fn straight_line_in_uniform_field() {
    let c = FieldConfiguration::uniform(1.0, Vec3::new(0.0, 0.6, 0.8));
    let x0 = Vec3::new(0.1, 0.2, 0.3);
    let tr = integrate_fast_motion(&c, &x0, 1.0, 0.3, 0.0, 2.0, FastOptions::new(1e-10), zero_force).unwrap();
    for (tau, x) in tr.tau.iter().zip(&tr.x) {
        assert!((x - (x0 + Vec3::new(0.0, 0.6, 0.8) * *tau)).norm() < 1e-12);
    }
    assert!(tr.c_par.iter().all(|c| *c == 1.0));
}

#[test]
fn mirror_bounce_conserves_invariants() {
    let tol = 1e-9;
    // on the axis the motion is harmonic with ω² = 2μB₀/L², ten periods
    let tau_end = 10.0 * TAU / 2.0f64.sqrt();
    let tr = integrate_fast_motion(&mirror(), &Vec3::zeros(), 1.0, 1.0, 0.0, tau_end, FastOptions::new(tol), zero_force).unwrap();
    assert_eq!(tr.mu, 1.0);
    assert!(tr.max_w_drift() < 10.0 * tol, "{}", tr.max_w_drift());
    let tps = tr.turning_points();
    assert_eq!(tps.len(), 20);
    for tp in &tps {
        assert!((tp.x[2].abs() - 0.5f64.sqrt()).abs() < 1e-6, "{}", tp.x[2]);
    }
    assert!(tr.csv().starts_with("tau,x1,x2,x3,c_par,mu,W\n"));
}

#[test]
fn fast_motion_follows_the_field_line() {
    let c = FieldConfiguration::screw_pinch(1.0, 3.0, 1.2, 0.8);
    let x0 = Vec3::new(0.6, 0.2, 0.0);
    let tol = 1e-8;
    let force = |s: &driftkin::field::FieldSample| Vec3::new(0.0, 0.0, 0.1 * s.x[0]);
    let tr = integrate_fast_motion(&c, &x0, 0.8, 0.5, 0.0, 6.0, FastOptions::new(tol), force).unwrap();
    let r0 = x0.xy().norm();
    let q = 1.2 + 0.8 * r0 * r0;
    let th0 = x0[1].atan2(x0[0]);
    for (x, s) in tr.x.iter().zip(&tr.s) {
        let arc = s.abs().max(1.0);
        assert!((x.xy().norm() - r0).abs() < tol * arc);
        // lines on a cylinder are helices θ = θ₀ + z/(R₀q)
        let th = th0 + x[2] / (3.0 * q);
        let on_line = Vec3::new(r0 * th.cos(), r0 * th.sin(), x[2]);
        assert!((x - on_line).norm() < tol * arc, "{}", (x - on_line).norm());
    }
}

#[test]
fn fast_motion_rejects_bad_inputs() {
    let m = mirror();
    assert!(integrate_fast_motion(&m, &Vec3::zeros(), 1.0, -1.0, 0.0, 1.0, FastOptions::new(1e-9), zero_force).is_err());
    assert!(integrate_fast_motion(&m, &Vec3::zeros(), 1.0, 1.0, 0.0, 1.0, FastOptions::new(0.0), zero_force).is_err());
}

fn axis_line(half: f64) -> driftkin::field_line::FieldLine {
    let opts = TraceOptions { backward_arc: half, max_step: 0.01, ..TraceOptions::new(half, 1e-11) };
    trace_field_line_with(&mirror(), &Vec3::zeros(), 0.0, &opts).unwrap()
}

#[test]
fn mirror_points() {
    let line = axis_line(1.5);
    let (a, b) = find_mirror_points(&line, 1.0, 0.5, zero_force).unwrap().unwrap();
    // V(s) = μ(|B|(s) − |B|(0)) = s² on the axis, W = 1.5 − 1
    assert!((a + 0.5f64.sqrt()).abs() < 1e-8 && (b - 0.5f64.sqrt()).abs() < 1e-8, "{a} {b}");
    let (a, b) = find_mirror_points(&line, 1.0, 0.0, zero_force).unwrap().unwrap();
    assert!(a == b && a.abs() < 1e-12);
    assert!(matches!(find_mirror_points(&line, 1.0, -0.1, zero_force), Err(Error::NoMotion { .. })));
    // the segment is too short to contain both turning points
    assert!(matches!(find_mirror_points(&line, 1.0, 4.0, zero_force), Err(Error::NoMotion { .. }) | Err(Error::Geometry(_)) | Ok(None)));

    let u = FieldConfiguration::uniform(1.0, Vec3::z());
    let opts = TraceOptions { backward_arc: 2.0, ..TraceOptions::new(2.0, 1e-10) };
    let line = trace_field_line_with(&u, &Vec3::zeros(), 0.0, &opts).unwrap();
    assert_eq!(find_mirror_points(&line, 1.0, 0.5, zero_force).unwrap(), None);
}

#[test]
fn full_orbit_gyrates_on_exact_circle() {
    let c = FieldConfiguration::uniform(1.0, Vec3::z());
    let eps = 0.2;
    let period = TAU * eps * eps;
    let opts = FullOptions { dt_frac: 1.0 / 50.0, ..FullOptions::default() };
    let tr = integrate_full_characteristics(&c, &Vec3::zeros(), &Vec3::new(0.0, 1.5, 0.0), eps, 3.0 * period * (1.0 - 1e-12), opts).unwrap();
    let radius = eps * eps * 1.5;
    // v₀ = ŷ in B ẑ: the centre sits at +x̂ρ; split drifts cut chords, O(dt²) in radius
    let centre = Vec3::new(radius, 0.0, 0.0);
    let dphi = TAU / 50.0;
    for x in &tr.x {
        assert!(((x - centre).norm() - radius).abs() < dphi * dphi * radius, "{}", (x - centre).norm());
        assert_eq!(x[2], 0.0);
    }
    assert!((tr.x.last().unwrap() - tr.x[0]).norm() < 1e-12);
}

#[test]
fn full_orbit_parallel_motion_is_straight() {
    let c = FieldConfiguration::uniform(2.0, Vec3::z());
    for eps in [0.3, 0.05] {
        let tr = integrate_full_characteristics(&c, &Vec3::zeros(), &Vec3::new(0.0, 0.0, 0.7), eps, 0.5, FullOptions::default()).unwrap();
        for (t, x) in tr.t.iter().zip(&tr.x) {
            assert!((x - Vec3::new(0.0, 0.0, 0.7 * t)).norm() < 1e-12);
        }
    }
}

#[test]
fn full_orbit_conserves_energy_in_static_mirror() {
    let eps = 0.1;
    let period = TAU * eps * eps;
    let tr = integrate_full_characteristics(&mirror(), &Vec3::new(0.2, 0.0, 0.0), &Vec3::new(0.0, 0.5, 0.4), eps, 100.0 * period, FullOptions::default()).unwrap();
    assert!(tr.max_energy_drift() < 1e-8, "{}", tr.max_energy_drift());
}

#[test]
fn full_orbit_exb_drift_limit() {
    let (e0, b0) = (0.3, 2.0);
    let c = FieldConfiguration::uniform(b0, Vec3::z()).with_electric(ElectricField::Uniform(Vec3::new(e0, 0.0, 0.0)));
    let mut errors = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let tr = integrate_full_characteristics(&c, &Vec3::zeros(), &Vec3::new(0.4, 0.0, 0.0), eps, 1.0, FullOptions::default()).unwrap();
        let gc = gyro_averaged_positions(&c, &tr).unwrap();
        let (t0, x0) = gc[0];
        let (t1, x1) = *gc.last().unwrap();
        let v = (x1 - x0) / (t1 - t0);
        errors.push((v - Vec3::new(0.0, -e0 / b0, 0.0)).norm());
    }
    assert!(errors[2] < 1e-3, "{errors:?}");
}

#[test]
fn full_orbit_rejects_oversized_step() {
    let c = FieldConfiguration::uniform(1.0, Vec3::z());
    let opts = FullOptions { dt_frac: 0.8, max_frac: 0.5 };
    assert!(matches!(integrate_full_characteristics(&c, &Vec3::zeros(), &Vec3::x(), 0.1, 1.0, opts), Err(Error::Stability(_))));
}

#[test]
fn guiding_center_error_in_uniform_field_is_the_larmor_radius() {
    let c = FieldConfiguration::uniform(1.0, Vec3::z());
    let (eps, vperp, vpar) = (0.1, 1.0, 0.5);
    let v0 = Vec3::new(vperp, 0.0, vpar);
    let full = integrate_full_characteristics(&c, &Vec3::zeros(), &v0, eps, 1.0, FullOptions::default()).unwrap();
    let reference = integrate_fast_motion(&c, &Vec3::zeros(), vpar, 0.5 * vperp * vperp, 0.0, 1.0, FastOptions::new(1e-10), zero_force).unwrap();
    let r = guiding_center_error(&c, &full, &reference, 1.0).unwrap();
    let larmor = eps * eps * vperp;
    assert!((r.max_position_error - larmor).abs() < 0.02 * larmor, "{r:?}");
    let r = guiding_center_error(&c, &full, &reference, 0.0).unwrap();
    assert_eq!(r.max_position_error, 0.0);
    let shifted = integrate_fast_motion(&c, &Vec3::zeros(), vpar * 1.1, 0.5, 0.0, 1.0, FastOptions::new(1e-10), zero_force).unwrap();
    assert!(guiding_center_error(&c, &full, &shifted, 1.0).is_err());
}

#[test]
fn epsilon_sweep_converges_on_mirror() {
    let r = epsilon_sweep(
        &mirror(),
        &Vec3::new(0.3, 0.0, 0.0),
        &Vec3::new(0.0, 0.6, 0.5),
        &[0.1, 0.05, 0.025],
        2.0,
        FullOptions::default(),
        1e-10,
    )
    .unwrap();
    assert!(r.slope >= 1.0, "{r:?}");
    assert!(r.error.windows(2).all(|w| w[1] < w[0]));
    assert!(epsilon_sweep(&mirror(), &Vec3::zeros(), &Vec3::x(), &[0.1, 0.2], 1.0, FullOptions::default(), 1e-9).is_err());
}
