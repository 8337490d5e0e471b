use std::f64::consts::{PI, TAU};

use driftkin::distribution::{Profile, ScalarField, VectorField, ZeroVector};
use driftkin::field::{ElectricField, FieldConfiguration};
use driftkin::math::fd;
use driftkin::parallel::*;
use driftkin::{Error, Vec3};

const LP: f64 = 3.0;

fn coeffs(s: f64) -> NodeCoefficients {
    let k = TAU / LP;
    NodeCoefficients {
        n: 1.0 + 0.2 * (2.0 * k * s + 0.3).sin(),
        p_par: 2.0 + 0.3 * (k * s).sin(),
        p_perp: 1.5 + 0.2 * (k * s).cos(),
        e_par: 0.4 * (k * s).cos(),
        div_b: 0.3 * (k * s + 1.0).sin(),
    }
}

fn u_star(s: f64) -> f64 {
    (TAU * s / LP).sin() + 0.3 * (2.0 * TAU * s / LP).cos()
}

/// Continuous operator on u by nested finite differences of closures.
fn continuous_operator(s: f64) -> f64 {
    let h = 1e-3;
    let d = |f: &dyn Fn(f64) -> f64, x: f64| fd::d1(f, x, h);
    let div_b = |phi: &dyn Fn(f64) -> f64, x: f64| d(phi, x) + coeffs(x).div_b * phi(x);
    let w = |x: f64| div_b(&|y| coeffs(y).p_par, x);
    let c = coeffs(s);
    let t1 = -3.0 * d(&|x| div_b(&|y| coeffs(y).p_par * u_star(y), x), s);
    let t2 = 2.0 * div_b(&|y| u_star(y) * w(y), s);
    let t3 = c.e_par * div_b(&|y| coeffs(y).n * u_star(y), s);
    let t4 = c.div_b * div_b(&|y| (-3.0 * coeffs(y).p_par + coeffs(y).p_perp) * u_star(y), s);
    let t5 = c.p_perp * c.div_b * c.div_b * u_star(s);
    t1 + t2 + t3 + t4 + t5
}

#[test]
fn manufactured_solution_converges_second_order() {
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for cells in [32usize, 64, 128, 256] {
        let p = LineProblem::from_profiles(LP, cells, coeffs, &continuous_operator).unwrap();
        let (op, sol) = solve_line_problem(&p, Gauge::ZeroMean, DEFAULT_TOL_COMPAT).unwrap();
        assert!(!op.nullspace);
        let err = sol.u_par.iter().zip(&p.s).map(|(u, s)| (u - u_star(*s)).abs()).fold(0.0, f64::max);
        errs.push(err);
        hs.push(p.h);
    }
    for i in 1..errs.len() {
        let order = (errs[i - 1] / errs[i]).ln() / (hs[i - 1] / hs[i]).ln();
        assert!(order >= 1.9, "order {order} from errors {errs:?}");
    }
}

#[test]
fn operator_on_sine_matches_second_derivative() {
    let p3 = |_s: f64| NodeCoefficients { n: 1.0, p_par: 3.0, p_perp: 3.0, e_par: 0.0, div_b: 0.0 };
    let mut errs = Vec::new();
    for cells in [64usize, 128] {
        let p = LineProblem::from_profiles(LP, cells, p3, &|_| 0.0).unwrap();
        let op = assemble_parallel_operator(&p).unwrap();
        let u: Vec<f64> = p.s.iter().map(|s| (TAU * s / LP).sin()).collect();
        let au = op.apply(&u);
        let k2 = (TAU / LP).powi(2);
        errs.push(au.iter().zip(&p.s).map(|(a, s)| (a - 9.0 * k2 * (TAU * s / LP).sin()).abs()).fold(0.0, f64::max));
    }
    // −3p∥ u″ = 9 k² sin(ks) for p∥ = 3
    assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
    assert!(errs[1] < 1e-2);
}

#[test]
fn constants_are_annihilated_in_reduced_case() {
    let c = |_s: f64| NodeCoefficients { n: 1.3, p_par: 2.0, p_perp: 0.7, e_par: 0.0, div_b: 0.0 };
    let p = LineProblem::from_profiles(TAU, 40, c, &|_| 0.0).unwrap();
    let op = assemble_parallel_operator(&p).unwrap();
    assert!(op.nullspace);
    assert!(op.apply(&vec![1.0; 40]).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn pinned_and_zero_mean_differ_by_constant() {
    let c = |_s: f64| NodeCoefficients { n: 1.0, p_par: 3.0, p_perp: 3.0, e_par: 0.0, div_b: 0.0 };
    let p = LineProblem::from_profiles(TAU, 128, c, &|s: f64| s.sin() + 0.5 * (3.0 * s).cos()).unwrap();
    let (_, a) = solve_line_problem(&p, Gauge::ZeroMean, DEFAULT_TOL_COMPAT).unwrap();
    let (_, b) = solve_line_problem(&p, Gauge::Pinned { s0: 1.0, value: 0.25 }, DEFAULT_TOL_COMPAT).unwrap();
    let shift = b.u_par[0] - a.u_par[0];
    for (x, y) in a.u_par.iter().zip(&b.u_par) {
        assert!((y - x - shift).abs() < 1e-12);
    }
    // pinned value reproduced by linear interpolation at s0
    let h = p.h;
    let i = (1.0 / h).floor() as usize;
    let f = 1.0 / h - i as f64;
    assert!((b.u_par[i] * (1.0 - f) + b.u_par[i + 1] * f - 0.25).abs() < 1e-12);
}

#[test]
fn open_line_rejected() {
    let cfg = FieldConfiguration::mirror(1.0, 1.0);
    let line = driftkin::field_line::trace_field_line(&cfg, &Vec3::new(0.1, 0.0, -0.5), 0.0, 1.0, 1e-10).unwrap();
    let n = Profile::constant(1.0);
    let r = LineProblem::from_line(&line, &n, &n, &n, 0.0, vec![0.0; line.len()]);
    assert!(matches!(r, Err(Error::Geometry(_))));
}

#[test]
fn screw_pinch_line_problem_solves() {
    let cfg = FieldConfiguration::screw_pinch(1.0, 3.0, 1.0, 0.0);
    let line = driftkin::field_line::trace_field_line(&cfg, &Vec3::new(0.4, 0.0, 0.0), 0.0, 200.0, 1e-11).unwrap();
    assert!(line.closed);
    let line = line.resample_uniform(&cfg, 0.0, 128, 1e-11).unwrap();
    let n = Profile::constant(1.0);
    let p = Profile::constant(2.0);
    let rhs: Vec<f64> = (0..128).map(|i| (TAU * i as f64 / 128.0).sin()).collect();
    let prob = LineProblem::from_line(&line, &n, &p, &p, 0.0, rhs).unwrap();
    let (_, sol) = solve_line_problem(&prob, Gauge::ZeroMean, DEFAULT_TOL_COMPAT).unwrap();
    // straight-field-line pinch with q = 1: ∇·b = 0, constant coefficients
    let k = TAU / prob.period;
    for (u, s) in sol.u_par.iter().zip(&prob.s) {
        assert!((u - (k * s).sin() / (6.0 * k * k)).abs() < 2e-3 / (k * k), "{u} at {s}");
    }
    assert!(sol.report.residual < 1e-10);
}

#[test]
fn force_balance_residual_cases() {
    let cfg = FieldConfiguration::uniform(1.0, Vec3::z());
    let s = cfg.eval(&Vec3::new(0.1, 0.2, 0.7), 0.0).unwrap();
    let n = Profile::constant(2.0);
    let hom = Profile::constant(1.5);
    assert_eq!(parallel_constraint_residual(&n, &hom, &hom, &s, 0.0), 0.0);

    // isotropic p(z) balanced by n E_z = p′(z)
    let p = Profile::constant(1.0).with_wave(0.2, Vec3::z(), 0.0);
    let e = ElectricField::UserDefined(std::sync::Arc::new(|x: &Vec3, _t: f64| Vec3::new(0.0, 0.0, 0.2 * x[2].cos() / 2.0)));
    let cfg = cfg.with_electric(e);
    for z in [0.0, 0.4, 1.3, 2.9] {
        let s = cfg.eval(&Vec3::new(0.0, 0.0, z), 0.0).unwrap();
        assert!(parallel_constraint_residual(&n, &p, &p, &s, 0.0).abs() < 1e-10);
    }
    // too much field: sign follows nE∥ − dp∥/ds
    let strong = FieldConfiguration::uniform(1.0, Vec3::z()).with_electric(ElectricField::Uniform(Vec3::new(0.0, 0.0, 1.0)));
    let s = strong.eval(&Vec3::new(0.0, 0.0, 0.3), 0.0).unwrap();
    assert!(parallel_constraint_residual(&n, &p, &p, &s, 0.0) > 0.0);
}

fn inputs<'a>(
    field: &'a FieldConfiguration,
    n: &'a dyn ScalarField,
    pl: &'a dyn ScalarField,
    pp: &'a dyn ScalarField,
    m: [&'a dyn ScalarField; 3],
    u: &'a dyn VectorField,
    k: Option<[&'a dyn ScalarField; 3]>,
) -> R3Inputs<'a> {
    R3Inputs {
        field,
        n,
        p_par: pl,
        p_perp: pp,
        m21: Some(m[0]),
        m40: Some(m[1]),
        m02: Some(m[2]),
        u_perp: u,
        k30: k.map(|k| k[0]),
        k10: k.map(|k| k[1]),
        k11: k.map(|k| k[2]),
        h: 1e-3,
    }
}

#[test]
fn r3_vanishes_for_static_homogeneous_plasma() {
    let cfg = FieldConfiguration::uniform(1.5, Vec3::new(0.2, 0.1, 1.0));
    let c = Profile::constant(1.0);
    let inp = inputs(&cfg, &c, &c, &c, [&c, &c, &c], &ZeroVector, None);
    assert!(inp.r3(&Vec3::new(0.3, -0.2, 0.5), 0.0).unwrap().abs() < 1e-12);
}

#[test]
fn r3_single_surviving_term_for_oscillating_parallel_field() {
    let cfg = FieldConfiguration::uniform(1.0, Vec3::z())
        .with_electric(ElectricField::Oscillating { e0: Vec3::new(0.1, 0.0, 0.5), amplitude: 0.3, omega: 2.0 });
    let n = Profile::constant(1.7);
    let p = Profile::constant(0.9);
    let inp = inputs(&cfg, &n, &p, &p, [&p, &p, &p], &ZeroVector, None);
    let t: f64 = 0.37;
    let expect = 1.7 * 0.5 * 0.3 * 2.0 * (2.0 * t).cos();
    assert!((inp.r3(&Vec3::new(0.2, 0.1, 0.0), t).unwrap() - expect).abs() < 1e-10);
}

#[test]
fn r3_requires_higher_moments() {
    let cfg = FieldConfiguration::uniform(1.0, Vec3::z());
    let c = Profile::constant(1.0);
    let mut inp = inputs(&cfg, &c, &c, &c, [&c, &c, &c], &ZeroVector, None);
    inp.m40 = None;
    assert!(matches!(inp.r3(&Vec3::zeros(), 0.0), Err(Error::Capability(_))));
}

/// Literal evaluation of R₁, R₂, R₃ from B(x, t), E(x, t) and the scalar
/// fields alone, every derivative by finite differences with its own step.
struct Oracle<'a> {
    cfg: &'a FieldConfiguration,
    n: &'a dyn ScalarField,
    pl: &'a dyn ScalarField,
    pp: &'a dyn ScalarField,
    m21: &'a dyn ScalarField,
    m40: &'a dyn ScalarField,
    m02: &'a dyn ScalarField,
    k: [&'a dyn ScalarField; 3],
    u: &'a dyn VectorField,
    h: f64,
}

impl Oracle<'_> {
    fn bv(&self, x: &Vec3, t: f64) -> Vec3 {
        self.cfg.magnetic(x, t)
    }
    fn b(&self, x: &Vec3, t: f64) -> Vec3 {
        let v = self.bv(x, t);
        v / v.norm()
    }
    fn mb(&self, x: &Vec3, t: f64) -> f64 {
        self.bv(x, t).norm()
    }
    fn f(&self, x: &Vec3, t: f64) -> Vec3 {
        let b = self.b(x, t);
        let j = fd::jacobian(|y| self.b(y, t), x, self.h);
        b.cross(&(j.transpose() * b))
    }
    fn force(&self, x: &Vec3, t: f64) -> Vec3 {
        let mut dp = fd::gradient(|y| self.pp.value(y, t), x, self.h);
        for j in 0..3 {
            dp[j] += fd::divergence(
                |y| {
                    let b = self.b(y, t);
                    b * ((self.pl.value(y, t) - self.pp.value(y, t)) * b[j])
                },
                x,
                self.h,
            );
        }
        dp / self.n.value(x, t)
    }
    fn bxf(&self, x: &Vec3, t: f64) -> Vec3 {
        self.b(x, t).cross(&self.force(x, t)) / self.mb(x, t)
    }
    fn twist(&self, y: &Vec3, t: f64) -> Vec3 {
        let curl = |y: &Vec3| {
            let j = fd::jacobian(|z| self.b(z, t) / self.mb(z, t), y, self.h);
            Vec3::new(j[(1, 2)] - j[(2, 1)], j[(2, 0)] - j[(0, 2)], j[(0, 1)] - j[(1, 0)])
        };
        curl(y) * self.mb(y, t) - self.f(y, t)
    }
    fn bb(&self, x: &Vec3, t: f64) -> f64 {
        let b = self.b(x, t);
        let j = fd::jacobian(|y| self.u.value(y, t), x, self.h);
        b.dot(&(j * b))
    }
    fn div_f_b(&self, x: &Vec3, t: f64) -> f64 {
        fd::divergence(|y| self.f(y, t) / self.mb(y, t), x, self.h)
    }
    fn r1(&self, x: &Vec3, t: f64) -> f64 {
        let flux = |y: &Vec3| {
            (self.u.value(y, t) - self.bxf(y, t)) * self.pl.value(y, t)
                + self.twist(y, t) * self.m21.value(y, t)
                + self.f(y, t) / self.mb(y, t) * self.m40.value(y, t)
        };
        let (b, mb, f, ff) = (self.b(x, t), self.mb(x, t), self.force(x, t), self.f(x, t));
        -fd::divergence(flux, x, self.h) + 2.0 * (-self.bb(x, t) + f.dot(&ff) / mb) * self.pl.value(x, t)
            + 2.0 * mb * self.div_f_b(x, t) * self.m21.value(x, t)
            - fd::divergence(|y| self.b(y, t) * self.k[0].value(y, t), x, self.h)
            + 2.0 * b.dot(&f) * self.k[1].value(x, t)
            - 2.0 * b.dot(&fd::gradient(|y| self.mb(y, t), x, self.h)) * self.k[2].value(x, t)
    }
    fn r2(&self, x: &Vec3, t: f64) -> f64 {
        let flux = |y: &Vec3| {
            (self.u.value(y, t) - self.bxf(y, t)) * self.pp.value(y, t)
                + self.twist(y, t) * (self.mb(y, t) * self.m02.value(y, t))
                + self.f(y, t) * self.m21.value(y, t)
        };
        let (mb, f, ff) = (self.mb(x, t), self.force(x, t), self.f(x, t));
        let div_u = fd::divergence(|y| self.u.value(y, t), x, self.h);
        let div_bxf = fd::divergence(|y| self.bxf(y, t), x, self.h);
        -fd::divergence(flux, x, self.h)
            + (self.bb(x, t) - f.dot(&ff) / mb - div_u + div_bxf) * self.pp.value(x, t)
            - self.div_f_b(x, t) * mb * self.m21.value(x, t)
            - mb * fd::divergence(|y| self.b(y, t) * self.k[2].value(y, t), x, self.h)
    }
    fn r3(&self, x: &Vec3, t: f64) -> f64 {
        let b = self.b(x, t);
        let e = self.cfg.electric_field(x, t);
        let r1 = self.r1(x, t);
        let dr1 = fd::directional(|y| self.r1(y, t), x, &b, self.h);
        let div_b = fd::divergence(|y| self.b(y, t), x, self.h);
        let div_nu = fd::divergence(|y| self.u.value(y, t) * self.n.value(y, t), x, self.h);
        let dt_epar = fd::d1(|s| self.cfg.electric_field(x, s).dot(&self.b(x, s)), t, self.h);
        let dtb = fd::d1_vec(|s| self.b(x, s), t, self.h);
        let div_dtb = fd::divergence(|y| fd::d1_vec(|s| self.b(y, s), t, self.h), x, self.h);
        let gpl = fd::gradient(|y| self.pl.value(y, t), x, self.h);
        -dr1 - e.dot(&b) * div_nu - div_b * (r1 - self.r2(x, t)) + self.n.value(x, t) * dt_epar
            - dtb.dot(&gpl)
            - (self.pl.value(x, t) - self.pp.value(x, t)) * div_dtb
    }
}

fn manufactured_profiles() -> [Profile; 9] {
    [
        Profile::linear(1.2, Vec3::new(0.1, -0.05, 0.0)).with_wave(0.1, Vec3::new(0.7, 0.3, 0.5), 0.2),
        Profile::linear(1.0, Vec3::new(-0.1, 0.08, 0.0)).with_wave(0.15, Vec3::new(0.2, 0.9, 0.4), 1.0),
        Profile::linear(0.8, Vec3::new(0.05, 0.1, 0.0)).with_wave(0.1, Vec3::new(0.5, -0.6, 0.3), 0.4),
        Profile::constant(0.3).with_wave(0.2, Vec3::new(0.4, 0.4, 0.2), 0.0),
        Profile::constant(2.0).with_wave(0.1, Vec3::new(-0.3, 0.5, 0.6), 0.7),
        Profile::constant(0.6).with_wave(0.1, Vec3::new(0.6, 0.2, -0.4), 1.3),
        Profile::constant(0.2).with_wave(0.3, Vec3::new(0.3, -0.2, 0.5), 0.1),
        Profile::constant(-0.1).with_wave(0.5, Vec3::new(0.1, 0.8, 0.2), 0.5),
        Profile::constant(0.15).with_wave(0.4, Vec3::new(-0.5, 0.1, 0.3), 0.9),
    ]
}

fn manufactured_u(x: &Vec3, t: f64) -> Vec3 {
    Vec3::new(0.1 * (x[1] + t).sin(), -0.2 * x[0] * x[2], 0.05 * (x[0] - x[1]).cos())
}

fn r3_against_oracle(cfg: &FieldConfiguration, lib_h: f64, points: &[Vec3], t: f64) {
    let pr = manufactured_profiles();
    let u = manufactured_u;
    let mut inp = inputs(cfg, &pr[0], &pr[1], &pr[2], [&pr[3], &pr[4], &pr[5]], &u, Some([&pr[6], &pr[7], &pr[8]]));
    inp.h = lib_h;
    let oracle = Oracle {
        cfg,
        n: &pr[0],
        pl: &pr[1],
        pp: &pr[2],
        m21: &pr[3],
        m40: &pr[4],
        m02: &pr[5],
        k: [&pr[6], &pr[7], &pr[8]],
        u: &u,
        h: 5e-3,
    };
    for x in points {
        let a = inp.r3(x, t).unwrap();
        assert!(a.abs() > 1e-2);
        let b = oracle.r3(x, t);
        assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "R3 {a} vs oracle {b} at {x:?}");
        let (a1, b1) = (inp.r1(x, t).unwrap(), oracle.r1(x, t));
        assert!((a1 - b1).abs() < 1e-7 * (1.0 + b1.abs()), "R1 {a1} vs {b1}");
        let (a2, b2) = (inp.r2(x, t).unwrap(), oracle.r2(x, t));
        assert!((a2 - b2).abs() < 1e-7 * (1.0 + b2.abs()), "R2 {a2} vs {b2}");
    }
}

#[test]
fn r3_matches_fd_composition_on_screw_pinch() {
    let cfg = FieldConfiguration::screw_pinch(1.0, 3.0, 1.2, 0.8)
        .with_electric(ElectricField::Oscillating { e0: Vec3::new(0.1, -0.2, 0.3), amplitude: 0.4, omega: 1.5 });
    let pts = [Vec3::new(0.3, 0.1, 0.2), Vec3::new(-0.2, 0.4, 1.0), Vec3::new(0.5, -0.3, -0.7)];
    r3_against_oracle(&cfg, 1e-3, &pts, 0.3);
}

#[test]
fn r3_matches_fd_composition_with_moving_field() {
    // B rotates slowly in time, so ∂ₜb and ∇·∂ₜb are nonzero
    let cfg = FieldConfiguration::user_defined(|x: &Vec3, t: f64| {
        Vec3::new(0.2 * (x[2] + 0.5 * t).sin(), 0.1 * x[0] + 0.15 * (PI * 0.1 * t).cos(), 1.0 + 0.1 * x[1])
    })
    .with_electric(ElectricField::UserDefined(std::sync::Arc::new(|x: &Vec3, t: f64| {
        Vec3::new(0.1 * x[1], 0.05, 0.2 + 0.1 * (x[0] + t).sin())
    })))
    .with_h_fd(1e-2);
    let pts = [Vec3::new(0.3, 0.1, 0.2), Vec3::new(-0.2, 0.4, 1.0)];
    r3_against_oracle(&cfg, 1e-2, &pts, 0.2);
}
