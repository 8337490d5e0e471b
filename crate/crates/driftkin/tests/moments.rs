use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use driftkin::distribution::{BiMaxwellian, EnergyDistribution, Profile, WeightedGaussian};
use driftkin::field::FieldConfiguration;
use driftkin::math::{fd, Mat3};
use driftkin::moments::*;
use driftkin::{Error, Vec3};

struct Nothing;

impl EnergyDistribution for Nothing {
    fn value(&self, _x: &Vec3, _e: f64, _c: f64, _t: f64) -> f64 {
        0.0
    }
}

fn pinch() -> Arc<FieldConfiguration> {
    Arc::new(FieldConfiguration::screw_pinch(1.0, 3.0, 1.2, 0.8))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn maxwellian_moments() {
    let field = pinch();
    let quad = MomentQuadrature::default();
    let (n0, temp) = (1.7, 0.8);
    let g = BiMaxwellian::isotropic(n0, temp);
    let s = field.eval(&Vec3::new(0.3, 0.2, -0.4), 0.0).unwrap();
    assert!(rel(density(&g, &s, 0.0, &quad).unwrap(), n0) < 1e-8);
    let p = pressures(&g, &s, 0.0, &quad).unwrap();
    assert!(rel(p.p_perp, n0 * temp) < 1e-8 && rel(p.p_par, n0 * temp) < 1e-8);
    let expected = pressure_tensor(n0 * temp, n0 * temp, &s.b);
    assert!((p.tensor - expected).norm() < 1e-8);
    assert!(rel(general_moment(&g, 2, 0, &s, 0.0, &quad).unwrap(), n0 * temp) < 1e-8);
    assert!(rel(general_moment(&g, 4, 0, &s, 0.0, &quad).unwrap(), 3.0 * n0 * temp * temp) < 1e-8);
    assert!(general_moment(&g, 1, 0, &s, 0.0, &quad).unwrap().abs() < 1e-12);
    assert_eq!(general_moment(&g, -1, 2, &s, 0.0, &quad).unwrap(), 0.0);
    assert_eq!(general_moment(&g, 3, -1, &s, 0.0, &quad).unwrap(), 0.0);
    assert!(matches!(general_moment(&g, 12, 0, &s, 0.0, &quad), Err(Error::Truncation { .. })));
    assert_eq!(density(&Nothing, &s, 0.0, &quad).unwrap(), 0.0);
}

#[test]
fn bimaxwellian_pressures() {
    let field = pinch();
    let quad = MomentQuadrature::default();
    let g = BiMaxwellian::homogeneous(0.9, 1.4, 0.5);
    let s = field.eval(&Vec3::new(-0.2, 0.4, 1.0), 0.0).unwrap();
    assert!(rel(density(&g, &s, 0.0, &quad).unwrap(), 0.9) < 1e-8);
    let p = pressures(&g, &s, 0.0, &quad).unwrap();
    assert!(rel(p.p_perp, 0.9 * 1.4) < 1e-8);
    assert!(rel(p.p_par, 0.9 * 0.5) < 1e-8);
}

#[test]
fn table_relations_and_coordinate_equivalence() {
    let field = pinch();
    let g = WeightedGaussian { base: BiMaxwellian::homogeneous(1.2, 0.9, 1.3), a1: 0.2, a2: 0.1, a3: 0.05 };
    let mu_quad = MomentQuadrature::default();
    let e_quad = MomentQuadrature::default().with_coordinates(Coordinates::Energy);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0));
        let s = field.eval(&x, 0.0).unwrap();
        let a = moment_table(&g, &s, 0.0, &mu_quad, &[(1, 0), (2, 1)]).unwrap();
        let b = moment_table(&g, &s, 0.0, &e_quad, &[(1, 0), (2, 1)]).unwrap();
        assert_eq!(a.n, a.get_m(0, 0).unwrap());
        assert_eq!(a.p_par, a.get_m(2, 0).unwrap());
        assert_eq!(a.p_perp, s.mag_b * a.get_m(0, 1).unwrap());
        for key in a.m.keys() {
            assert!((a.m[key] - b.m[key]).abs() < 1e-9 * a.m[key].abs().max(1.0), "{key:?}");
        }
        assert!(a.get_m(1, 0).unwrap().abs() > 1e-3);
    }
}

#[test]
fn table_lookups() {
    let field = pinch();
    let s = field.eval(&Vec3::new(0.1, 0.0, 0.0), 0.0).unwrap();
    let t = moment_table(&BiMaxwellian::isotropic(1.0, 1.0), &s, 0.0, &MomentQuadrature::default(), &[]).unwrap();
    assert_eq!(t.get_m(-1, 0).unwrap(), 0.0);
    assert!(matches!(t.get_m(3, 1), Err(Error::Capability(_))));
    assert_eq!(t.get_k(0, 0), 0.0);
    let ok = BTreeMap::from([((0, 0), 0.3), ((1, 0), 1e-12)]);
    let t = t.with_k(ok, 1e-10).unwrap();
    assert_eq!(t.get_k(0, 0), 0.3);
    let bad = BTreeMap::from([((1, 0), 0.1)]);
    assert!(matches!(t.with_k(bad, 1e-10), Err(Error::Validation { .. })));
}

fn anisotropic() -> (Profile, Profile) {
    (
        Profile::linear(1.1, Vec3::new(0.2, -0.1, 0.05)).with_wave(0.1, Vec3::new(0.4, 0.9, 0.3), 0.2),
        Profile::linear(0.7, Vec3::new(-0.1, 0.2, 0.1)).with_wave(0.05, Vec3::new(1.0, 0.2, 0.6), 1.0),
    )
}

#[test]
fn pressure_divergence_matches_tensor_fd() {
    let field = pinch();
    let (pp, pl) = anisotropic();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let x = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0));
        let s = field.eval(&x, 0.0).unwrap();
        let closed = div_pressure_tensor(&pp, &pl, &s, 0.0);
        let tensor = |y: &Vec3| -> Mat3 {
            use driftkin::distribution::ScalarField;
            let b = field.direction(y, 0.0);
            pressure_tensor(pp.value(y, 0.0), pl.value(y, 0.0), &b)
        };
        let numeric = fd::tensor_divergence(tensor, &x, 1e-3);
        assert!((closed - numeric).norm() < 1e-6, "{closed:?} vs {numeric:?}");
    }
}

#[test]
fn pressure_divergence_reductions() {
    let field = pinch();
    let s = field.eval(&Vec3::new(0.2, 0.3, 0.1), 0.0).unwrap();
    let flat = Profile::constant(1.3);
    assert!(div_pressure_tensor(&flat, &flat, &s, 0.0).norm() < 1e-14);
    let p = Profile::linear(1.0, Vec3::new(0.3, -0.2, 0.1));
    let d = div_pressure_tensor(&p, &p, &s, 0.0);
    assert!((d - Vec3::new(0.3, -0.2, 0.1)).norm() < 1e-14);
}

#[test]
fn parallel_moment_equation_is_redundant() {
    let field = pinch();
    let g: Arc<dyn EnergyDistribution> = Arc::new(BiMaxwellian {
        n: Profile::linear(1.0, Vec3::new(0.1, 0.1, 0.0)),
        t_perp: Profile::linear(1.2, Vec3::new(0.0, -0.2, 0.05)),
        t_par: Profile::linear(0.8, Vec3::new(0.15, 0.0, 0.0)),
    });
    let quad = Arc::new(MomentQuadrature::new(48, 48));
    let p_perp = MomentField::new(g.clone(), field.clone(), quad.clone(), MomentKind::PPerp);
    let p_par = MomentField::new(g, field.clone(), quad, MomentKind::PPar);
    for x in [Vec3::new(0.3, -0.2, 0.4), Vec3::new(-0.1, 0.45, -1.0)] {
        let s = field.eval(&x, 0.0).unwrap();
        assert!(redundancy_residual(&p_perp, &p_par, &s, 0.0).abs() < 1e-7);
    }
}

#[test]
fn moment_csv_round_trip() {
    let rows = vec![
        MomentRow { x1: 0.1, x2: -0.2, x3: 0.3, m: 0, q: 0, value: 1.25 },
        MomentRow { x1: 0.1, x2: -0.2, x3: 0.3, m: 1, q: 0, value: 0.0 },
        MomentRow { x1: 1.0, x2: 0.0, x3: 0.0, m: 2, q: 1, value: -3.5e-7 },
    ];
    let text = write_moment_csv(&rows);
    assert_eq!(parse_moment_csv(&text).unwrap(), rows);
    let tables = k_tables_from_rows(&rows, 1e-12).unwrap();
    assert_eq!(tables.len(), 2);
    assert_eq!(tables[0].1.len(), 2);
}

#[test]
fn moment_csv_errors_carry_position() {
    assert!(matches!(parse_moment_csv("a,b\n1,2\n"), Err(Error::Parse { line: 1, .. })));
    let e = parse_moment_csv("x1,x2,x3,m,q,value\n0,0,0,1,zero,1\n").unwrap_err();
    assert!(matches!(e, Error::Parse { line: 2, column: 5, .. }), "{e:?}");
    assert!(parse_moment_csv("x1,x2,x3,m,q,value\n0,0,0,1,0,NaN\n").is_err());
    let flux = "x1,x2,x3,m,q,value\n0,0,0,1,0,0.5\n";
    assert!(k_tables_from_rows(&parse_moment_csv(flux).unwrap(), 1e-10).is_err());
}
