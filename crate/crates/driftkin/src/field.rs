//! Analytic electromagnetic field configurations and their differential geometry.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::math::{curl_from_grad, fd, to_array, Mat3, Vec3};

/// Floor below which |B| is treated as vanishing.
pub const MAG_B_FLOOR: f64 = 1e-12;

pub type VectorFn = Arc<dyn Fn(&Vec3, f64) -> Vec3 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Uniform,
    GradientSlab,
    ScrewPinch,
    AxisymmetricMirror,
    UserDefined,
}

impl FieldKind {
    pub const NAMES: [&'static str; 5] =
        ["uniform", "gradient_slab", "screw_pinch", "axisymmetric_mirror", "user_defined"];

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Uniform => "uniform",
            FieldKind::GradientSlab => "gradient_slab",
            FieldKind::ScrewPinch => "screw_pinch",
            FieldKind::AxisymmetricMirror => "axisymmetric_mirror",
            FieldKind::UserDefined => "user_defined",
        }
    }
}

/// Static magnetic geometry.
#[derive(Clone)]
pub enum Geometry {
    /// B = b0 · direction (direction normalized on construction).
    Uniform { b0: f64, direction: Vec3 },
    /// B = b0 (1 + kappa x1) ẑ.
    GradientSlab { b0: f64, kappa: f64 },
    /// B = b0 [ẑ + r/(R0 q(r)) θ̂] with q(r) = q0 + q2 r².
    ScrewPinch { b0: f64, major_radius: f64, q0: f64, q2: f64 },
    /// B_z = b0 (1 + z²/L²), B_x = -b0 z x / L², B_y = -b0 z y / L².
    AxisymmetricMirror { b0: f64, length: f64 },
    /// Arbitrary (possibly time-dependent) B(x, t); derivatives by finite differences.
    UserDefined(VectorFn),
}

impl fmt::Debug for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Uniform { b0, direction } => {
                f.debug_struct("Uniform").field("b0", b0).field("direction", direction).finish()
            }
            Geometry::GradientSlab { b0, kappa } => {
                f.debug_struct("GradientSlab").field("b0", b0).field("kappa", kappa).finish()
            }
            Geometry::ScrewPinch { b0, major_radius, q0, q2 } => f
                .debug_struct("ScrewPinch")
                .field("b0", b0)
                .field("major_radius", major_radius)
                .field("q0", q0)
                .field("q2", q2)
                .finish(),
            Geometry::AxisymmetricMirror { b0, length } => {
                f.debug_struct("AxisymmetricMirror").field("b0", b0).field("length", length).finish()
            }
            Geometry::UserDefined(_) => f.write_str("UserDefined(..)"),
        }
    }
}

impl Geometry {
    fn kind(&self) -> FieldKind {
        match self {
            Geometry::Uniform { .. } => FieldKind::Uniform,
            Geometry::GradientSlab { .. } => FieldKind::GradientSlab,
            Geometry::ScrewPinch { .. } => FieldKind::ScrewPinch,
            Geometry::AxisymmetricMirror { .. } => FieldKind::AxisymmetricMirror,
            Geometry::UserDefined(_) => FieldKind::UserDefined,
        }
    }

    /// Static field and its gradient `J[(i, j)] = ∂_i B_j` for the analytic kinds.
    fn analytic(&self, x: &Vec3) -> Option<(Vec3, Mat3)> {
        match *self {
            Geometry::Uniform { b0, direction } => Some((direction * b0, Mat3::zeros())),
            Geometry::GradientSlab { b0, kappa } => {
                let b = Vec3::new(0.0, 0.0, b0 * (1.0 + kappa * x[0]));
                let mut j = Mat3::zeros();
                j[(0, 2)] = b0 * kappa;
                Some((b, j))
            }
            Geometry::ScrewPinch { b0, major_radius, q0, q2 } => {
                let rho = x[0] * x[0] + x[1] * x[1];
                let q = q0 + q2 * rho;
                let g = 1.0 / (major_radius * q);
                let dg = -q2 / (major_radius * q * q); // dg/dρ
                let b = Vec3::new(-b0 * x[1] * g, b0 * x[0] * g, b0);
                let mut j = Mat3::zeros();
                // B_x = -b0 y g(ρ), B_y = b0 x g(ρ)
                j[(0, 0)] = -b0 * x[1] * dg * 2.0 * x[0];
                j[(1, 0)] = -b0 * (g + x[1] * dg * 2.0 * x[1]);
                j[(0, 1)] = b0 * (g + x[0] * dg * 2.0 * x[0]);
                j[(1, 1)] = b0 * x[0] * dg * 2.0 * x[1];
                Some((b, j))
            }
            Geometry::AxisymmetricMirror { b0, length } => {
                let l2 = length * length;
                let (px, py, pz) = (x[0], x[1], x[2]);
                let b = Vec3::new(-b0 * pz * px / l2, -b0 * pz * py / l2, b0 * (1.0 + pz * pz / l2));
                let mut j = Mat3::zeros();
                j[(0, 0)] = -b0 * pz / l2;
                j[(2, 0)] = -b0 * px / l2;
                j[(1, 1)] = -b0 * pz / l2;
                j[(2, 1)] = -b0 * py / l2;
                j[(2, 2)] = 2.0 * b0 * pz / l2;
                Some((b, j))
            }
            Geometry::UserDefined(_) => None,
        }
    }
}

/// Electric field specification.
#[derive(Clone, Default)]
pub enum ElectricField {
    #[default]
    Zero,
    Uniform(Vec3),
    /// E(t) = e0 (1 + amplitude sin(omega t)).
    Oscillating { e0: Vec3, amplitude: f64, omega: f64 },
    UserDefined(VectorFn),
}

impl fmt::Debug for ElectricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElectricField::Zero => f.write_str("Zero"),
            ElectricField::Uniform(e) => f.debug_tuple("Uniform").field(e).finish(),
            ElectricField::Oscillating { e0, amplitude, omega } => f
                .debug_struct("Oscillating")
                .field("e0", e0)
                .field("amplitude", amplitude)
                .field("omega", omega)
                .finish(),
            ElectricField::UserDefined(_) => f.write_str("UserDefined(..)"),
        }
    }
}

impl ElectricField {
    pub fn value(&self, x: &Vec3, t: f64) -> Vec3 {
        match self {
            ElectricField::Zero => Vec3::zeros(),
            ElectricField::Uniform(e) => *e,
            ElectricField::Oscillating { e0, amplitude, omega } => e0 * (1.0 + amplitude * (omega * t).sin()),
            ElectricField::UserDefined(f) => f(x, t),
        }
    }

    pub fn dt(&self, x: &Vec3, t: f64, h: f64) -> Vec3 {
        match self {
            ElectricField::Zero | ElectricField::Uniform(_) => Vec3::zeros(),
            ElectricField::Oscillating { e0, amplitude, omega } => e0 * (amplitude * omega * (omega * t).cos()),
            ElectricField::UserDefined(f) => fd::d1_vec(|s| f(x, s), t, h),
        }
    }
}

/// |B| scaled by m(t) = 1 + amplitude sin(omega t); direction unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub amplitude: f64,
    pub omega: f64,
}

impl Modulation {
    fn factor(&self, t: f64) -> f64 {
        1.0 + self.amplitude * (self.omega * t).sin()
    }

    fn dt_ln(&self, t: f64) -> f64 {
        self.amplitude * self.omega * (self.omega * t).cos() / self.factor(t)
    }
}

/// Admissible region for field evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Domain {
    pub lower: Option<Vec3>,
    pub upper: Option<Vec3>,
    /// cylinder radius about the z axis
    pub max_radius: Option<f64>,
    /// period of the z coordinate, used for closure of traced lines
    pub z_period: Option<f64>,
}

impl Domain {
    pub fn contains(&self, x: &Vec3) -> bool {
        if !(x[0].is_finite() && x[1].is_finite() && x[2].is_finite()) {
            return false;
        }
        if let Some(lo) = self.lower {
            if (0..3).any(|i| x[i] < lo[i]) {
                return false;
            }
        }
        if let Some(hi) = self.upper {
            if (0..3).any(|i| x[i] > hi[i]) {
                return false;
            }
        }
        if let Some(r) = self.max_radius {
            if x[0] * x[0] + x[1] * x[1] > r * r {
                return false;
            }
        }
        true
    }

    /// Displacement `x - y` with the minimum image along a periodic z.
    pub fn displacement(&self, x: &Vec3, y: &Vec3) -> Vec3 {
        let mut d = x - y;
        if let Some(p) = self.z_period {
            d[2] -= p * (d[2] / p).round();
        }
        d
    }
}

/// Local field data at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub x: Vec3,
    pub t: f64,
    pub b_vec: Vec3,
    pub e: Vec3,
    pub b: Vec3,
    pub mag_b: f64,
    pub grad_mag_b: Vec3,
    /// `jac_b[(i, j)] = ∂_i b_j`
    pub jac_b: Mat3,
    pub div_b: f64,
    pub curl_b: Vec3,
    /// (b·∇)b
    pub curvature: Vec3,
    /// b × (b·∇)b
    pub f_vec: Vec3,
    pub dt_b: Vec3,
    pub dt_ln_b: f64,
    pub dt_e: Vec3,
}

#[derive(Clone, Debug)]
pub struct FieldConfiguration {
    pub geometry: Geometry,
    pub electric: ElectricField,
    pub modulation: Option<Modulation>,
    pub domain: Domain,
    /// finite-difference step for user-defined fields and time derivatives
    pub h_fd: f64,
}

impl FieldConfiguration {
    pub fn new(geometry: Geometry) -> Self {
        let domain = match geometry {
            Geometry::ScrewPinch { major_radius, .. } => {
                Domain { z_period: Some(2.0 * PI * major_radius), ..Domain::default() }
            }
            _ => Domain::default(),
        };
        let geometry = match geometry {
            Geometry::Uniform { b0, direction } => {
                Geometry::Uniform { b0, direction: direction / direction.norm() }
            }
            g => g,
        };
        FieldConfiguration { geometry, electric: ElectricField::Zero, modulation: None, domain, h_fd: 1e-3 }
    }

    pub fn uniform(b0: f64, direction: Vec3) -> Self {
        Self::new(Geometry::Uniform { b0, direction })
    }

    pub fn gradient_slab(b0: f64, kappa: f64) -> Self {
        Self::new(Geometry::GradientSlab { b0, kappa })
    }

    pub fn screw_pinch(b0: f64, major_radius: f64, q0: f64, q2: f64) -> Self {
        Self::new(Geometry::ScrewPinch { b0, major_radius, q0, q2 })
    }

    pub fn mirror(b0: f64, length: f64) -> Self {
        Self::new(Geometry::AxisymmetricMirror { b0, length })
    }

    pub fn user_defined<F>(f: F) -> Self
    where
        F: Fn(&Vec3, f64) -> Vec3 + Send + Sync + 'static,
    {
        Self::new(Geometry::UserDefined(Arc::new(f)))
    }

    pub fn with_electric(mut self, e: ElectricField) -> Self {
        self.electric = e;
        self
    }

    pub fn with_modulation(mut self, m: Modulation) -> Self {
        self.modulation = Some(m);
        self
    }

    pub fn with_domain(mut self, d: Domain) -> Self {
        self.domain = d;
        self
    }

    pub fn with_h_fd(mut self, h: f64) -> Self {
        self.h_fd = h;
        self
    }

    pub fn kind(&self) -> FieldKind {
        self.geometry.kind()
    }

    fn modulation_factor(&self, t: f64) -> f64 {
        self.modulation.map_or(1.0, |m| m.factor(t))
    }

    /// Raw magnetic field B(x, t), no domain or floor checks.
    pub fn magnetic(&self, x: &Vec3, t: f64) -> Vec3 {
        match &self.geometry {
            Geometry::UserDefined(f) => f(x, t) * self.modulation_factor(t),
            g => g.analytic(x).map(|(b, _)| b).unwrap_or_else(Vec3::zeros) * self.modulation_factor(t),
        }
    }

    /// Unit vector b(x, t) (NaN where B vanishes).
    pub fn direction(&self, x: &Vec3, t: f64) -> Vec3 {
        let b = self.magnetic(x, t);
        b / b.norm()
    }

    pub fn electric_field(&self, x: &Vec3, t: f64) -> Vec3 {
        self.electric.value(x, t)
    }

    fn b_and_grad(&self, x: &Vec3, t: f64) -> (Vec3, Mat3) {
        match &self.geometry {
            Geometry::UserDefined(f) => {
                let m = self.modulation_factor(t);
                let b = f(x, t) * m;
                let j = fd::jacobian(|y| f(y, t), x, self.h_fd) * m;
                (b, j)
            }
            g => {
                let (b, j) = g.analytic(x).expect("analytic geometry");
                let m = self.modulation_factor(t);
                (b * m, j * m)
            }
        }
    }

    pub fn check_point(&self, x: &Vec3) -> Result<()> {
        if !self.domain.contains(x) {
            return Err(Error::OutsideDomain { x: to_array(x) });
        }
        Ok(())
    }

    /// Full local geometry at (x, t).
    pub fn eval(&self, x: &Vec3, t: f64) -> Result<FieldSample> {
        self.check_point(x)?;
        let (bv, jb) = self.b_and_grad(x, t);
        let mag_b = bv.norm();
        if !(mag_b >= MAG_B_FLOOR) {
            return Err(Error::DegenerateField { mag_b, x: to_array(x) });
        }
        let b = bv / mag_b;
        let grad_mag_b = jb * b;
        let mut jac_b = jb / mag_b;
        for i in 0..3 {
            for j in 0..3 {
                jac_b[(i, j)] -= b[j] * grad_mag_b[i] / mag_b;
            }
        }
        let div_b = jac_b.trace();
        let curl_b = curl_from_grad(&jac_b);
        let curvature = jac_b.transpose() * b;
        let f_vec = b.cross(&curvature);
        let (dt_b, dt_ln_b) = match (&self.geometry, self.modulation) {
            (Geometry::UserDefined(f), _) => {
                let h = self.h_fd;
                let m = |s: f64| self.modulation_factor(s);
                let dir = |s: f64| {
                    let v = f(x, s);
                    v / v.norm()
                };
                let lnb = |s: f64| (f(x, s).norm() * m(s)).ln();
                (fd::d1_vec(dir, t, h), fd::d1(lnb, t, h))
            }
            (_, Some(m)) => (Vec3::zeros(), m.dt_ln(t)),
            (_, None) => (Vec3::zeros(), 0.0),
        };
        Ok(FieldSample {
            x: *x,
            t,
            b_vec: bv,
            e: self.electric.value(x, t),
            b,
            mag_b,
            grad_mag_b,
            jac_b,
            div_b,
            curl_b,
            curvature,
            f_vec,
            dt_b,
            dt_ln_b,
            dt_e: self.electric.dt(x, t, self.h_fd),
        })
    }
}

/// Max |∇·B| over the points, by fourth-order central differences of B.
pub fn check_divergence_free(config: &FieldConfiguration, points: &[Vec3], t: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(invalid("divergence check needs at least one point"));
    }
    let mut worst = 0.0f64;
    for x in points {
        config.eval(x, t)?;
        let d = fd::divergence(|y| config.magnetic(y, t), x, config.h_fd);
        worst = worst.max(d.abs());
    }
    Ok(worst)
}
