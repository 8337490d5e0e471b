//! Velocity moments of gyrophase-independent distributions.
//!
//! Two quadrature routes are provided. The (μ, c∥) route integrates over the
//! box [0, μ_max] × [−c_max, c_max] with weight 2π|B|. The (e, c∥) route maps
//! 𝒟 to (w, s) ∈ [0, w_max] × [−1, 1] through e = w²/2, c∥ = w s, so that
//! 2π de dc∥ = 2π w² dw ds and the integrand stays smooth at the cone edge.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::{EnergyDistribution, ScalarField};
use crate::error::{invalid, Error, Result};
use crate::field::{FieldConfiguration, FieldSample};
use crate::math::quadrature::GaussLegendre;
use crate::math::{Mat3, Vec3};

pub const N_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    Mu,
    Energy,
}

/// Truncated Gauss–Legendre product rule for velocity moments.
#[derive(Debug, Clone)]
pub struct MomentQuadrature {
    gl_mu: GaussLegendre,
    gl_c: GaussLegendre,
    /// μ_max |B| = mu_span · T
    pub mu_span: f64,
    /// c_max = c_span · √T
    pub c_span: f64,
    pub tail_tol: f64,
    /// largest m + 2q accepted
    pub max_order: i32,
    pub coordinates: Coordinates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMeta {
    pub n_mu: usize,
    pub n_c: usize,
    pub mu_max: f64,
    pub c_max: f64,
    pub tail: f64,
}

impl Default for MomentQuadrature {
    fn default() -> Self {
        MomentQuadrature::new(64, 64)
    }
}

impl MomentQuadrature {
    pub fn new(n_mu: usize, n_c: usize) -> Self {
        MomentQuadrature {
            gl_mu: GaussLegendre::new(n_mu.max(1)),
            gl_c: GaussLegendre::new(n_c.max(1)),
            mu_span: 36.0,
            c_span: 8.5,
            tail_tol: 1e-10,
            max_order: 8,
            coordinates: Coordinates::Mu,
        }
    }

    pub fn with_spans(mut self, mu_span: f64, c_span: f64) -> Self {
        self.mu_span = mu_span;
        self.c_span = c_span;
        self
    }

    pub fn with_coordinates(mut self, coordinates: Coordinates) -> Self {
        self.coordinates = coordinates;
        self
    }

    pub fn with_tail_tol(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    pub fn n_mu(&self) -> usize {
        self.gl_mu.len()
    }

    pub fn n_c(&self) -> usize {
        self.gl_c.len()
    }

    /// Relative tail estimate for the weight c∥^m μ^q under a Gaussian of
    /// temperature T, from ∫_a^∞ x^m e^{−x²/2} ≈ a^{m−1} e^{−a²/2} and
    /// ∫_A^∞ y^q e^{−y} ≈ A^q e^{−A}.
    pub fn tail_estimate(&self, m: i32, q: i32) -> f64 {
        let a = self.c_span;
        let tail_c = a.powi(m.max(0) - 1) * (-0.5 * a * a).exp();
        let tail_mu = self.mu_span.powi(q.max(0)) * (-self.mu_span).exp();
        tail_c.max(tail_mu)
    }

    pub fn check_order(&self, m: i32, q: i32) -> Result<f64> {
        if m + 2 * q > self.max_order {
            return Err(Error::Truncation { tail: f64::INFINITY, limit: self.tail_tol });
        }
        let tail = self.tail_estimate(m, q);
        if tail > self.tail_tol {
            return Err(Error::Truncation { tail, limit: self.tail_tol });
        }
        Ok(tail)
    }

    pub fn bounds(&self, mag_b: f64, temperature: f64) -> (f64, f64) {
        (self.mu_span * temperature / mag_b, self.c_span * temperature.sqrt())
    }

    pub fn meta(&self, mag_b: f64, temperature: f64, tail: f64) -> QuadratureMeta {
        let (mu_max, c_max) = self.bounds(mag_b, temperature);
        QuadratureMeta { n_mu: self.n_mu(), n_c: self.n_c(), mu_max, c_max, tail }
    }

    fn check_scale(temperature: f64, mag_b: f64) -> Result<()> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(invalid(format!("temperature scale must be positive (got {temperature})")));
        }
        if !(mag_b > 0.0) {
            return Err(Error::DegenerateField { mag_b, x: [f64::NAN; 3] });
        }
        Ok(())
    }

    /// ∫∫ f(μ, c∥) dμ dc∥ over the truncated box, without any weight.
    pub fn integrate_mu<F: FnMut(f64, f64) -> f64>(&self, mag_b: f64, temperature: f64, mut f: F) -> Result<f64> {
        Self::check_scale(temperature, mag_b)?;
        let (mu_max, c_max) = self.bounds(mag_b, temperature);
        let mut sum = 0.0;
        for (mu, wm) in self.gl_mu.on(0.0, mu_max) {
            for (c, wc) in self.gl_c.on(-c_max, c_max) {
                sum += wm * wc * f(mu, c);
            }
        }
        Ok(sum)
    }

    /// ∫∫_𝒟 f(e, c∥) de dc∥ over e ≤ mu_span · T, without any weight.
    pub fn integrate_energy<F: FnMut(f64, f64) -> f64>(&self, temperature: f64, mut f: F) -> Result<f64> {
        Self::check_scale(temperature, 1.0)?;
        let w_max = (2.0 * self.mu_span * temperature).sqrt();
        let mut sum = 0.0;
        for (w, ww) in self.gl_mu.on(0.0, w_max) {
            for (s, ws) in self.gl_c.on(-1.0, 1.0) {
                sum += ww * ws * w * w * f(0.5 * w * w, w * s);
            }
        }
        Ok(sum)
    }

    /// ∫ G φ(e, c∥, μ) 2π de dc∥ using the configured coordinates.
    fn weighted<G, P>(&self, g: &G, sample: &FieldSample, t: f64, phi: P) -> Result<f64>
    where
        G: EnergyDistribution + ?Sized,
        P: Fn(f64, f64, f64) -> f64,
    {
        let x = &sample.x;
        let temp = g.temperature_scale(x, t);
        let mb = sample.mag_b;
        let v = match self.coordinates {
            Coordinates::Mu => {
                self.integrate_mu(mb, temp, |mu, c| {
                    let e = mu * mb + 0.5 * c * c;
                    g.value(x, e, c, t) * phi(e, c, mu)
                })? * 2.0
                    * PI
                    * mb
            }
            Coordinates::Energy => {
                self.integrate_energy(temp, |e, c| {
                    let mu = ((e - 0.5 * c * c) / mb).max(0.0);
                    g.value(x, e, c, t) * phi(e, c, mu)
                })? * 2.0
                    * PI
            }
        };
        if !v.is_finite() {
            return Err(invalid("moment integrand produced a non-finite value"));
        }
        Ok(v)
    }
}

/// n = ∫ G 2π de dc∥.
pub fn density<G: EnergyDistribution + ?Sized>(g: &G, sample: &FieldSample, t: f64, quad: &MomentQuadrature) -> Result<f64> {
    quad.check_order(0, 0)?;
    quad.weighted(g, sample, t, |_, _, _| 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pressures {
    pub p_perp: f64,
    pub p_par: f64,
    pub tensor: Mat3,
}

/// ℙ = p⊥ (Id − b⊗b) + p∥ b⊗b.
pub fn pressure_tensor(p_perp: f64, p_par: f64, b: &Vec3) -> Mat3 {
    let bb = b * b.transpose();
    (Mat3::identity() - bb) * p_perp + bb * p_par
}

pub fn pressures<G: EnergyDistribution + ?Sized>(g: &G, sample: &FieldSample, t: f64, quad: &MomentQuadrature) -> Result<Pressures> {
    quad.check_order(2, 1)?;
    let p_perp = quad.weighted(g, sample, t, |e, c, _| e - 0.5 * c * c)?;
    let p_par = quad.weighted(g, sample, t, |_, c, _| c * c)?;
    Ok(Pressures { p_perp, p_par, tensor: pressure_tensor(p_perp, p_par, &sample.b) })
}

/// M_{m,q} = ∫ 𝒢 c∥^m μ^q dμ dc∥; zero for negative indices.
pub fn general_moment<G: EnergyDistribution + ?Sized>(
    g: &G,
    m: i32,
    q: i32,
    sample: &FieldSample,
    t: f64,
    quad: &MomentQuadrature,
) -> Result<f64> {
    if m < 0 || q < 0 {
        return Ok(0.0);
    }
    quad.check_order(m, q)?;
    quad.weighted(g, sample, t, |_, c, mu| c.powi(m) * mu.powi(q))
}

/// Moments at a point; K entries are absent unless supplied and read as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub n: f64,
    pub p_perp: f64,
    pub p_par: f64,
    pub m: BTreeMap<(i32, i32), f64>,
    pub k: BTreeMap<(i32, i32), f64>,
    pub quadrature: QuadratureMeta,
}

impl MomentTable {
    pub fn get_m(&self, m: i32, q: i32) -> Result<f64> {
        if m < 0 || q < 0 {
            return Ok(0.0);
        }
        self.m
            .get(&(m, q))
            .copied()
            .ok_or_else(|| Error::Capability(format!("moment M({m},{q}) was not tabulated")))
    }

    pub fn get_k(&self, m: i32, q: i32) -> f64 {
        self.k.get(&(m, q)).copied().unwrap_or(0.0)
    }

    pub fn with_k(mut self, k: BTreeMap<(i32, i32), f64>, tol: f64) -> Result<Self> {
        check_k_flux(&k, tol)?;
        self.k = k;
        Ok(self)
    }
}

/// Supplied multiplier moments must carry no parallel flux: K(1,0) = 0.
pub fn check_k_flux(k: &BTreeMap<(i32, i32), f64>, tol: f64) -> Result<()> {
    let flux = k.get(&(1, 0)).copied().unwrap_or(0.0);
    if flux.abs() > tol {
        return Err(Error::Validation { key: "K(1,0)".into(), message: format!("flux {flux:e} exceeds {tol:e}") });
    }
    Ok(())
}

pub fn moment_table<G: EnergyDistribution + ?Sized>(
    g: &G,
    sample: &FieldSample,
    t: f64,
    quad: &MomentQuadrature,
    orders: &[(i32, i32)],
) -> Result<MomentTable> {
    let mut m = BTreeMap::new();
    let mut tail = 0.0f64;
    for &(a, b) in [(0, 0), (2, 0), (0, 1)].iter().chain(orders) {
        if a >= 0 && b >= 0 {
            tail = tail.max(quad.check_order(a, b)?);
        }
        m.insert((a, b), general_moment(g, a, b, sample, t, quad)?);
    }
    let temp = g.temperature_scale(&sample.x, t);
    Ok(MomentTable {
        n: m[&(0, 0)],
        p_perp: sample.mag_b * m[&(0, 1)],
        p_par: m[&(2, 0)],
        m,
        k: BTreeMap::new(),
        quadrature: quad.meta(sample.mag_b, temp, tail),
    })
}

/// Which moment a [`MomentField`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Density,
    PPerp,
    PPar,
    General(i32, i32),
}

/// A moment of G as a scalar field of x, evaluated by quadrature at every
/// call; spatial derivatives fall back to finite differences. Evaluation
/// failures read as NaN so that they surface in any downstream check.
#[derive(Clone)]
pub struct MomentField {
    pub g: Arc<dyn EnergyDistribution>,
    pub field: Arc<FieldConfiguration>,
    pub quad: Arc<MomentQuadrature>,
    pub kind: MomentKind,
}

impl MomentField {
    pub fn new(g: Arc<dyn EnergyDistribution>, field: Arc<FieldConfiguration>, quad: Arc<MomentQuadrature>, kind: MomentKind) -> Self {
        MomentField { g, field, quad, kind }
    }

    pub fn try_value(&self, x: &Vec3, t: f64) -> Result<f64> {
        let s = self.field.eval(x, t)?;
        let g = self.g.as_ref();
        match self.kind {
            MomentKind::Density => density(g, &s, t, &self.quad),
            MomentKind::PPerp => Ok(s.mag_b * general_moment(g, 0, 1, &s, t, &self.quad)?),
            MomentKind::PPar => general_moment(g, 2, 0, &s, t, &self.quad),
            MomentKind::General(m, q) => general_moment(g, m, q, &s, t, &self.quad),
        }
    }
}

impl ScalarField for MomentField {
    fn value(&self, x: &Vec3, t: f64) -> f64 {
        self.try_value(x, t).unwrap_or(f64::NAN)
    }
}

/// ∇·ℙ = ∇p⊥ + [b·∇(p∥ − p⊥) + (p∥ − p⊥)∇·b] b + (p∥ − p⊥)(b·∇)b.
pub fn div_pressure_tensor(p_perp: &dyn ScalarField, p_par: &dyn ScalarField, sample: &FieldSample, t: f64) -> Vec3 {
    let x = &sample.x;
    let gp = p_perp.gradient(x, t);
    let gl = p_par.gradient(x, t);
    let d = p_par.value(x, t) - p_perp.value(x, t);
    gp + sample.b * (sample.b.dot(&(gl - gp)) + d * sample.div_b) + sample.curvature * d
}

/// ∇·(p∥ b) − b·(n𝔽) + (b·∇|B|/|B|) p⊥ with n𝔽 = ∇·ℙ.
pub fn redundancy_residual(p_perp: &dyn ScalarField, p_par: &dyn ScalarField, sample: &FieldSample, t: f64) -> f64 {
    let x = &sample.x;
    let div_p_par_b = sample.b.dot(&p_par.gradient(x, t)) + p_par.value(x, t) * sample.div_b;
    let n_force = div_pressure_tensor(p_perp, p_par, sample, t);
    div_p_par_b - sample.b.dot(&n_force) + sample.b.dot(&sample.grad_mag_b) / sample.mag_b * p_perp.value(x, t)
}

/// One row of a moment table CSV: `x1,x2,x3,m,q,value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub m: i32,
    pub q: i32,
    pub value: f64,
}

pub const MOMENT_CSV_HEADER: [&str; 6] = ["x1", "x2", "x3", "m", "q", "value"];

/// Parse a moment table; the header must match exactly and values must be finite.
pub fn parse_moment_csv(text: &str) -> Result<Vec<MomentRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(MOMENT_CSV_HEADER.iter().copied()) {
        return Err(Error::Parse { line: 1, column: 1, message: format!("expected header {}", MOMENT_CSV_HEADER.join(",")) });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row: MomentRow = rec.deserialize(Some(&header)).map_err(|e| {
            let column = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.field().map_or(1, |f| f as usize + 1),
                _ => 1,
            };
            Error::Parse { line, column, message: e.to_string() }
        })?;
        let finite = [row.x1, row.x2, row.x3, row.value].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Parse { line, column: 1, message: "non-finite value".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, column: 1, message: e.to_string() }
}

pub fn write_moment_csv(rows: &[MomentRow]) -> String {
    let mut out = MOMENT_CSV_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{},{},{:.16e}\n",
            r.x1, r.x2, r.x3, r.m, r.q, r.value
        ));
    }
    out
}

/// Group K-moment rows by spatial point, checking the zero-flux condition at each.
pub fn k_tables_from_rows(rows: &[MomentRow], tol: f64) -> Result<Vec<(Vec3, BTreeMap<(i32, i32), f64>)>> {
    let mut out: Vec<(Vec3, BTreeMap<(i32, i32), f64>)> = Vec::new();
    for r in rows {
        let x = Vec3::new(r.x1, r.x2, r.x3);
        match out.iter_mut().find(|(y, _)| *y == x) {
            Some((_, map)) => {
                map.insert((r.m, r.q), r.value);
            }
            None => out.push((x, BTreeMap::from([((r.m, r.q), r.value)]))),
        }
    }
    for (_, k) in &out {
        check_k_flux(k, tol)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::BiMaxwellian;

    fn sample(mag_b: f64) -> FieldSample {
        FieldConfiguration::uniform(mag_b, Vec3::z()).eval(&Vec3::zeros(), 0.0).unwrap()
    }

    #[test]
    fn maxwellian_moments() {
        let g = BiMaxwellian::isotropic(1.7, 0.8);
        let s = sample(2.0);
        let q = MomentQuadrature::default();
        assert!((density(&g, &s, 0.0, &q).unwrap() / 1.7 - 1.0).abs() < 1e-12);
        let p = pressures(&g, &s, 0.0, &q).unwrap();
        assert!((p.p_perp / (1.7 * 0.8) - 1.0).abs() < 1e-12);
        assert!((p.p_par / (1.7 * 0.8) - 1.0).abs() < 1e-12);
        let m4 = general_moment(&g, 4, 0, &s, 0.0, &q).unwrap();
        assert!((m4 / (3.0 * 1.7 * 0.64) - 1.0).abs() < 1e-12);
        assert_eq!(general_moment(&g, -1, 0, &s, 0.0, &q).unwrap(), 0.0);
    }

    #[test]
    fn energy_route_agrees() {
        let g = BiMaxwellian::homogeneous(1.0, 1.3, 0.6);
        let s = sample(1.5);
        let qm = MomentQuadrature::default();
        let qe = MomentQuadrature::default().with_coordinates(Coordinates::Energy);
        let a = pressures(&g, &s, 0.0, &qm).unwrap();
        let b = pressures(&g, &s, 0.0, &qe).unwrap();
        assert!((a.p_perp - b.p_perp).abs() < 1e-12);
        assert!((a.p_par - b.p_par).abs() < 1e-12);
    }

    #[test]
    fn spec_defaults_truncate_too_early() {
        let q = MomentQuadrature::default().with_spans(18.0, 6.0);
        assert!(matches!(q.check_order(0, 0), Err(Error::Truncation { .. })));
        assert!(MomentQuadrature::default().check_order(4, 0).is_ok());
        assert!(MomentQuadrature::default().check_order(10, 0).is_err());
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let rows = vec![MomentRow { x1: 0.1, x2: -2.0, x3: 3.5e-7, m: 1, q: 0, value: 0.0 }];
        let text = write_moment_csv(&rows);
        assert_eq!(parse_moment_csv(&text).unwrap(), rows);
        let bad = "x1,x2,x3,m,q,value\n0,0,0,one,0,1\n";
        match parse_moment_csv(bad) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 4)),
            other => panic!("{other:?}"),
        }
        assert!(parse_moment_csv("a,b\n").is_err());
    }

    #[test]
    fn k_flux_validated() {
        let rows = vec![MomentRow { x1: 0.0, x2: 0.0, x3: 0.0, m: 1, q: 0, value: 0.3 }];
        assert!(k_tables_from_rows(&rows, 1e-12).is_err());
    }
}
