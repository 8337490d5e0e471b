//! Velocity coordinates: c ↔ (e, c∥, α), the magnetic moment and the local
//! perpendicular basis.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::field::FieldSample;
use crate::math::{unit, Vec3};

/// Threshold on |seed × b| below which the seed axis is rejected.
const SEED_DEGENERACY: f64 = 1e-8;

/// Orthonormal (e1, e2) with e1 × e2 = b; e1 is the normalized projection of
/// the seed, falling back to x̂, ŷ, ẑ in turn when the seed is parallel to b.
pub fn perp_basis(b: &Vec3, seed: &Vec3) -> (Vec3, Vec3) {
    // a canonical seed continues with the next canonical axes, anything else with x̂, ŷ, ẑ
    let first = (0..3).find(|&k| *seed == unit(k)).map_or(0, |k| k + 1);
    let order = std::iter::once(*seed).chain((0..3).map(|i| unit((first + i) % 3)));
    for axis in order {
        if axis.cross(b).norm() >= SEED_DEGENERACY {
            let e1 = (axis - b * axis.dot(b)).normalize();
            let e2 = b.cross(&e1);
            return (e1, e2);
        }
    }
    unreachable!("at least one canonical axis is transverse to a unit vector")
}

/// Local gyro frame: b, |B| and the perpendicular basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroFrame {
    pub b: Vec3,
    pub mag_b: f64,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl GyroFrame {
    pub fn new(sample: &FieldSample, seed: &Vec3) -> Self {
        let (e1, e2) = perp_basis(&sample.b, seed);
        GyroFrame { b: sample.b, mag_b: sample.mag_b, e1, e2 }
    }

    pub fn from_parts(b: Vec3, mag_b: f64, seed: &Vec3) -> Self {
        let (e1, e2) = perp_basis(&b, seed);
        GyroFrame { b, mag_b, e1, e2 }
    }

    /// Velocity at (e, c∥, α); the caller guarantees (e, c∥) is admissible.
    pub fn velocity_unchecked(&self, e: f64, c_par: f64, alpha: f64) -> Vec3 {
        let w = perp_speed(e, c_par);
        (self.e1 * alpha.cos() + self.e2 * alpha.sin()) * w + self.b * c_par
    }

    pub fn velocity(&self, e: f64, c_par: f64, alpha: f64) -> Result<Vec3> {
        check_admissible(e, c_par)?;
        Ok(self.velocity_unchecked(e, c_par, alpha))
    }

    pub fn coordinates(&self, c: &Vec3) -> (f64, f64, f64) {
        let e = 0.5 * c.norm_squared();
        let c_par = c.dot(&self.b);
        let c1 = c.dot(&self.e1);
        let c2 = c.dot(&self.e2);
        let alpha = if c1 == 0.0 && c2 == 0.0 { 0.0 } else { c2.atan2(c1).rem_euclid(TAU) };
        // rem_euclid may return TAU itself for tiny negative angles
        let alpha = if alpha >= TAU { 0.0 } else { alpha };
        (e, c_par, alpha)
    }
}

/// Phase-space point in gyro coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroPoint {
    pub x: Vec3,
    pub e: f64,
    pub c_par: f64,
    pub alpha: f64,
    pub mu: f64,
    pub e1: Vec3,
    pub e2: Vec3,
}

/// √(2e − c∥²), clamped at zero against roundoff on the boundary of the admissible set.
pub fn perp_speed(e: f64, c_par: f64) -> f64 {
    (2.0 * e - c_par * c_par).max(0.0).sqrt()
}

/// (e, c∥) admissible: e ≥ 0 and c∥² ≤ 2e up to a relative roundoff slack.
pub fn check_admissible(e: f64, c_par: f64) -> Result<()> {
    let slack = 8.0 * f64::EPSILON * (2.0 * e).abs().max(f64::MIN_POSITIVE);
    if !(e >= 0.0 && c_par.is_finite() && c_par * c_par <= 2.0 * e + slack) {
        return Err(Error::OutsideVelocityDomain { e, c_par });
    }
    Ok(())
}

pub fn to_gyro(c: &Vec3, sample: &FieldSample, seed: &Vec3) -> GyroPoint {
    let frame = GyroFrame::new(sample, seed);
    let (e, c_par, alpha) = frame.coordinates(c);
    GyroPoint {
        x: sample.x,
        e,
        c_par,
        alpha,
        mu: ((e - 0.5 * c_par * c_par) / sample.mag_b).max(0.0),
        e1: frame.e1,
        e2: frame.e2,
    }
}

pub fn from_gyro(e: f64, c_par: f64, alpha: f64, sample: &FieldSample, basis: (Vec3, Vec3)) -> Result<Vec3> {
    check_admissible(e, c_par)?;
    let w = perp_speed(e, c_par);
    Ok((basis.0 * alpha.cos() + basis.1 * alpha.sin()) * w + sample.b * c_par)
}

pub fn magnetic_moment(e: f64, c_par: f64, mag_b: f64) -> Result<f64> {
    if !(mag_b > 0.0) {
        return Err(Error::DegenerateField { mag_b, x: [f64::NAN; 3] });
    }
    check_admissible(e, c_par)?;
    Ok(((e - 0.5 * c_par * c_par) / mag_b).max(0.0))
}

/// Inverse of the magnetic moment: e = μ|B| + c∥²/2.
pub fn energy_from_moment(mu: f64, c_par: f64, mag_b: f64) -> f64 {
    mu * mag_b + 0.5 * c_par * c_par
}
