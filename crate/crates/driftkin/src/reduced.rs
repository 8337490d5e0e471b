//! Conservative transport of Ḡ in a straight uniform field.
//!
//! With B = B₀ẑ and an electric field independent of x₃ the constraint makes
//! Ḡ constant along field lines, so the state lives on a periodic transverse
//! grid (x₁, x₂) times Gauss-Legendre nodes in (μ, c∥). The only remaining
//! motion is the E×B drift, advanced by first-order upwind finite volumes.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::FieldConfiguration;
use crate::math::quadrature::GaussLegendre;
use crate::Vec3;

pub const DEFAULT_CFL: f64 = 0.5;

/// Relative tolerance for the uniformity and compressibility checks.
const UNIFORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct ReducedGrid {
    pub n1: usize,
    pub n2: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub mu: Vec<(f64, f64)>,
    pub c_par: Vec<(f64, f64)>,
}

impl ReducedGrid {
    pub fn new(n: [usize; 2], lower: [f64; 2], upper: [f64; 2], n_mu: usize, mu_max: f64, n_c: usize, c_max: f64) -> Result<Self> {
        if n[0] < 2 || n[1] < 2 || n_mu == 0 || n_c == 0 {
            return Err(invalid("reduced grid needs at least 2 cells per axis and one velocity node"));
        }
        if !(upper[0] > lower[0] && upper[1] > lower[1] && mu_max > 0.0 && c_max > 0.0) {
            return Err(invalid("reduced grid bounds must be ordered and velocity spans positive"));
        }
        Ok(Self {
            n1: n[0],
            n2: n[1],
            lower,
            upper,
            mu: GaussLegendre::new(n_mu).on(0.0, mu_max).collect(),
            c_par: GaussLegendre::new(n_c).on(-c_max, c_max).collect(),
        })
    }

    pub fn dx(&self) -> [f64; 2] {
        [(self.upper[0] - self.lower[0]) / self.n1 as f64, (self.upper[1] - self.lower[1]) / self.n2 as f64]
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        let d = self.dx();
        [self.lower[0] + (i as f64 + 0.5) * d[0], self.lower[1] + (j as f64 + 0.5) * d[1]]
    }

    fn cells(&self) -> usize {
        self.n1 * self.n2
    }

    fn slabs(&self) -> usize {
        self.mu.len() * self.c_par.len()
    }
}

/// Ḡ on the grid, one contiguous (x₁, x₂) slab per velocity node.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub grid: ReducedGrid,
    pub t: f64,
    pub g: Vec<f64>,
}

impl ReducedState {
    pub fn from_fn<F>(grid: ReducedGrid, t: f64, f: F) -> Self
    where
        F: Fn(f64, f64, f64, f64) -> f64,
    {
        let mut g = Vec::with_capacity(grid.cells() * grid.slabs());
        for &(mu, _) in &grid.mu {
            for &(c, _) in &grid.c_par {
                for i in 0..grid.n1 {
                    for j in 0..grid.n2 {
                        let [x1, x2] = grid.center(i, j);
                        g.push(f(x1, x2, mu, c));
                    }
                }
            }
        }
        Self { grid, t, g }
    }

    /// n(x₁, x₂) = ∫ 2πB₀ Ḡ dμ dc∥ per cell, row-major in (i, j).
    pub fn density(&self, b0: f64) -> Vec<f64> {
        let cells = self.grid.cells();
        let mut n = vec![0.0; cells];
        let mut slab = 0;
        for &(_, wm) in &self.grid.mu {
            for &(_, wc) in &self.grid.c_par {
                let w = 2.0 * PI * b0 * wm * wc;
                for (acc, g) in n.iter_mut().zip(&self.g[slab * cells..(slab + 1) * cells]) {
                    *acc += w * g;
                }
                slab += 1;
            }
        }
        n
    }

    pub fn mass(&self, b0: f64) -> f64 {
        let d = self.grid.dx();
        self.density(b0).iter().sum::<f64>() * d[0] * d[1]
    }

    /// Density-weighted centre of the transverse distribution (no unwrapping).
    pub fn centroid(&self, b0: f64) -> [f64; 2] {
        let n = self.density(b0);
        let (mut m, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for i in 0..self.grid.n1 {
            for j in 0..self.grid.n2 {
                let [x1, x2] = self.grid.center(i, j);
                let w = n[i * self.grid.n2 + j];
                m += w;
                s1 += w * x1;
                s2 += w * x2;
            }
        }
        [s1 / m, s2 / m]
    }

    /// Density snapshot with columns x1,x2,n.
    pub fn density_csv(&self, b0: f64) -> String {
        let n = self.density(b0);
        let mut out = String::from("x1,x2,n\n");
        for i in 0..self.grid.n1 {
            for j in 0..self.grid.n2 {
                let [x1, x2] = self.grid.center(i, j);
                out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", x1, x2, n[i * self.grid.n2 + j]));
            }
        }
        out
    }
}

pub struct ReducedStepper {
    field: Arc<FieldConfiguration>,
    b0: f64,
    pub cfl: f64,
}

impl std::fmt::Debug for ReducedStepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedStepper").field("b0", &self.b0).field("cfl", &self.cfl).finish()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedReport {
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub max_cfl: f64,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub relative_mass_drift: f64,
}

impl ReducedStepper {
    /// Fails with a geometry error unless B = B₀ẑ (B₀ > 0) over the grid.
    pub fn new(field: Arc<FieldConfiguration>, grid: &ReducedGrid) -> Result<Self> {
        let probe = [
            Vec3::new(grid.lower[0], grid.lower[1], 0.0),
            Vec3::new(grid.upper[0], grid.lower[1], 0.3),
            Vec3::new(grid.lower[0], grid.upper[1], -0.7),
            Vec3::new(0.5 * (grid.lower[0] + grid.upper[0]), 0.5 * (grid.lower[1] + grid.upper[1]), 1.1),
        ];
        let b = field.magnetic(&probe[0], 0.0);
        let b0 = b[2];
        if !(b0 > 0.0) || b[0].abs() + b[1].abs() > UNIFORM_TOL * b0 {
            return Err(Error::Geometry(format!("reduced transport needs B along +z, got {b:?}")));
        }
        for x in &probe[1..] {
            let bx = field.magnetic(x, 0.0);
            if (bx - b).norm() > UNIFORM_TOL * b0 {
                return Err(Error::Geometry(format!("reduced transport needs a uniform field, B varies at {x:?}")));
            }
        }
        Ok(Self { field, b0, cfl: DEFAULT_CFL })
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// E×B velocity (E₂, −E₁)/B₀ at a transverse point.
    pub fn drift(&self, x1: f64, x2: f64, t: f64) -> [f64; 2] {
        let e = self.field.electric_field(&Vec3::new(x1, x2, 0.0), t);
        [e[1] / self.b0, -e[0] / self.b0]
    }

    /// Normal velocities on the faces: v₁ on the lower x₁ face of cell (i, j), v₂ on its lower x₂ face.
    fn face_velocities(&self, grid: &ReducedGrid, t: f64) -> (Vec<f64>, Vec<f64>) {
        let d = grid.dx();
        let mut v1 = Vec::with_capacity(grid.cells());
        let mut v2 = Vec::with_capacity(grid.cells());
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                let [x1, x2] = grid.center(i, j);
                v1.push(self.drift(x1 - 0.5 * d[0], x2, t)[0]);
                v2.push(self.drift(x1, x2 - 0.5 * d[1], t)[1]);
            }
        }
        (v1, v2)
    }

    fn courant(grid: &ReducedGrid, v1: &[f64], v2: &[f64], dt: f64) -> f64 {
        let d = grid.dx();
        let (n1, n2) = (grid.n1, grid.n2);
        let mut worst: f64 = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                let c = i * n2 + j;
                let out1 = v1[((i + 1) % n1) * n2 + j].max(0.0) - v1[c].min(0.0);
                let out2 = v2[i * n2 + (j + 1) % n2].max(0.0) - v2[c].min(0.0);
                worst = worst.max(dt * (out1 / d[0] + out2 / d[1]));
            }
        }
        worst
    }

    /// Largest time step within the CFL limit at time t.
    pub fn suggest_dt(&self, grid: &ReducedGrid, t: f64) -> f64 {
        let (v1, v2) = self.face_velocities(grid, t);
        let c = Self::courant(grid, &v1, &v2, 1.0);
        if c == 0.0 {
            f64::INFINITY
        } else {
            self.cfl / c
        }
    }

    fn check_incompressible(grid: &ReducedGrid, v1: &[f64], v2: &[f64]) -> Result<()> {
        let d = grid.dx();
        let (n1, n2) = (grid.n1, grid.n2);
        let scale = v1.iter().chain(v2).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n1 {
            for j in 0..n2 {
                let c = i * n2 + j;
                let div = (v1[((i + 1) % n1) * n2 + j] - v1[c]) / d[0] + (v2[i * n2 + (j + 1) % n2] - v2[c]) / d[1];
                if div.abs() * d[0].min(d[1]) > 1e-6 * scale {
                    return Err(invalid(format!(
                        "E×B velocity is compressible at cell ({i}, {j}); the reduced model needs an electrostatic, x3-independent E"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One explicit upwind step; the CFL condition is checked before anything changes.
    pub fn step(&self, state: &mut ReducedState, dt: f64) -> Result<f64> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("time step must be positive and finite, got {dt}")));
        }
        let grid = &state.grid;
        let (v1, v2) = self.face_velocities(grid, state.t);
        Self::check_incompressible(grid, &v1, &v2)?;
        let courant = Self::courant(grid, &v1, &v2, dt);
        if courant > self.cfl {
            return Err(Error::Stability(format!(
                "Courant number {courant:.4} exceeds {}; largest stable dt is {:.6e}",
                self.cfl,
                dt * self.cfl / courant
            )));
        }
        let d = grid.dx();
        let (n1, n2) = (grid.n1, grid.n2);
        let (r1, r2) = (dt / d[0], dt / d[1]);
        state.g.par_chunks_mut(grid.cells()).for_each(|slab| {
            let old = slab.to_vec();
            let upwind = |v: f64, left: f64, right: f64| if v >= 0.0 { v * left } else { v * right };
            // flux through the lower face of every cell; the upper face of (i, j) is the lower face of its neighbour
            let f1: Vec<f64> = (0..n1 * n2)
                .map(|c| {
                    let (i, j) = (c / n2, c % n2);
                    upwind(v1[c], old[((i + n1 - 1) % n1) * n2 + j], old[c])
                })
                .collect();
            let f2: Vec<f64> = (0..n1 * n2)
                .map(|c| {
                    let (i, j) = (c / n2, c % n2);
                    upwind(v2[c], old[i * n2 + (j + n2 - 1) % n2], old[c])
                })
                .collect();
            for i in 0..n1 {
                for j in 0..n2 {
                    let c = i * n2 + j;
                    slab[c] = old[c] - r1 * (f1[((i + 1) % n1) * n2 + j] - f1[c]) - r2 * (f2[i * n2 + (j + 1) % n2] - f2[c]);
                }
            }
        });
        state.t += dt;
        Ok(courant)
    }
}

/// Advance `n_steps` steps of size dt and report mass bookkeeping.
pub fn step_reduced_transport(stepper: &ReducedStepper, state: &mut ReducedState, dt: f64, n_steps: usize) -> Result<ReducedReport> {
    let mass_initial = state.mass(stepper.b0);
    let mut max_cfl: f64 = 0.0;
    for _ in 0..n_steps {
        max_cfl = max_cfl.max(stepper.step(state, dt)?);
    }
    let mass_final = state.mass(stepper.b0);
    Ok(ReducedReport {
        steps: n_steps,
        dt,
        t_final: state.t,
        max_cfl,
        mass_initial,
        mass_final,
        relative_mass_drift: (mass_final - mass_initial).abs() / mass_initial.abs().max(f64::MIN_POSITIVE),
    })
}
