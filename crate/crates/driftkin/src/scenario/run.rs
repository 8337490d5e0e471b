use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use super::suite::{self, sample_points};
use super::{RunKind, Scenario};
use crate::drifts::drift_csv;
use crate::error::{Error, Result};
use crate::fast_motion::{epsilon_sweep, integrate_fast_motion, FastOptions, FullOptions};
use crate::field::FieldConfiguration;
use crate::math::Vec3;
use crate::moments::MomentQuadrature;
use crate::parallel::{solve_line_problem, Gauge, LineProblem, DEFAULT_TOL_COMPAT};
use crate::reduced::{step_reduced_transport, ReducedGrid, ReducedState, ReducedStepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    /// pass iff value ≤ tolerance
    #[serde(rename = "<=")]
    AtMost,
    /// pass iff value ≥ tolerance
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub run: RunKind,
    pub seed: u64,
    pub field: &'static str,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// run-specific data behind the checks
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: Report,
    pub csv: String,
}

impl RunOutput {
    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.report.checks.iter().filter(|c| !c.pass)
    }
}

const VERIFY_CHECKS: [(&str, f64); 38] = [
    ("field.unit_b", 1e-12),
    ("field.b_dot_curvature", 1e-10),
    ("field.grad_b_b", 1e-10),
    ("field.divergence_identity", 1e-8),
    ("field.divergence_free", 1e-8),
    // node deviation in units of tol × arc length
    ("field_line.helix", 1.0),
    ("frame.round_trip", 1e-12),
    ("frame.moment_round_trip", 1e-12),
    ("gyro.pi_l", 1e-10),
    ("gyro.l_inverse", 1e-8),
    ("gyro.pi_l_inverse", 1e-10),
    ("gyro.basis_rotation", 1e-9),
    ("gyro.pi_c_gamma1", 1e-7),
    ("gyro.pi_cc_gamma1_contracted", 1e-7),
    ("gyro.commutation", 1e-7),
    ("moments.density", 1e-8),
    ("moments.p_perp", 1e-8),
    ("moments.p_par", 1e-8),
    ("moments.div_pressure", 1e-6),
    ("moments.redundancy", 1e-7),
    ("moments.coordinates", 1e-9),
    ("drifts.force_balance", 1e-8),
    ("drifts.decomposition", 1e-9),
    ("transport.conservative_form", 1e-7),
    ("transport.c_dagger", 1e-7),
    ("transport.explicit_model", 1e-7),
    ("transport.moment_identities", 1e-7),
    ("transport.mass_conservation", 1e-7),
    ("transport.p_par_equation", 1e-7),
    ("transport.p_perp_equation", 1e-7),
    ("fast_motion.w_drift", f64::NAN),
    ("fast_motion.mu_drift", 0.0),
    ("fast_motion.turning_points", 1e-6),
    ("fast_motion.mirror_points", 1e-6),
    ("parallel.reduced_analytic", 1e-4),
    ("parallel.observed_order", 1.9),
    ("reduced.mass_drift", 1e-12),
    ("reduced.exb_speed", 0.01),
];

fn comparison(name: &str) -> Comparison {
    match name {
        "parallel.observed_order" | "convergence.slope" => Comparison::AtLeast,
        _ => Comparison::AtMost,
    }
}

/// Names of the checks a run reports.
pub fn check_names(run: RunKind) -> Vec<String> {
    let names: Vec<&str> = match run {
        RunKind::Verify => VERIFY_CHECKS.iter().map(|c| c.0).collect(),
        RunKind::Trajectories => vec!["fast_motion.w_drift", "fast_motion.mu_drift"],
        RunKind::Upar => vec!["parallel.reduced_analytic", "parallel.observed_order", "parallel.residual"],
        RunKind::Drifts => vec!["drifts.force_balance", "drifts.decomposition"],
        RunKind::Convergence => vec!["convergence.slope"],
        RunKind::ReducedTransport => vec!["reduced.mass_drift"],
    };
    names.into_iter().map(String::from).collect()
}

/// Threshold used when the scenario does not override it.
pub fn default_tolerance(name: &str, s: &Scenario) -> f64 {
    match name {
        "fast_motion.w_drift" => 10.0 * s.numerics.fast_tol,
        "convergence.slope" => 1.0,
        "parallel.residual" => 1e-8,
        _ => VERIFY_CHECKS.iter().find(|c| c.0 == name).map_or(f64::NAN, |c| c.1),
    }
}

struct Checks<'a> {
    scenario: &'a Scenario,
    list: Vec<Check>,
}

impl Checks<'_> {
    fn add(&mut self, name: &str, value: f64) {
        let tolerance = self.scenario.tolerance(name);
        let comparison = comparison(name);
        let pass = match comparison {
            Comparison::AtMost => value <= tolerance,
            Comparison::AtLeast => value >= tolerance,
        };
        self.list.push(Check { name: name.to_string(), value, tolerance, comparison, pass });
    }
}

fn ctx<T>(r: Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| e.context(what))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Execute a validated scenario. The run kind must be set.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput> {
    let run = s.run.ok_or_else(|| Error::Validation { key: "run".into(), message: "no run selected".into() })?;
    let mut checks = Checks { scenario: s, list: Vec::new() };
    let (details, csv) = match run {
        RunKind::Verify => verify(s, &mut checks)?,
        RunKind::Trajectories => trajectories(s, &mut checks)?,
        RunKind::Upar => upar(s, &mut checks)?,
        RunKind::Drifts => drifts(s, &mut checks)?,
        RunKind::Convergence => convergence(s, &mut checks)?,
        RunKind::ReducedTransport => reduced_transport(s, &mut checks)?,
    };
    let list = checks.list;
    let csv = if run == RunKind::Verify { checks_csv(&list) } else { csv };
    Ok(RunOutput {
        report: Report {
            scenario: s.name.clone(),
            run,
            seed: s.seed,
            field: s.field.kind,
            pass: list.iter().all(|c| c.pass),
            checks: list,
            details,
        },
        csv,
    })
}

fn checks_csv(list: &[Check]) -> String {
    let mut out = String::from("name,value,tolerance,comparison,pass\n");
    for c in list {
        let cmp = match c.comparison {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        };
        out.push_str(&format!("{},{:.16e},{:.16e},{},{}\n", c.name, c.value, c.tolerance, cmp, c.pass));
    }
    out
}

fn quadrature(s: &Scenario) -> MomentQuadrature {
    MomentQuadrature::new(s.numerics.quad_n_mu, s.numerics.quad_n_c).with_spans(s.numerics.mu_span, s.numerics.c_span)
}

fn verify(s: &Scenario, checks: &mut Checks) -> Result<(Value, String)> {
    let n = &s.numerics;
    let field = Arc::new(s.field.build());
    let plasma = s.distribution.build();
    let points = sample_points(n.points, s.seed);
    let t = n.time;
    let quad = quadrature(s);

    let fr = ctx(suite::field_identities(&field, &points, t), "field_model")?;
    checks.add("field.unit_b", fr.unit_b);
    checks.add("field.b_dot_curvature", fr.b_dot_curvature);
    checks.add("field.grad_b_b", fr.grad_b_b);
    checks.add("field.divergence_identity", fr.divergence_identity);
    checks.add("field.divergence_free", fr.div_free);
    let (b0, r0, q0, q2) = suite::pinch_parameters(&field).unwrap_or((1.0, 3.0, 1.2, 0.8));
    let helix = ctx(suite::helix_deviation(b0, r0, q0, q2, &Vec3::new(0.4, 0.1, 0.0), 20.0, 1e-9), "field_model/trace_field_line")?;
    checks.add("field_line.helix", helix);

    let fm = ctx(suite::frame_round_trip(&field, &points, t), "velocity_frame")?;
    checks.add("frame.round_trip", fm.round_trip);
    checks.add("frame.moment_round_trip", fm.moment_round_trip);

    let gc = ctx(suite::gyro_calculus(&field, &points, n.n_alpha, n.tol_solv, t), "gyro_ops/pseudo_inverse")?;
    checks.add("gyro.pi_l", gc.pi_l);
    checks.add("gyro.l_inverse", gc.l_inverse);
    checks.add("gyro.pi_l_inverse", gc.pi_l_inverse);
    checks.add("gyro.basis_rotation", gc.basis_rotation);
    let cf = ctx(suite::closed_forms(&field, &plasma, &points, n.n_alpha, t), "gyro_ops/closed_forms")?;
    checks.add("gyro.pi_c_gamma1", cf.pi_c_gamma1);
    checks.add("gyro.pi_cc_gamma1_contracted", cf.pi_cc_gamma1_contracted);
    let comm = ctx(suite::commutation(&field, &points, n.n_alpha, t), "gyro_ops/commutation_residuals")?;
    checks.add("gyro.commutation", comm);

    let x_ref = points[0].0;
    let d = &s.distribution;
    let mx = ctx(suite::maxwellian_moments(&field, d.n.base, d.t_perp.base, d.t_par.base, &x_ref, &quad), "moments/pressures")?;
    checks.add("moments.density", mx.density);
    checks.add("moments.p_perp", mx.p_perp);
    checks.add("moments.p_par", mx.p_par);
    let dp = ctx(suite::pressure_divergence(&field, &plasma, &points, t), "moments/div_pressure_tensor")?;
    checks.add("moments.div_pressure", dp);
    let few = &points[..points.len().min(3)];
    let red = ctx(
        suite::redundancy(field.clone(), Arc::new(plasma), Arc::new(quad.clone()), few, t),
        "moments/redundancy_residual",
    )?;
    checks.add("moments.redundancy", red);
    let coords = ctx(suite::coordinate_equivalence(&field, &plasma, &quad, &points, t), "moments/moment_table")?;
    checks.add("moments.coordinates", coords);

    let dr = ctx(suite::drift_consistency(field.clone(), &plasma, &points, t), "drift_kinematics")?;
    checks.add("drifts.force_balance", dr.force_balance);
    checks.add("drifts.decomposition", dr.decomposition);

    let tr = ctx(suite::transport_forms(field.clone(), &plasma, &points, t), "transport_residual")?;
    checks.add("transport.conservative_form", tr.conservative_form);
    checks.add("transport.c_dagger", tr.c_dagger);
    checks.add("transport.explicit_model", tr.explicit_model);
    let mh = ctx(suite::moment_hierarchy(field.clone(), &plasma, &quad, &x_ref, t), "transport_residual/moment_hierarchy")?;
    checks.add("transport.moment_identities", mh.identities);
    checks.add("transport.mass_conservation", mh.mass_conservation);
    checks.add("transport.p_par_equation", mh.p_par_equation);
    checks.add("transport.p_perp_equation", mh.p_perp_equation);

    let mb = ctx(suite::mirror_bounce(n.fast_tol, n.bounce_periods), "fast_motion/integrate_fast_motion")?;
    checks.add("fast_motion.w_drift", mb.w_drift);
    checks.add("fast_motion.mu_drift", mb.mu_drift);
    checks.add("fast_motion.turning_points", mb.turning_points);
    checks.add("fast_motion.mirror_points", mb.mirror_points);

    let ra = ctx(suite::upar_reduced_error(n.upar_cells), "parallel_elliptic/solve_u_parallel")?;
    checks.add("parallel.reduced_analytic", ra);
    let study = ctx(suite::upar_manufactured(&n.cells), "parallel_elliptic/solve_u_parallel")?;
    checks.add("parallel.observed_order", study.min_order());

    let mass = ctx(suite::reduced_mass_drift(n.grid, n.steps), "reduced/step_reduced_transport")?;
    checks.add("reduced.mass_drift", mass);
    let (speed, exb) = ctx(suite::reduced_exb_speed(n.exb_grid, 0.5, 2.0), "reduced/step_reduced_transport")?;
    checks.add("reduced.exb_speed", exb);

    let details = json!({
        "points": n.points,
        "field": to_value(&fr),
        "helix": helix,
        "frame": to_value(&fm),
        "gyro": to_value(&gc),
        "closed_forms": to_value(&cf),
        "maxwellian": to_value(&mx),
        "drifts": to_value(&dr),
        "transport": to_value(&tr),
        "hierarchy": to_value(&mh),
        "mirror": to_value(&mb),
        "upar_refinement": to_value(&study),
        "exb_speed": speed,
    });
    Ok((details, String::new()))
}

fn trajectories(s: &Scenario, checks: &mut Checks) -> Result<(Value, String)> {
    let n = &s.numerics;
    let field = s.field.build();
    let tr = ctx(
        integrate_fast_motion(
            &field,
            &Vec3::from(n.x0),
            n.c_par0,
            n.mu,
            n.time,
            n.tau_end,
            FastOptions::new(n.fast_tol),
            crate::drifts::zero_force,
        ),
        "fast_motion/integrate_fast_motion",
    )?;
    checks.add("fast_motion.w_drift", tr.max_w_drift());
    checks.add("fast_motion.mu_drift", (tr.mu - n.mu).abs());
    let turning: Vec<Value> = tr.turning_points().iter().map(|p| json!({ "tau": p.tau, "s": p.s, "x": [p.x[0], p.x[1], p.x[2]] })).collect();
    let details = json!({
        "samples": tr.tau.len(),
        "tau_end": tr.tau.last().copied().unwrap_or(0.0),
        "exited": tr.exited,
        "turning_points": turning,
    });
    Ok((details, tr.csv()))
}

fn upar(s: &Scenario, checks: &mut Checks) -> Result<(Value, String)> {
    let n = &s.numerics;
    let ra = ctx(suite::upar_reduced_error(n.upar_cells), "parallel_elliptic/solve_u_parallel")?;
    let study = ctx(suite::upar_manufactured(&n.cells), "parallel_elliptic/solve_u_parallel")?;
    let finest = *n.cells.last().unwrap_or(&n.upar_cells);
    let problem = ctx(
        LineProblem::from_profiles(suite::MANUFACTURED_PERIOD, finest, suite::manufactured_coefficients, &suite::manufactured_rhs),
        "parallel_elliptic/assemble_parallel_operator",
    )?;
    let (_, sol) = ctx(solve_line_problem(&problem, Gauge::ZeroMean, DEFAULT_TOL_COMPAT), "parallel_elliptic/solve_u_parallel")?;
    checks.add("parallel.reduced_analytic", ra);
    checks.add("parallel.observed_order", study.min_order());
    checks.add("parallel.residual", sol.report.residual);
    let mut csv = String::from("s,u_par,u_exact\n");
    for (x, u) in sol.s.iter().zip(&sol.u_par) {
        csv.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", x, u, suite::manufactured_u(*x)));
    }
    let details = json!({ "reduced_max_error": ra, "refinement": to_value(&study), "solve": to_value(&sol.report) });
    Ok((details, csv))
}

fn drifts(s: &Scenario, checks: &mut Checks) -> Result<(Value, String)> {
    let n = &s.numerics;
    let field = Arc::new(s.field.build());
    let plasma = s.distribution.build();
    let points = sample_points(n.points, s.seed);
    let dr = ctx(suite::drift_consistency(field.clone(), &plasma, &points, n.time), "drift_kinematics")?;
    checks.add("drifts.force_balance", dr.force_balance);
    checks.add("drifts.decomposition", dr.decomposition);
    let rows = ctx(suite::drift_table(field, &plasma, &points, n.time), "drift_kinematics/drift_velocities")?;
    Ok((json!({ "points": rows.len(), "residuals": to_value(&dr) }), drift_csv(&rows)))
}

fn convergence(s: &Scenario, checks: &mut Checks) -> Result<(Value, String)> {
    let n = &s.numerics;
    let field = s.field.build();
    let opts = FullOptions { dt_frac: n.dt_frac, ..FullOptions::default() };
    let report = ctx(
        epsilon_sweep(&field, &Vec3::from(n.x0), &Vec3::from(n.v0), &n.epsilons, n.t_end, opts, n.fast_tol),
        "fast_motion/epsilon_sweep",
    )?;
    checks.add("convergence.slope", report.slope);
    let mut csv = String::from("epsilon,error\n");
    for (e, err) in report.epsilon.iter().zip(&report.error) {
        csv.push_str(&format!("{e:.16e},{err:.16e}\n"));
    }
    Ok((to_value(&report), csv))
}

fn reduced_transport(s: &Scenario, checks: &mut Checks) -> Result<(Value, String)> {
    let n = &s.numerics;
    let field: Arc<FieldConfiguration> = Arc::new(s.field.build());
    let grid = ctx(ReducedGrid::new([n.grid, n.grid], [0.0, 0.0], [1.0, 1.0], 4, 6.0, 6, 4.0), "reduced/grid")?;
    let stepper = ctx(ReducedStepper::new(field, &grid), "reduced/stepper")?.with_cfl(n.cfl);
    let dt = 0.8 * stepper.suggest_dt(&grid, n.time);
    // with no drift at all the step only sets the clock
    let dt = if dt.is_finite() { dt } else { n.t_end / n.steps as f64 };
    let mut state = ReducedState::from_fn(grid, n.time, suite::reduced_pulse);
    let b0 = stepper.b0();
    let c0 = state.centroid(b0);
    let report = ctx(step_reduced_transport(&stepper, &mut state, dt, n.steps), "reduced/step_reduced_transport")?;
    let c1 = state.centroid(b0);
    checks.add("reduced.mass_drift", report.relative_mass_drift);
    let elapsed = report.t_final - n.time;
    let velocity = [(c1[0] - c0[0]) / elapsed, (c1[1] - c0[1]) / elapsed];
    let details = json!({
        "stepping": to_value(&report),
        "centroid_initial": c0,
        "centroid_final": c1,
        "centroid_velocity": velocity,
    });
    Ok((details, state.density_csv(b0)))
}

/// Write `report.json` and `<run>.csv` into `dir`, creating it if needed.
pub fn write_outputs(out: &RunOutput, s: &Scenario, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let json = if s.output.pretty { serde_json::to_string_pretty(&out.report) } else { serde_json::to_string(&out.report) }
        .map_err(|e| Error::Io(e.to_string()))?;
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
    };
    write("report.json", &(json + "\n"))?;
    if s.output.csv {
        write(&format!("{}.csv", out.report.run.name()), &out.csv)?;
    }
    Ok(())
}
