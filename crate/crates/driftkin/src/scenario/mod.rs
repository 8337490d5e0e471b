//! Declarative scenario files and the batch runs they drive.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! run = "verify"
//! seed = 7
//!
//! [field]
//! kind = "screw_pinch"
//! b0 = 1.0
//!
//! [numerics]
//! points = 50
//!
//! [tolerances]
//! "gyro.pi_l" = 1e-10
//! ```
//!
//! Unknown keys anywhere are rejected. Every numeric setting has a default.

mod run;
pub mod suite;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distribution::{BiMaxwellian, Profile};
use crate::error::{Error, Result};
use crate::field::{ElectricField, FieldConfiguration, FieldKind, Modulation};
use crate::math::Vec3;

pub use run::{check_names, default_tolerance, run_scenario, write_outputs, Check, Comparison, Report, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Verify,
    Trajectories,
    Upar,
    Drifts,
    Convergence,
    ReducedTransport,
}

impl RunKind {
    pub const ALL: [RunKind; 6] =
        [RunKind::Verify, RunKind::Trajectories, RunKind::Upar, RunKind::Drifts, RunKind::Convergence, RunKind::ReducedTransport];

    pub fn name(self) -> &'static str {
        match self {
            RunKind::Verify => "verify",
            RunKind::Trajectories => "trajectories",
            RunKind::Upar => "upar",
            RunKind::Drifts => "drifts",
            RunKind::Convergence => "convergence",
            RunKind::ReducedTransport => "reduced_transport",
        }
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        RunKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Validation {
            key: "run".into(),
            message: format!("unknown run `{s}`; expected one of {}", RunKind::ALL.map(|k| k.name()).join(", ")),
        })
    }
}

/// Field kinds a scenario file may name.
pub const FIELD_KINDS: [&str; 4] = ["uniform", "gradient_slab", "screw_pinch", "axisymmetric_mirror"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSpec {
    pub amplitude: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElectricSpec {
    Zero,
    Uniform { e0: [f64; 3] },
    Oscillating { e0: [f64; 3], amplitude: f64, omega: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSpec {
    pub kind: &'static str,
    pub b0: f64,
    pub direction: [f64; 3],
    pub kappa: f64,
    pub major_radius: f64,
    pub q0: f64,
    pub q2: f64,
    pub length: f64,
    pub electric: ElectricSpec,
    pub modulation: Option<ModulationSpec>,
}

impl FieldSpec {
    pub fn build(&self) -> FieldConfiguration {
        let base = match self.kind {
            "uniform" => FieldConfiguration::uniform(self.b0, Vec3::from(self.direction)),
            "gradient_slab" => FieldConfiguration::gradient_slab(self.b0, self.kappa),
            "screw_pinch" => FieldConfiguration::screw_pinch(self.b0, self.major_radius, self.q0, self.q2),
            _ => FieldConfiguration::mirror(self.b0, self.length),
        };
        let base = match self.electric {
            ElectricSpec::Zero => base,
            ElectricSpec::Uniform { e0 } => base.with_electric(ElectricField::Uniform(Vec3::from(e0))),
            ElectricSpec::Oscillating { e0, amplitude, omega } => {
                base.with_electric(ElectricField::Oscillating { e0: Vec3::from(e0), amplitude, omega })
            }
        };
        match self.modulation {
            Some(m) => base.with_modulation(Modulation { amplitude: m.amplitude, omega: m.omega }),
            None => base,
        }
    }

    pub fn field_kind(&self) -> FieldKind {
        match self.kind {
            "uniform" => FieldKind::Uniform,
            "gradient_slab" => FieldKind::GradientSlab,
            "screw_pinch" => FieldKind::ScrewPinch,
            _ => FieldKind::AxisymmetricMirror,
        }
    }
}

/// base·(1 + gradient·x + amplitude·sin(wave·x + phase))·(1 + rate·t)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub base: f64,
    #[serde(default)]
    pub gradient: [f64; 3],
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub wave: [f64; 3],
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub rate: f64,
}

impl ProfileSpec {
    fn constant(base: f64) -> Self {
        ProfileSpec { base, gradient: [0.0; 3], amplitude: 0.0, wave: [0.0; 3], phase: 0.0, rate: 0.0 }
    }

    pub fn profile(&self) -> Profile {
        Profile::linear(self.base, Vec3::from(self.gradient))
            .with_wave(self.amplitude, Vec3::from(self.wave), self.phase)
            .with_rate(self.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionSpec {
    pub kind: &'static str,
    pub n: ProfileSpec,
    pub t_perp: ProfileSpec,
    pub t_par: ProfileSpec,
}

impl DistributionSpec {
    pub fn build(&self) -> BiMaxwellian {
        BiMaxwellian { n: self.n.profile(), t_perp: self.t_perp.profile(), t_par: self.t_par.profile() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// random phase-space points per check
    pub points: usize,
    pub n_alpha: usize,
    pub tol_solv: f64,
    pub quad_n_mu: usize,
    pub quad_n_c: usize,
    pub mu_span: f64,
    pub c_span: f64,
    /// evaluation time for time-dependent checks
    pub time: f64,
    /// fast-motion integrator tolerance
    pub fast_tol: f64,
    pub bounce_periods: f64,
    pub x0: [f64; 3],
    pub c_par0: f64,
    pub mu: f64,
    pub tau_end: f64,
    pub epsilons: Vec<f64>,
    pub v0: [f64; 3],
    pub t_end: f64,
    pub dt_frac: f64,
    pub cells: Vec<usize>,
    pub upar_cells: usize,
    pub grid: usize,
    pub exb_grid: usize,
    pub steps: usize,
    pub cfl: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            points: 50,
            n_alpha: crate::gyro::DEFAULT_N_ALPHA,
            tol_solv: crate::gyro::DEFAULT_TOL_SOLV,
            quad_n_mu: 64,
            quad_n_c: 64,
            mu_span: 36.0,
            c_span: 8.5,
            time: 0.3,
            fast_tol: 1e-9,
            bounce_periods: 10.0,
            x0: [0.3, 0.0, 0.0],
            c_par0: 1.0,
            mu: 1.0,
            tau_end: 20.0,
            epsilons: vec![0.1, 0.05, 0.025],
            v0: [0.0, 0.6, 0.5],
            t_end: 2.0,
            dt_frac: 1.0 / 20.0,
            cells: vec![32, 64, 128, 256],
            upar_cells: 256,
            grid: 64,
            exb_grid: 128,
            steps: 100,
            cfl: crate::reduced::DEFAULT_CFL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// used when the command line gives no output directory
    pub dir: Option<String>,
    pub csv: bool,
    pub pretty: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, csv: true, pretty: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    /// `None` when the file leaves the run to the command line
    pub run: Option<RunKind>,
    pub seed: u64,
    pub field: FieldSpec,
    pub distribution: DistributionSpec,
    pub numerics: Numerics,
    pub output: OutputSpec,
    /// per-check overrides of the default thresholds
    pub tolerances: BTreeMap<String, f64>,
}

impl Scenario {
    /// Fix the run kind; a different kind already named in the file is an error.
    pub fn with_run(mut self, run: RunKind) -> Result<Self> {
        match self.run {
            Some(r) if r != run => Err(Error::Validation {
                key: "run".into(),
                message: format!("scenario declares `{r}` but `{run}` was requested"),
            }),
            _ => {
                self.run = Some(run);
                Ok(self)
            }
        }
    }

    pub fn tolerance(&self, check: &str) -> f64 {
        self.tolerances.get(check).copied().unwrap_or_else(|| default_tolerance(check, self))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    run: Option<String>,
    seed: Option<u64>,
    field: RawField,
    distribution: Option<RawDistribution>,
    #[serde(default)]
    numerics: Numerics,
    #[serde(default)]
    output: OutputSpec,
    #[serde(default)]
    tolerances: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    kind: String,
    b0: Option<f64>,
    direction: Option<[f64; 3]>,
    kappa: Option<f64>,
    major_radius: Option<f64>,
    q0: Option<f64>,
    q2: Option<f64>,
    length: Option<f64>,
    electric: Option<RawElectric>,
    modulation: Option<ModulationSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElectric {
    kind: String,
    e0: Option<[f64; 3]>,
    amplitude: Option<f64>,
    omega: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    kind: String,
    n: Option<ProfileSpec>,
    temperature: Option<ProfileSpec>,
    t_perp: Option<ProfileSpec>,
    t_par: Option<ProfileSpec>,
}

fn verr(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation { key: key.into(), message: message.into() }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(verr(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(verr(key, format!("must be positive and finite, got {v}")))
    }
}

fn finite3(key: &str, v: [f64; 3]) -> Result<[f64; 3]> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(verr(key, "components must be finite"))
    }
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        Error::Parse { line, column, message: e.message().to_string() }
    })?;
    validate(raw)
}

fn validate(raw: RawScenario) -> Result<Scenario> {
    let run = raw.run.as_deref().map(RunKind::from_str).transpose()?;
    let field = validate_field(raw.field)?;
    let distribution = validate_distribution(raw.distribution)?;
    validate_numerics(&raw.numerics)?;
    let scenario = Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        run,
        seed: raw.seed.unwrap_or(1),
        field,
        distribution,
        numerics: raw.numerics,
        output: raw.output,
        tolerances: BTreeMap::new(),
    };
    let known = match run {
        Some(r) => check_names(r),
        None => RunKind::ALL.iter().flat_map(|r| check_names(*r)).collect(),
    };
    let mut scenario = scenario;
    for (name, tol) in raw.tolerances {
        let key = format!("tolerances.{name}");
        if !known.contains(&name) {
            return Err(verr(key, "no check with this name in the selected run"));
        }
        positive(&key, tol)?;
        scenario.tolerances.insert(name, tol);
    }
    Ok(scenario)
}

fn validate_field(raw: RawField) -> Result<FieldSpec> {
    let kind = match raw.kind.as_str() {
        "mirror" => "axisymmetric_mirror",
        k => FIELD_KINDS.into_iter().find(|n| *n == k).ok_or_else(|| {
            verr("field.kind", format!("unknown field kind `{k}`; valid kinds: {} (alias: mirror)", FIELD_KINDS.join(", ")))
        })?,
    };
    let allowed: &[&str] = match kind {
        "uniform" => &["direction"],
        "gradient_slab" => &["kappa"],
        "screw_pinch" => &["major_radius", "q0", "q2"],
        _ => &["length"],
    };
    let given = [
        ("direction", raw.direction.is_some()),
        ("kappa", raw.kappa.is_some()),
        ("major_radius", raw.major_radius.is_some()),
        ("q0", raw.q0.is_some()),
        ("q2", raw.q2.is_some()),
        ("length", raw.length.is_some()),
    ];
    for (key, present) in given {
        if present && !allowed.contains(&key) {
            return Err(verr(format!("field.{key}"), format!("not a parameter of the {kind} field")));
        }
    }
    let direction = finite3("field.direction", raw.direction.unwrap_or([0.0, 0.0, 1.0]))?;
    if Vec3::from(direction).norm() == 0.0 {
        return Err(verr("field.direction", "must be nonzero"));
    }
    let q2 = finite("field.q2", raw.q2.unwrap_or(0.8))?;
    if q2 < 0.0 {
        return Err(verr("field.q2", "must be non-negative"));
    }
    let electric = match raw.electric {
        None => ElectricSpec::Zero,
        Some(e) => validate_electric(e)?,
    };
    if let Some(m) = raw.modulation {
        finite("field.modulation.amplitude", m.amplitude)?;
        finite("field.modulation.omega", m.omega)?;
        if m.amplitude.abs() >= 1.0 {
            return Err(verr("field.modulation.amplitude", "|amplitude| must be below 1 to keep |B| positive"));
        }
    }
    Ok(FieldSpec {
        kind,
        b0: positive("field.b0", raw.b0.unwrap_or(1.0))?,
        direction,
        kappa: finite("field.kappa", raw.kappa.unwrap_or(0.2))?,
        major_radius: positive("field.major_radius", raw.major_radius.unwrap_or(3.0))?,
        q0: positive("field.q0", raw.q0.unwrap_or(1.2))?,
        q2,
        length: positive("field.length", raw.length.unwrap_or(1.0))?,
        electric,
        modulation: raw.modulation,
    })
}

fn validate_electric(e: RawElectric) -> Result<ElectricSpec> {
    let e0 = || -> Result<[f64; 3]> {
        finite3("field.electric.e0", e.e0.ok_or_else(|| verr("field.electric.e0", "required for this kind"))?)
    };
    let unused = |key: &str, present: bool| -> Result<()> {
        if present {
            Err(verr(format!("field.electric.{key}"), format!("not a parameter of the {} electric field", e.kind)))
        } else {
            Ok(())
        }
    };
    match e.kind.as_str() {
        "zero" => {
            unused("e0", e.e0.is_some())?;
            unused("amplitude", e.amplitude.is_some())?;
            unused("omega", e.omega.is_some())?;
            Ok(ElectricSpec::Zero)
        }
        "uniform" => {
            unused("amplitude", e.amplitude.is_some())?;
            unused("omega", e.omega.is_some())?;
            Ok(ElectricSpec::Uniform { e0: e0()? })
        }
        "oscillating" => Ok(ElectricSpec::Oscillating {
            e0: e0()?,
            amplitude: finite("field.electric.amplitude", e.amplitude.unwrap_or(0.0))?,
            omega: finite("field.electric.omega", e.omega.unwrap_or(1.0))?,
        }),
        k => Err(verr("field.electric.kind", format!("unknown electric field `{k}`; valid kinds: zero, uniform, oscillating"))),
    }
}

fn validate_profile(key: &str, p: ProfileSpec) -> Result<ProfileSpec> {
    positive(&format!("{key}.base"), p.base)?;
    finite3(&format!("{key}.gradient"), p.gradient)?;
    finite3(&format!("{key}.wave"), p.wave)?;
    finite(&format!("{key}.phase"), p.phase)?;
    finite(&format!("{key}.rate"), p.rate)?;
    if !(p.amplitude.abs() < 1.0) {
        return Err(verr(format!("{key}.amplitude"), "|amplitude| must be below 1"));
    }
    Ok(p)
}

fn validate_distribution(raw: Option<RawDistribution>) -> Result<DistributionSpec> {
    let Some(raw) = raw else {
        let d = suite::default_plasma();
        let spec = |p: Profile| ProfileSpec {
            base: p.base,
            gradient: [p.gradient[0], p.gradient[1], p.gradient[2]],
            amplitude: p.amplitude,
            wave: [p.wave[0], p.wave[1], p.wave[2]],
            phase: p.phase,
            rate: p.rate,
        };
        return Ok(DistributionSpec { kind: "bimaxwellian", n: spec(d.n), t_perp: spec(d.t_perp), t_par: spec(d.t_par) });
    };
    let n = validate_profile("distribution.n", raw.n.unwrap_or(ProfileSpec::constant(1.0)))?;
    match raw.kind.as_str() {
        "maxwellian" => {
            for (key, present) in [("t_perp", raw.t_perp.is_some()), ("t_par", raw.t_par.is_some())] {
                if present {
                    return Err(verr(format!("distribution.{key}"), "a maxwellian takes a single `temperature`"));
                }
            }
            let t = validate_profile("distribution.temperature", raw.temperature.unwrap_or(ProfileSpec::constant(1.0)))?;
            Ok(DistributionSpec { kind: "maxwellian", n, t_perp: t, t_par: t })
        }
        "bimaxwellian" => {
            if raw.temperature.is_some() {
                return Err(verr("distribution.temperature", "a bimaxwellian takes `t_perp` and `t_par`"));
            }
            Ok(DistributionSpec {
                kind: "bimaxwellian",
                n,
                t_perp: validate_profile("distribution.t_perp", raw.t_perp.unwrap_or(ProfileSpec::constant(1.0)))?,
                t_par: validate_profile("distribution.t_par", raw.t_par.unwrap_or(ProfileSpec::constant(1.0)))?,
            })
        }
        k => Err(verr("distribution.kind", format!("unknown distribution `{k}`; valid kinds: maxwellian, bimaxwellian"))),
    }
}

fn validate_numerics(n: &Numerics) -> Result<()> {
    let at_least = |key: &str, v: usize, min: usize| -> Result<()> {
        if v < min {
            Err(verr(format!("numerics.{key}"), format!("must be at least {min}")))
        } else {
            Ok(())
        }
    };
    at_least("points", n.points, 1)?;
    crate::gyro::check_n_alpha(n.n_alpha).map_err(|e| verr("numerics.n_alpha", e.to_string()))?;
    at_least("quad_n_mu", n.quad_n_mu, 4)?;
    at_least("quad_n_c", n.quad_n_c, 4)?;
    at_least("upar_cells", n.upar_cells, 3)?;
    at_least("grid", n.grid, 4)?;
    at_least("exb_grid", n.exb_grid, 4)?;
    at_least("steps", n.steps, 1)?;
    for (key, v) in [
        ("tol_solv", n.tol_solv),
        ("mu_span", n.mu_span),
        ("c_span", n.c_span),
        ("fast_tol", n.fast_tol),
        ("bounce_periods", n.bounce_periods),
        ("tau_end", n.tau_end),
        ("t_end", n.t_end),
        ("dt_frac", n.dt_frac),
        ("cfl", n.cfl),
    ] {
        positive(&format!("numerics.{key}"), v)?;
    }
    finite("numerics.time", n.time)?;
    finite("numerics.c_par0", n.c_par0)?;
    finite3("numerics.x0", n.x0)?;
    finite3("numerics.v0", n.v0)?;
    if !(n.mu >= 0.0 && n.mu.is_finite()) {
        return Err(verr("numerics.mu", "must be non-negative"));
    }
    if n.cfl > 1.0 {
        return Err(verr("numerics.cfl", "must not exceed 1"));
    }
    if n.epsilons.len() < 2 {
        return Err(verr("numerics.epsilons", "needs at least two values"));
    }
    for e in &n.epsilons {
        positive("numerics.epsilons", *e)?;
    }
    if n.epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(verr("numerics.epsilons", format!("must be strictly decreasing, got {:?}", n.epsilons)));
    }
    if n.cells.len() < 2 || n.cells.iter().any(|c| *c < 3) || n.cells.windows(2).any(|w| w[1] <= w[0]) {
        return Err(verr("numerics.cells", "needs at least two increasing grid sizes of 3 or more"));
    }
    Ok(())
}
