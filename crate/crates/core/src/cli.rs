// SPDX-License-Identifier: Apache-2.0

//! Experiment runner: sweeps `ν`, solves the naive and relaxed formulations,
//! attaches bounds and certificates, and writes CSV, JSON and plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    eta_bound, rate_constants, theta_schedule, trial_seed, verify_rate_inequality, F0Geometry,
    RateRow,
};
use crate::divergence::PhiFamily;
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::instances::{
    build_example, build_from_config, realize, BuiltExample, InstanceConfig, InstanceDef,
};
use crate::rockafellian::RockafellianSpec;
use crate::simplex::RNG_NAME;
use crate::solver::{brute_force_oracle, solve_joint, GridBox, OracleConfig, SolveConfig, XMethod};

/// Largest tolerated excess of a solver value over the grid oracle.
pub const ORACLE_GAP_TOL: f64 = 1e-6;

/// Exit status of [`run`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Success = 0,
    ConfigError = 1,
    CertificateFailure = 2,
}

impl RunStatus {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Plotdata,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "plotdata" => Ok(Format::Plotdata),
            other => Err(Error::config(
                "format",
                format!("unknown format `{other}` (csv, json, plotdata)"),
            )),
        }
    }
}

/// Relaxation solved next to the naive formulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Variant {
    /// The instance's own relaxation.
    Default,
    Quadratic,
    L1,
    Phi { family: PhiFamily },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    /// `θᵛ = max(floor, ‖pᵛ − p‖₂^{−4/3})`.
    ThetaSchedule {
        #[serde(default = "default_floor")]
        floor: f64,
    },
    /// One `θ` per entry of the `ν` list.
    Fixed { thetas: Vec<f64> },
}

fn default_floor() -> f64 {
    crate::instances::THETA_FLOOR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    /// `builtin:NAME` or the path of an instance configuration.
    pub instance: String,
    pub variant: Variant,
    pub nus: Vec<u64>,
    pub schedule: Schedule,
    pub oracle: bool,
    pub seed: u64,
    pub formats: Vec<Format>,
    pub out: PathBuf,
}

/// Plan document on disk; every field but `instance` has a default.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    instance: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    variant: Option<Variant>,
    #[serde(default)]
    nus: Option<Vec<u64>>,
    #[serde(default)]
    schedule: Option<Schedule>,
    #[serde(default)]
    oracle: Option<bool>,
    #[serde(default)]
    seed: Option<u64>,
}

pub const DEFAULT_NUS: [u64; 3] = [10, 100, 1000];

impl ExperimentPlan {
    fn with_defaults(name: String, instance: String) -> Self {
        ExperimentPlan {
            name,
            instance,
            variant: Variant::Default,
            nus: DEFAULT_NUS.to_vec(),
            schedule: Schedule::ThetaSchedule {
                floor: default_floor(),
            },
            oracle: false,
            seed: 0,
            formats: vec![Format::Csv, Format::Json],
            out: PathBuf::from("."),
        }
    }

    /// Resolves `builtin:NAME`, a plan document (a JSON object with an
    /// `instance` field) or an instance configuration used with the default
    /// sweep.
    pub fn from_reference(reference: &str) -> Result<Self> {
        if let Some(name) = reference.strip_prefix("builtin:") {
            if !crate::instances::BUILTIN_NAMES.contains(&name) {
                return Err(Error::UnknownInstance(name.into()));
            }
            return Ok(Self::with_defaults(name.into(), reference.into()));
        }
        let path = Path::new(reference);
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("instance").is_none() {
            let config = InstanceConfig::from_json(&text)?;
            crate::instances::build_from_config(&config)?;
            return Ok(Self::with_defaults(config.name, reference.into()));
        }
        let file: PlanFile = serde_json::from_str(&text)?;
        let instance = if file.instance.starts_with("builtin:") {
            file.instance
        } else {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            base.join(&file.instance).to_string_lossy().into_owned()
        };
        let stem = path
            .file_stem()
            .map_or_else(|| "plan".to_string(), |s| s.to_string_lossy().into_owned());
        let mut plan = Self::with_defaults(file.name.unwrap_or(stem), instance);
        if let Some(v) = file.variant {
            plan.variant = v;
        }
        if let Some(n) = file.nus {
            plan.nus = n;
        }
        if let Some(s) = file.schedule {
            plan.schedule = s;
        }
        if let Some(o) = file.oracle {
            plan.oracle = o;
        }
        if let Some(s) = file.seed {
            plan.seed = s;
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nus.is_empty() {
            return Err(Error::config("nus", "the nu list is empty"));
        }
        if self.nus[0] < 2 {
            return Err(Error::config("nus", "every nu must be >= 2"));
        }
        if self.nus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("nus", "the nu list must be strictly ascending"));
        }
        match &self.schedule {
            Schedule::ThetaSchedule { floor } if !(*floor >= 0.0 && floor.is_finite()) => {
                return Err(Error::config("schedule.floor", "must be finite and >= 0"));
            }
            Schedule::Fixed { thetas } => {
                if thetas.len() != self.nus.len() {
                    return Err(Error::config(
                        "schedule.thetas",
                        format!("expected {} entries, found {}", self.nus.len(), thetas.len()),
                    ));
                }
                if thetas.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                    return Err(Error::config("schedule.thetas", "must be finite and >= 0"));
                }
            }
            _ => {}
        }
        if self.formats.is_empty() {
            return Err(Error::config("format", "no output format selected"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "plan names are non-empty file stems"));
        }
        Ok(())
    }
}

/// One CSV line: a formulation solved at one `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub nu: u64,
    pub formulation: String,
    pub x: Vec<f64>,
    pub u_norm: f64,
    /// Actual objective at the returned decision.
    pub objective: ExtReal,
    pub eta_nu: Option<f64>,
    pub residual: Option<ExtReal>,
    pub oracle_gap: Option<f64>,
    pub wall_ms: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorInfo {
    pub program: &'static str,
    pub version: &'static str,
    pub rng: &'static str,
}

impl Default for GeneratorInfo {
    fn default() -> Self {
        GeneratorInfo {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            rng: RNG_NAME,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub plan: ExperimentPlan,
    pub generator: GeneratorInfo,
    pub rows: Vec<Row>,
    pub rate_rows: Vec<RateRow>,
    /// Human-readable description of every failed certificate.
    pub failures: Vec<String>,
}

enum Resolved {
    Builtin(String),
    Config(InstanceDef),
}

fn resolve(plan: &ExperimentPlan) -> Result<Resolved> {
    if let Some(name) = plan.instance.strip_prefix("builtin:") {
        return Ok(Resolved::Builtin(name.into()));
    }
    let text = fs::read_to_string(&plan.instance)?;
    let config = InstanceConfig::from_json(&text)?;
    Ok(Resolved::Config(build_from_config(&config)?))
}

fn with_theta(spec: &RockafellianSpec, value: f64) -> RockafellianSpec {
    let mut spec = spec.clone();
    match &mut spec {
        RockafellianSpec::ExactIndicator => {}
        RockafellianSpec::QuadraticPenalty { theta, .. }
        | RockafellianSpec::PhiDivergence { theta, .. }
        | RockafellianSpec::SupportPerturbation { theta, .. }
        | RockafellianSpec::L1Penalty { theta, .. }
        | RockafellianSpec::Composite { theta, .. } => *theta = value,
    }
    spec
}

fn relaxed_spec(ex: &BuiltExample, variant: &Variant, schedule: &Schedule, index: usize) -> Result<RockafellianSpec> {
    let p = ex.actual.p();
    let p_nu = ex
        .spec
        .p_nu()
        .cloned()
        .unwrap_or_else(|| ex.perturbed.p().clone());
    let theta = match schedule {
        Schedule::ThetaSchedule { floor } => theta_schedule(&p_nu, p, *floor),
        Schedule::Fixed { thetas } => thetas[index],
    };
    let s = ex.actual.s();
    let spec = match variant {
        Variant::Default => {
            // the support variant's θ guards p, which the example keeps fixed
            match (&ex.spec, schedule) {
                (RockafellianSpec::SupportPerturbation { .. }, Schedule::ThetaSchedule { .. }) => {
                    ex.spec.clone()
                }
                _ => with_theta(&ex.spec, theta),
            }
        }
        Variant::Quadratic => RockafellianSpec::quadratic(p_nu, theta),
        Variant::L1 => RockafellianSpec::L1Penalty {
            p_nu,
            theta,
            tilt: vec![0.0; s],
        },
        Variant::Phi { family } => RockafellianSpec::PhiDivergence {
            p_nu,
            theta,
            tilt: vec![0.0; s],
            family: *family,
        },
    };
    spec.validate(&ex.perturbed)?;
    Ok(spec)
}

/// Simplex spacing for the relaxed oracle; `None` skips it.
fn simplex_step(s: usize) -> Option<f64> {
    match s {
        1 | 2 => Some(1e-3),
        3 => Some(1e-2),
        4 => Some(5e-2),
        _ => None,
    }
}

fn relaxed_oracle(ex: &BuiltExample, spec: &RockafellianSpec, grid: &GridBox) -> Result<Option<OracleConfig>> {
    let mut config = OracleConfig::on_box(grid.clone());
    match spec {
        RockafellianSpec::ExactIndicator => {}
        RockafellianSpec::QuadraticPenalty { .. }
        | RockafellianSpec::PhiDivergence { .. }
        | RockafellianSpec::L1Penalty { .. } => match simplex_step(ex.actual.s()) {
            Some(step) => config.simplex_step = Some(step),
            None => return Ok(None),
        },
        RockafellianSpec::SupportPerturbation { theta, xi_nu, .. } => {
            if *theta < crate::analysis::THETA_CAP {
                match simplex_step(ex.actual.s()) {
                    Some(step) => config.simplex_step = Some(step),
                    None => return Ok(None),
                }
            }
            let m = xi_nu.first().map_or(0, Vec::len);
            config.shift = Some(GridBox::cube(m, -1.0, 1.0, 5e-2)?);
        }
        RockafellianSpec::Composite { reweight, .. } => {
            if *reweight {
                match simplex_step(ex.actual.s()) {
                    Some(step) => config.simplex_step = Some(step),
                    None => return Ok(None),
                }
            }
            let m = ex.actual.composite().map_or(0, |c| c.dim());
            config.shift = Some(GridBox::cube(m, -1.0, 1.0, 5e-2)?);
        }
    }
    Ok(Some(config))
}

fn oracle_gap(
    ex: &BuiltExample,
    spec: &RockafellianSpec,
    config: Option<OracleConfig>,
    solver_value: f64,
) -> Result<Option<f64>> {
    let Some(config) = config else {
        return Ok(None);
    };
    match brute_force_oracle(&ex.perturbed, spec, &config) {
        Ok(res) => Ok(res.value.finite().map(|v| solver_value - v)),
        // too large to enumerate at this resolution: no gap reported
        Err(Error::GridTooLarge { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Radius of the smallest origin-centred ball containing the box.
fn covering_radius(lower: &[f64], upper: &[f64]) -> f64 {
    lower
        .iter()
        .zip(upper)
        .map(|(l, u)| l.abs().max(u.abs()).powi(2))
        .sum::<f64>()
        .sqrt()
}

struct NuOutcome {
    rows: [Row; 2],
    rate: Option<RateRow>,
    failures: Vec<String>,
}

fn run_nu(plan: &ExperimentPlan, resolved: &Resolved, index: usize) -> Result<NuOutcome> {
    let nu = plan.nus[index];
    let seed = trial_seed(plan.seed, index);
    let ex = match resolved {
        Resolved::Builtin(name) => build_example(name, nu)?,
        Resolved::Config(def) => realize(def, nu, seed)?,
    };
    let spec = relaxed_spec(&ex, &plan.variant, &plan.schedule, index)?;
    let mut config: SolveConfig = ex.solve_config()?;
    config.seed = seed;
    if !ex.actual.f0().is_smooth() {
        config.f0_geometry = Some(F0Geometry::Box {
            lower: ex.lower.clone(),
            upper: ex.upper.clone(),
        });
    }
    let solve_grid = match &config.x_method {
        XMethod::Grid { grid } | XMethod::ReducedGrid { grid } => grid.clone(),
        XMethod::ProjectedGradient(_) => ex.oracle_grid()?,
    };
    let mut failures = Vec::new();
    let mut rows = Vec::with_capacity(2);
    for (formulation, f_spec) in [("naive", RockafellianSpec::ExactIndicator), ("rockafellian", spec.clone())] {
        let start = Instant::now();
        let report = solve_joint(&ex.perturbed, &f_spec, &config)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let gap = if plan.oracle {
            let oc = relaxed_oracle(&ex, &f_spec, &solve_grid)?;
            oracle_gap(&ex, &f_spec, oc, report.objective)?
        } else {
            None
        };
        if let Some(g) = gap {
            if g > ORACLE_GAP_TOL {
                failures.push(format!(
                    "nu = {nu}, {formulation}: solver value exceeds the grid oracle by {g:e}"
                ));
            }
        }
        let eta = match &f_spec {
            RockafellianSpec::QuadraticPenalty { p_nu, theta, .. } => {
                let rho = covering_radius(&ex.lower, &ex.upper);
                let cert = rate_constants(&ex.actual, rho, 0.0, 0.0, &ex.oracle_grid()?)?;
                cert.applicable(*theta, p_nu, ex.actual.p())
                    .then(|| eta_bound(&cert, p_nu, ex.actual.p(), *theta))
            }
            _ => None,
        };
        rows.push(Row {
            nu,
            formulation: formulation.into(),
            objective: ex.actual.objective(&report.x_final),
            x: report.x_final,
            u_norm: report.u_final.iter().map(|v| v * v).sum::<f64>().sqrt(),
            eta_nu: eta,
            residual: report.residual.as_ref().map(|r| ExtReal::from(r.total)),
            oracle_gap: gap,
            wall_ms,
            seed,
        });
    }
    let mut rate = None;
    if plan.oracle {
        if let RockafellianSpec::QuadraticPenalty { .. } = spec {
            let rho = covering_radius(&ex.lower, &ex.upper);
            let grid = ex.oracle_grid()?;
            let cert = rate_constants(&ex.actual, rho, 0.0, 0.0, &grid)?;
            let row = verify_rate_inequality(&ex.actual, &[(nu as f64, spec)], &cert, &grid, &config)?
                .pop()
                .expect("one rate row per nu");
            if row.passed == Some(false) {
                failures.push(format!(
                    "nu = {nu}: distance {:e} exceeds the rate bound {:e}",
                    row.distance, row.eta
                ));
            }
            rate = Some(row);
        }
    }
    let rows: [Row; 2] = rows.try_into().expect("two formulations");
    Ok(NuOutcome {
        rows,
        rate,
        failures,
    })
}

/// Solves every `ν` of the plan (in parallel) and assembles rows in plan
/// order.
pub fn execute(plan: &ExperimentPlan) -> Result<RunReport> {
    plan.validate()?;
    let resolved = resolve(plan)?;
    let outcomes: Vec<NuOutcome> = (0..plan.nus.len())
        .into_par_iter()
        .map(|i| run_nu(plan, &resolved, i))
        .collect::<Result<_>>()?;
    let mut report = RunReport {
        plan: plan.clone(),
        generator: GeneratorInfo::default(),
        rows: Vec::new(),
        rate_rows: Vec::new(),
        failures: Vec::new(),
    };
    for o in outcomes {
        report.rows.extend(o.rows);
        report.rate_rows.extend(o.rate);
        report.failures.extend(o.failures);
    }
    Ok(report)
}

pub const CSV_HEADER: &str =
    "nu,formulation,x,u_norm,objective,eta_nu,residual,oracle_gap,wall_ms,seed";

/// Shortest round-trip decimal, switching to exponent form for very large
/// or small magnitudes.
fn num_text(v: f64) -> String {
    format!("{v:?}")
}

fn ext_text(v: ExtReal) -> String {
    match v {
        ExtReal::Finite(f) => num_text(f),
        ExtReal::PosInf => "inf".into(),
        ExtReal::NegInf => "-inf".into(),
    }
}

fn opt_text(v: Option<f64>) -> String {
    v.map(num_text).unwrap_or_default()
}

/// CSV body with LF endings and shortest round-trip decimals.
pub fn csv_text(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let x: Vec<String> = r.x.iter().copied().map(num_text).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.nu,
            r.formulation,
            x.join(";"),
            num_text(r.u_norm),
            ext_text(r.objective),
            opt_text(r.eta_nu),
            r.residual.map(ext_text).unwrap_or_default(),
            opt_text(r.oracle_gap),
            num_text(r.wall_ms),
            r.seed
        );
    }
    out
}

/// `(series name, [(ν, value)])` for every column with at least one value.
pub fn plot_series(rows: &[Row]) -> Vec<(String, Vec<(u64, f64)>)> {
    let mut formulations: Vec<&str> = Vec::new();
    for r in rows {
        if !formulations.contains(&r.formulation.as_str()) {
            formulations.push(&r.formulation);
        }
    }
    let mut out = Vec::new();
    for f in formulations {
        let subset: Vec<&Row> = rows.iter().filter(|r| r.formulation == f).collect();
        let n = subset.iter().map(|r| r.x.len()).max().unwrap_or(0);
        let mut columns: Vec<(String, Box<dyn Fn(&Row) -> Option<f64>>)> = vec![
            ("objective".into(), Box::new(|r: &Row| r.objective.finite())),
            ("u_norm".into(), Box::new(|r: &Row| Some(r.u_norm))),
            ("eta_nu".into(), Box::new(|r: &Row| r.eta_nu)),
            ("residual".into(), Box::new(|r: &Row| r.residual.and_then(ExtReal::finite))),
            ("oracle_gap".into(), Box::new(|r: &Row| r.oracle_gap)),
        ];
        for k in 0..n {
            columns.push((format!("x{}", k + 1), Box::new(move |r: &Row| r.x.get(k).copied())));
        }
        for (col, get) in columns {
            let pts: Vec<(u64, f64)> = subset
                .iter()
                .filter_map(|r| get(r).map(|v| (r.nu, v)))
                .collect();
            if !pts.is_empty() {
                out.push((format!("{f}-{col}"), pts));
            }
        }
    }
    out
}

/// Writes the selected formats into `dir` and returns the paths written.
pub fn emit_report(report: &RunReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::Empty("report rows"));
    }
    fs::create_dir_all(dir)?;
    let name = &report.plan.name;
    let mut written = Vec::new();
    for format in formats {
        match format {
            Format::Csv => {
                let path = dir.join(format!("{name}.csv"));
                fs::write(&path, csv_text(&report.rows))?;
                written.push(path);
            }
            Format::Json => {
                let path = dir.join(format!("{name}.json"));
                let mut text = serde_json::to_string_pretty(report)?;
                text.push('\n');
                fs::write(&path, text)?;
                written.push(path);
            }
            Format::Plotdata => {
                for (series, pts) in plot_series(&report.rows) {
                    let path = dir.join(format!("{name}.{series}.dat"));
                    let mut text = format!("# nu {series}\n");
                    for (nu, v) in pts {
                        let _ = writeln!(text, "{nu} {}", num_text(v));
                    }
                    fs::write(&path, text)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

/// Validates, executes and writes the plan. Configuration and solver errors
/// give [`RunStatus::ConfigError`] with no files written; certificate
/// failures are reported after the files are flushed.
pub fn run(plan: &ExperimentPlan) -> RunStatus {
    let report = match execute(plan) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return RunStatus::ConfigError;
        }
    };
    if let Err(e) = emit_report(&report, &plan.out, &plan.formats) {
        eprintln!("error: {e}");
        return RunStatus::ConfigError;
    }
    if report.failures.is_empty() {
        RunStatus::Success
    } else {
        for f in &report.failures {
            eprintln!("certificate failure: {f}");
        }
        RunStatus::CertificateFailure
    }
}
