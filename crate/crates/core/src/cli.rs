//! Command-line front end: scenario runs, law checks and the catalog
//! listing, with a fixed exit-code contract.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::atlas::{check_connection_compat, check_semispray_compat, TransformedConnection, TransformedSpray};
use crate::diffkernel::{map_jet, DomainBox};
use crate::dynamics::{
    el_residual, el_residual_forced, energy_rate_audit, energy_rate_audit_forced, integrate, ResidualSeries, Trajectory,
};
use crate::error::Error;
use crate::linalg::norm_inf;
use crate::point::{Jet2, Trivialized};
use crate::riemann::{constraint_drift, integrate_constrained, perfectness_residual, project_state};
use crate::sampling::Sampler;
use crate::scenario::{catalog, OutputFormat, Resolved, ScenarioConfig, System, SystemSpray};
use crate::semispray::{
    check_f_related, iz_omega_residual, ConnectionField, recover_g, sign_ledger_residual, transition_trivialized, ConnectionTrivialization,
    LagrangianConnection, LagrangianSpray, SemisprayField, SprayConnection, SprayConnectionKind, SprayTrivialization,
    Trivialization,
};

/// Environment variable overriding the root directory for outputs.
pub const OUTPUT_ROOT_ENV: &str = "TDMECH_OUTPUT_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_LAW_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tdmech", version, about = "Time-dependent Lagrangian mechanics engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a scenario and write the trajectory, residual series and report.
    Run { config: PathBuf },
    /// Evaluate geometric laws for a scenario and print the report.
    Check {
        config: PathBuf,
        /// Comma-separated law names; all applicable laws when omitted.
        #[arg(long, value_delimiter = ',')]
        laws: Option<Vec<String>>,
    },
    /// List the built-in scenarios.
    ListScenarios {
        #[arg(long)]
        json: bool,
    },
}

/// A failure carrying its exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn parse(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_PARSE,
            message: msg.into(),
        }
    }
    fn validation(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: msg.into(),
        }
    }
    fn runtime(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

/// Laws available to `check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Law {
    SemisprayCompat,
    ConnectionCompatN0,
    ConnectionCompatN1,
    TrivializedTransitionBlock,
    IzOmegaZero,
    SignLedger,
    FRelated,
    Perfectness,
    RecoverGRoundtrip,
}

impl Law {
    pub const ALL: [Law; 9] = [
        Law::SemisprayCompat,
        Law::ConnectionCompatN0,
        Law::ConnectionCompatN1,
        Law::TrivializedTransitionBlock,
        Law::IzOmegaZero,
        Law::SignLedger,
        Law::FRelated,
        Law::Perfectness,
        Law::RecoverGRoundtrip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Law::SemisprayCompat => "semispray-compat",
            Law::ConnectionCompatN0 => "connection-compat-N0",
            Law::ConnectionCompatN1 => "connection-compat-N1",
            Law::TrivializedTransitionBlock => "trivialized-transition-block",
            Law::IzOmegaZero => "iZ-Omega-zero",
            Law::SignLedger => "sign-ledger",
            Law::FRelated => "f-related",
            Law::Perfectness => "perfectness",
            Law::RecoverGRoundtrip => "recover-G-roundtrip",
        }
    }

    pub fn anchor(self) -> &'static str {
        match self {
            Law::SemisprayCompat => "G_b(t,φ(x),dφ·y) + d²φ(y,y) = dφ·G_a(t,x,y)",
            Law::ConnectionCompatN0 => "N⁰_b(t,φ(x),dφ·y) = dφ·N⁰_a(t,x,y)",
            Law::ConnectionCompatN1 => "N¹_b·dφ = dφ·N¹_a − d²φ(·,y)",
            Law::TrivializedTransitionBlock => "Φ_b∘T²φ∘Φ_a⁻¹(t,x,y,w) = (t,φ(x),dφ·y,dφ·w)",
            Law::IzOmegaZero => "i_Z(ω_L + dE_L∧dt) = 0, Z = (1,y,X₂)",
            Law::SignLedger => "X₂ + G + N⁰ = 0",
            Law::FRelated => "T²f∘S_M = S_N∘Tf",
            Law::Perfectness => "g(μ⁻¹R, w) = 0 for w tangent to c = 0",
            Law::RecoverGRoundtrip => "pr₄Φ(t,x,y,0) = G(t,x,y)",
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Law::IzOmegaZero | Law::FRelated | Law::Perfectness => 1e-8,
            Law::RecoverGRoundtrip => 1e-12,
            _ => 1e-10,
        }
    }

    pub fn parse(name: &str) -> Option<Law> {
        Law::ALL.into_iter().find(|l| l.name() == name)
    }

    /// Whether the system defines what the law needs.
    pub fn applicable(self, sys: &System) -> bool {
        match self {
            Law::SemisprayCompat
            | Law::ConnectionCompatN0
            | Law::ConnectionCompatN1
            | Law::TrivializedTransitionBlock => sys.transition.is_some(),
            Law::FRelated => sys.related.is_some(),
            Law::Perfectness => sys.constraint.is_some(),
            Law::IzOmegaZero | Law::SignLedger | Law::RecoverGRoundtrip => true,
        }
    }
}

/// Run-time audits reported by `run`.
const RUN_DEFAULTS: [(&str, f64, &str); 5] = [
    ("el-residual", 1e-6, "p(s) − p(s₀) = ∫(∂₂L + F) ds, x(s) − x(s₀) = ∫y ds"),
    ("energy-balance", 1e-6, "E(s) − E(s₀) + ∫(∂₁L − F·y) ds = 0"),
    ("constraint-drift", 1e-7, "|c(x(s))|"),
    ("constraint-velocity-drift", 1e-6, "|dc·x′(s)|"),
    ("probe", 1e-6, "|x(s) − x_expected|"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantEntry {
    pub law: String,
    pub anchor: String,
    pub max_residual: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub samples: usize,
}

impl InvariantEntry {
    fn new(law: impl Into<String>, anchor: impl Into<String>, max_residual: f64, tolerance: f64, samples: usize) -> Self {
        Self {
            law: law.into(),
            anchor: anchor.into(),
            pass: max_residual <= tolerance,
            max_residual,
            tolerance,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub scenario: String,
    pub entries: Vec<InvariantEntry>,
    pub all_pass: bool,
}

impl InvariantReport {
    fn new(scenario: &str, entries: Vec<InvariantEntry>) -> Self {
        Self {
            scenario: scenario.into(),
            all_pass: entries.iter().all(|e| e.pass),
            entries,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

fn validate_tolerances(res: &Resolved) -> Result<(), CliError> {
    for (key, &tol) in &res.tolerances {
        let known = Law::parse(key).is_some() || RUN_DEFAULTS.iter().any(|(k, _, _)| k == key);
        if !known {
            return Err(CliError::validation(format!("tolerance given for unknown law `{key}`")));
        }
        if !(tol >= 0.0 && tol.is_finite()) {
            return Err(CliError::validation(format!("tolerance for `{key}` must be finite and non-negative")));
        }
    }
    Ok(())
}

fn tolerance(res: &Resolved, key: &str, default: f64) -> f64 {
    res.tolerances.get(key).copied().unwrap_or(default)
}

/// Parses and resolves configuration text.
pub fn resolve_config_str(src: &str, toml: bool) -> Result<Resolved, CliError> {
    let cfg = if toml {
        ScenarioConfig::from_toml(src)
    } else {
        ScenarioConfig::from_json(src)
    }
    .map_err(CliError::parse)?;
    let res = cfg.resolve().map_err(|e| CliError::validation(e.to_string()))?;
    validate_tolerances(&res)?;
    Ok(res)
}

/// Reads and resolves a configuration; `.toml` files use the TOML reader.
pub fn load_config(path: &Path) -> Result<Resolved, CliError> {
    let src = fs::read_to_string(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    let toml = path.extension().is_some_and(|e| e == "toml");
    resolve_config_str(&src, toml).map_err(|e| CliError {
        message: format!("{}: {}", path.display(), e.message),
        ..e
    })
}

fn build(res: &Resolved) -> Result<System, CliError> {
    System::build(&res.system).map_err(|e| CliError::validation(e.to_string()))
}

// ---------------------------------------------------------------------------
// check

fn intersect(a: &DomainBox, b: &DomainBox) -> DomainBox {
    let lo = a.lo.iter().zip(&b.lo).map(|(x, y)| x.max(*y)).collect();
    let hi = a.hi.iter().zip(&b.hi).map(|(x, y)| x.min(*y)).collect();
    DomainBox::new(lo, hi)
}

fn sample_domain(sys: &System) -> DomainBox {
    match &sys.transition {
        Some(tr) => intersect(&sys.x_domain, tr.overlap()),
        None => sys.x_domain.clone(),
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut m = 0.0f64;
    for v in values {
        if v.is_nan() {
            return f64::NAN;
        }
        m = m.max(v);
    }
    m
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn trivialized_gap(a: &Trivialized, b: &Trivialized) -> f64 {
    max_of([
        (a.t - b.t).abs(),
        norm_inf(&sub(&a.x, &b.x)),
        norm_inf(&sub(&a.y, &b.y)),
        norm_inf(&sub(&a.w, &b.w)),
    ])
}

/// Evaluates one law, returning the maximum residual and the sample count.
pub fn evaluate_law(law: Law, sys: &System, res: &Resolved) -> Result<(f64, usize), CliError> {
    let cfg = &res.checks;
    let n = sys.dim();
    let mut rng = Sampler::new(cfg.seed);
    let t_range = (cfg.t_range[0], cfg.t_range[1]);
    let domain = sample_domain(sys);
    let samples = rng.tangent_samples(&domain, cfg.samples, t_range, cfg.y_scale);
    let rt = CliError::runtime;
    let missing = || CliError::validation(format!("scenario does not define what `{}` requires", law.name()));
    match law {
        Law::SemisprayCompat => {
            let tr = sys.transition.as_ref().ok_or_else(missing)?;
            let report = match &sys.target_spray {
                Some(gb) => check_semispray_compat(&sys.spray, gb, tr, &samples),
                None => {
                    let gb = TransformedSpray::new(&sys.spray, tr.clone()).map_err(rt)?;
                    check_semispray_compat(&sys.spray, &gb, tr, &samples)
                }
            }
            .map_err(rt)?;
            Ok((report.max_residual, report.sample_count))
        }
        Law::ConnectionCompatN0 | Law::ConnectionCompatN1 => {
            let tr = sys.transition.as_ref().ok_or_else(missing)?;
            let na = LagrangianConnection::new(sys.lagrangian.clone());
            let nb = TransformedConnection::new(&na, tr.clone()).map_err(rt)?;
            let report = check_connection_compat(&na, &nb, tr, &samples).map_err(rt)?;
            let r = if law == Law::ConnectionCompatN0 { report.n0 } else { report.n1 };
            Ok((r.max_residual, r.sample_count))
        }
        Law::TrivializedTransitionBlock => {
            let tr = sys.transition.as_ref().ok_or_else(missing)?;
            let sb = TransformedSpray::new(&sys.spray, tr.clone()).map_err(rt)?;
            let mut worst = 0.0f64;
            let mut count = 0;
            for t in [0.0, 1.0, 7.0] {
                for v in &samples {
                    let jet = map_jet(tr.map(), &v.x, false).map_err(rt)?;
                    let w = rng.vector(n, cfg.y_scale);
                    let tv = Trivialized::new(t, v.x.clone(), v.y.clone(), w.clone());
                    let got = transition_trivialized(&sys.spray, &sb, tr, &tv).map_err(rt)?;
                    let expected =
                        Trivialized::new(t, jet.value.clone(), jet.jacobian.mul_vec(&v.y), jet.jacobian.mul_vec(&w));
                    // superposition at fixed (t, x)
                    let (y2, w2) = (rng.vector(n, cfg.y_scale), rng.vector(n, cfg.y_scale));
                    let lam = rng.uniform(-2.0, 2.0);
                    let comb = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + lam * q).collect() };
                    let image = |y: &[f64], w: &[f64]| {
                        transition_trivialized(&sys.spray, &sb, tr, &Trivialized::new(t, v.x.clone(), y.to_vec(), w.to_vec()))
                    };
                    let t1 = image(&v.y, &w).map_err(rt)?;
                    let t2 = image(&y2, &w2).map_err(rt)?;
                    let t12 = image(&comb(&v.y, &y2), &comb(&w, &w2)).map_err(rt)?;
                    let lin = max_of([
                        norm_inf(&sub(&t12.y, &comb(&t1.y, &t2.y))),
                        norm_inf(&sub(&t12.w, &comb(&t1.w, &t2.w))),
                    ]);
                    worst = max_of([worst, trivialized_gap(&got, &expected), lin]);
                    count += 1;
                }
            }
            Ok((worst, count))
        }
        Law::IzOmegaZero => {
            let mut worst = 0.0f64;
            for v in &samples {
                let w = rng.tangent_vector(n, 1.0);
                worst = max_of([worst, iz_omega_residual(&sys.lagrangian, v, &w).map_err(rt)?]);
            }
            Ok((worst, samples.len()))
        }
        Law::SignLedger => {
            let r: Vec<f64> = samples
                .iter()
                .map(|v| sign_ledger_residual(&sys.lagrangian, v))
                .collect::<Result<_, _>>()
                .map_err(rt)?;
            Ok((max_of(r), samples.len()))
        }
        Law::FRelated => {
            let (f, target) = sys.related.as_ref().ok_or_else(missing)?;
            let s_m = LagrangianSpray::new(sys.lagrangian.clone());
            let s_n = LagrangianSpray::new(target.clone());
            let report = check_f_related(&s_m, &s_n, f, &samples).map_err(rt)?;
            Ok((report.max_residual(), samples.len()))
        }
        Law::Perfectness => {
            let (cst, g) = match (&sys.constraint, &sys.metric, &sys.spray) {
                (Some(c), Some(g), SystemSpray::Constrained(_)) => (c, g),
                _ => return Err(missing()),
            };
            let force = sys.force.clone().unwrap_or(crate::dynamics::ExprForce::parse(&vec!["0"; n]).map_err(rt)?);
            let mut worst = 0.0f64;
            for v in &samples {
                let (mut x, mut y) = (v.x.clone(), v.y.clone());
                project_state(cst, g, v.t, &mut x, &mut y).map_err(rt)?;
                let ws: Vec<Vec<f64>> = (0..3).map(|_| rng.vector(n, 1.0)).collect();
                worst = max_of([worst, perfectness_residual(cst, g, &force, v.t, &x, &y, &ws).map_err(rt)?]);
            }
            Ok((worst, samples.len()))
        }
        Law::RecoverGRoundtrip => {
            let spray_form = SprayTrivialization(&sys.spray);
            let conn = SprayConnection::new(&sys.spray, SprayConnectionKind::Temporal);
            let conn_form = ConnectionTrivialization(&conn);
            let mut worst = 0.0f64;
            for v in &samples {
                let g = sys.spray.eval(v).map_err(rt)?;
                let r1 = norm_inf(&sub(&recover_g(&spray_form, v).map_err(rt)?, &g));
                let p = ConnectionField::coefficients(&conn, v).map_err(rt)?.offset(&v.y);
                let r2 = norm_inf(&sub(&recover_g(&conn_form, v).map_err(rt)?, &p));
                let j = Jet2::new(v.t, v.x.clone(), v.y.clone(), rng.vector(n, 1.0));
                let back = spray_form.detrivialize(&spray_form.trivialize(&j).map_err(rt)?).map_err(rt)?;
                let back_c = conn_form.detrivialize(&conn_form.trivialize(&j).map_err(rt)?).map_err(rt)?;
                let r3 = norm_inf(&sub(&back.z, &j.z)).max(norm_inf(&sub(&back_c.z, &j.z)));
                worst = max_of([worst, r1, r2, r3]);
            }
            Ok((worst, samples.len()))
        }
    }
}

/// Runs the requested laws (all applicable ones when `laws` is `None`).
pub fn check(res: &Resolved, laws: Option<&[Law]>) -> Result<InvariantReport, CliError> {
    let sys = build(res)?;
    let selected: Vec<Law> = match laws {
        Some(ls) => {
            let mut out: Vec<Law> = Vec::new();
            for &l in ls {
                if !l.applicable(&sys) {
                    return Err(CliError::validation(format!(
                        "scenario `{}` does not define what `{}` requires",
                        sys.name,
                        l.name()
                    )));
                }
                if !out.contains(&l) {
                    out.push(l);
                }
            }
            out
        }
        None => Law::ALL.into_iter().filter(|l| l.applicable(&sys)).collect(),
    };
    let mut entries = Vec::with_capacity(selected.len());
    for law in selected {
        let (max, count) = evaluate_law(law, &sys, res)?;
        let tol = tolerance(res, law.name(), law.default_tolerance());
        entries.push(InvariantEntry::new(law.name(), law.anchor(), max, tol, count));
    }
    Ok(InvariantReport::new(&sys.name, entries))
}

pub fn parse_laws(names: &[String]) -> Result<Vec<Law>, CliError> {
    names
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            Law::parse(s).ok_or_else(|| {
                let known: Vec<&str> = Law::ALL.iter().map(|l| l.name()).collect();
                CliError::parse(format!("unknown law `{s}` (known: {})", known.join(", ")))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// run

/// Artifacts of a scenario run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub residual: ResidualSeries,
    pub report: InvariantReport,
}

fn run_default(key: &str) -> (f64, &'static str) {
    let (_, tol, anchor) = RUN_DEFAULTS.iter().find(|(k, _, _)| *k == key).expect("known run audit");
    (*tol, anchor)
}

fn run_entry(res: &Resolved, key: &str, series: &ResidualSeries) -> InvariantEntry {
    let (tol, anchor) = run_default(key);
    InvariantEntry::new(key, anchor, series.max(), tolerance(res, key, tol), series.residual.len())
}

/// Integrates the scenario and evaluates the run-time audits.
pub fn run(res: &Resolved) -> Result<RunOutcome, CliError> {
    let sys = build(res)?;
    let rt = CliError::runtime;
    let mut entries = Vec::new();
    let (traj, primary) = match &sys.spray {
        SystemSpray::Constrained(spray) => {
            let traj = integrate_constrained(spray, &res.initial, &res.integrator, res.project_constraint).map_err(|e| match e {
                Error::OffConstraint { .. } | Error::NotTangent { .. } => CliError::validation(e.to_string()),
                other => CliError::runtime(other),
            })?;
            let cst = sys.constraint.as_ref().expect("constrained systems carry a constraint");
            let (pos, vel) = constraint_drift(cst, &traj).map_err(rt)?;
            entries.push(run_entry(res, "constraint-drift", &pos));
            entries.push(run_entry(res, "constraint-velocity-drift", &vel));
            let energy = match &sys.force {
                Some(f) => energy_rate_audit_forced(&sys.lagrangian, f, &traj),
                None => energy_rate_audit(&sys.lagrangian, &traj),
            }
            .map_err(rt)?;
            entries.push(run_entry(res, "energy-balance", &energy));
            (traj, pos)
        }
        spray => {
            let traj = integrate(spray, &res.initial, &res.integrator).map_err(rt)?;
            let (el, energy) = match &sys.force {
                Some(f) => (
                    el_residual_forced(&sys.lagrangian, f, &traj),
                    energy_rate_audit_forced(&sys.lagrangian, f, &traj),
                ),
                None => (el_residual(&sys.lagrangian, &traj), energy_rate_audit(&sys.lagrangian, &traj)),
            };
            let (el, energy) = (el.map_err(rt)?, energy.map_err(rt)?);
            entries.push(run_entry(res, "el-residual", &el));
            entries.push(run_entry(res, "energy-balance", &energy));
            (traj, el)
        }
    };
    for p in &res.probes {
        let (tol, anchor) = run_default("probe");
        let tol = res.tolerances.get("probe").copied().unwrap_or(if p.tolerance > 0.0 { p.tolerance } else { tol });
        let residual = match traj.at(p.s) {
            Some((x, _)) => norm_inf(&sub(&x, &p.x)),
            None => {
                return Err(CliError::validation(format!(
                    "probe at s = {} lies outside the integrated span",
                    p.s
                )))
            }
        };
        entries.push(InvariantEntry::new(format!("probe@s={}", p.s), anchor, residual, tol, 1));
    }
    Ok(RunOutcome {
        trajectory: traj,
        residual: primary,
        report: InvariantReport::new(&sys.name, entries),
    })
}

/// Directory where a run writes its artifacts.
pub fn output_dir(res: &Resolved) -> PathBuf {
    let rel = res.outputs.as_ref().map_or_else(|| res.system.name.clone(), |o| o.directory.clone());
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(rel),
        None => PathBuf::from(rel),
    }
}

/// Writes the run artifacts and returns the paths written.
pub fn write_outputs(res: &Resolved, outcome: &RunOutcome) -> Result<Vec<PathBuf>, CliError> {
    let dir = output_dir(res);
    let io = |e: std::io::Error| CliError::runtime(format!("cannot write to {}: {e}", dir.display()));
    fs::create_dir_all(&dir).map_err(io)?;
    let formats = res
        .outputs
        .as_ref()
        .map_or_else(|| vec![OutputFormat::Csv, OutputFormat::Json], |o| o.formats.clone());
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        let path = dir.join("trajectory.csv");
        let f = fs::File::create(&path).map_err(io)?;
        outcome.trajectory.write_csv(f).map_err(CliError::runtime)?;
        written.push(path);
        let path = dir.join("residual.csv");
        let f = fs::File::create(&path).map_err(io)?;
        outcome.residual.write_csv(f).map_err(CliError::runtime)?;
        written.push(path);
    }
    if formats.contains(&OutputFormat::Json) {
        let path = dir.join("report.json");
        fs::write(&path, outcome.report.to_json() + "\n").map_err(io)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// entry point

#[derive(Debug, Serialize)]
struct ListedScenario<'a> {
    name: &'a str,
    description: &'a str,
}

fn print_report_lines(out: &mut dyn Write, report: &InvariantReport) -> std::io::Result<()> {
    for e in &report.entries {
        writeln!(
            out,
            "{:<30} {:<4} max_residual={:e} tolerance={:e}",
            e.law,
            if e.pass { "PASS" } else { "FAIL" },
            e.max_residual,
            e.tolerance
        )?;
    }
    Ok(())
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    let io = |e: std::io::Error| CliError::runtime(e);
    match cmd {
        Command::ListScenarios { json } => {
            let cat = catalog();
            if json {
                let list: Vec<ListedScenario> = cat
                    .iter()
                    .map(|e| ListedScenario {
                        name: e.name,
                        description: e.description,
                    })
                    .collect();
                writeln!(out, "{}", serde_json::to_string_pretty(&list).expect("listing serializes")).map_err(io)?;
            } else {
                for e in &cat {
                    writeln!(out, "{:<24} {}", e.name, e.description).map_err(io)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Check { config, laws } => {
            let laws = laws.as_deref().map(parse_laws).transpose()?;
            let res = load_config(&config)?;
            let report = check(&res, laws.as_deref())?;
            writeln!(out, "{}", report.to_json()).map_err(io)?;
            Ok(if report.all_pass { EXIT_OK } else { EXIT_LAW_FAILED })
        }
        Command::Run { config } => {
            let res = load_config(&config)?;
            let outcome = run(&res)?;
            let written = write_outputs(&res, &outcome)?;
            print_report_lines(out, &outcome.report).map_err(io)?;
            for p in written {
                writeln!(out, "wrote {}", p.display()).map_err(io)?;
            }
            Ok(if outcome.report.all_pass { EXIT_OK } else { EXIT_LAW_FAILED })
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_PARSE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}
