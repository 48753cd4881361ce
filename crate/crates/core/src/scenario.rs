//! Scenario configuration, the built-in catalog, and runtime assembly of
//! the expression-defined objects a scenario describes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::atlas::{cubic_transition, Transition};
use crate::diffkernel::{DomainBox, Real, ScalarField};
use crate::dynamics::{forced_spray, ExprForce, ForcedSpray, InitialState, IntegratorConfig, Method};
use crate::error::{Error, Result};
use crate::expr::{ExprLagrangian, ExprMap};
use crate::lagrangian::TimeLagrangian;
use crate::riemann::{constrained_spray, ConstrainedSpray, ExprMetric, ExprPotential, LevelSetConstraint, MechanicalLagrangian};
use crate::semispray::{ExprSpray, LagrangianSpray, Provenance, SemisprayField};

pub const CONFIG_VERSION: u32 = 1;

/// Top-level configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub scenario: ScenarioRef,
    /// Values substituted for `{name}` placeholders in catalog definitions.
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default)]
    pub initial: Option<InitialState>,
    #[serde(default)]
    pub outputs: Option<OutputConfig>,
    /// Per-law tolerance overrides.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub probes: Option<Vec<Probe>>,
    #[serde(default)]
    pub checks: CheckConfig,
    /// Project the state back onto the constraint after every step.
    #[serde(default)]
    pub project_constraint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Catalog(String),
    Inline(Box<SystemDef>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Expected position at a curve parameter, checked by `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub s: f64,
    pub x: Vec<f64>,
    #[serde(default = "default_probe_tol")]
    pub tolerance: f64,
}

fn default_probe_tol() -> f64 {
    1e-6
}

/// Sampling settings for the law checkers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_t_range")]
    pub t_range: [f64; 2],
    #[serde(default = "default_y_scale")]
    pub y_scale: f64,
}

fn default_samples() -> usize {
    100
}
fn default_seed() -> u64 {
    20240601
}
fn default_t_range() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_y_scale() -> f64 {
    1.0
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: default_seed(),
            t_range: default_t_range(),
            y_scale: default_y_scale(),
        }
    }
}

/// A mechanical system defined by closed-form expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDef {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub dim: usize,
    pub lagrangian: LagrangianDef,
    /// Box for the configuration variables `x`.
    #[serde(default)]
    pub domain: Option<BoxDef>,
    /// Covector components `F_i(t, x, y)`.
    #[serde(default)]
    pub force: Option<Vec<String>>,
    /// Components of `c(x)`; the constraint set is `c = 0`.
    #[serde(default)]
    pub constraint: Option<Vec<String>>,
    #[serde(default)]
    pub chart_change: Option<ChartChangeDef>,
    /// Explicit target-chart spray for compatibility checks; when absent it
    /// is constructed by the transformation law.
    #[serde(default)]
    pub target_spray: Option<Vec<String>>,
    #[serde(default)]
    pub related: Option<RelatedDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LagrangianDef {
    /// `L(t, x, y)` as one expression.
    Expression { expr: String },
    /// `½g(t, x)(y, y) − U(t, x)`.
    Mechanical {
        metric: Vec<Vec<String>>,
        #[serde(default)]
        potential: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDef {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDef {
    fn to_box(&self, n: usize) -> Result<DomainBox> {
        if self.lo.len() != n || self.hi.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.lo.len().max(self.hi.len()),
            });
        }
        Ok(DomainBox::new(self.lo.clone(), self.hi.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChartChangeDef {
    /// `φ(x)ᵢ = xᵢ + c·xᵢ³`.
    Cubic { coefficient: f64, overlap: BoxDef },
    /// Closed-form map with its closed-form inverse.
    Explicit {
        map: Vec<String>,
        inverse: Vec<String>,
        overlap: BoxDef,
    },
}

/// A second system related to this one by a diffeomorphism `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelatedDef {
    pub map: Vec<String>,
    pub target_lagrangian: String,
}

/// One catalog entry: a system with default run settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    #[serde(skip)]
    pub system: SystemDef,
    #[serde(skip)]
    pub integrator: IntegratorConfig,
    #[serde(skip)]
    pub initial: InitialState,
    #[serde(skip)]
    pub probes: Vec<Probe>,
    /// Defaults for `{name}` placeholders.
    #[serde(skip)]
    pub parameters: Vec<(&'static str, &'static str)>,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn cubic(n: usize, half: f64) -> Option<ChartChangeDef> {
    Some(ChartChangeDef::Cubic {
        coefficient: 0.1,
        overlap: BoxDef {
            lo: vec![-half; n],
            hi: vec![half; n],
        },
    })
}

fn expr_system(name: &str, description: &str, n: usize, expr: &str) -> SystemDef {
    SystemDef {
        name: name.into(),
        description: description.into(),
        dim: n,
        lagrangian: LagrangianDef::Expression { expr: expr.into() },
        domain: None,
        force: None,
        constraint: None,
        chart_change: cubic(n, 2.0),
        target_spray: None,
        related: None,
    }
}

/// The built-in scenarios.
pub fn catalog() -> Vec<CatalogEntry> {
    use std::f64::consts::PI;
    let rk4 = |h: f64, s1: f64| IntegratorConfig {
        method: Method::Rk4,
        h,
        rtol: 1e-10,
        atol: 1e-10,
        s_span: [0.0, s1],
        max_steps: 10_000_000,
    };
    let mut potential = SystemDef {
        name: "potential-td".into(),
        description: String::new(),
        dim: 2,
        lagrangian: LagrangianDef::Mechanical {
            metric: vec![strings(&["1", "0"]), strings(&["0", "x0^2"])],
            potential: Some("sin(t)*x0".into()),
        },
        domain: Some(BoxDef {
            lo: vec![0.05, f64::NEG_INFINITY],
            hi: vec![f64::INFINITY, f64::INFINITY],
        }),
        force: None,
        constraint: None,
        chart_change: Some(ChartChangeDef::Cubic {
            coefficient: 0.1,
            overlap: BoxDef {
                lo: vec![0.5, -1.0],
                hi: vec![2.0, 1.0],
            },
        }),
        target_spray: None,
        related: None,
    };
    potential.description = "polar-coordinate metric with the time-dependent potential U = sin(t)·x0".into();
    let mut forced = expr_system("forced-oscillator", "", 1, "0.5*y0^2 - 0.5*x0^2");
    forced.force = Some(strings(&["sin(t)"]));
    let bead = SystemDef {
        name: "bead-on-sphere-forced".into(),
        description: String::new(),
        dim: 3,
        lagrangian: LagrangianDef::Mechanical {
            metric: vec![strings(&["1", "0", "0"]), strings(&["0", "1", "0"]), strings(&["0", "0", "1"])],
            potential: None,
        },
        domain: None,
        force: Some(strings(&["-{eps}*sin(t)*x1", "{eps}*sin(t)*x0", "0"])),
        constraint: Some(strings(&["0.5*(x0^2 + x1^2 + x2^2 - 1)"])),
        chart_change: cubic(3, 1.5),
        target_spray: None,
        related: None,
    };
    let mut frel = expr_system("frelated-demo", "", 1, "0.5*(1 + 0.3*x0^2)^2*y0^2");
    frel.related = Some(RelatedDef {
        map: strings(&["x0 + 0.1*x0^3"]),
        target_lagrangian: "0.5*y0^2".into(),
    });

    vec![
        CatalogEntry {
            name: "free-particle",
            description: "free particle in the plane, L = ½|y|²",
            system: expr_system("free-particle", "", 2, "0.5*(y0^2 + y1^2)"),
            integrator: rk4(1e-2, 2.0),
            initial: InitialState::new(0.0, vec![0.0, 0.0], vec![1.0, 0.5]),
            probes: vec![Probe {
                s: 2.0,
                x: vec![2.0, 1.0],
                tolerance: 1e-12,
            }],
            parameters: vec![],
        },
        CatalogEntry {
            name: "harmonic-td",
            description: "oscillator with time-dependent stiffness, L = ½y² − ½k(t)x²",
            system: expr_system("harmonic-td", "", 1, "0.5*y0^2 - 0.5*({k})*x0^2"),
            integrator: rk4(1e-3, 2.0 * PI),
            initial: InitialState::new(0.0, vec![1.0], vec![0.0]),
            probes: vec![Probe {
                s: PI / 2.0,
                x: vec![0.0],
                tolerance: 1e-6,
            }],
            parameters: vec![("k", "1")],
        },
        CatalogEntry {
            name: "caldirola",
            description: "time-dependent metric g(t) = e^{2t}, L = ½e^{2t}y²",
            system: expr_system("caldirola", "", 1, "0.5*exp(2*t)*y0^2"),
            integrator: rk4(1e-3, 1.0),
            initial: InitialState::new(0.0, vec![0.0], vec![1.0]),
            probes: vec![Probe {
                s: 1.0,
                x: vec![(1.0 - (-2.0f64).exp()) / 2.0],
                tolerance: 1e-6,
            }],
            parameters: vec![],
        },
        CatalogEntry {
            name: "potential-td",
            description: "time-dependent potential on a curved metric, L = ½g(y, y) − sin(t)·x0",
            system: potential,
            integrator: rk4(1e-3, 2.0),
            initial: InitialState::new(0.0, vec![1.0, 0.0], vec![0.0, 1.0]),
            probes: vec![],
            parameters: vec![],
        },
        CatalogEntry {
            name: "forced-oscillator",
            description: "unit oscillator driven by the external force F = sin(t)",
            system: forced,
            integrator: rk4(1e-3, 2.0 * PI),
            initial: InitialState::new(0.0, vec![0.0], vec![0.0]),
            // x(s) = (sin s − s·cos s)/2
            probes: vec![Probe {
                s: PI,
                x: vec![PI / 2.0],
                tolerance: 1e-6,
            }],
            parameters: vec![],
        },
        CatalogEntry {
            name: "bead-on-sphere-forced",
            description: "bead on the unit sphere under a small time-dependent tangent force",
            system: bead,
            integrator: rk4(1e-3, 2.0 * PI),
            initial: InitialState::new(0.0, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
            probes: vec![],
            parameters: vec![("eps", "1e-3")],
        },
        CatalogEntry {
            name: "frelated-demo",
            description: "pullback of ½y² through f(x) = x + 0.1x³, paired with the original",
            system: frel,
            integrator: rk4(1e-3, 2.0),
            initial: InitialState::new(0.0, vec![0.5], vec![1.0]),
            probes: vec![],
            parameters: vec![],
        },
    ]
    .into_iter()
    .map(|mut e| {
        e.system.description = e.description.to_string();
        e
    })
    .collect()
}

pub fn catalog_entry(name: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.name == name)
}

fn substitute(src: &str, params: &BTreeMap<String, String>) -> Result<String> {
    let mut out = src.to_string();
    for (k, v) in params {
        out = out.replace(&format!("{{{k}}}"), &format!("({v})"));
    }
    if let Some(start) = out.find('{') {
        let end = out[start..].find('}').map_or(out.len(), |e| start + e + 1);
        return Err(Error::Expr(format!("unbound parameter {}", &out[start..end])));
    }
    Ok(out)
}

fn substitute_all(v: &[String], params: &BTreeMap<String, String>) -> Result<Vec<String>> {
    v.iter().map(|s| substitute(s, params)).collect()
}

/// A configuration with catalog defaults and parameters resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: SystemDef,
    pub integrator: IntegratorConfig,
    pub initial: InitialState,
    pub probes: Vec<Probe>,
    pub outputs: Option<OutputConfig>,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: CheckConfig,
    pub project_constraint: bool,
}

impl ScenarioConfig {
    pub fn from_json(src: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(src).map_err(|e| e.to_string())
    }

    pub fn from_toml(src: &str) -> std::result::Result<Self, String> {
        toml::from_str(src).map_err(|e| e.to_string())
    }

    /// Merges catalog defaults, substitutes parameters and validates
    /// dimensions.
    pub fn resolve(&self) -> Result<Resolved> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidTransition(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let (mut system, integrator, initial, probes, defaults) = match &self.scenario {
            ScenarioRef::Catalog(name) => {
                let e = catalog_entry(name).ok_or_else(|| Error::InvalidTransition(format!("unknown scenario `{name}`")))?;
                (e.system, Some(e.integrator), Some(e.initial), e.probes, e.parameters)
            }
            ScenarioRef::Inline(def) => ((**def).clone(), None, None, vec![], vec![]),
        };
        let mut params: BTreeMap<String, String> =
            defaults.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in &self.parameters {
            params.insert(k.clone(), v.clone());
        }
        system.lagrangian = match &system.lagrangian {
            LagrangianDef::Expression { expr } => LagrangianDef::Expression {
                expr: substitute(expr, &params)?,
            },
            LagrangianDef::Mechanical { metric, potential } => LagrangianDef::Mechanical {
                metric: metric.iter().map(|r| substitute_all(r, &params)).collect::<Result<_>>()?,
                potential: potential.as_deref().map(|p| substitute(p, &params)).transpose()?,
            },
        };
        system.force = system.force.as_deref().map(|f| substitute_all(f, &params)).transpose()?;
        system.constraint = system.constraint.as_deref().map(|c| substitute_all(c, &params)).transpose()?;

        let integrator = self
            .integrator
            .clone()
            .or(integrator)
            .ok_or_else(|| Error::Integrator("no integrator settings given".into()))?;
        integrator.validate()?;
        let initial = self
            .initial
            .clone()
            .or(initial)
            .ok_or_else(|| Error::Integrator("no initial state given".into()))?;
        let n = system.dim;
        if n == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        for len in [initial.x0.len(), initial.y0.len()] {
            if len != n {
                return Err(Error::Dimension { expected: n, got: len });
            }
        }
        let resolved = Resolved {
            system,
            integrator,
            initial,
            probes: self.probes.clone().unwrap_or(probes),
            outputs: self.outputs.clone(),
            tolerances: self.tolerances.clone(),
            checks: self.checks.clone(),
            project_constraint: self.project_constraint,
        };
        for p in &resolved.probes {
            if p.x.len() != n {
                return Err(Error::Dimension { expected: n, got: p.x.len() });
            }
        }
        // builds every component once so that expression and dimension
        // errors surface before any work starts
        System::build(&resolved.system)?;
        Ok(resolved)
    }
}

// ---------------------------------------------------------------------------
// Runtime objects

/// The Lagrangian of a configured system.
#[derive(Debug, Clone)]
pub enum SystemLagrangian {
    Expression(ExprLagrangian),
    Mechanical(MechanicalLagrangian<ExprMetric, ExprPotential>),
}

impl ScalarField for SystemLagrangian {
    fn dim(&self) -> usize {
        match self {
            SystemLagrangian::Expression(l) => l.dim(),
            SystemLagrangian::Mechanical(l) => l.dim(),
        }
    }
    fn domain(&self) -> &DomainBox {
        match self {
            SystemLagrangian::Expression(l) => l.domain(),
            SystemLagrangian::Mechanical(l) => l.domain(),
        }
    }
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> R {
        match self {
            SystemLagrangian::Expression(l) => l.eval(t, x, y),
            SystemLagrangian::Mechanical(l) => l.eval(t, x, y),
        }
    }
}

/// The spray whose geodesics are the motions of a configured system.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum SystemSpray {
    Free(LagrangianSpray<SystemLagrangian>),
    Forced(ForcedSpray<LagrangianSpray<SystemLagrangian>, SystemLagrangian, ExprForce>),
    Constrained(ConstrainedSpray<ExprMetric, ExprForce, ExprMap>),
}

impl SemisprayField for SystemSpray {
    fn dim(&self) -> usize {
        match self {
            SystemSpray::Free(s) => s.dim(),
            SystemSpray::Forced(s) => s.dim(),
            SystemSpray::Constrained(s) => s.dim(),
        }
    }
    fn chart(&self) -> &str {
        match self {
            SystemSpray::Free(s) => s.chart(),
            SystemSpray::Forced(s) => s.chart(),
            SystemSpray::Constrained(s) => s.chart(),
        }
    }
    fn provenance(&self) -> Provenance {
        match self {
            SystemSpray::Free(s) => s.provenance(),
            SystemSpray::Forced(s) => s.provenance(),
            SystemSpray::Constrained(s) => s.provenance(),
        }
    }
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        match self {
            SystemSpray::Free(s) => s.coefficients(t, x, y),
            SystemSpray::Forced(s) => s.coefficients(t, x, y),
            SystemSpray::Constrained(s) => s.coefficients(t, x, y),
        }
    }
    fn acceleration<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        match self {
            SystemSpray::Free(s) => s.acceleration(t, x, y),
            SystemSpray::Forced(s) => s.acceleration(t, x, y),
            SystemSpray::Constrained(s) => s.acceleration(t, x, y),
        }
    }
}

/// All runtime objects of a configured system.
#[derive(Debug, Clone)]
pub struct System {
    pub name: String,
    pub lagrangian: TimeLagrangian<SystemLagrangian>,
    pub spray: SystemSpray,
    pub force: Option<ExprForce>,
    pub metric: Option<ExprMetric>,
    pub constraint: Option<LevelSetConstraint<ExprMap>>,
    pub transition: Option<Transition<ExprMap, ExprMap>>,
    pub target_spray: Option<ExprSpray>,
    pub related: Option<(ExprMap, TimeLagrangian<ExprLagrangian>)>,
    /// Box of `x` used for sampling.
    pub x_domain: DomainBox,
}

pub const SOURCE_CHART: &str = "a";
pub const TARGET_CHART: &str = "b";

impl System {
    pub fn build(def: &SystemDef) -> Result<Self> {
        let n = def.dim;
        let x_domain = match &def.domain {
            Some(b) => b.to_box(n)?,
            None => DomainBox::unbounded(n),
        };
        let full = DomainBox::unbounded(1).product(&x_domain).product(&DomainBox::unbounded(n));
        let (field, metric) = match &def.lagrangian {
            LagrangianDef::Expression { expr } => (
                SystemLagrangian::Expression(ExprLagrangian::parse(expr, n)?.with_domain(full.clone())),
                None,
            ),
            LagrangianDef::Mechanical { metric, potential } => {
                if metric.len() != n {
                    return Err(Error::Dimension { expected: n, got: metric.len() });
                }
                let g = ExprMetric::parse(metric)?.with_domain(DomainBox::unbounded(1).product(&x_domain));
                let u = potential
                    .as_deref()
                    .map(|p| ExprPotential::parse(p, n))
                    .transpose()?
                    .map(|u| u.with_domain(DomainBox::unbounded(1).product(&x_domain)));
                (SystemLagrangian::Mechanical(MechanicalLagrangian::new(g.clone(), u)), Some(g))
            }
        };
        let lagrangian = TimeLagrangian::new(field, SOURCE_CHART);
        let force = match &def.force {
            Some(f) => {
                if f.len() != n {
                    return Err(Error::Dimension { expected: n, got: f.len() });
                }
                Some(ExprForce::parse(f)?)
            }
            None => None,
        };
        let constraint = match &def.constraint {
            Some(c) => Some(LevelSetConstraint::new(ExprMap::parse(c, n)?)?),
            None => None,
        };
        let spray = match (&constraint, &metric) {
            (Some(c), Some(g)) => {
                if let LagrangianDef::Mechanical { potential: Some(_), .. } = def.lagrangian {
                    return Err(Error::Expr("constrained systems take forces, not potentials".into()));
                }
                let f = force.clone().unwrap_or(ExprForce::parse(&vec!["0"; n])?);
                SystemSpray::Constrained(constrained_spray(g.clone(), f, c.clone(), SOURCE_CHART)?)
            }
            (Some(_), None) => {
                return Err(Error::Expr("constraints require a mechanical (metric) Lagrangian".into()));
            }
            (None, _) => {
                let base = LagrangianSpray::new(lagrangian.clone());
                match &force {
                    Some(f) => SystemSpray::Forced(forced_spray(base, lagrangian.clone(), f.clone())?),
                    None => SystemSpray::Free(base),
                }
            }
        };
        let transition = match &def.chart_change {
            Some(ChartChangeDef::Cubic { coefficient, overlap }) => {
                Some(cubic_transition(SOURCE_CHART, TARGET_CHART, n, *coefficient, overlap.to_box(n)?)?)
            }
            Some(ChartChangeDef::Explicit { map, inverse, overlap }) => Some(Transition::new(
                SOURCE_CHART,
                TARGET_CHART,
                ExprMap::parse(map, n)?,
                ExprMap::parse(inverse, n)?,
                overlap.to_box(n)?,
            )?),
            None => None,
        };
        let target_spray = match &def.target_spray {
            Some(g) => {
                if g.len() != n {
                    return Err(Error::Dimension { expected: n, got: g.len() });
                }
                Some(ExprSpray::parse(g, TARGET_CHART)?)
            }
            None => None,
        };
        let related = match &def.related {
            Some(r) => {
                if r.map.len() != n {
                    return Err(Error::Dimension { expected: n, got: r.map.len() });
                }
                Some((
                    ExprMap::parse(&r.map, n)?,
                    TimeLagrangian::new(ExprLagrangian::parse(&r.target_lagrangian, n)?, "target"),
                ))
            }
            None => None,
        };
        Ok(Self {
            name: def.name.clone(),
            lagrangian,
            spray,
            force,
            metric,
            constraint,
            transition,
            target_spray,
            related,
            x_domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.lagrangian.dim()
    }
}
