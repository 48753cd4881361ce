//! Integration of semispray geodesics, Euler–Lagrange and energy audits,
//! and external forces.
//!
//! The curve parameter `s` drives the time slot: `t = t₀ + (s − s₀)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diffkernel::{gradient_and_directional, Dual, DomainBox, Real, ScalarField};
use crate::error::{Error, Result};
use crate::expr::{parse_all, Expr, Vars};
use crate::lagrangian::{fiber_solve, TimeLagrangian};
use crate::linalg::{dot, norm_inf, sub, values};
use crate::semispray::{lagrangian_vector_field_at, require_provenance, Provenance, SemisprayField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4,
    /// Dormand–Prince 5(4) with step-size control.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step, or initial step for the adaptive method.
    pub h: f64,
    #[serde(default = "default_tol")]
    pub rtol: f64,
    #[serde(default = "default_tol")]
    pub atol: f64,
    pub s_span: [f64; 2],
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_steps() -> usize {
    10_000_000
}

impl IntegratorConfig {
    pub fn rk4(h: f64, s0: f64, s1: f64) -> Self {
        Self {
            method: Method::Rk4,
            h,
            rtol: default_tol(),
            atol: default_tol(),
            s_span: [s0, s1],
            max_steps: default_max_steps(),
        }
    }

    pub fn adaptive(rtol: f64, atol: f64, s0: f64, s1: f64) -> Self {
        Self {
            method: Method::Adaptive,
            h: (s1 - s0) * 1e-3,
            rtol,
            atol,
            s_span: [s0, s1],
            max_steps: default_max_steps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [s0, s1] = self.s_span;
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Integrator(format!("step {} must be positive and finite", self.h)));
        }
        if !(s1 > s0) || !s0.is_finite() || !s1.is_finite() {
            return Err(Error::Integrator(format!("span [{s0}, {s1}] must satisfy s0 < s1")));
        }
        if self.method == Method::Adaptive && !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Integrator("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Integrator("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Initial data `(t₀, x₀, y₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

impl InitialState {
    pub fn new(t0: f64, x0: Vec<f64>, y0: Vec<f64>) -> Self {
        Self { t0, x0, y0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub s: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `x″` reconstructed from the field at this state.
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorMeta {
    pub method: Method,
    pub h: f64,
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub chart: String,
    pub provenance: Provenance,
    pub meta: IntegratorMeta,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |p| p.x.len())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectories hold at least the initial sample")
    }

    /// State `(x, y)` at parameter `s`, by cubic Hermite interpolation of
    /// positions and quadratic-consistent Hermite interpolation of velocities.
    pub fn at(&self, s: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if s < first.s || s > last.s {
            return None;
        }
        let k = match self.samples.binary_search_by(|p| p.s.total_cmp(&s)) {
            Ok(k) => return Some((self.samples[k].x.clone(), self.samples[k].y.clone())),
            Err(k) => k,
        };
        let (p0, p1) = (&self.samples[k - 1], &self.samples[k]);
        let h = p1.s - p0.s;
        let u = (s - p0.s) / h;
        let n = p0.x.len();
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        // quintic Hermite on (x, y, a) at both ends
        let u2 = u * u;
        let u3 = u2 * u;
        let u4 = u3 * u;
        let u5 = u4 * u;
        let h00 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5;
        let h10 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5;
        let h20 = 0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5;
        let h01 = 10.0 * u3 - 15.0 * u4 + 6.0 * u5;
        let h11 = -4.0 * u3 + 7.0 * u4 - 3.0 * u5;
        let h21 = 0.5 * u3 - u4 + 0.5 * u5;
        let d00 = (-30.0 * u2 + 60.0 * u3 - 30.0 * u4) / h;
        let d10 = 1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4;
        let d20 = (u - 4.5 * u2 + 6.0 * u3 - 2.5 * u4) * h;
        let d01 = (30.0 * u2 - 60.0 * u3 + 30.0 * u4) / h;
        let d11 = -12.0 * u2 + 28.0 * u3 - 15.0 * u4;
        let d21 = (1.5 * u2 - 4.0 * u3 + 2.5 * u4) * h;
        for i in 0..n {
            x[i] = h00 * p0.x[i]
                + h10 * h * p0.y[i]
                + h20 * h * h * p0.a[i]
                + h01 * p1.x[i]
                + h11 * h * p1.y[i]
                + h21 * h * h * p1.a[i];
            y[i] = d00 * p0.x[i] + d10 * p0.y[i] + d20 * p0.a[i] + d01 * p1.x[i] + d11 * p1.y[i] + d21 * p1.a[i];
        }
        Some((x, y))
    }

    /// CSV with header `s,t,x0..,y0..`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let n = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["s".to_string(), "t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("y{i}")));
        w.write_record(&header)?;
        for p in &self.samples {
            let mut row = vec![p.s.to_string(), p.t.to_string()];
            row.extend(p.x.iter().map(f64::to_string));
            row.extend(p.y.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Per-sample residuals of an audit along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSeries {
    pub law: String,
    pub s: Vec<f64>,
    pub residual: Vec<f64>,
}

impl ResidualSeries {
    pub fn max(&self) -> f64 {
        self.residual
            .iter()
            .fold(0.0f64, |m, &r| if r.is_nan() || m.is_nan() { f64::NAN } else { m.max(r) })
    }

    /// CSV with header `s,residual`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "residual"])?;
        for (s, r) in self.s.iter().zip(&self.residual) {
            w.write_record([s.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Optional in-place correction of `(t, x, y)` after every accepted step.
pub type PostStep<'a> = &'a dyn Fn(f64, &mut [f64], &mut [f64]) -> Result<()>;

/// Solves `x″ = accel(t, x, x′)` with `t = t₀ + (s − s₀)`.
pub fn integrate_second_order<A>(
    accel: A,
    init: &InitialState,
    cfg: &IntegratorConfig,
    post_step: Option<PostStep<'_>>,
) -> Result<(Vec<TrajectorySample>, IntegratorMeta)>
where
    A: Fn(f64, &[f64], &[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let n = init.x0.len();
    if init.y0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: init.y0.len(),
        });
    }
    let [s0, s1] = cfg.s_span;
    let time = |s: f64| init.t0 + (s - s0);
    let rhs = |s: f64, state: &[f64]| -> Result<Vec<f64>> {
        let (x, y) = state.split_at(n);
        let a = accel(time(s), x, y).map_err(|e| match e {
            Error::Domain { .. } | Error::StepTooLarge { .. } => Error::DomainEscape { s, source: Box::new(e) },
            other => other,
        })?;
        let mut d = Vec::with_capacity(2 * n);
        d.extend_from_slice(y);
        d.extend_from_slice(&a);
        Ok(d)
    };

    let mut state: Vec<f64> = init.x0.iter().chain(&init.y0).copied().collect();
    let mut s = s0;
    let mut deriv = rhs(s, &state)?;
    let mut samples = vec![sample(s, time(s), &state, &deriv, n)];
    let mut meta = IntegratorMeta {
        method: cfg.method,
        h: cfg.h,
        steps: 0,
        rejected: 0,
    };

    match cfg.method {
        Method::Rk4 => {
            let total = ((s1 - s0) / cfg.h).ceil().max(1.0);
            if total > cfg.max_steps as f64 {
                return Err(Error::StepLimit { max_steps: cfg.max_steps });
            }
            let total = total as usize;
            for k in 1..=total {
                let s_next = if k == total { s1 } else { s0 + k as f64 * cfg.h };
                let h = s_next - s;
                state = rk4_step(&rhs, s, &state, &deriv, h)?;
                s = s_next;
                accept(&mut s, &mut state, &mut deriv, &mut samples, &rhs, post_step, time, n)?;
                meta.steps += 1;
            }
        }
        Method::Adaptive => {
            let mut h = cfg.h.min(s1 - s0);
            while s < s1 {
                if meta.steps + meta.rejected >= cfg.max_steps {
                    return Err(Error::StepLimit { max_steps: cfg.max_steps });
                }
                let last = s + h >= s1;
                if last {
                    h = s1 - s;
                }
                let (next, err) = dp45_step(&rhs, s, &state, &deriv, h)?;
                let scale: Vec<f64> = state
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| cfg.atol + cfg.rtol * a.abs().max(b.abs()))
                    .collect();
                let e = (err.iter().zip(&scale).map(|(e, sc)| (e / sc).powi(2)).sum::<f64>() / (2 * n).max(1) as f64)
                    .sqrt();
                if !e.is_finite() {
                    return Err(Error::NonFinite { s: s + h });
                }
                if e <= 1.0 {
                    s = if last { s1 } else { s + h };
                    state = next;
                    accept(&mut s, &mut state, &mut deriv, &mut samples, &rhs, post_step, time, n)?;
                    meta.steps += 1;
                } else {
                    meta.rejected += 1;
                }
                let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                h *= factor;
                if h < 1e-14 * (1.0 + s.abs()) {
                    return Err(Error::Integrator(format!("step size underflow at s = {s}")));
                }
            }
        }
    }
    Ok((samples, meta))
}

fn sample(s: f64, t: f64, state: &[f64], deriv: &[f64], n: usize) -> TrajectorySample {
    TrajectorySample {
        s,
        t,
        x: state[..n].to_vec(),
        y: state[n..].to_vec(),
        a: deriv[n..].to_vec(),
    }
}

#[allow(clippy::too_many_arguments)]
fn accept<F>(
    s: &mut f64,
    state: &mut [f64],
    deriv: &mut Vec<f64>,
    samples: &mut Vec<TrajectorySample>,
    rhs: &F,
    post_step: Option<PostStep<'_>>,
    time: impl Fn(f64) -> f64,
    n: usize,
) -> Result<()>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { s: *s });
    }
    if let Some(hook) = post_step {
        let (x, y) = state.split_at_mut(n);
        hook(time(*s), x, y)?;
    }
    *deriv = rhs(*s, state)?;
    samples.push(sample(*s, time(*s), state, deriv, n));
    Ok(())
}

fn combine(base: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = base.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let inc: f64 = terms.iter().map(|(c, k)| c * k[i]).sum();
        *o += h * inc;
    }
    out
}

fn rk4_step<F>(rhs: &F, s: f64, y: &[f64], k1: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k2 = rhs(s + 0.5 * h, &combine(y, h, &[(0.5, k1)]))?;
    let k3 = rhs(s + 0.5 * h, &combine(y, h, &[(0.5, &k2)]))?;
    let k4 = rhs(s + h, &combine(y, h, &[(1.0, &k3)]))?;
    Ok((0..y.len())
        .map(|i| y[i] + h * ((k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0))
        .collect())
}

/// One Dormand–Prince step: fifth-order solution and the embedded error.
fn dp45_step<F>(rhs: &F, s: f64, y: &[f64], k1: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k2 = rhs(s + h / 5.0, &combine(y, h, &[(1.0 / 5.0, k1)]))?;
    let k3 = rhs(s + 3.0 * h / 10.0, &combine(y, h, &[(3.0 / 40.0, k1), (9.0 / 40.0, &k2)]))?;
    let k4 = rhs(
        s + 4.0 * h / 5.0,
        &combine(y, h, &[(44.0 / 45.0, k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)]),
    )?;
    let k5 = rhs(
        s + 8.0 * h / 9.0,
        &combine(
            y,
            h,
            &[
                (19372.0 / 6561.0, k1),
                (-25360.0 / 2187.0, &k2),
                (64448.0 / 6561.0, &k3),
                (-212.0 / 729.0, &k4),
            ],
        ),
    )?;
    let k6 = rhs(
        s + h,
        &combine(
            y,
            h,
            &[
                (9017.0 / 3168.0, k1),
                (-355.0 / 33.0, &k2),
                (46732.0 / 5247.0, &k3),
                (49.0 / 176.0, &k4),
                (-5103.0 / 18656.0, &k5),
            ],
        ),
    )?;
    let b5 = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    let next = combine(
        y,
        h,
        &[(b5[0], k1), (b5[2], &k3), (b5[3], &k4), (b5[4], &k5), (b5[5], &k6)],
    );
    let k7 = rhs(s + h, &next)?;
    let b4 = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let ks: [&[f64]; 7] = [k1, &k2, &k3, &k4, &k5, &k6, &k7];
    let err: Vec<f64> = (0..y.len())
        .map(|i| {
            let d: f64 = (0..7)
                .map(|j| (if j < 6 { b5[j] } else { 0.0 } - b4[j]) * ks[j][i])
                .sum();
            h * d
        })
        .collect();
    Ok((next, err))
}

/// Geodesics of a semispray: `x″ + G(t, x, x′) = 0`.
pub fn integrate<S: SemisprayField>(spray: &S, init: &InitialState, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate_with(spray, init, cfg, None)
}

/// As [`integrate`], with an optional post-step correction.
pub fn integrate_with<S: SemisprayField>(
    spray: &S,
    init: &InitialState,
    cfg: &IntegratorConfig,
    post_step: Option<PostStep<'_>>,
) -> Result<Trajectory> {
    if init.x0.len() != spray.dim() {
        return Err(Error::Dimension {
            expected: spray.dim(),
            got: init.x0.len(),
        });
    }
    let accel = |t: f64, x: &[f64], y: &[f64]| -> Result<Vec<f64>> {
        Ok(spray.coefficients(t, x, y)?.iter().map(|g| -g).collect())
    };
    let (samples, meta) = integrate_second_order(accel, init, cfg, post_step)?;
    Ok(Trajectory {
        samples,
        chart: spray.chart().to_string(),
        provenance: spray.provenance(),
        meta,
    })
}

/// Solves `x″ = X₂(t, x, x′)` for the Lagrangian vector field directly.
pub fn integrate_lagrangian<L: ScalarField>(
    l: &TimeLagrangian<L>,
    init: &InitialState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let accel = |t: f64, x: &[f64], y: &[f64]| lagrangian_vector_field_at(l, t, x, y);
    let (samples, meta) = integrate_second_order(accel, init, cfg, None)?;
    Ok(Trajectory {
        samples,
        chart: l.chart().to_string(),
        provenance: Provenance::LagrangianVectorField,
        meta,
    })
}

// ---------------------------------------------------------------------------
// External forces

/// A covector-valued force `F(t, x, y)`.
pub trait ExternalForce: Send + Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> &DomainBox;
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Vec<R>;
}

impl<T: ExternalForce + ?Sized> ExternalForce for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn domain(&self) -> &DomainBox {
        (**self).domain()
    }
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Vec<R> {
        (**self).eval(t, x, y)
    }
}

/// Evaluates a force after the dimension and domain checks.
pub fn eval_force<R: Real, F: ExternalForce>(f: &F, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
    if x.len() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: x.len(),
        });
    }
    let mut c = vec![t.value()];
    c.extend(values(x));
    c.extend(values(y));
    f.domain().check(&c)?;
    Ok(f.eval(t, x, y))
}

#[derive(Debug, Clone)]
pub struct ZeroForce {
    domain: DomainBox,
}

impl ZeroForce {
    pub fn new(n: usize) -> Self {
        Self {
            domain: DomainBox::unbounded(1 + 2 * n),
        }
    }
}

impl ExternalForce for ZeroForce {
    fn dim(&self) -> usize {
        (self.domain.dim() - 1) / 2
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, _t: R, x: &[R], _y: &[R]) -> Vec<R> {
        vec![R::zero(); x.len()]
    }
}

/// Force components given by closed-form expressions in `t, x, y`.
#[derive(Debug, Clone)]
pub struct ExprForce {
    exprs: Vec<Expr>,
    domain: DomainBox,
}

impl ExprForce {
    pub fn parse<S: AsRef<str>>(srcs: &[S]) -> Result<Self> {
        let n = srcs.len();
        Ok(Self {
            exprs: parse_all(srcs, Vars::phase(n))?,
            domain: DomainBox::unbounded(1 + 2 * n),
        })
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        self.domain = domain;
        self
    }
}

impl ExternalForce for ExprForce {
    fn dim(&self) -> usize {
        self.exprs.len()
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Vec<R> {
        self.exprs.iter().map(|e| e.eval(t, x, y)).collect()
    }
}

/// `Y₂` solving `∂₃²L·Y₂ = F(v)`.
pub fn vertical_from_force_at<R: Real, L: ScalarField, F: ExternalForce>(
    l: &TimeLagrangian<L>,
    f: &F,
    t: R,
    x: &[R],
    y: &[R],
) -> Result<Vec<R>> {
    let jet = l.jet_at(t, x, y)?;
    fiber_solve(&jet.dy_dy, &eval_force(f, t, x, y)?)
}

pub fn vertical_from_force<L: ScalarField, F: ExternalForce>(
    l: &TimeLagrangian<L>,
    f: &F,
    v: &crate::point::TangentSample,
) -> Result<Vec<f64>> {
    vertical_from_force_at(l, f, v.t, &v.x, &v.y)
}

/// Spray of the forced motion `X = Z + Y`: `G_forced = G − Y₂`.
#[derive(Debug, Clone)]
pub struct ForcedSpray<S, L, F> {
    base: S,
    lagrangian: TimeLagrangian<L>,
    force: F,
}

impl<S: SemisprayField, L: ScalarField, F: ExternalForce> SemisprayField for ForcedSpray<S, L, F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn chart(&self) -> &str {
        self.base.chart()
    }
    fn provenance(&self) -> Provenance {
        Provenance::Forced
    }
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        let g = self.base.coefficients(t, x, y)?;
        let y2 = vertical_from_force_at(&self.lagrangian, &self.force, t, x, y)?;
        Ok(sub(&g, &y2))
    }
}

impl<S, L, F> ForcedSpray<S, L, F> {
    pub fn force(&self) -> &F {
        &self.force
    }

    pub fn lagrangian(&self) -> &TimeLagrangian<L> {
        &self.lagrangian
    }
}

/// Adds the vertical field of `force` to a spray derived from `l`.
pub fn forced_spray<S: SemisprayField, L: ScalarField, F: ExternalForce>(
    spray: S,
    l: TimeLagrangian<L>,
    force: F,
) -> Result<ForcedSpray<S, L, F>> {
    require_provenance(&spray, Provenance::LagrangianVectorField)?;
    if force.dim() != l.dim() || spray.dim() != l.dim() {
        return Err(Error::Dimension {
            expected: l.dim(),
            got: force.dim(),
        });
    }
    Ok(ForcedSpray {
        base: spray,
        lagrangian: l,
        force,
    })
}

// ---------------------------------------------------------------------------
// Audits

/// Gradient of `L` and its derivative along the curve direction `(1, y, a)`.
fn curve_jet<L: ScalarField>(l: &TimeLagrangian<L>, p: &TrajectorySample) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut dir = vec![1.0];
    dir.extend_from_slice(&p.y);
    dir.extend_from_slice(&p.a);
    gradient_and_directional(l.field(), p.t, &p.x, &p.y, &dir)
}

/// Force and its derivative along the curve.
fn curve_force<F: ExternalForce>(f: &F, p: &TrajectorySample) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = Dual::new(p.t, 1.0);
    let x: Vec<Dual<f64>> = p.x.iter().zip(&p.y).map(|(&x, &y)| Dual::new(x, y)).collect();
    let y: Vec<Dual<f64>> = p.y.iter().zip(&p.a).map(|(&y, &a)| Dual::new(y, a)).collect();
    let out = eval_force(f, t, &x, &y)?;
    Ok((out.iter().map(|v| v.re).collect(), out.iter().map(|v| v.eps).collect()))
}

/// Running integral with the end-corrected trapezoid rule
/// `∫ₐᵇ f ≈ h(fₐ + f_b)/2 + h²(f′ₐ − f′_b)/12`.
struct CorrectedQuadrature {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CorrectedQuadrature {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            comp: vec![0.0; n],
        }
    }

    fn add(&mut self, h: f64, fa: &[f64], dfa: &[f64], fb: &[f64], dfb: &[f64]) {
        for i in 0..self.sum.len() {
            let inc = 0.5 * h * (fa[i] + fb[i]) + h * h / 12.0 * (dfa[i] - dfb[i]);
            // Kahan summation keeps long spans out of the roundoff floor.
            let y = inc - self.comp[i];
            let t = self.sum[i] + y;
            self.comp[i] = (t - self.sum[i]) - y;
            self.sum[i] = t;
        }
    }
}

fn require_len(traj: &Trajectory, needed: usize) -> Result<()> {
    if traj.len() < needed {
        Err(Error::TrajectoryTooShort {
            len: traj.len(),
            needed,
        })
    } else {
        Ok(())
    }
}

/// Euler–Lagrange audit in integrated form.
///
/// With `p = ∂₃L` and `f = ∂₂L + F` along the curve, sample `k` reports the
/// max-norm of the momentum defect `p(s_k) − p(s₀) − ∫ f ds` together with
/// the kinematic defect `x(s_k) − x(s₀) − ∫ y ds`. Both integrals use the
/// end-corrected trapezoid rule, whose endpoint derivatives come from the
/// jet of `L` along `(1, y, x″)` with `x″` taken from the spray. The
/// residual vanishes on exact solutions and is of fourth order in the step
/// for RK4 trajectories.
pub fn el_residual<L: ScalarField>(l: &TimeLagrangian<L>, traj: &Trajectory) -> Result<ResidualSeries> {
    el_residual_impl::<L, ZeroForce>(l, None, traj, "euler-lagrange")
}

/// [`el_residual`] for the forced equation `d/ds ∂₃L − ∂₂L − F = 0`.
pub fn el_residual_forced<L: ScalarField, F: ExternalForce>(
    l: &TimeLagrangian<L>,
    force: &F,
    traj: &Trajectory,
) -> Result<ResidualSeries> {
    el_residual_impl(l, Some(force), traj, "euler-lagrange-forced")
}

fn el_residual_impl<L: ScalarField, F: ExternalForce>(
    l: &TimeLagrangian<L>,
    force: Option<&F>,
    traj: &Trajectory,
    law: &str,
) -> Result<ResidualSeries> {
    require_len(traj, 3)?;
    let n = l.dim();
    let terms = |p: &TrajectorySample| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (grad, dgrad) = curve_jet(l, p)?;
        let mom = grad[1 + n..].to_vec();
        let mut f = grad[1..=n].to_vec();
        let mut df = dgrad[1..=n].to_vec();
        if let Some(force) = force {
            let (fv, dfv) = curve_force(force, p)?;
            for i in 0..n {
                f[i] += fv[i];
                df[i] += dfv[i];
            }
        }
        Ok((mom, f, df))
    };
    let first = &traj.samples[0];
    let (p0, mut f_prev, mut df_prev) = terms(first)?;
    let mut mom_int = CorrectedQuadrature::new(n);
    let mut pos_int = CorrectedQuadrature::new(n);
    let mut s = vec![first.s];
    let mut residual = vec![0.0];
    for w in traj.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.s - a.s;
        let (pb, fb, dfb) = terms(b)?;
        mom_int.add(h, &f_prev, &df_prev, &fb, &dfb);
        pos_int.add(h, &a.y, &a.a, &b.y, &b.a);
        let mom_defect: Vec<f64> = (0..n).map(|i| (pb[i] - p0[i]) - mom_int.sum[i]).collect();
        let pos_defect: Vec<f64> = (0..n).map(|i| (b.x[i] - first.x[i]) - pos_int.sum[i]).collect();
        s.push(b.s);
        residual.push(norm_inf(&mom_defect).max(norm_inf(&pos_defect)));
        f_prev = fb;
        df_prev = dfb;
    }
    Ok(ResidualSeries {
        law: law.into(),
        s,
        residual,
    })
}

/// Local variant of the Euler–Lagrange audit: central differences of
/// `∂₃L` at interior samples of a uniform grid, `(p_{k+1} − p_{k−1})/2h − ∂₂L`.
pub fn el_residual_local<L: ScalarField>(l: &TimeLagrangian<L>, traj: &Trajectory) -> Result<ResidualSeries> {
    require_len(traj, 3)?;
    let n = l.dim();
    let mut s = Vec::new();
    let mut residual = Vec::new();
    for w in traj.samples.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        let pa = l.jet(&crate::point::TangentSample::new(a.t, a.x.clone(), a.y.clone()))?.dy;
        let jb = l.jet(&crate::point::TangentSample::new(b.t, b.x.clone(), b.y.clone()))?;
        let pc = l.jet(&crate::point::TangentSample::new(c.t, c.x.clone(), c.y.clone()))?.dy;
        let h = c.s - a.s;
        let r: Vec<f64> = (0..n).map(|i| (pc[i] - pa[i]) / h - jb.dx[i]).collect();
        s.push(b.s);
        residual.push(norm_inf(&r));
    }
    Ok(ResidualSeries {
        law: "euler-lagrange-local".into(),
        s,
        residual,
    })
}

/// Energy audit `E(s_k) − E(s₀) + ∫(∂₁L − F·y) ds`, the integrated form of
/// `dE/ds + ∂₁L − F·y = 0`.
pub fn energy_rate_audit<L: ScalarField>(l: &TimeLagrangian<L>, traj: &Trajectory) -> Result<ResidualSeries> {
    energy_audit_impl::<L, ZeroForce>(l, None, traj)
}

pub fn energy_rate_audit_forced<L: ScalarField, F: ExternalForce>(
    l: &TimeLagrangian<L>,
    force: &F,
    traj: &Trajectory,
) -> Result<ResidualSeries> {
    energy_audit_impl(l, Some(force), traj)
}

fn energy_audit_impl<L: ScalarField, F: ExternalForce>(
    l: &TimeLagrangian<L>,
    force: Option<&F>,
    traj: &Trajectory,
) -> Result<ResidualSeries> {
    require_len(traj, 3)?;
    // E = ∂₃L·y − L; rate term r = ∂₁L − F·y.
    let terms = |p: &TrajectorySample| -> Result<(f64, f64, f64)> {
        let v = crate::point::TangentSample::new(p.t, p.x.clone(), p.y.clone());
        let e = crate::lagrangian::energy(l, &v)?;
        let (grad, dgrad) = curve_jet(l, p)?;
        let mut r = grad[0];
        let mut dr = dgrad[0];
        if let Some(force) = force {
            let (fv, dfv) = curve_force(force, p)?;
            r -= dot(&fv, &p.y);
            dr -= dot(&dfv, &p.y) + dot(&fv, &p.a);
        }
        Ok((e, r, dr))
    };
    let first = &traj.samples[0];
    let (e0, mut r_prev, mut dr_prev) = terms(first)?;
    let mut int = CorrectedQuadrature::new(1);
    let mut s = vec![first.s];
    let mut residual = vec![0.0];
    for w in traj.samples.windows(2) {
        let h = w[1].s - w[0].s;
        let (e, r, dr) = terms(&w[1])?;
        int.add(h, &[r_prev], &[dr_prev], &[r], &[dr]);
        s.push(w[1].s);
        residual.push((e - e0 + int.sum[0]).abs());
        r_prev = r;
        dr_prev = dr;
    }
    Ok(ResidualSeries {
        law: "energy-rate".into(),
        s,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ExprLagrangian;
    use crate::semispray::{CanonicalSpray, ExprSpray, LagrangianSpray};
    use std::f64::consts::PI;

    fn lag(src: &str, n: usize) -> TimeLagrangian<ExprLagrangian> {
        TimeLagrangian::new(ExprLagrangian::parse(src, n).unwrap(), "a")
    }

    #[test]
    fn straight_line() {
        let g = ExprSpray::zero(1, "a");
        let tr = integrate(&g, &InitialState::new(0.0, vec![0.0], vec![1.0]), &IntegratorConfig::rk4(0.1, 0.0, 2.0)).unwrap();
        assert!((tr.last().x[0] - 2.0).abs() < 1e-14);
        assert_eq!(tr.last().s, 2.0);
        assert_eq!(tr.len(), 21);
    }

    #[test]
    fn harmonic_quarter_period() {
        let g = ExprSpray::parse(&["x0"], "a").unwrap();
        let tr = integrate(&g, &InitialState::new(0.0, vec![1.0], vec![0.0]), &IntegratorConfig::rk4(1e-3, 0.0, 2.0)).unwrap();
        let (x, y) = tr.at(PI / 2.0).unwrap();
        assert!(x[0].abs() < 1e-6);
        assert!((y[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn caldirola_closed_form() {
        let l = lag("0.5*exp(2*t)*y0^2", 1);
        let spray = LagrangianSpray::new(l.clone());
        let tr = integrate(&spray, &InitialState::new(0.0, vec![0.0], vec![1.0]), &IntegratorConfig::rk4(1e-3, 0.0, 1.0)).unwrap();
        let want = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((tr.last().x[0] - want).abs() < 1e-6);
        // the canonical spray has G = 0 and only gives straight lines
        let c = integrate(&CanonicalSpray::new(l), &InitialState::new(0.0, vec![0.0], vec![1.0]), &IntegratorConfig::rk4(1e-2, 0.0, 1.0)).unwrap();
        assert!((c.last().x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let g = ExprSpray::parse(&["x0"], "a").unwrap();
        let cfg = IntegratorConfig::adaptive(1e-11, 1e-12, 0.0, 2.0 * PI);
        let tr = integrate(&g, &InitialState::new(0.0, vec![1.0], vec![0.0]), &cfg).unwrap();
        assert_eq!(tr.last().s, 2.0 * PI);
        assert!((tr.last().x[0] - 1.0).abs() < 1e-8);
        assert!(tr.meta.steps < 2000);
    }

    #[test]
    fn el_residual_detects_corruption() {
        let l = lag("0.5*y0^2 - 0.5*x0^2", 1);
        let spray = LagrangianSpray::new(l.clone());
        let mut tr = integrate(&spray, &InitialState::new(0.0, vec![1.0], vec![0.0]), &IntegratorConfig::rk4(1e-3, 0.0, 2.0 * PI)).unwrap();
        assert!(el_residual(&l, &tr).unwrap().max() <= 1e-6);
        assert!(energy_rate_audit(&l, &tr).unwrap().max() <= 1e-8);
        for p in &mut tr.samples {
            p.x[0] += 1e-2;
        }
        assert!(el_residual(&l, &tr).unwrap().max() >= 1e-3);
        assert!(energy_rate_audit(&l, &tr).unwrap().max() >= 1e-3);
    }

    #[test]
    fn free_particle_residual() {
        let l = lag("0.5*(y0^2 + y1^2)", 2);
        let tr = integrate(
            &LagrangianSpray::new(l.clone()),
            &InitialState::new(0.0, vec![0.0, 1.0], vec![1.0, -2.0]),
            &IntegratorConfig::rk4(1e-2, 0.0, 1.0),
        )
        .unwrap();
        assert!(el_residual(&l, &tr).unwrap().max() <= 1e-10);
        assert!(el_residual_local(&l, &tr).unwrap().max() <= 1e-10);
    }

    #[test]
    fn forced_examples() {
        let l = lag("0.5*y0^2", 1);
        let f = ExprForce::parse(&["sin(t)"]).unwrap();
        let v = crate::point::TangentSample::new(0.3, vec![0.0], vec![0.0]);
        assert!((vertical_from_force(&l, &f, &v).unwrap()[0] - 0.3f64.sin()).abs() < 1e-15);
        assert_eq!(vertical_from_force(&l, &ZeroForce::new(1), &v).unwrap(), vec![0.0]);

        let cald = lag("0.5*exp(2*t)*y0^2", 1);
        let one = ExprForce::parse(&["1"]).unwrap();
        let at = |t: f64| vertical_from_force(&cald, &one, &crate::point::TangentSample::new(t, vec![0.0], vec![1.0])).unwrap()[0];
        assert!((at(0.0) - 1.0).abs() < 1e-15);
        assert!((at(2f64.ln()) - 0.25).abs() < 1e-15);

        let spray = forced_spray(LagrangianSpray::new(l.clone()), l.clone(), f.clone()).unwrap();
        let tr = integrate(&spray, &InitialState::new(0.0, vec![0.0], vec![0.0]), &IntegratorConfig::rk4(1e-3, 0.0, PI)).unwrap();
        assert!((tr.last().x[0] - PI).abs() < 1e-6);
        assert!(el_residual_forced(&l, &f, &tr).unwrap().max() <= 1e-6);
        assert!(el_residual(&l, &tr).unwrap().max() > 1e-2);
        assert!(energy_rate_audit_forced(&l, &f, &tr).unwrap().max() <= 1e-8);

        assert!(forced_spray(CanonicalSpray::new(l.clone()), l, f).is_err());
    }

    #[test]
    fn zero_section_semantics() {
        let l = lag("0.5*y0^2*(1 + 0.5*sin(t)) - 0.5*x0^2", 1);
        let init = InitialState::new(0.2, vec![0.4], vec![-0.3]);
        let cfg = IntegratorConfig::rk4(1e-2, 0.0, 3.0);
        let a = integrate(&LagrangianSpray::new(l.clone()), &init, &cfg).unwrap();
        let b = integrate_lagrangian(&l, &init, &cfg).unwrap();
        for (p, q) in a.samples.iter().zip(&b.samples) {
            assert!(norm_inf(&sub(&p.x, &q.x)) <= 1e-9);
            assert_eq!(p.t, 0.2 + p.s);
        }
    }

    #[test]
    fn config_validation_and_csv() {
        assert!(IntegratorConfig::rk4(0.0, 0.0, 1.0).validate().is_err());
        assert!(IntegratorConfig::rk4(0.1, 1.0, 1.0).validate().is_err());
        let g = ExprSpray::zero(1, "a");
        let tr = integrate(&g, &InitialState::new(0.0, vec![0.0], vec![1.0]), &IntegratorConfig::rk4(0.5, 0.0, 1.0)).unwrap();
        assert_eq!(tr.to_csv_string(), "s,t,x0,y0\n0,0,0,1\n0.5,0.5,0.5,1\n1,1,1,1\n");
        let mut cfg = IntegratorConfig::rk4(1e-3, 0.0, 1.0);
        cfg.max_steps = 10;
        assert!(matches!(
            integrate(&g, &InitialState::new(0.0, vec![0.0], vec![1.0]), &cfg),
            Err(Error::StepLimit { .. })
        ));
    }

    #[test]
    fn domain_escape_is_reported() {
        let l = TimeLagrangian::new(
            ExprLagrangian::parse("0.5*y0^2", 1)
                .unwrap()
                .with_domain(DomainBox::new(vec![f64::NEG_INFINITY, -1.0, f64::NEG_INFINITY], vec![f64::INFINITY, 1.0, f64::INFINITY])),
            "a",
        );
        let err = integrate(&LagrangianSpray::new(l), &InitialState::new(0.0, vec![0.0], vec![1.0]), &IntegratorConfig::rk4(0.01, 0.0, 2.0)).unwrap_err();
        assert!(matches!(err, Error::DomainEscape { .. }));
    }
}
