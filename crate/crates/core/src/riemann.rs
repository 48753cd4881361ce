//! Riemannian mechanics: metric sprays, potentials, time-dependent metric
//! families, musical isomorphisms and holonomic constraints with perfect
//! reaction forces.

use crate::diffkernel::{map_jet_at, Dual, DomainBox, MapJet, Real, ScalarField, VectorMap};
use crate::dynamics::{
    eval_force, integrate_with, ExternalForce, InitialState, IntegratorConfig, ResidualSeries, Trajectory,
};
use crate::error::{Error, Result};
use crate::expr::{parse_all, Expr, Vars};
use crate::lagrangian::TimeLagrangian;
use crate::linalg::{add, neg, norm_inf, sub, values, Matrix};
use crate::semispray::{Provenance, SemisprayField};

/// On-constraint tolerance for initial data.
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// Smallest admissible singular value of `dc`.
pub const RANK_TOL: f64 = 1e-10;

/// A symmetric positive-definite metric `g(t, x)`.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    /// Box over `(t, x)`.
    fn domain(&self) -> &DomainBox;
    fn eval<R: Real>(&self, t: R, x: &[R]) -> Matrix<R>;
}

impl<T: MetricField + ?Sized> MetricField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn domain(&self) -> &DomainBox {
        (**self).domain()
    }
    fn eval<R: Real>(&self, t: R, x: &[R]) -> Matrix<R> {
        (**self).eval(t, x)
    }
}

/// A potential `U(t, x)`.
pub trait PotentialField: Send + Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> &DomainBox;
    fn eval<R: Real>(&self, t: R, x: &[R]) -> R;
}

impl<T: PotentialField + ?Sized> PotentialField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn domain(&self) -> &DomainBox {
        (**self).domain()
    }
    fn eval<R: Real>(&self, t: R, x: &[R]) -> R {
        (**self).eval(t, x)
    }
}

fn check_tx<R: Real>(domain: &DomainBox, n: usize, t: R, x: &[R]) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len() });
    }
    let mut c = vec![t.value()];
    c.extend(values(x));
    domain.check(&c)
}

/// Metric with one closed-form expression in `t, x` per entry. Only the
/// upper triangle is evaluated, so symmetry is exact.
#[derive(Debug, Clone)]
pub struct ExprMetric {
    entries: Vec<Vec<Expr>>,
    domain: DomainBox,
}

impl ExprMetric {
    /// Parses a full matrix of entries; mirrored entries must agree.
    pub fn parse<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension { expected: n, got: row.len() });
            }
            entries.push(parse_all(row, Vars::config_time(n))?);
        }
        for (i, row) in entries.iter().enumerate() {
            for (j, other) in entries.iter().enumerate().take(i) {
                if row[j].to_string() != other[i].to_string() {
                    return Err(Error::Expr(format!("metric entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(Self {
            entries,
            domain: DomainBox::unbounded(1 + n),
        })
    }

    pub fn diagonal<S: AsRef<str>>(diag: &[S]) -> Result<Self> {
        let n = diag.len();
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { diag[i].as_ref().to_string() } else { "0".to_string() })
                    .collect()
            })
            .collect();
        Self::parse(&rows)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec!["1"; n]).expect("constant entries parse")
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        assert_eq!(domain.dim(), 1 + self.entries.len());
        self.domain = domain;
        self
    }
}

impl MetricField for ExprMetric {
    fn dim(&self) -> usize {
        self.entries.len()
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, t: R, x: &[R]) -> Matrix<R> {
        let n = self.entries.len();
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.entries[i][j].eval(t, x, &[]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct ExprPotential {
    expr: Expr,
    n: usize,
    domain: DomainBox,
}

impl ExprPotential {
    pub fn parse(src: &str, n: usize) -> Result<Self> {
        Ok(Self {
            expr: Expr::parse(src, Vars::config_time(n))?,
            n,
            domain: DomainBox::unbounded(1 + n),
        })
    }

    pub fn zero(n: usize) -> Self {
        Self::parse("0", n).expect("constant parses")
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        assert_eq!(domain.dim(), 1 + self.n);
        self.domain = domain;
        self
    }
}

impl PotentialField for ExprPotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, t: R, x: &[R]) -> R {
        self.expr.eval(t, x, &[])
    }
}

/// The metric `g_N(q) = dψ(q)ᵀ·g(ψ(q))·dψ(q)` induced through a
/// parametrization `ψ`.
#[derive(Debug, Clone)]
pub struct PullbackMetric<G, P> {
    ambient: G,
    param: P,
    domain: DomainBox,
}

impl<G: MetricField, P: VectorMap> PullbackMetric<G, P> {
    pub fn new(ambient: G, param: P) -> Result<Self> {
        if param.dim_out() != ambient.dim() {
            return Err(Error::Dimension {
                expected: ambient.dim(),
                got: param.dim_out(),
            });
        }
        let domain = DomainBox::unbounded(1).product(param.domain());
        Ok(Self { ambient, param, domain })
    }
}

impl<G: MetricField, P: VectorMap> MetricField for PullbackMetric<G, P> {
    fn dim(&self) -> usize {
        self.param.dim_in()
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, t: R, q: &[R]) -> Matrix<R> {
        let m = self.param.dim_out();
        let n = q.len();
        let mut jac = Matrix::zeros(m, n);
        let mut point = vec![R::zero(); m];
        for j in 0..n {
            let z: Vec<Dual<R>> = q
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual::new(v, if k == j { R::one() } else { R::zero() }))
                .collect();
            let out = self.param.eval(&z);
            for i in 0..m {
                point[i] = out[i].re;
                jac[(i, j)] = out[i].eps;
            }
        }
        let g = self.ambient.eval(t, &point);
        jac.transpose().mul(&g.mul(&jac))
    }
}

/// `g(t, x)` after the domain and positive-definiteness checks.
pub fn metric_at<R: Real, G: MetricField>(g: &G, t: R, x: &[R]) -> Result<Matrix<R>> {
    check_tx(g.domain(), g.dim(), t, x)?;
    let m = g.eval(t, x);
    if !is_positive_definite(&m.to_f64()) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(m)
}

/// Cholesky test on the primal values.
pub fn is_positive_definite(m: &Matrix<f64>) -> bool {
    m.to_nalgebra().cholesky().is_some()
}

/// `∂ₓ g`: one matrix per coordinate direction.
fn metric_gradient<R: Real, G: MetricField>(g: &G, t: R, x: &[R]) -> Vec<Matrix<R>> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let z: Vec<Dual<R>> = x
                .iter()
                .enumerate()
                .map(|(j, &v)| Dual::new(v, if j == k { R::one() } else { R::zero() }))
                .collect();
            g.eval(Dual::constant(t), &z).map(|d| d.eps)
        })
        .collect()
}

/// `K₂(x, y)` from `g(K₂, z) = ½∂ₓg(y, y)·z − ∂ₓg(y, z)·y`, at the frozen
/// time `t`. The Lagrangian vector field of `½g(y, y)` satisfies `c″ = K₂`
/// when `g` does not depend on `t`.
pub fn metric_spray_k2<R: Real, G: MetricField>(g: &G, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
    let gm = metric_at(g, t, x)?;
    let dg = metric_gradient(g, t, x);
    let n = x.len();
    let rhs: Vec<R> = (0..n)
        .map(|z| {
            let half = dg[z].bilinear(y, y) * 0.5;
            let mut cross = R::zero();
            for (k, yk) in y.iter().enumerate() {
                for (i, yi) in y.iter().enumerate() {
                    cross = cross + *yk * *yi * dg[k][(i, z)];
                }
            }
            half - cross
        })
        .collect();
    gm.solve(&rhs)
}

/// `∂ₓU(t, x)`.
fn potential_gradient<R: Real, U: PotentialField>(u: &U, t: R, x: &[R]) -> Result<Vec<R>> {
    check_tx(u.domain(), u.dim(), t, x)?;
    Ok((0..x.len())
        .map(|k| {
            let z: Vec<Dual<R>> = x
                .iter()
                .enumerate()
                .map(|(j, &v)| Dual::new(v, if j == k { R::one() } else { R::zero() }))
                .collect();
            u.eval(Dual::constant(t), &z).eps
        })
        .collect())
}

/// `grad U = g⁻¹·∂ₓU`.
pub fn grad_u<R: Real, G: MetricField, U: PotentialField>(g: &G, u: &U, t: R, x: &[R]) -> Result<Vec<R>> {
    let gm = metric_at(g, t, x)?;
    gm.solve(&potential_gradient(u, t, x)?)
}

/// `X₂ = K₂(x, y) − grad U(t, x)`.
pub fn potential_spray<R: Real, G: MetricField, U: PotentialField>(
    g: &G,
    u: &U,
    t: R,
    x: &[R],
    y: &[R],
) -> Result<Vec<R>> {
    Ok(sub(&metric_spray_k2(g, t, x, y)?, &grad_u(g, u, t, x)?))
}

/// The spray `G = −(K₂ − grad U)` of a mechanical system.
#[derive(Debug, Clone)]
pub struct PotentialSpray<G, U> {
    metric: G,
    potential: U,
    chart: String,
}

impl<G: MetricField, U: PotentialField> PotentialSpray<G, U> {
    pub fn new(metric: G, potential: U, chart: impl Into<String>) -> Self {
        Self {
            metric,
            potential,
            chart: chart.into(),
        }
    }
}

impl<G: MetricField, U: PotentialField> SemisprayField for PotentialSpray<G, U> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }
    fn chart(&self) -> &str {
        &self.chart
    }
    fn provenance(&self) -> Provenance {
        Provenance::LagrangianVectorField
    }
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        Ok(neg(&potential_spray(&self.metric, &self.potential, t, x, y)?))
    }
}

/// `L(t, x, y) = ½g(t, x)(y, y) − U(t, x)`.
#[derive(Debug, Clone)]
pub struct MechanicalLagrangian<G, U> {
    metric: G,
    potential: Option<U>,
    domain: DomainBox,
}

impl<G: MetricField, U: PotentialField> MechanicalLagrangian<G, U> {
    pub fn new(metric: G, potential: Option<U>) -> Self {
        let n = metric.dim();
        let domain = metric.domain().product(&DomainBox::unbounded(n));
        Self {
            metric,
            potential,
            domain,
        }
    }

    pub fn metric(&self) -> &G {
        &self.metric
    }
}

impl<G: MetricField, U: PotentialField> ScalarField for MechanicalLagrangian<G, U> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> R {
        let kinetic = self.metric.eval(t, x).bilinear(y, y) * 0.5;
        match &self.potential {
            Some(u) => kinetic - u.eval(t, x),
            None => kinetic,
        }
    }
}

/// The Lagrangian `½g(t, x)(y, y)` of a time-dependent family of metrics.
pub fn time_metric_lagrangian<G: MetricField>(
    g: G,
    chart: impl Into<String>,
) -> TimeLagrangian<MechanicalLagrangian<G, ExprPotential>> {
    TimeLagrangian::new(MechanicalLagrangian::new(g, None), chart)
}

/// `μ(y) = g(x)·y`.
pub fn musical_flat<G: MetricField>(g: &G, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    Ok(metric_at(g, t, x)?.mul_vec(y))
}

/// `μ⁻¹(p) = g(x)⁻¹·p`.
pub fn musical_sharp<G: MetricField>(g: &G, t: f64, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    metric_at(g, t, x)?.solve(p)
}

// ---------------------------------------------------------------------------
// Holonomic constraints

/// The level set `N = c⁻¹(0)` of a map `c: ℝⁿ → ℝᵏ`, `k < n`.
#[derive(Debug, Clone)]
pub struct LevelSetConstraint<C> {
    map: C,
}

impl<C: VectorMap> LevelSetConstraint<C> {
    pub fn new(map: C) -> Result<Self> {
        if map.dim_out() == 0 || map.dim_out() >= map.dim_in() {
            return Err(Error::Dimension {
                expected: map.dim_in().saturating_sub(1),
                got: map.dim_out(),
            });
        }
        Ok(Self { map })
    }

    pub fn map(&self) -> &C {
        &self.map
    }

    pub fn ambient_dim(&self) -> usize {
        self.map.dim_in()
    }

    pub fn codim(&self) -> usize {
        self.map.dim_out()
    }

    pub fn jet<R: Real>(&self, x: &[R]) -> Result<MapJet<R>> {
        let jet = map_jet_at(&self.map, x, true)?;
        let (_, sigma_min) = jet.jacobian.to_f64().singular_extremes();
        if !(sigma_min > RANK_TOL) {
            return Err(Error::RankDeficient { sigma_min });
        }
        Ok(jet)
    }

    /// `|c(x)|` in the max-norm.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        Ok(norm_inf(&crate::diffkernel::eval_map(&self.map, x)?))
    }

    pub fn check_on(&self, x: &[f64]) -> Result<MapJet<f64>> {
        let jet = self.jet(x)?;
        let residual = norm_inf(&jet.value);
        if !(residual <= CONSTRAINT_TOL) {
            return Err(Error::OffConstraint { residual });
        }
        Ok(jet)
    }

    /// Errors unless `(x, y)` is on-constraint initial data.
    pub fn check_initial(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let jet = self.check_on(x)?;
        let residual = norm_inf(&jet.jacobian.mul_vec(y));
        if !(residual <= CONSTRAINT_TOL) {
            return Err(Error::NotTangent { residual });
        }
        Ok(())
    }
}

/// `g⁻¹dcᵀ(dc·g⁻¹·dcᵀ)⁻¹·r`: the vector in the g-normal space whose image
/// under `dc` is `r`.
fn normal_lift<R: Real>(gm: &Matrix<R>, dc: &Matrix<R>, r: &[R]) -> Result<Vec<R>> {
    let ginv_dct = gm.inverse()?.mul(&dc.transpose());
    let gram = dc.mul(&ginv_dct);
    let lam = gram.solve(r).map_err(|_| Error::RankDeficient { sigma_min: 0.0 })?;
    Ok(ginv_dct.mul_vec(&lam))
}

/// g-normal part `w^⊥` of `w`.
fn normal_part<R: Real>(gm: &Matrix<R>, dc: &Matrix<R>, w: &[R]) -> Result<Vec<R>> {
    normal_lift(gm, dc, &dc.mul_vec(w))
}

/// g-orthogonal projection of `w` onto `ker dc(x)`.
pub fn tangent_project<C: VectorMap, G: MetricField>(
    cst: &LevelSetConstraint<C>,
    g: &G,
    t: f64,
    x: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let jet = cst.check_on(x)?;
    let gm = metric_at(g, t, x)?;
    Ok(sub(w, &normal_part(&gm, &jet.jacobian, w)?))
}

fn second_fundamental_form_at<R: Real, G: MetricField>(
    g: &G,
    jet: &MapJet<R>,
    gm: &Matrix<R>,
    t: R,
    x: &[R],
    v: &[R],
) -> Result<Vec<R>> {
    let k2 = metric_spray_k2(g, t, x, v)?;
    let r = add(&jet.second_contract(v, v), &jet.jacobian.mul_vec(&k2));
    Ok(neg(&normal_lift(gm, &jet.jacobian, &r)?))
}

/// `B(v, v) = −g⁻¹dcᵀ(dc·g⁻¹·dcᵀ)⁻¹[d²c(v, v) + dc·K₂(x, v)]`: the normal
/// acceleration that keeps `c(x(s)) = 0` to second order along the ambient
/// metric spray.
pub fn second_fundamental_form<C: VectorMap, G: MetricField>(
    cst: &LevelSetConstraint<C>,
    g: &G,
    t: f64,
    x: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    let jet = cst.check_on(x)?;
    let tangency = norm_inf(&jet.jacobian.mul_vec(v));
    if !(tangency <= CONSTRAINT_TOL * (1.0 + norm_inf(v))) {
        return Err(Error::NotTangent { residual: tangency });
    }
    let gm = metric_at(g, t, x)?;
    second_fundamental_form_at(g, &jet, &gm, t, x, v)
}

/// `R(t, v) = μ(B(v, v)) − μ((μ⁻¹F)^⊥)`.
pub fn reaction_force<C: VectorMap, G: MetricField, F: ExternalForce>(
    cst: &LevelSetConstraint<C>,
    g: &G,
    force: &F,
    t: f64,
    x: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    let b = second_fundamental_form(cst, g, t, x, v)?;
    let jet = cst.check_on(x)?;
    let gm = metric_at(g, t, x)?;
    let f_sharp = gm.solve(&eval_force(force, t, x, v)?)?;
    let f_perp = normal_part(&gm, &jet.jacobian, &f_sharp)?;
    Ok(gm.mul_vec(&sub(&b, &f_perp)))
}

/// Spray of the constrained system `(M, g, F + R)` in ambient coordinates:
/// `X₂ = K₂ + g⁻¹F + B(v, v) − (g⁻¹F)^⊥`.
#[derive(Debug, Clone)]
pub struct ConstrainedSpray<G, F, C> {
    metric: G,
    force: F,
    constraint: LevelSetConstraint<C>,
    chart: String,
}

impl<G: MetricField, F: ExternalForce, C: VectorMap> ConstrainedSpray<G, F, C> {
    pub fn constraint(&self) -> &LevelSetConstraint<C> {
        &self.constraint
    }

    pub fn metric(&self) -> &G {
        &self.metric
    }
}

pub fn constrained_spray<G: MetricField, F: ExternalForce, C: VectorMap>(
    metric: G,
    force: F,
    constraint: LevelSetConstraint<C>,
    chart: impl Into<String>,
) -> Result<ConstrainedSpray<G, F, C>> {
    let n = metric.dim();
    if constraint.ambient_dim() != n || force.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: constraint.ambient_dim().max(force.dim()),
        });
    }
    Ok(ConstrainedSpray {
        metric,
        force,
        constraint,
        chart: chart.into(),
    })
}

impl<G: MetricField, F: ExternalForce, C: VectorMap> SemisprayField for ConstrainedSpray<G, F, C> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }
    fn chart(&self) -> &str {
        &self.chart
    }
    fn provenance(&self) -> Provenance {
        Provenance::Constrained
    }
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        let jet = self.constraint.jet(x)?;
        let gm = metric_at(&self.metric, t, x)?;
        let k2 = metric_spray_k2(&self.metric, t, x, y)?;
        let f_sharp = gm.solve(&eval_force(&self.force, t, x, y)?)?;
        let f_perp = normal_part(&gm, &jet.jacobian, &f_sharp)?;
        let b = second_fundamental_form_at(&self.metric, &jet, &gm, t, x, y)?;
        let x2 = sub(&add(&add(&k2, &f_sharp), &b), &f_perp);
        Ok(neg(&x2))
    }
}

/// Pulls `(x, y)` back onto the constraint: Newton steps along the normal
/// space for `x`, then the tangent projection of `y`.
pub fn project_state<C: VectorMap, G: MetricField>(
    cst: &LevelSetConstraint<C>,
    g: &G,
    t: f64,
    x: &mut [f64],
    y: &mut [f64],
) -> Result<()> {
    for _ in 0..8 {
        let jet = cst.jet(x)?;
        if norm_inf(&jet.value) <= 1e-15 {
            break;
        }
        let gm = metric_at(g, t, x)?;
        let dx = normal_lift(&gm, &jet.jacobian, &jet.value)?;
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi -= d;
        }
    }
    let jet = cst.jet(x)?;
    let gm = metric_at(g, t, x)?;
    let n = normal_part(&gm, &jet.jacobian, y)?;
    for (yi, d) in y.iter_mut().zip(n) {
        *yi -= d;
    }
    Ok(())
}

/// Integrates a constrained spray after checking the initial data, with an
/// optional post-step projection back onto the constraint.
pub fn integrate_constrained<G: MetricField, F: ExternalForce, C: VectorMap>(
    spray: &ConstrainedSpray<G, F, C>,
    init: &InitialState,
    cfg: &IntegratorConfig,
    project: bool,
) -> Result<Trajectory> {
    spray.constraint.check_initial(&init.x0, &init.y0)?;
    if project {
        let hook = |t: f64, x: &mut [f64], y: &mut [f64]| project_state(&spray.constraint, &spray.metric, t, x, y);
        integrate_with(spray, init, cfg, Some(&hook))
    } else {
        integrate_with(spray, init, cfg, None)
    }
}

/// Position drift `|c(x(s))|` and velocity drift `|dc·x′(s)|` along a
/// trajectory.
pub fn constraint_drift<C: VectorMap>(
    cst: &LevelSetConstraint<C>,
    traj: &Trajectory,
) -> Result<(ResidualSeries, ResidualSeries)> {
    let mut pos = Vec::with_capacity(traj.len());
    let mut vel = Vec::with_capacity(traj.len());
    for p in &traj.samples {
        let jet = map_jet_at(&cst.map, &p.x, false)?;
        pos.push(norm_inf(&jet.value));
        vel.push(norm_inf(&jet.jacobian.mul_vec(&p.y)));
    }
    let s: Vec<f64> = traj.samples.iter().map(|p| p.s).collect();
    Ok((
        ResidualSeries {
            law: "constraint-drift".into(),
            s: s.clone(),
            residual: pos,
        },
        ResidualSeries {
            law: "constraint-velocity-drift".into(),
            s,
            residual: vel,
        },
    ))
}

/// `max |g(μ⁻¹R, w)|` over the tangent probes `ws` (projected first).
pub fn perfectness_residual<C: VectorMap, G: MetricField, F: ExternalForce>(
    cst: &LevelSetConstraint<C>,
    g: &G,
    force: &F,
    t: f64,
    x: &[f64],
    v: &[f64],
    ws: &[Vec<f64>],
) -> Result<f64> {
    let r = reaction_force(cst, g, force, t, x, v)?;
    let r_sharp = musical_sharp(g, t, x, &r)?;
    let gm = metric_at(g, t, x)?;
    let mut worst = 0.0f64;
    for w in ws {
        let wt = tangent_project(cst, g, t, x, w)?;
        worst = worst.max(gm.bilinear(&r_sharp, &wt).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ExprForce, ZeroForce};
    use crate::expr::ExprMap;
    use crate::semispray::{connection_from_l, lagrangian_vector_field};
    use crate::point::TangentSample;
    use std::f64::consts::PI;

    fn sphere() -> LevelSetConstraint<ExprMap> {
        LevelSetConstraint::new(ExprMap::parse(&["0.5*(x0^2 + x1^2 + x2^2 - 1)"], 3).unwrap()).unwrap()
    }

    fn polar() -> ExprMetric {
        ExprMetric::diagonal(&["1", "x0^2"]).unwrap()
    }

    #[test]
    fn k2_examples() {
        let id = ExprMetric::identity(2);
        assert_eq!(metric_spray_k2(&id, 0.0, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        let k = metric_spray_k2(&polar(), 0.0, &[2.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((k[0] - 2.0).abs() < 1e-15 && k[1].abs() < 1e-15);
        let x = [1.3, 0.4];
        let y = [0.7, -0.2];
        let y3: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        let k1 = metric_spray_k2(&polar(), 0.0, &x, &y).unwrap();
        let k3 = metric_spray_k2(&polar(), 0.0, &x, &y3).unwrap();
        for i in 0..2 {
            assert!((k3[i] - 9.0 * k1[i]).abs() < 1e-13);
        }
        // θ″ = −2r′θ′/r in polar coordinates
        assert!((k1[1] + 2.0 * 0.7 * -0.2 / 1.3).abs() < 1e-14);
    }

    #[test]
    fn non_positive_metric_is_rejected() {
        let bad = ExprMetric::diagonal(&["1", "-1"]).unwrap();
        assert_eq!(metric_spray_k2(&bad, 0.0, &[0.0, 0.0], &[1.0, 0.0]), Err(Error::NotPositiveDefinite));
        assert!(ExprMetric::parse(&[vec!["1", "x0"], vec!["x1", "1"]]).is_err());
    }

    #[test]
    fn grad_examples() {
        let id = ExprMetric::identity(2);
        assert_eq!(grad_u(&id, &ExprPotential::parse("x0", 2).unwrap(), 0.0, &[0.3, 0.1]).unwrap(), vec![1.0, 0.0]);
        let g = ExprMetric::diagonal(&["1", "4"]).unwrap();
        assert_eq!(grad_u(&g, &ExprPotential::parse("x1", 2).unwrap(), 0.0, &[0.3, 0.1]).unwrap(), vec![0.0, 0.25]);
        let u = ExprPotential::parse("sin(t)*x0", 2).unwrap();
        let gr = grad_u(&id, &u, PI / 2.0, &[0.3, 0.1]).unwrap();
        assert!((gr[0] - 1.0).abs() < 1e-15 && gr[1] == 0.0);
    }

    #[test]
    fn potential_spray_matches_lagrangian_path() {
        let id = ExprMetric::identity(2);
        let iso = ExprPotential::parse("0.5*(x0^2 + x1^2)", 2).unwrap();
        assert_eq!(potential_spray(&id, &iso, 0.0, &[0.3, -0.2], &[1.0, 1.0]).unwrap(), vec![-0.3, 0.2]);
        let u = ExprPotential::parse("sin(t)*x0", 2).unwrap();
        for g in [ExprMetric::identity(2), polar()] {
            let l = TimeLagrangian::new(MechanicalLagrangian::new(g.clone(), Some(u.clone())), "a");
            let v = TangentSample::new(0.7, vec![1.2, 0.4], vec![-0.3, 0.8]);
            let a = potential_spray(&g, &u, v.t, &v.x, &v.y).unwrap();
            let b = lagrangian_vector_field(&l, &v).unwrap();
            assert!(norm_inf(&sub(&a, &b)) < 1e-12);
        }
    }

    #[test]
    fn time_metric_examples() {
        let cald = time_metric_lagrangian(ExprMetric::diagonal(&["exp(2*t)"]).unwrap(), "a");
        let v = TangentSample::new(0.4, vec![0.1], vec![1.5]);
        assert!((lagrangian_vector_field(&cald, &v).unwrap()[0] + 3.0).abs() < 1e-13);
        let g = time_metric_lagrangian(ExprMetric::diagonal(&["1 + t^2", "1 + t^2"]).unwrap(), "a");
        let c = connection_from_l(&g, &TangentSample::new(1.0, vec![0.0, 0.0], vec![1.0, 0.0])).unwrap();
        assert!((c.n0[0] - 1.0).abs() < 1e-15 && c.n0[1] == 0.0);
    }

    #[test]
    fn musical_examples() {
        let g = ExprMetric::diagonal(&["1", "4"]).unwrap();
        assert_eq!(musical_flat(&g, 0.0, &[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![1.0, 4.0]);
        assert_eq!(musical_sharp(&g, 0.0, &[0.0, 0.0], &[1.0, 4.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn sphere_projection_and_b() {
        let g = ExprMetric::identity(3);
        let c = sphere();
        let e1 = [1.0, 0.0, 0.0];
        assert_eq!(tangent_project(&c, &g, 0.0, &e1, &[1.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(tangent_project(&c, &g, 0.0, &e1, &[1.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(tangent_project(&c, &g, 0.0, &e1, &[0.0, 2.0, 3.0]).unwrap(), vec![0.0, 2.0, 3.0]);
        assert_eq!(second_fundamental_form(&c, &g, 0.0, &e1, &[0.0, 1.0, 0.0]).unwrap(), vec![-1.0, 0.0, 0.0]);
        assert!(matches!(
            second_fundamental_form(&c, &g, 0.0, &e1, &[1.0, 0.0, 0.0]),
            Err(Error::NotTangent { .. })
        ));
        assert!(matches!(tangent_project(&c, &g, 0.0, &[2.0, 0.0, 0.0], &e1), Err(Error::OffConstraint { .. })));
        let r = reaction_force(&c, &g, &ZeroForce::new(3), 0.0, &e1, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r, vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn affine_constraint_reaction() {
        let g = ExprMetric::identity(2);
        let c = LevelSetConstraint::new(ExprMap::parse(&["x1"], 2).unwrap()).unwrap();
        assert_eq!(second_fundamental_form(&c, &g, 0.0, &[0.5, 0.0], &[1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let push = ExprForce::parse(&["0", "2"]).unwrap();
        let r = reaction_force(&c, &g, &push, 0.0, &[0.5, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(r, vec![0.0, -2.0]);
    }

    #[test]
    fn great_circle() {
        let sp = constrained_spray(ExprMetric::identity(3), ZeroForce::new(3), sphere(), "ambient").unwrap();
        let init = InitialState::new(0.0, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]);
        let tr = integrate_constrained(&sp, &init, &IntegratorConfig::rk4(1e-3, 0.0, PI / 2.0), false).unwrap();
        let end = tr.last();
        assert!(norm_inf(&sub(&end.x, &[0.0, 1.0, 0.0])) < 1e-6);
        let (pos, vel) = constraint_drift(sp.constraint(), &tr).unwrap();
        assert!(pos.max() < 1e-7 && vel.max() < 1e-6);
        let off = InitialState::new(0.0, vec![1.1, 0.0, 0.0], vec![0.0, 1.0, 0.0]);
        assert!(integrate_constrained(&sp, &off, &IntegratorConfig::rk4(1e-3, 0.0, 1.0), false).is_err());
        let slanted = InitialState::new(0.0, vec![1.0, 0.0, 0.0], vec![0.1, 1.0, 0.0]);
        assert!(matches!(
            integrate_constrained(&sp, &slanted, &IntegratorConfig::rk4(1e-3, 0.0, 1.0), false),
            Err(Error::NotTangent { .. })
        ));
    }

    #[test]
    fn projection_hook_keeps_state_on_sphere() {
        let sp = constrained_spray(ExprMetric::identity(3), ZeroForce::new(3), sphere(), "ambient").unwrap();
        let init = InitialState::new(0.0, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]);
        let tr = integrate_constrained(&sp, &init, &IntegratorConfig::rk4(5e-2, 0.0, 6.0), true).unwrap();
        let (pos, vel) = constraint_drift(sp.constraint(), &tr).unwrap();
        assert!(pos.max() < 1e-14 && vel.max() < 1e-14);
    }

    #[test]
    fn pullback_metric_of_sphere() {
        let psi = ExprMap::parse(&["sin(x0)*cos(x1)", "sin(x0)*sin(x1)", "cos(x0)"], 2).unwrap();
        let gn = PullbackMetric::new(ExprMetric::identity(3), psi).unwrap();
        let m = gn.eval(0.0, &[0.7, 0.3]);
        assert!((m[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((m[(1, 1)] - 0.7f64.sin().powi(2)).abs() < 1e-15);
        assert!(m[(0, 1)].abs() < 1e-15);
    }
}
