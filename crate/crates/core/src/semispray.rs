//! Semisprays and nonlinear connections.
//!
//! Sign convention: a semispray is stored through its coefficients `G`, and
//! its geodesics solve `x″ + G(t, x, x′) = 0` in every chart. The Lagrangian
//! vector field `Z = (1, y, X₂)` therefore corresponds to the spray
//! `G = −X₂` ([`LagrangianSpray`]). The canonical spray built directly from
//! the fiber Hessian ([`CanonicalSpray`]) differs from it by the time
//! coefficient of the Lagrangian connection: `X₂ + G_can + N⁰ = 0`.

use serde::Serialize;

use crate::atlas::{push_jet2_by_map, ResidualReport};
use crate::diffkernel::{map_jet, map_jet_at, DomainBox, Dual, Real, ScalarField, VectorMap};
use crate::error::{Error, Result};
use crate::lagrangian::{fiber_solve, TimeLagrangian};
use crate::linalg::{add, lift, neg, norm_inf, sub, Matrix};
use crate::point::{Jet2, TangentSample, TangentVector, Trivialized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    CanonicalFromL,
    LagrangianVectorField,
    Forced,
    Constrained,
    User,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::CanonicalFromL => "canonical-from-L",
            Provenance::LagrangianVectorField => "lagrangian-vector-field",
            Provenance::Forced => "forced",
            Provenance::Constrained => "constrained",
            Provenance::User => "user",
        };
        f.write_str(s)
    }
}

/// Local coefficients `G(t, x, y)` of a time-dependent semispray.
pub trait SemisprayField: Send + Sync {
    fn dim(&self) -> usize;
    fn chart(&self) -> &str;
    fn provenance(&self) -> Provenance;
    /// `G(t, x, y)`; geodesics satisfy `x″ + G = 0`.
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>>;

    /// Second component `X₂` of the associated second-order field in the
    /// Lagrangian-vector-field convention. Defaults to `−G`.
    fn acceleration<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        Ok(neg(&self.coefficients(t, x, y)?))
    }

    fn eval(&self, v: &TangentSample) -> Result<Vec<f64>> {
        self.coefficients(v.t, &v.x, &v.y)
    }
}

impl<T: SemisprayField + ?Sized> SemisprayField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn chart(&self) -> &str {
        (**self).chart()
    }
    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        (**self).coefficients(t, x, y)
    }
    fn acceleration<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        (**self).acceleration(t, x, y)
    }
}

/// Coefficients `(N⁰, N¹)` of a time-dependent nonlinear connection at one
/// point; `N(v)(s, a) = N⁰·s + N¹·a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionCoefficients {
    pub n0: Vec<f64>,
    pub n1: Matrix<f64>,
}

impl ConnectionCoefficients {
    pub fn zero(n: usize) -> Self {
        Self {
            n0: vec![0.0; n],
            n1: Matrix::zeros(n, n),
        }
    }

    /// `P = N(v)[1, y] = N⁰ + N¹·y`.
    pub fn offset(&self, y: &[f64]) -> Vec<f64> {
        add(&self.n0, &self.n1.mul_vec(y))
    }
}

pub trait ConnectionField: Send + Sync {
    fn dim(&self) -> usize;
    fn chart(&self) -> &str;
    fn coefficients(&self, v: &TangentSample) -> Result<ConnectionCoefficients>;
}

impl<T: ConnectionField + ?Sized> ConnectionField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn chart(&self) -> &str {
        (**self).chart()
    }
    fn coefficients(&self, v: &TangentSample) -> Result<ConnectionCoefficients> {
        (**self).coefficients(v)
    }
}

// ---------------------------------------------------------------------------
// Objects derived from a Lagrangian

/// `α(v)·z = ∂₂L·z − ∂₁∂₃L[z, 1] − ∂₂∂₃L[z, y]`, as a coordinate row.
fn alpha<R: Real>(jet: &crate::diffkernel::LagrangianJet<R>, y: &[R]) -> Vec<R> {
    let my = jet.dx_dy.mul_vec(y);
    jet.dx
        .iter()
        .zip(&jet.dt_dy)
        .zip(&my)
        .map(|((dx, dtdy), m)| *dx - *dtdy - *m)
        .collect()
}

/// `X₂` solving `∂₃²L·X₂ = α(v)`.
pub fn lagrangian_vector_field_at<R: Real, L: ScalarField>(
    l: &TimeLagrangian<L>,
    t: R,
    x: &[R],
    y: &[R],
) -> Result<Vec<R>> {
    let jet = l.jet_at(t, x, y)?;
    fiber_solve(&jet.dy_dy, &alpha(&jet, y))
}

pub fn lagrangian_vector_field<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample) -> Result<Vec<f64>> {
    lagrangian_vector_field_at(l, v.t, &v.x, &v.y)
}

/// The full field `Z(v) = (1, y, X₂(v))`.
pub fn lagrangian_field<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample) -> Result<TangentVector> {
    Ok(TangentVector::new(1.0, v.y.clone(), lagrangian_vector_field(l, v)?))
}

/// `G = (∂₃²L)⁻¹{∂₂∂₃L[·, y] − ∂₂L}`.
pub fn canonical_g_at<R: Real, L: ScalarField>(l: &TimeLagrangian<L>, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
    let jet = l.jet_at(t, x, y)?;
    let rhs = sub(&jet.dx_dy.mul_vec(y), &jet.dx);
    fiber_solve(&jet.dy_dy, &rhs)
}

pub fn canonical_g<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample) -> Result<Vec<f64>> {
    canonical_g_at(l, v.t, &v.x, &v.y)
}

/// `N⁰ = (∂₃²L)⁻¹∂₁∂₃L`.
pub fn lagrangian_n0_at<R: Real, L: ScalarField>(l: &TimeLagrangian<L>, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
    let jet = l.jet_at(t, x, y)?;
    fiber_solve(&jet.dy_dy, &jet.dt_dy)
}

/// Jacobian of a vector-valued function of `y` by forward differentiation.
fn jacobian_in_y<F>(n: usize, y: &[f64], f: F) -> Result<Matrix<f64>>
where
    F: Fn(&[Dual<f64>]) -> Result<Vec<Dual<f64>>>,
{
    let mut jac = Matrix::zeros(n, n);
    for j in 0..n {
        let yd: Vec<Dual<f64>> = y
            .iter()
            .enumerate()
            .map(|(k, &v)| Dual::new(v, if k == j { 1.0 } else { 0.0 }))
            .collect();
        let out = f(&yd)?;
        for i in 0..n {
            jac[(i, j)] = out[i].eps;
        }
    }
    Ok(jac)
}

/// Coefficients of the Lagrangian connection `N_L`: `N⁰ = (∂₃²L)⁻¹∂₁∂₃L`
/// and `N¹ = ∂₃G` for the canonical `G`, differentiated through the solve.
pub fn connection_from_l<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample) -> Result<ConnectionCoefficients> {
    let n = l.dim();
    let n0 = lagrangian_n0_at(l, v.t, &v.x, &v.y)?;
    let t = Dual::constant(v.t);
    let x: Vec<Dual<f64>> = lift::<f64>(&v.x).into_iter().map(Dual::constant).collect();
    let n1 = jacobian_in_y(n, &v.y, |yd| canonical_g_at(l, t, &x, yd))?;
    Ok(ConnectionCoefficients { n0, n1 })
}

/// The two connections induced by a semispray: `(0, ∂₃G)` and `(∂₁G, ∂₃G)`.
pub fn connections_from_semispray<S: SemisprayField>(
    s: &S,
    v: &TangentSample,
) -> Result<(ConnectionCoefficients, ConnectionCoefficients)> {
    let n = s.dim();
    let xd: Vec<Dual<f64>> = v.x.iter().map(|&c| Dual::constant(c)).collect();
    let n1 = jacobian_in_y(n, &v.y, |yd| s.coefficients(Dual::constant(v.t), &xd, yd))?;
    let yd: Vec<Dual<f64>> = v.y.iter().map(|&c| Dual::constant(c)).collect();
    let g_t = s.coefficients(Dual::variable(v.t), &xd, &yd)?;
    let n0: Vec<f64> = g_t.iter().map(|g| g.eps).collect();
    Ok((
        ConnectionCoefficients {
            n0: vec![0.0; n],
            n1: n1.clone(),
        },
        ConnectionCoefficients { n0, n1 },
    ))
}

/// Spray of the Lagrangian vector field, `G = −X₂`.
#[derive(Debug, Clone)]
pub struct LagrangianSpray<L> {
    lagrangian: TimeLagrangian<L>,
}

impl<L: ScalarField> LagrangianSpray<L> {
    pub fn new(lagrangian: TimeLagrangian<L>) -> Self {
        Self { lagrangian }
    }

    pub fn lagrangian(&self) -> &TimeLagrangian<L> {
        &self.lagrangian
    }
}

impl<L: ScalarField> SemisprayField for LagrangianSpray<L> {
    fn dim(&self) -> usize {
        self.lagrangian.dim()
    }
    fn chart(&self) -> &str {
        self.lagrangian.chart()
    }
    fn provenance(&self) -> Provenance {
        Provenance::LagrangianVectorField
    }
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        Ok(neg(&lagrangian_vector_field_at(&self.lagrangian, t, x, y)?))
    }
    fn acceleration<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        lagrangian_vector_field_at(&self.lagrangian, t, x, y)
    }
}

/// Canonical spray `G = (∂₃²L)⁻¹{∂₂∂₃L[·, y] − ∂₂L}`. Its acceleration in the
/// Lagrangian convention is `X₂ = −(G + N⁰)`.
#[derive(Debug, Clone)]
pub struct CanonicalSpray<L> {
    lagrangian: TimeLagrangian<L>,
}

impl<L: ScalarField> CanonicalSpray<L> {
    pub fn new(lagrangian: TimeLagrangian<L>) -> Self {
        Self { lagrangian }
    }
}

impl<L: ScalarField> SemisprayField for CanonicalSpray<L> {
    fn dim(&self) -> usize {
        self.lagrangian.dim()
    }
    fn chart(&self) -> &str {
        self.lagrangian.chart()
    }
    fn provenance(&self) -> Provenance {
        Provenance::CanonicalFromL
    }
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        canonical_g_at(&self.lagrangian, t, x, y)
    }
    fn acceleration<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        let g = canonical_g_at(&self.lagrangian, t, x, y)?;
        let n0 = lagrangian_n0_at(&self.lagrangian, t, x, y)?;
        Ok(neg(&add(&g, &n0)))
    }
}

/// The Lagrangian connection `N_L` as a field.
#[derive(Debug, Clone)]
pub struct LagrangianConnection<L> {
    lagrangian: TimeLagrangian<L>,
}

impl<L: ScalarField> LagrangianConnection<L> {
    pub fn new(lagrangian: TimeLagrangian<L>) -> Self {
        Self { lagrangian }
    }
}

impl<L: ScalarField> ConnectionField for LagrangianConnection<L> {
    fn dim(&self) -> usize {
        self.lagrangian.dim()
    }
    fn chart(&self) -> &str {
        self.lagrangian.chart()
    }
    fn coefficients(&self, v: &TangentSample) -> Result<ConnectionCoefficients> {
        connection_from_l(&self.lagrangian, v)
    }
}

/// Which of the two spray-induced connections to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SprayConnectionKind {
    /// `(N⁰, N¹) = (0, ∂₃G)`
    Spatial,
    /// `(N⁰, N¹) = (∂₁G, ∂₃G)`
    Temporal,
}

#[derive(Debug, Clone)]
pub struct SprayConnection<S> {
    spray: S,
    kind: SprayConnectionKind,
}

impl<S: SemisprayField> SprayConnection<S> {
    pub fn new(spray: S, kind: SprayConnectionKind) -> Self {
        Self { spray, kind }
    }
}

impl<S: SemisprayField> ConnectionField for SprayConnection<S> {
    fn dim(&self) -> usize {
        self.spray.dim()
    }
    fn chart(&self) -> &str {
        self.spray.chart()
    }
    fn coefficients(&self, v: &TangentSample) -> Result<ConnectionCoefficients> {
        let (spatial, temporal) = connections_from_semispray(&self.spray, v)?;
        Ok(match self.kind {
            SprayConnectionKind::Spatial => spatial,
            SprayConnectionKind::Temporal => temporal,
        })
    }
}

/// Connection with the same coefficients at every point.
#[derive(Debug, Clone)]
pub struct ConstantConnection {
    coefficients: ConnectionCoefficients,
    chart: String,
}

impl ConstantConnection {
    pub fn new(n0: Vec<f64>, n1: Matrix<f64>, chart: impl Into<String>) -> Self {
        Self {
            coefficients: ConnectionCoefficients { n0, n1 },
            chart: chart.into(),
        }
    }
}

impl ConnectionField for ConstantConnection {
    fn dim(&self) -> usize {
        self.coefficients.n0.len()
    }
    fn chart(&self) -> &str {
        &self.chart
    }
    fn coefficients(&self, _v: &TangentSample) -> Result<ConnectionCoefficients> {
        Ok(self.coefficients.clone())
    }
}

/// Spray whose coefficients are given by closed-form expressions.
#[derive(Debug, Clone)]
pub struct ExprSpray {
    exprs: Vec<crate::expr::Expr>,
    chart: String,
    provenance: Provenance,
}

impl ExprSpray {
    pub fn parse<S: AsRef<str>>(srcs: &[S], chart: impl Into<String>) -> Result<Self> {
        let n = srcs.len();
        let exprs = crate::expr::parse_all(srcs, crate::expr::Vars::phase(n))?;
        Ok(Self {
            exprs,
            chart: chart.into(),
            provenance: Provenance::User,
        })
    }

    pub fn zero(n: usize, chart: impl Into<String>) -> Self {
        Self {
            exprs: vec![crate::expr::Expr::Const(0.0); n],
            chart: chart.into(),
            provenance: Provenance::User,
        }
    }
}

impl SemisprayField for ExprSpray {
    fn dim(&self) -> usize {
        self.exprs.len()
    }
    fn chart(&self) -> &str {
        &self.chart
    }
    fn provenance(&self) -> Provenance {
        self.provenance
    }
    fn coefficients<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<Vec<R>> {
        Ok(self.exprs.iter().map(|e| e.eval(t, x, y)).collect())
    }
}

// ---------------------------------------------------------------------------
// Trivializations of ℝ×T²M

/// A chart-level trivialization `(t, x, y, z) ↦ (t, x, y, z + P(t, x, y))`.
pub trait Trivialization {
    fn dim(&self) -> usize;
    fn chart(&self) -> &str;
    /// The affine offset `P(t, x, y)`.
    fn offset(&self, v: &TangentSample) -> Result<Vec<f64>>;

    fn trivialize(&self, j: &Jet2) -> Result<Trivialized> {
        let p = self.offset(&j.base())?;
        Ok(Trivialized::new(j.t, j.x.clone(), j.y.clone(), add(&j.z, &p)))
    }

    fn detrivialize(&self, tv: &Trivialized) -> Result<Jet2> {
        let p = self.offset(&TangentSample::new(tv.t, tv.x.clone(), tv.y.clone()))?;
        Ok(Jet2::new(tv.t, tv.x.clone(), tv.y.clone(), sub(&tv.w, &p)))
    }
}

/// Spray form: `P = G`.
#[derive(Debug, Clone)]
pub struct SprayTrivialization<S>(pub S);

impl<S: SemisprayField> Trivialization for SprayTrivialization<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn chart(&self) -> &str {
        self.0.chart()
    }
    fn offset(&self, v: &TangentSample) -> Result<Vec<f64>> {
        self.0.eval(v)
    }
}

/// Connection form: `P = N⁰ + N¹·y`.
#[derive(Debug, Clone)]
pub struct ConnectionTrivialization<C>(pub C);

impl<C: ConnectionField> Trivialization for ConnectionTrivialization<C> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn chart(&self) -> &str {
        self.0.chart()
    }
    fn offset(&self, v: &TangentSample) -> Result<Vec<f64>> {
        Ok(self.0.coefficients(v)?.offset(&v.y))
    }
}

pub fn trivialize<S: SemisprayField>(s: &S, j: &Jet2) -> Result<Trivialized> {
    SprayTrivialization(s).trivialize(j)
}

pub fn detrivialize<S: SemisprayField>(s: &S, tv: &Trivialized) -> Result<Jet2> {
    SprayTrivialization(s).detrivialize(tv)
}

pub fn trivialize_by_connection<C: ConnectionField>(c: &C, j: &Jet2) -> Result<Trivialized> {
    ConnectionTrivialization(c).trivialize(j)
}

/// Change of trivialized coordinates between the charts of a transition.
/// For compatible sprays this is `(t, φ(x), dφ(x)y, dφ(x)w)`.
pub fn transition_trivialized<A, B, F, G>(
    s_a: &A,
    s_b: &B,
    tr: &crate::atlas::Transition<F, G>,
    tv: &Trivialized,
) -> Result<Trivialized>
where
    A: SemisprayField,
    B: SemisprayField,
    F: VectorMap,
    G: VectorMap,
{
    let raw = detrivialize(s_a, tv)?;
    let pushed = crate::atlas::push_jet2(tr, &raw)?;
    trivialize(s_b, &pushed)
}

/// Recovers the spray coefficients from any trivialization: the fourth
/// component of the image of the straight-line jet `(t, x, y, 0)`.
pub fn recover_g<T: Trivialization + ?Sized>(triv: &T, v: &TangentSample) -> Result<Vec<f64>> {
    let straight = Jet2::new(v.t, v.x.clone(), v.y.clone(), vec![0.0; v.dim()]);
    Ok(triv.trivialize(&straight)?.w)
}

/// Second-order pushforward `T²f`.
pub fn t2_map<F: VectorMap>(f: &F, j: &Jet2) -> Result<Jet2> {
    push_jet2_by_map(f, j)
}

/// `L_M = L_N ∘ Tf`: `L_M(t, x, y) = L_N(t, f(x), df(x)·y)`.
#[derive(Debug, Clone)]
pub struct PullbackLagrangian<L, F> {
    target: L,
    map: F,
    domain: DomainBox,
}

impl<L: ScalarField, F: VectorMap> PullbackLagrangian<L, F> {
    pub fn new(target: L, map: F) -> Result<Self> {
        if map.dim_in() != map.dim_out() || map.dim_out() != target.dim() {
            return Err(Error::Dimension {
                expected: target.dim(),
                got: map.dim_out(),
            });
        }
        let n = map.dim_in();
        let domain = DomainBox::unbounded(1)
            .product(map.domain())
            .product(&DomainBox::unbounded(n));
        Ok(Self { target, map, domain })
    }
}

impl<L: ScalarField, F: VectorMap> ScalarField for PullbackLagrangian<L, F> {
    fn dim(&self) -> usize {
        self.map.dim_in()
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> R {
        match map_jet_at(&self.map, x, false) {
            Ok(jet) => self.target.eval(t, &jet.value, &jet.jacobian.mul_vec(y)),
            Err(_) => R::cst(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FRelatedReport {
    /// `X₂ᴺ(t, f(x), df·y) − d²f(y, y) − df·X₂ᴹ(t, x, y)`
    pub acceleration_form: ResidualReport,
    /// `Gᴺ(t, f(x), df·y) + d²f(y, y) − df·Gᴹ(t, x, y)`
    pub coefficient_form: ResidualReport,
}

impl FRelatedReport {
    pub fn max_residual(&self) -> f64 {
        self.acceleration_form.max_residual.max(self.coefficient_form.max_residual)
    }
}

/// Audits `f`-relatedness of two semisprays in both sign conventions.
pub fn check_f_related<M, N, F>(s_m: &M, s_n: &N, f: &F, samples: &[TangentSample]) -> Result<FRelatedReport>
where
    M: SemisprayField,
    N: SemisprayField,
    F: VectorMap,
{
    let mut accel = Vec::with_capacity(samples.len());
    let mut coeff = Vec::with_capacity(samples.len());
    for v in samples {
        let jet = map_jet(f, &v.x, true)?;
        let fy = jet.jacobian.mul_vec(&v.y);
        let d2 = jet.second_contract(&v.y, &v.y);
        let pushed = TangentSample::new(v.t, jet.value.clone(), fy);

        let x2_m = s_m.acceleration(v.t, &v.x, &v.y)?;
        let x2_n = s_n.acceleration(pushed.t, &pushed.x, &pushed.y)?;
        let r1 = sub(&sub(&x2_n, &d2), &jet.jacobian.mul_vec(&x2_m));
        accel.push(norm_inf(&r1));

        let g_m = s_m.eval(v)?;
        let g_n = s_n.eval(&pushed)?;
        let r2 = sub(&add(&g_n, &d2), &jet.jacobian.mul_vec(&g_m));
        coeff.push(norm_inf(&r2));
    }
    Ok(FRelatedReport {
        acceleration_form: ResidualReport::from_residuals("f-related (acceleration form)", samples, accel),
        coefficient_form: ResidualReport::from_residuals("f-related (coefficient form)", samples, coeff),
    })
}

/// Residual of the identity `X₂ + G_can + N⁰ = 0` at one sample.
pub fn sign_ledger_residual<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample) -> Result<f64> {
    let x2 = lagrangian_vector_field(l, v)?;
    let g = canonical_g(l, v)?;
    let n0 = lagrangian_n0_at(l, v.t, &v.x, &v.y)?;
    Ok(norm_inf(&add(&add(&x2, &g), &n0)))
}

/// `|i_Z Ω_L(w)|` with `Z = (1, y, X₂)` and `Ω_L = ω_L + dE_L ∧ dt`.
pub fn iz_omega_residual<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample, w: &TangentVector) -> Result<f64> {
    let jet = l.jet(v)?;
    let z = TangentVector::new(1.0, v.y.clone(), fiber_solve(&jet.dy_dy, &alpha(&jet, &v.y))?);
    let omega = crate::lagrangian::omega_l_from_jet(&jet, &z, w);
    let de_z = crate::lagrangian::energy_differential_from_jet(&jet, &v.y, &z);
    let de_w = crate::lagrangian::energy_differential_from_jet(&jet, &v.y, w);
    Ok((omega + de_z * w.s - de_w * z.s).abs())
}

/// Affine offset between the spray-form and connection-form trivializations,
/// `P − G`, for the temporal spray connection.
pub fn trivialization_offset_gap<S: SemisprayField>(s: &S, v: &TangentSample) -> Result<Vec<f64>> {
    let (_, temporal) = connections_from_semispray(s, v)?;
    Ok(sub(&temporal.offset(&v.y), &s.eval(v)?))
}

/// Error unless the spray has the expected provenance.
pub fn require_provenance<S: SemisprayField>(s: &S, expected: Provenance) -> Result<()> {
    if s.provenance() == expected {
        Ok(())
    } else {
        Err(Error::Provenance {
            expected: expected.to_string(),
            found: s.provenance().to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkernel::{fd_partials, IdentityMap};
    use crate::expr::{ExprLagrangian, ExprMap};

    fn lag(src: &str, n: usize) -> TimeLagrangian<ExprLagrangian> {
        TimeLagrangian::new(ExprLagrangian::parse(src, n).unwrap(), "a")
    }

    fn s(t: f64, x: &[f64], y: &[f64]) -> TangentSample {
        TangentSample::new(t, x.to_vec(), y.to_vec())
    }

    /// `X₂` from the finite-difference jet, solved by hand for n = 1.
    fn fd_x2_1d(l: &TimeLagrangian<ExprLagrangian>, v: &TangentSample) -> f64 {
        let j = fd_partials(l.field(), v, 1e-3).unwrap();
        (j.dx[0] - j.dt_dy[0] - j.dx_dy[(0, 0)] * v.y[0]) / j.dy_dy[(0, 0)]
    }

    #[test]
    fn lagrangian_vector_field_examples() {
        let free = lag("0.5*(y0^2+y1^2)", 2);
        assert_eq!(lagrangian_vector_field(&free, &s(0.0, &[1.0, 1.0], &[2.0, 3.0])).unwrap(), vec![0.0, 0.0]);

        let osc = lag("0.5*y0^2 - 0.5*x0^2", 1);
        let v = s(0.7, &[1.0], &[0.0]);
        let x2 = lagrangian_vector_field(&osc, &v).unwrap()[0];
        assert!((fd_x2_1d(&osc, &v) + 1.0).abs() < 1e-8);
        assert_eq!(x2, -1.0);

        let cald = lag("0.5*exp(2*t)*y0^2", 1);
        let v = s(0.0, &[0.3], &[3.0]);
        assert!((fd_x2_1d(&cald, &v) + 6.0).abs() < 1e-7);
        assert_eq!(lagrangian_vector_field(&cald, &v).unwrap()[0], -6.0);
        let z = lagrangian_field(&cald, &v).unwrap();
        assert_eq!((z.s, z.z.clone()), (1.0, vec![3.0]));
    }

    #[test]
    fn singular_lagrangian_is_a_regularity_error() {
        let quartic = lag("0.25*y0^4", 1);
        let err = lagrangian_vector_field(&quartic, &s(0.0, &[0.0], &[0.0])).unwrap_err();
        assert!(matches!(err, Error::Regularity { .. }));
        assert!(canonical_g(&quartic, &s(0.0, &[0.0], &[0.0])).is_err());
    }

    #[test]
    fn canonical_g_examples() {
        let free = lag("0.5*(y0^2+y1^2)", 2);
        assert_eq!(canonical_g(&free, &s(0.0, &[1.0, 1.0], &[2.0, 3.0])).unwrap(), vec![0.0, 0.0]);
        let osc = lag("0.5*y0^2 - 0.5*x0^2", 1);
        assert_eq!(canonical_g(&osc, &s(0.2, &[1.0], &[0.0])).unwrap(), vec![1.0]);
        let cald = lag("0.5*exp(2*t)*y0^2", 1);
        assert_eq!(canonical_g(&cald, &s(0.0, &[0.0], &[3.0])).unwrap(), vec![0.0]);
    }

    #[test]
    fn lagrangian_connection_examples() {
        let free = lag("0.5*(y0^2+y1^2)", 2);
        let c = connection_from_l(&free, &s(0.0, &[1.0, 1.0], &[2.0, 3.0])).unwrap();
        assert_eq!(c, ConnectionCoefficients::zero(2));
        let cald = lag("0.5*exp(2*t)*y0^2", 1);
        let c = connection_from_l(&cald, &s(0.0, &[0.0], &[3.0])).unwrap();
        assert_eq!(c.n0, vec![6.0]);
        assert_eq!(c.n1[(0, 0)], 0.0);
        let osc = lag("0.5*y0^2 - 0.5*x0^2", 1);
        let c = connection_from_l(&osc, &s(0.0, &[0.4], &[1.3])).unwrap();
        assert_eq!(c, ConnectionCoefficients::zero(1));
    }

    #[test]
    fn n1_of_velocity_dependent_g() {
        // L = ½y²·(1 + x²): G = x·y²/(1 + x²), so ∂₃G = 2xy/(1 + x²).
        let l = lag("0.5*y0^2*(1 + x0^2)", 1);
        let v = s(0.0, &[0.5], &[2.0]);
        let c = connection_from_l(&l, &v).unwrap();
        let want = 2.0 * 0.5 * 2.0 / 1.25;
        assert!((c.n1[(0, 0)] - want).abs() < 1e-14);
    }

    #[test]
    fn spray_connections() {
        let zero = ExprSpray::zero(1, "a");
        let (a, b) = connections_from_semispray(&zero, &s(0.0, &[1.0], &[1.0])).unwrap();
        assert_eq!(a, ConnectionCoefficients::zero(1));
        assert_eq!(b, ConnectionCoefficients::zero(1));

        let g = ExprSpray::parse(&["(1 + t)*x0"], "a").unwrap();
        let v = s(1.0, &[2.0], &[0.7]);
        let (a, b) = connections_from_semispray(&g, &v).unwrap();
        assert_eq!((a.n0[0], a.n1[(0, 0)]), (0.0, 0.0));
        assert_eq!((b.n0[0], b.n1[(0, 0)]), (2.0, 0.0));

        let g = ExprSpray::parse(&["0.5*y0^2"], "a").unwrap();
        let (a, b) = connections_from_semispray(&g, &s(0.0, &[0.0], &[3.0])).unwrap();
        assert_eq!(a.n1[(0, 0)], 3.0);
        assert_eq!(b.n1[(0, 0)], 3.0);
    }

    #[test]
    fn trivialize_round_trip_and_examples() {
        let zero = ExprSpray::zero(1, "a");
        let j = Jet2::new(0.3, vec![1.0], vec![2.0], vec![3.0]);
        assert_eq!(trivialize(&zero, &j).unwrap().w, vec![3.0]);
        assert_eq!(detrivialize(&zero, &trivialize(&zero, &j).unwrap()).unwrap(), j);

        let harmonic = CanonicalSpray::new(lag("0.5*y0^2 - 0.5*x0^2", 1));
        let tv = trivialize(&harmonic, &Jet2::new(0.0, vec![1.0], vec![0.0], vec![0.0])).unwrap();
        assert_eq!(tv, Trivialized::new(0.0, vec![1.0], vec![0.0], vec![1.0]));
        assert_eq!(detrivialize(&harmonic, &tv).unwrap().z, vec![0.0]);

        // zero section (t, x, 0, 0) comes from the raw jet with z = −G(t, x, 0)
        let x = vec![0.6];
        let g0 = harmonic.eval(&s(0.0, &x, &[0.0])).unwrap();
        let raw = detrivialize(&harmonic, &Trivialized::new(0.0, x.clone(), vec![0.0], vec![0.0])).unwrap();
        assert_eq!(raw.z, neg(&g0));
    }

    #[test]
    fn connection_trivialization_examples() {
        let zero = ConstantConnection::new(vec![0.0, 0.0], Matrix::zeros(2, 2), "a");
        let j = Jet2::new(0.0, vec![1.0, 1.0], vec![1.0, 2.0], vec![0.5, 0.5]);
        assert_eq!(trivialize_by_connection(&zero, &j).unwrap().w, vec![0.5, 0.5]);
        let ident = ConstantConnection::new(vec![0.0, 0.0], Matrix::identity(2), "a");
        let j = Jet2::new(0.0, vec![1.0, 1.0], vec![1.0, 2.0], vec![0.0, 0.0]);
        assert_eq!(trivialize_by_connection(&ident, &j).unwrap().w, vec![1.0, 2.0]);
        let cald = LagrangianConnection::new(lag("0.5*exp(2*t)*y0^2", 1));
        let j = Jet2::new(0.0, vec![0.0], vec![3.0], vec![0.0]);
        assert_eq!(trivialize_by_connection(&cald, &j).unwrap().w, vec![6.0]);
    }

    #[test]
    fn recover_g_examples() {
        let harmonic = CanonicalSpray::new(lag("0.5*y0^2 - 0.5*x0^2", 1));
        let v = s(0.0, &[1.0], &[0.0]);
        assert_eq!(recover_g(&SprayTrivialization(&harmonic), &v).unwrap(), vec![1.0]);
        let zero = ExprSpray::zero(2, "a");
        assert_eq!(recover_g(&SprayTrivialization(&zero), &s(1.0, &[1.0, 2.0], &[3.0, 4.0])).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn f_related_examples() {
        let id = IdentityMap::new(1);
        let zero = ExprSpray::zero(1, "m");
        let one = ExprSpray::parse(&["1"], "n").unwrap();
        let samples = vec![s(0.0, &[0.1], &[0.2]), s(1.0, &[-0.5], &[1.0])];
        let r = check_f_related(&zero, &one, &id, &samples).unwrap();
        assert_eq!(r.coefficient_form.max_residual, 1.0);
        assert_eq!(r.acceleration_form.max_residual, 1.0);

        let lin = ExprMap::parse(&["2*x0"], 1).unwrap();
        let r = check_f_related(&zero, &zero, &lin, &samples).unwrap();
        assert_eq!(r.max_residual(), 0.0);
    }

    #[test]
    fn pullback_pair_is_f_related() {
        let f = ExprMap::parse(&["x0 + 0.1*x0^3"], 1).unwrap();
        let ln = ExprLagrangian::parse("0.5*y0^2", 1).unwrap();
        let lm = TimeLagrangian::new(PullbackLagrangian::new(ln.clone(), f.clone()).unwrap(), "m");
        let ln = TimeLagrangian::new(ln, "n");
        let samples: Vec<_> = (0..10)
            .map(|i| s(0.1 * i as f64, &[-1.0 + 0.2 * i as f64], &[0.5 - 0.1 * i as f64]))
            .collect();
        let r = check_f_related(&LagrangianSpray::new(lm.clone()), &LagrangianSpray::new(ln.clone()), &f, &samples).unwrap();
        assert!(r.max_residual() < 1e-12, "{}", r.max_residual());
        let r = check_f_related(&CanonicalSpray::new(lm), &CanonicalSpray::new(ln), &f, &samples).unwrap();
        assert!(r.max_residual() < 1e-12);
    }

    #[test]
    fn t2_map_examples() {
        let cubic = ExprMap::parse(&["x0 + 0.1*x0^3"], 1).unwrap();
        let j = t2_map(&cubic, &Jet2::new(0.0, vec![0.5], vec![1.0], vec![0.0])).unwrap();
        assert!((j.x[0] - 0.5125).abs() < 1e-15);
        assert!((j.y[0] - 1.075).abs() < 1e-15);
        assert!((j.z[0] - 0.3).abs() < 1e-15);
        let id = IdentityMap::new(2);
        let j0 = Jet2::new(1.0, vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]);
        assert_eq!(t2_map(&id, &j0).unwrap(), j0);
        let a = ExprMap::parse(&["x0 + 2*x1", "3*x1"], 2).unwrap();
        let j = t2_map(&a, &j0).unwrap();
        assert_eq!(j.x, vec![5.0, 6.0]);
        assert_eq!(j.y, vec![11.0, 12.0]);
        assert_eq!(j.z, vec![17.0, 18.0]);
    }

    #[test]
    fn forcing_requires_lagrangian_provenance() {
        let user = ExprSpray::zero(1, "a");
        assert!(require_provenance(&user, Provenance::LagrangianVectorField).is_err());
        let lspray = LagrangianSpray::new(lag("0.5*y0^2", 1));
        assert!(require_provenance(&lspray, Provenance::LagrangianVectorField).is_ok());
    }
}
