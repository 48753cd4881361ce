//! Charts, chart transitions, pushforwards of first- and second-order data,
//! and residual checkers for the change-of-coordinates laws.

use serde::Serialize;

use crate::diffkernel::{map_jet, map_jet_at, Composed, DomainBox, IdentityMap, Real, VectorMap};
use crate::error::{Error, Result};
use crate::expr::ExprMap;
use crate::linalg::{norm_inf, sub, Matrix};
use crate::point::{Jet2, TangentSample};
use crate::sampling::Sampler;
use crate::semispray::{ConnectionCoefficients, ConnectionField, Provenance, SemisprayField};

/// Boundary margin for overlap membership.
pub const OVERLAP_MARGIN: f64 = 1e-12;
/// Round-trip tolerance when validating a transition against its inverse.
pub const ROUND_TRIP_TOL: f64 = 1e-10;
const VALIDATION_PROBES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chart {
    pub id: String,
    pub domain: DomainBox,
}

impl Chart {
    pub fn new(id: impl Into<String>, domain: DomainBox) -> Result<Self> {
        if domain.dim() == 0 {
            return Err(Error::InvalidTransition("chart dimension must be at least 1".into()));
        }
        if domain.lo.iter().zip(&domain.hi).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidTransition("chart domain is empty".into()));
        }
        Ok(Self { id: id.into(), domain })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
}

/// A diffeomorphism `φ` between two charts on a declared overlap box, with
/// its closed-form inverse.
#[derive(Debug, Clone)]
pub struct Transition<F, G> {
    from: String,
    to: String,
    map: F,
    inverse: G,
    overlap: DomainBox,
}

impl<F: VectorMap, G: VectorMap> Transition<F, G> {
    /// Builds a transition after checking dimensions, the round trip
    /// `φ⁻¹(φ(x)) = x` and invertibility of `dφ` at seeded overlap probes.
    pub fn new(from: impl Into<String>, to: impl Into<String>, map: F, inverse: G, overlap: DomainBox) -> Result<Self> {
        let n = overlap.dim();
        for (what, got) in [
            ("map input", map.dim_in()),
            ("map output", map.dim_out()),
            ("inverse input", inverse.dim_in()),
            ("inverse output", inverse.dim_out()),
        ] {
            if got != n {
                return Err(Error::InvalidTransition(format!("{what} has dimension {got}, overlap has {n}")));
            }
        }
        let tr = Self {
            from: from.into(),
            to: to.into(),
            map,
            inverse,
            overlap,
        };
        tr.validate()?;
        Ok(tr)
    }

    fn validate(&self) -> Result<()> {
        let mut sampler = Sampler::new(0x7a11);
        for _ in 0..VALIDATION_PROBES {
            let x = sampler.point_in(&self.overlap, 0.01);
            let jet = map_jet(&self.map, &x, false)?;
            let back = crate::diffkernel::eval_map(&self.inverse, &jet.value)?;
            let err = norm_inf(&sub(&back, &x));
            if !(err <= ROUND_TRIP_TOL * (1.0 + norm_inf(&x))) {
                return Err(Error::InvalidTransition(format!(
                    "inverse round trip misses by {err:e} at {x:?}"
                )));
            }
            let (_, sigma_min) = jet.jacobian.singular_extremes();
            if !(sigma_min > 1e-12) {
                return Err(Error::InvalidTransition(format!("differential is singular at {x:?}")));
            }
        }
        Ok(())
    }

    pub fn from(&self) -> &str {
        &self.from
    }

    pub fn to(&self) -> &str {
        &self.to
    }

    pub fn map(&self) -> &F {
        &self.map
    }

    pub fn inverse(&self) -> &G {
        &self.inverse
    }

    pub fn overlap(&self) -> &DomainBox {
        &self.overlap
    }

    pub fn dim(&self) -> usize {
        self.overlap.dim()
    }

    pub fn check_overlap(&self, x: &[f64]) -> Result<()> {
        self.overlap.check_with_margin(x, OVERLAP_MARGIN)
    }

    /// `next ∘ self`, on this transition's overlap.
    pub fn then<F2: VectorMap, G2: VectorMap>(
        self,
        next: Transition<F2, G2>,
    ) -> Transition<Composed<F, F2>, Composed<G2, G>> {
        Transition {
            from: self.from,
            to: next.to,
            map: Composed::new(self.map, next.map),
            inverse: Composed::new(next.inverse, self.inverse),
            overlap: self.overlap,
        }
    }
}

impl Transition<IdentityMap, IdentityMap> {
    pub fn identity(chart: impl Into<String>, n: usize) -> Self {
        let chart = chart.into();
        Self {
            from: chart.clone(),
            to: chart,
            map: IdentityMap::new(n),
            inverse: IdentityMap::new(n),
            overlap: DomainBox::unbounded(n),
        }
    }
}

/// The componentwise cubic diffeomorphism `φ(x)ᵢ = xᵢ + c·xᵢ³` (`c > 0`)
/// on ℝⁿ, with its real-branch Cardano inverse.
pub fn cubic_transition(
    from: impl Into<String>,
    to: impl Into<String>,
    n: usize,
    c: f64,
    overlap: DomainBox,
) -> Result<Transition<ExprMap, ExprMap>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidTransition(format!("cubic coefficient {c} must be positive")));
    }
    let fwd: Vec<String> = (0..n).map(|i| format!("x{i} + {c:e}*x{i}^3")).collect();
    let a = 0.5 / c;
    let b = 0.25 / (c * c);
    let k = 1.0 / (27.0 * c * c * c);
    let inv: Vec<String> = (0..n)
        .map(|i| {
            let d = format!("sqrt({b:e}*x{i}^2 + {k:e})");
            format!("cbrt({a:e}*x{i} + {d}) + cbrt({a:e}*x{i} - {d})")
        })
        .collect();
    Transition::new(from, to, ExprMap::parse(&fwd, n)?, ExprMap::parse(&inv, n)?, overlap)
}

/// `(t, φ(x), dφ(x)y)`.
pub fn push_tangent<F: VectorMap, G: VectorMap>(tr: &Transition<F, G>, v: &TangentSample) -> Result<TangentSample> {
    tr.check_overlap(&v.x)?;
    let jet = map_jet(&tr.map, &v.x, false)?;
    let y = jet.jacobian.mul_vec(&v.y);
    Ok(TangentSample::new(v.t, jet.value, y))
}

/// `(t, φ(x), dφ(x)y, dφ(x)z + d²φ(x)(y, y))`.
pub fn push_jet2<F: VectorMap, G: VectorMap>(tr: &Transition<F, G>, j: &Jet2) -> Result<Jet2> {
    tr.check_overlap(&j.x)?;
    push_jet2_by_map(&tr.map, j)
}

/// Second-order pushforward by an arbitrary smooth map.
pub fn push_jet2_by_map<F: VectorMap>(f: &F, j: &Jet2) -> Result<Jet2> {
    let jet = map_jet(f, &j.x, true)?;
    let y = jet.jacobian.mul_vec(&j.y);
    let z: Vec<f64> = jet
        .jacobian
        .mul_vec(&j.z)
        .iter()
        .zip(jet.second_contract(&j.y, &j.y))
        .map(|(a, b)| a + b)
        .collect();
    Ok(Jet2::new(j.t, jet.value, y, z))
}

/// Residuals of one law at a list of samples, in max-norm over coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub law: String,
    pub sample_count: usize,
    pub max_residual: f64,
    pub argmax: Option<usize>,
    pub argmax_sample: Option<TangentSample>,
    pub per_sample: Vec<f64>,
}

impl ResidualReport {
    /// Builds a report; a NaN residual makes the maximum NaN.
    pub fn from_residuals(law: impl Into<String>, samples: &[TangentSample], residuals: Vec<f64>) -> Self {
        let mut argmax = None;
        let mut max = 0.0f64;
        for (i, &r) in residuals.iter().enumerate() {
            if r.is_nan() {
                argmax = Some(i);
                max = f64::NAN;
                break;
            }
            if argmax.is_none() || r > max {
                argmax = Some(i);
                max = r;
            }
        }
        Self {
            law: law.into(),
            sample_count: residuals.len(),
            max_residual: max,
            argmax,
            argmax_sample: argmax.and_then(|i| samples.get(i).cloned()),
            per_sample: residuals,
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("residual reports serialize")
    }
}

/// `‖G_b(t, φ(x), dφ(x)y) + d²φ(x)(y, y) − dφ(x)G_a(t, x, y)‖` per sample.
pub fn check_semispray_compat<A, B, F, G>(
    g_a: &A,
    g_b: &B,
    tr: &Transition<F, G>,
    samples: &[TangentSample],
) -> Result<ResidualReport>
where
    A: SemisprayField,
    B: SemisprayField,
    F: VectorMap,
    G: VectorMap,
{
    let mut res = Vec::with_capacity(samples.len());
    for v in samples {
        tr.check_overlap(&v.x)?;
        let jet = map_jet(&tr.map, &v.x, true)?;
        let pushed = TangentSample::new(v.t, jet.value.clone(), jet.jacobian.mul_vec(&v.y));
        let gb = g_b.eval(&pushed)?;
        let ga = g_a.eval(v)?;
        let lhs: Vec<f64> = gb
            .iter()
            .zip(jet.second_contract(&v.y, &v.y))
            .map(|(a, b)| a + b)
            .collect();
        res.push(norm_inf(&sub(&lhs, &jet.jacobian.mul_vec(&ga))));
    }
    Ok(ResidualReport::from_residuals("semispray-compat", samples, res))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectionCompatReport {
    /// `dφ·N⁰_a(v)·s − N⁰_b(v′)·s` with `s = 1`.
    pub n0: ResidualReport,
    /// `dφ·N¹_a(v)·a − N¹_b(v′)·dφ·a − d²φ(a, y)` over the unit basis of `a`.
    pub n1: ResidualReport,
}

/// `d²φ(x)(·, y)` as a matrix: column `j` is `d²φ(e_j, y)`.
fn second_in_direction<R: Real>(second: &[Matrix<R>], y: &[R]) -> Matrix<R> {
    let m = second.len();
    let n = y.len();
    let mut out = Matrix::zeros(m, n);
    for (k, h) in second.iter().enumerate() {
        let hy = h.mul_vec(y);
        for j in 0..n {
            out[(k, j)] = hy[j];
        }
    }
    out
}

pub fn check_connection_compat<A, B, F, G>(
    n_a: &A,
    n_b: &B,
    tr: &Transition<F, G>,
    samples: &[TangentSample],
) -> Result<ConnectionCompatReport>
where
    A: ConnectionField,
    B: ConnectionField,
    F: VectorMap,
    G: VectorMap,
{
    let n = tr.dim();
    let mut r0 = Vec::with_capacity(samples.len());
    let mut r1 = Vec::with_capacity(samples.len());
    for v in samples {
        tr.check_overlap(&v.x)?;
        let jet = map_jet(&tr.map, &v.x, true)?;
        let pushed = TangentSample::new(v.t, jet.value.clone(), jet.jacobian.mul_vec(&v.y));
        let ca = n_a.coefficients(v)?;
        let cb = n_b.coefficients(&pushed)?;
        r0.push(norm_inf(&sub(&jet.jacobian.mul_vec(&ca.n0), &cb.n0)));
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            let lhs = jet.jacobian.mul_vec(&ca.n1.mul_vec(&a));
            let rhs = cb.n1.mul_vec(&jet.jacobian.mul_vec(&a));
            let d2 = jet.second_contract(&a, &v.y);
            let r: Vec<f64> = (0..n).map(|i| lhs[i] - rhs[i] - d2[i]).collect();
            let r = norm_inf(&r);
            worst = if r.is_nan() { f64::NAN } else { worst.max(r) };
        }
        r1.push(worst);
    }
    Ok(ConnectionCompatReport {
        n0: ResidualReport::from_residuals("connection-compat-N0", samples, r0),
        n1: ResidualReport::from_residuals("connection-compat-N1", samples, r1),
    })
}

/// The spray on the target chart determined by the transformation law:
/// `G_b(t, u, w) = dφ(x)G_a(t, x, y) − d²φ(x)(y, y)` with `x = φ⁻¹(u)` and
/// `y = dφ(x)⁻¹w`.
#[derive(Debug, Clone)]
pub struct TransformedSpray<S, F, G> {
    source: S,
    transition: Transition<F, G>,
}

impl<S: SemisprayField, F: VectorMap, G: VectorMap> TransformedSpray<S, F, G> {
    pub fn new(source: S, transition: Transition<F, G>) -> Result<Self> {
        if source.dim() != transition.dim() {
            return Err(Error::Dimension {
                expected: transition.dim(),
                got: source.dim(),
            });
        }
        Ok(Self { source, transition })
    }

    pub fn transition(&self) -> &Transition<F, G> {
        &self.transition
    }
}

impl<S: SemisprayField, F: VectorMap, G: VectorMap> SemisprayField for TransformedSpray<S, F, G> {
    fn dim(&self) -> usize {
        self.source.dim()
    }
    fn chart(&self) -> &str {
        &self.transition.to
    }
    fn provenance(&self) -> Provenance {
        self.source.provenance()
    }
    fn coefficients<R: Real>(&self, t: R, u: &[R], w: &[R]) -> Result<Vec<R>> {
        let x = crate::diffkernel::eval_map(&self.transition.inverse, u)?;
        let jet = map_jet_at(&self.transition.map, &x, true)?;
        let y = jet.jacobian.solve(w)?;
        let ga = self.source.coefficients(t, &x, &y)?;
        let jg = jet.jacobian.mul_vec(&ga);
        let d2 = jet.second_contract(&y, &y);
        Ok(jg.iter().zip(&d2).map(|(a, b)| *a - *b).collect())
    }
}

/// The connection on the target chart determined by the transformation laws
/// `N⁰_b = dφ·N⁰_a` and `N¹_b = (dφ·N¹_a − d²φ(·, y))·dφ⁻¹`.
#[derive(Debug, Clone)]
pub struct TransformedConnection<C, F, G> {
    source: C,
    transition: Transition<F, G>,
}

impl<C: ConnectionField, F: VectorMap, G: VectorMap> TransformedConnection<C, F, G> {
    pub fn new(source: C, transition: Transition<F, G>) -> Result<Self> {
        if source.dim() != transition.dim() {
            return Err(Error::Dimension {
                expected: transition.dim(),
                got: source.dim(),
            });
        }
        Ok(Self { source, transition })
    }
}

impl<C: ConnectionField, F: VectorMap, G: VectorMap> ConnectionField for TransformedConnection<C, F, G> {
    fn dim(&self) -> usize {
        self.source.dim()
    }
    fn chart(&self) -> &str {
        &self.transition.to
    }
    fn coefficients(&self, v: &TangentSample) -> Result<ConnectionCoefficients> {
        let x = crate::diffkernel::eval_map(&self.transition.inverse, &v.x)?;
        let jet = map_jet(&self.transition.map, &x, true)?;
        let y = jet.jacobian.solve(&v.y)?;
        let ca = self.source.coefficients(&TangentSample::new(v.t, x, y.clone()))?;
        let n0 = jet.jacobian.mul_vec(&ca.n0);
        let second = jet.second.as_deref().unwrap_or(&[]);
        let d2y = second_in_direction(second, &y);
        let top = jet.jacobian.mul(&ca.n1);
        let mut diff = top.clone();
        for i in 0..diff.rows() {
            for j in 0..diff.cols() {
                diff[(i, j)] = top[(i, j)] - d2y[(i, j)];
            }
        }
        let n1 = diff.mul(&jet.jacobian.inverse()?);
        Ok(ConnectionCoefficients { n0, n1 })
    }
}
