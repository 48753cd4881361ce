//! Regular time-dependent Lagrangians and their canonical objects: energy,
//! the 1-form `θ_L = dL∘J`, the 2-form `ω_L`, the Liouville field and the
//! tangent structure `J`.

use serde::Serialize;

use crate::diffkernel::{partials, partials_at, DomainBox, LagrangianJet, Real, ScalarField};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::point::{TangentSample, TangentVector};

/// Condition estimate above which the fiber Hessian is treated as singular.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e8;

/// A Lagrangian `L(t, x, y)` attached to a chart.
#[derive(Debug, Clone)]
pub struct TimeLagrangian<L> {
    field: L,
    chart: String,
}

impl<L: ScalarField> TimeLagrangian<L> {
    pub fn new(field: L, chart: impl Into<String>) -> Self {
        Self {
            field,
            chart: chart.into(),
        }
    }

    pub fn field(&self) -> &L {
        &self.field
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn jet(&self, v: &TangentSample) -> Result<LagrangianJet<f64>> {
        partials(&self.field, v)
    }

    pub fn jet_at<R: Real>(&self, t: R, x: &[R], y: &[R]) -> Result<LagrangianJet<R>> {
        partials_at(&self.field, t, x, y)
    }

    pub fn value(&self, v: &TangentSample) -> Result<f64> {
        crate::diffkernel::eval_field(&self.field, v.t, &v.x, &v.y)
    }
}

impl<L: ScalarField> ScalarField for TimeLagrangian<L> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn domain(&self) -> &DomainBox {
        self.field.domain()
    }
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> R {
        self.field.eval(t, x, y)
    }
}

/// 1-norm condition estimate `‖H‖₁·‖H⁻¹‖₁`; infinite when `H` is singular.
pub fn condition_estimate(h: &Matrix<f64>) -> f64 {
    let norm1 = |m: &Matrix<f64>| {
        (0..m.cols())
            .map(|j| (0..m.rows()).map(|i| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match h.inverse() {
        Ok(inv) => {
            let c = norm1(h) * norm1(&inv);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Solves `H·u = rhs` for the fiber Hessian, refusing ill-conditioned `H`.
pub(crate) fn fiber_solve<R: Real>(h: &Matrix<R>, rhs: &[R]) -> Result<Vec<R>> {
    let condition = condition_estimate(&h.to_f64());
    if condition > DEFAULT_CONDITION_BOUND {
        return Err(Error::Regularity { condition });
    }
    h.solve(rhs)
        .map_err(|_| Error::Regularity { condition: f64::INFINITY })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityProbe {
    pub index: usize,
    pub condition: f64,
    pub sigma_min: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub bound: f64,
    pub probes: Vec<RegularityProbe>,
}

impl RegularityReport {
    pub fn flagged(&self) -> Vec<usize> {
        self.probes
            .iter()
            .filter(|p| p.flagged)
            .map(|p| p.index)
            .collect()
    }

    pub fn all_regular(&self) -> bool {
        self.probes.iter().all(|p| !p.flagged)
    }
}

/// Classifies one fiber Hessian against a condition bound.
pub fn classify_hessian(h: &Matrix<f64>, bound: f64) -> (f64, f64, bool) {
    let condition = condition_estimate(h);
    let (_, sigma_min) = h.singular_extremes();
    (condition, sigma_min, !(condition <= bound))
}

/// Probes `∂₃²L` at each sample. Singular samples are flagged, not fatal.
pub fn regularity_check<L: ScalarField>(
    l: &TimeLagrangian<L>,
    samples: &[TangentSample],
    bound: f64,
) -> Result<RegularityReport> {
    let probes = samples
        .iter()
        .enumerate()
        .map(|(index, v)| {
            let jet = l.jet(v)?;
            let (condition, sigma_min, flagged) = classify_hessian(&jet.dy_dy, bound);
            Ok(RegularityProbe {
                index,
                condition,
                sigma_min,
                flagged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegularityReport { bound, probes })
}

/// `E_L = ∂₃L·y − L`.
pub fn energy<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample) -> Result<f64> {
    let jet = l.jet(v)?;
    Ok(energy_from_jet(&jet, &v.y))
}

pub(crate) fn energy_from_jet<R: Real>(jet: &LagrangianJet<R>, y: &[R]) -> R {
    dot(&jet.dy, y) - jet.value
}

/// `θ_L(v)(s, z, w) = ∂₃L(v)·z`.
pub fn theta_l<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample, w: &TangentVector) -> Result<f64> {
    let jet = l.jet(v)?;
    Ok(dot(&jet.dy, &w.z))
}

/// `dL(v)·(s, z, w)`.
pub fn differential<L: ScalarField>(l: &TimeLagrangian<L>, v: &TangentSample, w: &TangentVector) -> Result<f64> {
    let jet = l.jet(v)?;
    Ok(jet.dt * w.s + dot(&jet.dx, &w.z) + dot(&jet.dy, &w.w))
}

/// `dE_L(v)·(s, z, w)`, assembled from the second-order jet.
pub fn energy_differential<L: ScalarField>(
    l: &TimeLagrangian<L>,
    v: &TangentSample,
    w: &TangentVector,
) -> Result<f64> {
    let jet = l.jet(v)?;
    Ok(energy_differential_from_jet(&jet, &v.y, w))
}

pub(crate) fn energy_differential_from_jet(jet: &LagrangianJet<f64>, y: &[f64], w: &TangentVector) -> f64 {
    let de_dt = dot(&jet.dt_dy, y) - jet.dt;
    let my = jet.dx_dy.tr_mul_vec(y);
    let de_dx: Vec<f64> = my.iter().zip(&jet.dx).map(|(a, b)| a - b).collect();
    let de_dy = jet.dy_dy.mul_vec(y);
    de_dt * w.s + dot(&de_dx, &w.z) + dot(&de_dy, &w.w)
}

/// The six-term expression for `ω_L(v)(w₁, w₂)`.
pub fn omega_l_from_jet(jet: &LagrangianJet<f64>, w1: &TangentVector, w2: &TangentVector) -> f64 {
    dot(&jet.dt_dy, &w1.z) * w2.s - dot(&jet.dt_dy, &w2.z) * w1.s
        + jet.dx_dy.bilinear(&w1.z, &w2.z)
        - jet.dx_dy.bilinear(&w2.z, &w1.z)
        + jet.dy_dy.bilinear(&w1.z, &w2.w)
        - jet.dy_dy.bilinear(&w2.z, &w1.w)
}

pub fn omega_l<L: ScalarField>(
    l: &TimeLagrangian<L>,
    v: &TangentSample,
    w1: &TangentVector,
    w2: &TangentVector,
) -> Result<f64> {
    let jet = l.jet(v)?;
    Ok(omega_l_from_jet(&jet, w1, w2))
}

/// Liouville field `Γ(t, x, y) = (0, 0, y)`.
pub fn liouville(v: &TangentSample) -> TangentVector {
    TangentVector::new(0.0, vec![0.0; v.dim()], v.y.clone())
}

/// Tangent structure `J(s, z, w) = (0, 0, z)`.
pub fn tangent_structure_j(w: &TangentVector) -> TangentVector {
    TangentVector::new(0.0, vec![0.0; w.z.len()], w.z.clone())
}
