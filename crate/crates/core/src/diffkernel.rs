//! Forward-mode differentiation kernel.
//!
//! Fields are written once against the [`Real`] trait and evaluated on plain
//! `f64` or on nested [`Dual`] numbers. A `Dual<Dual<f64>>` seeded with two
//! unit directions yields a value, two first partials and the exact mixed
//! second partial in one pass, so every Hessian block is assembled from
//! O(n²) seeded evaluations with no truncation error. Nesting one more level
//! differentiates through anything built from those blocks (linear solves
//! included).
//!
//! [`fd_partials`] is an independent central-difference oracle with one
//! Richardson step.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::point::TangentSample;

/// Scalar arithmetic shared by `f64` and dual numbers.
pub trait Real:
    Copy
    + Send
    + Sync
    + fmt::Debug
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(c: f64) -> Self;
    /// Primal (non-infinitesimal) part.
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn cbrt(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }
}

impl Real for f64 {
    fn cst(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn cbrt(self) -> Self {
        f64::cbrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// First-order dual number `re + eps·ε`, ε² = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<R> {
    pub re: R,
    pub eps: R,
}

impl<R: Real> Dual<R> {
    pub fn new(re: R, eps: R) -> Self {
        Self { re, eps }
    }

    pub fn variable(re: R) -> Self {
        Self::new(re, R::one())
    }

    pub fn constant(re: R) -> Self {
        Self::new(re, R::zero())
    }
}

impl<R: Real> Add for Dual<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<R: Real> Sub for Dual<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<R: Real> Mul for Dual<R> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<R: Real> Div for Dual<R> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl<R: Real> Neg for Dual<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<R: Real> Add<f64> for Dual<R> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        Self::new(self.re + c, self.eps)
    }
}

impl<R: Real> Sub<f64> for Dual<R> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        Self::new(self.re - c, self.eps)
    }
}

impl<R: Real> Mul<f64> for Dual<R> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Self::new(self.re * c, self.eps * c)
    }
}

impl<R: Real> Div<f64> for Dual<R> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        Self::new(self.re / c, self.eps / c)
    }
}

impl<R: Real> Real for Dual<R> {
    fn cst(c: f64) -> Self {
        Self::constant(R::cst(c))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, self.eps * e)
    }
    fn ln(self) -> Self {
        Self::new(self.re.ln(), self.eps / self.re)
    }
    fn sin(self) -> Self {
        Self::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Self::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Self::new(s, self.eps / (s * 2.0))
    }
    fn cbrt(self) -> Self {
        let c = self.re.cbrt();
        Self::new(c, self.eps / (c * c * 3.0))
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            1 => self,
            _ => Self::new(
                self.re.powi(n),
                self.eps * self.re.powi(n - 1) * f64::from(n),
            ),
        }
    }
}

/// Hyper-dual number: two independent infinitesimal directions.
pub type HyperDual<R> = Dual<Dual<R>>;

fn seed2<R: Real>(v: R, a: f64, b: f64) -> HyperDual<R> {
    Dual::new(Dual::new(v, R::cst(a)), Dual::new(R::cst(b), R::zero()))
}

/// Axis-aligned open box. Infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::new(vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim])
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Checks strict membership, widened by `margin` for floating-point drift.
    pub fn check_with_margin(&self, p: &[f64], margin: f64) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: p.len(),
            });
        }
        for (coord, ((&v, &lo), &hi)) in p.iter().zip(&self.lo).zip(&self.hi).enumerate() {
            if !(v > lo - margin && v < hi + margin) {
                return Err(Error::Domain {
                    coord,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    pub fn check(&self, p: &[f64]) -> Result<()> {
        self.check_with_margin(p, 0.0)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.check(p).is_ok()
    }

    /// Box of the product `self × other`.
    pub fn product(&self, other: &DomainBox) -> DomainBox {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        DomainBox::new(lo, hi)
    }
}

/// A scalar field `L(t, x, y)` on an open box of ℝ×ℝⁿ×ℝⁿ.
pub trait ScalarField: Send + Sync {
    /// Configuration dimension `n`.
    fn dim(&self) -> usize;
    /// Domain over the `1 + 2n` flattened coordinates `(t, x, y)`.
    fn domain(&self) -> &DomainBox;
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> R;
}

/// A map ℝⁿ ⊇ box → ℝᵐ.
pub trait VectorMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn domain(&self) -> &DomainBox;
    fn eval<R: Real>(&self, x: &[R]) -> Vec<R>;
}

impl<T: ScalarField + ?Sized> ScalarField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn domain(&self) -> &DomainBox {
        (**self).domain()
    }
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> R {
        (**self).eval(t, x, y)
    }
}

impl<T: VectorMap + ?Sized> VectorMap for &T {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn domain(&self) -> &DomainBox {
        (**self).domain()
    }
    fn eval<R: Real>(&self, x: &[R]) -> Vec<R> {
        (**self).eval(x)
    }
}

/// Derivative bundle of a Lagrangian at one sample.
///
/// Index conventions: `dx_dy[(a, b)] = ∂²L/∂y_a∂x_b`, so the bilinear form
/// `∂₂∂₃L[z, w]` (first slot paired with the velocity derivative) is
/// `zᵀ·dx_dy·w`. `dy_dy` is the fiber Hessian `∂₃²L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianJet<R> {
    pub value: R,
    pub dt: R,
    pub dx: Vec<R>,
    pub dy: Vec<R>,
    pub dt_dy: Vec<R>,
    pub dx_dy: Matrix<R>,
    pub dy_dy: Matrix<R>,
}

impl<R: Real> LagrangianJet<R> {
    pub fn dim(&self) -> usize {
        self.dx.len()
    }

    pub fn to_f64(&self) -> LagrangianJet<f64> {
        let v = |a: &[R]| a.iter().map(Real::value).collect::<Vec<_>>();
        LagrangianJet {
            value: self.value.value(),
            dt: self.dt.value(),
            dx: v(&self.dx),
            dy: v(&self.dy),
            dt_dy: v(&self.dt_dy),
            dx_dy: self.dx_dy.to_f64(),
            dy_dy: self.dy_dy.to_f64(),
        }
    }
}

impl LagrangianJet<f64> {
    /// All entries in a fixed order, for elementwise comparison.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![self.value, self.dt];
        out.extend_from_slice(&self.dx);
        out.extend_from_slice(&self.dy);
        out.extend_from_slice(&self.dt_dy);
        for m in [&self.dx_dy, &self.dy_dy] {
            for i in 0..m.rows() {
                out.extend_from_slice(m.row(i));
            }
        }
        out
    }

    /// Elementwise deviation `|a − b| / max(1, |b|)`, maximized over entries.
    pub fn relative_deviation(&self, reference: &LagrangianJet<f64>) -> f64 {
        self.flatten()
            .iter()
            .zip(reference.flatten())
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

fn check_sample_dims(n: usize, x_len: usize, y_len: usize) -> Result<()> {
    if x_len != n {
        return Err(Error::Dimension {
            expected: n,
            got: x_len,
        });
    }
    if y_len != n {
        return Err(Error::Dimension {
            expected: n,
            got: y_len,
        });
    }
    Ok(())
}

fn sample_coords<R: Real>(t: R, x: &[R], y: &[R]) -> Vec<f64> {
    let mut c = Vec::with_capacity(1 + 2 * x.len());
    c.push(t.value());
    c.extend(x.iter().map(Real::value));
    c.extend(y.iter().map(Real::value));
    c
}

/// Evaluates `L` at a (possibly dual-valued) sample after the domain check.
pub fn eval_field<R: Real, L: ScalarField>(l: &L, t: R, x: &[R], y: &[R]) -> Result<R> {
    check_sample_dims(l.dim(), x.len(), y.len())?;
    l.domain().check(&sample_coords(t, x, y))?;
    Ok(l.eval(t, x, y))
}

/// All partial derivatives of `L` needed by the mechanics layer, at a sample
/// whose coordinates may themselves carry derivative information.
pub fn partials_at<R: Real, L: ScalarField>(
    l: &L,
    t: R,
    x: &[R],
    y: &[R],
) -> Result<LagrangianJet<R>> {
    let n = l.dim();
    check_sample_dims(n, x.len(), y.len())?;
    l.domain().check(&sample_coords(t, x, y))?;
    let m = 1 + 2 * n;
    let base: Vec<R> = std::iter::once(t).chain(x.iter().copied()).chain(y.iter().copied()).collect();

    // Evaluates with unit seeds on input slots `a` and `b`.
    let eval_pair = |a: usize, b: usize| -> HyperDual<R> {
        let z: Vec<HyperDual<R>> = (0..m)
            .map(|k| {
                seed2(
                    base[k],
                    if k == a { 1.0 } else { 0.0 },
                    if k == b { 1.0 } else { 0.0 },
                )
            })
            .collect();
        l.eval(z[0], &z[1..=n], &z[n + 1..])
    };

    let mut jet = LagrangianJet {
        value: R::zero(),
        dt: R::zero(),
        dx: vec![R::zero(); n],
        dy: vec![R::zero(); n],
        dt_dy: vec![R::zero(); n],
        dx_dy: Matrix::zeros(n, n),
        dy_dy: Matrix::zeros(n, n),
    };
    for a in 0..n {
        let ya = 1 + n + a;
        let r = eval_pair(ya, 0);
        if a == 0 {
            jet.value = r.re.re;
            jet.dt = r.eps.re;
        }
        jet.dy[a] = r.re.eps;
        jet.dt_dy[a] = r.eps.eps;
        for b in 0..n {
            let r = eval_pair(ya, 1 + b);
            if a == 0 {
                jet.dx[b] = r.eps.re;
            }
            jet.dx_dy[(a, b)] = r.eps.eps;
        }
        for b in a..n {
            let r = eval_pair(ya, 1 + n + b);
            jet.dy_dy[(a, b)] = r.eps.eps;
            jet.dy_dy[(b, a)] = r.eps.eps;
        }
    }
    Ok(jet)
}

/// Exact partials of `L` at `v`.
pub fn partials<L: ScalarField>(l: &L, v: &TangentSample) -> Result<LagrangianJet<f64>> {
    partials_at(l, v.t, &v.x, &v.y)
}

/// Full gradient of `L` over `(t, x, y)` and its derivative along `dir`
/// (a Hessian-vector product), both in flattened `(t, x, y)` order.
pub fn gradient_and_directional<R: Real, L: ScalarField>(
    l: &L,
    t: R,
    x: &[R],
    y: &[R],
    dir: &[R],
) -> Result<(Vec<R>, Vec<R>)> {
    let n = l.dim();
    check_sample_dims(n, x.len(), y.len())?;
    l.domain().check(&sample_coords(t, x, y))?;
    let m = 1 + 2 * n;
    assert_eq!(dir.len(), m);
    let base: Vec<R> = std::iter::once(t).chain(x.iter().copied()).chain(y.iter().copied()).collect();
    let mut grad = Vec::with_capacity(m);
    let mut hv = Vec::with_capacity(m);
    for a in 0..m {
        let z: Vec<HyperDual<R>> = (0..m)
            .map(|k| {
                Dual::new(
                    Dual::new(base[k], if k == a { R::one() } else { R::zero() }),
                    Dual::new(dir[k], R::zero()),
                )
            })
            .collect();
        let r = l.eval(z[0], &z[1..=n], &z[n + 1..]);
        grad.push(r.re.eps);
        hv.push(r.eps.eps);
    }
    Ok((grad, hv))
}

/// Value, Jacobian and (optionally) second derivative of a vector map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapJet<R> {
    pub value: Vec<R>,
    /// `m × n`
    pub jacobian: Matrix<R>,
    /// One symmetric `n × n` block per output component.
    pub second: Option<Vec<Matrix<R>>>,
}

impl<R: Real> MapJet<R> {
    /// `d²f(x)(a, b)`, zero if second derivatives were not requested.
    pub fn second_contract(&self, a: &[R], b: &[R]) -> Vec<R> {
        match &self.second {
            Some(h) => h.iter().map(|hk| hk.bilinear(a, b)).collect(),
            None => vec![R::zero(); self.value.len()],
        }
    }
}

fn check_map_input<R: Real, F: VectorMap>(f: &F, x: &[R]) -> Result<()> {
    if x.len() != f.dim_in() {
        return Err(Error::Dimension {
            expected: f.dim_in(),
            got: x.len(),
        });
    }
    let p: Vec<f64> = x.iter().map(Real::value).collect();
    f.domain().check(&p)
}

/// Jet of a vector map at a point whose coordinates may carry derivative
/// information.
pub fn map_jet_at<R: Real, F: VectorMap>(f: &F, x: &[R], want_second: bool) -> Result<MapJet<R>> {
    check_map_input(f, x)?;
    let n = f.dim_in();
    let m = f.dim_out();
    let mut jac = Matrix::zeros(m, n);
    let mut value = vec![R::zero(); m];
    if !want_second {
        for j in 0..n {
            let z: Vec<Dual<R>> = x
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual::new(v, if k == j { R::one() } else { R::zero() }))
                .collect();
            let out = f.eval(&z);
            for i in 0..m {
                if j == 0 {
                    value[i] = out[i].re;
                }
                jac[(i, j)] = out[i].eps;
            }
        }
        if n == 0 {
            value = f.eval(x);
        }
        return Ok(MapJet {
            value,
            jacobian: jac,
            second: None,
        });
    }
    let mut second = vec![Matrix::zeros(n, n); m];
    for a in 0..n {
        for b in a..n {
            let z: Vec<HyperDual<R>> = x
                .iter()
                .enumerate()
                .map(|(k, &v)| seed2(v, if k == a { 1.0 } else { 0.0 }, if k == b { 1.0 } else { 0.0 }))
                .collect();
            let out = f.eval(&z);
            for i in 0..m {
                if a == 0 && b == 0 {
                    value[i] = out[i].re.re;
                }
                if b == a {
                    jac[(i, a)] = out[i].re.eps;
                }
                second[i][(a, b)] = out[i].eps.eps;
                second[i][(b, a)] = out[i].eps.eps;
            }
        }
    }
    Ok(MapJet {
        value,
        jacobian: jac,
        second: Some(second),
    })
}

/// `f(x)`, `df(x)` and, if requested, `d²f(x)`.
pub fn map_jet<F: VectorMap>(f: &F, x: &[f64], want_second: bool) -> Result<MapJet<f64>> {
    map_jet_at(f, x, want_second)
}

/// Evaluates a map after the domain check.
pub fn eval_map<R: Real, F: VectorMap>(f: &F, x: &[R]) -> Result<Vec<R>> {
    check_map_input(f, x)?;
    Ok(f.eval(x))
}

/// Default base step of the finite-difference oracle.
pub const FD_DEFAULT_STEP: f64 = 1e-3;

/// Central-difference partials with one Richardson refinement.
///
/// Coordinate `k` uses the step `h·(1 + |z_k|)`. First derivatives carry an
/// O(h⁴) truncation error; the second-derivative blocks use the same
/// extrapolation on three-point and four-corner stencils.
pub fn fd_partials<L: ScalarField>(l: &L, v: &TangentSample, h: f64) -> Result<LagrangianJet<f64>> {
    let n = l.dim();
    check_sample_dims(n, v.x.len(), v.y.len())?;
    let z0 = v.coords();
    let dom = l.domain();
    dom.check(&z0)?;
    let steps: Vec<f64> = z0.iter().map(|c| h * (1.0 + c.abs())).collect();
    for (k, (&c, &hk)) in z0.iter().zip(&steps).enumerate() {
        if !(c - hk > dom.lo[k] && c + hk < dom.hi[k]) {
            return Err(Error::StepTooLarge { coord: k, step: hk });
        }
    }
    let f = |z: &[f64]| l.eval(z[0], &z[1..=n], &z[n + 1..]);
    let shifted = |moves: &[(usize, f64)]| {
        let mut z = z0.clone();
        for &(k, d) in moves {
            z[k] += d;
        }
        f(&z)
    };
    let f0 = f(&z0);
    let richardson = |d: &dyn Fn(f64) -> f64| (4.0 * d(0.5) - d(1.0)) / 3.0;

    let first = |k: usize| {
        richardson(&|r| {
            let hk = steps[k] * r;
            (shifted(&[(k, hk)]) - shifted(&[(k, -hk)])) / (2.0 * hk)
        })
    };
    let second = |a: usize, b: usize| {
        if a == b {
            richardson(&|r| {
                let hk = steps[a] * r;
                (shifted(&[(a, hk)]) - 2.0 * f0 + shifted(&[(a, -hk)])) / (hk * hk)
            })
        } else {
            richardson(&|r| {
                let (ha, hb) = (steps[a] * r, steps[b] * r);
                (shifted(&[(a, ha), (b, hb)]) - shifted(&[(a, ha), (b, -hb)])
                    - shifted(&[(a, -ha), (b, hb)])
                    + shifted(&[(a, -ha), (b, -hb)]))
                    / (4.0 * ha * hb)
            })
        }
    };

    let mut jet = LagrangianJet {
        value: f0,
        dt: first(0),
        dx: (0..n).map(|b| first(1 + b)).collect(),
        dy: (0..n).map(|a| first(1 + n + a)).collect(),
        dt_dy: (0..n).map(|a| second(1 + n + a, 0)).collect(),
        dx_dy: Matrix::zeros(n, n),
        dy_dy: Matrix::zeros(n, n),
    };
    for a in 0..n {
        for b in 0..n {
            jet.dx_dy[(a, b)] = second(1 + n + a, 1 + b);
        }
        for b in a..n {
            let v = second(1 + n + a, 1 + n + b);
            jet.dy_dy[(a, b)] = v;
            jet.dy_dy[(b, a)] = v;
        }
    }
    Ok(jet)
}

/// Finite-difference Jacobian and second derivative of a map (oracle).
pub fn fd_map_jet<F: VectorMap>(f: &F, x: &[f64], h: f64) -> Result<MapJet<f64>> {
    let n = f.dim_in();
    let m = f.dim_out();
    f.domain().check(x)?;
    let steps: Vec<f64> = x.iter().map(|c| h * (1.0 + c.abs())).collect();
    for (k, (&c, &hk)) in x.iter().zip(&steps).enumerate() {
        if !(c - hk > f.domain().lo[k] && c + hk < f.domain().hi[k]) {
            return Err(Error::StepTooLarge { coord: k, step: hk });
        }
    }
    let shifted = |moves: &[(usize, f64)]| {
        let mut z = x.to_vec();
        for &(k, d) in moves {
            z[k] += d;
        }
        f.eval(&z)
    };
    let value = f.eval(x);
    let mut jac = Matrix::zeros(m, n);
    let mut second = vec![Matrix::zeros(n, n); m];
    let rich = |d1: Vec<f64>, d2: Vec<f64>| -> Vec<f64> {
        d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
    };
    for a in 0..n {
        let d = |r: f64| -> Vec<f64> {
            let ha = steps[a] * r;
            let p = shifted(&[(a, ha)]);
            let q = shifted(&[(a, -ha)]);
            p.iter().zip(&q).map(|(u, v)| (u - v) / (2.0 * ha)).collect()
        };
        let col = rich(d(1.0), d(0.5));
        for i in 0..m {
            jac[(i, a)] = col[i];
        }
        for b in a..n {
            let d2 = |r: f64| -> Vec<f64> {
                let (ha, hb) = (steps[a] * r, steps[b] * r);
                if a == b {
                    let p = shifted(&[(a, ha)]);
                    let q = shifted(&[(a, -ha)]);
                    (0..m).map(|i| (p[i] - 2.0 * value[i] + q[i]) / (ha * ha)).collect()
                } else {
                    let pp = shifted(&[(a, ha), (b, hb)]);
                    let pm = shifted(&[(a, ha), (b, -hb)]);
                    let mp = shifted(&[(a, -ha), (b, hb)]);
                    let mm = shifted(&[(a, -ha), (b, -hb)]);
                    (0..m).map(|i| (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * ha * hb)).collect()
                }
            };
            let blk = rich(d2(1.0), d2(0.5));
            for i in 0..m {
                second[i][(a, b)] = blk[i];
                second[i][(b, a)] = blk[i];
            }
        }
    }
    Ok(MapJet {
        value,
        jacobian: jac,
        second: Some(second),
    })
}

/// Identity map on an unbounded ℝⁿ.
#[derive(Debug, Clone)]
pub struct IdentityMap {
    domain: DomainBox,
}

impl IdentityMap {
    pub fn new(n: usize) -> Self {
        Self {
            domain: DomainBox::unbounded(n),
        }
    }
}

impl VectorMap for IdentityMap {
    fn dim_in(&self) -> usize {
        self.domain.dim()
    }
    fn dim_out(&self) -> usize {
        self.domain.dim()
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, x: &[R]) -> Vec<R> {
        x.to_vec()
    }
}

/// `x ↦ A·x + b`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    a: Matrix<f64>,
    b: Vec<f64>,
    domain: DomainBox,
}

impl AffineMap {
    pub fn new(a: Matrix<f64>, b: Vec<f64>) -> Self {
        assert_eq!(a.rows(), b.len());
        let domain = DomainBox::unbounded(a.cols());
        Self { a, b, domain }
    }

    pub fn linear(a: Matrix<f64>) -> Self {
        let b = vec![0.0; a.rows()];
        Self::new(a, b)
    }

    pub fn matrix(&self) -> &Matrix<f64> {
        &self.a
    }
}

impl VectorMap for AffineMap {
    fn dim_in(&self) -> usize {
        self.a.cols()
    }
    fn dim_out(&self) -> usize {
        self.a.rows()
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, x: &[R]) -> Vec<R> {
        (0..self.a.rows())
            .map(|i| {
                self.a
                    .row(i)
                    .iter()
                    .zip(x)
                    .fold(R::cst(self.b[i]), |acc, (aij, xj)| acc + *xj * *aij)
            })
            .collect()
    }
}

/// `outer ∘ inner`.
#[derive(Debug, Clone)]
pub struct Composed<F, G> {
    inner: F,
    outer: G,
}

impl<F: VectorMap, G: VectorMap> Composed<F, G> {
    pub fn new(inner: F, outer: G) -> Self {
        assert_eq!(inner.dim_out(), outer.dim_in());
        Self { inner, outer }
    }
}

impl<F: VectorMap, G: VectorMap> VectorMap for Composed<F, G> {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.outer.dim_out()
    }
    fn domain(&self) -> &DomainBox {
        self.inner.domain()
    }
    fn eval<R: Real>(&self, x: &[R]) -> Vec<R> {
        self.outer.eval(&self.inner.eval(x))
    }
}
