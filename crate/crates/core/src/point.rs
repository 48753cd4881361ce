//! Chart-level points of ℝ×TM, tangent vectors to it, and raw/trivialized
//! second-order jets.

use serde::{Deserialize, Serialize};

/// A point `(t, x, y)` of ℝ×TM in chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TangentSample {
    pub fn new(t: f64, x: Vec<f64>, y: Vec<f64>) -> Self {
        debug_assert_eq!(x.len(), y.len());
        Self { t, x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Flattened `(t, x, y)` coordinates.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(1 + 2 * self.dim());
        c.push(self.t);
        c.extend_from_slice(&self.x);
        c.extend_from_slice(&self.y);
        c
    }
}

/// A tangent vector `(s, z, w)` at a point of ℝ×TM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub s: f64,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

impl TangentVector {
    pub fn new(s: f64, z: Vec<f64>, w: Vec<f64>) -> Self {
        Self { s, z, w }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(0.0, vec![0.0; n], vec![0.0; n])
    }
}

/// A raw second-order jet `(t, x, y, z)`: position, first and second chart
/// derivatives of a curve through `x` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl Jet2 {
    pub fn new(t: f64, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Self {
        Self { t, x, y, z }
    }

    pub fn base(&self) -> TangentSample {
        TangentSample::new(self.t, self.x.clone(), self.y.clone())
    }
}

/// A jet expressed in a vector-bundle trivialization: `w = z + offset(t, x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trivialized {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl Trivialized {
    pub fn new(t: f64, x: Vec<f64>, y: Vec<f64>, w: Vec<f64>) -> Self {
        Self { t, x, y, w }
    }
}
