//! Seeded sampling of probe points for the law checkers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffkernel::DomainBox;
use crate::point::{TangentSample, TangentVector};

/// Half-width used for unbounded coordinates.
pub const UNBOUNDED_HALF_WIDTH: f64 = 1.0;

/// Deterministic sampler; the same seed always yields the same probes.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    pub fn vector(&mut self, n: usize, half_width: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(-half_width, half_width)).collect()
    }

    /// A point in the interior of `domain`, keeping `shrink` of each side's
    /// width away from the faces. Unbounded sides are clipped to
    /// `±UNBOUNDED_HALF_WIDTH`.
    pub fn point_in(&mut self, domain: &DomainBox, shrink: f64) -> Vec<f64> {
        domain
            .lo
            .iter()
            .zip(&domain.hi)
            .map(|(&lo, &hi)| {
                let (lo, hi) = clip(lo, hi);
                let pad = (hi - lo) * shrink;
                self.uniform(lo + pad, hi - pad)
            })
            .collect()
    }

    /// `count` samples `(t, x, y)` with `x` inside `domain`, `t` in
    /// `[t_lo, t_hi)` and `y` in the cube of half-width `y_half_width`.
    pub fn tangent_samples(
        &mut self,
        domain: &DomainBox,
        count: usize,
        (t_lo, t_hi): (f64, f64),
        y_half_width: f64,
    ) -> Vec<TangentSample> {
        (0..count)
            .map(|_| {
                let t = self.uniform(t_lo, t_hi);
                let x = self.point_in(domain, 0.05);
                let y = self.vector(domain.dim(), y_half_width);
                TangentSample::new(t, x, y)
            })
            .collect()
    }

    pub fn tangent_vector(&mut self, n: usize, half_width: f64) -> TangentVector {
        let s = self.uniform(-half_width, half_width);
        TangentVector::new(s, self.vector(n, half_width), self.vector(n, half_width))
    }
}

fn clip(lo: f64, hi: f64) -> (f64, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo + 2.0 * UNBOUNDED_HALF_WIDTH),
        (false, true) => (hi - 2.0 * UNBOUNDED_HALF_WIDTH, hi),
        (false, false) => (-UNBOUNDED_HALF_WIDTH, UNBOUNDED_HALF_WIDTH),
    }
}
