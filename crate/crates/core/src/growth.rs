//! The scalar infection-frequency growth map and its fixed points.
//!
//! ```text
//! f(v) = (1 - s_f) v / (s_h v^2 - (s_h + s_f) v + 1)
//! ```
//!
//! `s_f` is the fitness cost of infection and `s_h` the cytoplasmic
//! incompatibility intensity. For `0 < s_f < s_h < 1` the map is bistable with
//! fixed points `0 < A = s_f / s_h < 1`; `A` is the Allee threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DOMAIN_TOL: f64 = 1e-12;

/// Distance of `A` from 1 below which the interior fixed point is flagged as
/// nearly merged with the invaded state.
pub const DEGENERACY_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    s_f: f64,
    s_h: f64,
}

impl GrowthParams {
    pub fn new(s_f: f64, s_h: f64) -> Result<Self> {
        if !(s_f.is_finite() && s_h.is_finite()) {
            return Err(Error::invalid("GrowthParams", "s_f and s_h must be finite"));
        }
        if !(0.0 < s_f && s_f < s_h && s_h < 1.0) {
            return Err(Error::invalid(
                "GrowthParams",
                format!("requires 0 < s_f < s_h < 1, got s_f={s_f}, s_h={s_h}"),
            ));
        }
        // The denominator is a convex quadratic; its minimum over [0, 1] is at
        // the clamped vertex.
        let vertex = ((s_h + s_f) / (2.0 * s_h)).clamp(0.0, 1.0);
        let min_den = denominator(s_f, s_h, vertex);
        if min_den <= 0.0 {
            return Err(Error::invalid(
                "GrowthParams",
                format!("denominator reaches {min_den} on [0, 1]"),
            ));
        }
        Ok(Self { s_f, s_h })
    }

    /// Builds parameters from the CI intensity and the Allee threshold, `s_f = A * s_h`.
    pub fn from_allee(s_h: f64, allee: f64) -> Result<Self> {
        if !(0.0 < allee && allee < 1.0) {
            return Err(Error::invalid(
                "GrowthParams",
                format!("Allee threshold must lie in (0, 1), got {allee}"),
            ));
        }
        if !(0.0 < s_h && s_h < 1.0) {
            return Err(Error::invalid(
                "GrowthParams",
                format!("s_h must lie in (0, 1), got {s_h}"),
            ));
        }
        Self::new(allee * s_h, s_h)
    }

    pub fn s_f(&self) -> f64 {
        self.s_f
    }

    pub fn s_h(&self) -> f64 {
        self.s_h
    }

    pub fn allee_threshold(&self) -> f64 {
        self.s_f / self.s_h
    }

    /// `(0, A, 1)` in ascending order.
    pub fn fixed_points(&self) -> [f64; 3] {
        [0.0, self.allee_threshold(), 1.0]
    }

    /// True when the threshold sits within [`DEGENERACY_GAP`] of 1.
    pub fn is_near_degenerate(&self) -> bool {
        1.0 - self.allee_threshold() < DEGENERACY_GAP
    }

    pub fn evaluate(&self, v: f64) -> Result<f64> {
        let v = check_domain(v)?;
        Ok(self.apply(v))
    }

    pub fn derivative(&self, v: f64) -> Result<f64> {
        let v = check_domain(v)?;
        Ok(self.slope(v))
    }

    /// Unchecked evaluation for the simulation hot path; `v` must already be in `[0, 1]`.
    #[inline]
    pub(crate) fn apply(&self, v: f64) -> f64 {
        let value = (1.0 - self.s_f) * v / denominator(self.s_f, self.s_h, v);
        value.clamp(0.0, 1.0)
    }

    // Quotient rule; the numerator simplifies to (1 - s_f)(1 - s_h v^2).
    #[inline]
    fn slope(&self, v: f64) -> f64 {
        let den = denominator(self.s_f, self.s_h, v);
        (1.0 - self.s_f) * (1.0 - self.s_h * v * v) / (den * den)
    }
}

#[inline]
fn denominator(s_f: f64, s_h: f64, v: f64) -> f64 {
    s_h * v * v - (s_h + s_f) * v + 1.0
}

fn check_domain(v: f64) -> Result<f64> {
    if !v.is_finite() || !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&v) {
        return Err(Error::Domain { value: v });
    }
    Ok(v.clamp(0.0, 1.0))
}
