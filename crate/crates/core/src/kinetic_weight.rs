//! Kinetic distance `α = χ(α̃)` and the cutoff `χ`.

use nalgebra::Vector3;

use crate::error::{KineticError, Result};
use crate::geometry::{ConvexDomain, PhasePoint};

/// Below this value `α` is treated as degenerate.
pub const ALPHA_DEGENERACY: f64 = 1e-14;

/// Smooth non-decreasing cutoff with `χ(s) = s` on `[0, 1/2]` and `χ(s) = 1` on `[2, ∞)`.
///
/// On `(1/2, 2)`, with `t = (s − 1/2)/1.5`, `χ = 1 − ½(1−t)⁵(1+2t)`, so
/// `χ′ = (1−t)⁴(1+4t) ∈ [0, 1]` and `χ″` vanishes at both breakpoints.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChiCutoff;

impl ChiCutoff {
    pub const LOWER: f64 = 0.5;
    pub const UPPER: f64 = 2.0;

    pub fn value(&self, s: f64) -> f64 {
        if s <= Self::LOWER {
            s
        } else if s >= Self::UPPER {
            1.0
        } else {
            let t = (s - Self::LOWER) / (Self::UPPER - Self::LOWER);
            1.0 - 0.5 * (1.0 - t).powi(5) * (1.0 + 2.0 * t)
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if s <= Self::LOWER {
            1.0
        } else if s >= Self::UPPER {
            0.0
        } else {
            let t = (s - Self::LOWER) / (Self::UPPER - Self::LOWER);
            (1.0 - t).powi(4) * (1.0 + 4.0 * t)
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        if s <= Self::LOWER || s >= Self::UPPER {
            0.0
        } else {
            let t = (s - Self::LOWER) / (Self::UPPER - Self::LOWER);
            -20.0 * t * (1.0 - t).powi(3) / (Self::UPPER - Self::LOWER)
        }
    }
}

/// `α̃` and `α` over a convex domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticWeight {
    pub domain: ConvexDomain,
    pub chi: ChiCutoff,
}

impl KineticWeight {
    pub fn new(domain: ConvexDomain) -> Self {
        Self { domain, chi: ChiCutoff }
    }

    /// `α̃ = √(|v·∇ξ|² − 2ξ (v·∇²ξ·v))`.
    pub fn alpha_tilde(&self, x: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64> {
        let d = &self.domain;
        let vg = v.dot(&d.grad_xi(x));
        let radicand = vg * vg - 2.0 * d.xi(x) * v.dot(&(d.hess_xi(x) * v));
        if radicand < -1e-12 {
            return Err(KineticError::NegativeRadicand { value: radicand });
        }
        Ok(radicand.max(0.0).sqrt())
    }

    /// `α = χ(α̃)`.
    pub fn alpha(&self, x: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64> {
        Ok(self.chi.value(self.alpha_tilde(x, v)?))
    }

    /// `α(x − s v, v) / α(x, v)`.
    pub fn velocity_lemma_ratio(&self, x: &Vector3<f64>, v: &Vector3<f64>, s: f64) -> Result<f64> {
        let a0 = self.alpha(x, v)?;
        if a0 < ALPHA_DEGENERACY {
            return Err(KineticError::DegenerateAlpha { alpha: a0 });
        }
        Ok(self.alpha(&(x - s * v), v)? / a0)
    }

    /// Same ratio for `α̃`.
    pub fn velocity_lemma_ratio_tilde(&self, x: &Vector3<f64>, v: &Vector3<f64>, s: f64) -> Result<f64> {
        let a0 = self.alpha_tilde(x, v)?;
        if a0 < ALPHA_DEGENERACY {
            return Err(KineticError::DegenerateAlpha { alpha: a0 });
        }
        Ok(self.alpha_tilde(&(x - s * v), v)? / a0)
    }

    /// `|n(x_b(x,v))·v| / α̃(x, v)`.
    pub fn boundary_equivalence_ratio(&self, x: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64> {
        let a = self.alpha_tilde(x, v)?;
        if a < ALPHA_DEGENERACY {
            return Err(KineticError::DegenerateAlpha { alpha: a });
        }
        let e = self.domain.backward_exit(&PhasePoint::new(*x, *v))?;
        Ok(e.normal_b.dot(v).abs() / a)
    }

    /// Minimal `C` with `e^{−C|v|s} ≤ ratio ≤ e^{C|v|s}` for one sample.
    pub fn velocity_lemma_exponent(ratio: f64, speed: f64, s: f64) -> f64 {
        if s * speed == 0.0 {
            0.0
        } else {
            ratio.ln().abs() / (speed * s)
        }
    }

    /// Weight `w_θ(v) = e^{θ|v|²}`.
    pub fn velocity_weight(theta: f64, v: &Vector3<f64>) -> f64 {
        (theta * v.norm_squared()).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chi_breakpoints() {
        let chi = ChiCutoff;
        assert_eq!(chi.value(0.3), 0.3);
        assert_eq!(chi.value(5.0), 1.0);
        let mid = chi.value(1.0);
        assert!(mid > 0.5 && mid < 1.0);
        assert_relative_eq!(chi.value(0.5 + 1e-12), 0.5, epsilon = 1e-11);
        assert_relative_eq!(chi.value(2.0 - 1e-12), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn chi_derivatives_match_differences() {
        let chi = ChiCutoff;
        for i in 1..100 {
            let s = 0.5 + 1.5 * i as f64 / 100.0;
            let h = 1e-6;
            let fd = (chi.value(s + h) - chi.value(s - h)) / (2.0 * h);
            assert_relative_eq!(chi.derivative(s), fd, epsilon = 1e-8);
            let fd2 = (chi.derivative(s + h) - chi.derivative(s - h)) / (2.0 * h);
            assert_relative_eq!(chi.second_derivative(s), fd2, epsilon = 1e-6);
        }
    }

    #[test]
    fn ball_alpha_tilde_closed_form() {
        let w = KineticWeight::new(ConvexDomain::unit_ball());
        assert_relative_eq!(w.alpha_tilde(&Vector3::zeros(), &Vector3::x()).unwrap(), 2.0);
        assert_eq!(w.alpha_tilde(&Vector3::x(), &Vector3::y()).unwrap(), 0.0);
        assert_eq!(w.alpha_tilde(&Vector3::new(0.3, 0.2, 0.1), &Vector3::zeros()).unwrap(), 0.0);
    }

    #[test]
    fn ball_center_equivalence_ratio() {
        let w = KineticWeight::new(ConvexDomain::unit_ball());
        let v = Vector3::new(0.3, -0.4, 0.5).normalize();
        assert_relative_eq!(w.boundary_equivalence_ratio(&Vector3::zeros(), &v).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn velocity_lemma_trivial_cases() {
        let w = KineticWeight::new(ConvexDomain::unit_ball());
        assert_eq!(w.velocity_lemma_ratio(&Vector3::new(0.1, 0.2, 0.0), &Vector3::y(), 0.0).unwrap(), 1.0);
        assert_relative_eq!(w.velocity_lemma_ratio(&Vector3::zeros(), &Vector3::x(), 0.5).unwrap(), 1.0, epsilon = 1e-14);
        assert!(matches!(
            w.velocity_lemma_ratio(&Vector3::x(), &Vector3::y(), 0.0),
            Err(KineticError::DegenerateAlpha { .. })
        ));
    }
}
