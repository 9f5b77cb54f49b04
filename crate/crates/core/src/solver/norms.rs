//! Weighted sup, weighted `C¹` and `W^{1,p}` norms, and decay-rate fitting.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::collision::KernelParams;
use crate::error::{KineticError, Result};
use crate::kinetic_weight::{KineticWeight, ALPHA_DEGENERACY};
use crate::quadrature::VelocityQuadrature;
use crate::reduce::par_map;
use crate::solver::duhamel::Duhamel;
use crate::solver::grid::{MeasureGrid, PhaseGrid};

/// Pointwise evaluation of a field at `(x, v_j)` for velocity node `j`.
pub trait FieldEvaluator: Sync {
    fn value(&self, x: &Vector3<f64>, vi: usize) -> f64;
}

impl<F: Fn(&Vector3<f64>, usize) -> f64 + Sync> FieldEvaluator for F {
    fn value(&self, x: &Vector3<f64>, vi: usize) -> f64 {
        self(x, vi)
    }
}

impl FieldEvaluator for Duhamel<'_> {
    fn value(&self, x: &Vector3<f64>, vi: usize) -> f64 {
        self.node_value(x, vi)
    }
}

/// Trilinear interpolant of nodal values.
pub struct Interpolant<'a> {
    pub grid: &'a PhaseGrid,
    pub values: &'a [f64],
}

impl FieldEvaluator for Interpolant<'_> {
    fn value(&self, x: &Vector3<f64>, vi: usize) -> f64 {
        self.grid.stencil(x).apply(self.values, self.grid.n_v(), vi)
    }
}

/// Gradient norms of one field on a measurement grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientNorms {
    /// `sup w_θ̃ α |∇_x f|`.
    pub weighted_c1: f64,
    /// `(p, ‖∇_x f‖_p)`.
    pub w1p: Vec<(f64, f64)>,
    /// `(p, Σ V w_θ̃^{−p} α^{−p})` on the same quadrature.
    pub weight_integral: Vec<(f64, f64)>,
    /// Fraction of samples skipped because `α` is degenerate.
    pub excluded_fraction: f64,
}

impl GradientNorms {
    pub fn w1p_at(&self, p: f64) -> Option<f64> {
        self.w1p.iter().find(|(q, _)| *q == p).map(|x| x.1)
    }

    /// `‖∇f‖_p ≤ ‖w_θ̃ α∇f‖_∞ · (∬ w_θ̃^{−p} α^{−p})^{1/p}` for every tabulated `p`.
    pub fn chain_bound_holds(&self) -> bool {
        self.w1p.iter().zip(&self.weight_integral).all(|((p, n), (_, j))| *n <= self.weighted_c1 * j.powf(1.0 / p) * (1.0 + 1e-12))
    }
}

/// Central-difference gradient with step `min(h_max, dist/4)`.
pub fn gradient<E: FieldEvaluator + ?Sized>(eval: &E, grid: &PhaseGrid, x: &Vector3<f64>, vi: usize, h_max: f64) -> Vector3<f64> {
    let h = h_max.min(grid.wall_distance(x) / 4.0);
    let mut g = Vector3::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = h;
        g[k] = (eval.value(&(x + e), vi) - eval.value(&(x - e), vi)) / (2.0 * h);
    }
    g
}

/// Default finite-difference step cap.
pub const GRADIENT_STEP: f64 = 1e-3;

/// All gradient norms of `eval` on the measurement grid and solver velocity nodes.
pub fn gradient_norms<E: FieldEvaluator + ?Sized>(
    eval: &E,
    grid: &PhaseGrid,
    measure: &MeasureGrid,
    params: &KernelParams,
    ps: &[f64],
) -> GradientNorms {
    let q: &VelocityQuadrature = &grid.velocity;
    let weight = KineticWeight::new(grid.domain);
    let wt: Vec<f64> = q.nodes.iter().map(|v| params.w_tilde(v)).collect();
    let rows = par_map(measure.points.len(), |i| {
        let x = measure.points[i];
        let mut sup: f64 = 0.0;
        let mut sums = vec![0.0; ps.len()];
        let mut jsum = vec![0.0; ps.len()];
        let mut excluded = 0usize;
        for (vi, v) in q.nodes.iter().enumerate() {
            let grad = gradient(eval, grid, &x, vi, GRADIENT_STEP).norm();
            let vol = measure.volumes[i] * q.weights[vi];
            for (k, p) in ps.iter().enumerate() {
                sums[k] += vol * grad.powf(*p);
            }
            match weight.alpha(&x, v) {
                Ok(a) if a >= ALPHA_DEGENERACY => {
                    sup = sup.max(wt[vi] * a * grad);
                    for (k, p) in ps.iter().enumerate() {
                        jsum[k] += vol * (wt[vi] * a).powf(-p);
                    }
                }
                _ => excluded += 1,
            }
        }
        (sup, sums, jsum, excluded)
    });
    let mut weighted_c1: f64 = 0.0;
    let mut sums = vec![0.0; ps.len()];
    let mut jsum = vec![0.0; ps.len()];
    let mut excluded = 0;
    for (s, a, j, e) in rows {
        weighted_c1 = weighted_c1.max(s);
        for k in 0..ps.len() {
            sums[k] += a[k];
            jsum[k] += j[k];
        }
        excluded += e;
    }
    GradientNorms {
        weighted_c1,
        w1p: ps.iter().zip(&sums).map(|(p, s)| (*p, s.powf(1.0 / p))).collect(),
        weight_integral: ps.iter().copied().zip(jsum).collect(),
        excluded_fraction: excluded as f64 / (measure.points.len() * q.len()).max(1) as f64,
    }
}

/// `‖w_θ̃ α ∇_x f‖_∞` over the measurement grid.
pub fn weighted_gradient_norm<E: FieldEvaluator + ?Sized>(eval: &E, grid: &PhaseGrid, measure: &MeasureGrid, params: &KernelParams) -> f64 {
    gradient_norms(eval, grid, measure, params, &[]).weighted_c1
}

/// `(∬ |∇_x f|^p dx dv)^{1/p}` over the measurement grid.
pub fn w1p_norm<E: FieldEvaluator + ?Sized>(eval: &E, grid: &PhaseGrid, measure: &MeasureGrid, params: &KernelParams, p: f64) -> f64 {
    gradient_norms(eval, grid, measure, params, &[p]).w1p[0].1
}

/// `max |w f|` over boundary nodes.
pub fn boundary_weighted_sup(grid: &PhaseGrid, values: &[f64], weight: &[f64]) -> f64 {
    let nv = grid.n_v();
    values[grid.first_boundary * nv..]
        .iter()
        .enumerate()
        .map(|(k, f)| (weight[k % nv] * f).abs())
        .fold(0.0, f64::max)
}

/// Least-squares exponential rate of a norm series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `λ` in `norm ≈ C e^{−λ t}`.
    pub lambda: f64,
    /// Standard error of `λ`.
    pub lambda_stderr: f64,
    pub r2: f64,
    pub n_used: usize,
}

/// Fits `log y = a − λ t` on samples with `t ∈ [t_lo, t_hi]`.
///
/// A sample equal to zero ends the fit window (the prefix is used); negative
/// samples, or fewer than two usable samples, are errors.
pub fn fit_decay_rate(t: &[f64], y: &[f64], t_lo: f64, t_hi: f64) -> Result<DecayFit> {
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for (i, (&ti, &yi)) in t.iter().zip(y).enumerate() {
        if ti < t_lo || ti > t_hi {
            continue;
        }
        if yi < 0.0 || !yi.is_finite() {
            return Err(KineticError::NonPositiveNorm { index: i });
        }
        if yi == 0.0 {
            if xs.len() < 2 {
                return Err(KineticError::NonPositiveNorm { index: i });
            }
            break;
        }
        xs.push(ti);
        ls.push(yi.ln());
    }
    let n = xs.len();
    if n < 2 {
        return Err(KineticError::InvalidParameter("fit window holds fewer than two samples".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ls.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ls.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs.iter().zip(&ls).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(DecayFit { lambda: -slope, lambda_stderr: stderr, r2, n_used: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexDomain;
    use crate::solver::grid::{GridSpec, MeasureSpec};
    use approx::assert_relative_eq;

    #[test]
    fn exact_exponential_rate() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (-0.3 * t).exp()).collect();
        let fit = fit_decay_rate(&t, &y, 1.0, 8.0).unwrap();
        assert!((fit.lambda - 0.3).abs() < 1e-6);
        assert!(fit.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn modulated_exponential_rate() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| (-0.3 * t).exp() * (1.0 + 0.01 * t.sin())).collect();
        let fit = fit_decay_rate(&t, &y, 1.0, 20.0).unwrap();
        assert!((fit.lambda - 0.3).abs() < 0.01);
    }

    #[test]
    fn zero_sample_truncates_or_fails() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let fit = fit_decay_rate(&t, &[1.0, 0.5, 0.25, 0.0], 0.0, 3.0).unwrap();
        assert_eq!(fit.n_used, 3);
        assert!(matches!(fit_decay_rate(&t, &[1.0, 0.0, 0.2, 0.1], 0.0, 3.0), Err(KineticError::NonPositiveNorm { index: 1 })));
    }

    #[test]
    fn analytic_field_gradient_norm() {
        let d = ConvexDomain::unit_ball();
        let g = PhaseGrid::new(d, &GridSpec::default()).unwrap();
        let m = MeasureGrid::new(&d, &MeasureSpec::default());
        let p = KernelParams::default();
        let q = g.velocity.clone();
        let f = |x: &Vector3<f64>, vi: usize| d.xi(x) * (-q.nodes[vi].norm_squared()).exp();
        let kw = KineticWeight::new(d);
        let mut exact: f64 = 0.0;
        for x in &m.points {
            for v in &q.nodes {
                let grad = d.grad_xi(x).norm() * (-v.norm_squared()).exp();
                exact = exact.max(p.w_tilde(v) * kw.alpha(x, v).unwrap() * grad);
            }
        }
        assert_relative_eq!(weighted_gradient_norm(&f, &g, &m, &p), exact, max_relative = 1e-3);
    }

    #[test]
    fn constant_field_has_zero_gradient_norms() {
        let d = ConvexDomain::unit_ball();
        let g = PhaseGrid::new(d, &GridSpec::default()).unwrap();
        let m = MeasureGrid::new(&d, &MeasureSpec::default());
        let f = |_: &Vector3<f64>, vi: usize| vi as f64;
        let n = gradient_norms(&f, &g, &m, &KernelParams::default(), &[2.0, 2.5]);
        assert_eq!(n.weighted_c1, 0.0);
        assert!(n.w1p.iter().all(|x| x.1 == 0.0));
        assert!(n.chain_bound_holds());
    }
}
