//! Steady problem `v·∇f + Lf = h` with the diffuse wall and remainder `r`,
//! solved by Anderson-accelerated fixed-point iteration of the Duhamel map.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::boundary::WallTemperature;
use crate::collision::{apply_gamma, GammaRule, KernelParams};
use crate::error::{KineticError, Result};
use crate::quadrature::VelocityQuadrature;
use crate::reduce::par_map;
use crate::solver::duhamel::{Duhamel, WallModel};
use crate::solver::grid::PhaseGrid;
use crate::solver::operator::CollisionMatrix;

/// Iteration controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions {
    pub tol_fp: f64,
    pub max_iter: usize,
    /// Gauss–Legendre nodes along each characteristic.
    pub n_s: usize,
    /// Anderson memory; `0` gives plain Picard iteration.
    pub anderson_depth: usize,
    pub include_gamma: bool,
    /// Outer updates of `h = Γ(f_s, f_s)` when `include_gamma` is set.
    pub gamma_updates: usize,
    /// Reduced velocity grid `(radial, polar, azimuth)` for `Γ`.
    pub gamma_grid: (usize, usize, usize),
    /// Scattering-direction grid `(polar, azimuth)` for `Γ`.
    pub gamma_omega: (usize, usize),
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol_fp: 1e-7,
            max_iter: 400,
            n_s: 8,
            anderson_depth: 10,
            include_gamma: false,
            gamma_updates: 2,
            gamma_grid: (6, 4, 6),
            gamma_omega: (3, 6),
        }
    }
}

/// Converged steady field with its iteration report.
#[derive(Debug, Clone)]
pub struct SteadySolution {
    pub values: Vec<f64>,
    pub source: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Collisions dropped by the velocity cutoff while evaluating `Γ`.
    pub gamma_dropped: usize,
}

/// `w(v) = e^{θ|v|²}` on the velocity nodes.
pub fn node_weights(q: &VelocityQuadrature, params: &KernelParams) -> Vec<f64> {
    q.nodes.iter().map(|v| params.w(v)).collect()
}

/// `max |w f|` over all nodes.
pub fn weighted_sup(values: &[f64], weight: &[f64]) -> f64 {
    let nv = weight.len();
    values.iter().enumerate().map(|(k, f)| (weight[k % nv] * f).abs()).fold(0.0, f64::max)
}

/// The steady Duhamel map and its fixed-point solver.
pub struct SteadyProblem<'a> {
    pub grid: &'a PhaseGrid,
    pub kmat: &'a CollisionMatrix,
    pub wall: WallModel,
    pub weight: Vec<f64>,
    pub options: SteadyOptions,
}

impl<'a> SteadyProblem<'a> {
    pub fn new(
        grid: &'a PhaseGrid,
        kmat: &'a CollisionMatrix,
        temperature: WallTemperature,
        params: &KernelParams,
        options: SteadyOptions,
    ) -> Self {
        let wall = WallModel::new(grid, temperature, true);
        let weight = node_weights(&grid.velocity, params);
        Self { grid, kmat, wall, weight, options }
    }

    /// Source `Kf + h`.
    pub fn source(&self, f: &[f64], h: Option<&[f64]>) -> Vec<f64> {
        let mut s = self.kmat.apply(f);
        if let Some(h) = h {
            s.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        }
        s
    }

    /// Duhamel representation built from the iterate `f`.
    pub fn representation(&self, f: &[f64], h: Option<&[f64]>) -> Duhamel<'_> {
        Duhamel::steady(self.grid, &self.wall, self.wall.state(self.grid, f), self.source(f, h), self.options.n_s)
    }

    /// One application of the map, followed by the zero-mass projection.
    pub fn apply(&self, f: &[f64], h: Option<&[f64]>) -> Vec<f64> {
        let mut g = self.representation(f, h).sweep();
        self.grid.project_mass(&mut g, 0.0);
        g
    }

    pub fn solve(&self) -> Result<SteadySolution> {
        let mut h: Option<Vec<f64>> = None;
        let mut sol = self.solve_linear(None)?;
        if self.options.include_gamma {
            for _ in 0..self.options.gamma_updates {
                let (hv, dropped) = self.gamma_source(&sol.values);
                h = Some(hv);
                let mut next = self.solve_linear(h.as_deref())?;
                next.gamma_dropped = dropped;
                sol = next;
            }
        }
        sol.source = self.source(&sol.values, h.as_deref());
        Ok(sol)
    }

    /// `Γ(f, f)` at every node on the reduced velocity grid.
    pub fn gamma_source(&self, f: &[f64]) -> (Vec<f64>, usize) {
        let (nr, np, na) = self.options.gamma_grid;
        let (op, oa) = self.options.gamma_omega;
        let q = &self.grid.velocity;
        let rule = GammaRule::new(VelocityQuadrature::new(nr, np, na, q.v_max), op, oa);
        let nv = q.len();
        let rows = par_map(self.grid.n_x(), |ix| {
            let row = &f[ix * nv..(ix + 1) * nv];
            let fx = |u: &nalgebra::Vector3<f64>| q.interpolate(row, u).unwrap_or(0.0);
            let mut dropped = 0;
            let vals: Vec<f64> = q
                .nodes
                .iter()
                .map(|v| {
                    let g = apply_gamma(fx, fx, v, &rule);
                    dropped += g.dropped;
                    g.value
                })
                .collect();
            (vals, dropped)
        });
        let dropped = rows.iter().map(|r| r.1).sum();
        (rows.into_iter().flat_map(|r| r.0).collect(), dropped)
    }

    fn solve_linear(&self, h: Option<&[f64]>) -> Result<SteadySolution> {
        let n = self.grid.n_x() * self.grid.n_v();
        let m = self.options.anderson_depth;
        let mut x = vec![0.0; n];
        let mut history = Vec::new();
        let mut d_f: Vec<Vec<f64>> = Vec::new();
        let mut d_g: Vec<Vec<f64>> = Vec::new();
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut best = f64::INFINITY;
        for it in 0..self.options.max_iter {
            let g = self.apply(&x, h);
            let r: Vec<f64> = g.iter().zip(&x).map(|(a, b)| a - b).collect();
            let res = weighted_sup(&r, &self.weight);
            history.push(res);
            if !res.is_finite() {
                return Err(KineticError::IterationDiverged { iterations: it + 1, residual: res });
            }
            if res < self.options.tol_fp {
                return Ok(SteadySolution {
                    values: x,
                    source: Vec::new(),
                    iterations: it + 1,
                    residual: res,
                    residual_history: history,
                    gamma_dropped: 0,
                });
            }
            if res > 10.0 * best {
                d_f.clear();
                d_g.clear();
            }
            best = best.min(res);
            if let Some((g0, r0)) = &prev {
                d_f.push(r.iter().zip(r0).map(|(a, b)| a - b).collect());
                d_g.push(g.iter().zip(g0).map(|(a, b)| a - b).collect());
                if d_f.len() > m {
                    d_f.remove(0);
                    d_g.remove(0);
                }
            }
            let next = if m > 0 && !d_f.is_empty() {
                let k = d_f.len();
                let a = DMatrix::from_fn(n, k, |i, j| d_f[j][i]);
                let gamma = a.svd(true, true).solve(&DVector::from_column_slice(&r), 1e-12).ok();
                match gamma {
                    Some(gamma) => {
                        let mut y = g.clone();
                        for (j, dg) in d_g.iter().enumerate() {
                            y.iter_mut().zip(dg).for_each(|(a, b)| *a -= gamma[j] * b);
                        }
                        y
                    }
                    None => g.clone(),
                }
            } else {
                g.clone()
            };
            prev = Some((g, r));
            x = next;
        }
        Err(KineticError::IterationDiverged {
            iterations: self.options.max_iter,
            residual: history.last().copied().unwrap_or(f64::NAN),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::SingularRule;
    use crate::geometry::ConvexDomain;
    use crate::solver::grid::GridSpec;

    fn small() -> (PhaseGrid, CollisionMatrix) {
        let spec = GridSpec { shells: vec![0.5, 0.85], n_cos: 4, n_phi: 6, v_radial: 6, v_polar: 4, v_azimuth: 6, v_max: 6.0 };
        let g = PhaseGrid::new(ConvexDomain::unit_ball(), &spec).unwrap();
        let k = CollisionMatrix::new(&g.velocity, &g.nu, &KernelParams::default(), &SingularRule::default());
        (g, k)
    }

    #[test]
    fn isothermal_wall_converges_at_first_iterate() {
        let (g, k) = small();
        let p = SteadyProblem::new(&g, &k, WallTemperature::isothermal(), &KernelParams::default(), SteadyOptions::default());
        let s = p.solve().unwrap();
        assert_eq!(s.iterations, 1);
        assert!(s.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn converged_solution_is_a_fixed_point() {
        let (g, k) = small();
        let opts = SteadyOptions::default();
        let p = SteadyProblem::new(&g, &k, WallTemperature::linear_x3(0.01), &KernelParams::default(), opts.clone());
        let s = p.solve().unwrap();
        assert!(s.iterations > 1);
        let again = p.apply(&s.values, None);
        let diff: Vec<f64> = again.iter().zip(&s.values).map(|(a, b)| a - b).collect();
        assert!(weighted_sup(&diff, &p.weight) <= 2.0 * opts.tol_fp);
        assert!(g.mass(&s.values).abs() < 1e-12);
    }
}
