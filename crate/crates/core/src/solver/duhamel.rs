//! Wall coupling and the characteristic (Duhamel) representation.
//!
//! Along the backward ray from `(x, v)`:
//!
//! `f(x,v) = e^{−ν t_*} f_start + ∫₀^{t_*} e^{−ν s} S(x − s v, v) ds`
//!
//! with `t_* = t_b` for the steady problem and `t_* = min(Δt, t_b)` for one
//! time step. The start value is the wall value at `x_b` when the ray leaves
//! `Ω` first, otherwise the previous time level at `x − Δt v`. The integral
//! is taken in `σ = 1 − e^{−ν s}` by Gauss–Legendre.

use nalgebra::Vector3;

use crate::boundary::WallTemperature;
use crate::collision::{maxwellian, mu, nu_exact, sqrt_mu};
use crate::error::{KineticError, Result};
use crate::geometry::PhasePoint;
use crate::quadrature::GaussRule;
use crate::solver::grid::{PhaseGrid, Stencil};

/// Discrete diffuse-reflection data on the boundary nodes.
///
/// The incoming value at a wall point is
/// `M_W/(Z_W √μ) · Φ + [M_W/Z_W − μ/Z_μ]/√μ`, where `Φ` is the discrete
/// outgoing flux `Σ_{n·v>0} w f √μ (n·v)` and `Z_W`, `Z_μ` are the discrete
/// incoming fluxes of `M_W` and `μ`. The bracket is the remainder `r`; it
/// vanishes identically for an isothermal wall, and the incoming mass flux
/// always equals `Φ`.
#[derive(Debug, Clone)]
pub struct WallModel {
    pub temperature: WallTemperature,
    pub with_remainder: bool,
    pub z_wall: Vec<f64>,
    pub z_mu: Vec<f64>,
}

/// Outgoing flux per boundary node, divided by `Z_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WallState {
    pub scaled_flux: Vec<f64>,
}

impl WallModel {
    pub fn new(grid: &PhaseGrid, temperature: WallTemperature, with_remainder: bool) -> Self {
        let q = &grid.velocity;
        let mut z_wall = Vec::with_capacity(grid.n_boundary());
        let mut z_mu = Vec::with_capacity(grid.n_boundary());
        for (b, n) in grid.normals.iter().enumerate() {
            let t = temperature.temperature(&grid.points[grid.first_boundary + b]);
            let (mut zw, mut zm) = (0.0, 0.0);
            for (v, w) in q.nodes.iter().zip(&q.weights) {
                let nv = n.dot(v);
                if nv < 0.0 {
                    zw += w * maxwellian(v, t) * -nv;
                    zm += w * mu(v) * -nv;
                }
            }
            z_wall.push(zw);
            z_mu.push(zm);
        }
        Self { temperature, with_remainder, z_wall, z_mu }
    }

    /// Wall state of a field laid out as `x · n_v + v`.
    pub fn state(&self, grid: &PhaseGrid, values: &[f64]) -> WallState {
        let nv = grid.n_v();
        let q = &grid.velocity;
        let scaled_flux = grid
            .normals
            .iter()
            .enumerate()
            .map(|(b, n)| {
                let row = &values[(grid.first_boundary + b) * nv..][..nv];
                let mut phi = 0.0;
                for (j, v) in q.nodes.iter().enumerate() {
                    let nvj = n.dot(v);
                    if nvj > 0.0 {
                        phi += q.weights[j] * row[j] * grid.sqrt_mu[j] * nvj;
                    }
                }
                phi / self.z_wall[b]
            })
            .collect();
        WallState { scaled_flux }
    }

    /// Incoming value at a wall point `x_b`.
    pub fn incoming(&self, grid: &PhaseGrid, state: &WallState, x_b: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        let st = grid.boundary_stencil(x_b);
        let (mut a, mut izw, mut izm) = (0.0, 0.0, 0.0);
        for &(b, w) in &st {
            a += w * state.scaled_flux[b];
            izw += w / self.z_wall[b];
            izm += w / self.z_mu[b];
        }
        let m = maxwellian(v, self.temperature.temperature(x_b));
        let s = sqrt_mu(v);
        let mut val = m / s * a;
        if self.with_remainder {
            val += (m * izw - mu(v) * izm) / s;
        }
        val
    }

    /// Overwrites the incoming half of every boundary node by the reflection
    /// of its own outgoing half; returns the largest weighted change.
    pub fn enforce_compatibility(&self, grid: &PhaseGrid, values: &mut [f64], weight: &[f64]) -> f64 {
        let nv = grid.n_v();
        let state = self.state(grid, values);
        let mut change: f64 = 0.0;
        for (b, n) in grid.normals.iter().enumerate() {
            let ix = grid.first_boundary + b;
            let x = grid.points[ix];
            for (j, v) in grid.velocity.nodes.iter().enumerate() {
                if n.dot(v) < 0.0 {
                    let new = self.incoming(grid, &state, &x, v);
                    let slot = &mut values[ix * nv + j];
                    change = change.max(weight[j] * (new - *slot).abs());
                    *slot = new;
                }
            }
        }
        change
    }
}

/// `∫₀^τ e^{−ν s} S(x − s v, s) ds` by Gauss–Legendre in `σ = 1 − e^{−ν s/3}`.
///
/// The integrand becomes `3(1−σ)² S/ν`, which stays smooth as `σ → 1`, so
/// long rays with `ν τ ≫ 1` keep spectral accuracy.
pub fn ray_integral<S>(gauss: &GaussRule, x: &Vector3<f64>, v: &Vector3<f64>, nu: f64, tau: f64, source: S) -> f64
where
    S: Fn(&Vector3<f64>, f64) -> f64,
{
    let beta = nu / 3.0;
    let sigma_max = -(-beta * tau).exp_m1();
    let mut total = 0.0;
    for (sigma, w) in gauss.on(0.0, sigma_max) {
        let s = -(-sigma).ln_1p() / beta;
        let r = 1.0 - sigma;
        total += w * r * r / beta * source(&(x - s * v), s);
    }
    total
}

/// Inputs of one characteristic evaluation.
#[derive(Debug, Clone)]
pub struct Duhamel<'a> {
    pub grid: &'a PhaseGrid,
    pub wall: &'a WallModel,
    pub state: WallState,
    /// `Kf + h` at the new time level (or the steady source).
    pub source: Vec<f64>,
    /// Source at the old time level; the source is linear in time across the step.
    pub source_old: Option<Vec<f64>>,
    /// `f` at the old time level.
    pub previous: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub gauss: GaussRule,
}

impl<'a> Duhamel<'a> {
    /// Steady representation with the given source and wall state.
    pub fn steady(grid: &'a PhaseGrid, wall: &'a WallModel, state: WallState, source: Vec<f64>, n_s: usize) -> Self {
        Self { grid, wall, state, source, source_old: None, previous: None, dt: None, gauss: GaussRule::new(n_s) }
    }

    fn evaluate<P>(&self, x: &Vector3<f64>, v: &Vector3<f64>, nu: f64, pick: P) -> Result<(f64, bool)>
    where
        P: Fn(&[f64], &Stencil) -> f64,
    {
        let exit = self.grid.domain.backward_exit(&PhasePoint::new(*x, *v))?;
        let (tau, start) = match (self.dt, &self.previous) {
            (Some(dt), Some(prev)) if exit.t_b > dt => {
                let y = x - dt * v;
                (dt, pick(prev, &self.grid.stencil(&y)))
            }
            _ => (exit.t_b, self.wall.incoming(self.grid, &self.state, &exit.x_b, v)),
        };
        let integral = ray_integral(&self.gauss, x, v, nu, tau, |y, s| {
            let st = self.grid.stencil(y);
            let src = pick(&self.source, &st);
            match (&self.source_old, self.dt) {
                (Some(old), Some(dt)) => {
                    let theta = (s / dt).min(1.0);
                    (1.0 - theta) * src + theta * pick(old, &st)
                }
                _ => src,
            }
        });
        Ok(((-nu * tau).exp() * start + integral, exit.grazing))
    }

    /// Value at `x` for velocity node `vi`.
    pub fn node_value(&self, x: &Vector3<f64>, vi: usize) -> f64 {
        let nv = self.grid.n_v();
        let v = self.grid.velocity.nodes[vi];
        self.evaluate(x, &v, self.grid.nu[vi], |vals, st| st.apply(vals, nv, vi))
            .map(|r| r.0)
            .unwrap_or(0.0)
    }

    /// Value at an arbitrary `(x, v)`; the sources are interpolated in `v`.
    pub fn value_at(&self, x: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64> {
        let q = &self.grid.velocity;
        if v.norm() > q.v_max {
            return Err(KineticError::InterpolationOutOfRange { speed: v.norm(), v_max: q.v_max });
        }
        let nv = self.grid.n_v();
        let pick = |vals: &[f64], st: &Stencil| {
            let row: Vec<f64> = (0..nv).map(|j| st.apply(vals, nv, j)).collect();
            q.interpolate(&row, v).unwrap_or(0.0)
        };
        let (val, grazing) = self.evaluate(x, v, nu_exact(v), pick)?;
        if grazing {
            let exit = self.grid.domain.backward_exit(&PhasePoint::new(*x, *v))?;
            return Err(KineticError::GrazingSingularity { normal_speed: exit.normal_b.dot(v).abs() });
        }
        Ok(val)
    }

    /// New nodal values: wall values on incoming boundary nodes, characteristics elsewhere.
    pub fn sweep(&self) -> Vec<f64> {
        let grid = self.grid;
        let nv = grid.n_v();
        let rows = crate::reduce::par_map(grid.n_x(), |ix| {
            let x = grid.points[ix];
            let normal = grid.is_boundary(ix).then(|| grid.normals[ix - grid.first_boundary]);
            (0..nv)
                .map(|vi| {
                    let v = &grid.velocity.nodes[vi];
                    match normal {
                        Some(n) if n.dot(v) < 0.0 => self.wall.incoming(grid, &self.state, &x, v),
                        _ => self.node_value(&x, vi),
                    }
                })
                .collect::<Vec<f64>>()
        });
        rows.concat()
    }
}
