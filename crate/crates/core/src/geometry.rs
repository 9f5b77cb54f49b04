//! Strictly convex level-set domains, backward/forward exit maps, exit-map
//! derivatives, boundary charts and stochastic cycles.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{KineticError, Result};
use crate::quadrature::orthonormal_frame;

/// Analytic domain family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainKind {
    /// `ξ = |x|² − 1`.
    UnitBall,
    /// `ξ = (x/a)² + (y/b)² + (z/c)² − 1`.
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// `ξ = (|x|² − 1) + κ(|x|⁴ − 1)`: the unit ball described by a non-quadratic level set.
    QuarticBall { kappa: f64 },
}

/// Third derivative tensor `∂_i∂_j∂_k ξ`.
pub type Tensor3 = [[[f64; 3]; 3]; 3];

/// `Ω = {ξ < 0}` for an analytic, strictly convex `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexDomain {
    pub kind: DomainKind,
    /// Points with `ξ(x) ≤ tol_boundary` are accepted as inside.
    pub tol_boundary: f64,
    /// Target accuracy of exit roots.
    pub tol_root: f64,
    /// Exits with `|n(x_b)·v| ≤ grazing_rel_tol·|v|` are flagged grazing.
    pub grazing_rel_tol: f64,
}

/// A phase-space point `(x, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl PhasePoint {
    pub fn new(x: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { x, v }
    }
}

/// Exit data of a free-flight ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRecord {
    pub t_b: f64,
    pub x_b: Vector3<f64>,
    pub normal_b: Vector3<f64>,
    pub grazing: bool,
}

/// Derivatives of the backward exit map.
///
/// Matrices use the convention `M[(i, j)] = ∂ x_{b,j} / ∂ x_i` (resp. `∂ v_i`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitGradients {
    pub grad_x_tb: Vector3<f64>,
    pub grad_v_tb: Vector3<f64>,
    pub grad_x_xb: Matrix3<f64>,
    pub grad_v_xb: Matrix3<f64>,
}

impl ConvexDomain {
    pub fn new(kind: DomainKind) -> Result<Self> {
        match kind {
            DomainKind::Ellipsoid { a, b, c } if !(a > 0.0 && b > 0.0 && c > 0.0) => {
                return Err(KineticError::InvalidParameter(format!(
                    "ellipsoid semi-axes must be positive, got ({a}, {b}, {c})"
                )))
            }
            DomainKind::QuarticBall { kappa } if !(kappa >= 0.0) => {
                return Err(KineticError::InvalidParameter(format!("quartic kappa must be >= 0, got {kappa}")))
            }
            _ => {}
        }
        Ok(Self { kind, tol_boundary: 1e-12, tol_root: 1e-12, grazing_rel_tol: 1e-8 })
    }

    pub fn unit_ball() -> Self {
        Self::new(DomainKind::UnitBall).expect("valid")
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(DomainKind::Ellipsoid { a, b, c })
    }

    pub fn quartic_ball(kappa: f64) -> Result<Self> {
        Self::new(DomainKind::QuarticBall { kappa })
    }

    /// Semi-axes of the reference map (`(1,1,1)` for the ball family).
    pub fn axes(&self) -> Vector3<f64> {
        match self.kind {
            DomainKind::Ellipsoid { a, b, c } => Vector3::new(a, b, c),
            _ => Vector3::new(1.0, 1.0, 1.0),
        }
    }

    pub fn xi(&self, x: &Vector3<f64>) -> f64 {
        match self.kind {
            DomainKind::UnitBall => x.norm_squared() - 1.0,
            DomainKind::Ellipsoid { .. } => x.component_div(&self.axes()).norm_squared() - 1.0,
            DomainKind::QuarticBall { kappa } => {
                let r2 = x.norm_squared();
                (r2 - 1.0) + kappa * (r2 * r2 - 1.0)
            }
        }
    }

    pub fn grad_xi(&self, x: &Vector3<f64>) -> Vector3<f64> {
        match self.kind {
            DomainKind::UnitBall => 2.0 * x,
            DomainKind::Ellipsoid { .. } => {
                let ax = self.axes();
                2.0 * x.component_div(&ax.component_mul(&ax))
            }
            DomainKind::QuarticBall { kappa } => (2.0 + 4.0 * kappa * x.norm_squared()) * x,
        }
    }

    pub fn hess_xi(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        match self.kind {
            DomainKind::UnitBall => 2.0 * Matrix3::identity(),
            DomainKind::Ellipsoid { .. } => {
                let ax = self.axes();
                Matrix3::from_diagonal(&Vector3::new(2.0 / (ax.x * ax.x), 2.0 / (ax.y * ax.y), 2.0 / (ax.z * ax.z)))
            }
            DomainKind::QuarticBall { kappa } => {
                (2.0 + 4.0 * kappa * x.norm_squared()) * Matrix3::identity() + 8.0 * kappa * x * x.transpose()
            }
        }
    }

    pub fn third_xi(&self, x: &Vector3<f64>) -> Tensor3 {
        let mut t = [[[0.0; 3]; 3]; 3];
        if let DomainKind::QuarticBall { kappa } = self.kind {
            let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        t[i][j][k] = 8.0 * kappa * (d(i, k) * x[j] + d(j, k) * x[i] + d(i, j) * x[k]);
                    }
                }
            }
        }
        t
    }

    /// Lower bound `c` in `ζᵀ∇²ξ ζ ≥ c|ζ|²` on `Ω̄`.
    pub fn convexity_constant(&self) -> f64 {
        match self.kind {
            DomainKind::UnitBall | DomainKind::QuarticBall { .. } => 2.0,
            DomainKind::Ellipsoid { .. } => 2.0 / self.axes().max().powi(2),
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.axes().max()
    }

    pub fn volume(&self) -> f64 {
        let ax = self.axes();
        4.0 * PI / 3.0 * ax.x * ax.y * ax.z
    }

    /// Outward unit normal `∇ξ/|∇ξ|`.
    pub fn normal(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.grad_xi(x).normalize()
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        self.xi(x) <= self.tol_boundary
    }

    /// Map to the reference unit ball (`y = x / axes`).
    pub fn to_reference(&self, x: &Vector3<f64>) -> Vector3<f64> {
        x.component_div(&self.axes())
    }

    pub fn from_reference(&self, y: &Vector3<f64>) -> Vector3<f64> {
        y.component_mul(&self.axes())
    }

    /// Radial projection of a nonzero point onto `∂Ω`.
    pub fn project_to_boundary(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let y = self.to_reference(x);
        self.from_reference(&(y / y.norm()))
    }

    fn check_phase(&self, p: &PhasePoint) -> Result<()> {
        if p.v.norm_squared() == 0.0 {
            return Err(KineticError::ZeroVelocity);
        }
        let xi = self.xi(&p.x);
        if xi > self.tol_boundary {
            return Err(KineticError::OutsideDomain { xi });
        }
        Ok(())
    }

    /// `t_b = sup{s > 0 : x − s v ∈ Ω}` and `x_b = x − t_b v`.
    pub fn backward_exit(&self, p: &PhasePoint) -> Result<ExitRecord> {
        self.check_phase(p)?;
        let t_b = match self.kind {
            DomainKind::UnitBall => ball_exit_time(&p.x, &p.v),
            _ => self.bracketed_exit_time(&p.x, &p.v),
        };
        let x_b = p.x - t_b * p.v;
        let normal_b = self.normal(&x_b);
        let grazing = normal_b.dot(&p.v).abs() <= self.grazing_rel_tol * p.v.norm();
        Ok(ExitRecord { t_b, x_b, normal_b, grazing })
    }

    /// `t_f = sup{s > 0 : x + s v ∈ Ω}` and `x_f = x + t_f v`.
    pub fn forward_exit(&self, p: &PhasePoint) -> Result<ExitRecord> {
        self.backward_exit(&PhasePoint::new(p.x, -p.v))
    }

    /// Largest root of `s ↦ ξ(x − s v)`: Newton from the right end of the
    /// bracket `[0, 2·diam/|v|]`, safeguarded by bisection.
    fn bracketed_exit_time(&self, x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        let f = |s: f64| self.xi(&(x - s * v));
        let df = |s: f64| -self.grad_xi(&(x - s * v)).dot(v);
        let mut lo = 0.0;
        let mut hi = 2.0 * self.diameter() / v.norm();
        let mut s = hi;
        let mut fs = f(s);
        for _ in 0..200 {
            if fs > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            if fs == 0.0 || hi - lo <= self.tol_root * 1e-3 * hi.max(1e-300) {
                break;
            }
            let d = df(s);
            let newton = s - fs / d;
            let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - s).abs() <= 1e-16 * s.abs().max(1e-300) {
                s = next;
                break;
            }
            s = next;
            fs = f(s);
        }
        s
    }

    /// Analytic derivatives of `t_b` and `x_b`.
    pub fn exit_gradients(&self, p: &PhasePoint) -> Result<ExitGradients> {
        let e = self.backward_exit(p)?;
        let n = e.normal_b;
        let nv = n.dot(&p.v);
        if nv.abs() <= self.grazing_rel_tol * p.v.norm() {
            return Err(KineticError::GrazingSingularity { normal_speed: nv.abs() });
        }
        let grad_x_tb = n / nv;
        let grad_v_tb = -e.t_b * n / nv;
        let nv_outer = n * p.v.transpose() / nv;
        Ok(ExitGradients {
            grad_x_tb,
            grad_v_tb,
            grad_x_xb: Matrix3::identity() - nv_outer,
            grad_v_xb: -e.t_b * Matrix3::identity() + e.t_b * nv_outer,
        })
    }

    /// Orthogonal boundary chart anchored at `q ∈ ∂Ω`.
    pub fn chart_at(&self, q: &Vector3<f64>) -> Result<Chart> {
        let xi = self.xi(q);
        if xi.abs() > 1e-9 {
            return Err(KineticError::NotOnBoundary { xi });
        }
        let n = self.normal(q);
        let (t1, t2) = orthonormal_frame(&n);
        let kind = match self.kind {
            DomainKind::UnitBall | DomainKind::QuarticBall { .. } => {
                ChartKind::Spherical { rot: Matrix3::from_columns(&[n, t1, t2]) }
            }
            DomainKind::Ellipsoid { .. } => ChartKind::Graph { tau1: t1, tau2: t2, normal: n },
        };
        Ok(Chart { domain: *self, anchor: *q, kind, patch_radius: CHART_PATCH_RADIUS })
    }

    /// `det ∂(𝐱₁, 𝐱₂, t_b)/∂v` of `v ↦ (chart coordinates of x_b(x1, v), t_b(x1, v))`.
    ///
    /// Equals `t_b³ / (|∂₁η × ∂₂η| · |n(x_b)·v|)`, which is
    /// `t_b³ / (√(g₁₁g₂₂)|n(x_b)·v|)` for an orthogonal chart.
    pub fn exit_jacobian(&self, x1: &Vector3<f64>, v1: &Vector3<f64>, chart2: &Chart) -> Result<f64> {
        let e = self.backward_exit(&PhasePoint::new(*x1, *v1))?;
        let nv = e.normal_b.dot(v1).abs();
        if nv <= self.grazing_rel_tol * v1.norm() {
            return Err(KineticError::GrazingSingularity { normal_speed: nv });
        }
        let (a, b) = chart2.boundary_coordinates(&e.x_b)?;
        let area = chart2.surface_element(a, b);
        Ok(e.t_b.powi(3) / (area * nv))
    }

    /// Backward stochastic cycle from `p` with time budget `t0`.
    pub fn build_cycle<S: VelocitySampler>(
        &self,
        p: &PhasePoint,
        t0: f64,
        sampler: &mut S,
        max_bounces: usize,
    ) -> Result<StochasticCycle> {
        if !(t0 >= 0.0) {
            return Err(KineticError::InvalidParameter(format!("cycle start time must be >= 0, got {t0}")));
        }
        let mut legs = Vec::new();
        let (mut x, mut v, mut t) = (p.x, p.v, t0);
        let mut bounces = 0;
        let mut truncated = false;
        loop {
            let e = self.backward_exit(&PhasePoint::new(x, v))?;
            legs.push(CycleLeg { x, v, t, t_b: e.t_b });
            let t_next = t - e.t_b;
            if t_next <= 0.0 {
                break;
            }
            if bounces == max_bounces {
                truncated = true;
                break;
            }
            x = e.x_b;
            v = sampler.sample(&x, &e.normal_b);
            t = t_next;
            bounces += 1;
        }
        Ok(StochasticCycle { legs, bounces, truncated })
    }

    /// Uniform sample in `Ω` by rejection from the bounding box.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> Vector3<f64> {
        let ax = self.axes();
        loop {
            let y = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if y.norm_squared() < 1.0 {
                return y.component_mul(&ax);
            }
        }
    }

    /// Point on `∂Ω` from a uniform direction in reference coordinates.
    pub fn sample_boundary<R: Rng>(&self, rng: &mut R) -> Vector3<f64> {
        let d = random_unit(rng);
        self.from_reference(&d)
    }
}

/// Closed-form exit time from the unit ball, in cancellation-free form.
fn ball_exit_time(x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let a = v.norm_squared();
    let b = x.dot(v);
    let c = 1.0 - x.norm_squared();
    let disc = (b * b + a * c).max(0.0).sqrt();
    if b > 0.0 {
        (b + disc) / a
    } else if disc - b > 0.0 {
        c.max(0.0) / (disc - b)
    } else {
        0.0
    }
}

/// Uniformly distributed unit vector.
pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let g = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// Patch half-width in chart parameters.
pub const CHART_PATCH_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChartKind {
    /// Rotated spherical coordinates: `η = (1+𝐱₃) R (cos𝐱₂ cos𝐱₁, cos𝐱₂ sin𝐱₁, sin𝐱₂)`.
    Spherical { rot: Matrix3<f64> },
    /// Normal-offset graph: `η = S(𝐱₁,𝐱₂) + 𝐱₃ n(S)` with `S = q + 𝐱₁τ₁ + 𝐱₂τ₂ − h n_q` on `∂Ω`.
    Graph { tau1: Vector3<f64>, tau2: Vector3<f64>, normal: Vector3<f64> },
}

/// Boundary chart `η_p`; interior points have `𝐱₃ < 0` and `∂₃η` is the outward normal on `∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub domain: ConvexDomain,
    pub anchor: Vector3<f64>,
    pub kind: ChartKind,
    pub patch_radius: f64,
}

impl Chart {
    /// Graph height `h(a, b)` with `ξ(q + aτ₁ + bτ₂ − h n_q) = 0`.
    fn graph_height(&self, a: f64, b: f64, tau1: &Vector3<f64>, tau2: &Vector3<f64>, n: &Vector3<f64>) -> f64 {
        let base = self.anchor + a * tau1 + b * tau2;
        let mut h: f64 = 0.0;
        for _ in 0..60 {
            let p = base - h * n;
            let f = self.domain.xi(&p);
            let d = -self.domain.grad_xi(&p).dot(n);
            let step = f / d;
            h -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        h
    }

    fn surface_point(&self, a: f64, b: f64) -> (Vector3<f64>, [Vector3<f64>; 2]) {
        match self.kind {
            ChartKind::Spherical { rot } => {
                let (s1, c1) = a.sin_cos();
                let (s2, c2) = b.sin_cos();
                let p = rot * Vector3::new(c2 * c1, c2 * s1, s2);
                let d1 = rot * Vector3::new(-c2 * s1, c2 * c1, 0.0);
                let d2 = rot * Vector3::new(-s2 * c1, -s2 * s1, c2);
                (p, [d1, d2])
            }
            ChartKind::Graph { tau1, tau2, normal } => {
                let h = self.graph_height(a, b, &tau1, &tau2, &normal);
                let p = self.anchor + a * tau1 + b * tau2 - h * normal;
                let g = self.domain.grad_xi(&p);
                let gn = g.dot(&normal);
                let ha = g.dot(&tau1) / gn;
                let hb = g.dot(&tau2) / gn;
                (p, [tau1 - ha * normal, tau2 - hb * normal])
            }
        }
    }

    /// `η(𝐱)`.
    pub fn eta(&self, xp: &Vector3<f64>) -> Vector3<f64> {
        match self.kind {
            ChartKind::Spherical { .. } => (1.0 + xp.z) * self.surface_point(xp.x, xp.y).0,
            ChartKind::Graph { .. } => {
                let (p, _) = self.surface_point(xp.x, xp.y);
                p + xp.z * self.domain.normal(&p)
            }
        }
    }

    /// Columns `∂₁η, ∂₂η, ∂₃η`.
    pub fn tangents(&self, xp: &Vector3<f64>) -> [Vector3<f64>; 3] {
        let (p, [d1, d2]) = self.surface_point(xp.x, xp.y);
        match self.kind {
            ChartKind::Spherical { .. } => [(1.0 + xp.z) * d1, (1.0 + xp.z) * d2, p],
            ChartKind::Graph { .. } => {
                let g = self.domain.grad_xi(&p);
                let gn = g.norm();
                let n = g / gn;
                let proj = Matrix3::identity() - n * n.transpose();
                let dn = proj * self.domain.hess_xi(&p) / gn;
                [d1 + xp.z * dn * d1, d2 + xp.z * dn * d2, n]
            }
        }
    }

    /// Metric `g_ij = ∂_iη · ∂_jη`.
    pub fn metric(&self, xp: &Vector3<f64>) -> Matrix3<f64> {
        let t = self.tangents(xp);
        Matrix3::from_fn(|i, j| t[i].dot(&t[j]))
    }

    /// `T_𝐱` with rows `∂ᵢη/√gᵢᵢ`, so that `𝐯 = T_𝐱 v` and `v = T_𝐱ᵀ 𝐯` on `∂Ω`.
    pub fn t_matrix(&self, xp: &Vector3<f64>) -> Matrix3<f64> {
        let t = self.tangents(xp);
        Matrix3::from_rows(&[
            t[0].normalize().transpose(),
            t[1].normalize().transpose(),
            t[2].normalize().transpose(),
        ])
    }

    /// Area element `|∂₁η × ∂₂η|` on `∂Ω`.
    pub fn surface_element(&self, a: f64, b: f64) -> f64 {
        let t = self.tangents(&Vector3::new(a, b, 0.0));
        t[0].cross(&t[1]).norm()
    }

    /// Chart parameters `(𝐱₁, 𝐱₂)` of a boundary point inside the patch.
    pub fn boundary_coordinates(&self, y: &Vector3<f64>) -> Result<(f64, f64)> {
        let (a, b) = match self.kind {
            ChartKind::Spherical { rot } => {
                let l = rot.transpose() * y.normalize();
                (l.y.atan2(l.x), l.z.clamp(-1.0, 1.0).asin())
            }
            ChartKind::Graph { tau1, tau2, .. } => {
                let d = y - self.anchor;
                (d.dot(&tau1), d.dot(&tau2))
            }
        };
        if a.abs() > self.patch_radius || b.abs() > self.patch_radius {
            return Err(KineticError::ChartMismatch);
        }
        if (self.surface_point(a, b).0 - y).norm() > 1e-8 {
            // Same parameters, opposite side of the surface.
            return Err(KineticError::ChartMismatch);
        }
        Ok((a, b))
    }
}

/// Draws outgoing-at-the-wall velocities (`n(x)·v > 0`) for stochastic cycles.
pub trait VelocitySampler {
    fn sample(&mut self, x: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64>;
}

/// Samples the flux density `∝ M_{1,0,T_W(x)}(v)|n·v|` on `{n·v > 0}`.
pub struct FluxMaxwellianSampler<T: Fn(&Vector3<f64>) -> f64> {
    rng: ChaCha8Rng,
    temperature: T,
}

impl<T: Fn(&Vector3<f64>) -> f64> FluxMaxwellianSampler<T> {
    pub fn seeded(seed: u64, temperature: T) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), temperature }
    }
}

impl<T: Fn(&Vector3<f64>) -> f64> VelocitySampler for FluxMaxwellianSampler<T> {
    fn sample(&mut self, x: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
        let temp = (self.temperature)(x);
        let sd = temp.sqrt();
        let u: f64 = self.rng.random();
        let normal = (-2.0 * temp * (1.0 - u).ln()).sqrt();
        let (t1, t2) = orthonormal_frame(n);
        let a: f64 = self.rng.sample(StandardNormal);
        let b: f64 = self.rng.sample(StandardNormal);
        normal.max(1e-300) * n + sd * (a * t1 + b * t2)
    }
}

/// One free-flight segment of a stochastic cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleLeg {
    /// Start point `x^k` (on `∂Ω` for `k ≥ 1`).
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Remaining time `t^k`.
    pub t: f64,
    /// Flight time `t_b(x^k, v^k)`.
    pub t_b: f64,
}

/// Sequence `(x^k, v^k, t^k, t_b^k)` with `x^{k+1} = x_b(x^k, v^k)`, `t^{k+1} = t^k − t_b^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticCycle {
    pub legs: Vec<CycleLeg>,
    pub bounces: usize,
    /// Set when the bounce budget ran out before the time budget.
    pub truncated: bool,
}

impl StochasticCycle {
    /// `Err(MaxBouncesExceeded)` for truncated cycles.
    pub fn status(&self) -> Result<()> {
        if self.truncated {
            Err(KineticError::MaxBouncesExceeded { bounces: self.bounces })
        } else {
            Ok(())
        }
    }

    /// Boundary points `x^k`, `k ≥ 1`.
    pub fn boundary_points(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.legs.iter().skip(1).map(|l| &l.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ball_center_exit() {
        let d = ConvexDomain::unit_ball();
        let e = d.backward_exit(&PhasePoint::new(Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0))).unwrap();
        assert_relative_eq!(e.t_b, 0.5);
        assert_relative_eq!(e.x_b, Vector3::new(-1.0, 0.0, 0.0));
        let f = d.forward_exit(&PhasePoint::new(Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0))).unwrap();
        assert_relative_eq!(f.t_b, 0.5);
        assert_relative_eq!(f.x_b, Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn ball_offset_exit_matches_quadratic() {
        let d = ConvexDomain::unit_ball();
        let e = d.backward_exit(&PhasePoint::new(Vector3::new(0.5, 0.0, 0.0), Vector3::y())).unwrap();
        assert_relative_eq!(e.t_b, 0.75f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(e.x_b, Vector3::new(0.5, -(0.75f64.sqrt()), 0.0), epsilon = 1e-14);
    }

    #[test]
    fn errors_for_zero_velocity_and_outside() {
        let d = ConvexDomain::unit_ball();
        assert_eq!(
            d.backward_exit(&PhasePoint::new(Vector3::zeros(), Vector3::zeros())),
            Err(KineticError::ZeroVelocity)
        );
        assert!(matches!(
            d.backward_exit(&PhasePoint::new(Vector3::new(2.0, 0.0, 0.0), Vector3::x())),
            Err(KineticError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn center_gradients() {
        let d = ConvexDomain::unit_ball();
        let g = d.exit_gradients(&PhasePoint::new(Vector3::zeros(), Vector3::x())).unwrap();
        assert_relative_eq!(g.grad_x_tb, Vector3::x(), epsilon = 1e-14);
        assert_relative_eq!(g.grad_v_tb, -Vector3::x(), epsilon = 1e-14);
    }

    #[test]
    fn grazing_gradient_is_an_error() {
        let d = ConvexDomain::unit_ball();
        let p = PhasePoint::new(Vector3::new(1.0, 0.0, 0.0), Vector3::y());
        assert!(matches!(d.exit_gradients(&p), Err(KineticError::GrazingSingularity { .. })));
    }

    #[test]
    fn quartic_exit_lands_on_unit_sphere() {
        let d = ConvexDomain::quartic_ball(0.7).unwrap();
        let e = d.backward_exit(&PhasePoint::new(Vector3::new(0.2, 0.1, -0.3), Vector3::new(0.3, -1.0, 0.4))).unwrap();
        assert_relative_eq!(e.x_b.norm(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn sphere_chart_anchor_properties() {
        let d = ConvexDomain::unit_ball();
        let q = Vector3::new(0.0, 0.0, 1.0);
        let c = d.chart_at(&q).unwrap();
        let t = c.tangents(&Vector3::zeros());
        assert!(t[0].dot(&t[1]).abs() < 1e-14);
        assert!((t[2].normalize() - d.normal(&q)).norm() < 1e-12);
        assert_relative_eq!(c.eta(&Vector3::zeros()), q, epsilon = 1e-15);
        let tm = c.t_matrix(&Vector3::new(0.2, -0.3, 0.0));
        assert!((tm.transpose() * tm - Matrix3::identity()).norm() < 1e-10);
    }

    #[test]
    fn graph_chart_is_orthogonal_at_anchor() {
        let d = ConvexDomain::ellipsoid(2.0, 1.0, 1.0).unwrap();
        let q = d.project_to_boundary(&Vector3::new(0.5, 0.4, 0.3));
        let c = d.chart_at(&q).unwrap();
        let t = c.tangents(&Vector3::zeros());
        assert!(t[0].dot(&t[1]).abs() < 1e-12);
        assert!((t[2] - d.normal(&q)).norm() < 1e-12);
        let xp = Vector3::new(0.1, -0.2, 0.0);
        assert!(d.xi(&c.eta(&xp)).abs() < 1e-12);
        let (a, b) = c.boundary_coordinates(&c.eta(&xp)).unwrap();
        assert_relative_eq!(a, 0.1, epsilon = 1e-12);
        assert_relative_eq!(b, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn not_on_boundary_chart_error() {
        let d = ConvexDomain::unit_ball();
        assert!(matches!(d.chart_at(&Vector3::new(0.5, 0.0, 0.0)), Err(KineticError::NotOnBoundary { .. })));
    }

    #[test]
    fn cycle_without_bounce() {
        let d = ConvexDomain::unit_ball();
        let mut s = FluxMaxwellianSampler::seeded(1, |_: &Vector3<f64>| 1.0);
        let c = d.build_cycle(&PhasePoint::new(Vector3::zeros(), Vector3::x()), 0.3, &mut s, 100).unwrap();
        assert_eq!(c.legs.len(), 1);
        assert_eq!(c.bounces, 0);
        assert_relative_eq!(c.legs[0].t - c.legs[0].t_b, -0.7, epsilon = 1e-14);
    }

    #[test]
    fn truncated_cycle_reports_error() {
        let d = ConvexDomain::unit_ball();
        let mut s = FluxMaxwellianSampler::seeded(3, |_: &Vector3<f64>| 1.0);
        let c = d.build_cycle(&PhasePoint::new(Vector3::zeros(), Vector3::x()), 50.0, &mut s, 2).unwrap();
        assert!(c.truncated);
        assert_eq!(c.status(), Err(KineticError::MaxBouncesExceeded { bounces: 2 }));
    }
}
