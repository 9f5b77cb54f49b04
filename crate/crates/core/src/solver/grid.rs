//! Structured collocation grid on `Ω × {|v| ≤ V}`.
//!
//! Spatial nodes live on spherical shells of the reference ball (a centre
//! node, interior shells stratified toward the wall, one boundary shell) and
//! are mapped to `Ω` by the domain's reference map. Each shell carries the
//! same angular lattice: cosine midpoints times uniform azimuths, plus the
//! two poles so that the interpolant is single-valued on the polar axis.
//! Pole nodes carry no volume.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::collision::{nu_exact, sqrt_mu};
use crate::error::{KineticError, Result};
use crate::geometry::ConvexDomain;
use crate::quadrature::{bracket, GaussRule, VelocityQuadrature};

/// Grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Interior shell radii in reference coordinates, increasing in `(0, 1)`.
    pub shells: Vec<f64>,
    pub n_cos: usize,
    pub n_phi: usize,
    pub v_radial: usize,
    pub v_polar: usize,
    pub v_azimuth: usize,
    pub v_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            shells: vec![0.35, 0.6, 0.78, 0.88, 0.94, 0.975],
            n_cos: 6,
            n_phi: 12,
            v_radial: 8,
            v_polar: 6,
            v_azimuth: 10,
            v_max: 6.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(KineticError::InvalidParameter(m.to_string()));
        if self.shells.is_empty() || self.shells.windows(2).any(|w| w[1] <= w[0]) {
            return bad("grid shells must be non-empty and strictly increasing");
        }
        if self.shells[0] <= 0.0 || *self.shells.last().unwrap() >= 1.0 {
            return bad("grid shells must lie in (0, 1)");
        }
        if self.n_cos < 2 || self.n_phi < 3 || self.v_radial < 2 || self.v_polar < 2 || self.v_azimuth < 3 {
            return bad("grid sizes too small");
        }
        if !(self.v_max > 0.0) {
            return bad("v_max must be positive");
        }
        Ok(())
    }

    /// Doubles the spatial resolution: radial levels gain midpoints, angles double.
    pub fn refined_space(&self) -> Self {
        let mut levels = vec![0.0];
        levels.extend(&self.shells);
        levels.push(1.0);
        let mut shells = Vec::new();
        for w in levels.windows(2) {
            if w[0] > 0.0 {
                shells.push(w[0]);
            }
            shells.push(0.5 * (w[0] + w[1]));
        }
        Self { shells, n_cos: 2 * self.n_cos, n_phi: 2 * self.n_phi, ..self.clone() }
    }

    /// Width of the outermost interior stratum `1 − max(shells)`.
    pub fn wall_stratum(&self) -> f64 {
        1.0 - self.shells.last().copied().unwrap_or(0.0)
    }
}

/// Interpolation stencil into the node list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    pub len: usize,
}

impl Stencil {
    pub fn apply(&self, values: &[f64], stride: usize, offset: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len {
            acc += self.w[k] * values[self.idx[k] * stride + offset];
        }
        acc
    }
}

/// Collocation grid with cell volumes, velocity quadrature, `ν` and `√μ` tables.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    pub domain: ConvexDomain,
    pub spec: GridSpec,
    /// Radial levels `[0, shells…, 1]`.
    pub levels: Vec<f64>,
    pub cosines: Vec<f64>,
    pub n_phi: usize,
    /// Physical node positions.
    pub points: Vec<Vector3<f64>>,
    /// Spatial cell volumes (sum to `|Ω|`).
    pub volumes: Vec<f64>,
    /// Index of the first boundary node; boundary nodes fill the tail.
    pub first_boundary: usize,
    /// Outward normals at boundary nodes, indexed from `first_boundary`.
    pub normals: Vec<Vector3<f64>>,
    pub velocity: VelocityQuadrature,
    pub nu: Vec<f64>,
    pub sqrt_mu: Vec<f64>,
}

impl PhaseGrid {
    pub fn new(domain: ConvexDomain, spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let mut levels = vec![0.0];
        levels.extend(&spec.shells);
        levels.push(1.0);
        let n_cos = spec.n_cos;
        let n_phi = spec.n_phi;
        let dc = 2.0 / n_cos as f64;
        let dphi = 2.0 * PI / n_phi as f64;
        let cosines: Vec<f64> = (0..n_cos).map(|i| -1.0 + (i as f64 + 0.5) * dc).collect();
        let jac = domain.axes().product();

        let mut edges = vec![0.0];
        for w in levels.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(1.0);
        let shell_volume = |l: usize| (edges[l + 1].powi(3) - edges[l].powi(3)) / 3.0;

        let mut points = vec![Vector3::zeros()];
        let mut volumes = vec![4.0 * PI * shell_volume(0) * jac];
        let mut normals = Vec::new();
        let mut first_boundary = 0;
        for (l, &rho) in levels.iter().enumerate().skip(1) {
            if l == levels.len() - 1 {
                first_boundary = points.len();
            }
            for &c in &cosines {
                let s = (1.0 - c * c).sqrt();
                for ip in 0..n_phi {
                    let phi = (ip as f64 + 0.5) * dphi;
                    let y = Vector3::new(s * phi.cos(), s * phi.sin(), c);
                    let x = domain.from_reference(&(rho * y));
                    if l == levels.len() - 1 {
                        normals.push(domain.normal(&x));
                    }
                    points.push(x);
                    volumes.push(shell_volume(l) * dc * dphi * jac);
                }
            }
            for c in [-1.0, 1.0] {
                let x = domain.from_reference(&Vector3::new(0.0, 0.0, rho * c));
                if l == levels.len() - 1 {
                    normals.push(domain.normal(&x));
                }
                points.push(x);
                volumes.push(0.0);
            }
        }

        let velocity = VelocityQuadrature::new(spec.v_radial, spec.v_polar, spec.v_azimuth, spec.v_max);
        let nu = velocity.nodes.iter().map(nu_exact).collect();
        let sqrt_mu = velocity.nodes.iter().map(sqrt_mu).collect();
        Ok(Self {
            domain,
            spec: spec.clone(),
            levels,
            cosines,
            n_phi,
            points,
            volumes,
            first_boundary,
            normals,
            velocity,
            nu,
            sqrt_mu,
        })
    }

    pub fn n_x(&self) -> usize {
        self.points.len()
    }

    pub fn n_v(&self) -> usize {
        self.velocity.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.points.len() - self.first_boundary
    }

    pub fn is_boundary(&self, ix: usize) -> bool {
        ix >= self.first_boundary
    }

    fn n_ang(&self) -> usize {
        self.cosines.len() * self.n_phi + 2
    }

    /// Angular stencil `(offset within a shell, weight)` for a reference
    /// direction: bilinear between rings, linear toward a pole beyond the
    /// outermost rings.
    fn angular(&self, y: &Vector3<f64>) -> ([(usize, f64); 4], usize) {
        let r = y.norm();
        let c = if r > 0.0 { (y.z / r).clamp(-1.0, 1.0) } else { 0.0 };
        let nc = self.cosines.len();
        let np = self.n_phi;
        let south = nc * np;
        let north = south + 1;
        let dphi = 2.0 * PI / np as f64;
        let phi = y.y.atan2(y.x).rem_euclid(2.0 * PI);
        let pa = phi / dphi - 0.5;
        let fl = pa.floor();
        let ta = pa - fl;
        let ia0 = (fl as i64).rem_euclid(np as i64) as usize;
        let ia1 = (ia0 + 1) % np;
        let ring = |ic: usize, w: f64| [(ic * np + ia0, w * (1.0 - ta)), (ic * np + ia1, w * ta)];
        if c < self.cosines[0] {
            let t = (c + 1.0) / (self.cosines[0] + 1.0);
            let [a, b] = ring(0, t);
            return ([(south, 1.0 - t), a, b, (0, 0.0)], 3);
        }
        if c > self.cosines[nc - 1] {
            let t = (1.0 - c) / (1.0 - self.cosines[nc - 1]);
            let [a, b] = ring(nc - 1, t);
            return ([(north, 1.0 - t), a, b, (0, 0.0)], 3);
        }
        let (ic, tc) = bracket(&self.cosines, c);
        let [a, b] = ring(ic, 1.0 - tc);
        let [d, e] = ring(ic + 1, tc);
        ([a, b, d, e], 4)
    }

    /// Trilinear stencil in `(ρ, cos θ, φ)` of the reference point of `x`.
    pub fn stencil(&self, x: &Vector3<f64>) -> Stencil {
        let y = self.domain.to_reference(x);
        let rho = y.norm().min(1.0);
        let (l, t) = bracket(&self.levels, rho);
        let ang = self.angular(&y);
        let mut s = Stencil { idx: [0; 8], w: [0.0; 8], len: 0 };
        for (dl, wl) in [(0usize, 1.0 - t), (1, t)] {
            let level = l + dl;
            if level == 0 {
                s.idx[s.len] = 0;
                s.w[s.len] = wl;
                s.len += 1;
                continue;
            }
            let base = 1 + (level - 1) * self.n_ang();
            for &(a, wa) in &ang.0[..ang.1] {
                s.idx[s.len] = base + a;
                s.w[s.len] = wl * wa;
                s.len += 1;
            }
        }
        s
    }

    /// Bilinear stencil over boundary nodes (indices relative to `first_boundary`).
    pub fn boundary_stencil(&self, x: &Vector3<f64>) -> [(usize, f64); 4] {
        self.angular(&self.domain.to_reference(x)).0
    }

    /// Distance estimate `−ξ/|∇ξ|` to `∂Ω` (exact for the ball family at first order).
    pub fn wall_distance(&self, x: &Vector3<f64>) -> f64 {
        let g = self.domain.grad_xi(x).norm();
        if g == 0.0 {
            return self.domain.diameter() / 2.0;
        }
        (-self.domain.xi(x) / g).max(0.0)
    }

    /// `Σ_x V_x Σ_v w_v f √μ`.
    pub fn mass(&self, values: &[f64]) -> f64 {
        let nv = self.n_v();
        let mut total = 0.0;
        for (ix, vol) in self.volumes.iter().enumerate() {
            let row = &values[ix * nv..(ix + 1) * nv];
            let m: f64 = row.iter().zip(&self.velocity.weights).zip(&self.sqrt_mu).map(|((f, w), s)| f * w * s).sum();
            total += vol * m;
        }
        total
    }

    /// Subtracts `c√μ` so that the discrete mass equals `target`; returns `c`.
    pub fn project_mass(&self, values: &mut [f64], target: f64) -> f64 {
        let nv = self.n_v();
        let norm: f64 = self.volumes.iter().sum::<f64>()
            * self.velocity.weights.iter().zip(&self.sqrt_mu).map(|(w, s)| w * s * s).sum::<f64>();
        let c = (self.mass(values) - target) / norm;
        for row in values.chunks_mut(nv) {
            for (f, s) in row.iter_mut().zip(&self.sqrt_mu) {
                *f -= c * s;
            }
        }
        c
    }
}

/// Interior quadrature used to measure gradient norms: Gauss–Legendre in `ρ`
/// on strata graded toward the wall, midpoints in `cos θ` and `φ`.
#[derive(Debug, Clone)]
pub struct MeasureGrid {
    pub points: Vec<Vector3<f64>>,
    pub volumes: Vec<f64>,
}

/// Resolution of a [`MeasureGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub strata: Vec<f64>,
    pub n_radial: usize,
    pub n_cos: usize,
    pub n_phi: usize,
}

impl Default for MeasureSpec {
    fn default() -> Self {
        Self { strata: vec![0.0, 0.6, 0.85, 0.95, 0.985, 0.996, 0.999, 1.0], n_radial: 2, n_cos: 6, n_phi: 8 }
    }
}

impl MeasureSpec {
    pub fn refined(&self) -> Self {
        Self { n_radial: 2 * self.n_radial, n_cos: 2 * self.n_cos, n_phi: 2 * self.n_phi, strata: self.strata.clone() }
    }
}

impl MeasureGrid {
    pub fn new(domain: &ConvexDomain, spec: &MeasureSpec) -> Self {
        let g = GaussRule::new(spec.n_radial);
        let dc = 2.0 / spec.n_cos as f64;
        let dphi = 2.0 * PI / spec.n_phi as f64;
        let jac = domain.axes().product();
        let mut points = Vec::new();
        let mut volumes = Vec::new();
        for w in spec.strata.windows(2) {
            for (rho, wr) in g.on(w[0], w[1]) {
                for ic in 0..spec.n_cos {
                    let c = -1.0 + (ic as f64 + 0.5) * dc;
                    let s = (1.0 - c * c).sqrt();
                    for ip in 0..spec.n_phi {
                        let phi = (ip as f64 + 0.5) * dphi;
                        let y = rho * Vector3::new(s * phi.cos(), s * phi.sin(), c);
                        points.push(domain.from_reference(&y));
                        volumes.push(wr * rho * rho * dc * dphi * jac);
                    }
                }
            }
        }
        Self { points, volumes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn volumes_sum_to_domain_volume() {
        let d = ConvexDomain::ellipsoid(1.2, 1.0, 0.8).unwrap();
        let g = PhaseGrid::new(d, &GridSpec::default()).unwrap();
        assert_relative_eq!(g.volumes.iter().sum::<f64>(), d.volume(), max_relative = 1e-12);
        let m = MeasureGrid::new(&d, &MeasureSpec::default());
        assert_relative_eq!(m.volumes.iter().sum::<f64>(), d.volume(), max_relative = 1e-12);
    }

    #[test]
    fn boundary_nodes_lie_on_the_wall() {
        let d = ConvexDomain::ellipsoid(1.2, 1.0, 0.8).unwrap();
        let g = PhaseGrid::new(d, &GridSpec::default()).unwrap();
        for ix in 0..g.n_x() {
            let xi = d.xi(&g.points[ix]);
            if g.is_boundary(ix) {
                assert!(xi.abs() < 1e-12);
            } else {
                assert!(xi < -1e-3);
            }
        }
    }

    #[test]
    fn stencil_reproduces_nodes_and_linear_radial_data() {
        let g = PhaseGrid::new(ConvexDomain::unit_ball(), &GridSpec::default()).unwrap();
        let vals: Vec<f64> = g.points.iter().map(|p| p.norm()).collect();
        for (ix, p) in g.points.iter().enumerate() {
            assert_relative_eq!(g.stencil(p).apply(&vals, 1, 0), vals[ix], epsilon = 1e-12);
        }
        let x = Vector3::new(0.2, -0.3, 0.5);
        assert_relative_eq!(g.stencil(&x).apply(&vals, 1, 0), x.norm(), epsilon = 1e-12);
        let ones = vec![1.0; g.n_x()];
        let s = g.stencil(&Vector3::new(0.01, 0.02, -0.99));
        assert_relative_eq!(s.apply(&ones, 1, 0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn mass_projection_zeroes_mass() {
        let g = PhaseGrid::new(ConvexDomain::unit_ball(), &GridSpec::default()).unwrap();
        let mut vals = vec![0.3; g.n_x() * g.n_v()];
        g.project_mass(&mut vals, 0.0);
        assert!(g.mass(&vals).abs() < 1e-12);
    }

    #[test]
    fn refined_space_keeps_old_shells() {
        let s = GridSpec::default().refined_space();
        for r in GridSpec::default().shells {
            assert!(s.shells.contains(&r));
        }
        assert!(s.validate().is_ok());
    }
}
