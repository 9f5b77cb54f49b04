//! Hard-sphere collision frequency `ν`, Grad kernel `k = k₁ + k₂`, the
//! operators `K` and `Γ`, and numerical checks of the kernel bounds.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KineticError, Result};
use crate::geometry::random_unit;
use crate::quadrature::{orthonormal_frame, GaussRule, SphereRule, VelocityQuadrature};
use crate::reduce::{par_map, par_max, par_sum};

/// `μ(v) = e^{−|v|²/2} / 2π`.
pub fn mu(v: &Vector3<f64>) -> f64 {
    (-0.5 * v.norm_squared()).exp() / (2.0 * PI)
}

pub fn sqrt_mu(v: &Vector3<f64>) -> f64 {
    mu(v).sqrt()
}

/// `M_{1,0,T}(v) = e^{−|v|²/2T} / (2πT²)`.
pub fn maxwellian(v: &Vector3<f64>, temperature: f64) -> f64 {
    (-0.5 * v.norm_squared() / temperature).exp() / (2.0 * PI * temperature * temperature)
}

/// The flux-normalized Maxwellian family `{μ, M_{1,0,T}}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxwellianFamily;

impl MaxwellianFamily {
    pub fn mu(&self, v: &Vector3<f64>) -> f64 {
        mu(v)
    }

    pub fn wall(&self, v: &Vector3<f64>, temperature: f64) -> f64 {
        maxwellian(v, temperature)
    }

    /// `∫_{n·v<0} M_{1,0,T} |n·v| dv` by a half-space product rule with
    /// `n_polar × n_azimuth` angles and `n_radial` Gauss–Legendre radii on `[0, 12√T]`.
    pub fn wall_flux(&self, n: &Vector3<f64>, temperature: f64, n_polar: usize, n_azimuth: usize, n_radial: usize) -> f64 {
        let rule = crate::quadrature::HalfSpaceRule::new(&(-n), n_polar, n_azimuth, n_radial, 12.0 * temperature.sqrt());
        rule.integrate(|v| maxwellian(v, temperature) * n.dot(v).abs())
    }
}

/// Constants of the collision kernels and velocity weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Gaussian rate `ϱ ∈ (0, 1/8]`.
    pub varrho: f64,
    /// Rate `ϱ̃ < ϱ − θ̃/2`.
    pub varrho_tilde: f64,
    /// Exponent of `w = e^{θ|v|²}`, `θ ∈ (0, 1/4)`.
    pub theta: f64,
    /// Exponent of `w_θ̃ = e^{θ̃|v|²}`.
    pub theta_tilde: f64,
    pub c_k1: f64,
    pub c_k2: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { varrho: 0.125, varrho_tilde: 0.0625, theta: 0.1, theta_tilde: 0.015625, c_k1: -1.0, c_k2: 4.0 }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(KineticError::InvalidParameter(m.to_string()));
        if !(self.varrho > 0.0 && self.varrho <= 0.125) {
            return bad("varrho must lie in (0, 1/8]");
        }
        if !(self.theta_tilde > 0.0 && self.theta_tilde / 2.0 < self.varrho) {
            return bad("theta_tilde must satisfy 0 < theta_tilde/2 < varrho");
        }
        if !(self.varrho_tilde > 0.0 && self.varrho_tilde < self.varrho - self.theta_tilde / 2.0) {
            return bad("varrho_tilde must satisfy 0 < varrho_tilde < varrho - theta_tilde/2");
        }
        if !(self.theta > 0.0 && self.theta < 0.25) {
            return bad("theta must lie in (0, 1/4)");
        }
        if !(self.c_k1.is_finite() && self.c_k2.is_finite()) {
            return bad("kernel constants must be finite");
        }
        Ok(())
    }

    /// `w(v) = e^{θ|v|²}`.
    pub fn w(&self, v: &Vector3<f64>) -> f64 {
        (self.theta * v.norm_squared()).exp()
    }

    /// `w_θ̃(v) = e^{θ̃|v|²}`.
    pub fn w_tilde(&self, v: &Vector3<f64>) -> f64 {
        (self.theta_tilde * v.norm_squared()).exp()
    }
}

/// Closed form of `ν(v) = ∫|v−u| e^{−|u|²/2} du`.
pub fn nu_exact(v: &Vector3<f64>) -> f64 {
    let s = v.norm();
    let c = (2.0 * PI).powf(1.5);
    if s < 1e-6 {
        // Series: (|v| + 1/|v|) erf(|v|/√2) → √(2/π)(1 + |v|²/3) near 0.
        return c * (2.0 / PI).sqrt() * (2.0 + s * s / 3.0);
    }
    c * ((s + 1.0 / s) * libm::erf(s / 2f64.sqrt()) + (2.0 / PI).sqrt() * (-0.5 * s * s).exp())
}

/// `∫_{S²} |k·ω| dω = 2π|k|`.
pub fn abs_dot_sphere_integral(k: &Vector3<f64>) -> f64 {
    2.0 * PI * k.norm()
}

/// Quadrature for `ν`: spherical coordinates centred at `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuQuadrature {
    pub n_radial: usize,
    pub n_polar: usize,
    pub n_azimuth: usize,
}

impl Default for NuQuadrature {
    fn default() -> Self {
        Self { n_radial: 48, n_polar: 24, n_azimuth: 16 }
    }
}

fn nu_at_level(v: &Vector3<f64>, q: &NuQuadrature) -> f64 {
    let axis = if v.norm() > 1e-12 { v.normalize() } else { Vector3::z() };
    let dirs = SphereRule::new(q.n_polar, q.n_azimuth, &axis);
    let r_max = v.norm() + 14.0;
    let gr = GaussRule::new(q.n_radial);
    let mut total = 0.0;
    for (r, wr) in gr.on(0.0, r_max) {
        let mut shell = 0.0;
        for (d, wd) in dirs.dirs.iter().zip(&dirs.weights) {
            shell += wd * mu(&(v + r * d));
        }
        // |v−u| = r, ∫_{S²}|(v−u)·ω|dω = 2πr, du = r² dr dω.
        total += wr * r * r * abs_dot_sphere_integral(&(r * Vector3::x())) * shell;
    }
    total
}

/// `ν(v) = ∫∫ |(v−u)·ω| μ(u) dω du` with a refinement check.
pub fn nu(v: &Vector3<f64>, q: &NuQuadrature) -> Result<f64> {
    let coarse = nu_at_level(v, q);
    let fine = nu_at_level(
        v,
        &NuQuadrature { n_radial: 2 * q.n_radial, n_polar: 2 * q.n_polar, n_azimuth: 2 * q.n_azimuth },
    );
    let rel = (fine - coarse).abs() / fine.abs();
    if rel > 1e-5 {
        return Err(KineticError::QuadratureUnconverged { what: "nu".into(), rel_change: rel });
    }
    Ok(fine)
}

/// `k₁(v,u) = C_{k₁}|u−v| e^{−(|v|²+|u|²)/4}`.
pub fn k1(v: &Vector3<f64>, u: &Vector3<f64>, p: &KernelParams) -> f64 {
    p.c_k1 * (v - u).norm() * (-(v.norm_squared() + u.norm_squared()) / 4.0).exp()
}

/// `k₂(v,u) = C_{k₂} |u−v|^{−1} e^{−|u−v|²/8 − (|u|²−|v|²)²/(8|u−v|²)}`.
pub fn k2(v: &Vector3<f64>, u: &Vector3<f64>, p: &KernelParams) -> f64 {
    let r2 = (v - u).norm_squared();
    let d = u.norm_squared() - v.norm_squared();
    p.c_k2 / r2.sqrt() * (-r2 / 8.0 - d * d / (8.0 * r2)).exp()
}

/// Grad kernel `k = k₁ + k₂`.
pub fn grad_kernel(v: &Vector3<f64>, u: &Vector3<f64>, p: &KernelParams) -> Result<f64> {
    if (v - u).norm() < 1e-12 {
        return Err(KineticError::SingularPoint);
    }
    Ok(k1(v, u, p) + k2(v, u, p))
}

/// Analytic `∇_v k(v, u)`.
pub fn grad_v_kernel(v: &Vector3<f64>, u: &Vector3<f64>, p: &KernelParams) -> Result<Vector3<f64>> {
    let eta = v - u;
    let r2 = eta.norm_squared();
    let r = r2.sqrt();
    if r < 1e-12 {
        return Err(KineticError::SingularPoint);
    }
    let g1 = p.c_k1 * (-(v.norm_squared() + u.norm_squared()) / 4.0).exp() * (eta / r - r * v / 2.0);
    let d = u.norm_squared() - v.norm_squared();
    let grad_e = -eta / 4.0 + d * v / (2.0 * r2) + d * d * eta / (4.0 * r2 * r2);
    let g2 = k2(v, u, p) * (-eta / r2 + grad_e);
    Ok(g1 + g2)
}

/// `k_ϱ(v,u) = e^{−ϱ|v−u|²}/|v−u|`.
pub fn k_varrho(v: &Vector3<f64>, u: &Vector3<f64>, varrho: f64) -> f64 {
    let r2 = (v - u).norm_squared();
    (-varrho * r2).exp() / r2.sqrt()
}

/// Spherical product rule centred at the singular point `v`, radius `r_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularRule {
    pub n_radial: usize,
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub r_max: f64,
}

impl Default for SingularRule {
    fn default() -> Self {
        Self { n_radial: 40, n_polar: 32, n_azimuth: 16, r_max: 14.0 }
    }
}

impl SingularRule {
    pub fn refined(&self) -> Self {
        Self { n_radial: 2 * self.n_radial, n_polar: 2 * self.n_polar, n_azimuth: 2 * self.n_azimuth, ..*self }
    }

    /// `∫_{|u−v|<r_max} g(u) |u−v|^{-1} du` with `g` smooth; `g` receives `u`.
    pub fn integrate_singular<G: FnMut(&Vector3<f64>) -> f64>(&self, v: &Vector3<f64>, mut g: G) -> f64 {
        let axis = if v.norm() > 1e-12 { v.normalize() } else { Vector3::z() };
        let dirs = SphereRule::new(self.n_polar, self.n_azimuth, &axis);
        let gr = GaussRule::new(self.n_radial);
        let mut total = 0.0;
        for (r, wr) in gr.on(0.0, self.r_max) {
            for (d, wd) in dirs.dirs.iter().zip(&dirs.weights) {
                total += wr * wd * r * g(&(v + r * d));
            }
        }
        total
    }
}

/// `Kf(v) = ∫ k(v,u) f(u) du` in spherical coordinates centred at `v`.
pub fn apply_k_fn<F: Fn(&Vector3<f64>) -> f64>(f: F, v: &Vector3<f64>, p: &KernelParams, rule: &SingularRule) -> f64 {
    rule.integrate_singular(v, |u| {
        let r = (v - u).norm();
        if r == 0.0 {
            return 0.0;
        }
        r * (k1(v, u, p) + k2(v, u, p)) * f(u)
    })
}

/// `Kf(v)` with a refinement check at relative tolerance `tol`.
pub fn apply_k(
    f: &(dyn Fn(&Vector3<f64>) -> f64 + Sync),
    v: &Vector3<f64>,
    p: &KernelParams,
    rule: &SingularRule,
    tol: f64,
) -> Result<f64> {
    let coarse = apply_k_fn(f, v, p, rule);
    let fine = apply_k_fn(f, v, p, &rule.refined());
    let scale = fine.abs().max(1e-300);
    let rel = (fine - coarse).abs() / scale;
    if rel > tol {
        return Err(KineticError::QuadratureUnconverged { what: "K".into(), rel_change: rel });
    }
    Ok(fine)
}

/// `∫ k(v,u) du`.
pub fn kernel_row_integral(v: &Vector3<f64>, p: &KernelParams, rule: &SingularRule) -> f64 {
    apply_k_fn(|_| 1.0, v, p, rule)
}

/// Quadrature for `Γ`: `u` on a velocity product rule, `ω` on a hemisphere aligned with `v − u`.
#[derive(Debug, Clone)]
pub struct GammaRule {
    pub u: VelocityQuadrature,
    pub omega_polar: usize,
    pub omega_azimuth: usize,
}

impl GammaRule {
    pub fn new(u: VelocityQuadrature, omega_polar: usize, omega_azimuth: usize) -> Self {
        Self { u, omega_polar, omega_azimuth }
    }
}

/// `Γ(f,g)(v)` with the count of dropped out-of-range collisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaValue {
    pub value: f64,
    pub dropped: usize,
}

/// `Γ(f,g)(v) = ∫∫ |(v−u)·ω| √μ(u) [f(u′)g(v′) − f(u)g(v)] dω du`.
///
/// Post-collision pairs with `|u′|` or `|v′|` above the cutoff are dropped
/// and counted.
pub fn apply_gamma<F, G>(f: F, g: G, v: &Vector3<f64>, rule: &GammaRule) -> GammaValue
where
    F: Fn(&Vector3<f64>) -> f64,
    G: Fn(&Vector3<f64>) -> f64,
{
    let v_max = rule.u.v_max;
    let reference = SphereRule::cap(rule.omega_polar, rule.omega_azimuth, &Vector3::z(), 0.0, 1.0);
    let gv = g(v);
    let mut total = 0.0;
    let mut dropped = 0;
    for (u, wu) in rule.u.nodes.iter().zip(&rule.u.weights) {
        let eta = v - u;
        let r = eta.norm();
        if r == 0.0 {
            continue;
        }
        let axis = eta / r;
        let (t1, t2) = orthonormal_frame(&axis);
        let su = sqrt_mu(u);
        let loss = f(u) * gv;
        let mut inner = 0.0;
        for (d, wd) in reference.dirs.iter().zip(&reference.weights) {
            let omega = axis * d.z + t1 * d.x + t2 * d.y;
            let proj = eta.dot(&omega);
            let up = u + proj * omega;
            let vp = v - proj * omega;
            let gain = if up.norm() > v_max || vp.norm() > v_max {
                dropped += 1;
                0.0
            } else {
                f(&up) * g(&vp)
            };
            inner += wd * proj.abs() * (gain - loss);
        }
        // ω and −ω give the same collision: hemisphere counted twice.
        total += wu * su * 2.0 * inner;
    }
    GammaValue { value: total, dropped }
}

/// `Q(F,F)(v) = √μ Γ(F/√μ, F/√μ)(v)`.
pub fn collision_q<F: Fn(&Vector3<f64>) -> f64>(big_f: F, v: &Vector3<f64>, rule: &GammaRule) -> GammaValue {
    let h = |w: &Vector3<f64>| big_f(w) / sqrt_mu(w);
    let g = apply_gamma(h, h, v, rule);
    GammaValue { value: sqrt_mu(v) * g.value, dropped: g.dropped }
}

/// `Lf = −Q(μ,√μf)/√μ − Q(√μf,μ)/√μ` by direct five-dimensional quadrature.
pub fn linearized_q_direct<F: Fn(&Vector3<f64>) -> f64>(f: F, v: &Vector3<f64>, rule: &GammaRule) -> f64 {
    let reference = SphereRule::cap(rule.omega_polar, rule.omega_azimuth, &Vector3::z(), 0.0, 1.0);
    let smv = sqrt_mu(v);
    let fv = f(v);
    let mut total = 0.0;
    for (u, wu) in rule.u.nodes.iter().zip(&rule.u.weights) {
        let eta = v - u;
        let r = eta.norm();
        if r == 0.0 {
            continue;
        }
        let axis = eta / r;
        let (t1, t2) = orthonormal_frame(&axis);
        let mut inner = 0.0;
        for (d, wd) in reference.dirs.iter().zip(&reference.weights) {
            let omega = axis * d.z + t1 * d.x + t2 * d.y;
            let proj = eta.dot(&omega);
            let up = u + proj * omega;
            let vp = v - proj * omega;
            let q1 = mu(&up) * sqrt_mu(&vp) * f(&vp) - mu(u) * smv * fv;
            let q2 = sqrt_mu(&up) * f(&up) * mu(&vp) - sqrt_mu(u) * f(u) * mu(v);
            inner += wd * proj.abs() * (q1 + q2);
        }
        total += wu * 2.0 * inner;
    }
    -total / smv
}

/// Least-squares kernel constants with their relative fit residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub c_k1: f64,
    pub c_k2: f64,
    pub rel_residual: f64,
}

impl KernelConstants {
    /// Plain-text cache: one `key = value` per line, `#` comments allowed.
    pub fn to_kv(&self) -> String {
        format!(
            "# Grad kernel constants fitted against direct quadrature of L\nc_k1 = {:?}\nc_k2 = {:?}\nrel_residual = {:?}\n",
            self.c_k1, self.c_k2, self.rel_residual
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c1 = None;
        let mut c2 = None;
        let mut res = 0.0;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| KineticError::InvalidParameter(format!("malformed line '{line}'")))?;
            let val: f64 = v
                .trim()
                .parse()
                .map_err(|_| KineticError::InvalidParameter(format!("bad number in '{line}'")))?;
            match k.trim() {
                "c_k1" => c1 = Some(val),
                "c_k2" => c2 = Some(val),
                "rel_residual" => res = val,
                other => return Err(KineticError::InvalidParameter(format!("unknown key '{other}'"))),
            }
        }
        match (c1, c2) {
            (Some(c_k1), Some(c_k2)) => Ok(Self { c_k1, c_k2, rel_residual: res }),
            _ => Err(KineticError::InvalidParameter("c_k1 and c_k2 are required".into())),
        }
    }
}

/// Fit `(C_{k₁}, C_{k₂})` so that `ν f − ∫ k f` matches a direct quadrature of `Lf`
/// for the test family `e^{−a|v|²}` and `v₁e^{−|v|²/2}` on sample velocities `|v| ≤ 3`.
pub fn calibrate_kernel_constants(rule: &GammaRule, singular: &SingularRule) -> KernelConstants {
    let unit = KernelParams { c_k1: 1.0, c_k2: 1.0, ..KernelParams::default() };
    let tests: Vec<Box<dyn Fn(&Vector3<f64>) -> f64 + Sync>> = vec![
        Box::new(|v: &Vector3<f64>| (-v.norm_squared()).exp()),
        Box::new(|v: &Vector3<f64>| (-0.5 * v.norm_squared()).exp()),
        Box::new(|v: &Vector3<f64>| v.x * (-0.5 * v.norm_squared()).exp()),
    ];
    let velocities: Vec<Vector3<f64>> = [0.0, 0.6, 1.2, 1.8, 2.4, 3.0]
        .iter()
        .map(|&s| s * Vector3::new(0.48, 0.6, 0.64))
        .collect();
    let rows: Vec<(f64, f64, f64)> = par_map(tests.len() * velocities.len(), |idx| {
        let f = &tests[idx / velocities.len()];
        let v = &velocities[idx % velocities.len()];
        let target = nu_exact(v) * f(v) - linearized_q_direct(f, v, rule);
        let a1 = singular.integrate_singular(v, |u| (v - u).norm() * k1(v, u, &unit) * f(u));
        let a2 = singular.integrate_singular(v, |u| (v - u).norm() * k2(v, u, &unit) * f(u));
        (target, a1, a2)
    });
    let mut ata = Matrix2::zeros();
    let mut atb = Vector2::zeros();
    for &(t, a1, a2) in &rows {
        let a = Vector2::new(a1, a2);
        ata += a * a.transpose();
        atb += a * t;
    }
    let c = ata.lu().solve(&atb).unwrap_or_else(|| Vector2::new(f64::NAN, f64::NAN));
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, a1, a2) in &rows {
        num += (t - c.x * a1 - c.y * a2).powi(2);
        den += t * t;
    }
    KernelConstants { c_k1: c.x, c_k2: c.y, rel_residual: (num / den).sqrt() }
}

/// Mixed `(v, u)` samples in `|v|,|u| ≤ radius`: half uniform pairs, half
/// near-diagonal pairs with log-uniform offsets in `[1e−4, 1]`.
pub fn kernel_bound_samples(n: usize, radius: f64, seed: u64) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let ball = |rng: &mut ChaCha8Rng| radius * rng.random::<f64>().cbrt() * random_unit(rng);
    while out.len() < n {
        let v = ball(&mut rng);
        let u = if out.len() % 2 == 0 {
            ball(&mut rng)
        } else {
            let off = 10f64.powf(rng.random_range(-4.0..0.0));
            v + off * random_unit(&mut rng)
        };
        if u.norm() <= radius && (v - u).norm() > 1e-12 {
            out.push((v, u));
        }
    }
    out
}

/// `sup |k(v,u)| e^{θ̃(|v|²−|u|²)} / k_ϱ̃(v,u)` over the samples.
pub fn kernel_weight_bound_check(p: &KernelParams, samples: &[(Vector3<f64>, Vector3<f64>)]) -> f64 {
    par_max(samples.len(), |i| {
        let (v, u) = &samples[i];
        let k = k1(v, u, p) + k2(v, u, p);
        let w = (p.theta_tilde * (v.norm_squared() - u.norm_squared())).exp();
        let r = (k.abs() * w / k_varrho(v, u, p.varrho_tilde)).abs();
        if r.is_finite() {
            r
        } else {
            f64::INFINITY
        }
    })
}

/// `sup |∇_v k(v,u)| e^{θ̃(|v|²−|u|²)} / [(1+|v|²) k_ϱ̃(v,u)/|v−u|]` over the samples.
pub fn kernel_gradient_bound_check(p: &KernelParams, samples: &[(Vector3<f64>, Vector3<f64>)]) -> f64 {
    par_max(samples.len(), |i| {
        let (v, u) = &samples[i];
        let g = match grad_v_kernel(v, u, p) {
            Ok(g) => g.norm(),
            Err(_) => return f64::INFINITY,
        };
        let w = (p.theta_tilde * (v.norm_squared() - u.norm_squared())).exp();
        let rhs = (1.0 + v.norm_squared()) * k_varrho(v, u, p.varrho_tilde) / (v - u).norm();
        let r = g * w / rhs;
        if r.is_finite() {
            r
        } else {
            f64::INFINITY
        }
    })
}

/// `(min, max)` of `ν(v)/√(1+|v|²)` over `n` speeds in `[0, v_max]`.
pub fn nu_bounds(v_max: f64, n: usize, q: &NuQuadrature) -> Result<(f64, f64)> {
    let vals: Vec<Result<f64>> = par_map(n, |i| {
        let s = v_max * i as f64 / (n - 1) as f64;
        let v = s * Vector3::new(0.6, 0.0, 0.8);
        nu(&v, q).map(|x| x / (1.0 + s * s).sqrt())
    });
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for r in vals {
        let x = r?;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok((lo, hi))
}

/// Lower constant `c₁` in `ν(v) ≥ c₁⟨v⟩` on `|v| ≤ v_max`, from the closed form.
pub fn nu_lower_constant(v_max: f64) -> f64 {
    (0..=400)
        .map(|i| {
            let s = v_max * i as f64 / 400.0;
            nu_exact(&Vector3::new(s, 0.0, 0.0)) / (1.0 + s * s).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Sum of `f` over quadrature nodes, computed deterministically in parallel.
pub fn integrate_velocity<F: Fn(&Vector3<f64>) -> f64 + Sync>(q: &VelocityQuadrature, f: F) -> f64 {
    par_sum(q.len(), |j| q.weights[j] * f(&q.nodes[j]))
}
