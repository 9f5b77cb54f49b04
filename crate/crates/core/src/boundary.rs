//! Wall temperature, wall Maxwellian, diffuse reflection, the boundary
//! projection `P_γ` and the steady remainder `r`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::collision::{maxwellian, mu, sqrt_mu};
use crate::error::{KineticError, Result};
use crate::geometry::{Chart, ConvexDomain};
use crate::quadrature::{GaussRule, HalfSpaceRule};

/// Boundary points must satisfy `|ξ| ≤ BOUNDARY_TOL`.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Named wall temperature profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallProfile {
    /// `T_W ≡ T₀`.
    Isothermal,
    /// `T_W = T₀ + ε x₃`.
    LinearX3,
}

/// `T_W(x) = T₀ + ε·profile(x)` on `∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallTemperature {
    pub base: f64,
    pub epsilon: f64,
    pub profile: WallProfile,
}

impl WallTemperature {
    pub fn isothermal() -> Self {
        Self { base: 1.0, epsilon: 0.0, profile: WallProfile::Isothermal }
    }

    pub fn linear_x3(epsilon: f64) -> Self {
        Self { base: 1.0, epsilon, profile: WallProfile::LinearX3 }
    }

    pub fn temperature(&self, x: &Vector3<f64>) -> f64 {
        match self.profile {
            WallProfile::Isothermal => self.base,
            WallProfile::LinearX3 => self.base + self.epsilon * x.z,
        }
    }

    /// Tangential gradient of `T_W` at `x` with outward normal `n`.
    pub fn tangential_gradient(&self, n: &Vector3<f64>) -> Vector3<f64> {
        match self.profile {
            WallProfile::Isothermal => Vector3::zeros(),
            WallProfile::LinearX3 => self.epsilon * (Vector3::z() - n * n.z),
        }
    }

    /// `sup |T_W − T₀|` over a domain with vertical extent `height`.
    pub fn sup_deviation(&self, height: f64) -> f64 {
        match self.profile {
            WallProfile::Isothermal => 0.0,
            WallProfile::LinearX3 => self.epsilon.abs() * height,
        }
    }

    /// `‖T_W − T₀‖_{C¹(∂Ω)}` (sup plus sup of the tangential gradient).
    pub fn c1_norm(&self, height: f64) -> f64 {
        match self.profile {
            WallProfile::Isothermal => 0.0,
            WallProfile::LinearX3 => self.epsilon.abs() * (height + 1.0),
        }
    }

    pub fn is_isothermal(&self) -> bool {
        self.profile == WallProfile::Isothermal || self.epsilon == 0.0
    }
}

fn check_boundary(domain: &ConvexDomain, x: &Vector3<f64>) -> Result<()> {
    let xi = domain.xi(x);
    if xi.abs() > BOUNDARY_TOL {
        return Err(KineticError::NotOnBoundary { xi });
    }
    Ok(())
}

/// `M_W(x,v) = e^{−|v|²/2T_W(x)} / (2π T_W(x)²)`.
pub fn wall_maxwellian(domain: &ConvexDomain, x: &Vector3<f64>, v: &Vector3<f64>, tw: &WallTemperature) -> Result<f64> {
    check_boundary(domain, x)?;
    Ok(maxwellian(v, tw.temperature(x)))
}

/// Half-space velocity rule used at walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallRule {
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub n_radial: usize,
    pub v_max: f64,
}

impl Default for WallRule {
    fn default() -> Self {
        Self { n_polar: 12, n_azimuth: 24, n_radial: 32, v_max: 10.0 }
    }
}

/// `∫_{n(x)·u>0} f(u) √μ(u) (n(x)·u) du` at a boundary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFlux {
    pub x: Vector3<f64>,
    pub value: f64,
}

/// Outgoing flux of `f` at `x ∈ ∂Ω`.
pub fn outgoing_flux<F: Fn(&Vector3<f64>) -> f64>(
    domain: &ConvexDomain,
    x: &Vector3<f64>,
    f: F,
    rule: &WallRule,
) -> Result<BoundaryFlux> {
    check_boundary(domain, x)?;
    let n = domain.normal(x);
    let h = HalfSpaceRule::new(&n, rule.n_polar, rule.n_azimuth, rule.n_radial, rule.v_max);
    let value = h.integrate(|u| f(u) * sqrt_mu(u) * n.dot(u));
    Ok(BoundaryFlux { x: *x, value })
}

/// Same flux in chart velocity coordinates `𝐯 = T v` with a Cartesian
/// Gauss–Legendre rule on `[−V, V]² × [0, V]`.
pub fn outgoing_flux_chart<F: Fn(&Vector3<f64>) -> f64>(
    chart: &Chart,
    xp: (f64, f64),
    f: F,
    n_nodes: usize,
    v_max: f64,
) -> f64 {
    let t = chart.t_matrix(&Vector3::new(xp.0, xp.1, 0.0));
    let tt = t.transpose();
    let g = GaussRule::new(n_nodes);
    let lat: Vec<(f64, f64)> = g.on(-v_max, v_max).collect();
    let nor: Vec<(f64, f64)> = g.on(0.0, v_max).collect();
    let mut total = 0.0;
    for &(a, wa) in &lat {
        for &(b, wb) in &lat {
            for &(c, wc) in &nor {
                let bv = Vector3::new(a, b, c);
                total += wa * wb * wc * f(&(tt * bv)) * sqrt_mu(&bv) * c;
            }
        }
    }
    total
}

/// Incoming value `(M_W/√μ)(v) · ∫_{n·u>0} f √μ (n·u) du` for `n(x)·v < 0`.
pub fn diffuse_reflect(domain: &ConvexDomain, flux: &BoundaryFlux, v: &Vector3<f64>, tw: &WallTemperature) -> Result<f64> {
    let n = domain.normal(&flux.x);
    let nv = n.dot(v);
    if nv >= 0.0 {
        return Err(KineticError::WrongSide { normal_speed: nv });
    }
    Ok(wall_maxwellian(domain, &flux.x, v, tw)? / sqrt_mu(v) * flux.value)
}

/// `P_γ f(x,v) = √μ(v) ∫_{n·u>0} f √μ (n·u) du`.
pub fn project_gamma(domain: &ConvexDomain, flux: &BoundaryFlux, v: &Vector3<f64>) -> Result<f64> {
    check_boundary(domain, &flux.x)?;
    Ok(sqrt_mu(v) * flux.value)
}

/// `r(x,v) = (M_W(x,v) − μ(v)) / √μ(v)`.
pub fn steady_remainder(domain: &ConvexDomain, x: &Vector3<f64>, v: &Vector3<f64>, tw: &WallTemperature) -> Result<f64> {
    Ok((wall_maxwellian(domain, x, v, tw)? - mu(v)) / sqrt_mu(v))
}

/// `∫_{n·v<0} M_{1,0,T} |n·v| dv` at `x ∈ ∂Ω`.
pub fn incoming_wall_flux(domain: &ConvexDomain, x: &Vector3<f64>, tw: &WallTemperature, rule: &WallRule) -> Result<f64> {
    check_boundary(domain, x)?;
    let n = domain.normal(x);
    let temp = tw.temperature(x);
    let h = HalfSpaceRule::new(&(-n), rule.n_polar, rule.n_azimuth, rule.n_radial, rule.v_max);
    Ok(h.integrate(|v| maxwellian(v, temp) * n.dot(v).abs()))
}

/// `∫ r √μ (n·v) dv` over all velocities at `x ∈ ∂Ω`, split into the two half-spaces.
pub fn remainder_mass_flux(domain: &ConvexDomain, x: &Vector3<f64>, tw: &WallTemperature, rule: &WallRule) -> Result<f64> {
    check_boundary(domain, x)?;
    let n = domain.normal(x);
    let mut total = 0.0;
    for dir in [n, -n] {
        let h = HalfSpaceRule::new(&dir, rule.n_polar, rule.n_azimuth, rule.n_radial, rule.v_max);
        total += h.integrate(|v| steady_remainder(domain, x, v, tw).unwrap_or(0.0) * sqrt_mu(v) * n.dot(v));
    }
    Ok(total)
}

/// Incoming-only remainder mass flux `∫_{n·v<0} r √μ |n·v| dv`, which vanishes by flux normalization.
pub fn remainder_incoming_mass(domain: &ConvexDomain, x: &Vector3<f64>, tw: &WallTemperature, rule: &WallRule) -> Result<f64> {
    check_boundary(domain, x)?;
    let n = domain.normal(x);
    let h = HalfSpaceRule::new(&(-n), rule.n_polar, rule.n_azimuth, rule.n_radial, rule.v_max);
    Ok(h.integrate(|v| steady_remainder(domain, x, v, tw).unwrap_or(0.0) * sqrt_mu(v) * n.dot(v).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn isothermal_wall_is_mu() {
        let d = ConvexDomain::unit_ball();
        let x = Vector3::new(0.0, 0.6, 0.8);
        let v = Vector3::new(0.3, -1.0, 0.2);
        let tw = WallTemperature::isothermal();
        assert_relative_eq!(wall_maxwellian(&d, &x, &v, &tw).unwrap(), mu(&v));
        assert_eq!(steady_remainder(&d, &x, &v, &tw).unwrap(), 0.0);
    }

    #[test]
    fn wall_requires_boundary_point() {
        let d = ConvexDomain::unit_ball();
        let r = wall_maxwellian(&d, &Vector3::new(0.1, 0.0, 0.0), &Vector3::x(), &WallTemperature::isothermal());
        assert!(matches!(r, Err(KineticError::NotOnBoundary { .. })));
    }

    #[test]
    fn hot_wall_has_heavier_tail() {
        let v = Vector3::new(4.0, 0.0, 0.0);
        assert!(maxwellian(&v, 1.05) > mu(&v));
    }

    #[test]
    fn reflection_rejects_outgoing_velocity() {
        let d = ConvexDomain::unit_ball();
        let flux = BoundaryFlux { x: Vector3::z(), value: 1.0 };
        let r = diffuse_reflect(&d, &flux, &Vector3::z(), &WallTemperature::isothermal());
        assert!(matches!(r, Err(KineticError::WrongSide { .. })));
    }

    #[test]
    fn zero_trace_reflects_to_zero() {
        let d = ConvexDomain::unit_ball();
        let x = Vector3::z();
        let flux = outgoing_flux(&d, &x, |_| 0.0, &WallRule::default()).unwrap();
        assert_eq!(flux.value, 0.0);
        let tw = WallTemperature::linear_x3(0.01);
        assert_eq!(diffuse_reflect(&d, &flux, &(-Vector3::z()), &tw).unwrap(), 0.0);
    }

    #[test]
    fn wall_flux_is_normalized_for_any_temperature() {
        let d = ConvexDomain::unit_ball();
        let x = Vector3::new(0.6, 0.0, 0.8);
        for eps in [0.0, 0.01, 0.2] {
            let tw = WallTemperature::linear_x3(eps);
            assert_relative_eq!(incoming_wall_flux(&d, &x, &tw, &WallRule::default()).unwrap(), 1.0, epsilon = 1e-8);
            assert!(remainder_incoming_mass(&d, &x, &tw, &WallRule::default()).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn chart_flux_matches_half_space_flux() {
        let d = ConvexDomain::ellipsoid(1.0, 0.8, 0.6).unwrap();
        let y = d.project_to_boundary(&Vector3::new(0.3, -0.2, 0.5));
        let chart = d.chart_at(&y).unwrap();
        let xp = chart.boundary_coordinates(&y).unwrap();
        let f = |u: &Vector3<f64>| (1.0 + 0.3 * u.x - 0.1 * u.y * u.z + 0.05 * u.norm_squared()) * sqrt_mu(u);
        let direct = outgoing_flux(&d, &y, f, &WallRule::default()).unwrap().value;
        let chart_value = outgoing_flux_chart(&chart, xp, f, 40, 10.0);
        assert_relative_eq!(direct, chart_value, max_relative = 1e-6);
    }
}
