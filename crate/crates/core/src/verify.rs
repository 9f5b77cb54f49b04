//! Lemma-level numerical checks.
//!
//! Each check returns a [`LemmaCheck`]: the values of a sup-ratio or integral
//! over strictly increasing refinement levels, a bounded/diverging
//! classification by a fixed rule, auxiliary metrics and a pass flag.
//! "≲" statements carry no constants, so they are verified as finiteness plus
//! stability of the measured ratio under refinement.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{incoming_wall_flux, remainder_incoming_mass, remainder_mass_flux, WallProfile, WallRule, WallTemperature};
use crate::collision::{
    grad_kernel, k1, k2, kernel_bound_samples, kernel_gradient_bound_check, kernel_weight_bound_check, nu_bounds,
    nu_lower_constant, KernelParams, NuQuadrature, SingularRule,
};
use crate::error::{KineticError, Result};
use crate::geometry::{random_unit, ConvexDomain, PhasePoint};
use crate::kinetic_weight::{ChiCutoff, KineticWeight, ALPHA_DEGENERACY};
use crate::quadrature::{orthonormal_frame, GaussRule, SphereRule, TanhSinh};
use crate::reduce::{par_map, par_max, par_sum};

/// `last / first` above this marks a sequence as diverging.
pub const DIVERGENCE_RATIO: f64 = 1.5;
/// Relative change between the last two levels accepted as stabilized.
pub const STABILIZATION: f64 = 0.10;
/// Factor required of the `o(1)` variants of the nonlocal estimate.
pub const SMALLNESS_FACTOR: f64 = 0.25;
/// Relative drift allowed under quadrature doubling.
pub const REFINEMENT_DRIFT: f64 = 0.25;

/// Refinement trend of a sequence of values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Bounded,
    Diverging,
}

/// `Diverging` iff `|last| > 1.5·|first|`.
pub fn classify(values: &[f64]) -> Trend {
    match (values.first(), values.last()) {
        (Some(a), Some(b)) if values.len() >= 2 && (b.abs() > DIVERGENCE_RATIO * a.abs() || !b.is_finite()) => {
            Trend::Diverging
        }
        _ => Trend::Bounded,
    }
}

/// One verified lemma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub id: String,
    pub samples: usize,
    pub parameters: BTreeMap<String, f64>,
    /// Strictly increasing refinement levels.
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub trend: Trend,
    pub metrics: BTreeMap<String, f64>,
    pub pass: bool,
}

impl LemmaCheck {
    fn new(id: &str, samples: usize, levels: Vec<f64>, values: Vec<f64>) -> Self {
        assert!(levels.windows(2).all(|w| w[0] < w[1]), "refinement levels must increase");
        assert_eq!(levels.len(), values.len());
        let trend = classify(&values);
        Self {
            id: id.to_string(),
            samples,
            parameters: BTreeMap::new(),
            levels,
            values,
            trend,
            metrics: BTreeMap::new(),
            pass: false,
        }
    }

    fn param(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    /// Relative change between the last two values.
    pub fn last_change(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        rel_change(self.values[n - 2], self.values[n - 1])
    }

    /// Largest relative change between consecutive values.
    pub fn max_drift(&self) -> f64 {
        self.values.windows(2).map(|w| rel_change(w[0], w[1])).fold(0.0, f64::max)
    }
}

fn rel_change(a: f64, b: f64) -> f64 {
    (b - a).abs() / b.abs().max(a.abs()).max(1e-300)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Phase points for sampled checks.
#[derive(Debug, Clone, Copy)]
struct Sample {
    x: Vector3<f64>,
    v: Vector3<f64>,
}

/// Direction with elevation `β` above the tangent plane of normal `n`.
fn tilted(n: &Vector3<f64>, beta: f64, psi: f64) -> Vector3<f64> {
    let (t1, t2) = orthonormal_frame(n);
    n * beta.sin() + (t1 * psi.cos() + t2 * psi.sin()) * beta.cos()
}

/// Uniform interior samples with speeds in `[s_lo, s_hi]`.
fn uniform_samples(domain: &ConvexDomain, n: usize, s_lo: f64, s_hi: f64, r: &mut ChaCha8Rng) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let x = domain.sample_interior(r);
            let v = r.random_range(s_lo..s_hi) * random_unit(r);
            Sample { x, v }
        })
        .collect()
}

/// Near-grazing samples: distance `d ∈ [d_lo, d_hi]` below the wall (log-uniform in the
/// reference ball) and velocity elevation `|β| ∈ [b_lo, b_hi]` above the local tangent plane.
fn grazing_samples(
    domain: &ConvexDomain,
    n: usize,
    (d_lo, d_hi): (f64, f64),
    (b_lo, b_hi): (f64, f64),
    (s_lo, s_hi): (f64, f64),
    r: &mut ChaCha8Rng,
) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let u = random_unit(r);
            let d = 10f64.powf(r.random_range(d_lo.log10()..d_hi.log10()));
            let x = domain.from_reference(&((1.0 - d) * u));
            let nrm = domain.normal(&domain.from_reference(&u));
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            let beta = sign * 10f64.powf(r.random_range(b_lo.log10()..b_hi.log10()));
            let psi = r.random_range(0.0..2.0 * PI);
            let v = r.random_range(s_lo..s_hi) * tilted(&nrm, beta, psi);
            Sample { x, v }
        })
        .collect()
}

/// Exit time by plain bisection on `s ↦ ξ(x − s v)`, independent of the production solver.
pub fn bisection_exit_time(domain: &ConvexDomain, x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let f = |s: f64| domain.xi(&(x - s * v));
    let mut hi = 1.0 / v.norm();
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn test_domains() -> Vec<(&'static str, ConvexDomain)> {
    vec![
        ("ball", ConvexDomain::unit_ball()),
        ("ellipsoid", ConvexDomain::ellipsoid(1.5, 1.0, 0.75).expect("valid axes")),
    ]
}

/// `backward_exit` against the bisection oracle on `n` samples per domain.
pub fn exit_oracle_check(n: usize, seed: u64) -> LemmaCheck {
    let mut worst: f64 = 0.0;
    let mut check = LemmaCheck::new("exit_oracle", 0, vec![], vec![]);
    for (k, (name, d)) in test_domains().into_iter().enumerate() {
        let mut r = rng(seed, 10 + k as u64);
        let mut s = uniform_samples(&d, n / 2, 0.05, 6.0, &mut r);
        s.extend(grazing_samples(&d, n - n / 2, (1e-8, 1e-2), (1e-6, 1e-1), (0.05, 6.0), &mut r));
        let err = par_max(s.len(), |i| {
            let p = s[i];
            let t = d.backward_exit(&PhasePoint::new(p.x, p.v)).map(|e| e.t_b).unwrap_or(f64::INFINITY);
            let t_ref = bisection_exit_time(&d, &p.x, &p.v);
            (t - t_ref).abs() / t_ref.max(1.0)
        });
        check.metric(&format!("{name}_max_error"), err);
        check.samples += s.len();
        worst = worst.max(err);
    }
    check.pass = worst <= 1e-10;
    check.param("tolerance", 1e-10)
}

fn fd_gradients(d: &ConvexDomain, x: &Vector3<f64>, v: &Vector3<f64>, h: f64) -> Option<[Matrix3<f64>; 2]> {
    let exit = |x: Vector3<f64>, v: Vector3<f64>| d.backward_exit(&PhasePoint::new(x, v)).ok();
    let mut out = [Matrix3::zeros(), Matrix3::zeros()];
    for (which, m) in out.iter_mut().enumerate() {
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let (p, q) = if which == 0 { (exit(x + e, *v)?, exit(x - e, *v)?) } else { (exit(*x, v + e)?, exit(*x, v - e)?) };
            let dx = (p.x_b - q.x_b) / (2.0 * h);
            for j in 0..3 {
                m[(i, j)] = dx[j];
            }
        }
    }
    Some(out)
}

fn fd_tb_gradients(d: &ConvexDomain, x: &Vector3<f64>, v: &Vector3<f64>, h: f64) -> Option<[Vector3<f64>; 2]> {
    let tb = |x: Vector3<f64>, v: Vector3<f64>| d.backward_exit(&PhasePoint::new(x, v)).ok().map(|e| e.t_b);
    let mut gx = Vector3::zeros();
    let mut gv = Vector3::zeros();
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = h;
        gx[i] = (tb(x + e, *v)? - tb(x - e, *v)?) / (2.0 * h);
        gv[i] = (tb(*x, v + e)? - tb(*x, v - e)?) / (2.0 * h);
    }
    Some([gx, gv])
}

/// Analytic `∇t_b`, `∇x_b` against central differences away from grazing.
pub fn exit_gradient_check(n: usize, seed: u64) -> LemmaCheck {
    let mut check = LemmaCheck::new("exit_gradients", 0, vec![], vec![]);
    let mut worst: f64 = 0.0;
    for (k, (name, d)) in test_domains().into_iter().enumerate() {
        let mut r = rng(seed, 20 + k as u64);
        let mut s = Vec::with_capacity(n);
        while s.len() < n {
            let c = uniform_samples(&d, 1, 0.5, 3.0, &mut r)[0];
            if d.xi(&c.x) > -0.05 {
                continue;
            }
            let e = d.backward_exit(&PhasePoint::new(c.x, c.v)).expect("interior sample");
            if e.normal_b.dot(&c.v).abs() > 0.1 * c.v.norm() {
                s.push(c);
            }
        }
        let err = par_max(s.len(), |i| {
            let p = s[i];
            let g = match d.exit_gradients(&PhasePoint::new(p.x, p.v)) {
                Ok(g) => g,
                Err(_) => return f64::INFINITY,
            };
            let h = 1e-5;
            let (Some([mx, mv]), Some([tx, tv])) = (fd_gradients(&d, &p.x, &p.v, h), fd_tb_gradients(&d, &p.x, &p.v, h)) else {
                return f64::INFINITY;
            };
            let rel_v = |a: Vector3<f64>, b: Vector3<f64>| (a - b).norm() / b.norm().max(1e-3);
            let rel_m = |a: Matrix3<f64>, b: Matrix3<f64>| (a - b).norm() / b.norm().max(1e-3);
            rel_v(tx, g.grad_x_tb)
                .max(rel_v(tv, g.grad_v_tb))
                .max(rel_m(mx, g.grad_x_xb))
                .max(rel_m(mv, g.grad_v_xb))
        });
        check.metric(&format!("{name}_max_rel_error"), err);
        check.samples += s.len();
        worst = worst.max(err);
    }
    check.pass = worst <= 1e-5;
    check.param("tolerance", 1e-5)
}

/// Analytic `det ∂(𝐱₁, 𝐱₂, t_b)/∂v` against a central-difference determinant.
pub fn exit_jacobian_check(n: usize, seed: u64) -> LemmaCheck {
    let mut check = LemmaCheck::new("exit_jacobian", 0, vec![], vec![]);
    let mut worst: f64 = 0.0;
    for (k, (name, d)) in test_domains().into_iter().enumerate() {
        let mut r = rng(seed, 30 + k as u64);
        let mut jobs = Vec::with_capacity(n);
        while jobs.len() < n {
            let c = uniform_samples(&d, 1, 0.5, 3.0, &mut r)[0];
            let e = d.backward_exit(&PhasePoint::new(c.x, c.v)).expect("interior sample");
            if e.normal_b.dot(&c.v).abs() < 0.1 * c.v.norm() {
                continue;
            }
            let offset = 0.15 * random_unit(&mut r);
            let anchor = d.project_to_boundary(&(e.x_b + offset));
            jobs.push((c, anchor));
        }
        let err = par_max(jobs.len(), |i| {
            let (p, anchor) = jobs[i];
            let Ok(chart) = d.chart_at(&anchor) else { return f64::INFINITY };
            let Ok(analytic) = d.exit_jacobian(&p.x, &p.v, &chart) else { return f64::INFINITY };
            let map = |v: Vector3<f64>| -> Option<Vector3<f64>> {
                let e = d.backward_exit(&PhasePoint::new(p.x, v)).ok()?;
                let (a, b) = chart.boundary_coordinates(&e.x_b).ok()?;
                Some(Vector3::new(a, b, e.t_b))
            };
            let h = 1e-6 * p.v.norm();
            let mut jac = Matrix3::zeros();
            for j in 0..3 {
                let mut e = Vector3::zeros();
                e[j] = h;
                let (Some(a), Some(b)) = (map(p.v + e), map(p.v - e)) else { return f64::INFINITY };
                jac.set_column(j, &((a - b) / (2.0 * h)));
            }
            (jac.determinant().abs() - analytic).abs() / analytic
        });
        check.metric(&format!("{name}_max_rel_error"), err);
        check.samples += jobs.len();
        worst = worst.max(err);
    }
    check.pass = worst < 1e-4;
    check.param("tolerance", 1e-4)
}

/// The `χ` invariants on `n` uniform points of `[0, 4]`.
pub fn chi_cutoff_check(n: usize) -> LemmaCheck {
    let chi = ChiCutoff;
    let s: Vec<f64> = (0..n).map(|i| 4.0 * i as f64 / (n - 1) as f64).collect();
    let mut identity: f64 = 0.0;
    let mut plateau: f64 = 0.0;
    let mut decrease: f64 = 0.0;
    let mut slope: f64 = 0.0;
    let mut homogeneity = f64::NEG_INFINITY;
    for (i, &x) in s.iter().enumerate() {
        let c = chi.value(x);
        if x <= ChiCutoff::LOWER {
            identity = identity.max((c - x).abs());
        }
        if x >= ChiCutoff::UPPER {
            plateau = plateau.max((c - 1.0).abs());
        }
        if i > 0 {
            decrease = decrease.max(chi.value(s[i - 1]) - c);
        }
        slope = slope.max(chi.derivative(x).abs());
        homogeneity = homogeneity.max(x * chi.derivative(x) - 4.0 * c);
    }
    let mut check = LemmaCheck::new("chi_cutoff", n, vec![], vec![]);
    check.metric("identity_defect", identity);
    check.metric("plateau_defect", plateau);
    check.metric("max_decrease", decrease);
    check.metric("max_slope", slope);
    check.metric("max_s_dchi_minus_4chi", homogeneity);
    check.pass = identity == 0.0 && plateau <= 1e-15 && decrease <= 0.0 && slope <= 1.0 + 1e-12 && homogeneity <= 0.0;
    check
}

/// Fitted `C` in `e^{−C|v|s} ≤ α(x−sv,v)/α(x,v) ≤ e^{C|v|s}` over `n` samples
/// (half near grazing), plus the directional-derivative bound.
pub fn velocity_lemma_check(domain: &ConvexDomain, n: usize, seed: u64) -> LemmaCheck {
    let kw = KineticWeight::new(*domain);
    let fit = |dom: &ConvexDomain, stream: u64| -> (f64, f64, f64, f64, usize) {
        let kw = KineticWeight::new(*dom);
        let mut r = rng(seed, stream);
        let mut s = uniform_samples(dom, n / 2, 0.05, 6.0, &mut r);
        s.extend(grazing_samples(dom, n - n / 2, (1e-8, 1e-2), (1e-6, 1e-1), (0.05, 6.0), &mut r));
        let fracs: Vec<f64> = (0..s.len()).map(|_| r.random::<f64>()).collect();
        let rows = par_map(s.len(), |i| {
            let p = s[i];
            let Ok(e) = dom.backward_exit(&PhasePoint::new(p.x, p.v)) else { return None };
            let t = fracs[i] * e.t_b;
            let speed = p.v.norm();
            let c = kw.velocity_lemma_ratio(&p.x, &p.v, t).ok().map(|q| KineticWeight::velocity_lemma_exponent(q, speed, t));
            let ct = kw.velocity_lemma_ratio_tilde(&p.x, &p.v, t).ok().map(|q| KineticWeight::velocity_lemma_exponent(q, speed, t));
            let a = kw.alpha(&p.x, &p.v).ok()?;
            let at = kw.alpha_tilde(&p.x, &p.v).ok()?;
            let upper = (a - 1.0).max(a - at).max(0.0);
            // d/ds α(x − s v, v) at s = 0 where χ is the identity.
            // Away from the rounding floor of α̃ so the difference quotient is meaningful.
            let dir = if (1e-4..0.5).contains(&at) && e.t_b * speed > 1e-3 {
                let h = 1e-6 * (e.t_b.min(1.0));
                let fwd = kw.alpha(&(p.x - h * p.v), &p.v).ok()?;
                let bwd = kw.alpha(&(p.x + h * p.v), &p.v).ok();
                let der = match bwd {
                    Some(b) if dom.contains(&(p.x + h * p.v)) => (fwd - b) / (2.0 * h),
                    _ => (fwd - a) / h,
                };
                Some(der.abs() / (speed * a))
            } else {
                None
            };
            Some((c, ct, upper, dir))
        });
        let mut c_max: f64 = 0.0;
        let mut ct_max: f64 = 0.0;
        let mut upper: f64 = 0.0;
        let mut dir: f64 = 0.0;
        let mut used = 0;
        for (c, ct, u, dr) in rows.into_iter().flatten() {
            if let Some(c) = c {
                c_max = c_max.max(c);
                used += 1;
            }
            if let Some(ct) = ct {
                ct_max = ct_max.max(ct);
            }
            upper = upper.max(u);
            if let Some(dr) = dr {
                dir = dir.max(dr);
            }
        }
        (c_max, ct_max, upper, dir, used)
    };
    let (c, ct, upper, dir, used) = fit(&kw.domain, 40);
    let quartic = ConvexDomain::quartic_ball(1.0).expect("valid kappa");
    let (cq, ctq, _, dirq, _) = fit(&quartic, 41);
    let mut check = LemmaCheck::new("velocity_lemma", n, vec![], vec![]);
    check.metric("fitted_c", c);
    check.metric("fitted_c_tilde", ct);
    check.metric("alpha_upper_bound_defect", upper);
    check.metric("directional_c", dir);
    check.metric("quartic_fitted_c", cq);
    check.metric("quartic_fitted_c_tilde", ctq);
    check.metric("quartic_directional_c", dirq);
    check.metric("samples_used", used as f64);
    let finite = |x: f64| x.is_finite() && x < 1e6;
    check.pass = [c, ct, dir, cq, ctq, dirq].into_iter().all(finite) && upper <= 1e-15 && used * 10 >= n * 9;
    check
}

/// Kernel symmetry to machine precision.
pub fn kernel_symmetry_check(params: &KernelParams, n: usize, seed: u64) -> LemmaCheck {
    let s = kernel_bound_samples(n, 8.0, seed);
    let err = par_max(s.len(), |i| {
        let (v, u) = s[i];
        let a = grad_kernel(&v, &u, params).unwrap_or(0.0);
        let b = grad_kernel(&u, &v, params).unwrap_or(0.0);
        (a - b).abs() / (k1(&v, &u, params).abs() + k2(&v, &u, params).abs()).max(1e-300)
    });
    let mut check = LemmaCheck::new("kernel_symmetry", n, vec![], vec![]);
    check.metric("max_rel_asymmetry", err);
    check.pass = err <= 1e-14;
    check
}

/// Sup-ratio of a kernel bound at `n` and `2n` samples.
fn kernel_bound(id: &str, params: &KernelParams, n: usize, seed: u64, f: fn(&KernelParams, &[(Vector3<f64>, Vector3<f64>)]) -> f64) -> LemmaCheck {
    let small = f(params, &kernel_bound_samples(n, 8.0, seed));
    let large = f(params, &kernel_bound_samples(2 * n, 8.0, seed));
    let mut check = LemmaCheck::new(id, 3 * n, vec![n as f64, 2.0 * n as f64], vec![small, large]);
    let change = check.last_change();
    check.metric("doubling_change", change);
    check.pass = small.is_finite() && large.is_finite() && change < 0.05 && check.trend == Trend::Bounded;
    check
}

/// `|k| e^{θ̃(|v|²−|u|²)} ≲ k_ϱ̃` stability under sample doubling.
pub fn kernel_weight_check(params: &KernelParams, n: usize, seed: u64) -> LemmaCheck {
    kernel_bound("kernel_weight_bound", params, n, seed, kernel_weight_bound_check)
}

/// `|∇_v k| e^{θ̃(|v|²−|u|²)} ≲ ⟨v⟩² k_ϱ̃/|v−u|` stability under sample doubling.
pub fn kernel_gradient_check(params: &KernelParams, n: usize, seed: u64) -> LemmaCheck {
    kernel_bound("kernel_gradient_bound", params, n, seed, kernel_gradient_bound_check)
}

/// `c₁ ≤ ν(v)/⟨v⟩ ≤ c₂` on `|v| ≤ v_max`, from quadrature of `ν`.
pub fn nu_bounds_check(v_max: f64, n: usize) -> Result<LemmaCheck> {
    let (lo, hi) = nu_bounds(v_max, n, &NuQuadrature::default())?;
    let mut check = LemmaCheck::new("nu_bounds", n, vec![], vec![]).param("v_max", v_max);
    check.metric("c1", lo);
    check.metric("c2", hi);
    check.metric("c1_closed_form", nu_lower_constant(v_max));
    check.pass = lo > 0.0 && hi.is_finite() && hi >= lo;
    Ok(check)
}

/// Flux normalization `∫_{n·v<0} M_W|n·v| = 1` for several temperatures and the
/// vanishing incoming mass of the steady remainder.
pub fn wall_flux_check(domain: &ConvexDomain, n_points: usize, seed: u64) -> Result<LemmaCheck> {
    let rule = WallRule::default();
    let mut r = rng(seed, 50);
    let points: Vec<Vector3<f64>> = (0..n_points).map(|_| domain.sample_boundary(&mut r)).collect();
    let temps = [0.8, 1.0, 1.2];
    let mut check = LemmaCheck::new("wall_flux", n_points * temps.len(), vec![], vec![]);
    let mut worst: f64 = 0.0;
    for t in temps {
        let tw = WallTemperature { base: t, epsilon: 0.0, profile: WallProfile::Isothermal };
        let mut err: f64 = 0.0;
        for x in &points {
            err = err.max((incoming_wall_flux(domain, x, &tw, &rule)? - 1.0).abs());
        }
        check.metric(&format!("flux_error_t{t:.1}"), err);
        worst = worst.max(err);
    }
    let tw = WallTemperature::linear_x3(0.05);
    let mut rem: f64 = 0.0;
    let mut net: f64 = 0.0;
    for x in &points {
        rem = rem.max(remainder_incoming_mass(domain, x, &tw, &rule)?.abs());
        net = net.max(remainder_mass_flux(domain, x, &tw, &rule)?.abs());
    }
    check.metric("remainder_incoming_mass", rem);
    check.metric("remainder_net_flux", net);
    check.pass = worst <= 1e-6 && rem <= 1e-6;
    Ok(check)
}

/// Quadrature levels of the nonlocal-to-local integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlocalQuadrature {
    /// Tanh–sinh density in the time variable.
    pub n_time: usize,
    pub n_radial: usize,
    pub n_polar: usize,
    pub n_azimuth: usize,
}

impl Default for NonlocalQuadrature {
    fn default() -> Self {
        Self { n_time: 1, n_radial: 8, n_polar: 6, n_azimuth: 6 }
    }
}

impl NonlocalQuadrature {
    pub fn doubled(&self) -> Self {
        Self {
            n_time: 2 * self.n_time,
            n_radial: 2 * self.n_radial,
            n_polar: 2 * self.n_polar,
            n_azimuth: 2 * self.n_azimuth,
        }
    }
}

/// Which part of the nonlocal integral to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
enum NonlocalPart {
    Full,
    /// Time window `t − s ≤ ε`.
    ShortTime(f64),
    /// Velocities `|u| < δ`.
    SmallBall(f64),
}

/// Radius of the Gaussian `u`-integration around `v`.
const NONLOCAL_RADIUS: f64 = 12.0;

/// `∫_{|u|<δ} e^{−ϱ|v−u|²} / (|v−u| α(y,u)) du`.
fn small_ball_integral(kw: &KineticWeight, y: &Vector3<f64>, v: &Vector3<f64>, varrho: f64, delta: f64, q: &NonlocalQuadrature) -> f64 {
    let g = |u: &Vector3<f64>| {
        let a = kw.alpha(y, u).unwrap_or(0.0);
        if a < ALPHA_DEGENERACY {
            0.0
        } else {
            (-varrho * (v - u).norm_squared()).exp() / a
        }
    };
    if v.norm() > 2.0 * delta {
        let dirs = SphereRule::new(q.n_polar, q.n_azimuth, &Vector3::z());
        let gr = GaussRule::new(q.n_radial);
        let mut total = 0.0;
        for (r, wr) in gr.on(0.0, delta) {
            for (d, wd) in dirs.dirs.iter().zip(&dirs.weights) {
                let u = r * d;
                total += wr * wd * r * r * g(&u) / (v - u).norm();
            }
        }
        total
    } else {
        let rule = SingularRule { n_radial: q.n_radial, n_polar: q.n_polar, n_azimuth: q.n_azimuth, r_max: v.norm() + delta };
        rule.integrate_singular(v, |u| if u.norm() < delta { g(u) } else { 0.0 })
    }
}

fn nonlocal_value(
    kw: &KineticWeight,
    p: &Sample,
    rate: f64,
    varrho: f64,
    part: NonlocalPart,
    q: &NonlocalQuadrature,
    time_rule: &TanhSinh,
) -> Result<f64> {
    let e = kw.domain.backward_exit(&PhasePoint::new(p.x, p.v))?;
    let beta = rate * (1.0 + p.v.norm_squared()).sqrt();
    let t_max = match part {
        NonlocalPart::ShortTime(eps) => eps.min(e.t_b),
        _ => e.t_b,
    };
    let urule = SingularRule { n_radial: q.n_radial, n_polar: q.n_polar, n_azimuth: q.n_azimuth, r_max: NONLOCAL_RADIUS };
    // σ = 1 − e^{−βτ} absorbs the exponential factor.
    let sigma_max = -(-beta * t_max).exp_m1();
    let inner = |tau: f64| -> f64 {
        let y = p.x - tau * p.v;
        match part {
            NonlocalPart::SmallBall(delta) => small_ball_integral(kw, &y, &p.v, varrho, delta, q),
            _ => urule.integrate_singular(&p.v, |u| {
                let a = kw.alpha(&y, u).unwrap_or(0.0);
                if a < ALPHA_DEGENERACY {
                    0.0
                } else {
                    (-varrho * (p.v - u).norm_squared()).exp() / a
                }
            }),
        }
    };
    Ok(time_rule.integrate(0.0, sigma_max, |sigma| inner(-(-sigma).ln_1p() / beta) / beta))
}

/// Samples for the nonlocal check: half uniform, half near grazing.
fn nonlocal_samples(domain: &ConvexDomain, n: usize, v_max: f64, seed: u64) -> Vec<Sample> {
    let mut r = rng(seed, 60);
    let mut s = uniform_samples(domain, n / 2, 0.05, v_max, &mut r);
    s.extend(grazing_samples(domain, n - n / 2, (1e-6, 1e-2), (1e-4, 1e-1), (0.05, v_max), &mut r));
    s
}

/// `sup I·α(x,v)` of the nonlocal-to-local integral at three quadrature levels, and the
/// short-time (`ε`) and small-ball (`δ`) variants at the finest level.
pub fn nonlocal_to_local_check(
    domain: &ConvexDomain,
    params: &KernelParams,
    samples: usize,
    v_max: f64,
    base: NonlocalQuadrature,
    seed: u64,
) -> Result<LemmaCheck> {
    let kw = KineticWeight::new(*domain);
    let rate = nu_lower_constant(v_max);
    let s = nonlocal_samples(domain, samples, v_max, seed);
    let alphas: Vec<f64> = s.iter().map(|p| kw.alpha(&p.x, &p.v)).collect::<Result<_>>()?;
    // Sup and the speed at which it is attained.
    let sup = |part: NonlocalPart, q: &NonlocalQuadrature| -> Result<(f64, f64)> {
        let time_rule = TanhSinh::new(q.n_time);
        let vals = par_map(s.len(), |i| nonlocal_value(&kw, &s[i], rate, params.varrho, part, q, &time_rule).map(|x| x * alphas[i]));
        let mut m = (0.0, 0.0);
        for (i, v) in vals.into_iter().enumerate() {
            let v = v?;
            if v > m.0 {
                m = (v, s[i].v.norm());
            }
        }
        Ok(m)
    };
    let levels = [base, base.doubled(), base.doubled().doubled()];
    let mut values = Vec::new();
    let mut full_speed = 0.0;
    for q in &levels {
        let (v, speed) = sup(NonlocalPart::Full, q)?;
        values.push(v);
        full_speed = speed;
    }
    let finest = levels[2];
    let eps = 0.01;
    let delta = 0.05;
    let (short, short_speed) = sup(NonlocalPart::ShortTime(eps), &finest)?;
    let (small, _) = sup(NonlocalPart::SmallBall(delta), &finest)?;
    let full = *values.last().expect("three levels");
    let mut check = LemmaCheck::new("nonlocal_to_local", samples, vec![1.0, 2.0, 4.0], values)
        .param("rate_c", rate)
        .param("varrho", params.varrho)
        .param("epsilon", eps)
        .param("delta", delta)
        .param("v_max", v_max);
    let drift = check.max_drift();
    check.metric("max_drift", drift);
    check.metric("full_sup_speed", full_speed);
    check.metric("short_time_sup", short);
    check.metric("short_time_sup_speed", short_speed);
    check.metric("small_ball_sup", small);
    check.metric("short_time_ratio", short / full);
    check.metric("small_ball_ratio", small / full);
    check.pass = full.is_finite()
        && drift < REFINEMENT_DRIFT
        && short <= SMALLNESS_FACTOR * full
        && small <= SMALLNESS_FACTOR * full;
    Ok(check)
}

/// Resolution of the two sides of the change-of-variables identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovQuadrature {
    pub surface_polar: usize,
    pub surface_azimuth: usize,
    pub dir_polar: usize,
    pub dir_azimuth: usize,
    pub n_radial: usize,
    pub n_s: usize,
    pub volume_radial: usize,
    pub volume_polar: usize,
    pub volume_azimuth: usize,
}

impl Default for CovQuadrature {
    fn default() -> Self {
        Self {
            surface_polar: 12,
            surface_azimuth: 24,
            dir_polar: 12,
            dir_azimuth: 24,
            n_radial: 12,
            n_s: 4,
            volume_radial: 12,
            volume_polar: 8,
            volume_azimuth: 16,
        }
    }
}

/// Bounded test function with a velocity cutoff.
pub struct CovTestFunction<'a> {
    pub name: &'a str,
    pub g: &'a (dyn Fn(&Vector3<f64>, &Vector3<f64>) -> f64 + Sync),
    /// `g = 0` for `|v| > v_cut`.
    pub v_cut: f64,
}

/// Boundary points `x = D u` with surface weights `det D |D⁻¹u| dσ(u)`.
fn surface_rule(domain: &ConvexDomain, n_polar: usize, n_azimuth: usize, axis: &Vector3<f64>, c_lo: f64, c_hi: f64) -> Vec<(Vector3<f64>, f64)> {
    let ax = domain.axes();
    let det = ax.x * ax.y * ax.z;
    let rule = SphereRule::cap(n_polar, n_azimuth, axis, c_lo, c_hi);
    rule.dirs
        .iter()
        .zip(&rule.weights)
        .map(|(u, w)| (domain.from_reference(u), w * det * u.component_div(&ax).norm()))
        .collect()
}

/// `∬_{Ω×ℝ³} g` by product quadrature over the reference ball and the velocity ball.
pub fn cov_volume_side(domain: &ConvexDomain, g: &CovTestFunction, q: &CovQuadrature) -> f64 {
    let ax = domain.axes();
    let det = ax.x * ax.y * ax.z;
    let dirs = SphereRule::new(q.volume_polar, q.volume_azimuth, &Vector3::z());
    let radial: Vec<(f64, f64)> = GaussRule::new(q.volume_radial).on(0.0, 1.0).collect();
    let speeds: Vec<(f64, f64)> = GaussRule::new(q.n_radial).on(0.0, g.v_cut).collect();
    let ys: Vec<(Vector3<f64>, f64)> = radial
        .iter()
        .flat_map(|&(r, wr)| dirs.dirs.iter().zip(&dirs.weights).map(move |(d, wd)| (domain.from_reference(&(r * d)), wr * wd * r * r * det)))
        .collect();
    let vs: Vec<(Vector3<f64>, f64)> = speeds
        .iter()
        .flat_map(|&(r, wr)| dirs.dirs.iter().zip(&dirs.weights).map(move |(d, wd)| (r * d, wr * wd * r * r)))
        .collect();
    par_sum(ys.len(), |i| {
        let (y, wy) = ys[i];
        wy * vs.iter().map(|(v, wv)| wv * (g.g)(&y, v)).sum::<f64>()
    })
}

/// `∫_{γ₊}∫₀^{t_b} g(x−sv,v)|n·v| ds dv dS_x`.
pub fn cov_boundary_side(domain: &ConvexDomain, g: &CovTestFunction, q: &CovQuadrature) -> Result<f64> {
    let pts = surface_rule(domain, q.surface_polar, q.surface_azimuth, &Vector3::z(), -1.0, 1.0);
    let speeds: Vec<(f64, f64)> = GaussRule::new(q.n_radial).on(0.0, g.v_cut).collect();
    let sgl = GaussRule::new(q.n_s);
    let vals = par_map(pts.len(), |i| -> Result<f64> {
        let (x, wx) = pts[i];
        let n = domain.normal(&x);
        let dirs = SphereRule::cap(q.dir_polar, q.dir_azimuth, &n, 0.0, 1.0);
        let mut total = 0.0;
        for (w, ww) in dirs.dirs.iter().zip(&dirs.weights) {
            // t_b(x, ω) from an interior point on the chord avoids the rounding of ξ(x).
            let inner = x - 1e-9 * w;
            let t_unit = domain.backward_exit(&PhasePoint::new(inner, *w))?.t_b + 1e-9;
            for &(r, wr) in &speeds {
                let v = r * w;
                let tb = t_unit / r;
                let line: f64 = sgl.on(0.0, tb).map(|(s, ws)| ws * (g.g)(&(x - s * v), &v)).sum();
                total += ww * wr * r * r * line * r * n.dot(w);
            }
        }
        Ok(wx * total)
    });
    vals.into_iter().sum()
}

/// `∫_{∂Ω, n·ω>0} t_b(x,ω) (n(x)·ω) dS_x`, which equals `|Ω|` for every unit `ω`.
pub fn chord_identity(domain: &ConvexDomain, omega: &Vector3<f64>, n_polar: usize, n_azimuth: usize) -> Result<f64> {
    let omega = omega.normalize();
    let axis = omega.component_div(&domain.axes());
    let pts = surface_rule(domain, n_polar, n_azimuth, &axis, 0.0, 1.0);
    let vals = par_map(pts.len(), |i| -> Result<f64> {
        let (x, w) = pts[i];
        let c = domain.normal(&x).dot(&omega);
        if c <= 0.0 {
            return Ok(0.0);
        }
        let inner = x - 1e-9 * omega;
        let tb = domain.backward_exit(&PhasePoint::new(inner, omega))?.t_b + 1e-9;
        Ok(w * tb * c)
    });
    vals.into_iter().sum()
}

/// Change-of-variables identity on the three canonical test functions and the
/// per-direction chord identity, at base and doubled resolution.
pub fn cov_identity_check(domain: &ConvexDomain, q: &CovQuadrature) -> Result<LemmaCheck> {
    let vol = domain.volume();
    let ball_one = |_: &Vector3<f64>, v: &Vector3<f64>| if v.norm() <= 1.0 { 1.0 } else { 0.0 };
    let d = *domain;
    let xi_sq = move |y: &Vector3<f64>, v: &Vector3<f64>| d.xi(y).powi(2) * (-v.norm_squared()).exp();
    let smooth = move |y: &Vector3<f64>, v: &Vector3<f64>| (1.0 + (y.x * v.y - 2.0 * y.z).cos()) * (-0.5 * (v - Vector3::new(0.3, 0.0, -0.2)).norm_squared()).exp();
    let funcs = [
        CovTestFunction { name: "unit_velocity_ball", g: &ball_one, v_cut: 1.0 },
        CovTestFunction { name: "xi_squared_gaussian", g: &xi_sq, v_cut: 6.0 },
        CovTestFunction { name: "shifted_gaussian", g: &smooth, v_cut: 7.0 },
    ];
    let fine = CovQuadrature {
        surface_polar: 2 * q.surface_polar,
        surface_azimuth: 2 * q.surface_azimuth,
        dir_polar: 2 * q.dir_polar,
        dir_azimuth: 2 * q.dir_azimuth,
        n_radial: 2 * q.n_radial,
        n_s: 2 * q.n_s,
        volume_radial: 2 * q.volume_radial,
        volume_polar: 2 * q.volume_polar,
        volume_azimuth: 2 * q.volume_azimuth,
    };
    let mut worst: f64 = 0.0;
    let mut values = vec![0.0, 0.0];
    let mut check = LemmaCheck::new("cov_identity", 0, vec![1.0, 2.0], vec![0.0, 0.0]);
    for f in &funcs {
        let volume = if f.name == "unit_velocity_ball" { vol * 4.0 * PI / 3.0 } else { cov_volume_side(domain, f, &fine) };
        let mut last = 0.0;
        for (k, qq) in [*q, fine].iter().enumerate() {
            let b = cov_boundary_side(domain, f, qq)?;
            values[k] += b;
            last = b;
        }
        let rel = (last - volume).abs() / volume.abs();
        check.metric(&format!("{}_rel_discrepancy", f.name), rel);
        worst = worst.max(rel);
    }
    for (k, omega) in [Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 2.0, -0.5)].iter().enumerate() {
        let c = chord_identity(domain, omega, 2 * q.surface_polar, 2 * q.surface_azimuth)?;
        let rel = (c - vol).abs() / vol;
        check.metric(&format!("chord_identity_{k}"), c);
        check.metric(&format!("chord_identity_{k}_rel_discrepancy"), rel);
        worst = worst.max(rel);
    }
    check.values = values;
    check.trend = classify(&check.values);
    check.metric("max_rel_discrepancy", worst);
    check.pass = worst < 1e-3;
    Ok(check)
}

/// Resolution of the singular `W^{1,p}` integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1pQuadrature {
    pub surface_polar: usize,
    pub surface_azimuth: usize,
    pub n_phi: usize,
    /// Gauss–Legendre nodes per decade of the graded variables.
    pub per_decade: usize,
    pub volume_polar: usize,
    pub volume_azimuth: usize,
    pub n_psi: usize,
}

impl Default for W1pQuadrature {
    fn default() -> Self {
        Self { surface_polar: 8, surface_azimuth: 16, n_phi: 16, per_decade: 6, volume_polar: 4, volume_azimuth: 8, n_psi: 8 }
    }
}

/// Speeds below this are excluded from the `W^{1,p}` integral at every level; the
/// dichotomy concerns the grazing tube, and for `p ≥ 3` the small-speed ball
/// would diverge on its own.
pub const W1P_SPEED_CUT: f64 = 1e-3;

/// Below this value of `n(x)·ω` the bounded cofactor of the boundary integrand is
/// frozen, since boundary points carry rounding of order `1e−16` in `ξ`.
const COFACTOR_FLOOR: f64 = 1e-4;

/// GL nodes on `[a, b]` in `ln` coordinates, one panel per decade; weights include the Jacobian.
fn log_panels(a: f64, b: f64, per_decade: usize) -> Vec<(f64, f64)> {
    let gl = GaussRule::new(per_decade);
    let (la, lb) = (a.ln(), b.ln());
    let panels = ((lb - la) / 10f64.ln()).ceil().max(1.0) as usize;
    let step = (lb - la) / panels as f64;
    let mut out = Vec::new();
    for k in 0..panels {
        let lo = la + k as f64 * step;
        for (t, w) in gl.on(lo, lo + step) {
            let x = t.exp();
            out.push((x, w * x));
        }
    }
    out
}

/// `∫_{r_cut}^∞ r^{2−p} e^{−pθ̃r²} dr`.
pub fn w1p_radial_factor(p: f64, theta_tilde: f64, per_decade: usize) -> f64 {
    let r_hi = (60.0 / (p * theta_tilde)).sqrt();
    log_panels(W1P_SPEED_CUT, r_hi, per_decade)
        .into_iter()
        .map(|(r, w)| w * r.powf(2.0 - p) * (-p * theta_tilde * r * r).exp())
        .sum()
}

/// Angular part `∫_Ω∫_{S²} |n(x_b)·ω|^{−p} 1{n(x_f)·ω > h} dω dx` in boundary-parametrized form
/// `∫_{∂Ω}∫_{n·ω>h} t_b (n·ω) |n(x_b)·ω|^{−p} dω dS`.
pub fn w1p_boundary_angular(domain: &ConvexDomain, p: f64, h: f64, q: &W1pQuadrature) -> Result<f64> {
    let pts = surface_rule(domain, q.surface_polar, q.surface_azimuth, &Vector3::z(), -1.0, 1.0);
    let cs = log_panels(h, 1.0, q.per_decade);
    let dphi = 2.0 * PI / q.n_phi as f64;
    let vals = par_map(pts.len(), |i| -> Result<f64> {
        let (x, wx) = pts[i];
        let n = domain.normal(&x);
        let mut total = 0.0;
        for k in 0..q.n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            let mut cof_floor = None;
            for &(c, wc) in &cs {
                let ce = c.max(COFACTOR_FLOOR);
                let cofactor = match (ce > c, cof_floor) {
                    (true, Some(v)) => v,
                    _ => {
                        let w = tilted(&n, ce.asin(), phi);
                        let inner = x - 1e-12 * w;
                        let e = domain.backward_exit(&PhasePoint::new(inner, w))?;
                        let tb = e.t_b + 1e-12;
                        let v = (tb / ce) * (ce / e.normal_b.dot(&w).abs()).powf(p);
                        if ce > c {
                            cof_floor = Some(v);
                        }
                        v
                    }
                };
                total += wc * dphi * c.powf(2.0 - p) * cofactor;
            }
        }
        Ok(wx * total)
    });
    vals.into_iter().sum()
}

/// The same angular integral evaluated directly over `Ω × S²`, with the
/// interior point graded toward the wall and the direction graded toward the
/// tangent plane of the nearest wall point.
pub fn w1p_direct_angular(domain: &ConvexDomain, p: f64, h: f64, q: &W1pQuadrature) -> f64 {
    let ax = domain.axes();
    let det = ax.x * ax.y * ax.z;
    let dirs = SphereRule::new(q.volume_polar, q.volume_azimuth, &Vector3::z());
    let ds = log_panels(1e-15, 1.0, q.per_decade);
    let dpsi = 2.0 * PI / q.n_psi as f64;
    let mut jobs = Vec::new();
    for (u, wu) in dirs.dirs.iter().zip(&dirs.weights) {
        for &(d, wd) in &ds {
            jobs.push((*u, wu * wd * det * (1.0 - d).powi(2), d));
        }
    }
    let d0 = *domain;
    par_sum(jobs.len(), |i| {
        let (u, w, d) = jobs[i];
        let y = d0.from_reference(&((1.0 - d) * u));
        let nrm = d0.normal(&d0.from_reference(&u));
        let mut total = 0.0;
        for k in 0..q.n_psi {
            let psi = (k as f64 + 0.5) * dpsi;
            for sign in [1.0, -1.0] {
                let omega = |beta: f64| tilted(&nrm, sign * beta, psi);
                let c_exit = |beta: f64| {
                    let om = omega(beta);
                    d0.forward_exit(&PhasePoint::new(y, om)).map(|e| e.normal_b.dot(&om)).unwrap_or(0.0)
                };
                let top = 0.5 * PI;
                let start = if c_exit(0.0) > h {
                    0.0
                } else if c_exit(top) <= h {
                    continue;
                } else {
                    let (mut lo, mut hi) = (0.0, top);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if c_exit(mid) > h {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    hi
                };
                let span = top - start;
                for (g, wg) in log_panels(1e-14, 1.0, q.per_decade) {
                    let beta = start + span * g;
                    let om = omega(beta);
                    let Ok(e) = d0.backward_exit(&PhasePoint::new(y, om)) else { continue };
                    let cb = e.normal_b.dot(&om).abs();
                    if cb == 0.0 {
                        continue;
                    }
                    total += span * wg * dpsi * beta.cos() * cb.powf(-p);
                }
            }
        }
        w * total
    })
}

fn w1p_id(p: f64) -> String {
    format!("w1p_p{p:.1}")
}

/// Default cut levels `h_ℓ = 10^{−2ℓ}`, `ℓ = 3..6`.
pub fn default_w1p_levels() -> Vec<u32> {
    vec![3, 4, 5, 6]
}

/// `J_h(p) = ∬ w_θ̃^{−p}/|n(x_b)·v|^p` outside the grazing tube `n(x_f)·v̂ < h_ℓ`,
/// `h_ℓ = 10^{−2ℓ}`, by the boundary-parametrized route, with a direct
/// evaluation at the first level for consistency.
pub fn w1p_singular_integral(domain: &ConvexDomain, params: &KernelParams, p: f64, levels: &[u32], q: &W1pQuadrature) -> Result<LemmaCheck> {
    if !(p > 0.0) {
        return Err(KineticError::InvalidParameter(format!("w1p exponent must be positive, got {p}")));
    }
    let radial = w1p_radial_factor(p, params.theta_tilde, 2 * q.per_decade);
    let mut values = Vec::new();
    for &l in levels {
        let h = 10f64.powi(-2 * l as i32);
        values.push(radial * w1p_boundary_angular(domain, p, h, q)?);
    }
    let h0 = 10f64.powi(-2 * levels[0] as i32);
    let direct = radial * w1p_direct_angular(domain, p, h0, q);
    let mut check = LemmaCheck::new(&w1p_id(p), 0, levels.iter().map(|&l| l as f64).collect(), values)
        .param("p", p)
        .param("theta_tilde", params.theta_tilde)
        .param("speed_cut", W1P_SPEED_CUT);
    let consistency = rel_change(direct, check.values[0]);
    check.metric("direct_first_level", direct);
    check.metric("direct_boundary_rel_diff", consistency);
    check.metric("last_level_change", check.last_change());
    check.metric("last_over_first", check.values.last().unwrap() / check.values[0]);
    let expected = if p < 3.0 { Trend::Bounded } else { Trend::Diverging };
    check.pass = check.trend == expected && consistency < 0.05;
    Ok(check)
}

/// `sup t_b|v|²/|n(x_b)·v|` over interior and wall samples at `n` and `2n` samples.
pub fn tb_bound_check(domain: &ConvexDomain, n: usize, seed: u64) -> LemmaCheck {
    let ratio = |s: &[Sample]| {
        par_max(s.len(), |i| {
            let p = s[i];
            match domain.backward_exit(&PhasePoint::new(p.x, p.v)) {
                Ok(e) => e.t_b * p.v.norm_squared() / e.normal_b.dot(&p.v).abs(),
                Err(_) => f64::INFINITY,
            }
        })
    };
    let draw = |count: usize, stream: u64| {
        let mut r = rng(seed, stream);
        let mut s = uniform_samples(domain, count / 2, 0.05, 6.0, &mut r);
        // Points just inside the wall, moving outward: t_b is nearly a full chord.
        for p in grazing_samples(domain, count - count / 2, (1e-10, 1e-6), (1e-3, 1.5), (0.05, 6.0), &mut r) {
            let nrm = domain.normal(&domain.project_to_boundary(&p.x));
            let v = if nrm.dot(&p.v) < 0.0 { -p.v } else { p.v };
            s.push(Sample { x: p.x, v });
        }
        s
    };
    let a = ratio(&draw(n, 70));
    let b = ratio(&draw(2 * n, 71));
    let mut check = LemmaCheck::new("tb_bound", 3 * n, vec![n as f64, 2.0 * n as f64], vec![a, b]);
    let e1 = Vector3::new(1.0, 0.0, 0.0);
    if let Ok(e) = domain.backward_exit(&PhasePoint::new((1.0 - 1e-12) * e1.component_mul(&domain.axes()), e1)) {
        check.metric("diametral_ratio", e.t_b / e.normal_b.dot(&e1).abs());
    }
    check.metric("sup_ratio", b);
    let is_ball = domain.axes() == Vector3::new(1.0, 1.0, 1.0);
    check.pass = b.is_finite() && check.trend == Trend::Bounded && (!is_ball || (b <= 2.0 + 1e-9 && b >= 2.0 - 1e-3));
    check
}

/// `|n(x)·v| / |n(x_b(x,v))·v|` over wall points `x` with outgoing `v`, including a
/// near-grazing stratum `n(x)·v̂ ∈ [10⁻³, 10⁻¹]`.
pub fn normal_equivalence_check(domain: &ConvexDomain, n: usize, seed: u64) -> LemmaCheck {
    let mut r = rng(seed, 80);
    let mut jobs = Vec::with_capacity(n);
    for i in 0..n {
        let x = domain.sample_boundary(&mut r);
        let nrm = domain.normal(&x);
        let c = if i % 2 == 0 { r.random_range(0.1..1.0) } else { 10f64.powf(r.random_range(-3.0..-1.0)) };
        let psi = r.random_range(0.0..2.0 * PI);
        jobs.push((x, tilted(&nrm, c.asin(), psi), i % 2 == 1));
    }
    let rows = par_map(jobs.len(), |i| {
        let (x, v, grazing) = jobs[i];
        let inner = x - 1e-12 * v;
        let e = domain.backward_exit(&PhasePoint::new(inner, v)).ok()?;
        Some((domain.normal(&x).dot(&v).abs() / e.normal_b.dot(&v).abs(), grazing))
    });
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut g_lo = f64::INFINITY;
    let mut g_hi: f64 = 0.0;
    for (ratio, grazing) in rows.into_iter().flatten() {
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        if grazing {
            g_lo = g_lo.min(ratio);
            g_hi = g_hi.max(ratio);
        }
    }
    let c = hi.max(1.0 / lo);
    let mut check = LemmaCheck::new("normal_equivalence", n, vec![], vec![]);
    check.metric("min_ratio", lo);
    check.metric("max_ratio", hi);
    check.metric("grazing_min_ratio", g_lo);
    check.metric("grazing_max_ratio", g_hi);
    check.metric("equivalence_constant", c);
    let is_ball = domain.axes() == Vector3::new(1.0, 1.0, 1.0);
    check.pass = if is_ball { (hi - 1.0).abs() <= 1e-9 && (lo - 1.0).abs() <= 1e-9 } else { c.is_finite() && c < 10.0 };
    check
}

/// Integrand variant of the second-derivative obstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstructionVariant {
    /// `k(v,u)/|n·u|`.
    Inverse,
    /// `k(v,u)/|n·u|^{1/2}`.
    SqrtContrast,
    /// A bounded bump that vanishes on `n·u = 0`, divided by `|n·u|`.
    BumpContrast,
}

impl ObstructionVariant {
    fn id(&self) -> &'static str {
        match self {
            Self::Inverse => "second_derivative_obstruction",
            Self::SqrtContrast => "second_derivative_contrast_sqrt",
            Self::BumpContrast => "second_derivative_contrast_bump",
        }
    }
}

/// Velocity cutoff of the obstruction integrals.
pub const OBSTRUCTION_V_MAX: f64 = 12.0;

/// `G(a) = ∫_{plane n·u = a, |u| ≤ V} g(u) du_⊥` in polar coordinates centred at the
/// in-plane projection of `v`.
fn plane_integral<G: Fn(&Vector3<f64>) -> f64>(n: &Vector3<f64>, v: &Vector3<f64>, a: f64, g: &G, n_rho: usize, n_phi: usize) -> f64 {
    let (t1, t2) = orthonormal_frame(n);
    let center = v - n * n.dot(v) + n * a;
    let gr = GaussRule::new(n_rho);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut total = 0.0;
    // Two radial panels: the kernel's 1/|v−u| scale and its Gaussian tail.
    for (lo, hi) in [(0.0, 1.0), (1.0, OBSTRUCTION_V_MAX + v.norm())] {
        for (rho, wr) in gr.on(lo, hi) {
            for k in 0..n_phi {
                let phi = (k as f64 + 0.5) * dphi;
                let u = center + rho * (t1 * phi.cos() + t2 * phi.sin());
                if u.norm() <= OBSTRUCTION_V_MAX {
                    total += wr * dphi * rho * g(&u);
                }
            }
        }
    }
    total
}

/// `D_ℓ = ∫_{|u|≤V, |n(x_b)·u| > 2^{−ℓ}} k(v,u) / |n(x_b)·u|^q du` for `ℓ` in `levels`.
pub fn second_derivative_obstruction(
    domain: &ConvexDomain,
    params: &KernelParams,
    x: &Vector3<f64>,
    v: &Vector3<f64>,
    levels: &[u32],
    variant: ObstructionVariant,
) -> Result<LemmaCheck> {
    let e = domain.backward_exit(&PhasePoint::new(*x, *v))?;
    if e.grazing {
        return Err(KineticError::GrazingSingularity { normal_speed: e.normal_b.dot(v).abs() });
    }
    let n = e.normal_b;
    let vn = n.dot(v);
    let bump_radius = 1.0 + vn.abs();
    let integrand = |u: &Vector3<f64>| -> f64 {
        let a = n.dot(u).abs();
        match variant {
            ObstructionVariant::Inverse => grad_kernel(v, u, params).unwrap_or(0.0) / a,
            ObstructionVariant::SqrtContrast => grad_kernel(v, u, params).unwrap_or(0.0) / a.sqrt(),
            ObstructionVariant::BumpContrast => (1.0 - (u - v).norm_squared() / (bump_radius * bump_radius)).max(0.0).powi(2),
        }
    };
    let l_max = *levels.iter().max().expect("at least one level");
    // Breakpoints: dyadic in |a| down to the finest cut, |v·n|, and the tail.
    let mut cuts: Vec<f64> = (0..=l_max).map(|l| 0.5f64.powi(l as i32)).collect();
    cuts.extend([2.0, 4.0, 8.0, OBSTRUCTION_V_MAX]);
    if vn.abs() > 0.5f64.powi(l_max as i32) && vn.abs() < OBSTRUCTION_V_MAX {
        cuts.push(vn.abs());
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let gl = GaussRule::new(10);
    let panels: Vec<(f64, f64)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
    let contributions = par_map(panels.len(), |i| {
        let (lo, hi) = panels[i];
        gl.on(lo, hi)
            .map(|(a, wa)| wa * (plane_integral(&n, v, a, &integrand, 24, 32) + plane_integral(&n, v, -a, &integrand, 24, 32)))
            .sum::<f64>()
    });
    let values: Vec<f64> = levels
        .iter()
        .map(|&l| {
            let h = 0.5f64.powi(l as i32);
            panels.iter().zip(&contributions).filter(|((lo, _), _)| *lo >= h).map(|(_, c)| c).sum()
        })
        .collect();
    let mut check = LemmaCheck::new(variant.id(), 0, levels.iter().map(|&l| l as f64).collect(), values);
    check = check.param("x_norm", x.norm()).param("v_norm", v.norm()).param("normal_speed", vn);
    let diffs: Vec<f64> = check.values.windows(2).map(|w| w[1] - w[0]).collect();
    let tail = &diffs[diffs.len().saturating_sub(4)..];
    let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    let spread = tail.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max) / mean.abs().max(1e-300);
    check.metric("tail_increment_mean", mean);
    check.metric("tail_increment_spread", spread);
    check.metric("last_over_first", check.values.last().unwrap() / check.values[0]);
    check.pass = match variant {
        ObstructionVariant::Inverse => check.trend == Trend::Diverging && mean > 0.0 && spread <= 0.3,
        _ => check.trend == Trend::Bounded && check.last_change() < STABILIZATION,
    };
    Ok(check)
}

/// Default levels `ℓ = 4..20` of the obstruction cut `2^{−ℓ}`.
pub fn default_obstruction_levels() -> Vec<u32> {
    (4..=20).collect()
}

/// Sample sizes and resolutions of the full verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub seed: u64,
    pub geometry_samples: usize,
    pub jacobian_samples: usize,
    pub chi_grid: usize,
    pub velocity_lemma_samples: usize,
    pub kernel_samples: usize,
    pub nonlocal_samples: usize,
    pub nonlocal_quadrature: NonlocalQuadrature,
    pub v_max: f64,
    pub cov_quadrature: CovQuadrature,
    pub w1p_exponents: Vec<f64>,
    pub w1p_levels: Vec<u32>,
    pub w1p_quadrature: W1pQuadrature,
    pub boundary_samples: usize,
    pub obstruction_levels: Vec<u32>,
    pub obstruction_x: [f64; 3],
    pub obstruction_v: [f64; 3],
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            seed: 7,
            geometry_samples: 10_000,
            jacobian_samples: 1_000,
            chi_grid: 10_000,
            velocity_lemma_samples: 100_000,
            kernel_samples: 20_000,
            nonlocal_samples: 128,
            nonlocal_quadrature: NonlocalQuadrature::default(),
            v_max: 6.0,
            cov_quadrature: CovQuadrature::default(),
            w1p_exponents: vec![2.0, 2.5, 2.9, 3.2, 3.5],
            w1p_levels: default_w1p_levels(),
            w1p_quadrature: W1pQuadrature::default(),
            boundary_samples: 2_000,
            obstruction_levels: default_obstruction_levels(),
            obstruction_x: [0.3, 0.1, -0.2],
            obstruction_v: [0.4, -0.8, 0.5],
        }
    }
}

/// Identifiers accepted by [`run_lemma`], in report order.
pub fn lemma_ids(settings: &VerifySettings) -> Vec<String> {
    let mut ids: Vec<String> = [
        "chi_cutoff",
        "cov_identity",
        "exit_gradients",
        "exit_jacobian",
        "exit_oracle",
        "kernel_gradient_bound",
        "kernel_symmetry",
        "kernel_weight_bound",
        "nonlocal_to_local",
        "normal_equivalence",
        "nu_bounds",
        "second_derivative_contrast_bump",
        "second_derivative_contrast_sqrt",
        "second_derivative_obstruction",
        "tb_bound",
        "velocity_lemma",
        "wall_flux",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    ids.extend(settings.w1p_exponents.iter().map(|&p| w1p_id(p)));
    ids.sort();
    ids
}

/// Run one check by id.
pub fn run_lemma(id: &str, domain: &ConvexDomain, params: &KernelParams, s: &VerifySettings) -> Result<LemmaCheck> {
    let obstruction = |variant| {
        second_derivative_obstruction(
            domain,
            params,
            &Vector3::from(s.obstruction_x),
            &Vector3::from(s.obstruction_v),
            &s.obstruction_levels,
            variant,
        )
    };
    match id {
        "chi_cutoff" => Ok(chi_cutoff_check(s.chi_grid)),
        "cov_identity" => cov_identity_check(domain, &s.cov_quadrature),
        "exit_gradients" => Ok(exit_gradient_check(s.jacobian_samples, s.seed)),
        "exit_jacobian" => Ok(exit_jacobian_check(s.jacobian_samples, s.seed)),
        "exit_oracle" => Ok(exit_oracle_check(s.geometry_samples, s.seed)),
        "kernel_gradient_bound" => Ok(kernel_gradient_check(params, s.kernel_samples, s.seed)),
        "kernel_symmetry" => Ok(kernel_symmetry_check(params, s.kernel_samples, s.seed)),
        "kernel_weight_bound" => Ok(kernel_weight_check(params, s.kernel_samples, s.seed)),
        "nonlocal_to_local" => nonlocal_to_local_check(domain, params, s.nonlocal_samples, s.v_max, s.nonlocal_quadrature, s.seed),
        "normal_equivalence" => Ok(normal_equivalence_check(domain, s.boundary_samples, s.seed)),
        "nu_bounds" => nu_bounds_check(8.0, 81),
        "second_derivative_contrast_bump" => obstruction(ObstructionVariant::BumpContrast),
        "second_derivative_contrast_sqrt" => obstruction(ObstructionVariant::SqrtContrast),
        "second_derivative_obstruction" => obstruction(ObstructionVariant::Inverse),
        "tb_bound" => Ok(tb_bound_check(domain, s.boundary_samples, s.seed)),
        "velocity_lemma" => Ok(velocity_lemma_check(domain, s.velocity_lemma_samples, s.seed)),
        "wall_flux" => wall_flux_check(domain, 16, s.seed),
        other => match other.strip_prefix("w1p_p").and_then(|p| p.parse::<f64>().ok()) {
            Some(p) => w1p_singular_integral(domain, params, p, &s.w1p_levels, &s.w1p_quadrature),
            None => Err(KineticError::InvalidParameter(format!("unknown lemma id `{other}`"))),
        },
    }
}

/// Every check, run concurrently and returned sorted by id.
pub fn verify_all(domain: &ConvexDomain, params: &KernelParams, s: &VerifySettings) -> Result<Vec<LemmaCheck>> {
    let ids = lemma_ids(s);
    let results = par_map(ids.len(), |i| run_lemma(&ids[i], domain, params, s));
    results.into_iter().collect()
}

/// Thresholds reported alongside the checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConventions {
    pub divergence_ratio: f64,
    pub stabilization: f64,
    pub smallness_factor: f64,
    pub refinement_drift: f64,
}

impl Default for ReportConventions {
    fn default() -> Self {
        Self {
            divergence_ratio: DIVERGENCE_RATIO,
            stabilization: STABILIZATION,
            smallness_factor: SMALLNESS_FACTOR,
            refinement_drift: REFINEMENT_DRIFT,
        }
    }
}
