//! Property tests for the structural invariants of each module.

use std::f64::consts::PI;

use kinetic_core::boundary::{diffuse_reflect, incoming_wall_flux, outgoing_flux, steady_remainder, WallProfile, WallRule, WallTemperature};
use kinetic_core::collision::{apply_gamma, grad_kernel, k1, k2, nu_exact, nu_lower_constant, GammaRule, KernelParams};
use kinetic_core::collision::sqrt_mu;
use kinetic_core::geometry::{ConvexDomain, PhasePoint};
use kinetic_core::kinetic_weight::{ChiCutoff, KineticWeight};
use kinetic_core::quadrature::{HalfSpaceRule, VelocityQuadrature};
use kinetic_core::reduce::par_sum;
use kinetic_core::solver::fit_decay_rate;
use kinetic_core::verify::{classify, Trend};
use nalgebra::Vector3;
use proptest::prelude::*;

fn unit(theta: f64, phi: f64) -> Vector3<f64> {
    let c = theta.cos();
    let s = theta.sin();
    Vector3::new(s * phi.cos(), s * phi.sin(), c)
}

fn direction() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0f64..1.0, 0.0f64..2.0 * PI).prop_map(|(c, phi)| unit(c.acos(), phi))
}

fn domain() -> impl Strategy<Value = ConvexDomain> {
    prop_oneof![
        Just(ConvexDomain::unit_ball()),
        Just(ConvexDomain::ellipsoid(1.5, 1.0, 0.75).unwrap()),
        Just(ConvexDomain::quartic_ball(1.0).unwrap()),
    ]
}

/// Interior point at reference radius `r` along `u`.
fn interior(d: &ConvexDomain, u: &Vector3<f64>, r: f64) -> Vector3<f64> {
    d.from_reference(&(r * u))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exit_point_lies_on_wall_and_ray_stays_inside(
        d in domain(), u in direction(), r in 0.0f64..0.999, w in direction(), speed in 0.05f64..8.0, frac in 0.001f64..0.999,
    ) {
        let x = interior(&d, &u, r);
        let v = speed * w;
        let e = d.backward_exit(&PhasePoint::new(x, v)).unwrap();
        prop_assert!(d.xi(&e.x_b).abs() <= 1e-9);
        prop_assert!(d.xi(&(x - frac * e.t_b * v)) < 0.0);
    }

    #[test]
    fn ball_exit_time_bounded_by_chord(u in direction(), r in 0.0f64..0.999, w in direction(), speed in 0.05f64..8.0) {
        let d = ConvexDomain::unit_ball();
        let x = interior(&d, &u, r);
        let v = speed * w;
        let e = d.backward_exit(&PhasePoint::new(x, v)).unwrap();
        prop_assert!(e.t_b * v.norm_squared() / e.normal_b.dot(&v).abs() <= 2.0 + 1e-9);
    }

    #[test]
    fn ball_normal_speeds_agree_at_both_chord_ends(u in direction(), c in 1e-3f64..1.0, psi in 0.0f64..2.0 * PI) {
        let d = ConvexDomain::unit_ball();
        let n = u;
        let (t1, t2) = kinetic_core::quadrature::orthonormal_frame(&n);
        let v = c * n + (1.0 - c * c).sqrt() * (psi.cos() * t1 + psi.sin() * t2);
        let e = d.backward_exit(&PhasePoint::new(u - 1e-12 * v, v)).unwrap();
        let ratio = n.dot(&v).abs() / e.normal_b.dot(&v).abs();
        prop_assert!((ratio - 1.0).abs() <= 1e-9, "ratio {}", ratio);
    }

    #[test]
    fn consecutive_wall_points_are_uniformly_curved(d in domain(), u in direction(), c in 0.05f64..1.0, psi in 0.0f64..2.0 * PI) {
        let x1 = d.project_to_boundary(&d.from_reference(&u));
        let n = d.normal(&x1);
        let (t1, t2) = kinetic_core::quadrature::orthonormal_frame(&n);
        let v = c * n + (1.0 - c * c).sqrt() * (psi.cos() * t1 + psi.sin() * t2);
        let x2 = d.backward_exit(&PhasePoint::new(x1 - 1e-10 * v, v)).unwrap().x_b;
        let chord = x1 - x2;
        let ratio = n.dot(&chord).abs() / chord.norm_squared();
        if d.axes() == Vector3::new(1.0, 1.0, 1.0) && matches!(d.kind, kinetic_core::geometry::DomainKind::UnitBall) {
            prop_assert!((ratio - 0.5).abs() <= 1e-6, "ratio {}", ratio);
        }
        prop_assert!((0.1..=10.0).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn alpha_is_capped_by_one_and_alpha_tilde(d in domain(), u in direction(), r in 0.0f64..0.999, w in direction(), speed in 0.01f64..8.0) {
        let kw = KineticWeight::new(d);
        let x = interior(&d, &u, r);
        let v = speed * w;
        let a = kw.alpha(&x, &v).unwrap();
        let at = kw.alpha_tilde(&x, &v).unwrap();
        prop_assert!(a <= 1.0);
        prop_assert!(a <= at + 1e-15);
    }

    #[test]
    fn chi_cutoff_properties(s in 0.0f64..5.0, ds in 0.0f64..0.5) {
        let chi = ChiCutoff;
        prop_assert!(chi.value(s + ds) >= chi.value(s));
        prop_assert!(chi.derivative(s).abs() <= 1.0 + 1e-12);
        prop_assert!(s * chi.derivative(s) <= 4.0 * chi.value(s) + 1e-15);
        if s <= ChiCutoff::LOWER {
            prop_assert_eq!(chi.value(s), s);
        }
        if s >= ChiCutoff::UPPER {
            prop_assert!((chi.value(s) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn quadratic_level_sets_keep_alpha_tilde_on_rays(
        ellipsoid in any::<bool>(), u in direction(), r in 0.0f64..0.99, w in direction(), speed in 0.1f64..6.0, frac in 0.0f64..1.0,
    ) {
        let d = if ellipsoid { ConvexDomain::ellipsoid(1.5, 1.0, 0.75).unwrap() } else { ConvexDomain::unit_ball() };
        let kw = KineticWeight::new(d);
        let x = interior(&d, &u, r);
        let v = speed * w;
        prop_assume!(kw.alpha_tilde(&x, &v).unwrap() >= 1e-3);
        let t_b = d.backward_exit(&PhasePoint::new(x, v)).unwrap().t_b;
        let ratio = kw.velocity_lemma_ratio_tilde(&x, &v, frac * t_b).unwrap();
        prop_assert!((ratio - 1.0).abs() <= 1e-6, "ratio {}", ratio);
    }

    #[test]
    fn quartic_velocity_lemma_exponent_is_bounded(u in direction(), r in 0.0f64..0.99, w in direction(), speed in 0.1f64..6.0, frac in 0.0f64..1.0) {
        let d = ConvexDomain::quartic_ball(1.0).unwrap();
        let kw = KineticWeight::new(d);
        let x = interior(&d, &u, r);
        let v = speed * w;
        prop_assume!(kw.alpha(&x, &v).unwrap() >= 1e-6);
        let t_b = d.backward_exit(&PhasePoint::new(x, v)).unwrap().t_b;
        let s = frac * t_b;
        let ratio = kw.velocity_lemma_ratio(&x, &v, s).unwrap();
        let bound = (5.0 * speed * s).exp();
        prop_assert!(ratio <= bound && ratio >= 1.0 / bound, "ratio {} bound {}", ratio, bound);
    }

    #[test]
    fn kernel_is_symmetric_with_signed_parts(a in direction(), b in direction(), ra in 0.0f64..8.0, rb in 0.0f64..8.0) {
        let p = KernelParams::default();
        let (v, u) = (ra * a, rb * b);
        prop_assume!((v - u).norm() > 1e-8);
        let kvu = grad_kernel(&v, &u, &p).unwrap();
        let kuv = grad_kernel(&u, &v, &p).unwrap();
        prop_assert!((kvu - kuv).abs() <= 1e-14 * (k1(&v, &u, &p).abs() + k2(&v, &u, &p).abs()));
        prop_assert!(k2(&v, &u, &p) >= 0.0);
        prop_assert!(k1(&v, &u, &p) <= 0.0);
    }

    #[test]
    fn collision_frequency_grows_linearly(w in direction(), r in 0.0f64..8.0) {
        let v = r * w;
        let ratio = nu_exact(&v) / (1.0 + r * r).sqrt();
        prop_assert!(ratio >= nu_lower_constant(8.0) * (1.0 - 1e-12));
        prop_assert!(ratio <= 8.0 * PI * (1.0 + 1e-12));
    }

    #[test]
    fn wall_maxwellian_is_flux_normalized(u in direction(), t in 0.8f64..1.2) {
        let d = ConvexDomain::ellipsoid(1.5, 1.0, 0.75).unwrap();
        let x = d.project_to_boundary(&d.from_reference(&u));
        let tw = WallTemperature { base: t, epsilon: 0.0, profile: WallProfile::Isothermal };
        let flux = incoming_wall_flux(&d, &x, &tw, &WallRule::default()).unwrap();
        prop_assert!((flux - 1.0).abs() <= 1e-6, "flux {}", flux);
    }

    #[test]
    fn diffuse_reflection_balances_mass(u in direction(), eps in -0.05f64..0.05, c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
        let d = ConvexDomain::unit_ball();
        let x = d.project_to_boundary(&u);
        let n = d.normal(&x);
        let tw = WallTemperature::linear_x3(eps);
        let rule = WallRule::default();
        let trace = |v: &Vector3<f64>| sqrt_mu(v) * (c0 + c1 * v.x + c2 * v.norm_squared());
        let out = outgoing_flux(&d, &x, trace, &rule).unwrap();
        let incoming = HalfSpaceRule::new(&(-n), rule.n_polar, rule.n_azimuth, rule.n_radial, rule.v_max)
            .integrate(|v| diffuse_reflect(&d, &out, v, &tw).unwrap_or(0.0) * sqrt_mu(v) * n.dot(v).abs());
        prop_assert!((incoming - out.value).abs() <= 1e-6 * out.value.abs().max(1.0), "{} vs {}", incoming, out.value);
    }

    #[test]
    fn weighted_remainder_decays_in_velocity(u in direction(), w in direction(), eps in -0.01f64..0.01) {
        let d = ConvexDomain::unit_ball();
        let x = d.project_to_boundary(&u);
        let tw = WallTemperature::linear_x3(eps);
        let p = KernelParams::default();
        let r = |s: f64| p.w(&(s * w)) * steady_remainder(&d, &x, &(s * w), &tw).unwrap().abs();
        prop_assert!(r(10.0) <= 1e-5, "w r at |v| = 10: {}", r(10.0));
    }

    #[test]
    fn divergence_classification_is_monotone(start in 0.1f64..10.0, steps in proptest::collection::vec(0.0f64..2.0, 1..12)) {
        let mut values = vec![start];
        for s in &steps {
            let last = *values.last().unwrap();
            values.push(last * (1.0 + s));
        }
        for k in 2..=values.len() {
            if classify(&values[..k]) == Trend::Diverging {
                prop_assert_eq!(classify(&values), Trend::Diverging);
            }
        }
    }

    #[test]
    fn decay_fit_recovers_exact_rate(lambda in 0.01f64..3.0, amplitude in 1e-6f64..1.0) {
        let t: Vec<f64> = (0..31).map(|i| 0.2 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| amplitude * (-lambda * t).exp()).collect();
        let fit = fit_decay_rate(&t, &y, 1.0, 6.0).unwrap();
        prop_assert!((fit.lambda - lambda).abs() <= 1e-9);
        prop_assert!(fit.r2 > 1.0 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gamma_is_bilinear_in_first_argument(a in -2.0f64..2.0, b in -2.0f64..2.0, w in direction(), s in 0.0f64..3.0) {
        let rule = GammaRule::new(VelocityQuadrature::new(4, 3, 4, 6.0), 3, 4);
        let f = |u: &Vector3<f64>| (-0.3 * u.norm_squared()).exp();
        let g = |u: &Vector3<f64>| u.x * (-0.2 * u.norm_squared()).exp();
        let h = |u: &Vector3<f64>| 1.0 + 0.1 * u.z;
        let v = s * w;
        let lhs = apply_gamma(|u| a * f(u) + b * g(u), h, &v, &rule).value;
        let rhs = a * apply_gamma(f, h, &v, &rule).value + b * apply_gamma(g, h, &v, &rule).value;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn parallel_sum_ignores_thread_count(n in 1usize..5000, seed in any::<u64>()) {
        let f = |i: usize| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 * 1e-3 + 1.0 / (i as f64 + 1.0);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| par_sum(n, f));
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| par_sum(n, f));
        prop_assert_eq!(one.to_bits(), three.to_bits());
    }
}
