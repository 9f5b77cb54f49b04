//! Acceptance suite: one PASS/FAIL line per criterion, unit ball, default configuration.
//!
//! Runs as a plain binary so the table is always printed; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use kinetic_cli::config::{ExperimentKind, RunConfig};
use kinetic_cli::run::{run, steady_report, transient_report, verify_records, write_outputs, Discretization};
use kinetic_core::boundary::WallProfile;
use kinetic_core::solver::GridSpec;
use kinetic_core::verify::{lemma_ids, LemmaCheck, Trend};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn metric(c: &LemmaCheck, key: &str) -> f64 {
    c.metrics.get(key).copied().unwrap_or(f64::NAN)
}

/// Relative spread `(max − min) / min` of positive values.
fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo
}

fn geometry(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let oracle = &r["exit_oracle"];
    let grad = &r["exit_gradients"];
    let e_ball = metric(oracle, "ball_max_error");
    let e_ell = metric(oracle, "ellipsoid_max_error");
    let g_ball = metric(grad, "ball_max_rel_error");
    let g_ell = metric(grad, "ellipsoid_max_rel_error");
    let n = oracle.samples;
    Verdict::new(
        n >= 10_000 && e_ball <= 1e-10 && e_ell <= 1e-10 && g_ball <= 1e-5 && g_ell <= 1e-5,
        format!("{n} samples; exit error ball {e_ball:.1e}, ellipsoid {e_ell:.1e}; gradient rel ball {g_ball:.1e}, ellipsoid {g_ell:.1e}"),
    )
}

fn jacobian(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let c = &r["exit_jacobian"];
    let b = metric(c, "ball_max_rel_error");
    let e = metric(c, "ellipsoid_max_rel_error");
    Verdict::new(c.samples >= 1_000 && b < 1e-4 && e < 1e-4, format!("{} samples; rel error ball {b:.1e}, ellipsoid {e:.1e}", c.samples))
}

fn chi_and_velocity(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let chi = &r["chi_cutoff"];
    let vl = &r["velocity_lemma"];
    let c = metric(vl, "fitted_c");
    let c_tilde = metric(vl, "fitted_c_tilde");
    let used = metric(vl, "samples_used");
    Verdict::new(
        chi.pass && chi.samples >= 10_000 && vl.pass && c.is_finite() && c_tilde.is_finite() && used >= 1e5,
        format!("chi invariants on {} points: {}; velocity lemma fitted C = {c:.3e} over {used} samples", chi.samples, chi.pass),
    )
}

fn kernel(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let asym = metric(&r["kernel_symmetry"], "max_rel_asymmetry");
    let dw = metric(&r["kernel_weight_bound"], "doubling_change");
    let dg = metric(&r["kernel_gradient_bound"], "doubling_change");
    let sup_w = r["kernel_weight_bound"].values.last().copied().unwrap_or(f64::NAN);
    let sup_g = r["kernel_gradient_bound"].values.last().copied().unwrap_or(f64::NAN);
    let nu = &r["nu_bounds"];
    let (c1, c2) = (metric(nu, "c1"), metric(nu, "c2"));
    Verdict::new(
        asym <= 1e-14 && dw < 0.05 && dg < 0.05 && sup_w.is_finite() && sup_g.is_finite() && c1 > 0.0 && c2.is_finite() && nu.pass,
        format!("asymmetry {asym:.1e}; doubling change weight {dw:.3}, gradient {dg:.3}; nu/<v> in [{c1:.3}, {c2:.3}]"),
    )
}

fn wall_flux(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let c = &r["wall_flux"];
    let errs: Vec<f64> = ["flux_error_t0.8", "flux_error_t1.0", "flux_error_t1.2"].iter().map(|k| metric(c, k)).collect();
    let mass = metric(c, "remainder_net_flux").abs();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Verdict::new(worst <= 1e-6 && mass <= 1e-6, format!("max flux error {worst:.1e} over T in {{0.8, 1.0, 1.2}}; remainder boundary mass {mass:.1e}"))
}

fn nonlocal(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let c = &r["nonlocal_to_local"];
    let drift = metric(c, "max_drift");
    let short = metric(c, "short_time_ratio");
    let small = metric(c, "small_ball_ratio");
    let finite = c.values.iter().all(|v| v.is_finite());
    Verdict::new(
        finite && c.levels.len() >= 3 && drift < 0.25 && short <= 0.25 && small <= 0.25,
        format!("drift {drift:.3} over {} levels; truncated ratio {short:.3}, small-ball ratio {small:.1e}", c.levels.len()),
    )
}

fn cov(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let c = &r["cov_identity"];
    let keys = ["unit_velocity_ball_rel_discrepancy", "xi_squared_gaussian_rel_discrepancy", "shifted_gaussian_rel_discrepancy"];
    let worst = keys.iter().map(|k| metric(c, k)).fold(0.0, f64::max);
    let chords: Vec<f64> = c.metrics.iter().filter(|(k, _)| k.starts_with("chord_identity_") && !k.ends_with("discrepancy")).map(|(_, v)| *v).collect();
    let chord_err = chords.iter().map(|v| (v - 4.0 * PI / 3.0).abs()).fold(0.0, f64::max);
    Verdict::new(
        worst < 1e-3 && !chords.is_empty() && chord_err <= 1e-3,
        format!("max rel discrepancy {worst:.1e}; chord identity error {chord_err:.1e} over {} directions", chords.len()),
    )
}

fn w1p(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let expected = [("w1p_p2.0", Trend::Bounded), ("w1p_p2.5", Trend::Bounded), ("w1p_p2.9", Trend::Bounded), ("w1p_p3.2", Trend::Diverging), ("w1p_p3.5", Trend::Diverging)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (id, want) in expected {
        let got = r.get(id).map(|c| c.trend);
        ok &= got == Some(want);
        detail.push(format!("{}: {}", &id[5..], got.map_or("missing".to_string(), |t| format!("{t:?}").to_lowercase())));
    }
    Verdict::new(ok, detail.join(", "))
}

fn obstruction(r: &BTreeMap<String, LemmaCheck>) -> Verdict {
    let inv = &r["second_derivative_obstruction"];
    let spread = metric(inv, "tail_increment_spread");
    let sqrt = r["second_derivative_contrast_sqrt"].trend;
    let bump = r["second_derivative_contrast_bump"].trend;
    Verdict::new(
        inv.trend == Trend::Diverging && spread <= 0.3 && sqrt == Trend::Bounded && bump == Trend::Bounded,
        format!(
            "inverse {:?} with tail increment spread {spread:.1e}; contrasts {:?}, {:?}",
            inv.trend, sqrt, bump
        )
        .to_lowercase(),
    )
}

fn wall(cfg: &RunConfig, profile: WallProfile, epsilon: f64) -> RunConfig {
    let mut c = cfg.clone();
    c.wall.profile = profile;
    c.wall.epsilon = epsilon;
    c
}

fn steady(cfg: &RunConfig, disc: &Discretization) -> Verdict {
    let iso = wall(cfg, WallProfile::Isothermal, 0.0);
    let rep = steady_report(&iso, disc).expect("isothermal steady solve");
    let trivial = rep.iterations == 1 && rep.record.sup_wf <= cfg.solver.tol_fp;
    let mut sup = Vec::new();
    let mut c1 = Vec::new();
    let mut w1p = 0.0;
    for eps in [0.005, 0.01, 0.02] {
        let rep = steady_report(&wall(cfg, WallProfile::LinearX3, eps), disc).expect("steady solve");
        sup.push(rep.record.sup_wf / eps);
        c1.push(rep.record.weighted_c1 / eps);
        if eps == 0.01 {
            w1p = rep.record.w1p_p25 / eps;
        }
    }
    let base = GridSpec { shells: vec![0.5, 0.8, 0.93], n_cos: 4, n_phi: 6, ..GridSpec::default() };
    let mut w1p_levels = vec![w1p];
    for g in [base.clone(), base.refined_space()] {
        let c = RunConfig { grid: g, ..wall(cfg, WallProfile::LinearX3, 0.01) };
        let d = Discretization::new(&c).expect("refinement grid");
        w1p_levels.push(steady_report(&c, &d).expect("refinement solve").record.w1p_p25 / 0.01);
    }
    let finite = w1p_levels.iter().all(|v| v.is_finite());
    let (s_sup, s_c1, s_w1p) = (spread(&sup), spread(&c1), spread(&w1p_levels));
    Verdict::new(
        trivial && s_sup < 0.2 && s_c1 < 0.2 && finite && s_w1p < 0.1,
        format!(
            "trivial fixed point {trivial}; spread over eps of sup/eps {s_sup:.3}, C1/eps {s_c1:.3}; ||grad f_s||_2.5/eps {:.3} with refinement spread {s_w1p:.3}",
            w1p
        ),
    )
}

fn transient(cfg: &RunConfig, disc: &Discretization) -> Verdict {
    let iso = wall(cfg, WallProfile::Isothermal, 0.0);
    let rep = transient_report(&iso, disc).expect("isothermal transient run");
    let (fs, fc) = (&rep.fit_sup, &rep.fit_c1);
    let decay = fs.lambda > 0.0 && fs.r2 > 0.95 && fc.lambda > 0.0;
    let hot = transient_report(&wall(cfg, WallProfile::LinearX3, 0.01), disc).expect("non-isothermal transient run");
    let t0 = cfg.solver.fit_window[0];
    let tail: Vec<f64> = hot.series.records.iter().filter(|r| r.t >= t0).map(|r| r.w1p_p25).collect();
    let monotone = tail.len() >= 2 && tail.windows(2).all(|w| w[1] < w[0]);
    Verdict::new(
        decay && monotone,
        format!(
            "lambda {:.4} (r2 {:.5}), C1 lambda {:.4}; W1p deviation monotone over {} tail records: {monotone}",
            fs.lambda,
            fs.r2,
            fc.lambda,
            tail.len()
        ),
    )
}

fn reproducibility() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.threads = 2;
    cfg.grid = GridSpec { shells: vec![0.5, 0.8, 0.93], n_cos: 4, n_phi: 6, ..GridSpec::default() };
    cfg.verify.geometry_samples = 500;
    cfg.verify.jacobian_samples = 100;
    cfg.verify.velocity_lemma_samples = 2_000;
    cfg.verify.kernel_samples = 1_000;
    cfg.verify.nonlocal_samples = 16;
    cfg.verify.boundary_samples = 200;
    let mut dirs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().expect("temp dir");
        let mut out = run(&cfg, ExperimentKind::Steady).expect("steady run");
        let verify = run(&cfg, ExperimentKind::VerifyAll).expect("verify run");
        out.files.insert("verify.json".into(), verify.files["verify.json"].clone());
        write_outputs(&out, dir.path()).expect("write outputs");
        dirs.push(dir);
    }
    let mut same = true;
    for name in ["verify.json", "norms.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).expect("first artifact");
        let b = std::fs::read(dirs[1].path().join(name)).expect("second artifact");
        same &= !a.is_empty() && a == b;
    }
    Verdict::new(same, "verify.json and norms.csv byte-identical across two runs with 2 threads")
}

fn main() {
    let cfg = RunConfig::default();
    let mut verdicts: Vec<(&str, Verdict, f64)> = Vec::new();

    let start = Instant::now();
    let ids = lemma_ids(&cfg.verify_settings());
    let records: BTreeMap<String, LemmaCheck> =
        verify_records(&cfg, &ids).expect("verification suite").into_iter().map(|(c, _)| (c.id.clone(), c)).collect();
    let suite_time = start.elapsed().as_secs_f64();
    let table: [(&str, fn(&BTreeMap<String, LemmaCheck>) -> Verdict); 9] = [
        ("1 geometry oracle equivalence", geometry),
        ("2 jacobian identity", jacobian),
        ("3 cutoff and velocity lemma", chi_and_velocity),
        ("4 kernel suite", kernel),
        ("5 wall flux normalization", wall_flux),
        ("6 nonlocal to local", nonlocal),
        ("7 change of variables", cov),
        ("8 W1p dichotomy", w1p),
        ("11 second derivative obstruction", obstruction),
    ];
    for (name, check) in table {
        verdicts.push((name, check(&records), suite_time));
    }

    let start = Instant::now();
    let disc = Discretization::new(&cfg).expect("default discretization");
    verdicts.push(("9 steady solver", steady(&cfg, &disc), start.elapsed().as_secs_f64()));
    let start = Instant::now();
    verdicts.push(("10 transient decay", transient(&cfg, &disc), start.elapsed().as_secs_f64()));
    let start = Instant::now();
    verdicts.push(("12 reproducibility", reproducibility(), start.elapsed().as_secs_f64()));

    verdicts.sort_by_key(|(name, _, _)| name.split(' ').next().and_then(|n| n.parse::<u32>().ok()));
    let width = verdicts.iter().map(|(n, _, _)| n.len()).max().unwrap_or(0);
    println!();
    for (name, v, t) in &verdicts {
        println!("{} {name:<width$}  {}  ({t:.1} s)", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed = verdicts.iter().filter(|(_, v, _)| !v.pass).count();
    println!("\n{}/{} acceptance criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
