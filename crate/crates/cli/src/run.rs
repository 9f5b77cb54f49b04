//! Experiment orchestration and artifact emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use kinetic_core::collision::{KernelParams, SingularRule};
use kinetic_core::solver::norms::boundary_weighted_sup;
use kinetic_core::solver::steady::weighted_sup;
use kinetic_core::solver::{
    fit_decay_rate, gradient_norms, smooth_initial_data, CollisionMatrix, DecayFit, Duhamel, GradientNorms, MeasureGrid,
    NormRecord, NormSeries, PhaseGrid, SteadyProblem, TransientProblem,
};
use kinetic_core::verify::{lemma_ids, run_lemma, LemmaCheck, ReportConventions};
use kinetic_core::KineticError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentKind, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Kinetic { context: String, source: KineticError },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

fn ctx<T>(context: &str, r: kinetic_core::Result<T>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Kinetic { context: context.to_string(), source })
}

/// One line of the pass/fail table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckLine {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), pass, detail: detail.into() }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    /// File name → content; written verbatim.
    pub files: BTreeMap<String, String>,
    pub checks: Vec<CheckLine>,
    pub notes: Vec<String>,
    /// Wall-clock seconds per stage; reported only in `summary.txt`.
    pub timings: Vec<(String, f64)>,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Header of the `verify.json` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub conventions: ReportConventions,
    pub records: Vec<LemmaCheck>,
}

pub const VERIFY_SCHEMA: &str = "verify-v1";

/// Steady-state diagnostics.
#[derive(Debug, Clone)]
pub struct SteadyReport {
    pub record: NormRecord,
    pub gradients: GradientNorms,
    pub iterations: usize,
    pub residual: f64,
    /// `sup w |Φ(f_s) − f_s|` after convergence.
    pub fixed_point_defect: f64,
    pub values: Vec<f64>,
}

/// Transient diagnostics.
#[derive(Debug, Clone)]
pub struct TransientReport {
    pub series: NormSeries,
    pub fit_sup: DecayFit,
    pub fit_c1: DecayFit,
    pub warnings: Vec<String>,
    pub compatibility_residual: f64,
    pub sup_dt_f0: f64,
    pub initial_mass: f64,
}

/// Grid and collision matrix shared by the solvers.
pub struct Discretization {
    pub grid: PhaseGrid,
    pub kmat: CollisionMatrix,
    pub params: KernelParams,
}

impl Discretization {
    pub fn new(cfg: &RunConfig) -> Result<Self, RunError> {
        let params = cfg.kernel_params();
        let grid = ctx("grid", PhaseGrid::new(cfg.domain(), &cfg.grid))?;
        let kmat = CollisionMatrix::new(&grid.velocity, &grid.nu, &params, &SingularRule::default());
        Ok(Self { grid, kmat, params })
    }
}

fn exponents(cfg: &RunConfig) -> Vec<f64> {
    let mut ps = vec![2.0, 2.5];
    if !ps.contains(&cfg.w1p.p) {
        ps.push(cfg.w1p.p);
    }
    ps
}

/// Solves the steady problem and measures its norms.
pub fn steady_report(cfg: &RunConfig, disc: &Discretization) -> Result<SteadyReport, RunError> {
    let sp = SteadyProblem::new(&disc.grid, &disc.kmat, cfg.wall_temperature(), &disc.params, cfg.steady_options());
    let sol = ctx("steady solve", sp.solve())?;
    let check = sp.apply(&sol.values, None);
    let defect: Vec<f64> = check.iter().zip(&sol.values).map(|(a, b)| a - b).collect();
    let fixed_point_defect = if cfg.solver.include_gamma { f64::NAN } else { weighted_sup(&defect, &sp.weight) };
    let rep = Duhamel::steady(&disc.grid, &sp.wall, sp.wall.state(&disc.grid, &sol.values), sol.source.clone(), sp.options.n_s);
    let measure = MeasureGrid::new(&disc.grid.domain, &cfg.measure_spec());
    let gradients = gradient_norms(&rep, &disc.grid, &measure, &disc.params, &exponents(cfg));
    let record = NormRecord {
        t: 0.0,
        sup_wf: weighted_sup(&sol.values, &sp.weight),
        sup_bdry_wf: boundary_weighted_sup(&disc.grid, &sol.values, &sp.weight),
        weighted_c1: gradients.weighted_c1,
        w1p_p2: gradients.w1p_at(2.0).unwrap_or(f64::NAN),
        w1p_p25: gradients.w1p_at(2.5).unwrap_or(f64::NAN),
        mass: disc.grid.mass(&sol.values),
    };
    Ok(SteadyReport { record, gradients, iterations: sol.iterations, residual: sol.residual, fixed_point_defect, values: sol.values })
}

/// Runs the deviation dynamics from the smooth compatible initial datum.
pub fn transient_report(cfg: &RunConfig, disc: &Discretization) -> Result<TransientReport, RunError> {
    let tp = TransientProblem::new(&disc.grid, &disc.kmat, cfg.wall_temperature(), &disc.params, cfg.transient_options());
    let init = smooth_initial_data(&disc.grid, &disc.kmat, &tp.wall, &disc.params, cfg.solver.amplitude);
    let run = ctx("transient run", tp.run(&init.values))?;
    let [t0, t1] = cfg.solver.fit_window;
    let times = run.series.times();
    let fit_sup = ctx("decay fit of sup w f", fit_decay_rate(&times, &run.series.column(|r| r.sup_wf), t0, t1))?;
    let fit_c1 = ctx("decay fit of weighted C1", fit_decay_rate(&times, &run.series.column(|r| r.weighted_c1), t0, t1))?;
    Ok(TransientReport {
        series: run.series,
        fit_sup,
        fit_c1,
        warnings: run.warnings,
        compatibility_residual: init.compatibility_residual,
        sup_dt_f0: init.sup_dt_f0,
        initial_mass: init.mass,
    })
}

/// Runs the selected checks, each timed, in id order.
pub fn verify_records(cfg: &RunConfig, ids: &[String]) -> Result<Vec<(LemmaCheck, f64)>, RunError> {
    let domain = cfg.domain();
    let params = cfg.kernel_params();
    let settings = cfg.verify_settings();
    let results = kinetic_core::reduce::par_map(ids.len(), |i| {
        let start = Instant::now();
        let r = run_lemma(&ids[i], &domain, &params, &settings);
        (r, start.elapsed().as_secs_f64())
    });
    results
        .into_iter()
        .zip(ids)
        .map(|((r, t), id)| ctx(&format!("lemma {id}"), r).map(|c| (c, t)))
        .collect()
}

fn provenance(cfg: &RunConfig, threads: usize) -> String {
    format!("config_hash={} seed={} threads={}", cfg.hash(), cfg.seed, threads)
}

fn steady_outcome(cfg: &RunConfig, threads: usize) -> Result<RunOutcome, RunError> {
    let mut out = RunOutcome::default();
    let start = Instant::now();
    let disc = Discretization::new(cfg)?;
    out.timings.push(("discretization".into(), start.elapsed().as_secs_f64()));
    let start = Instant::now();
    let rep = steady_report(cfg, &disc)?;
    out.timings.push(("steady solve and norms".into(), start.elapsed().as_secs_f64()));
    let tol = cfg.solver.tol_fp;
    out.checks.push(CheckLine::new(
        "steady_converged",
        rep.residual < tol,
        format!("{} iterations, residual {:.3e} (tol {:.1e})", rep.iterations, rep.residual, tol),
    ));
    if rep.fixed_point_defect.is_finite() {
        out.checks.push(CheckLine::new(
            "steady_fixed_point",
            rep.fixed_point_defect <= 2.0 * tol,
            format!("sup w|Phi(f_s) - f_s| = {:.3e}", rep.fixed_point_defect),
        ));
    }
    out.checks.push(CheckLine::new(
        "gradient_chain_bound",
        rep.gradients.chain_bound_holds(),
        format!("sup w_tilde alpha |grad f_s| = {:.4e}", rep.gradients.weighted_c1),
    ));
    let p = cfg.w1p.p;
    let w1p = rep.gradients.w1p_at(p).unwrap_or(f64::NAN);
    out.checks.push(CheckLine::new("w1p_norm_finite", w1p.is_finite(), format!("||grad_x f_s||_{p} = {w1p:.4e}")));
    let tw = cfg.wall_temperature();
    if tw.is_isothermal() {
        let trivial = rep.record.sup_wf <= tol && rep.iterations == 1;
        out.checks.push(CheckLine::new(
            "trivial_fixed_point",
            trivial,
            format!("sup w|f_s| = {:.3e} after {} iteration(s)", rep.record.sup_wf, rep.iterations),
        ));
        out.notes.push("isothermal wall: the remainder vanishes and f_s = 0 is the trivial fixed point".into());
    } else {
        out.notes.push(format!(
            "sup w|f_s| / epsilon = {:.4}, sup w_tilde alpha |grad f_s| / epsilon = {:.4}",
            rep.record.sup_wf / tw.epsilon.abs(),
            rep.gradients.weighted_c1 / tw.epsilon.abs()
        ));
    }
    out.notes.push(format!("degenerate-alpha samples excluded from weighted norms: {:.3e}", rep.gradients.excluded_fraction));
    let series = NormSeries { records: vec![rep.record] };
    out.files.insert("norms.csv".into(), series.to_csv(&format!("experiment=steady {}", provenance(cfg, threads))));
    Ok(out)
}

fn transient_outcome(cfg: &RunConfig, threads: usize) -> Result<RunOutcome, RunError> {
    let mut out = RunOutcome::default();
    let start = Instant::now();
    let disc = Discretization::new(cfg)?;
    out.timings.push(("discretization".into(), start.elapsed().as_secs_f64()));
    let start = Instant::now();
    let rep = transient_report(cfg, &disc)?;
    out.timings.push(("transient run".into(), start.elapsed().as_secs_f64()));
    let f = &rep.fit_sup;
    out.checks.push(CheckLine::new(
        "decay_sup_wf",
        f.lambda > 0.0 && f.r2 > 0.95,
        format!("lambda = {:.4} +- {:.1e}, r2 = {:.5}", f.lambda, f.lambda_stderr, f.r2),
    ));
    let f = &rep.fit_c1;
    out.checks.push(CheckLine::new("decay_weighted_c1", f.lambda > 0.0, format!("lambda = {:.4}, r2 = {:.5}", f.lambda, f.r2)));
    let t0 = cfg.solver.fit_window[0];
    let tail: Vec<&NormRecord> = rep.series.records.iter().filter(|r| r.t >= t0).collect();
    let monotone = tail.windows(2).all(|w| w[1].w1p_p25 < w[0].w1p_p25);
    out.checks.push(CheckLine::new(
        "w1p_deviation_monotone",
        monotone,
        format!("||grad_x (f - f_s)||_2.5 over t >= {t0}: {} records", tail.len()),
    ));
    let mass_tol = 10.0 * rep.initial_mass.abs().max(1e-12);
    let mass = rep.series.records.iter().map(|r| r.mass.abs()).fold(0.0, f64::max);
    out.checks.push(CheckLine::new("mass_neutral", mass <= mass_tol, format!("max |mass| = {mass:.3e}")));
    let violations = tail.windows(2).filter(|w| w[1].sup_wf >= w[0].sup_wf).count();
    out.notes.push(format!("tail decay violations of sup w f (soft): {violations}"));
    out.notes.push(format!("compatibility residual of f0: {:.3e}", rep.compatibility_residual));
    out.notes.push(format!("sup w |d_t f0| = {:.4e}", rep.sup_dt_f0));
    out.notes.extend(rep.warnings.iter().map(|w| format!("warning: {w}")));
    out.files.insert("norms.csv".into(), rep.series.to_csv(&format!("experiment=transient {}", provenance(cfg, threads))));
    Ok(out)
}

fn verify_outcome(cfg: &RunConfig, threads: usize, ids: Vec<String>) -> Result<RunOutcome, RunError> {
    let mut out = RunOutcome::default();
    let records = verify_records(cfg, &ids)?;
    for (c, t) in &records {
        let mut detail = format!("trend {:?}", c.trend).to_lowercase();
        if let (Some(a), Some(b)) = (c.values.first(), c.values.last()) {
            let _ = write!(detail, ", values {a:.4e} .. {b:.4e}");
        }
        out.checks.push(CheckLine::new(&c.id, c.pass, detail));
        out.timings.push((c.id.clone(), *t));
    }
    let report = VerifyReport {
        schema: VERIFY_SCHEMA.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        threads,
        conventions: ReportConventions::default(),
        records: records.into_iter().map(|(c, _)| c).collect(),
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    out.files.insert("verify.json".into(), json);
    Ok(out)
}

/// Resolved worker count: `0` means every available core.
pub fn resolve_threads(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

/// Runs `kind` inside a pool of `cfg.threads` workers.
pub fn run(cfg: &RunConfig, kind: ExperimentKind) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let threads = resolve_threads(cfg.threads);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    let start = Instant::now();
    let mut out = pool.install(|| match kind {
        ExperimentKind::Steady => steady_outcome(cfg, threads),
        ExperimentKind::Transient => transient_outcome(cfg, threads),
        ExperimentKind::VerifyAll => verify_outcome(cfg, threads, lemma_ids(&cfg.verify_settings())),
        ExperimentKind::Lemma => {
            let id = cfg.experiment.lemma.clone().ok_or_else(|| ConfigError::new("experiment.lemma", "missing lemma id"))?;
            verify_outcome(cfg, threads, vec![id])
        }
    })?;
    out.timings.push(("total".into(), start.elapsed().as_secs_f64()));
    let summary = summary_text(cfg, threads, kind, &out);
    out.files.insert("summary.txt".into(), summary);
    Ok(out)
}

fn kind_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Steady => "steady",
        ExperimentKind::Transient => "transient",
        ExperimentKind::VerifyAll => "verify-all",
        ExperimentKind::Lemma => "lemma",
    }
}

/// Fixed-width pass/fail table.
pub fn check_table(checks: &[CheckLine]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(s, "{:<width$}  {}  {}", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    s
}

fn summary_text(cfg: &RunConfig, threads: usize, kind: ExperimentKind, out: &RunOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", kind_name(kind));
    let _ = writeln!(s, "{}", provenance(cfg, threads));
    let _ = writeln!(s, "domain: {:?}", cfg.domain().kind);
    let _ = writeln!(s, "wall: {:?}", cfg.wall_temperature());
    s.push('\n');
    s.push_str(&check_table(&out.checks));
    let passed = out.checks.iter().filter(|c| c.pass).count();
    let _ = writeln!(s, "\n{passed}/{} checks passed", out.checks.len());
    if !out.notes.is_empty() {
        s.push_str("\nnotes:\n");
        for n in &out.notes {
            let _ = writeln!(s, "  {n}");
        }
    }
    s.push_str("\ntimings (s):\n");
    for (k, t) in &out.timings {
        let _ = writeln!(s, "  {k}: {t:.3}");
    }
    s
}

/// Writes every artifact into `dir`.
pub fn write_outputs(out: &RunOutcome, dir: &Path) -> Result<(), RunError> {
    let io = |context: String| move |source| RunError::Io { context, source };
    std::fs::create_dir_all(dir).map_err(io(dir.display().to_string()))?;
    for (name, content) in &out.files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(io(path.display().to_string()))?;
    }
    Ok(())
}

/// Re-reads `verify.json` from `dir` and tabulates it.
pub fn report(dir: &Path) -> Result<(String, bool), RunError> {
    let path = dir.join("verify.json");
    let text = std::fs::read_to_string(&path).map_err(|source| RunError::Io { context: path.display().to_string(), source })?;
    let rep: VerifyReport = serde_json::from_str(&text).map_err(|e| RunError::Io {
        context: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    let checks: Vec<CheckLine> = rep
        .records
        .iter()
        .map(|c| CheckLine::new(&c.id, c.pass, format!("trend {:?}, {} levels", c.trend, c.levels.len()).to_lowercase()))
        .collect();
    let mut s = format!("config_hash={} seed={} threads={}\n", rep.config_hash, rep.seed, rep.threads);
    s.push_str(&check_table(&checks));
    let ok = checks.iter().all(|c| c.pass);
    let norms = dir.join("norms.csv");
    if let Ok(csv) = std::fs::read_to_string(&norms) {
        let rows = csv.lines().filter(|l| !l.starts_with('#')).count().saturating_sub(1);
        let _ = writeln!(s, "norms.csv: {rows} rows");
    }
    Ok((s, ok))
}
