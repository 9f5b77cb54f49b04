//! Run configuration: a TOML file with one table per concern.

use std::path::{Path, PathBuf};

use kinetic_core::boundary::{WallProfile, WallTemperature};
use kinetic_core::collision::KernelParams;
use kinetic_core::geometry::{ConvexDomain, DomainKind};
use kinetic_core::solver::{GridSpec, MeasureSpec, SteadyOptions, TransientOptions};
use kinetic_core::verify::{default_w1p_levels, VerifySettings};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Invalid or unreadable configuration; `key` is the dotted path of the offending entry.
#[derive(Debug, Error, PartialEq)]
#[error("config error at `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self { key: key.to_string(), message: message.into() }
    }
}

/// Which experiment a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Steady,
    Transient,
    VerifyAll,
    /// A single check, named by `experiment.lemma`.
    Lemma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub lemma: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { kind: ExperimentKind::VerifyAll, lemma: None }
    }
}

/// Domain family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainName {
    Ball,
    Ellipsoid,
    QuarticBall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub kind: DomainName,
    /// Semi-axes, used by `ellipsoid`.
    pub axes: [f64; 3],
    /// Quartic coefficient, used by `quartic_ball`.
    pub kappa: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { kind: DomainName::Ball, axes: [1.0, 1.0, 1.0], kappa: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WallConfig {
    pub profile: WallProfile,
    pub base: f64,
    pub epsilon: f64,
}

impl Default for WallConfig {
    fn default() -> Self {
        Self { profile: WallProfile::LinearX3, base: 1.0, epsilon: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub varrho: f64,
    pub varrho_tilde: f64,
    pub theta: f64,
    pub theta_tilde: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        let p = KernelParams::default();
        Self { varrho: p.varrho, varrho_tilde: p.varrho_tilde, theta: p.theta, theta_tilde: p.theta_tilde }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol_fp: f64,
    pub max_iter: usize,
    pub anderson_depth: usize,
    /// Gauss nodes per characteristic in the steady solver.
    pub n_s: usize,
    pub include_gamma: bool,
    pub dt: f64,
    pub horizon: f64,
    pub record_every: f64,
    /// Initial amplitude `‖w f₀‖_∞` of the transient run.
    pub amplitude: f64,
    /// Window `[t₀, t₁]` of the decay fit.
    pub fit_window: [f64; 2],
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SteadyOptions::default();
        let t = TransientOptions::default();
        Self {
            tol_fp: s.tol_fp,
            max_iter: s.max_iter,
            anderson_depth: s.anderson_depth,
            n_s: s.n_s,
            include_gamma: s.include_gamma,
            dt: t.dt,
            horizon: t.horizon,
            record_every: t.record_every,
            amplitude: 0.01,
            fit_window: [1.0, 6.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct W1pConfig {
    /// Exponent of the reported `‖∇_x f‖_p`.
    pub p: f64,
    /// Exponents of the singular-integral dichotomy.
    pub exponents: Vec<f64>,
    /// Cut levels `ℓ` with `h = 10^{−2ℓ}`.
    pub levels: Vec<u32>,
}

impl Default for W1pConfig {
    fn default() -> Self {
        Self { p: 2.5, exponents: VerifySettings::default().w1p_exponents, levels: default_w1p_levels() }
    }
}

/// Sample sizes of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub geometry_samples: usize,
    pub jacobian_samples: usize,
    pub velocity_lemma_samples: usize,
    pub kernel_samples: usize,
    pub nonlocal_samples: usize,
    pub boundary_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let s = VerifySettings::default();
        Self {
            geometry_samples: s.geometry_samples,
            jacobian_samples: s.jacobian_samples,
            velocity_lemma_samples: s.velocity_lemma_samples,
            kernel_samples: s.kernel_samples,
            nonlocal_samples: s.nonlocal_samples,
            boundary_samples: s.boundary_samples,
        }
    }
}

/// Complete run configuration. Every table and key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `0` uses every available core.
    pub threads: usize,
    /// Output directory; not part of the config hash.
    pub output_dir: PathBuf,
    pub domain: DomainConfig,
    pub wall: WallConfig,
    pub kernel: KernelConfig,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub experiment: ExperimentConfig,
    pub w1p: W1pConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: VerifySettings::default().seed,
            threads: 0,
            output_dir: PathBuf::from("out"),
            domain: DomainConfig::default(),
            wall: WallConfig::default(),
            kernel: KernelConfig::default(),
            grid: GridSpec::default(),
            solver: SolverConfig::default(),
            experiment: ExperimentConfig::default(),
            w1p: W1pConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

fn positive(key: &str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be positive and finite, got {value}")))
    }
}

fn nonzero(key: &str, value: usize) -> Result<(), ConfigError> {
    if value > 0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, "must be at least 1"))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let key = e.message().split('`').nth(1).unwrap_or("config").to_string();
            ConfigError::new(&key, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.domain.kind {
            DomainName::Ellipsoid => {
                for (i, a) in self.domain.axes.iter().enumerate() {
                    positive(&format!("domain.axes[{i}]"), *a)?;
                }
            }
            DomainName::QuarticBall => {
                if !(self.domain.kappa >= 0.0 && self.domain.kappa.is_finite()) {
                    return Err(ConfigError::new("domain.kappa", "must be non-negative"));
                }
            }
            DomainName::Ball => {}
        }
        positive("wall.base", self.wall.base)?;
        if !(self.wall.epsilon.abs() < 0.1) {
            return Err(ConfigError::new("wall.epsilon", format!("|epsilon| must be below 0.1, got {}", self.wall.epsilon)));
        }
        if self.wall.base - self.wall.epsilon.abs() * self.domain_height() <= 0.0 {
            return Err(ConfigError::new("wall.epsilon", "wall temperature must stay positive"));
        }
        self.kernel_params().validate().map_err(|e| {
            let msg = e.to_string();
            let field = ["varrho_tilde", "theta_tilde", "varrho", "theta"].into_iter().find(|f| msg.contains(f)).unwrap_or("kernel");
            ConfigError::new(&format!("kernel.{field}"), msg)
        })?;
        self.grid.validate().map_err(|e| ConfigError::new("grid", e.to_string()))?;
        let s = &self.solver;
        positive("solver.tol_fp", s.tol_fp)?;
        nonzero("solver.max_iter", s.max_iter)?;
        nonzero("solver.n_s", s.n_s)?;
        positive("solver.dt", s.dt)?;
        positive("solver.horizon", s.horizon)?;
        positive("solver.record_every", s.record_every)?;
        if s.record_every < s.dt {
            return Err(ConfigError::new("solver.record_every", "must be at least solver.dt"));
        }
        positive("solver.amplitude", s.amplitude)?;
        if !(s.fit_window[0] >= 0.0 && s.fit_window[1] > s.fit_window[0]) {
            return Err(ConfigError::new("solver.fit_window", "must be an increasing pair of non-negative times"));
        }
        if !(self.w1p.p >= 1.0 && self.w1p.p.is_finite()) {
            return Err(ConfigError::new("w1p.p", format!("must be at least 1, got {}", self.w1p.p)));
        }
        if self.w1p.exponents.is_empty() || self.w1p.exponents.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(ConfigError::new("w1p.exponents", "must be a non-empty list of positive exponents"));
        }
        if self.w1p.levels.len() < 2 || self.w1p.levels.windows(2).any(|w| w[1] <= w[0]) || self.w1p.levels[0] == 0 {
            return Err(ConfigError::new("w1p.levels", "must hold at least two strictly increasing positive levels"));
        }
        let v = &self.verify;
        nonzero("verify.geometry_samples", v.geometry_samples)?;
        nonzero("verify.jacobian_samples", v.jacobian_samples)?;
        nonzero("verify.velocity_lemma_samples", v.velocity_lemma_samples)?;
        nonzero("verify.kernel_samples", v.kernel_samples)?;
        nonzero("verify.nonlocal_samples", v.nonlocal_samples)?;
        nonzero("verify.boundary_samples", v.boundary_samples)?;
        if self.experiment.kind == ExperimentKind::Lemma && self.experiment.lemma.is_none() {
            return Err(ConfigError::new("experiment.lemma", "required when experiment.kind = \"lemma\""));
        }
        Ok(())
    }

    fn domain_height(&self) -> f64 {
        match self.domain.kind {
            DomainName::Ellipsoid => self.domain.axes[2],
            _ => 1.0,
        }
    }

    pub fn domain(&self) -> ConvexDomain {
        let kind = match self.domain.kind {
            DomainName::Ball => DomainKind::UnitBall,
            DomainName::Ellipsoid => {
                let [a, b, c] = self.domain.axes;
                DomainKind::Ellipsoid { a, b, c }
            }
            DomainName::QuarticBall => DomainKind::QuarticBall { kappa: self.domain.kappa },
        };
        ConvexDomain::new(kind).expect("validated domain")
    }

    pub fn wall_temperature(&self) -> WallTemperature {
        WallTemperature { base: self.wall.base, epsilon: self.wall.epsilon, profile: self.wall.profile }
    }

    pub fn kernel_params(&self) -> KernelParams {
        KernelParams {
            varrho: self.kernel.varrho,
            varrho_tilde: self.kernel.varrho_tilde,
            theta: self.kernel.theta,
            theta_tilde: self.kernel.theta_tilde,
            ..KernelParams::default()
        }
    }

    pub fn steady_options(&self) -> SteadyOptions {
        SteadyOptions {
            tol_fp: self.solver.tol_fp,
            max_iter: self.solver.max_iter,
            n_s: self.solver.n_s,
            anderson_depth: self.solver.anderson_depth,
            include_gamma: self.solver.include_gamma,
            ..SteadyOptions::default()
        }
    }

    pub fn transient_options(&self) -> TransientOptions {
        TransientOptions {
            dt: self.solver.dt,
            horizon: self.solver.horizon,
            record_every: self.solver.record_every,
            ..TransientOptions::default()
        }
    }

    pub fn measure_spec(&self) -> MeasureSpec {
        MeasureSpec::default()
    }

    pub fn verify_settings(&self) -> VerifySettings {
        let v = &self.verify;
        VerifySettings {
            seed: self.seed,
            geometry_samples: v.geometry_samples,
            jacobian_samples: v.jacobian_samples,
            velocity_lemma_samples: v.velocity_lemma_samples,
            kernel_samples: v.kernel_samples,
            nonlocal_samples: v.nonlocal_samples,
            boundary_samples: v.boundary_samples,
            w1p_exponents: self.w1p.exponents.clone(),
            w1p_levels: self.w1p.levels.clone(),
            ..VerifySettings::default()
        }
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
