//! Run configuration: one TOML file with nested blocks. See docs/config.md for the grammar.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use wavetrain::bloch::ClusterPolicy;
use wavetrain::model::{system_by_name, FluxSystem};
use wavetrain::nonlinear::{Perturbation, Scheme, Shape, SimConfig};
use wavetrain::profile::{Closure, FreeParam, PhaseCondition};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseSpec {
    FixMaxAtZero,
    IntegralPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosureSpec {
    /// ū₁(0) = amplitude with the speed free.
    Amplitude,
    /// (s, q) fixed at speed_guess and flux, period free.
    FixedParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBlock {
    pub amplitude: f64,
    pub period_guess: f64,
    pub num_points: usize,
    #[serde(default)]
    pub speed_guess: f64,
    pub flux: Vec<f64>,
    #[serde(default = "default_phase")]
    pub phase: PhaseSpec,
    #[serde(default = "default_closure")]
    pub closure: ClosureSpec,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default = "default_iters")]
    pub max_iterations: usize,
}

fn default_phase() -> PhaseSpec {
    PhaseSpec::FixMaxAtZero
}
fn default_closure() -> ClosureSpec {
    ClosureSpec::Amplitude
}
fn default_tol() -> f64 {
    1e-12
}
fn default_iters() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterBlock {
    pub min_radius: f64,
    pub relative_radius: f64,
    pub separation_factor: f64,
    pub singular_value_tol: f64,
}

impl Default for ClusterBlock {
    fn default() -> Self {
        let p = ClusterPolicy::default();
        Self {
            min_radius: p.min_radius,
            relative_radius: p.relative_radius,
            separation_factor: p.separation_factor,
            singular_value_tol: p.singular_value_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralBlock {
    pub modes: usize,
    pub xi_uniform: usize,
    pub xi_refined: usize,
    /// Smallest |ξ| of the refined part, as a fraction of π/X.
    pub xi_smallest: f64,
    pub branches: usize,
    #[serde(default)]
    pub cluster: ClusterBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowfreqBlock {
    /// Largest ladder |ξ| as a fraction of π/X.
    pub ladder_top: f64,
    pub ladder_points: usize,
    /// Continuation steps for the Whitham differences.
    pub fd_steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBlock {
    pub periods: usize,
    pub modes: usize,
    /// Low-frequency cutoff; probed from the spectrum when absent.
    pub eps: Option<f64>,
    pub times: Vec<f64>,
    pub p: Vec<f64>,
    /// Source nodes for kernel columns, as fractions of the domain length.
    pub nodes: Vec<f64>,
    pub window: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearBlock {
    pub periods: usize,
    pub nodes_per_period: usize,
    pub dt: f64,
    pub horizon: f64,
    pub snapshot_interval: f64,
    #[serde(default = "default_k")]
    pub k_norm: u32,
    pub shape: ShapeSpec,
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
    pub mix: Vec<f64>,
    /// Window of the exponential growth fit (linear-regime run).
    pub growth_window: [f64; 2],
    /// Window of the algebraic rate fits (gated run).
    pub rate_window: [f64; 2],
}

fn default_k() -> u32 {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeSpec {
    Gaussian,
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    pub profile: ProfileBlock,
    pub spectral: SpectralBlock,
    pub lowfreq: LowfreqBlock,
    pub linear: LinearBlock,
    pub nonlinear: NonlinearBlock,
    pub output: OutputBlock,
}

/// Environment variable overriding `output.directory`.
pub const OUT_DIR_ENV: &str = "WAVETRAIN_OUT";

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            cfg.output.directory = dir.into();
        }
        Ok(cfg)
    }

    pub fn flux_system(&self) -> Result<FluxSystem, ConfigError> {
        system_by_name(&self.system.name, &self.system.params).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn phase(&self) -> PhaseCondition {
        match self.profile.phase {
            PhaseSpec::FixMaxAtZero => PhaseCondition::FixMaxAtZero,
            PhaseSpec::IntegralPhase => PhaseCondition::IntegralPhase,
        }
    }

    pub fn closure(&self) -> Closure {
        match self.profile.closure {
            ClosureSpec::Amplitude => Closure::Amplitude { component: 0, value: self.profile.amplitude, free: FreeParam::Speed },
            ClosureSpec::FixedParams => Closure::FixedParams,
        }
    }

    pub fn cluster_policy(&self) -> ClusterPolicy {
        let c = &self.spectral.cluster;
        ClusterPolicy {
            min_radius: c.min_radius,
            relative_radius: c.relative_radius,
            separation_factor: c.separation_factor,
            singular_value_tol: c.singular_value_tol,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let b = &self.nonlinear;
        SimConfig {
            periods: b.periods,
            nodes_per_period: b.nodes_per_period,
            dt: b.dt,
            horizon: b.horizon,
            snapshot_interval: b.snapshot_interval,
            scheme: Scheme::ExponentialIntegrator,
            perturbation: Perturbation {
                shape: match b.shape {
                    ShapeSpec::Gaussian => Shape::Gaussian,
                    ShapeSpec::Bump => Shape::Bump,
                },
                amplitude: b.amplitude,
                width: b.width,
                center: b.center,
                mix: b.mix.clone(),
            },
            k_norm: b.k_norm,
        }
    }

    /// Checks every block against the preconditions of the stage that consumes it.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sys = self.flux_system()?;
        let p = &self.profile;
        if p.flux.len() != sys.n {
            return bad(format!("profile.flux has {} entries, system has n = {}", p.flux.len(), sys.n));
        }
        if p.num_points < 8 || p.num_points % 2 != 0 {
            return bad("profile.num_points must be even and at least 8");
        }
        if !(p.period_guess > 0.0) || !p.amplitude.is_finite() || !(p.tolerance > 0.0) || p.max_iterations == 0 {
            return bad("profile needs a positive period guess, finite amplitude, positive tolerance and iterations");
        }
        let s = &self.spectral;
        if s.modes < 16 || s.modes % 2 != 0 {
            return bad("spectral.modes must be even and at least 16");
        }
        if s.xi_uniform < 2 || !(s.xi_smallest > 0.0 && s.xi_smallest < 1.0) || s.branches < sys.n + 1 {
            return bad("spectral grid needs xi_uniform >= 2, 0 < xi_smallest < 1 and branches >= n + 1");
        }
        let c = &s.cluster;
        if ![c.min_radius, c.relative_radius, c.separation_factor, c.singular_value_tol].iter().all(|v| *v > 0.0) {
            return bad("cluster policy entries must be positive");
        }
        let l = &self.lowfreq;
        if l.ladder_points < 4 || !(l.ladder_top > 0.0 && l.ladder_top < 1.0) {
            return bad("lowfreq ladder needs >= 4 points and 0 < ladder_top < 1");
        }
        if l.fd_steps.is_empty() || l.fd_steps.iter().any(|h| !(*h > 0.0)) {
            return bad("lowfreq.fd_steps must be positive");
        }
        let lin = &self.linear;
        if lin.periods == 0 || lin.modes < 16 || lin.modes % 2 != 0 {
            return bad("linear block needs periods >= 1 and even modes >= 16");
        }
        if lin.eps.is_some_and(|e| !(e > 0.0)) {
            return bad("linear.eps must be positive");
        }
        if lin.times.iter().any(|t| !(*t >= 0.0)) || lin.p.iter().any(|p| !(*p >= 1.0)) {
            return bad("linear.times must be nonnegative and p >= 1");
        }
        if lin.nodes.iter().any(|x| !(0.0..1.0).contains(x)) {
            return bad("linear.nodes are fractions of the domain in [0, 1)");
        }
        let nl = &self.nonlinear;
        if nl.mix.len() != sys.n {
            return bad(format!("nonlinear.mix needs {} entries", sys.n));
        }
        if nl.periods == 0 || nl.nodes_per_period < 8 || nl.nodes_per_period % 4 != 0 {
            return bad("nonlinear block needs periods >= 1 and nodes_per_period a multiple of 4, at least 8");
        }
        if !(nl.dt > 0.0 && nl.horizon >= 0.0 && nl.snapshot_interval > 0.0 && nl.width > 0.0) {
            return bad("nonlinear dt, snapshot_interval and width must be positive");
        }
        if !(nl.growth_window[0] < nl.growth_window[1]) || !(nl.rate_window[0] < nl.rate_window[1]) {
            return bad("fit windows must be increasing");
        }
        if self.output.formats.is_empty() {
            return bad("output.formats is empty");
        }
        Ok(())
    }
}
