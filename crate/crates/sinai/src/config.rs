//! Experiment configuration: one JSON document, CLI flags override keys,
//! and the effective config is echoed into every report.

use crate::env::{EnvDistribution, EnvKind};
use crate::error::{Result, SinaiError};
use crate::observables::{BumpKind, FunctionSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub rho0: f64,
    pub seed: u64,
    /// Half-width of the window materialized by the `env` command.
    pub half_width: i64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            kind: EnvKind::TwoPointSymmetric,
            rho0: 0.25,
            seed: 1,
            half_width: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Split,
    PerParticle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub lambda: f64,
    pub t: f64,
    pub trials: usize,
    pub engine: EngineKind,
    pub window_margin: i64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            lambda: 1.0,
            t: 1e6,
            trials: 20,
            engine: EngineKind::Split,
            window_margin: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValleysConfig {
    pub gamma: f64,
    pub k_support: f64,
}

impl Default for ValleysConfig {
    fn default() -> Self {
        ValleysConfig {
            gamma: 0.0,
            k_support: 5.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservablesConfig {
    pub f_kind: BumpKind,
    pub amplitude: f64,
    pub cte: f64,
    pub lambdas: Vec<f64>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        ObservablesConfig {
            f_kind: BumpKind::TriangleBump,
            amplitude: 1.0,
            cte: 1.0,
            lambdas: vec![0.5, 1.0, 2.0],
        }
    }
}

/// Renewal-harness knobs. The depth threshold is a raw value (the harness
/// works on the environment alone) and the law defaults to a fine-increment
/// two-point environment so lattice discreteness stays negligible at the
/// chosen depth.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenewalConfig {
    pub kind: EnvKind,
    pub rho0: f64,
    pub depth: f64,
    pub envs: usize,
    pub target_extrema: usize,
    /// Parameters for the n(f) count statistics gathered from the cover.
    pub nf_t: f64,
    pub nf_k: f64,
    pub nf_seeds: usize,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        RenewalConfig {
            kind: EnvKind::TwoPointSymmetric,
            rho0: 0.4,
            depth: 40.0,
            envs: 5000,
            target_extrema: 30,
            nf_t: 1.5e6,
            nf_k: 5.0,
            nf_seeds: 5000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub envs: usize,
    pub starts_per_valley: usize,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            envs: 50,
            starts_per_valley: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "runs/out".to_string(),
            formats: vec!["json".to_string(), "csv".to_string()],
        }
    }
}

/// Scale knob for the `check` command; the default runs the full
/// acceptance-scale suite.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub quick: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub sim: SimConfig,
    pub valleys: ValleysConfig,
    pub observables: ObservablesConfig,
    pub renewal: RenewalConfig,
    pub localize: LocalizeConfig,
    pub output: OutputConfig,
    pub check: CheckConfig,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SinaiError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| SinaiError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Validate every module precondition before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.distribution()?;
        if self.env.half_width < 1 {
            return Err(SinaiError::config(format!(
                "env.half_width must be at least 1, got {}",
                self.env.half_width
            )));
        }
        if !(self.sim.lambda > 0.0 && self.sim.lambda.is_finite()) {
            return Err(SinaiError::config(format!(
                "sim.lambda must be positive, got {}",
                self.sim.lambda
            )));
        }
        if !(self.sim.t > std::f64::consts::E) {
            return Err(SinaiError::config(format!(
                "sim.t must exceed e, got {}",
                self.sim.t
            )));
        }
        if self.sim.trials == 0 {
            return Err(SinaiError::config("sim.trials must be at least 1".to_string()));
        }
        if self.sim.window_margin < 0 {
            return Err(SinaiError::config("sim.window_margin must be >= 0".to_string()));
        }
        if !(self.valleys.gamma >= 0.0) {
            return Err(SinaiError::config(format!(
                "valleys.gamma must be >= 0, got {}",
                self.valleys.gamma
            )));
        }
        if !(self.valleys.k_support > 0.0) {
            return Err(SinaiError::config(format!(
                "valleys.k_support must be positive, got {}",
                self.valleys.k_support
            )));
        }
        self.function_spec()?;
        if !(self.observables.cte > 0.0) {
            return Err(SinaiError::config(format!(
                "observables.cte must be positive, got {}",
                self.observables.cte
            )));
        }
        for &l in &self.observables.lambdas {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(SinaiError::config(format!(
                    "observables.lambdas entries must be >= 0, got {l}"
                )));
            }
        }
        EnvDistribution::new(self.renewal.kind, self.renewal.rho0)?;
        if !(self.renewal.depth > 0.0) {
            return Err(SinaiError::config("renewal.depth must be positive".to_string()));
        }
        if self.renewal.target_extrema < 3 {
            return Err(SinaiError::config(
                "renewal.target_extrema must be at least 3".to_string(),
            ));
        }
        if !(self.renewal.nf_t > std::f64::consts::E) || !(self.renewal.nf_k > 0.0) {
            return Err(SinaiError::config("renewal nf_t/nf_k out of range".to_string()));
        }
        Ok(())
    }

    pub fn distribution(&self) -> Result<EnvDistribution> {
        EnvDistribution::new(self.env.kind, self.env.rho0)
    }

    pub fn renewal_distribution(&self) -> Result<EnvDistribution> {
        EnvDistribution::new(self.renewal.kind, self.renewal.rho0)
    }

    pub fn function_spec(&self) -> Result<FunctionSpec> {
        FunctionSpec::new(
            self.observables.f_kind,
            self.valleys.k_support,
            self.observables.amplitude,
        )
    }
}

/// CLI flag overrides applied on top of the (file or default) config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub t: Option<f64>,
    pub trials: Option<usize>,
    pub out_dir: Option<String>,
    pub gamma: Option<f64>,
    pub k_support: Option<f64>,
    pub kind: Option<EnvKind>,
    pub rho0: Option<f64>,
    pub quick: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.env.seed = seed;
        }
        if let Some(t) = self.t {
            cfg.sim.t = t;
        }
        if let Some(trials) = self.trials {
            cfg.sim.trials = trials;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = dir.clone();
        }
        if let Some(gamma) = self.gamma {
            cfg.valleys.gamma = gamma;
        }
        if let Some(k) = self.k_support {
            cfg.valleys.k_support = k;
        }
        if let Some(kind) = self.kind {
            cfg.env.kind = kind;
        }
        if let Some(rho0) = self.rho0 {
            cfg.env.rho0 = rho0;
        }
        if let Some(quick) = self.quick {
            cfg.check.quick = quick;
        }
    }
}
