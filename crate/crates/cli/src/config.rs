//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use bayes_bmd::evidence::{EpsilonSeeding, Gamma0Choice, Scenario, SensitivitySetup};
use bayes_bmd::{Gamma0Prior, ModelKind, SamplerConfig, XiFamily, XiPrior};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset CSV; relative paths resolve against the config file's directory.
    pub dataset: PathBuf,
    #[serde(default = "default_unit")]
    pub dose_unit: String,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_bmr")]
    pub bmr: f64,
    /// `a / b` of the bilinear loss.
    #[serde(default = "default_loss_ratio")]
    pub loss_ratio: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub export_chain: bool,
    /// Estimate marginal likelihoods during `fit`.
    #[serde(default = "default_true")]
    pub marginal: bool,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
}

fn default_unit() -> String {
    "dose".into()
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::QuantalLinear]
}

fn default_bmr() -> f64 {
    0.1
}

fn default_loss_ratio() -> f64 {
    0.5
}

fn default_level() -> f64 {
    0.95
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("bbmd-output")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    /// Solve for prior parameters from quartiles.
    Elicit,
    /// Use the parameters given in `xi` and `gamma0`.
    Explicit,
    /// `IG(0.001, 0.001)` and `Beta(1/2, 1/2)`.
    #[default]
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuartileUnits {
    /// Fractions of the highest dose.
    #[default]
    Scaled,
    /// The dataset's own dose units.
    Original,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default)]
    pub mode: PriorMode,
    #[serde(default)]
    pub units: QuartileUnits,
    /// Lower quartile and median of `xi`.
    pub xi_quartiles: Option<[f64; 2]>,
    #[serde(default = "default_family")]
    pub xi_family: XiFamily,
    /// Lower quartile and median of `gamma0`.
    pub gamma0_quartiles: Option<[f64; 2]>,
    pub xi: Option<XiPrior>,
    pub gamma0: Option<Gamma0Prior>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mode: PriorMode::default(),
            units: QuartileUnits::default(),
            xi_quartiles: None,
            xi_family: default_family(),
            gamma0_quartiles: None,
            xi: None,
            gamma0: None,
        }
    }
}

fn default_family() -> XiFamily {
    XiFamily::InverseGamma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_gamma0_priors")]
    pub gamma0_priors: Vec<Gamma0Choice>,
    #[serde(default = "SensitivitySetup::default_grid")]
    pub epsilon_grid: Vec<f64>,
    #[serde(default)]
    pub seeding: EpsilonSeeding,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            scenarios: default_scenarios(),
            gamma0_priors: default_gamma0_priors(),
            epsilon_grid: SensitivitySetup::default_grid(),
            seeding: EpsilonSeeding::default(),
        }
    }
}

fn default_scenarios() -> Vec<Scenario> {
    Scenario::ALL.to_vec()
}

fn default_gamma0_priors() -> Vec<Gamma0Choice> {
    vec![Gamma0Choice::Objective, Gamma0Choice::Elicited]
}

impl RunConfig {
    /// Reads and validates a config file. The dataset path is resolved
    /// relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if config.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                config.dataset = dir.join(&config.dataset);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.bmr > 0.0 && self.bmr < 1.0) {
            return bad(format!("bmr must lie in (0, 1), got {}", self.bmr));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if !(self.loss_ratio > 0.0 && self.loss_ratio.is_finite()) {
            return bad(format!("loss_ratio must be positive, got {}", self.loss_ratio));
        }
        if self.models.is_empty() {
            return bad("models must name at least one model".into());
        }
        if (1..self.models.len()).any(|i| self.models[..i].contains(&self.models[i])) {
            return bad("models must not repeat a model".into());
        }
        if !self.dataset.is_file() {
            return bad(format!("dataset {} does not exist", self.dataset.display()));
        }
        self.sampler
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.priors.validate()
    }
}

impl PriorConfig {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        match self.mode {
            PriorMode::Elicit => {
                if self.xi_quartiles.is_none() || self.gamma0_quartiles.is_none() {
                    return bad("prior mode \"elicit\" needs xi_quartiles and gamma0_quartiles");
                }
            }
            PriorMode::Explicit => {
                let (Some(xi), Some(g)) = (&self.xi, &self.gamma0) else {
                    return bad("prior mode \"explicit\" needs xi and gamma0 tables");
                };
                xi.validate().map_err(|e| CliError::Config(e.to_string()))?;
                g.validate().map_err(|e| CliError::Config(e.to_string()))?;
            }
            PriorMode::Objective => {}
        }
        Ok(())
    }
}
