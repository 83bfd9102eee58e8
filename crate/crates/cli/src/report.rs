//! The JSON report written by every analysis command.

use bayes_bmd::evidence::{MarginalLikelihood, SensitivityResult};
use bayes_bmd::inference::{BmdEstimates, Dose};
use bayes_bmd::sampler::BurnInDiagnostic;
use bayes_bmd::{
    ChainResult, ChainStatus, DoseResponseDataset, Elicitation, Gamma0Prior, MleResult, ModelKind,
    ScaledDataset, ScreenResult, XiFamily, XiPrior,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// JSON schema every report validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    DataFailure,
    AlgorithmFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub software: SoftwareInfo,
    pub command: String,
    /// The only field that differs between identical runs.
    pub generated_at: String,
    pub status: RunStatus,
    pub message: Option<String>,
    pub dataset: DatasetInfo,
    pub screen: Option<ScreenResult>,
    pub priors: Option<PriorInfo>,
    pub models: Vec<ModelReport>,
    pub bayes_factors: Vec<BayesFactorEntry>,
    pub sensitivity: Vec<SensitivityResult>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareInfo {
    pub name: String,
    pub version: String,
}

impl SoftwareInfo {
    pub fn current() -> Self {
        Self {
            name: "bbmd".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: String,
    /// SHA-256 of the doses, group sizes and responder counts.
    pub fingerprint: String,
    pub unit: String,
    /// Highest dose; scaled doses are original doses divided by this.
    pub scale: f64,
    pub doses: Vec<f64>,
    pub scaled_doses: Vec<f64>,
    pub group_sizes: Vec<u64>,
    pub responders: Vec<u64>,
}

impl DatasetInfo {
    pub fn new(path: String, data: &DoseResponseDataset) -> Self {
        let scaled: ScaledDataset = data.scaled();
        Self {
            path,
            fingerprint: data.fingerprint(),
            unit: data.unit_label().to_string(),
            scale: scaled.scale(),
            doses: data.doses().to_vec(),
            scaled_doses: scaled.doses().to_vec(),
            group_sizes: data.group_sizes().to_vec(),
            responders: data.responders().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorInfo {
    pub xi: XiPrior,
    pub gamma0: Gamma0Prior,
    pub description: String,
    pub elicitation: Option<ElicitationInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationInfo {
    /// Quartiles on the scaled dose axis.
    pub xi_quartiles: [f64; 2],
    pub gamma0_quartiles: [f64; 2],
    pub xi_family: XiFamily,
    pub xi: Elicitation,
    pub gamma0: Elicitation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainInfo {
    /// Seed of the accepted (or last) chain.
    pub seed: u64,
    pub chain_length: usize,
    pub burn_in_index: usize,
    pub retained: usize,
    pub acceptance_rate: f64,
    pub restarts_used: usize,
    pub attempts: usize,
    pub status: ChainStatus,
    pub diagnostics: Option<BurnInDiagnostic>,
}

impl ChainInfo {
    pub fn new(chain: &ChainResult) -> Self {
        Self {
            seed: chain.seed,
            chain_length: chain.chain_length(),
            burn_in_index: chain.burn_in_index,
            retained: chain.retained().len(),
            acceptance_rate: chain.acceptance_rate,
            restarts_used: chain.restarts_used,
            attempts: chain.attempts,
            status: chain.status,
            diagnostics: chain.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianParameters {
    pub xi: Dose,
    pub gamma0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraRiskAt {
    /// `bayesian_bmdl` or `frequentist_bmdl`.
    pub location: String,
    pub dose: Dose,
    pub mean: f64,
    pub sd: f64,
    pub percentile_95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelKind,
    pub status: RunStatus,
    pub message: Option<String>,
    pub mle: Option<MleResult>,
    pub chain: Option<ChainInfo>,
    pub estimates: Option<BmdEstimates>,
    pub median_parameters: Option<MedianParameters>,
    pub extra_risk: Vec<ExtraRiskAt>,
    /// Dose where the upper credible band reaches the BMR.
    pub band_bmd: Option<Dose>,
    pub marginal: Option<MarginalLikelihood>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorEntry {
    pub numerator: ModelKind,
    pub denominator: ModelKind,
    pub log_value: f64,
    pub value: f64,
    pub category: String,
}

impl BenchmarkReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
