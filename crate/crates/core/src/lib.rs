//! Bayesian benchmark-dose (BMD) analysis for quantal dose-response data.
//!
//! The dose-response models are reparameterized so that the benchmark dose
//! `xi` and the background risk `gamma0` are the model parameters. Priors on
//! both can be elicited from expert quartiles; the joint posterior is sampled
//! with an adaptive Metropolis chain and summarized into BMD estimates, lower
//! credible limits (BMDLs), extra-risk summaries and credible bands. Marginal
//! likelihoods are estimated by bridge sampling for Bayes factors and for
//! epsilon-contamination sensitivity studies. A maximum-likelihood fit with a
//! Wald limit serves as a frequentist baseline.
//!
//! All computation happens on the scaled dose axis (highest dose = 1); values
//! are converted back to original units only for reporting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evidence;
pub mod freq;
pub mod inference;
pub mod model;
pub mod posterior;
pub mod priors;
pub mod sampler;
pub mod special;

pub use error::{BmdError, Result};
pub use evidence::{
    bayes_factor, bridge_marginal, sensitivity_study, Gamma0Choice, MarginalLikelihood,
    Scenario, SensitivityResult, SensitivitySetup,
};
pub use freq::{fit_mle, wald_bmdl, MleResult};
pub use inference::{
    bmd_estimates, credible_band, extra_risk_posterior, kde, quantile, BmdEstimates,
    CredibleBand, ExtraRiskSummary,
};
pub use model::{
    bmd_from_slope, extra_risk, log_likelihood, risk, screen_data, to_original_units,
    DoseResponseDataset, ModelKind, RiskParams, ScaledDataset, ScreenResult,
};
pub use posterior::{LogTarget, Posterior};
pub use priors::{
    elicit_gamma0, elicit_xi, objective_defaults, ElicitedQuartiles, Elicitation, Gamma0Prior,
    XiFamily, XiPrior,
};
pub use sampler::{
    burn_in_diagnostic, model_starting_point, run_chain, run_with_restarts, starting_point, ChainResult, ChainStatus,
    SamplerConfig, StartingPoint,
};
