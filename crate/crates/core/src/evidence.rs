//! Marginal likelihoods by bridge sampling, Bayes factors, and the
//! epsilon-contamination sensitivity study.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BmdError, Result};
use crate::inference::{linspace, quantile};
use crate::model::{screen_data, ModelKind, ScaledDataset};
use crate::posterior::{LogTarget, Posterior};
use crate::priors::{objective_defaults, Gamma0Prior, XiPrior};
use crate::sampler::{
    run_with_restarts, spectral_density_zero, ChainResult, ChainStatus, SamplerConfig,
};

/// Bandwidth of the Gaussian smoother applied to the BMDL(epsilon) curve.
pub const SMOOTHING_BANDWIDTH: f64 = 0.15;
const SMOOTHED_POINTS: usize = 101;

/// Raw output of the geometric bridge estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeEstimate {
    pub log_value: f64,
    /// Delta-method standard error of `log_value`.
    pub log_se: f64,
    pub n_proposal: usize,
    pub n_chain: usize,
}

/// Estimates the normalizing constant of `target` from posterior `draws`.
///
/// The proposal `g` is the bivariate normal with the draws' mean and
/// covariance, and `len(draws)` points are drawn from it. The estimate is
/// `mean_g sqrt(p / g) / mean_chain sqrt(g / p)`, formed in log space; proposal
/// points outside the parameter domain contribute zero to the numerator.
pub fn bridge_estimate<T: LogTarget + ?Sized>(
    draws: &[[f64; 2]],
    target: &T,
    seed: u64,
) -> Result<BridgeEstimate> {
    let n = draws.len();
    if n < 20 {
        return Err(BmdError::InvalidConfig(format!(
            "bridge sampling needs at least 20 draws, got {n}"
        )));
    }
    let g = Gaussian2::fit(draws)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let numerator: Vec<f64> = (0..n)
        .map(|_| {
            let theta = g.sample(&mut rng);
            let lp = target.log_density(theta[0], theta[1]);
            if lp == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                0.5 * (lp - g.log_density(theta))
            }
        })
        .collect();
    let denominator: Vec<f64> = draws
        .iter()
        .map(|&theta| 0.5 * (g.log_density(theta) - target.log_density(theta[0], theta[1])))
        .collect();
    if denominator.iter().any(|v| !v.is_finite()) {
        return Err(BmdError::Domain(
            "a posterior draw has zero target density".into(),
        ));
    }

    let (log_num, rel_var_num) = log_mean_exp(&numerator, false);
    let (log_den, rel_var_den) = log_mean_exp(&denominator, true);
    if !log_num.is_finite() {
        return Err(BmdError::Domain(
            "every proposal draw fell outside the parameter domain".into(),
        ));
    }
    Ok(BridgeEstimate {
        log_value: log_num - log_den,
        log_se: (rel_var_num + rel_var_den).sqrt(),
        n_proposal: n,
        n_chain: n,
    })
}

/// `log(mean(exp(v)))` and the squared relative standard error of the mean.
///
/// For autocorrelated input the variance of the mean uses the spectral
/// density at zero, falling back to the independent-sample formula when the
/// terms are constant.
fn log_mean_exp(v: &[f64], autocorrelated: bool) -> (f64, f64) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (max, f64::INFINITY);
    }
    let scaled: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let n = scaled.len() as f64;
    let m = scaled.iter().sum::<f64>() / n;
    let var = scaled.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let var_of_mean = if autocorrelated {
        spectral_density_zero(&scaled).unwrap_or(var) / n
    } else {
        var / n
    };
    (max + m.ln(), var_of_mean / (m * m))
}

struct Gaussian2 {
    mean: [f64; 2],
    chol: [[f64; 2]; 2],
    log_norm: f64,
}

impl Gaussian2 {
    fn fit(draws: &[[f64; 2]]) -> Result<Self> {
        let n = draws.len() as f64;
        let mut mean = [0.0; 2];
        for d in draws {
            mean[0] += d[0] / n;
            mean[1] += d[1] / n;
        }
        let mut cov = [[0.0; 2]; 2];
        for d in draws {
            let e = [d[0] - mean[0], d[1] - mean[1]];
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += e[i] * e[j] / (n - 1.0);
                }
            }
        }
        let singular = || {
            BmdError::Singular(format!(
                "empirical covariance of the retained draws {cov:?}"
            ))
        };
        let l00 = cov[0][0].sqrt();
        if !(l00 > 0.0) {
            return Err(singular());
        }
        let l10 = cov[1][0] / l00;
        let rem = cov[1][1] - l10 * l10;
        if !(rem > 1e-14 * cov[1][1]) {
            return Err(singular());
        }
        let l11 = rem.sqrt();
        Ok(Self {
            mean,
            chol: [[l00, 0.0], [l10, l11]],
            log_norm: -(2.0 * std::f64::consts::PI).ln() - l00.ln() - l11.ln(),
        })
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> [f64; 2] {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        [
            self.mean[0] + self.chol[0][0] * z0,
            self.mean[1] + self.chol[1][0] * z0 + self.chol[1][1] * z1,
        ]
    }

    fn log_density(&self, x: [f64; 2]) -> f64 {
        let z0 = (x[0] - self.mean[0]) / self.chol[0][0];
        let z1 = (x[1] - self.mean[1] - self.chol[1][0] * z0) / self.chol[1][1];
        self.log_norm - 0.5 * (z0 * z0 + z1 * z1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalLikelihood {
    pub log_value: f64,
    pub log_se: f64,
    pub model: ModelKind,
    pub prior: String,
    /// Proposal draws; equal to the retained chain length.
    pub n_proposal: usize,
    pub n_chain: usize,
    /// Identifies the data and likelihood-constant convention.
    pub fingerprint: String,
}

/// Bridge-sampling marginal likelihood of `posterior` from its retained chain.
pub fn bridge_marginal(
    chain: &ChainResult,
    posterior: &Posterior,
    seed: u64,
) -> Result<MarginalLikelihood> {
    if !chain.is_ok() {
        return Err(BmdError::AlgorithmFailure {
            attempts: chain.attempts,
        });
    }
    let est = bridge_estimate(chain.retained(), posterior, seed)?;
    Ok(MarginalLikelihood {
        log_value: est.log_value,
        log_se: est.log_se,
        model: posterior.model,
        prior: format!(
            "xi ~ {}; gamma0 ~ {}",
            describe_xi_prior(&posterior.xi_prior),
            describe_gamma0_prior(&posterior.gamma0_prior)
        ),
        n_proposal: est.n_proposal,
        n_chain: est.n_chain,
        fingerprint: format!(
            "{}:{}",
            posterior.data.base().fingerprint(),
            if posterior.binomial_constants {
                "binomial"
            } else {
                "kernel"
            }
        ),
    })
}

pub fn describe_xi_prior(prior: &XiPrior) -> String {
    match prior {
        XiPrior::InverseGamma { alpha, beta } => format!("IG({alpha}, {beta})"),
        XiPrior::Gamma { alpha, beta } => format!("Gamma({alpha}, {beta})"),
        XiPrior::Mixture {
            base,
            contaminant,
            epsilon,
        } => format!(
            "{} * {} + {epsilon} * {}",
            1.0 - epsilon,
            describe_xi_prior(base),
            describe_xi_prior(contaminant)
        ),
    }
}

pub fn describe_gamma0_prior(prior: &Gamma0Prior) -> String {
    format!("Beta({}, {})", prior.psi, prior.omega)
}

/// `log m_a - log m_b`.
pub fn log_bayes_factor(a: &MarginalLikelihood, b: &MarginalLikelihood) -> Result<f64> {
    if a.fingerprint != b.fingerprint {
        return Err(BmdError::DataMismatch(a.fingerprint.clone(), b.fingerprint.clone()));
    }
    Ok(a.log_value - b.log_value)
}

/// `m_a / m_b`.
pub fn bayes_factor(a: &MarginalLikelihood, b: &MarginalLikelihood) -> Result<f64> {
    log_bayes_factor(a, b).map(f64::exp)
}

/// Verbal strength of evidence for the first model on the Kass-Raftery scale.
pub fn evidence_category(bf: f64) -> &'static str {
    if bf < 1.0 {
        "negative"
    } else if bf < 3.0 {
        "not worth more than a bare mention"
    } else if bf < 20.0 {
        "positive"
    } else if bf <= 150.0 {
        "strong"
    } else {
        "very strong"
    }
}

/// Base and contaminating `xi` priors of a sensitivity scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Objective `IG(0.001, 0.001)` contaminated by objective `Gamma(0.001, 0.001)`.
    S1,
    /// Elicited inverse gamma contaminated by elicited gamma.
    S2,
    /// Elicited inverse gamma contaminated by objective `Gamma(0.001, 0.001)`.
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
        }
    }

    fn priors(self, elicited: Option<&ElicitedPriors>) -> Result<(XiPrior, XiPrior)> {
        let objective_gamma = XiPrior::gamma(0.001, 0.001);
        let need = || {
            elicited.ok_or_else(|| {
                BmdError::InvalidConfig(format!(
                    "scenario {} needs elicited priors",
                    self.label()
                ))
            })
        };
        Ok(match self {
            Scenario::S1 => (objective_defaults().0, objective_gamma),
            Scenario::S2 => {
                let e = need()?;
                (e.xi_inverse_gamma.clone(), e.xi_gamma.clone())
            }
            Scenario::S3 => (need()?.xi_inverse_gamma.clone(), objective_gamma),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma0Choice {
    Elicited,
    /// Jeffreys `Beta(1/2, 1/2)`.
    Objective,
}

/// Elicited priors feeding the scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitedPriors {
    pub xi_inverse_gamma: XiPrior,
    pub xi_gamma: XiPrior,
    pub gamma0: Gamma0Prior,
}

/// How chains at different grid points are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonSeeding {
    /// Grid point `i` uses `seed + i`.
    #[default]
    Offset,
    /// Every grid point uses `seed`.
    Common,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySetup {
    pub data: ScaledDataset,
    pub model: ModelKind,
    pub bmr: f64,
    pub elicited: Option<ElicitedPriors>,
    pub epsilon_grid: Vec<f64>,
    pub sampler: SamplerConfig,
    pub seeding: EpsilonSeeding,
}

impl SensitivitySetup {
    /// The default grid `0, 0.1, ..., 1`.
    pub fn default_grid() -> Vec<f64> {
        (0..=10).map(|i| i as f64 / 10.0).collect()
    }

    fn validate(&self) -> Result<()> {
        let grid = &self.epsilon_grid;
        if grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(BmdError::InvalidConfig("epsilon grid values must lie in [0, 1]".into()));
        }
        if grid.first() != Some(&0.0) || grid.last() != Some(&1.0) {
            return Err(BmdError::InvalidConfig(
                "epsilon grid must start at 0 and end at 1".into(),
            ));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BmdError::InvalidConfig(
                "epsilon grid must be strictly increasing".into(),
            ));
        }
        self.sampler.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRun {
    pub epsilon: f64,
    /// Base seed of the run; restarts add to it.
    pub seed: u64,
    pub status: ChainStatus,
    pub restarts_used: usize,
    pub bmdl_scaled: Option<f64>,
    pub bmdl_original: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub scenario: Scenario,
    pub gamma0_prior: Gamma0Choice,
    pub epsilon_grid: Vec<f64>,
    pub runs: Vec<EpsilonRun>,
    /// `(BMDL(0) - min BMDL) / BMDL(0)`; absent if the `epsilon = 0` run failed.
    pub delta: Option<f64>,
    /// `|BMDL(1) - BMDL(0)| m_q / m_0` on the scaled axis.
    pub d_q_abs: Option<f64>,
    pub log_m_q: Option<f64>,
    pub log_m_0: Option<f64>,
    /// Kernel-smoothed `(epsilon, BMDL)` in original units.
    pub smoothed: Vec<(f64, f64)>,
}

impl SensitivityResult {
    /// BMDL(epsilon) in original units, `None` where the chain failed.
    pub fn bmdl_curve(&self) -> Vec<Option<f64>> {
        self.runs.iter().map(|r| r.bmdl_original).collect()
    }
}

/// Runs the full sampler at each grid point under the contaminated prior
/// and summarizes the BMDL(epsilon) curve.
///
/// Failed chains are recorded in `runs` and skipped in the summaries.
pub fn sensitivity_study(
    setup: &SensitivitySetup,
    scenario: Scenario,
    gamma0_prior: Gamma0Choice,
) -> Result<SensitivityResult> {
    setup.validate()?;
    let screen = screen_data(setup.data.base())?;
    if !screen.pass {
        return Err(BmdError::DataFailure(format!(
            "flat or decreasing dose response (maximum empirical slope {})",
            screen.s_max
        )));
    }
    let (base, contaminant) = scenario.priors(setup.elicited.as_ref())?;
    let gamma0 = match gamma0_prior {
        Gamma0Choice::Objective => Gamma0Prior::jeffreys(),
        Gamma0Choice::Elicited => {
            setup
                .elicited
                .as_ref()
                .ok_or_else(|| BmdError::InvalidConfig("elicited gamma0 prior missing".into()))?
                .gamma0
        }
    };
    let last = setup.epsilon_grid.len() - 1;
    let outcomes: Vec<Result<(EpsilonRun, Option<ChainResult>, Posterior)>> = setup
        .epsilon_grid
        .par_iter()
        .enumerate()
        .map(|(i, &epsilon)| {
            let seed = match setup.seeding {
                EpsilonSeeding::Offset => setup.sampler.seed.wrapping_add(i as u64),
                EpsilonSeeding::Common => setup.sampler.seed,
            };
            let prior = XiPrior::mixture(base.clone(), contaminant.clone(), epsilon);
            let posterior =
                Posterior::new(setup.data.clone(), setup.model, setup.bmr, prior, gamma0);
            let chain = run_with_restarts(&posterior, &setup.sampler.clone().with_seed(seed))?;
            let bmdl = chain.is_ok().then(|| quantile(&chain.retained_xi(), 0.05));
            let run = EpsilonRun {
                epsilon,
                seed,
                status: chain.status,
                restarts_used: chain.restarts_used,
                bmdl_scaled: bmdl,
                bmdl_original: bmdl.map(|b| setup.data.to_original(b)),
            };
            let keep = (i == 0 || i == last) && chain.is_ok();
            Ok((run, keep.then_some(chain), posterior))
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let marginal = |idx: usize| -> Result<Option<f64>> {
        let (run, chain, posterior) = &outcomes[idx];
        match chain {
            Some(c) => Ok(Some(bridge_estimate(c.retained(), posterior, run.seed)?.log_value)),
            None => Ok(None),
        }
    };
    let log_m_0 = marginal(0)?;
    let log_m_q = marginal(last)?;
    let runs: Vec<EpsilonRun> = outcomes.into_iter().map(|o| o.0).collect();

    let bmdl0 = runs[0].bmdl_scaled;
    let delta = bmdl0.map(|b0| {
        let min = runs
            .iter()
            .filter_map(|r| r.bmdl_scaled)
            .fold(f64::INFINITY, f64::min);
        (b0 - min) / b0
    });
    let d_q_abs = match (bmdl0, runs[last].bmdl_scaled, log_m_0, log_m_q) {
        (Some(b0), Some(b1), Some(m0), Some(mq)) => Some(d_q(b0, b1, mq, m0)),
        _ => None,
    };
    let points: Vec<(f64, f64)> = runs
        .iter()
        .filter_map(|r| r.bmdl_original.map(|b| (r.epsilon, b)))
        .collect();
    Ok(SensitivityResult {
        scenario,
        gamma0_prior,
        epsilon_grid: setup.epsilon_grid.clone(),
        runs,
        delta,
        d_q_abs,
        log_m_q,
        log_m_0,
        smoothed: smooth_curve(&points, SMOOTHING_BANDWIDTH, SMOOTHED_POINTS),
    })
}

/// `|bmdl_1 - bmdl_0| exp(log_m_q - log_m_0)`.
pub fn d_q(bmdl_0: f64, bmdl_1: f64, log_m_q: f64, log_m_0: f64) -> f64 {
    (bmdl_1 - bmdl_0).abs() * (log_m_q - log_m_0).exp()
}

/// Nadaraya-Watson smoother with a Gaussian kernel, evaluated at `n`
/// equispaced points on `[0, 1]`.
pub fn smooth_curve(points: &[(f64, f64)], bandwidth: f64, n: usize) -> Vec<(f64, f64)> {
    if points.is_empty() {
        return Vec::new();
    }
    linspace(0.0, 1.0, n)
        .into_iter()
        .map(|x| {
            let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(e, b)| {
                let w = (-0.5 * ((x - e) / bandwidth).powi(2)).exp();
                (num + w * b, den + w)
            });
            (x, num / den)
        })
        .collect()
}
