//! Adaptive Metropolis sampling of `(xi, gamma0)`.
//!
//! A single bivariate random-walk proposal is adapted from the running
//! mean and covariance of the whole chain history, with separate log step
//! scales for `xi` and `gamma0` tuned toward a target acceptance rate. The
//! scales follow a `k^-decay` gain so adaptation vanishes as the chain grows.

mod diagnostics;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BmdError, Result};
use crate::model::{screen_data, ModelKind, ScaledDataset};
use crate::posterior::{LogTarget, Posterior};

pub use diagnostics::{
    burn_in_diagnostic, spectral_density_zero, BurnInDiagnostic, StageResult, BURN_IN_FRACTIONS,
    Z_CRITICAL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chain_length: usize,
    pub seed: u64,
    /// Target acceptance of the single-coordinate moves that tune each
    /// componentwise step scale. The joint move then accepts at roughly 0.25.
    pub target_acceptance: f64,
    /// Exponent of the `k^-decay` gain on the log step scales.
    pub adaptation_decay: f64,
    /// Total number of chains tried before reporting an algorithm failure.
    pub max_restarts: usize,
    /// Initial proposal covariance is `initial_scale * I`.
    pub initial_scale: f64,
    /// Added to the proposal covariance diagonal.
    pub jitter: f64,
    /// With adaptation off the initial proposal is used throughout.
    pub adapt: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chain_length: 100_000,
            seed: 20_140_101,
            target_acceptance: 0.44,
            adaptation_decay: 0.7,
            max_restarts: 5,
            initial_scale: 2.38 * 2.38 / 2.0,
            jitter: 1e-10,
            adapt: true,
        }
    }
}

impl SamplerConfig {
    pub const MIN_CHAIN_LENGTH: usize = 10_000;

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.chain_length < Self::MIN_CHAIN_LENGTH {
            return Err(BmdError::InvalidConfig(format!(
                "chain_length must be at least {}, got {}",
                Self::MIN_CHAIN_LENGTH,
                self.chain_length
            )));
        }
        if self.max_restarts < 1 {
            return Err(BmdError::InvalidConfig("max_restarts must be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(BmdError::InvalidConfig(format!(
                "target_acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        if !(self.adaptation_decay > 0.5 && self.adaptation_decay <= 1.0) {
            return Err(BmdError::InvalidConfig(format!(
                "adaptation_decay must lie in (0.5, 1], got {}",
                self.adaptation_decay
            )));
        }
        if !(self.initial_scale > 0.0) || !(self.jitter >= 0.0) {
            return Err(BmdError::InvalidConfig(
                "initial_scale must be positive and jitter nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartingPoint {
    pub xi0: f64,
    pub gamma00: f64,
}

/// Deterministic start: shrunken control rate for `gamma0`, `bmr / S_max` for `xi`.
pub fn starting_point(data: &ScaledDataset, bmr: f64) -> Result<StartingPoint> {
    let screen = screen_data(data.base())?;
    if !screen.pass {
        return Err(BmdError::DataFailure(format!(
            "flat or decreasing dose response (maximum empirical slope {})",
            screen.s_max
        )));
    }
    let base = data.base();
    let gamma00 = (base.responders()[0] as f64 + 0.25) / (base.group_sizes()[0] as f64 + 0.5);
    Ok(StartingPoint {
        xi0: bmr / screen.s_max,
        gamma00,
    })
}

/// Model-specific start. The quantal-linear model uses [`starting_point`].
/// For the logistic model `xi` is the benchmark dose of the logistic curve
/// through the start's background and the (shrunken) response rate of the
/// group on the steepest empirical ray; [`starting_point`]'s linear value
/// can sit far out in the logistic posterior's tail.
pub fn model_starting_point(data: &ScaledDataset, model: ModelKind, bmr: f64) -> Result<StartingPoint> {
    let start = starting_point(data, bmr)?;
    if model == ModelKind::QuantalLinear {
        return Ok(start);
    }
    let screen = screen_data(data.base())?;
    let base = data.base();
    let steepest = (1..base.len())
        .max_by(|&i, &j| {
            let si = screen.empirical_extra_risks[i - 1] / data.doses()[i];
            let sj = screen.empirical_extra_risks[j - 1] / data.doses()[j];
            si.total_cmp(&sj)
        })
        .expect("screened data have a treated group");
    let p = (base.responders()[steepest] as f64 + 0.25) / (base.group_sizes()[steepest] as f64 + 0.5);
    let logit = |x: f64| (x / (1.0 - x)).ln();
    let b0 = logit(start.gamma00);
    let b1 = (logit(p) - b0) / data.doses()[steepest];
    let xi0 = (logit(start.gamma00 + bmr * (1.0 - start.gamma00)) - b0) / b1;
    Ok(if xi0 > 0.0 && xi0.is_finite() {
        StartingPoint { xi0, ..start }
    } else {
        start
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatus {
    /// Produced by [`run_chain`]; no burn-in has been chosen.
    Undiagnosed,
    Ok,
    AlgorithmFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    /// All `K` draws `(xi, gamma0)`, in order.
    pub draws: Vec<[f64; 2]>,
    pub accepted: Vec<bool>,
    /// 1-based index of the first retained draw.
    pub burn_in_index: usize,
    pub acceptance_rate: f64,
    pub diagnostics: Option<BurnInDiagnostic>,
    pub restarts_used: usize,
    pub attempts: usize,
    pub seed: u64,
    pub status: ChainStatus,
    /// `(k, ||C_{k+1} - C_k||_F)` for the proposal covariance at
    /// logarithmically spaced iterations.
    pub adaptation_trace: Vec<(usize, f64)>,
}

impl ChainResult {
    pub fn chain_length(&self) -> usize {
        self.draws.len()
    }

    /// Draws `K0..=K`; `K - K0 + 1` of them.
    pub fn retained(&self) -> &[[f64; 2]] {
        &self.draws[self.burn_in_index - 1..]
    }

    pub fn retained_xi(&self) -> Vec<f64> {
        self.retained().iter().map(|d| d[0]).collect()
    }

    pub fn retained_gamma0(&self) -> Vec<f64> {
        self.retained().iter().map(|d| d[1]).collect()
    }

    pub fn is_ok(&self) -> bool {
        self.status == ChainStatus::Ok
    }

    /// CSV of `k,xi,gamma0,accepted` over the full chain.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,xi,gamma0,accepted")?;
        for (k, (d, a)) in self.draws.iter().zip(&self.accepted).enumerate() {
            writeln!(out, "{},{:?},{:?},{}", k + 1, d[0], d[1], u8::from(*a))?;
        }
        Ok(())
    }
}

type Mat2 = [[f64; 2]; 2];

fn cholesky2(c: &Mat2) -> Option<Mat2> {
    let l00 = c[0][0].sqrt();
    if !(l00 > 0.0) {
        return None;
    }
    let l10 = c[1][0] / l00;
    let d = c[1][1] - l10 * l10;
    if !(d > 0.0) {
        return None;
    }
    Some([[l00, 0.0], [l10, d.sqrt()]])
}

struct Adaptation {
    mean: [f64; 2],
    cov: Mat2,
    log_scale: [f64; 2],
}

impl Adaptation {
    fn proposal(&self, jitter: f64) -> Mat2 {
        let s = [(0.5 * self.log_scale[0]).exp(), (0.5 * self.log_scale[1]).exp()];
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = s[i] * self.cov[i][j] * s[j];
            }
            c[i][i] += jitter;
        }
        c
    }
}

/// Runs one adaptive Metropolis chain of `config.chain_length` draws.
///
/// Proposals outside `xi > 0`, `0 < gamma0 < 1` have zero density and are
/// rejected. The chain is a pure function of `(target, start, config)`.
pub fn run_chain<T: LogTarget + ?Sized>(
    target: &T,
    start: StartingPoint,
    config: &SamplerConfig,
) -> Result<ChainResult> {
    config.validate()?;
    let mut x = [start.xi0, start.gamma00];
    let mut lp = target.log_density(x[0], x[1]);
    if lp == f64::NEG_INFINITY {
        return Err(BmdError::Domain(format!(
            "starting point ({}, {}) has zero posterior density",
            x[0], x[1]
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let k_total = config.chain_length;
    let mut draws = Vec::with_capacity(k_total);
    let mut accepted = Vec::with_capacity(k_total);
    let mut n_accepted = 0usize;
    let mut trace = Vec::new();
    let mut next_checkpoint = 10usize;

    let mut state = Adaptation {
        mean: x,
        cov: [[config.initial_scale, 0.0], [0.0, config.initial_scale]],
        log_scale: [0.0, 0.0],
    };
    let mut proposal = state.proposal(config.jitter);

    for k in 1..=k_total {
        let chol = cholesky2(&proposal).ok_or_else(|| {
            BmdError::Singular(format!("proposal covariance at iteration {k}"))
        })?;
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let step = [chol[0][0] * z0, chol[1][0] * z0 + chol[1][1] * z1];
        let y = [x[0] + step[0], x[1] + step[1]];
        let lp_y = target.log_density(y[0], y[1]);
        let log_u: f64 = rng.random::<f64>().ln();

        if config.adapt {
            let gain = (k as f64).powf(-config.adaptation_decay);
            for i in 0..2 {
                let mut yi = x;
                yi[i] += step[i];
                let lpi = target.log_density(yi[0], yi[1]);
                let alpha_i = acceptance_probability(lpi - lp);
                state.log_scale[i] += gain * (alpha_i - config.target_acceptance);
            }
        }

        let accept = log_u < lp_y - lp;
        if accept {
            x = y;
            lp = lp_y;
            n_accepted += 1;
        }
        draws.push(x);
        accepted.push(accept);

        if config.adapt {
            let w = 1.0 / (k as f64 + 1.0);
            let dev = [x[0] - state.mean[0], x[1] - state.mean[1]];
            for i in 0..2 {
                for j in 0..2 {
                    state.cov[i][j] += w * (dev[i] * dev[j] - state.cov[i][j]);
                }
            }
            state.mean[0] += w * dev[0];
            state.mean[1] += w * dev[1];
            let next = state.proposal(config.jitter);
            if k == next_checkpoint {
                let diff = (0..2)
                    .flat_map(|i| (0..2).map(move |j| (i, j)))
                    .map(|(i, j)| (next[i][j] - proposal[i][j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                trace.push((k, diff));
                next_checkpoint *= 10;
            }
            proposal = next;
        }
    }

    Ok(ChainResult {
        draws,
        accepted,
        burn_in_index: 1,
        acceptance_rate: n_accepted as f64 / k_total as f64,
        diagnostics: None,
        restarts_used: 0,
        attempts: 1,
        seed: config.seed,
        status: ChainStatus::Undiagnosed,
        adaptation_trace: trace,
    })
}

fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.min(0.0).exp()
    }
}

/// Seed of the `attempt`-th chain (0-based): `base + attempt`.
pub fn restart_seed(base: u64, attempt: usize) -> u64 {
    base.wrapping_add(attempt as u64)
}

/// Screens the data, starts from [`model_starting_point`] and runs chains with
/// fresh seeds until the burn-in diagnostic passes or `max_restarts` chains
/// have failed.
pub fn run_with_restarts(posterior: &Posterior, config: &SamplerConfig) -> Result<ChainResult> {
    let start = model_starting_point(&posterior.data, posterior.model, posterior.bmr)?;
    run_with_restarts_from(posterior, start, config, burn_in_diagnostic)
}

/// [`run_with_restarts`] with an explicit start and diagnostic.
///
/// A diagnostic error (for instance a stuck chain with zero variance) counts
/// as a failed attempt.
pub fn run_with_restarts_from<T, D>(
    target: &T,
    start: StartingPoint,
    config: &SamplerConfig,
    mut diagnostic: D,
) -> Result<ChainResult>
where
    T: LogTarget + ?Sized,
    D: FnMut(&[[f64; 2]]) -> Result<BurnInDiagnostic>,
{
    config.validate()?;
    let mut last = None;
    for attempt in 0..config.max_restarts {
        let cfg = SamplerConfig {
            seed: restart_seed(config.seed, attempt),
            ..config.clone()
        };
        let mut chain = run_chain(target, start, &cfg)?;
        chain.attempts = attempt + 1;
        chain.restarts_used = attempt;
        match diagnostic(&chain.draws) {
            Ok(diag) if diag.pass => {
                chain.burn_in_index = diag
                    .burn_in_index
                    .expect("passing diagnostics carry a burn-in index");
                chain.diagnostics = Some(diag);
                chain.status = ChainStatus::Ok;
                return Ok(chain);
            }
            Ok(diag) => chain.diagnostics = Some(diag),
            Err(_) => chain.diagnostics = None,
        }
        chain.status = ChainStatus::AlgorithmFailure;
        last = Some(chain);
    }
    Ok(last.expect("max_restarts is at least 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DoseResponseDataset, RiskParams};
    use crate::priors::{Gamma0Prior, XiPrior};

    fn cumene() -> ScaledDataset {
        DoseResponseDataset::new(vec![0.0, 125.0, 250.0, 500.0], vec![50; 4], vec![4, 31, 42, 46], "ppm")
            .unwrap()
            .scaled()
    }

    fn cumene_posterior() -> Posterior {
        Posterior::new(
            cumene(),
            ModelKind::QuantalLinear,
            0.1,
            XiPrior::inverse_gamma(0.534067, 0.128510),
            Gamma0Prior::new(1.356029, 12.311779).unwrap(),
        )
    }

    /// Independent priors with a constant likelihood.
    struct PriorOnly {
        xi: XiPrior,
        gamma0: Gamma0Prior,
    }

    impl LogTarget for PriorOnly {
        fn log_prior(&self, xi: f64, gamma0: f64) -> f64 {
            self.xi.log_density(xi) + self.gamma0.log_density(gamma0)
        }
        fn log_likelihood(&self, _: f64, _: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn logistic_start_hits_the_steepest_group() {
        let data = cumene();
        let ql = model_starting_point(&data, ModelKind::QuantalLinear, 0.1).unwrap();
        assert_eq!(ql, starting_point(&data, 0.1).unwrap());
        let s = model_starting_point(&data, ModelKind::Logistic, 0.1).unwrap();
        assert_eq!(s.gamma00, ql.gamma00);
        // The logistic curve through the start passes through the shrunken
        // rate of the 125 ppm group.
        let p = RiskParams::new(s.xi0, s.gamma00, 0.1).unwrap();
        let r = crate::model::risk(&p, ModelKind::Logistic, 0.25).unwrap();
        assert!((r - 31.25 / 50.5).abs() < 1e-12, "{r}");
    }

    #[test]
    fn cumene_starting_point() {
        let s = starting_point(&cumene(), 0.1).unwrap();
        assert!((s.gamma00 - 4.25 / 50.5).abs() < 1e-15);
        assert!((s.xi0 - 0.1 / (4.0 * 27.0 / 46.0)).abs() < 1e-15);
        assert!((s.xi0 - 0.042593).abs() < 1e-6);
    }

    #[test]
    fn zero_control_start_stays_interior() {
        let d = DoseResponseDataset::new(vec![0.0, 1.0], vec![50, 50], vec![0, 10], "u")
            .unwrap()
            .scaled();
        let s = starting_point(&d, 0.1).unwrap();
        assert!((s.gamma00 - 0.25 / 50.5).abs() < 1e-15);
    }

    #[test]
    fn flat_data_has_no_start() {
        let d = DoseResponseDataset::new(vec![0.0, 1.0], vec![50, 50], vec![10, 5], "u")
            .unwrap()
            .scaled();
        assert!(matches!(starting_point(&d, 0.1), Err(BmdError::DataFailure(_))));
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        let short = SamplerConfig {
            chain_length: 9_999,
            ..Default::default()
        };
        assert!(short.validate().is_err());
        let none = SamplerConfig {
            max_restarts: 0,
            ..Default::default()
        };
        assert!(none.validate().is_err());
        let bad = SamplerConfig {
            target_acceptance: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn chains_are_seed_deterministic() {
        let post = cumene_posterior();
        let start = starting_point(&post.data, 0.1).unwrap();
        let cfg = SamplerConfig {
            chain_length: 20_000,
            ..Default::default()
        };
        let a = run_chain(&post, start, &cfg).unwrap();
        let b = run_chain(&post, start, &cfg).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&post, start, &cfg.clone().with_seed(cfg.seed + 1)).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn cumene_chain_behaves() {
        let post = cumene_posterior();
        let chain = run_with_restarts(&post, &SamplerConfig::default()).unwrap();
        assert!(chain.is_ok());
        assert!(
            (0.1..=0.6).contains(&chain.acceptance_rate),
            "acceptance {}",
            chain.acceptance_rate
        );
        assert!(chain.draws.iter().all(|d| d[0] > 0.0 && d[1] > 0.0 && d[1] < 1.0));
        assert!([10_001, 20_001, 30_001].contains(&chain.burn_in_index));
        assert_eq!(chain.retained().len(), 100_000 - chain.burn_in_index + 1);
    }

    #[test]
    fn adaptation_vanishes() {
        let post = cumene_posterior();
        let start = starting_point(&post.data, 0.1).unwrap();
        let chain = run_chain(&post, start, &SamplerConfig::default()).unwrap();
        let changes: Vec<f64> = chain.adaptation_trace.iter().map(|t| t.1).collect();
        assert_eq!(chain.adaptation_trace.len(), 5);
        for w in changes.windows(2) {
            assert!(w[1] < w[0], "{changes:?}");
        }
        assert!(changes.last().unwrap() / changes[0] < 1e-3);
    }

    #[test]
    fn recovers_prior_quartiles() {
        let target = PriorOnly {
            xi: XiPrior::inverse_gamma(3.0, 2.0),
            gamma0: Gamma0Prior::new(2.0, 5.0).unwrap(),
        };
        let start = StartingPoint {
            xi0: 1.0,
            gamma00: 0.3,
        };
        let chain = run_with_restarts_from(&target, start, &SamplerConfig::default(), burn_in_diagnostic)
            .unwrap();
        assert!(chain.is_ok());
        let xi = chain.retained_xi();
        let g = chain.retained_gamma0();
        for &p in &[0.25, 0.5, 0.75] {
            let qx = crate::inference::quantile(&xi, p);
            let qg = crate::inference::quantile(&g, p);
            let tx = target.xi.quantile(p);
            let tg = target.gamma0.quantile(p);
            assert!((qx / tx - 1.0).abs() < 0.02, "xi q{p}: {qx} vs {tx}");
            assert!((qg / tg - 1.0).abs() < 0.02, "gamma0 q{p}: {qg} vs {tg}");
        }
    }

    #[test]
    fn frozen_proposal_matches_analytic_moments() {
        // Gamma(3, 2) x Beta(2, 5): means 1.5, 2/7; variances 0.75, 10/392.
        let target = PriorOnly {
            xi: XiPrior::gamma(3.0, 2.0),
            gamma0: Gamma0Prior::new(2.0, 5.0).unwrap(),
        };
        let cfg = SamplerConfig {
            adapt: false,
            initial_scale: 0.25,
            chain_length: 200_000,
            ..Default::default()
        };
        let start = StartingPoint {
            xi0: 1.5,
            gamma00: 0.28,
        };
        let chain = run_chain(&target, start, &cfg).unwrap();
        let retained = &chain.draws[20_000..];
        for (idx, (mean, var)) in [(1.5, 0.75), (2.0 / 7.0, 10.0 / 392.0)].into_iter().enumerate() {
            let x: Vec<f64> = retained.iter().map(|d| d[idx]).collect();
            let m = diagnostics::mean(&x);
            let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
            let se_mean = (spectral_density_zero(&x).unwrap() / x.len() as f64).sqrt();
            assert!((m - mean).abs() < 3.0 * se_mean, "component {idx}: mean {m}");
            let sq: Vec<f64> = x.iter().map(|a| (a - mean).powi(2)).collect();
            let se_var = (spectral_density_zero(&sq).unwrap() / x.len() as f64).sqrt();
            assert!((v - var).abs() < 3.0 * se_var, "component {idx}: var {v}");
        }
    }

    #[test]
    fn restart_protocol() {
        let post = cumene_posterior();
        let start = starting_point(&post.data, 0.1).unwrap();
        let cfg = SamplerConfig {
            chain_length: 10_000,
            ..Default::default()
        };
        let mut calls = 0;
        let failing = |_: &[[f64; 2]]| {
            calls += 1;
            Ok(BurnInDiagnostic {
                pass: false,
                burn_in_index: None,
                stages: vec![],
            })
        };
        let chain = run_with_restarts_from(&post, start, &cfg, failing).unwrap();
        assert_eq!(chain.status, ChainStatus::AlgorithmFailure);
        assert_eq!(chain.attempts, 5);
        assert_eq!(calls, 5);

        let mut calls = 0;
        let third = |draws: &[[f64; 2]]| {
            calls += 1;
            Ok(BurnInDiagnostic {
                pass: calls == 3,
                burn_in_index: (calls == 3).then_some(draws.len() / 10 + 1),
                stages: vec![],
            })
        };
        let chain = run_with_restarts_from(&post, start, &cfg, third).unwrap();
        assert!(chain.is_ok());
        assert_eq!(chain.restarts_used, 2);
        assert_eq!(chain.seed, restart_seed(cfg.seed, 2));
        assert_eq!(chain.burn_in_index, 1_001);
    }

    #[test]
    fn chain_csv_export() {
        let post = cumene_posterior();
        let start = starting_point(&post.data, 0.1).unwrap();
        let cfg = SamplerConfig {
            chain_length: 10_000,
            ..Default::default()
        };
        let chain = run_chain(&post, start, &cfg).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,xi,gamma0,accepted");
        assert_eq!(lines.len(), 10_001);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 4);
        assert_eq!(fields[1].parse::<f64>().unwrap(), chain.draws[0][0]);
    }
}
