//! Unnormalized joint posterior of `(xi, gamma0)`.

use crate::model::{log_likelihood, log_likelihood_kernel, ModelKind, RiskParams, ScaledDataset};
use crate::priors::{Gamma0Prior, XiPrior};

/// A target density over `xi > 0`, `0 < gamma0 < 1`, split into prior and
/// likelihood so that bridge sampling and the sampler can share it.
pub trait LogTarget {
    fn log_prior(&self, xi: f64, gamma0: f64) -> f64;
    fn log_likelihood(&self, xi: f64, gamma0: f64) -> f64;

    fn log_density(&self, xi: f64, gamma0: f64) -> f64 {
        if !(xi > 0.0 && xi.is_finite() && gamma0 > 0.0 && gamma0 < 1.0) {
            return f64::NEG_INFINITY;
        }
        let lp = self.log_prior(xi, gamma0);
        if lp == f64::NEG_INFINITY || lp.is_nan() {
            return f64::NEG_INFINITY;
        }
        let v = lp + self.log_likelihood(xi, gamma0);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

#[derive(Debug, Clone)]
pub struct Posterior {
    pub data: ScaledDataset,
    pub model: ModelKind,
    pub bmr: f64,
    pub xi_prior: XiPrior,
    pub gamma0_prior: Gamma0Prior,
    /// Whether the binomial coefficients enter the likelihood. On by default.
    pub binomial_constants: bool,
}

impl Posterior {
    pub fn new(
        data: ScaledDataset,
        model: ModelKind,
        bmr: f64,
        xi_prior: XiPrior,
        gamma0_prior: Gamma0Prior,
    ) -> Self {
        Self {
            data,
            model,
            bmr,
            xi_prior,
            gamma0_prior,
            binomial_constants: true,
        }
    }

    pub fn with_xi_prior(&self, xi_prior: XiPrior) -> Self {
        Self {
            xi_prior,
            ..self.clone()
        }
    }

    pub fn with_model(&self, model: ModelKind) -> Self {
        Self {
            model,
            ..self.clone()
        }
    }
}

impl LogTarget for Posterior {
    fn log_prior(&self, xi: f64, gamma0: f64) -> f64 {
        self.xi_prior.log_density(xi) + self.gamma0_prior.log_density(gamma0)
    }

    fn log_likelihood(&self, xi: f64, gamma0: f64) -> f64 {
        let params = RiskParams {
            xi,
            gamma0,
            bmr: self.bmr,
        };
        if self.binomial_constants {
            log_likelihood(&self.data, &params, self.model)
        } else if params.validate().is_ok() {
            log_likelihood_kernel(&self.data, &params, self.model)
        } else {
            f64::NEG_INFINITY
        }
    }
}
