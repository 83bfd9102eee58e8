//! Marginal priors for `xi` and `gamma0`, and quartile-matching elicitation.
//!
//! `xi` takes an inverse-gamma or gamma prior (or an epsilon-contaminated
//! mixture of two such priors); `gamma0` takes a beta prior. Gamma priors use
//! the shape/rate convention, inverse-gamma priors shape/scale.

use serde::{Deserialize, Serialize};

use crate::error::{BmdError, Result};
use crate::special::{
    beta_reg, gamma_p, gamma_q, invert_positive_cdf, invert_unit_cdf, ln_beta, ln_gamma,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum XiPrior {
    InverseGamma {
        alpha: f64,
        beta: f64,
    },
    Gamma {
        alpha: f64,
        beta: f64,
    },
    Mixture {
        base: Box<XiPrior>,
        contaminant: Box<XiPrior>,
        epsilon: f64,
    },
}

impl XiPrior {
    pub fn inverse_gamma(alpha: f64, beta: f64) -> Self {
        XiPrior::InverseGamma { alpha, beta }
    }

    pub fn gamma(alpha: f64, beta: f64) -> Self {
        XiPrior::Gamma { alpha, beta }
    }

    /// `(1 - epsilon) * base + epsilon * contaminant`.
    pub fn mixture(base: XiPrior, contaminant: XiPrior, epsilon: f64) -> Self {
        XiPrior::Mixture {
            base: Box::new(base),
            contaminant: Box::new(contaminant),
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            XiPrior::InverseGamma { alpha, beta } | XiPrior::Gamma { alpha, beta } => {
                if *alpha > 0.0 && *beta > 0.0 && alpha.is_finite() && beta.is_finite() {
                    Ok(())
                } else {
                    Err(BmdError::Domain(format!(
                        "prior parameters must be positive, got ({alpha}, {beta})"
                    )))
                }
            }
            XiPrior::Mixture {
                base,
                contaminant,
                epsilon,
            } => {
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(BmdError::Domain(format!(
                        "contamination weight must lie in [0, 1], got {epsilon}"
                    )));
                }
                base.validate()?;
                contaminant.validate()
            }
        }
    }

    pub fn log_density(&self, xi: f64) -> f64 {
        if !(xi > 0.0) || xi.is_infinite() {
            return f64::NEG_INFINITY;
        }
        match self {
            XiPrior::InverseGamma { alpha, beta } => {
                alpha * beta.ln() - ln_gamma(*alpha) - (alpha + 1.0) * xi.ln() - beta / xi
            }
            XiPrior::Gamma { alpha, beta } => {
                alpha * beta.ln() - ln_gamma(*alpha) + (alpha - 1.0) * xi.ln() - beta * xi
            }
            XiPrior::Mixture {
                base,
                contaminant,
                epsilon,
            } => {
                if *epsilon == 0.0 {
                    return base.log_density(xi);
                }
                if *epsilon == 1.0 {
                    return contaminant.log_density(xi);
                }
                log_sum_exp(
                    (-epsilon).ln_1p() + base.log_density(xi),
                    epsilon.ln() + contaminant.log_density(xi),
                )
            }
        }
    }

    pub fn cdf(&self, xi: f64) -> f64 {
        if !(xi > 0.0) {
            return 0.0;
        }
        match self {
            XiPrior::InverseGamma { alpha, beta } => gamma_q(*alpha, beta / xi),
            XiPrior::Gamma { alpha, beta } => gamma_p(*alpha, beta * xi),
            XiPrior::Mixture {
                base,
                contaminant,
                epsilon,
            } => (1.0 - epsilon) * base.cdf(xi) + epsilon * contaminant.cdf(xi),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            XiPrior::InverseGamma { alpha, beta } => {
                // Work on the gamma variable beta / xi so the bracket stays in range.
                let t = invert_positive_cdf(|t| gamma_p(*alpha, t), 1.0 - p);
                beta / t
            }
            XiPrior::Gamma { alpha, beta } => {
                invert_positive_cdf(|t| gamma_p(*alpha, t), p) / beta
            }
            XiPrior::Mixture { .. } => invert_positive_cdf(|x| self.cdf(x), p),
        }
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `Beta(psi, omega)` prior on the background risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gamma0Prior {
    pub psi: f64,
    pub omega: f64,
}

impl Gamma0Prior {
    pub fn new(psi: f64, omega: f64) -> Result<Self> {
        let p = Self { psi, omega };
        p.validate()?;
        Ok(p)
    }

    /// Jeffreys prior `Beta(1/2, 1/2)`.
    pub fn jeffreys() -> Self {
        Self {
            psi: 0.5,
            omega: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi > 0.0 && self.omega > 0.0 && self.psi.is_finite() && self.omega.is_finite() {
            Ok(())
        } else {
            Err(BmdError::Domain(format!(
                "beta prior parameters must be positive, got ({}, {})",
                self.psi, self.omega
            )))
        }
    }

    pub fn log_density(&self, gamma0: f64) -> f64 {
        if !(gamma0 > 0.0 && gamma0 < 1.0) {
            return f64::NEG_INFINITY;
        }
        (self.psi - 1.0) * gamma0.ln() + (self.omega - 1.0) * (-gamma0).ln_1p()
            - ln_beta(self.psi, self.omega)
    }

    pub fn cdf(&self, gamma0: f64) -> f64 {
        beta_reg(self.psi, self.omega, gamma0)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        invert_unit_cdf(|x| self.cdf(x), p)
    }
}

/// Objective priors: `xi ~ IG(0.001, 0.001)` and Jeffreys `gamma0 ~ Beta(1/2, 1/2)`.
pub fn objective_defaults() -> (XiPrior, Gamma0Prior) {
    (XiPrior::inverse_gamma(0.001, 0.001), Gamma0Prior::jeffreys())
}

/// Expert lower quartile and median, on the parameter's own scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElicitedQuartiles {
    pub q1: f64,
    pub q2: f64,
}

impl ElicitedQuartiles {
    pub fn new(q1: f64, q2: f64) -> Result<Self> {
        if !(q1 > 0.0 && q1 < q2 && q2.is_finite()) {
            return Err(BmdError::Domain(format!(
                "quartiles must satisfy 0 < q1 < q2, got q1 = {q1}, q2 = {q2}"
            )));
        }
        Ok(Self { q1, q2 })
    }

    fn check_probability(&self) -> Result<()> {
        Self::new(self.q1, self.q2)?;
        if self.q2 >= 1.0 {
            return Err(BmdError::Domain(format!(
                "background-risk quartiles must lie below 1, got q2 = {}",
                self.q2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiFamily {
    InverseGamma,
    Gamma,
}

impl XiFamily {
    pub fn build(self, alpha: f64, beta: f64) -> XiPrior {
        match self {
            XiFamily::InverseGamma => XiPrior::inverse_gamma(alpha, beta),
            XiFamily::Gamma => XiPrior::gamma(alpha, beta),
        }
    }

    /// Documented starting values for the quartile solver.
    pub fn default_start(self, quartiles: &ElicitedQuartiles) -> (f64, f64) {
        match self {
            XiFamily::InverseGamma => (1.0, quartiles.q2),
            // Exponential with the elicited median.
            XiFamily::Gamma => (1.0, std::f64::consts::LN_2 / quartiles.q2),
        }
    }
}

/// Solution of a quartile-matching system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Elicitation {
    /// `(alpha, beta)` or `(psi, omega)`.
    pub params: (f64, f64),
    /// Half the squared L2 norm of `(F(q1) - 1/4, F(q2) - 1/2)`.
    pub half_squared_residual: f64,
    pub iterations: usize,
}

/// Convergence threshold on half the squared residual norm.
pub const ELICITATION_TOLERANCE: f64 = 1e-10;
const ELICITATION_BUDGET: usize = 200;

pub fn elicit_xi(quartiles: &ElicitedQuartiles, family: XiFamily) -> Result<Elicitation> {
    elicit_xi_from(quartiles, family, family.default_start(quartiles))
}

pub fn elicit_xi_from(
    quartiles: &ElicitedQuartiles,
    family: XiFamily,
    start: (f64, f64),
) -> Result<Elicitation> {
    let q = ElicitedQuartiles::new(quartiles.q1, quartiles.q2)?;
    solve_quartiles(|a, b| family.build(a, b).cdf(q.q1), |a, b| family.build(a, b).cdf(q.q2), start)
}

pub fn elicit_gamma0(quartiles: &ElicitedQuartiles) -> Result<Elicitation> {
    let start = (1.0, (1.0 - quartiles.q2) / quartiles.q2);
    elicit_gamma0_from(quartiles, start)
}

pub fn elicit_gamma0_from(quartiles: &ElicitedQuartiles, start: (f64, f64)) -> Result<Elicitation> {
    quartiles.check_probability()?;
    let q = *quartiles;
    solve_quartiles(
        |a, b| beta_reg(a, b, q.q1),
        |a, b| beta_reg(a, b, q.q2),
        start,
    )
}

/// Damped Newton iteration on the log-parameters with a central-difference
/// Jacobian. Iterates past the tolerance until no further progress is
/// possible so the returned parameters are as accurate as the CDFs allow.
fn solve_quartiles<F1, F2>(cdf_q1: F1, cdf_q2: F2, start: (f64, f64)) -> Result<Elicitation>
where
    F1: Fn(f64, f64) -> f64,
    F2: Fn(f64, f64) -> f64,
{
    if !(start.0 > 0.0 && start.1 > 0.0) {
        return Err(BmdError::Domain(format!(
            "solver start must be positive, got {start:?}"
        )));
    }
    let residual = |u: [f64; 2]| -> [f64; 2] {
        let (a, b) = (u[0].exp(), u[1].exp());
        [cdf_q1(a, b) - 0.25, cdf_q2(a, b) - 0.5]
    };
    let objective = |r: [f64; 2]| 0.5 * (r[0] * r[0] + r[1] * r[1]);

    let mut u = [start.0.ln(), start.1.ln()];
    let mut r = residual(u);
    let mut f = objective(r);
    let mut iterations = 0;
    while iterations < ELICITATION_BUDGET && f > 0.0 {
        iterations += 1;
        let h = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[k] += h;
            dn[k] -= h;
            let (rp, rm) = (residual(up), residual(dn));
            jac[0][k] = (rp[0] - rm[0]) / (2.0 * h);
            jac[1][k] = (rp[1] - rm[1]) / (2.0 * h);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !det.is_finite() || det == 0.0 {
            break;
        }
        let step = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        // Backtrack; cap the step so exp() stays in range.
        let cap = 2.0 / step[0].abs().max(step[1].abs()).max(2.0);
        let mut t = cap;
        let mut improved = false;
        for _ in 0..60 {
            let cand = [u[0] + t * step[0], u[1] + t * step[1]];
            let rc = residual(cand);
            let fc = objective(rc);
            if fc.is_finite() && fc < f {
                u = cand;
                r = rc;
                f = fc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if f < ELICITATION_TOLERANCE {
        Ok(Elicitation {
            params: (u[0].exp(), u[1].exp()),
            half_squared_residual: f,
            iterations,
        })
    } else {
        Err(BmdError::ElicitationFailure {
            iterations,
            objective: f,
        })
    }
}
