//! Maximum-likelihood fit of the reparameterized models and a one-sided Wald
//! lower limit on the benchmark dose.

use serde::{Deserialize, Serialize};

use crate::error::{BmdError, Result};
use crate::model::{log_likelihood, screen_data, ModelKind, RiskParams, ScaledDataset};
use crate::sampler::starting_point;
use crate::special::norm_quantile;

/// Fitted `gamma0` below this is reported as on the boundary.
const BOUNDARY_GAMMA0: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub model: ModelKind,
    pub bmr: f64,
    pub scale: f64,
    /// Scaled.
    pub xi_hat: f64,
    pub xi_hat_original: f64,
    pub gamma0_hat: f64,
    /// Includes the binomial constants.
    pub log_likelihood: f64,
    /// Scaled.
    pub se_xi: f64,
    pub se_xi_original: f64,
    /// Scaled, floored at 0.
    pub wald_bmdl_95: f64,
    pub wald_bmdl_95_original: f64,
    /// The fit pushed `gamma0` to 0; the standard error then comes from the
    /// `xi` curvature alone.
    pub gamma0_at_boundary: bool,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fits `(xi, gamma0)` by maximum likelihood.
///
/// Nelder-Mead runs in `(log xi, logit gamma0)` from the sampler's starting
/// point and a fixed grid of alternatives; the best result is polished by
/// Newton steps.
pub fn fit_mle(data: &ScaledDataset, model: ModelKind, bmr: f64) -> Result<MleResult> {
    if !(bmr > 0.0 && bmr < 1.0) {
        return Err(BmdError::Domain(format!("bmr must lie in (0, 1), got {bmr}")));
    }
    let screen = screen_data(data.base())?;
    if !screen.pass {
        return Err(BmdError::DataFailure(format!(
            "flat or decreasing dose response (maximum empirical slope {})",
            screen.s_max
        )));
    }
    let start = starting_point(data, bmr)?;
    let loglik = |xi: f64, g: f64| log_likelihood(data, &RiskParams { xi, gamma0: g, bmr }, model);
    let objective = |u: [f64; 2]| {
        let v = -loglik(u[0].exp(), sigmoid(u[1]));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let base = [start.xi0.ln(), logit(start.gamma00)];
    let mut starts = vec![base];
    for &dx in &[-1.0, 0.0, 1.0] {
        for &g in &[0.01, 0.1, 0.4] {
            starts.push([base[0] + dx, logit(g)]);
        }
    }
    let best = starts
        .iter()
        .map(|s| nelder_mead(objective, *s, 0.5, 1e-13, 2_000))
        .filter(|r| r.1.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| BmdError::Nonconvergence("no multistart reached a finite likelihood".into()))?;
    // Restarting from the optimum guards against a collapsed simplex.
    let (mut u, mut fu) = nelder_mead(objective, best.0, 0.05, 1e-15, 2_000);
    if !(fu <= best.1) {
        (u, fu) = (best.0, best.1);
    }
    (u, fu) = newton_polish(objective, u, fu);

    let xi_hat = u[0].exp();
    let gamma0_hat = sigmoid(u[1]);
    let gamma0_at_boundary = gamma0_hat < BOUNDARY_GAMMA0;
    let se_xi = if gamma0_at_boundary {
        let h = 1e-5 * xi_hat.abs().max(1.0);
        let f = |x: f64| loglik(x, gamma0_hat);
        let d2 = (f(xi_hat + h) - 2.0 * f(xi_hat) + f(xi_hat - h)) / (h * h);
        if !(d2 < 0.0) {
            return Err(BmdError::Singular("observed information for xi".into()));
        }
        (-1.0 / d2).sqrt()
    } else {
        let info = observed_information(|t| loglik(t[0], t[1]), [xi_hat, gamma0_hat]);
        let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
        if !(info[0][0] > 0.0 && det > 0.0) {
            return Err(BmdError::Singular(format!(
                "observed information is not positive definite (determinant {det:e})"
            )));
        }
        (info[1][1] / det).sqrt()
    };

    let scale = data.scale();
    let mut fit = MleResult {
        model,
        bmr,
        scale,
        xi_hat,
        xi_hat_original: xi_hat * scale,
        gamma0_hat,
        log_likelihood: -fu,
        se_xi,
        se_xi_original: se_xi * scale,
        wald_bmdl_95: 0.0,
        wald_bmdl_95_original: 0.0,
        gamma0_at_boundary,
    };
    fit.wald_bmdl_95 = wald_bmdl(&fit, 0.95)?;
    fit.wald_bmdl_95_original = fit.wald_bmdl_95 * scale;
    Ok(fit)
}

/// `xi_hat - z_level * SE(xi_hat)` on the scaled axis, floored at 0.
pub fn wald_bmdl(fit: &MleResult, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BmdError::InvalidConfig(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if !(fit.se_xi >= 0.0 && fit.se_xi.is_finite()) {
        return Err(BmdError::Singular(format!("standard error {}", fit.se_xi)));
    }
    Ok((fit.xi_hat - norm_quantile(level) * fit.se_xi).max(0.0))
}

/// Negative Hessian of `f` at `theta` by central differences with steps
/// `1e-5 max(1, |theta_i|)`.
pub fn observed_information<F: Fn([f64; 2]) -> f64>(f: F, theta: [f64; 2]) -> [[f64; 2]; 2] {
    let h = theta.map(|t| 1e-5 * t.abs().max(1.0));
    let at = |di: f64, dj: f64, i: usize, j: usize| {
        let mut t = theta;
        t[i] += di;
        t[j] += dj;
        f(t)
    };
    let mut info = [[0.0; 2]; 2];
    let f0 = f(theta);
    for i in 0..2 {
        info[i][i] = -(at(h[i], 0.0, i, i) - 2.0 * f0 + at(-h[i], 0.0, i, i)) / (h[i] * h[i]);
    }
    let cross = (at(h[0], h[1], 0, 1) - at(h[0], -h[1], 0, 1) - at(-h[0], h[1], 0, 1)
        + at(-h[0], -h[1], 0, 1))
        / (4.0 * h[0] * h[1]);
    info[0][1] = -cross;
    info[1][0] = -cross;
    info
}

/// Minimizes `f` from `x0` with an initial simplex of edge `step`.
pub(crate) fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: F,
    x0: [f64; 2],
    step: f64,
    ftol: f64,
    max_iter: usize,
) -> ([f64; 2], f64) {
    let mut simplex = [x0, [x0[0] + step, x0[1]], [x0[0], x0[1] + step]];
    let mut values = simplex.map(&f);
    for _ in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let spread = (values[2] - values[0]).abs();
        if spread <= ftol * (values[0].abs() + ftol) {
            break;
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let toward = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = toward(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = toward(-2.0);
            let fe = f(expanded);
            if fe < fr {
                (simplex[2], values[2]) = (expanded, fe);
            } else {
                (simplex[2], values[2]) = (reflected, fr);
            }
        } else if fr < values[1] {
            (simplex[2], values[2]) = (reflected, fr);
        } else {
            let contracted = if fr < values[2] { toward(-0.5) } else { toward(0.5) };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                (simplex[2], values[2]) = (contracted, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = [
                        simplex[0][0] + 0.5 * (simplex[i][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[i][1] - simplex[0][1]),
                    ];
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best], values[best])
}

/// Newton iterations with finite-difference derivatives, accepting only
/// steps that do not increase `f`.
fn newton_polish<F: Fn([f64; 2]) -> f64>(f: F, mut x: [f64; 2], mut fx: f64) -> ([f64; 2], f64) {
    for _ in 0..20 {
        let h = x.map(|t| 1e-5 * t.abs().max(1.0));
        let grad = [0, 1].map(|i| {
            let mut a = x;
            let mut b = x;
            a[i] += h[i];
            b[i] -= h[i];
            (f(a) - f(b)) / (2.0 * h[i])
        });
        // observed_information returns the negative Hessian of its argument.
        let neg = observed_information(|t| -f(t), x);
        let det = neg[0][0] * neg[1][1] - neg[0][1] * neg[1][0];
        if !(neg[0][0] > 0.0 && det > 0.0) {
            break;
        }
        let step = [
            (neg[1][1] * grad[0] - neg[0][1] * grad[1]) / det,
            (neg[0][0] * grad[1] - neg[1][0] * grad[0]) / det,
        ];
        let next = [x[0] - step[0], x[1] - step[1]];
        let fn_ = f(next);
        if !(fn_ <= fx) {
            break;
        }
        let done = step.iter().zip(&x).all(|(s, t)| s.abs() <= 1e-12 * t.abs().max(1.0));
        (x, fx) = (next, fn_);
        if done {
            break;
        }
    }
    (x, fx)
}
