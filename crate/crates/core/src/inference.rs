//! Posterior summaries of a retained chain.
//!
//! Every empirical quantile uses linear interpolation between order
//! statistics (`h = (n - 1) p`), and standard deviations use the `n - 1`
//! denominator.

use serde::{Deserialize, Serialize};

use crate::error::{BmdError, Result};
use crate::model::{extra_risk_unchecked, ModelKind, RiskParams};
use crate::sampler::ChainResult;

/// Number of points in the default scaled dose grid on `[0, 1]`.
pub const DOSE_GRID_POINTS: usize = 201;
/// Number of points in extra-risk density grids.
pub const KDE_GRID_POINTS: usize = 512;

/// Empirical `p`-quantile of unsorted `samples`.
pub fn quantile(samples: &[f64], p: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// Empirical `p`-quantile of samples already sorted ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&p), "probability {p} outside [0, 1]");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator; 0 for one sample.
pub fn sd(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let m = mean(samples);
    (samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt()
}

/// A dose on the scaled axis together with its value in original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dose {
    pub scaled: f64,
    pub original: f64,
}

impl Dose {
    pub fn new(scaled: f64, scale: f64) -> Self {
        Self {
            scaled,
            original: scaled * scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmdEstimates {
    /// `a / b` of the bilinear loss.
    pub loss_ratio: f64,
    pub posterior_mean: Dose,
    pub posterior_median: Dose,
    /// Posterior `a / (a + b)` quantile.
    pub bilinear_estimate: Dose,
    /// Posterior 5th percentile.
    pub bmdl_05: Dose,
}

fn require_ok(chain: &ChainResult) -> Result<()> {
    if chain.is_ok() {
        Ok(())
    } else {
        Err(BmdError::AlgorithmFailure {
            attempts: chain.attempts,
        })
    }
}

/// BMD point estimates and the BMDL from the retained `xi` draws.
pub fn bmd_estimates(chain: &ChainResult, loss_ratio: f64, scale: f64) -> Result<BmdEstimates> {
    require_ok(chain)?;
    estimates_from_draws(&chain.retained_xi(), loss_ratio, scale)
}

/// [`bmd_estimates`] on a bare sample of `xi` draws.
pub fn estimates_from_draws(xi: &[f64], loss_ratio: f64, scale: f64) -> Result<BmdEstimates> {
    if !(loss_ratio > 0.0 && loss_ratio.is_finite()) {
        return Err(BmdError::InvalidConfig(format!(
            "loss ratio must be positive, got {loss_ratio}"
        )));
    }
    if xi.is_empty() {
        return Err(BmdError::InvalidConfig("no draws to summarize".into()));
    }
    let mut sorted = xi.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p| Dose::new(quantile_sorted(&sorted, p), scale);
    Ok(BmdEstimates {
        loss_ratio,
        posterior_mean: Dose::new(mean(xi), scale),
        posterior_median: q(0.5),
        bilinear_estimate: q(loss_ratio / (1.0 + loss_ratio)),
        bmdl_05: q(0.05),
    })
}

/// Componentwise posterior medians `(xi, gamma0)` of the retained draws.
pub fn posterior_medians(chain: &ChainResult) -> (f64, f64) {
    (
        quantile(&chain.retained_xi(), 0.5),
        quantile(&chain.retained_gamma0(), 0.5),
    )
}

/// Posterior means `(xi, gamma0)` of the retained draws.
pub fn posterior_means(chain: &ChainResult) -> (f64, f64) {
    (mean(&chain.retained_xi()), mean(&chain.retained_gamma0()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraRiskSummary {
    /// Scaled dose.
    pub dose: f64,
    pub mean: f64,
    pub sd: f64,
    pub percentile_95: f64,
    /// `(extra risk, density)` pairs; empty when every draw maps to one value.
    pub kde: Vec<(f64, f64)>,
}

/// Distribution of the extra risk at a fixed scaled dose over the retained draws.
pub fn extra_risk_posterior(
    chain: &ChainResult,
    model: ModelKind,
    bmr: f64,
    dose: f64,
) -> Result<ExtraRiskSummary> {
    require_ok(chain)?;
    extra_risk_from_draws(chain.retained(), model, bmr, dose)
}

/// [`extra_risk_posterior`] on bare `(xi, gamma0)` draws.
pub fn extra_risk_from_draws(
    draws: &[[f64; 2]],
    model: ModelKind,
    bmr: f64,
    dose: f64,
) -> Result<ExtraRiskSummary> {
    if !(dose >= 0.0 && dose.is_finite()) {
        return Err(BmdError::Domain(format!(
            "dose must be finite and nonnegative, got {dose}"
        )));
    }
    if draws.is_empty() {
        return Err(BmdError::InvalidConfig("no draws to summarize".into()));
    }
    let values: Vec<f64> = draws
        .iter()
        .map(|d| {
            let p = RiskParams {
                xi: d[0],
                gamma0: d[1],
                bmr,
            };
            extra_risk_unchecked(&p, model, dose)
        })
        .collect();
    let kde = match silverman_bandwidth(&values) {
        Ok(h) => {
            let (lo, hi) = min_max(&values);
            let grid = linspace(lo - 4.0 * h, hi + 4.0 * h, KDE_GRID_POINTS);
            let dens = kde_with_bandwidth(&values, &grid, h);
            grid.into_iter().zip(dens).collect()
        }
        Err(_) => Vec::new(),
    };
    Ok(ExtraRiskSummary {
        dose,
        mean: mean(&values),
        sd: sd(&values),
        percentile_95: quantile(&values, 0.95),
        kde,
    })
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// `n` equispaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// The default scaled dose grid: 201 points on `[0, 1]`.
pub fn dose_grid() -> Vec<f64> {
    linspace(0.0, 1.0, DOSE_GRID_POINTS)
}

/// `0.9 min(sd, IQR / 1.34) n^(-1/5)`, falling back to `sd` when the IQR is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let s = sd(samples);
    if !(s > 0.0) {
        return Err(BmdError::DegenerateVariance(
            "kernel density of a sample with zero spread".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { s.min(iqr / 1.34) } else { s };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate with Silverman's bandwidth, evaluated on `grid`.
pub fn kde(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(samples)?;
    Ok(kde_with_bandwidth(samples, grid, h))
}

/// Gaussian kernel density estimate with bandwidth `h`.
///
/// Samples are sorted once and only those within `8 h` of a grid point are
/// visited.
pub fn kde_with_bandwidth(samples: &[f64], grid: &[f64], h: f64) -> Vec<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = 8.0 * h;
    grid.iter()
        .map(|&x| {
            let start = sorted.partition_point(|&s| s < x - reach);
            let end = sorted.partition_point(|&s| s <= x + reach);
            let sum: f64 = sorted[start..end]
                .iter()
                .map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum();
            sum * norm
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleBand {
    pub level: f64,
    /// The `xi` quantile at `1 - level`; the band curve passes through `bmr` there.
    pub xi_support: f64,
    pub centroid_xi: f64,
    pub centroid_gamma0: f64,
    /// Scaled doses.
    pub doses: Vec<f64>,
    /// Upper band `R_E(d; xi_support)`.
    pub band: Vec<f64>,
    /// `R_E(d)` at the centroid of the retained draws.
    pub centroid: Vec<f64>,
}

/// One-sided simultaneous upper credible band on the extra-risk curve.
///
/// For the logistic model, whose extra risk also depends on `gamma0`, both
/// curves use the posterior mean of `gamma0`.
pub fn credible_band(
    chain: &ChainResult,
    model: ModelKind,
    bmr: f64,
    level: f64,
    dose_grid: &[f64],
) -> Result<CredibleBand> {
    require_ok(chain)?;
    band_from_draws(chain.retained(), model, bmr, level, dose_grid)
}

/// [`credible_band`] on bare `(xi, gamma0)` draws.
pub fn band_from_draws(
    draws: &[[f64; 2]],
    model: ModelKind,
    bmr: f64,
    level: f64,
    dose_grid: &[f64],
) -> Result<CredibleBand> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BmdError::InvalidConfig(format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    if dose_grid.is_empty() {
        return Err(BmdError::InvalidConfig("empty dose grid".into()));
    }
    if let Some(d) = dose_grid.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(BmdError::Domain(format!("grid dose {d} is not a finite nonnegative value")));
    }
    if draws.is_empty() {
        return Err(BmdError::InvalidConfig("no draws to summarize".into()));
    }
    let xi: Vec<f64> = draws.iter().map(|d| d[0]).collect();
    let g: Vec<f64> = draws.iter().map(|d| d[1]).collect();
    let xi_support = quantile(&xi, 1.0 - level);
    let centroid_xi = mean(&xi);
    let centroid_gamma0 = mean(&g);
    let curve = |xi: f64| -> Vec<f64> {
        let p = RiskParams {
            xi,
            gamma0: centroid_gamma0,
            bmr,
        };
        dose_grid
            .iter()
            .map(|&d| extra_risk_unchecked(&p, model, d))
            .collect()
    };
    Ok(CredibleBand {
        level,
        xi_support,
        centroid_xi,
        centroid_gamma0,
        doses: dose_grid.to_vec(),
        band: curve(xi_support),
        centroid: curve(centroid_xi),
    })
}

impl CredibleBand {
    /// Dose at which the band reaches `target` extra risk, found by bisection
    /// on the band's own parameters. Returns `None` for targets outside `(0, 1)`.
    pub fn invert(&self, model: ModelKind, bmr: f64, target: f64) -> Option<f64> {
        if !(target > 0.0 && target < 1.0) {
            return None;
        }
        let p = RiskParams {
            xi: self.xi_support,
            gamma0: self.centroid_gamma0,
            bmr,
        };
        if target == bmr {
            return Some(self.xi_support);
        }
        let f = |d: f64| extra_risk_unchecked(&p, model, d) - target;
        let (mut lo, mut hi) = (0.0, self.xi_support.max(1.0));
        while f(hi) < 0.0 {
            hi *= 2.0;
            if !hi.is_finite() {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}
