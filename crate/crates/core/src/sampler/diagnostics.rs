//! Sequential bifurcation burn-in diagnostic.
//!
//! Early segments of the chain (first 10%, 20%, 30%) are compared with the
//! final 50% through Z-statistics on the `xi` mean, the `gamma0` mean and the
//! within-segment covariance. Variances of segment means come from the
//! spectral density at frequency zero, estimated by an AIC-selected
//! autoregression.

use serde::{Deserialize, Serialize};

use crate::error::{BmdError, Result};

/// Early-segment fractions, tried in order.
pub const BURN_IN_FRACTIONS: [f64; 3] = [0.1, 0.2, 0.3];
/// Fraction of the chain used as the late reference segment.
pub const LATE_FRACTION: f64 = 0.5;
pub const Z_CRITICAL: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub early_fraction: f64,
    pub z_xi: f64,
    pub z_gamma0: f64,
    pub z_covariance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnInDiagnostic {
    pub pass: bool,
    /// 1-based index of the first retained draw, when a stage passed.
    pub burn_in_index: Option<usize>,
    /// Stages actually evaluated, in order.
    pub stages: Vec<StageResult>,
}

pub fn burn_in_diagnostic(draws: &[[f64; 2]]) -> Result<BurnInDiagnostic> {
    let k = draws.len();
    if k < 100 {
        return Err(BmdError::InvalidConfig(format!(
            "burn-in diagnostic needs at least 100 draws, got {k}"
        )));
    }
    let late_len = (LATE_FRACTION * k as f64).round() as usize;
    let late = &draws[k - late_len..];
    let late_summary = SegmentSummary::new(late)?;

    let mut stages = Vec::with_capacity(BURN_IN_FRACTIONS.len());
    for &fraction in &BURN_IN_FRACTIONS {
        let early_len = (fraction * k as f64).round() as usize;
        let early = SegmentSummary::new(&draws[..early_len])?;
        let z = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0) / (a.1 + b.1).sqrt();
        let stage = StageResult {
            early_fraction: fraction,
            z_xi: z(early.xi, late_summary.xi),
            z_gamma0: z(early.gamma0, late_summary.gamma0),
            z_covariance: z(early.covariance, late_summary.covariance),
            pass: false,
        };
        let pass = [stage.z_xi, stage.z_gamma0, stage.z_covariance]
            .iter()
            .all(|v| v.abs() < Z_CRITICAL);
        stages.push(StageResult { pass, ..stage });
        if pass {
            return Ok(BurnInDiagnostic {
                pass: true,
                burn_in_index: Some(early_len + 1),
                stages,
            });
        }
    }
    Ok(BurnInDiagnostic {
        pass: false,
        burn_in_index: None,
        stages,
    })
}

/// (mean, variance of the mean) for each of the three monitored series.
struct SegmentSummary {
    xi: (f64, f64),
    gamma0: (f64, f64),
    covariance: (f64, f64),
}

impl SegmentSummary {
    fn new(segment: &[[f64; 2]]) -> Result<Self> {
        let xi: Vec<f64> = segment.iter().map(|d| d[0]).collect();
        let g: Vec<f64> = segment.iter().map(|d| d[1]).collect();
        let mx = mean(&xi);
        let mg = mean(&g);
        let products: Vec<f64> = xi.iter().zip(&g).map(|(a, b)| (a - mx) * (b - mg)).collect();
        let l = segment.len() as f64;
        Ok(Self {
            xi: (mx, spectral_density_zero(&xi).map_err(|_| degenerate("xi"))? / l),
            gamma0: (mg, spectral_density_zero(&g).map_err(|_| degenerate("gamma0"))? / l),
            covariance: (
                mean(&products),
                spectral_density_zero(&products).map_err(|_| degenerate("covariance"))? / l,
            ),
        })
    }
}

fn degenerate(what: &str) -> BmdError {
    BmdError::DegenerateVariance(format!("{what} series of a chain segment"))
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Spectral density at frequency zero, `sigma^2 / (1 - sum phi)^2`, of an
/// autoregression fitted by least squares.
///
/// Orders `0..=10 log10(L)` are fitted on a common sample and the order with
/// the smallest AIC is kept. Errors on constant or too-short series.
pub fn spectral_density_zero(series: &[f64]) -> Result<f64> {
    let len = series.len();
    if len < 20 {
        return Err(BmdError::DegenerateVariance(format!(
            "spectral estimate needs at least 20 points, got {len}"
        )));
    }
    let m = mean(series);
    let x: Vec<f64> = series.iter().map(|v| v - m).collect();
    let ss: f64 = x.iter().map(|v| v * v).sum();
    if !(ss > 0.0) || ss <= 1e-28 * series.iter().map(|v| v * v).sum::<f64>() {
        return Err(BmdError::DegenerateVariance("constant series".into()));
    }

    let p_max = ((10.0 * (len as f64).log10()).floor() as usize).min(len / 4);
    let n = len - p_max;
    let dim = p_max + 1;
    // cross[i][j] = sum over t in [p_max, len) of x[t - i] * x[t - j]
    let mut cross = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        cross[0][j] = (p_max..len).map(|t| x[t] * x[t - j]).sum();
        cross[j][0] = cross[0][j];
    }
    for i in 0..p_max {
        for j in i..p_max {
            let v = cross[i][j] + x[p_max - 1 - i] * x[p_max - 1 - j]
                - x[len - 1 - i] * x[len - 1 - j];
            cross[i + 1][j + 1] = v;
            cross[j + 1][i + 1] = v;
        }
    }

    let yy = cross[0][0];
    let mut best = (n as f64 * (yy / n as f64).ln(), yy / n as f64, 0.0);
    for p in 1..=p_max {
        let gram: Vec<Vec<f64>> = (1..=p).map(|i| cross[i][1..=p].to_vec()).collect();
        let rhs: Vec<f64> = (1..=p).map(|j| cross[0][j]).collect();
        let Some(phi) = cholesky_solve(gram, &rhs) else {
            continue;
        };
        let rss = yy - phi.iter().zip(&rhs).map(|(a, b)| a * b).sum::<f64>();
        if !(rss > 0.0) {
            continue;
        }
        let sigma2 = rss / n as f64;
        let aic = n as f64 * sigma2.ln() + 2.0 * p as f64;
        if aic < best.0 {
            best = (aic, sigma2, phi.iter().sum());
        }
    }
    let (_, sigma2, phi_sum) = best;
    Ok(sigma2 / (1.0 - phi_sum).powi(2))
}

fn cholesky_solve(mut a: Vec<Vec<f64>>, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i][k] * y[k];
        }
        y[i] = s / a[i][i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= a[k][i] * y[k];
        }
        y[i] = s / a[i][i];
    }
    Some(y)
}
