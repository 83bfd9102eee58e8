//! Plot-data CSV files. Every file is long format with a `model` column.

use std::path::Path;

use bayes_bmd::inference::{self, CredibleBand, ExtraRiskSummary};
use bayes_bmd::{risk, ChainResult, DoseResponseDataset, ModelKind, RiskParams};

use crate::error::CliError;

pub const XI_POSTERIOR: &str = "xi_posterior.csv";
pub const RISK_CURVES: &str = "risk_curves.csv";
pub const EXTRA_RISK_KDE: &str = "extra_risk_kde.csv";
pub const CREDIBLE_BAND: &str = "credible_band.csv";

const XI_GRID_POINTS: usize = 201;

/// Plot data for one fitted model.
#[derive(Debug, Clone)]
pub struct ModelPlots {
    pub model: ModelKind,
    /// `(xi scaled, density on the scaled axis)`.
    pub xi_density: Vec<(f64, f64)>,
    /// `(series, params)` risk curves drawn on the dose grid.
    pub curves: Vec<(&'static str, RiskParams)>,
    pub extra_risk: Vec<(String, ExtraRiskSummary)>,
    pub band: CredibleBand,
}

impl ModelPlots {
    pub fn xi_density(chain: &ChainResult) -> Vec<(f64, f64)> {
        let xi = chain.retained_xi();
        let Ok(h) = inference::silverman_bandwidth(&xi) else {
            return Vec::new();
        };
        let lo = xi.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let grid = inference::linspace((lo - 4.0 * h).max(0.0), hi + 4.0 * h, XI_GRID_POINTS);
        let dens = inference::kde_with_bandwidth(&xi, &grid, h);
        grid.into_iter().zip(dens).collect()
    }
}

pub fn write_all(
    dir: &Path,
    data: &DoseResponseDataset,
    plots: &[ModelPlots],
) -> Result<(), CliError> {
    let scale = data.max_dose();
    let name = |m: ModelKind| m.name();

    let mut w = csv::Writer::from_path(dir.join(XI_POSTERIOR))?;
    w.write_record(["model", "xi_scaled", "xi_original", "density_scaled", "density_original"])?;
    for p in plots {
        for &(x, d) in &p.xi_density {
            w.serialize((name(p.model), x, x * scale, d, d / scale))?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(RISK_CURVES))?;
    w.write_record(["model", "series", "dose_scaled", "dose_original", "risk"])?;
    for p in plots {
        for (series, params) in &p.curves {
            for &d in &p.band.doses {
                let r = risk(params, p.model, d).map_err(CliError::from)?;
                w.serialize((name(p.model), series, d, d * scale, r))?;
            }
        }
        let scaled = data.scaled();
        for ((&d, &n), &y) in scaled.doses().iter().zip(data.group_sizes()).zip(data.responders()) {
            w.serialize((name(p.model), "observed", d, d * scale, y as f64 / n as f64))?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(EXTRA_RISK_KDE))?;
    w.write_record(["model", "location", "dose_scaled", "dose_original", "extra_risk", "density"])?;
    for p in plots {
        for (location, summary) in &p.extra_risk {
            for &(x, d) in &summary.kde {
                w.serialize((name(p.model), location, summary.dose, summary.dose * scale, x, d))?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(CREDIBLE_BAND))?;
    w.write_record(["model", "dose_scaled", "dose_original", "band", "centroid"])?;
    for p in plots {
        for ((&d, &b), &c) in p.band.doses.iter().zip(&p.band.band).zip(&p.band.centroid) {
            w.serialize((name(p.model), d, d * scale, b, c))?;
        }
    }
    w.flush()?;
    Ok(())
}
