//! Reparameterized quantal dose-response models.
//!
//! Both models are written in terms of the benchmark dose `xi` and the
//! background risk `gamma0 = R(0)`, so that `R_E(xi) = bmr` holds by
//! construction. Doses are on the scaled axis (highest dose = 1).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BmdError, Result};
use crate::special::ln_choose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseDataset {
    doses: Vec<f64>,
    group_sizes: Vec<u64>,
    responders: Vec<u64>,
    unit_label: String,
}

impl DoseResponseDataset {
    /// Validates and builds a dataset. Doses must be strictly increasing and
    /// start with a zero-dose control group.
    pub fn new(
        doses: Vec<f64>,
        group_sizes: Vec<u64>,
        responders: Vec<u64>,
        unit_label: impl Into<String>,
    ) -> Result<Self> {
        let m = doses.len();
        if group_sizes.len() != m || responders.len() != m {
            return Err(BmdError::InvalidDataset(format!(
                "column lengths differ: {} doses, {} group sizes, {} responder counts",
                m,
                group_sizes.len(),
                responders.len()
            )));
        }
        if m < 2 {
            return Err(BmdError::InvalidDataset(format!(
                "at least 2 dose groups are required, got {m}"
            )));
        }
        if doses[0] != 0.0 {
            return Err(BmdError::InvalidDataset(format!(
                "the first dose group must be a zero-dose control, got dose {}",
                doses[0]
            )));
        }
        for (i, w) in doses.windows(2).enumerate() {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(BmdError::InvalidDataset(format!(
                    "doses must be finite and strictly increasing (group {} has dose {} after {})",
                    i + 2,
                    w[1],
                    w[0]
                )));
            }
        }
        for (i, (&n, &y)) in group_sizes.iter().zip(&responders).enumerate() {
            if n == 0 {
                return Err(BmdError::InvalidDataset(format!(
                    "group {} has no subjects",
                    i + 1
                )));
            }
            if y > n {
                return Err(BmdError::InvalidDataset(format!(
                    "group {} has {} responders out of {} subjects",
                    i + 1,
                    y,
                    n
                )));
            }
        }
        Ok(Self {
            doses,
            group_sizes,
            responders,
            unit_label: unit_label.into(),
        })
    }

    pub fn doses(&self) -> &[f64] {
        &self.doses
    }

    pub fn group_sizes(&self) -> &[u64] {
        &self.group_sizes
    }

    pub fn responders(&self) -> &[u64] {
        &self.responders
    }

    pub fn unit_label(&self) -> &str {
        &self.unit_label
    }

    pub fn len(&self) -> usize {
        self.doses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doses.is_empty()
    }

    pub fn max_dose(&self) -> f64 {
        *self.doses.last().expect("datasets have at least two groups")
    }

    /// SHA-256 over the canonical `dose,n,y` rows.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for ((d, n), y) in self.doses.iter().zip(&self.group_sizes).zip(&self.responders) {
            hasher.update(format!("{d:?},{n},{y}\n").as_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn scaled(&self) -> ScaledDataset {
        ScaledDataset::new(self.clone())
    }
}

/// A dataset on the scaled dose axis, `d / scale` with `scale` the highest
/// administered dose.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledDataset {
    base: DoseResponseDataset,
    scale: f64,
    scaled_doses: Vec<f64>,
    log_binomial_constant: f64,
}

impl ScaledDataset {
    pub fn new(base: DoseResponseDataset) -> Self {
        let scale = base.max_dose();
        let mut scaled_doses: Vec<f64> = base.doses.iter().map(|d| d / scale).collect();
        // Guard against rounding in the division.
        if let Some(last) = scaled_doses.last_mut() {
            *last = 1.0;
        }
        let log_binomial_constant = base
            .group_sizes
            .iter()
            .zip(&base.responders)
            .map(|(&n, &y)| ln_choose(n, y))
            .sum();
        Self {
            base,
            scale,
            scaled_doses,
            log_binomial_constant,
        }
    }

    pub fn base(&self) -> &DoseResponseDataset {
        &self.base
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn doses(&self) -> &[f64] {
        &self.scaled_doses
    }

    /// Sum of `log C(N_i, Y_i)` over the groups.
    pub fn log_binomial_constant(&self) -> f64 {
        self.log_binomial_constant
    }

    pub fn to_original(&self, x: f64) -> f64 {
        to_original_units(x, self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    QuantalLinear,
    Logistic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::QuantalLinear, ModelKind::Logistic];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::QuantalLinear => "quantal-linear",
            ModelKind::Logistic => "logistic",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "quantal-linear" | "ql" => Ok(ModelKind::QuantalLinear),
            "logistic" | "lo" => Ok(ModelKind::Logistic),
            other => Err(format!("unknown model `{other}` (expected quantal-linear or logistic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub xi: f64,
    pub gamma0: f64,
    pub bmr: f64,
}

impl RiskParams {
    pub fn new(xi: f64, gamma0: f64, bmr: f64) -> Result<Self> {
        let p = Self { xi, gamma0, bmr };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(BmdError::Domain(format!("xi must be positive, got {}", self.xi)));
        }
        if !(self.gamma0 > 0.0 && self.gamma0 < 1.0) {
            return Err(BmdError::Domain(format!(
                "gamma0 must lie in (0, 1), got {}",
                self.gamma0
            )));
        }
        if !(self.bmr > 0.0 && self.bmr < 1.0) {
            return Err(BmdError::Domain(format!("bmr must lie in (0, 1), got {}", self.bmr)));
        }
        Ok(())
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic intercept and slope implied by `(xi, gamma0, bmr)`.
///
/// `R(0) = gamma0` fixes the intercept; `R_E(xi) = bmr` means
/// `R(xi) = gamma0 + bmr (1 - gamma0)`, which fixes the slope.
pub fn logistic_coefficients(p: &RiskParams) -> (f64, f64) {
    let beta0 = logit(p.gamma0);
    let at_bmd = p.gamma0 + p.bmr * (1.0 - p.gamma0);
    (beta0, (logit(at_bmd) - beta0) / p.xi)
}

/// Quantal-linear coefficients `(beta0, beta1)` of `R(d) = 1 - exp(-beta0 - beta1 d)`.
pub fn quantal_linear_coefficients(p: &RiskParams) -> (f64, f64) {
    (-(-p.gamma0).ln_1p(), -(-p.bmr).ln_1p() / p.xi)
}

/// `(log R(d), log(1 - R(d)))` without validation.
pub(crate) fn log_risk_pair(p: &RiskParams, model: ModelKind, d: f64) -> (f64, f64) {
    match model {
        ModelKind::QuantalLinear => {
            let log_survival = (-p.gamma0).ln_1p() + (-p.bmr).ln_1p() * d / p.xi;
            let log_risk = if log_survival > -std::f64::consts::LN_2 {
                (-log_survival.exp_m1()).ln()
            } else {
                (-log_survival.exp()).ln_1p()
            };
            (log_risk, log_survival)
        }
        ModelKind::Logistic => {
            let (b0, b1) = logistic_coefficients(p);
            let eta = b0 + b1 * d;
            (-softplus(-eta), -softplus(eta))
        }
    }
}

fn check_dose(d: f64) -> Result<()> {
    if d >= 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(BmdError::Domain(format!("dose must be finite and nonnegative, got {d}")))
    }
}

/// Probability of response at scaled dose `d`.
pub fn risk(params: &RiskParams, model: ModelKind, d: f64) -> Result<f64> {
    params.validate()?;
    check_dose(d)?;
    if d == 0.0 {
        return Ok(params.gamma0);
    }
    Ok(match model {
        ModelKind::QuantalLinear => {
            let (_, log_survival) = log_risk_pair(params, model, d);
            -log_survival.exp_m1()
        }
        ModelKind::Logistic => {
            let (b0, b1) = logistic_coefficients(params);
            1.0 / (1.0 + (-(b0 + b1 * d)).exp())
        }
    })
}

pub(crate) fn extra_risk_unchecked(params: &RiskParams, model: ModelKind, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    match model {
        ModelKind::QuantalLinear => -((-params.bmr).ln_1p() * d / params.xi).exp_m1(),
        ModelKind::Logistic => {
            if d == params.xi {
                return params.bmr;
            }
            let (b0, b1) = logistic_coefficients(params);
            let r = 1.0 / (1.0 + (-(b0 + b1 * d)).exp());
            (r - params.gamma0) / (1.0 - params.gamma0)
        }
    }
}

/// Extra risk `(R(d) - R(0)) / (1 - R(0))` at scaled dose `d`.
pub fn extra_risk(params: &RiskParams, model: ModelKind, d: f64) -> Result<f64> {
    params.validate()?;
    check_dose(d)?;
    Ok(extra_risk_unchecked(params, model, d))
}

/// Benchmark dose of the quantal-linear model with slope `beta1`.
pub fn bmd_from_slope(beta1: f64, bmr: f64) -> Result<f64> {
    if !(bmr > 0.0 && bmr < 1.0) {
        return Err(BmdError::Domain(format!("bmr must lie in (0, 1), got {bmr}")));
    }
    if !(beta1 > 0.0) {
        return Err(BmdError::InfiniteBmd { slope: beta1 });
    }
    Ok(-(-bmr).ln_1p() / beta1)
}

/// Binomial log-likelihood, including the `log C(N_i, Y_i)` constants.
///
/// Returns `-inf` when a group's risk is 0 or 1 but its counts say otherwise.
pub fn log_likelihood(data: &ScaledDataset, params: &RiskParams, model: ModelKind) -> f64 {
    if params.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    data.log_binomial_constant + log_likelihood_kernel(data, params, model)
}

/// Log-likelihood without the binomial constants.
pub fn log_likelihood_kernel(data: &ScaledDataset, params: &RiskParams, model: ModelKind) -> f64 {
    let mut total = 0.0;
    for ((&d, &n), &y) in data
        .scaled_doses
        .iter()
        .zip(&data.base.group_sizes)
        .zip(&data.base.responders)
    {
        let (log_r, log_s) = log_risk_pair(params, model, d);
        if y > 0 {
            total += y as f64 * log_r;
        }
        if n > y {
            total += (n - y) as f64 * log_s;
        }
        if total.is_nan() {
            return f64::NEG_INFINITY;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub pass: bool,
    pub s_max: f64,
    /// Empirical extra risks of the non-control groups, in dose order.
    pub empirical_extra_risks: Vec<f64>,
}

/// Pre-fit screen for flat or decreasing dose response.
///
/// Empirical extra risks of each treated group are joined to the origin on
/// the scaled dose axis; the data pass when the steepest ray has positive slope.
pub fn screen_data(data: &DoseResponseDataset) -> Result<ScreenResult> {
    let p1 = data.responders[0] as f64 / data.group_sizes[0] as f64;
    if data.responders[0] == data.group_sizes[0] {
        return Err(BmdError::DataFailure(format!(
            "every control subject responded ({}/{}); extra risk is undefined",
            data.responders[0], data.group_sizes[0]
        )));
    }
    let scale = data.max_dose();
    let mut s_max = f64::NEG_INFINITY;
    let mut empirical = Vec::with_capacity(data.len() - 1);
    for i in 1..data.len() {
        let p = data.responders[i] as f64 / data.group_sizes[i] as f64;
        let re = (p - p1) / (1.0 - p1);
        empirical.push(re);
        s_max = s_max.max(re / (data.doses[i] / scale));
    }
    Ok(ScreenResult {
        pass: s_max > 0.0,
        s_max,
        empirical_extra_risks: empirical,
    })
}

pub fn to_original_units(x: f64, scale: f64) -> f64 {
    x * scale
}
