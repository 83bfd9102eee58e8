//! Independent reference computations for the acceptance suite.

#![allow(dead_code)]

use statrs::function::gamma::ln_gamma;

pub struct Group {
    pub dose: f64,
    pub n: u64,
    pub y: u64,
}

/// Cumene groups on the scaled dose axis.
pub fn cumene_scaled() -> Vec<Group> {
    [(0.0, 50, 4), (0.25, 50, 31), (0.5, 50, 42), (1.0, 50, 46)]
        .into_iter()
        .map(|(dose, n, y)| Group { dose, n, y })
        .collect()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial log-likelihood of the quantal-linear curve with benchmark dose
/// `xi` and background `g`: `R(d) = 1 - (1 - g) (1 - bmr)^(d / xi)`.
pub fn ql_log_likelihood(data: &[Group], xi: f64, g: f64, bmr: f64) -> f64 {
    data.iter()
        .map(|grp| {
            let ln_survive = (1.0 - g).ln() + grp.dose / xi * (1.0 - bmr).ln();
            let r = -ln_survive.exp_m1();
            let y = grp.y as f64;
            let n = grp.n as f64;
            ln_choose(grp.n, grp.y) + y * r.ln() + (n - y) * ln_survive
        })
        .sum()
}

pub fn ln_inverse_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn ln_beta_density(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

/// `log` of the integral of `exp(f(xi, g))` over `xi > 0`, `0 < g < 1`,
/// by the trapezoid rule in `(ln xi, logit g)`.
pub fn log_integral_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    ln_xi: (f64, f64),
    logit_g: (f64, f64),
    points: usize,
) -> f64 {
    let hu = (ln_xi.1 - ln_xi.0) / (points - 1) as f64;
    let hv = (logit_g.1 - logit_g.0) / (points - 1) as f64;
    let mut vals = Vec::with_capacity(points * points);
    for i in 0..points {
        let u = ln_xi.0 + i as f64 * hu;
        let xi = u.exp();
        for j in 0..points {
            let v = logit_g.0 + j as f64 * hv;
            let g = 1.0 / (1.0 + (-v).exp());
            let w: f64 = if i == 0 || i == points - 1 { 0.5 } else { 1.0 }
                * if j == 0 || j == points - 1 { 0.5 } else { 1.0 };
            let jac = u + g.ln() + (1.0 - g).ln();
            vals.push(f(xi, g) + jac + w.ln());
        }
    }
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + (hu * hv).ln()
}

/// `log` of the integral of `exp(f(x))` over `x > 0`, trapezoid in `ln x`.
pub fn log_integral_positive<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize) -> f64 {
    let h = (hi - lo) / (points - 1) as f64;
    let vals: Vec<f64> = (0..points)
        .map(|i| {
            let u = lo + i as f64 * h;
            let w: f64 = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
            f(u.exp()) + u + w.ln()
        })
        .collect();
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + h.ln()
}

/// `log` of the integral of `exp(f(x))` over `0 < x < 1`, trapezoid in
/// `logit x`.
pub fn log_integral_unit<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize) -> f64 {
    let h = (hi - lo) / (points - 1) as f64;
    let vals: Vec<f64> = (0..points)
        .map(|i| {
            let v = lo + i as f64 * h;
            let x = 1.0 / (1.0 + (-v).exp());
            let w: f64 = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
            f(x) + x.ln() + (-x).ln_1p() + w.ln()
        })
        .collect();
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + h.ln()
}

/// Maximum-likelihood fit of the quantal-linear model in its slope form
/// `R(d) = 1 - exp(-b0 - b1 d)` by Newton's method with step halving.
/// Returns `(b0, b1)`.
pub fn ql_slope_mle(data: &[Group], start: (f64, f64)) -> (f64, f64) {
    let ll = |b0: f64, b1: f64| -> f64 {
        data.iter()
            .map(|g| {
                let eta = b0 + b1 * g.dose;
                g.y as f64 * (-(-eta).exp_m1()).ln() - (g.n - g.y) as f64 * eta
            })
            .sum()
    };
    let (mut b0, mut b1) = start;
    for _ in 0..100 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for g in data {
            let eta = b0 + b1 * g.dose;
            let em1 = eta.exp_m1();
            let y = g.y as f64;
            let d1 = y / em1 - (g.n - g.y) as f64;
            let d2 = -y * eta.exp() / (em1 * em1);
            g0 += d1;
            g1 += d1 * g.dose;
            h00 += d2;
            h01 += d2 * g.dose;
            h11 += d2 * g.dose * g.dose;
        }
        let det = h00 * h11 - h01 * h01;
        let s0 = (h11 * g0 - h01 * g1) / det;
        let s1 = (h00 * g1 - h01 * g0) / det;
        let base = ll(b0, b1);
        let mut t = 1.0;
        loop {
            let (n0, n1) = (b0 - t * s0, b1 - t * s1);
            if n0 > 0.0 && n1 > 0.0 && ll(n0, n1) >= base {
                b0 = n0;
                b1 = n1;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return (b0, b1);
            }
        }
        if s0.abs() < 1e-14 * b0.abs().max(1.0) && s1.abs() < 1e-14 * b1.abs().max(1.0) {
            break;
        }
    }
    (b0, b1)
}
