//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::Instant;

use bayes_bmd::evidence::{
    bridge_estimate, bridge_marginal, ElicitedPriors, EpsilonSeeding, Gamma0Choice, Scenario,
    SensitivitySetup,
};
use bayes_bmd::{
    bmd_estimates, burn_in_diagnostic, elicit_gamma0, elicit_xi, extra_risk_posterior, fit_mle,
    quantile, run_chain, run_with_restarts, sampler::run_with_restarts_from, screen_data,
    sampler::BurnInDiagnostic, starting_point, ChainResult, ChainStatus, DoseResponseDataset,
    ElicitedQuartiles, Gamma0Prior, LogTarget, ModelKind, Posterior, SamplerConfig,
    ScaledDataset, StartingPoint, XiFamily, XiPrior,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use common::*;

const BMR: f64 = 0.1;
const SCALE: f64 = 500.0;
const SEEDS: [u64; 5] = [20140101, 1, 2, 3, 4];

// Criterion 1.
const TABLE_IG: (f64, f64) = (0.53, 0.13);
const TWO_DECIMALS: f64 = 0.005;
const OMEGA: f64 = 12.31;
const OMEGA_TOL: f64 = 0.01;
const RESIDUAL_MAX: f64 = 1e-10;
const FAST_SECONDS: f64 = 1.0;

// Criterion 2.
const MLE_PPM: f64 = 17.062;
const MLE_REL: f64 = 0.005;
const WALD_PPM: f64 = 13.618;
const WALD_REL: f64 = 0.02;

// Criterion 3.
const MEDIAN_PPM: f64 = 17.973;
const TERCILE_PPM: f64 = 17.046;
const BMDL_PPM: f64 = 14.752;
const ESTIMATE_REL: f64 = 0.02;
const BMDL_REL: f64 = 0.03;

// Criterion 4.
const DIAGNOSTIC_SEEDS: u64 = 10;
const MEAN_SHIFT_CHAINS: u64 = 20;

// Criterion 5.
const BF_MIN: f64 = 150.0;
const BF_REFERENCE: f64 = 518.3;
const LOG_BF_TOL: f64 = 1.0;
const QUADRATURE_TOL: f64 = 0.05;

// Criterion 6.
const S1_DELTA_MAX: f64 = 0.01;
const S23_DELTA: (f64, f64) = (0.02, 0.06);
const DQ_RATIO_MIN: f64 = 10.0;

// Criterion 7.
const P95_TOL: f64 = 1e-8;
const BAYES_MEAN: f64 = 0.083;
const FREQ_MEAN: f64 = 0.077;
const MEAN_TOL: f64 = 0.003;
const BAYES_SD: f64 = 0.0096;
const FREQ_SD: f64 = 0.0090;
const SD_TOL: f64 = 0.0010;

// Criterion 8.
const INTEGRAL_TOL: f64 = 1e-6;
const ROUND_TRIP_TOL: f64 = 1e-5;
const RECOVERY_REL: f64 = 0.02;
const INVARIANCE_REL: f64 = 1e-6;
const CONJUGATE_TOL: f64 = 0.02;

/// Sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        let msg = msg.into();
        if ok {
            self.notes.push(msg);
        } else {
            self.failures.push(msg);
        }
    }
}

fn report(id: u32, name: &str, checks: Checks, failed: &mut u32) {
    if checks.failures.is_empty() {
        println!("PASS {id} {name}: {}", checks.notes.join("; "));
    } else {
        *failed += 1;
        println!("FAIL {id} {name}: {}", checks.failures.join("; "));
    }
}

fn within_rel(x: f64, target: f64, rel: f64) -> bool {
    ((x - target) / target).abs() <= rel
}

fn cumene() -> ScaledDataset {
    DoseResponseDataset::new(
        vec![0.0, 125.0, 250.0, 500.0],
        vec![50; 4],
        vec![4, 31, 42, 46],
        "ppm",
    )
    .unwrap()
    .scaled()
}

fn elicited() -> ElicitedPriors {
    let xq = ElicitedQuartiles::new(0.18, 0.5).unwrap();
    let ig = elicit_xi(&xq, XiFamily::InverseGamma).unwrap().params;
    let ga = elicit_xi(&xq, XiFamily::Gamma).unwrap().params;
    let b = elicit_gamma0(&ElicitedQuartiles::new(0.04, 0.08).unwrap())
        .unwrap()
        .params;
    ElicitedPriors {
        xi_inverse_gamma: XiPrior::inverse_gamma(ig.0, ig.1),
        xi_gamma: XiPrior::gamma(ga.0, ga.1),
        gamma0: Gamma0Prior::new(b.0, b.1).unwrap(),
    }
}

fn posterior(model: ModelKind) -> Posterior {
    let e = elicited();
    Posterior::new(cumene(), model, BMR, e.xi_inverse_gamma, e.gamma0)
}

fn criterion_1() -> Checks {
    let mut c = Checks::default();
    let t = Instant::now();
    let ig = elicit_xi(&ElicitedQuartiles::new(0.18, 0.5).unwrap(), XiFamily::InverseGamma).unwrap();
    let (a, b) = ig.params;
    c.check(
        (a - TABLE_IG.0).abs() <= TWO_DECIMALS && (b - TABLE_IG.1).abs() <= TWO_DECIMALS,
        format!("IG({a:.4}, {b:.4})"),
    );
    let beta = elicit_gamma0(&ElicitedQuartiles::new(0.04, 0.08).unwrap()).unwrap();
    let (psi, omega) = beta.params;
    c.check((omega - OMEGA).abs() <= OMEGA_TOL, format!("omega {omega:.4}"));
    c.check(
        beta.half_squared_residual < RESIDUAL_MAX && ig.half_squared_residual < RESIDUAL_MAX,
        format!("psi {psi:.4} with residual {:.1e}", beta.half_squared_residual),
    );
    let secs = t.elapsed().as_secs_f64();
    c.check(secs < FAST_SECONDS, format!("{secs:.3} s"));
    c
}

fn criterion_2() -> Checks {
    let mut c = Checks::default();
    let t = Instant::now();
    let fit = fit_mle(&cumene(), ModelKind::QuantalLinear, BMR).unwrap();
    c.check(
        within_rel(fit.xi_hat_original, MLE_PPM, MLE_REL),
        format!("MLE {:.4} ppm", fit.xi_hat_original),
    );
    c.check(
        within_rel(fit.wald_bmdl_95_original, WALD_PPM, WALD_REL),
        format!("Wald BMDL {:.4} ppm", fit.wald_bmdl_95_original),
    );
    let secs = t.elapsed().as_secs_f64();
    c.check(secs < FAST_SECONDS, format!("{secs:.3} s"));
    c
}

fn criterion_3(chains: &[ChainResult]) -> Checks {
    let mut c = Checks::default();
    let (mut med, mut ter, mut low) = (Vec::new(), Vec::new(), Vec::new());
    for chain in chains {
        let Ok(e) = bmd_estimates(chain, 0.5, SCALE) else {
            c.check(false, format!("seed {} failed burn-in", chain.seed));
            continue;
        };
        med.push(e.posterior_median.original);
        ter.push(e.bilinear_estimate.original);
        low.push(e.bmdl_05.original);
    }
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let mut one = |name: &str, v: &[f64], target: f64, rel: f64| {
        let (lo, hi) = range(v);
        c.check(
            v.iter().all(|&x| within_rel(x, target, rel)),
            format!("{name} {lo:.3}..{hi:.3} ppm"),
        );
    };
    one("median", &med, MEDIAN_PPM, ESTIMATE_REL);
    one("tercile", &ter, TERCILE_PPM, ESTIMATE_REL);
    one("BMDL", &low, BMDL_PPM, BMDL_REL);
    c
}

fn criterion_4() -> Checks {
    let mut c = Checks::default();
    let post = posterior(ModelKind::QuantalLinear);
    let start = starting_point(&post.data, BMR).unwrap();
    let mut first_stage = 0;
    let mut selected = Vec::new();
    for seed in 1..=DIAGNOSTIC_SEEDS {
        let cfg = SamplerConfig::default().with_seed(seed);
        let chain = run_chain(&post, start, &cfg).unwrap();
        let d = burn_in_diagnostic(&chain.draws).unwrap();
        if d.stages[0].pass {
            first_stage += 1;
        }
        if let Some(k) = d.burn_in_index {
            selected.push(k);
        }
    }
    let allowed = [10_001, 20_001, 30_001];
    c.check(
        selected.iter().all(|k| allowed.contains(k)),
        format!("burn-in indices {selected:?}"),
    );
    c.check(
        2 * first_stage > DIAGNOSTIC_SEEDS,
        format!("10% stage passed in {first_stage}/{DIAGNOSTIC_SEEDS} seeds"),
    );

    let mut caught = 0;
    for seed in 0..MEAN_SHIFT_CHAINS {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = 100_000;
        let draws: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let shift = if k < 2 * n / 5 { 0.5 } else { 0.0 };
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                [1.0 + shift + 0.1 * z1, 0.5 + 0.05 * z2]
            })
            .collect();
        let d = burn_in_diagnostic(&draws).unwrap();
        if !d.pass && d.stages.iter().all(|s| !s.pass) {
            caught += 1;
        }
    }
    c.check(
        caught == MEAN_SHIFT_CHAINS,
        format!("mean-shift chains failing every stage {caught}/{MEAN_SHIFT_CHAINS}"),
    );

    let mut calls = 0;
    let cfg = SamplerConfig {
        chain_length: 10_000,
        ..Default::default()
    };
    let chain = run_with_restarts_from(&post, start, &cfg, |_: &[[f64; 2]]| {
        calls += 1;
        Ok(BurnInDiagnostic {
            pass: false,
            burn_in_index: None,
            stages: Vec::new(),
        })
    })
    .unwrap();
    c.check(
        chain.status == ChainStatus::AlgorithmFailure && chain.attempts == 5 && calls == 5,
        format!("stub diagnostic: {:?} after {} attempts", chain.status, chain.attempts),
    );
    c
}

fn quadrature_log_marginal(e: &ElicitedPriors) -> f64 {
    let XiPrior::InverseGamma { alpha, beta } = e.xi_inverse_gamma else {
        unreachable!()
    };
    let (psi, omega) = (e.gamma0.psi, e.gamma0.omega);
    let data = cumene_scaled();
    log_integral_2d(
        |xi, g| {
            ql_log_likelihood(&data, xi, g, BMR)
                + ln_inverse_gamma(xi, alpha, beta)
                + ln_beta_density(g, psi, omega)
        },
        ((1e-4f64).ln(), 10f64.ln()),
        (-12.0, 4.0),
        1500,
    )
}

fn criterion_5(ql_chains: &[ChainResult]) -> Checks {
    let mut c = Checks::default();
    let ql = posterior(ModelKind::QuantalLinear);
    let lo = posterior(ModelKind::Logistic);
    let exact = quadrature_log_marginal(&elicited());
    let mut bfs = Vec::new();
    let mut worst_quad: f64 = 0.0;
    for (chain, &seed) in ql_chains.iter().zip(&SEEDS) {
        let lo_chain = run_with_restarts(&lo, &SamplerConfig::default().with_seed(seed)).unwrap();
        let (Ok(m_ql), Ok(m_lo)) = (bridge_marginal(chain, &ql, seed), bridge_marginal(&lo_chain, &lo, seed))
        else {
            c.check(false, format!("seed {seed}: a chain failed burn-in"));
            continue;
        };
        bfs.push(m_ql.log_value - m_lo.log_value);
        worst_quad = worst_quad.max((m_ql.log_value - exact).abs());
    }
    let log_reference = BF_REFERENCE.ln();
    c.check(
        bfs.iter().all(|&l| l.exp() > BF_MIN && (l - log_reference).abs() <= LOG_BF_TOL),
        format!(
            "BF {:.1}..{:.1}",
            bfs.iter().copied().fold(f64::INFINITY, f64::min).exp(),
            bfs.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp()
        ),
    );
    c.check(
        worst_quad <= QUADRATURE_TOL,
        format!("bridge vs quadrature ({exact:.4}) within {worst_quad:.4}"),
    );
    c
}

fn criterion_6() -> Checks {
    let mut c = Checks::default();
    let setup = SensitivitySetup {
        data: cumene(),
        model: ModelKind::QuantalLinear,
        bmr: BMR,
        elicited: Some(elicited()),
        epsilon_grid: SensitivitySetup::default_grid(),
        sampler: SamplerConfig::default(),
        seeding: EpsilonSeeding::Offset,
    };
    for g in [Gamma0Choice::Objective, Gamma0Choice::Elicited] {
        let mut cells = Vec::new();
        for s in Scenario::ALL {
            let r = bayes_bmd::sensitivity_study(&setup, s, g).unwrap();
            cells.push((r.delta.unwrap_or(f64::NAN), r.d_q_abs.unwrap_or(f64::NAN)));
        }
        let [(d1, q1), (d2, q2), (d3, q3)] = [cells[0], cells[1], cells[2]];
        let label = format!("{g:?}").to_lowercase();
        c.check(d1 < S1_DELTA_MAX, format!("{label} s1 delta {d1:.4}"));
        for (s, d) in [("s2", d2), ("s3", d3)] {
            c.check(
                d >= S23_DELTA.0 && d <= S23_DELTA.1,
                format!("{label} {s} delta {d:.4}"),
            );
        }
        c.check(
            q2 >= DQ_RATIO_MIN * q1 && q2 >= DQ_RATIO_MIN * q3,
            format!("{label} |D(q)| {q1:.1e} / {q2:.1e} / {q3:.1e}"),
        );
    }
    c
}

fn criterion_7(chains: &[ChainResult]) -> Checks {
    let mut c = Checks::default();
    let fit = fit_mle(&cumene(), ModelKind::QuantalLinear, BMR).unwrap();
    let (mut p95_err, mut means, mut sds): (f64, Vec<(f64, f64)>, Vec<(f64, f64)>) =
        (0.0, Vec::new(), Vec::new());
    for chain in chains {
        let bmdl = bmd_estimates(chain, 0.5, SCALE).unwrap().bmdl_05.scaled;
        let b = extra_risk_posterior(chain, ModelKind::QuantalLinear, BMR, bmdl).unwrap();
        let f = extra_risk_posterior(chain, ModelKind::QuantalLinear, BMR, fit.wald_bmdl_95).unwrap();
        p95_err = p95_err.max((b.percentile_95 - BMR).abs());
        means.push((b.mean, f.mean));
        sds.push((b.sd, f.sd));
    }
    c.check(p95_err <= P95_TOL, format!("95th percentile at BMDL off BMR by {p95_err:.1e}"));
    let fmt = |v: &[(f64, f64)], k: usize| {
        v.iter()
            .map(|p| format!("{:.4}", if k == 0 { p.0 } else { p.1 }))
            .collect::<Vec<_>>()
            .join(",")
    };
    c.check(
        means.iter().all(|&(b, f)| {
            (b - BAYES_MEAN).abs() <= MEAN_TOL && (f - FREQ_MEAN).abs() <= MEAN_TOL
        }),
        format!("means bayes [{}] freq [{}]", fmt(&means, 0), fmt(&means, 1)),
    );
    c.check(
        sds.iter()
            .all(|&(b, f)| (b - BAYES_SD).abs() <= SD_TOL && (f - FREQ_SD).abs() <= SD_TOL),
        format!("sds bayes [{}] freq [{}]", fmt(&sds, 0), fmt(&sds, 1)),
    );
    c
}

/// Prior-only target for the recovery check.
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

/// One binomial observation whose success probability is `gamma0`.
struct BetaBinomial {
    n: u64,
    y: u64,
    xi: XiPrior,
    gamma0: Gamma0Prior,
}

impl LogTarget for BetaBinomial {
    fn log_prior(&self, xi: f64, gamma0: f64) -> f64 {
        self.xi.log_density(xi) + self.gamma0.log_density(gamma0)
    }

    fn log_likelihood(&self, _: f64, g: f64) -> f64 {
        let (n, y) = (self.n as f64, self.y as f64);
        statrs::function::factorial::ln_binomial(self.n, self.y) + y * g.ln() + (n - y) * (1.0 - g).ln()
    }
}

fn criterion_8() -> Checks {
    let mut c = Checks::default();

    let e = elicited();
    let xi_priors = [
        e.xi_inverse_gamma.clone(),
        e.xi_gamma.clone(),
        XiPrior::inverse_gamma(3.0, 2.0),
        XiPrior::mixture(e.xi_inverse_gamma.clone(), e.xi_gamma.clone(), 0.3),
    ];
    let mut worst: f64 = 0.0;
    for p in &xi_priors {
        let li = log_integral_positive(|x| p.log_density(x), -80.0, 300.0, 400_001);
        worst = worst.max(li.exp_m1().abs());
    }
    for g in [e.gamma0, Gamma0Prior::new(2.0, 5.0).unwrap(), Gamma0Prior::new(3.0, 3.0).unwrap()] {
        let li = log_integral_unit(|x| g.log_density(x), -40.0, 40.0, 200_001);
        worst = worst.max(li.exp_m1().abs());
    }
    c.check(worst <= INTEGRAL_TOL, format!("prior integrals within {worst:.1e}"));

    let mut worst: f64 = 0.0;
    for (q1, q2) in [(0.18, 0.5), (0.05, 0.1), (0.3, 0.9), (1.0, 4.0)] {
        let q = ElicitedQuartiles::new(q1, q2).unwrap();
        for f in [XiFamily::InverseGamma, XiFamily::Gamma] {
            let (a, b) = elicit_xi(&q, f).unwrap().params;
            let p = f.build(a, b);
            worst = worst.max((p.cdf(q1) - 0.25).abs()).max((p.cdf(q2) - 0.5).abs());
        }
    }
    for (q1, q2) in [(0.04, 0.08), (0.1, 0.2), (0.3, 0.5)] {
        let (a, b) = elicit_gamma0(&ElicitedQuartiles::new(q1, q2).unwrap()).unwrap().params;
        let p = Gamma0Prior::new(a, b).unwrap();
        worst = worst.max((p.cdf(q1) - 0.25).abs()).max((p.cdf(q2) - 0.5).abs());
    }
    c.check(worst <= ROUND_TRIP_TOL, format!("elicitation round trips within {worst:.1e}"));

    let target = PriorOnly {
        xi: XiPrior::inverse_gamma(3.0, 2.0),
        gamma0: Gamma0Prior::new(2.0, 5.0).unwrap(),
    };
    let start = StartingPoint { xi0: 1.0, gamma00: 0.3 };
    let chain =
        run_with_restarts_from(&target, start, &SamplerConfig::default(), burn_in_diagnostic).unwrap();
    let mut worst: f64 = 0.0;
    for p in [0.25, 0.5, 0.75] {
        worst = worst
            .max((quantile(&chain.retained_xi(), p) / target.xi.quantile(p) - 1.0).abs())
            .max((quantile(&chain.retained_gamma0(), p) / target.gamma0.quantile(p) - 1.0).abs());
    }
    c.check(
        chain.is_ok() && worst <= RECOVERY_REL,
        format!("prior quartiles recovered within {:.2}%", 100.0 * worst),
    );

    let fit = fit_mle(&cumene(), ModelKind::QuantalLinear, BMR).unwrap();
    let (_, b1) = ql_slope_mle(&cumene_scaled(), (0.08, 2.0));
    let xi_slope = -(1.0 - BMR).ln() / b1;
    let rel = (fit.xi_hat / xi_slope - 1.0).abs();
    c.check(rel <= INVARIANCE_REL, format!("MLE matches slope form within {rel:.1e}"));

    let flat = DoseResponseDataset::new(vec![0.0, 1.0, 2.0], vec![50; 3], vec![10, 10, 10], "u").unwrap();
    let down = DoseResponseDataset::new(vec![0.0, 1.0, 2.0], vec![50; 3], vec![10, 8, 5], "u").unwrap();
    c.check(
        !screen_data(&flat).unwrap().pass
            && !screen_data(&down).unwrap().pass
            && screen_data(cumene().base()).unwrap().pass,
        "screen rejects flat and decreasing data",
    );

    let post = posterior(ModelKind::QuantalLinear);
    let start = starting_point(&post.data, BMR).unwrap();
    let csv = |seed: u64| {
        let cfg = SamplerConfig {
            chain_length: 20_000,
            ..Default::default()
        }
        .with_seed(seed);
        let mut buf = Vec::new();
        run_chain(&post, start, &cfg).unwrap().write_csv(&mut buf).unwrap();
        buf
    };
    c.check(csv(9) == csv(9) && csv(9) != csv(10), "seeded chains are byte-identical");

    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut monotone = true;
    for _ in 0..200 {
        let n = rng.random_range(1..50);
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let qs: Vec<f64> = (0..=100).map(|i| quantile(&v, i as f64 / 100.0)).collect();
        monotone &= qs.windows(2).all(|w| w[0] <= w[1]);
    }
    c.check(monotone, "quantiles nondecreasing in p");

    let target = BetaBinomial {
        n: 40,
        y: 9,
        xi: XiPrior::gamma(4.0, 8.0),
        gamma0: Gamma0Prior::new(2.0, 6.0).unwrap(),
    };
    let start = StartingPoint { xi0: 0.5, gamma00: 0.2 };
    let chain =
        run_with_restarts_from(&target, start, &SamplerConfig::default(), burn_in_diagnostic).unwrap();
    let ln_b = |a: f64, b: f64| statrs::function::beta::ln_beta(a, b);
    let exact = statrs::function::factorial::ln_binomial(40, 9) + ln_b(11.0, 37.0) - ln_b(2.0, 6.0);
    let est = bridge_estimate(chain.retained(), &target, 1).unwrap().log_value;
    c.check(
        (est - exact).abs() <= CONJUGATE_TOL,
        format!("beta-binomial marginal off by {:.4}", (est - exact).abs()),
    );
    c
}

fn main() {
    let t = Instant::now();
    let mut failed = 0;
    report(1, "elicitation", criterion_1(), &mut failed);
    report(2, "frequentist baseline", criterion_2(), &mut failed);
    let post = posterior(ModelKind::QuantalLinear);
    let chains: Vec<ChainResult> = SEEDS
        .iter()
        .map(|&s| run_with_restarts(&post, &SamplerConfig::default().with_seed(s)).unwrap())
        .collect();
    report(3, "bayesian estimates", criterion_3(&chains), &mut failed);
    report(4, "burn-in protocol", criterion_4(), &mut failed);
    report(5, "bayes factor", criterion_5(&chains), &mut failed);
    report(6, "sensitivity", criterion_6(), &mut failed);
    report(7, "extra-risk identities", criterion_7(&chains), &mut failed);
    report(8, "property suites", criterion_8(), &mut failed);
    println!(
        "acceptance: {} of 8 criteria passed in {:.1} s",
        8 - failed,
        t.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
