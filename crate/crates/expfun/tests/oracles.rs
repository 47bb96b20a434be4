//! Oracle cross-checks: estimators against exact enumeration / DP values, and
//! the renewal identity for drifting walks.

use expfun::estimators::{estimate_ef_plain, estimate_ef_tilted, estimate_tau_tail};
use expfun::numeric::LogSumExp;
use expfun::renewal::{renewal_estimate, Flavor};
use expfun::rngs::{stream_rng, Salt};
use expfun::selftest;
use expfun::steps::StepModel;
use expfun::tilt::FSpec;
use expfun::walk::{enumerate_paths, sign_stats, simulate_tau_minus, tau_minus_survival, TauOutcome};

fn enum_ef(model: &StepModel, f: &FSpec, n: usize) -> f64 {
    enumerate_paths(model, n, |path| {
        let mut i = LogSumExp::new();
        for &s in path {
            i.push(-s);
        }
        f.eval_log_arg(i.log_value())
    })
    .unwrap()
}

#[test]
fn plain_estimator_vs_enumeration_n8() {
    let m = StepModel::symmetric_unit_lattice();
    let f = FSpec::reciprocal(1.0);
    let exact = enum_ef(&m, &f, 8);
    let est = estimate_ef_plain(&m, &f, 8, 400_000, 2024).unwrap();
    assert!(
        (est.value - exact).abs() < 3.0 * est.stderr,
        "{} vs exact {exact} (3 se = {})",
        est.value,
        3.0 * est.stderr
    );
}

#[test]
fn tilted_estimator_vs_enumeration_n8() {
    // a walk with an interior tilt so the tilted path is exercised
    let m = StepModel::lattice(1.0, vec![-1, 1], vec![0.7, 0.3]).unwrap();
    let f = FSpec::reciprocal(2.0);
    let exact = enum_ef(&m, &f, 8);
    let est = estimate_ef_tilted(&m, &f, 8, 400_000, 2025).unwrap();
    assert!(!est.log_domain);
    assert!(
        (est.value - exact).abs() < 3.0 * est.stderr,
        "{} vs exact {exact} (3 se = {})",
        est.value,
        3.0 * est.stderr
    );
}

#[test]
fn plain_and_tilted_agree_on_same_estimand() {
    let m = StepModel::lattice(1.0, vec![-1, 1], vec![0.7, 0.3]).unwrap();
    let f = FSpec::reciprocal(2.0);
    for n in [6usize, 14, 20] {
        let p = estimate_ef_plain(&m, &f, n, 300_000, 31).unwrap();
        let t = estimate_ef_tilted(&m, &f, n, 300_000, 31).unwrap();
        let se = (p.stderr.powi(2) + t.stderr.powi(2)).sqrt();
        assert!(
            (p.value - t.value).abs() < 3.0 * se,
            "n={n}: plain {} vs tilted {}",
            p.value,
            t.value
        );
    }
}

#[test]
fn enumeration_vs_plain_mc_f_of_i2() {
    // frozen reference case: n = 2, F = (1+x)^{-1}, symmetric walk
    let m = StepModel::symmetric_unit_lattice();
    let f = FSpec::reciprocal(1.0);
    let exact = enum_ef(&m, &f, 2);
    let mut rng = stream_rng(555, Salt::Scratch, 0);
    let n = 10_000_000usize;
    let mut acc = 0.0f64;
    let mut sq = 0.0f64;
    for _ in 0..n {
        let mut s = 0.0;
        let mut i = 0.0;
        for _ in 0..2 {
            s += m.sample(&mut rng);
            i += (-s).exp();
        }
        let v = f.eval(i);
        acc += v;
        sq += v * v;
    }
    let mean = acc / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact}");
}

#[test]
fn oracle_suites_all_green() {
    for s in selftest::run_all(1) {
        assert!(s.passed, "{}: {}", s.name, s.detail);
    }
}

#[test]
fn tau_mc_matches_dp_at_three_horizons() {
    let m = StepModel::symmetric_unit_lattice();
    let surv = tau_minus_survival(&m, 32, 0).unwrap();
    for &n in &[8usize, 16, 32] {
        let est = estimate_tau_tail(&m, n, 300_000, 99).unwrap();
        assert!(
            (est.value - surv[n]).abs() < 3.0 * est.stderr,
            "n={n}: {} vs {}",
            est.value,
            surv[n]
        );
    }
}

#[test]
fn renewal_mean_formula_identity_negative_drift() {
    // V(x) = E_x[tau_0^-] / E[tau_0^-] for a drifting-to -inf walk
    let m = StepModel::two_point(1.0, -1.5, 0.45).unwrap();
    let table = renewal_estimate(&m, Flavor::Descending, 6.0, 64, 30_000, 1 << 16, 404).unwrap();
    let mean_tau = |x: f64, seed: u64| {
        let mut rng = stream_rng(seed, Salt::Scratch, 7);
        let nsim = 120_000;
        let mut acc = 0.0f64;
        let mut sq = 0.0f64;
        for _ in 0..nsim {
            let t = match simulate_tau_minus(&m, x, 1 << 20, &mut rng) {
                TauOutcome::Hit(k) => k as f64,
                TauOutcome::Censored => panic!("drifting walk censored"),
            };
            acc += t;
            sq += t * t;
        }
        let mean = acc / nsim as f64;
        let se = ((sq / nsim as f64 - mean * mean) / nsim as f64).sqrt();
        (mean, se)
    };
    let (e0, se0) = mean_tau(0.0, 11);
    for (i, &x) in table.grid.iter().enumerate().step_by(8) {
        let (ex, sex) = mean_tau(x, 100 + i as u64);
        let ratio = ex / e0;
        // delta-method error of the ratio plus the table error
        let ratio_se = ratio * ((sex / ex).powi(2) + (se0 / e0).powi(2)).sqrt();
        let tol = 3.0 * (ratio_se + table.stderr[i]).max(1e-4);
        assert!(
            (table.values[i] - ratio).abs() < tol,
            "x={x}: V {} vs ratio {ratio} (tol {tol})",
            table.values[i]
        );
    }
}

#[test]
fn slowly_varying_doubling_ratio_near_one() {
    // l(2x)/l(x) -> 1: deviation below 2% at x = 2^12 for the symmetric walk
    let m = StepModel::symmetric_unit_lattice();
    let stats = sign_stats(&m, 16_384).unwrap();
    let ge: Vec<f64> = stats.iter().map(|s| s.p_ge0).collect();
    let gt: Vec<f64> = stats.iter().map(|s| s.p_gt0).collect();
    let x = 4096.0;
    let l1 = |x: f64| expfun::asymptote::slowly_varying_l1(&ge, 0.5, x).unwrap().value;
    let l1h = |x: f64| expfun::asymptote::slowly_varying_l1_hat(&gt, 0.5, x).unwrap().value;
    assert!((l1(2.0 * x) / l1(x) - 1.0).abs() < 0.02);
    assert!((l1h(2.0 * x) / l1h(x) - 1.0).abs() < 0.02);
}

#[test]
fn osc_log_rate_matches_dp_up_to_constant() {
    // predicted n^{rho-1} l1(n) for the symmetric walk tracks the exact
    // log P(tau_0^- > n) within an additive constant of range < 0.1
    let m = StepModel::symmetric_unit_lattice();
    let k_max = 8192usize;
    let stats = sign_stats(&m, k_max).unwrap();
    let probs_ge0: Vec<f64> = stats.iter().map(|s| s.p_ge0).collect();
    let surv = tau_minus_survival(&m, 4096, 0).unwrap();
    let mut diffs = Vec::new();
    for j in 6..=12 {
        let n = 1usize << j;
        let l1 = expfun::asymptote::slowly_varying_l1(&probs_ge0, 0.5, n as f64).unwrap();
        let predicted = (0.5 - 1.0) * (n as f64).ln() + l1.value.ln();
        diffs.push(surv[n].ln() - predicted);
    }
    let range = diffs.iter().cloned().fold(f64::MIN, f64::max)
        - diffs.iter().cloned().fold(f64::MAX, f64::min);
    assert!(range < 0.1, "log-difference range {range}, diffs {diffs:?}");
}
