//! Built-in oracle suites: exactness checks of the DP and enumeration oracles
//! against closed forms and against each other. Reachable from the CLI
//! `selftest` subcommand and reused by the acceptance tests.

use crate::numeric::LogSumExp;
use crate::renewal::RenewalTable;
use crate::rngs::{stream_rng, Salt};
use crate::steps::StepModel;
use crate::tilt::esscher;
use crate::walk::{
    enumerate_paths, enumerate_paths_with_steps, exact_lattice_dp, simulate_tau_minus, Floor,
    TauOutcome,
};

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn pass(name: &'static str, detail: String) -> Self {
        SuiteResult { name, passed: true, detail }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        SuiteResult { name, passed: false, detail }
    }
}

fn binom(n: u64, k: u64) -> f64 {
    let mut v = 1.0f64;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// P(tau_0^- > n) for the symmetric +-1 walk: 2^{-n} C(n, floor(n/2)).
pub fn ballot_tau_survival(n: usize) -> f64 {
    binom(n as u64, (n / 2) as u64) * 0.5f64.powi(n as i32)
}

/// Floored DP equals the ballot closed form for n <= 20, to 1e-12.
pub fn suite_dp_ballot() -> SuiteResult {
    let m = StepModel::symmetric_unit_lattice();
    let t = match exact_lattice_dp(&m, 20, Some(Floor::KillBelowZero)) {
        Ok(t) => t,
        Err(e) => return SuiteResult::fail("dp_ballot", e.to_string()),
    };
    let mut worst = 0.0f64;
    for n in 0..=20 {
        worst = worst.max((t.row_sum(n) - ballot_tau_survival(n)).abs());
    }
    if worst <= 1e-12 {
        SuiteResult::pass("dp_ballot", format!("max |dp - ballot| = {worst:.2e}"))
    } else {
        SuiteResult::fail("dp_ballot", format!("max |dp - ballot| = {worst:.2e} > 1e-12"))
    }
}

/// Exact finite-path change of measure by enumeration:
/// E[h(S_n)] = L_X(l0)^n E-tilt[e^{-l0 S_n} h(S_n)] for h in {1, s, e^{-s}}.
pub fn suite_change_of_measure() -> SuiteResult {
    let m = StepModel::symmetric_unit_lattice();
    let mut worst = 0.0f64;
    for &l0 in &[2f64.ln(), 1.0] {
        let tilted = match esscher(&m, l0) {
            Ok(t) => t,
            Err(e) => return SuiteResult::fail("change_of_measure", e.to_string()),
        };
        let rho = m.laplace(l0);
        for n in [1usize, 2, 5, 8, 10] {
            let hs: [fn(f64) -> f64; 3] = [|_| 1.0, |s| s, |s| (-s).exp()];
            for h in hs {
                let lhs = enumerate_paths(&m, n, |p| h(p[n - 1])).unwrap();
                let rhs = enumerate_paths(&tilted, n, |p| (-l0 * p[n - 1]).exp() * h(p[n - 1]))
                    .unwrap()
                    * rho.powi(n as i32);
                worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
            }
        }
    }
    if worst <= 1e-10 {
        SuiteResult::pass("change_of_measure", format!("max deviation = {worst:.2e}"))
    } else {
        SuiteResult::fail("change_of_measure", format!("max deviation = {worst:.2e} > 1e-10"))
    }
}

/// Duality by enumeration on the tilted walk:
/// E[e^{-l S_n} I_n^{-l}] = E[(1 + I-hat_{n-1})^{-l}] exactly.
pub fn suite_duality() -> SuiteResult {
    let m = StepModel::symmetric_unit_lattice();
    let mut worst = 0.0f64;
    for &lam in &[2f64.ln(), 1.0] {
        let tilted = match esscher(&m, lam) {
            Ok(t) => t,
            Err(e) => return SuiteResult::fail("duality", e.to_string()),
        };
        for n in [1usize, 2, 3, 5, 8, 10] {
            let lhs = enumerate_paths(&tilted, n, |p| {
                let mut i = LogSumExp::new();
                for &s in p {
                    i.push(-s);
                }
                (-lam * p[n - 1] - lam * i.log_value()).exp()
            })
            .unwrap();
            let rhs = enumerate_paths(&tilted, n, |p| {
                let mut i = LogSumExp::new();
                i.push(0.0);
                for &s in p.iter().take(n - 1) {
                    i.push(s);
                }
                (-lam * i.log_value()).exp()
            })
            .unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    if worst <= 1e-10 {
        SuiteResult::pass("duality", format!("max |lhs - rhs| = {worst:.2e}"))
    } else {
        SuiteResult::fail("duality", format!("max |lhs - rhs| = {worst:.2e} > 1e-10"))
    }
}

/// Ladder census to depth 12: a skip-free-down walk only ever ladders by one
/// lattice unit, and the exact skip-free V is harmonic for the killed walk.
pub fn suite_ladder_census() -> SuiteResult {
    let m = StepModel::lattice(1.0, vec![-1, 1], vec![0.4, 0.6]).unwrap();
    // probability that the first descending ladder height within 12 steps
    // differs from the spacing: must be exactly zero
    let bad = enumerate_paths(&m, 12, |p| {
        for &s in p {
            if s < 0.0 {
                return if (-s - 1.0).abs() > 1e-12 { 1.0 } else { 0.0 };
            }
        }
        0.0
    })
    .unwrap();
    if bad != 0.0 {
        return SuiteResult::fail("ladder_census", format!("off-spacing ladder mass {bad:.2e}"));
    }
    // harmonicity of the exact staircase V for the symmetric walk
    let sym = StepModel::symmetric_unit_lattice();
    let table = RenewalTable::exact_skip_free(1.0, 80.0, 1);
    let (_, offsets, probs) = sym.lattice_info().unwrap();
    let mut worst = 0.0f64;
    for x in 0..20 {
        let xf = x as f64;
        let mut lhs = 0.0;
        for (&o, &p) in offsets.iter().zip(probs) {
            let y = xf + o as f64;
            if y >= 0.0 {
                lhs += p * table.value_at(y);
            }
        }
        worst = worst.max((lhs - table.value_at(xf)).abs());
    }
    if worst <= 1e-10 {
        SuiteResult::pass("ladder_census", format!("harmonicity deviation {worst:.2e}"))
    } else {
        SuiteResult::fail("ladder_census", format!("harmonicity deviation {worst:.2e} > 1e-10"))
    }
}

/// First-minimum tie-breaking: enumeration bookkeeping must return the first
/// attainment index everywhere to depth 10.
pub fn suite_first_min_ties() -> SuiteResult {
    let m = StepModel::lattice(1.0, vec![-1, 0, 1], vec![0.3, 0.2, 0.5]).unwrap();
    let mismatches = enumerate_paths_with_steps(&m, 7, |steps, path| {
        let mut acc = crate::walk::PathAccumulator::new(0.0, None);
        for &x in steps {
            acc.push(x);
        }
        let mut min = 0.0;
        let mut arg = 0usize;
        for (i, &s) in path.iter().enumerate() {
            if s < min {
                min = s;
                arg = i + 1;
            }
        }
        if acc.first_min_index() == arg {
            0.0
        } else {
            1.0
        }
    })
    .unwrap();
    if mismatches == 0.0 {
        SuiteResult::pass("first_min_ties", "first-attainment bookkeeping exact".into())
    } else {
        SuiteResult::fail("first_min_ties", format!("mismatch mass {mismatches:.2e}"))
    }
}

/// Monte Carlo passage-time tails agree with the DP oracle within 3 standard
/// errors at n in {8, 16, 32}.
pub fn suite_tau_mc_vs_dp(seed: u64) -> SuiteResult {
    let m = StepModel::symmetric_unit_lattice();
    let nsim = 200_000usize;
    let mut detail = String::new();
    for &n in &[8usize, 16, 32] {
        let exact = ballot_tau_survival(n);
        let mut rng = stream_rng(seed, Salt::TauTail, (n as u64) << 32);
        let mut hits = 0usize;
        for _ in 0..nsim {
            if simulate_tau_minus(&m, 0.0, n, &mut rng) == TauOutcome::Censored {
                hits += 1;
            }
        }
        let p = hits as f64 / nsim as f64;
        let se = (exact * (1.0 - exact) / nsim as f64).sqrt();
        detail.push_str(&format!("n={n}: mc {p:.5} exact {exact:.5}; "));
        if (p - exact).abs() > 3.0 * se {
            return SuiteResult::fail("tau_mc_vs_dp", detail);
        }
    }
    SuiteResult::pass("tau_mc_vs_dp", detail)
}

/// Run every oracle suite.
pub fn run_all(seed: u64) -> Vec<SuiteResult> {
    vec![
        suite_dp_ballot(),
        suite_change_of_measure(),
        suite_duality(),
        suite_ladder_census(),
        suite_first_min_ties(),
        suite_tau_mc_vs_dp(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for s in run_all(20_260_810) {
            assert!(s.passed, "{}: {}", s.name, s.detail);
        }
    }
}
