//! Series estimators for the limiting constants of the six regimes.
//!
//! Every series exposes its per-term trace; truncation follows one rule: stop
//! at the first k whose 97.5% upper confidence bound drops below 1e-3 of the
//! running sum, hard-capped at k_max, with the neglected tail bounded
//! geometrically from the last four terms.

use super::{batch_mean, combine_log_args, Estimate};
use crate::error::{Error, Result};
use crate::renewal::{renewal_estimate, Flavor, RenewalTable};
use crate::rngs::Salt;
use crate::steps::StepModel;
use crate::tilt::{find_lambda, Boundary, FSpec};
use crate::walk::PathAccumulator;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// Relative size at which a series term is declared negligible.
const TERM_STOP_REL: f64 = 1e-3;

/// Sliding window length of the adaptive I-functional stopping rule.
const WINDOW: usize = 256;

#[derive(Clone, Debug)]
pub struct SeriesEstimate {
    /// Sum of the computed terms.
    pub estimate: Estimate,
    /// Per-term trace (k = 0 or 1 upward, depending on the series).
    pub terms: Vec<Estimate>,
    /// Geometric bound on the neglected tail, extrapolated from the last
    /// four terms; reported, not added.
    pub tail_bound: f64,
    /// Index of the last computed term.
    pub stopped_at: usize,
    /// Fraction of auxiliary I-functional draws that hit their horizon cap.
    pub truncation_rate: f64,
}

/// Common knobs of the series engines.
#[derive(Clone, Copy, Debug)]
pub struct SeriesParams {
    pub k_max: usize,
    pub nsim: usize,
    /// Adaptive stopping tolerance of the auxiliary I-functionals.
    pub eps: f64,
    /// Horizon cap of the auxiliary I-functionals.
    pub horizon_cap: usize,
}

impl Default for SeriesParams {
    fn default() -> Self {
        SeriesParams { k_max: 64, nsim: 40_000, eps: 1e-6, horizon_cap: 1 << 15 }
    }
}

fn term_base(k: usize) -> u64 {
    (k as u64) << 20
}

struct SeriesAccumulator {
    terms: Vec<Estimate>,
    running_sum: f64,
    var: f64,
    n: u64,
}

impl SeriesAccumulator {
    fn new() -> Self {
        SeriesAccumulator { terms: Vec::new(), running_sum: 0.0, var: 0.0, n: 0 }
    }

    /// Returns true when the stopping rule fires.
    fn push(&mut self, term: Estimate) -> bool {
        self.running_sum += term.value;
        self.var += term.stderr * term.stderr;
        self.n += term.n_samples;
        let upper = term.value + 1.96 * term.stderr;
        let fired = !self.terms.is_empty() && upper < TERM_STOP_REL * self.running_sum;
        self.terms.push(term);
        fired
    }

    fn tail_bound(&self) -> f64 {
        let l = self.terms.len();
        if l < 4 {
            return self.terms.last().map_or(0.0, |t| t.value);
        }
        let t0 = self.terms[l - 4].value;
        let t3 = self.terms[l - 1].value;
        if t0 <= 0.0 || t3 <= 0.0 {
            return t3.max(0.0);
        }
        let r = (t3 / t0).powf(1.0 / 3.0).clamp(0.0, 0.95);
        t3 * r / (1.0 - r)
    }

    fn check_decay(&self, k_max: usize) -> Result<()> {
        let l = self.terms.len();
        if l < 8 {
            return Ok(());
        }
        let head: f64 = self.terms[..4].iter().map(|t| t.value).sum();
        let tail: f64 = self.terms[l - 4..].iter().map(|t| t.value).sum();
        if tail >= head && head > 0.0 {
            return Err(Error::NonDecayingSeries { k_max });
        }
        Ok(())
    }

    fn into_series(self, method: &'static str, truncation_rate: f64) -> SeriesEstimate {
        let stopped_at = self.terms.len().saturating_sub(1);
        let tail_bound = self.tail_bound();
        SeriesEstimate {
            estimate: Estimate {
                value: self.running_sum,
                stderr: self.var.sqrt(),
                n_samples: self.n,
                method,
                log_domain: false,
            },
            terms: self.terms,
            tail_bound,
            stopped_at,
            truncation_rate,
        }
    }
}

/// Inline adaptive accumulation of the conditioned functional
/// I-up = sum exp(-S-up_k): one h-transform trajectory per call.
fn draw_i_up<R: Rng + ?Sized>(
    model: &StepModel,
    v_table: &RenewalTable,
    eps: f64,
    cap: usize,
    rng: &mut R,
    truncations: &AtomicU64,
) -> Result<f64> {
    let mut x = 0.0f64;
    let mut i = 0.0f64;
    let mut ring = [0.0f64; WINDOW];
    for k in 0..cap {
        x = crate::conditioned::step_up(x, model, v_table, rng)?;
        i += (-x).exp();
        if k >= WINDOW && i - ring[k % WINDOW] < eps * i {
            return Ok(i);
        }
        ring[k % WINDOW] = i;
    }
    truncations.fetch_add(1, Ordering::Relaxed);
    Ok(i)
}

/// Adaptive accumulation of the dual functional I-hat = sum exp(+S_k) under
/// a negative-drift walk.
fn draw_i_hat<R: Rng + ?Sized>(
    model: &StepModel,
    eps: f64,
    cap: usize,
    rng: &mut R,
    truncations: &AtomicU64,
) -> f64 {
    let mut s = 0.0f64;
    let mut i = 0.0f64;
    let mut ring = [0.0f64; WINDOW];
    for k in 0..cap {
        s += model.sample(rng);
        i += s.exp();
        if k >= WINDOW && i - ring[k % WINDOW] < eps * i {
            return i;
        }
        ring[k % WINDOW] = i;
    }
    truncations.fetch_add(1, Ordering::Relaxed);
    i
}

/// C1 series of the oscillating Lambda = 0 regime:
/// sum_k E[F(I_k + e^{-S_k} I-up_infty); sigma_k^- = k], with S-up started
/// at 0 and V(0) = 1.
pub fn estimate_c1(
    model: &StepModel,
    f: &FSpec,
    v_table: &RenewalTable,
    params: SeriesParams,
    seed: u64,
) -> Result<SeriesEstimate> {
    estimate_c1_engine(model, f, v_table, params, seed, Salt::SeriesC1, "c1_series")
}

fn estimate_c1_engine(
    model: &StepModel,
    f: &FSpec,
    v_table: &RenewalTable,
    params: SeriesParams,
    seed: u64,
    salt: Salt,
    method: &'static str,
) -> Result<SeriesEstimate> {
    let truncations = AtomicU64::new(0);
    let step_error: Mutex<Option<Error>> = Mutex::new(None);
    let mut draws = 0u64;
    let mut acc = SeriesAccumulator::new();
    for k in 0..=params.k_max {
        let sample = |rng: &mut ChaCha8Rng| -> f64 {
            let mut path = PathAccumulator::new(0.0, None);
            for _ in 0..k {
                path.push(model.sample(rng));
            }
            if k > 0 && !path.min_first_attained_now() {
                return 0.0;
            }
            match draw_i_up(model, v_table, params.eps, params.horizon_cap, rng, &truncations) {
                Ok(i_up) => {
                    let arg_log = combine_log_args(path.i_log(), -path.s_current() + i_up.ln());
                    f.eval_log_arg(arg_log)
                }
                Err(e) => {
                    step_error.lock().unwrap().get_or_insert(e);
                    0.0
                }
            }
        };
        let (mean, se, ns) = batch_mean(seed, salt, term_base(k), params.nsim, sample)?;
        if let Some(e) = step_error.lock().unwrap().take() {
            return Err(e);
        }
        draws += ns;
        let term = Estimate { value: mean, stderr: se, n_samples: ns, method, log_domain: false };
        if acc.push(term) {
            break;
        }
    }
    if acc.terms.len() == params.k_max + 1 {
        acc.check_decay(params.k_max)?;
    }
    let rate = truncations.load(Ordering::Relaxed) as f64 / draws.max(1) as f64;
    Ok(acc.into_series(method, rate))
}

/// C3 series of the oscillating Lambda = theta_F regime, computed by running
/// the C1 engine on the negated tilted model with the power functional
/// (1 + x)^{-Lambda}:
/// C3 = sum_k E-tilt[(1 + I-hat_k + e^{-S-hat_k} I-hat-up_infty)^{-Lambda};
/// sigma-hat_k^- = k].
pub fn estimate_c3(
    model: &StepModel,
    f: &FSpec,
    params: SeriesParams,
    seed: u64,
) -> Result<SeriesEstimate> {
    let tilt = find_lambda(model, f.theta, 1e-10)?;
    if tilt.boundary != Boundary::AtThetaF || tilt.tilted_mean.abs() > 1e-8 {
        return Err(Error::Precondition(format!(
            "C3 needs Lambda = theta_F with oscillating tilted walk (boundary {:?}, tilted mean {})",
            tilt.boundary, tilt.tilted_mean
        )));
    }
    let lam = tilt.lambda_star;
    let dual = tilt.tilted_model.negate()?;
    let power = FSpec { k0: 1.0, theta: lam, c0: 1.0 };
    let v_table = dual_v_table(&dual, seed)?;
    estimate_c1_engine(&dual, &power, &v_table, params, seed, Salt::SeriesC3, "c3_series")
}

fn dual_v_table(dual: &StepModel, seed: u64) -> Result<RenewalTable> {
    if dual.is_skip_free_down() {
        let (spacing, _, _) = dual.lattice_info().unwrap();
        Ok(RenewalTable::exact_skip_free(spacing, 96.0 * spacing, 1))
    } else {
        renewal_estimate(dual, Flavor::Descending, 64.0, 256, 4_000, 1 << 20, seed ^ 0x9e37)
    }
}

/// Monte Carlo estimate with the fraction of adaptive draws that hit their
/// horizon cap.
#[derive(Clone, Debug)]
pub struct AdaptiveEstimate {
    pub estimate: Estimate,
    pub truncation_rate: f64,
}

/// The Lambda = theta_F drift constant K0 * E-tilt[(1 + I-hat_infty)^{-theta_F}]:
/// I-hat is accumulated under the tilted model to adaptive convergence.
pub fn estimate_drift_constant(
    model: &StepModel,
    f: &FSpec,
    horizon: usize,
    nsim: usize,
    eps: f64,
    seed: u64,
) -> Result<AdaptiveEstimate> {
    let tilt = find_lambda(model, f.theta, 1e-10)?;
    if tilt.boundary != Boundary::AtThetaF || tilt.tilted_mean >= 0.0 {
        return Err(Error::Precondition(format!(
            "drift constant needs Lambda = theta_F with negative tilted drift (boundary {:?}, mean {})",
            tilt.boundary, tilt.tilted_mean
        )));
    }
    let tilted = tilt.tilted_model.clone();
    let truncations = AtomicU64::new(0);
    let (mean, se, ns) = batch_mean(seed, Salt::DriftConstant, 0, nsim, |rng| {
        let i_hat = draw_i_hat(&tilted, eps, horizon, rng, &truncations);
        f.k0 * (1.0 + i_hat).powf(-f.theta)
    })?;
    Ok(AdaptiveEstimate {
        estimate: Estimate {
            value: mean,
            stderr: se,
            n_samples: ns,
            method: "drift_constant",
            log_domain: false,
        },
        truncation_rate: truncations.load(Ordering::Relaxed) as f64 / ns.max(1) as f64,
    })
}

/// One horizon rung of the C4 estimator.
#[derive(Clone, Debug)]
pub struct C4Horizon {
    pub n: usize,
    pub terms: Vec<Estimate>,
    pub sum: Estimate,
}

#[derive(Clone, Debug)]
pub struct C4Estimate {
    pub per_horizon: Vec<C4Horizon>,
    /// Sum over k at the final horizon: the C4 estimate.
    pub final_estimate: Estimate,
    /// Monotone direction observed on the k = 1 trace: +1 non-decreasing,
    /// -1 non-increasing, 0 flat within noise.
    pub direction: i8,
}

/// Heavy-tail drift constant C4: for each k <= k_max and horizon n, average
/// F(I_{k-1} + e^{-S_{k-1} - X} I-tilde_n) with X drawn from the conditional
/// tail {X >= a n} and an independent plain path I-tilde_n.
///
/// The per-horizon trace is reported; each k-trace must be monotone in the
/// direction observed at k = 1 within 3 standard errors, otherwise an error
/// is raised.
pub fn estimate_c4(
    model: &StepModel,
    f: &FSpec,
    k_max: usize,
    n_ladder: &[usize],
    nsim: usize,
    seed: u64,
) -> Result<C4Estimate> {
    let a = -model.mean();
    if !(a > 0.0) {
        return Err(Error::Precondition("C4 needs negative drift (a > 0)".into()));
    }
    if !model.is_heavy_tailed() {
        return Err(Error::Precondition("C4 needs a regularly varying right tail".into()));
    }
    if n_ladder.is_empty() || k_max == 0 {
        return Err(Error::Precondition("C4 needs a horizon ladder and k_max >= 1".into()));
    }
    let mut per_horizon = Vec::with_capacity(n_ladder.len());
    for (ni, &n) in n_ladder.iter().enumerate() {
        let threshold = a * n as f64;
        if !(model.tail_prob(threshold) > 0.0) {
            return Err(Error::ZeroProbabilityTail { threshold });
        }
        let mut terms = Vec::with_capacity(k_max);
        let mut sum = 0.0;
        let mut var = 0.0;
        let mut total = 0u64;
        for k in 1..=k_max {
            let base = ((ni as u64) << 28) | term_base(k);
            let (mean, se, ns) = batch_mean(seed, Salt::SeriesC4, base, nsim, |rng| {
                let mut prefix = PathAccumulator::new(0.0, None);
                for _ in 0..k - 1 {
                    prefix.push(model.sample(rng));
                }
                let x = model
                    .sample_conditional_tail(threshold, rng)
                    .expect("tail checked positive");
                let mut tilde = PathAccumulator::new(0.0, None);
                for _ in 0..n {
                    tilde.push(model.sample(rng));
                }
                let b = -prefix.s_current() - x + tilde.i_log();
                f.eval_log_arg(combine_log_args(prefix.i_log(), b))
            })?;
            sum += mean;
            var += se * se;
            total += ns;
            terms.push(Estimate {
                value: mean,
                stderr: se,
                n_samples: ns,
                method: "c4_series",
                log_domain: false,
            });
        }
        per_horizon.push(C4Horizon {
            n,
            terms,
            sum: Estimate {
                value: sum,
                stderr: var.sqrt(),
                n_samples: total,
                method: "c4_series",
                log_domain: false,
            },
        });
    }

    let direction = trace_direction(&per_horizon, 0);
    if direction != 0 {
        for k_idx in 0..k_max {
            let first = &per_horizon.first().unwrap().terms[k_idx];
            let last = &per_horizon.last().unwrap().terms[k_idx];
            let drift = (last.value - first.value) * direction as f64;
            let se = (first.stderr * first.stderr + last.stderr * last.stderr).sqrt();
            if drift < -3.0 * se {
                return Err(Error::NonMonotoneTrace(format!(
                    "k = {}: trace moves {:+.3e} against the k=1 direction ({} beyond 3 se {:.3e})",
                    k_idx + 1,
                    last.value - first.value,
                    direction,
                    se
                )));
            }
        }
    }
    let final_estimate = per_horizon.last().unwrap().sum.clone();
    Ok(C4Estimate { per_horizon, final_estimate, direction })
}

fn trace_direction(per_horizon: &[C4Horizon], k_idx: usize) -> i8 {
    let first = &per_horizon.first().unwrap().terms[k_idx];
    let last = &per_horizon.last().unwrap().terms[k_idx];
    let d = last.value - first.value;
    let se = (first.stderr * first.stderr + last.stderr * last.stderr).sqrt();
    if d > 3.0 * se {
        1
    } else if d < -3.0 * se {
        -1
    } else {
        0
    }
}

/// Quadrature and series knobs of the C5 estimator.
#[derive(Clone, Copy, Debug)]
pub struct C5Params {
    pub k_max: usize,
    pub nsim: usize,
    /// Trapezoid nodes over [-z_max, z_max].
    pub z_points: usize,
    /// Relative tail mass allowed outside [-z_max, z_max].
    pub z_tail_rel: f64,
    /// Explicit half-width override; None derives it from the envelope bound.
    pub z_max: Option<f64>,
    pub eps: f64,
    pub horizon_cap: usize,
}

impl Default for C5Params {
    fn default() -> Self {
        C5Params {
            k_max: 8,
            nsim: 20_000,
            z_points: 129,
            z_tail_rel: 1e-3,
            z_max: None,
            eps: 1e-6,
            horizon_cap: 1 << 15,
        }
    }
}

/// C5 series for the interior-tilt heavy-tail drift regime, evaluated on an
/// explicitly provided tilted model and tilt parameter:
/// C5(k) = int dz E-tilt[e^{-Lambda S_k - Lambda z}
/// F(I_k + e^{-S_k - z} (1 + I-hat-tilde_infty))].
///
/// The outer integral is deterministic trapezoid quadrature over
/// [-z_max, z_max]; z_max is chosen so the exponential envelopes
/// e^{-Lambda z} (right) and e^{(theta - Lambda) z} (left) contribute less
/// than `z_tail_rel` of their total mass outside the window.
pub fn estimate_c5_raw(
    tilted_model: &StepModel,
    lambda: f64,
    f: &FSpec,
    params: C5Params,
    seed: u64,
) -> Result<SeriesEstimate> {
    if !(lambda > 0.0) || !(f.theta > lambda) {
        return Err(Error::Precondition(format!(
            "C5 needs 0 < Lambda < theta_F, got Lambda = {lambda}, theta_F = {}",
            f.theta
        )));
    }
    if !(tilted_model.mean() < 0.0) {
        return Err(Error::Precondition("C5 needs a negative-drift tilted model".into()));
    }
    let right = lambda;
    let left = f.theta - lambda;
    let total = 1.0 / right + 1.0 / left;
    let eps_rel = params.z_tail_rel;
    let z_max = params.z_max.unwrap_or_else(|| {
        let zr = (1.0 / (eps_rel * right * total)).ln() / right;
        let zl = (1.0 / (eps_rel * left * total)).ln() / left;
        zr.max(zl).max(1.0)
    });
    let m = params.z_points.max(17);
    let h = 2.0 * z_max / (m - 1) as f64;
    let z_nodes: Vec<f64> = (0..m).map(|j| -z_max + h * j as f64).collect();

    let truncations = AtomicU64::new(0);
    let mut draws = 0u64;
    let mut acc = SeriesAccumulator::new();
    for k in 1..=params.k_max {
        let (mean, se, ns) = batch_mean(seed, Salt::SeriesC5, term_base(k), params.nsim, |rng| {
            let mut path = PathAccumulator::new(0.0, None);
            for _ in 0..k {
                path.push(tilted_model.sample(rng));
            }
            let i_hat =
                draw_i_hat(tilted_model, params.eps, params.horizon_cap, rng, &truncations);
            let s_k = path.s_current();
            let log_one_plus = (1.0 + i_hat).ln();
            let mut integral = 0.0;
            for (j, &z) in z_nodes.iter().enumerate() {
                let w = if j == 0 || j == m - 1 { 0.5 * h } else { h };
                let arg_log = combine_log_args(path.i_log(), -s_k - z + log_one_plus);
                let v = (-lambda * (s_k + z) + f.log_eval_log_arg(arg_log)).exp();
                integral += w * v;
            }
            integral
        })?;
        draws += ns;
        let term =
            Estimate { value: mean, stderr: se, n_samples: ns, method: "c5_series", log_domain: false };
        if acc.push(term) {
            break;
        }
    }
    if acc.terms.len() == params.k_max {
        acc.check_decay(params.k_max)?;
    }
    let rate = truncations.load(Ordering::Relaxed) as f64 / draws.max(1) as f64;
    Ok(acc.into_series("c5_series", rate))
}

/// Regime-gated C5 entry point: classifies (model, F) and delegates to
/// [`estimate_c5_raw`] with the computed tilt. None of the declared step
/// families can reach the interior-domain-boundary regime (their Laplace
/// domains are all of R or {0}), so this surface exists for forward
/// compatibility and always validates the regime first.
pub fn estimate_c5(
    model: &StepModel,
    f: &FSpec,
    params: C5Params,
    seed: u64,
) -> Result<SeriesEstimate> {
    let (report, tag) = crate::tilt::regime_classify(model, f)?;
    if tag != crate::tilt::RegimeTag::DriftInteriorHeavyTail {
        return Err(Error::Precondition(format!(
            "C5 applies to the interior heavy-tail drift regime, classified {tag}"
        )));
    }
    estimate_c5_raw(&report.tilted_model, report.lambda_star, f, params, seed)
}
