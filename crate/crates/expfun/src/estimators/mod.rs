//! Monte Carlo engines for the decaying expectations: plain sampling,
//! Esscher-tilted sampling through the change-of-measure identity
//! E[F(I_n)] = rho^n E-tilt[exp(-Lambda S_n) F(I_n)], and big-jump importance
//! sampling for heavy-tailed drift regimes.
//!
//! Everything is batch-parallel with counter-based streams: batch b of stage
//! `salt` draws from `stream_rng(seed, salt, base + b)` and batches are
//! reduced in index order, so results do not depend on the worker count.

mod constants;

pub use constants::{
    estimate_c1, estimate_c3, estimate_c4, estimate_c5, estimate_c5_raw, estimate_drift_constant,
    AdaptiveEstimate, C4Estimate, C4Horizon, C5Params, SeriesEstimate, SeriesParams,
};

use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, LogSumExp};
use crate::rngs::{stream_rng, Salt};
use crate::steps::StepModel;
use crate::tilt::{find_lambda, FSpec};
use crate::walk::{simulate_tau_minus, PathAccumulator, TauOutcome};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A Monte Carlo result.
///
/// When `log_domain` is set, `value` and `stderr` describe the natural log of
/// the quantity (stderr by the delta method); otherwise they are on the
/// linear scale.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub method: &'static str,
    pub log_domain: bool,
}

impl Estimate {
    pub fn exact(value: f64, method: &'static str) -> Self {
        Estimate { value, stderr: 0.0, n_samples: 0, method, log_domain: false }
    }

    /// Linear-scale value; exponentiates log-domain results (may underflow to
    /// zero, which is the point of keeping the log form).
    pub fn linear_value(&self) -> f64 {
        if self.log_domain {
            self.value.exp()
        } else {
            self.value
        }
    }

    /// log of the value regardless of representation.
    pub fn log_value(&self) -> f64 {
        if self.log_domain {
            self.value
        } else {
            self.value.ln()
        }
    }

    /// Relative standard error.
    pub fn rel_stderr(&self) -> f64 {
        if self.log_domain {
            self.stderr
        } else if self.value != 0.0 {
            (self.stderr / self.value).abs()
        } else {
            0.0
        }
    }

    /// 95% confidence interval on the linear scale.
    pub fn ci95(&self) -> (f64, f64) {
        if self.log_domain {
            ((self.value - 1.96 * self.stderr).exp(), (self.value + 1.96 * self.stderr).exp())
        } else {
            (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)
        }
    }

    /// Pool with an independent estimate of the same quantity (inverse
    /// variance on sample counts: the combined mean weights by n).
    pub fn merge(&self, other: &Estimate) -> Estimate {
        assert!(!self.log_domain && !other.log_domain, "merge pools linear estimates");
        let (n1, n2) = (self.n_samples as f64, other.n_samples as f64);
        let n = n1 + n2;
        let value = (n1 * self.value + n2 * other.value) / n;
        let stderr =
            ((n1 * n1 * self.stderr * self.stderr + n2 * n2 * other.stderr * other.stderr).sqrt()) / n;
        Estimate {
            value,
            stderr,
            n_samples: self.n_samples + other.n_samples,
            method: self.method,
            log_domain: false,
        }
    }
}

/// Batch layout: at least 2 batches of at least 100 samples.
pub(crate) fn batch_layout(nsim: usize) -> Result<(usize, usize)> {
    if nsim < 200 {
        return Err(Error::Precondition(format!(
            "nsim = {nsim} below the minimum of 2 batches of 100"
        )));
    }
    let n_batches = (nsim / 100).clamp(2, 256);
    let batch_size = nsim.div_ceil(n_batches);
    Ok((n_batches, batch_size))
}

/// Mean and batch-means stderr of `f` over `nsim` samples.
pub(crate) fn batch_mean<F>(
    seed: u64,
    salt: Salt,
    index_base: u64,
    nsim: usize,
    f: F,
) -> Result<(f64, f64, u64)>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let (n_batches, batch_size) = batch_layout(nsim)?;
    let means: Vec<f64> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, salt, index_base + b as u64);
            let mut acc = 0.0f64;
            for _ in 0..batch_size {
                acc += f(&mut rng);
            }
            acc / batch_size as f64
        })
        .collect();
    let bm = n_batches as f64;
    let mean = means.iter().sum::<f64>() / bm;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (bm - 1.0);
    Ok((mean, (var / bm).sqrt(), (n_batches * batch_size) as u64))
}

/// Log-domain engine: `f` returns log of a nonnegative sample value
/// (NEG_INFINITY for zero). Returns (log mean, relative stderr, n).
pub(crate) fn batch_log_mean<F>(
    seed: u64,
    salt: Salt,
    index_base: u64,
    nsim: usize,
    f: F,
) -> Result<(f64, f64, u64)>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let (n_batches, batch_size) = batch_layout(nsim)?;
    let log_means: Vec<f64> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, salt, index_base + b as u64);
            let mut lse = LogSumExp::new();
            for _ in 0..batch_size {
                lse.push(f(&mut rng));
            }
            lse.log_value() - (batch_size as f64).ln()
        })
        .collect();
    let m = log_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = (n_batches * batch_size) as u64;
    if m == f64::NEG_INFINITY {
        return Ok((f64::NEG_INFINITY, 0.0, n));
    }
    let w: Vec<f64> = log_means.iter().map(|&lm| (lm - m).exp()).collect();
    let bm = n_batches as f64;
    let wmean = w.iter().sum::<f64>() / bm;
    let wvar = w.iter().map(|x| (x - wmean) * (x - wmean)).sum::<f64>() / (bm - 1.0);
    let rel_se = (wvar / bm).sqrt() / wmean;
    Ok((m + wmean.ln(), rel_se, n))
}

/// Threshold below which a log-scale result is reported in log domain.
const LOG_UNDERFLOW: f64 = -700.0;

pub(crate) fn estimate_from_log(
    log_mean: f64,
    rel_se: f64,
    n: u64,
    method: &'static str,
) -> Estimate {
    if log_mean > LOG_UNDERFLOW && log_mean < -LOG_UNDERFLOW {
        let v = log_mean.exp();
        Estimate { value: v, stderr: v * rel_se, n_samples: n, method, log_domain: false }
    } else {
        Estimate { value: log_mean, stderr: rel_se, n_samples: n, method, log_domain: true }
    }
}

/// Plain Monte Carlo for E[F(I_n)]: sample mean of F over nsim paths with
/// batch-means standard errors.
pub fn estimate_ef_plain(
    model: &StepModel,
    f: &FSpec,
    n: usize,
    nsim: usize,
    seed: u64,
) -> Result<Estimate> {
    let (mean, se, ns) = batch_mean(seed, Salt::PlainEf, rung_base(n), nsim, |rng| {
        let mut acc = PathAccumulator::new(0.0, None);
        for _ in 0..n {
            acc.push(model.sample(rng));
        }
        f.eval_log_arg(acc.i_log())
    })?;
    Ok(Estimate { value: mean, stderr: se, n_samples: ns, method: "plain", log_domain: false })
}

/// Tilted estimator through the measure-change identity
/// E[F(I_n)] = rho^n E-tilt[exp(-Lambda S_n) F(I_n)].
///
/// Delegates to the plain estimator when Lambda = 0 (byte-identical for the
/// same seed). The rho^n factor is applied in log domain; the result switches
/// to a log-domain Estimate when it would underflow.
pub fn estimate_ef_tilted(
    model: &StepModel,
    f: &FSpec,
    n: usize,
    nsim: usize,
    seed: u64,
) -> Result<Estimate> {
    let tilt = find_lambda(model, f.theta, 1e-10)?;
    if tilt.lambda_star == 0.0 {
        return estimate_ef_plain(model, f, n, nsim, seed);
    }
    let lam = tilt.lambda_star;
    let tilted = tilt.tilted_model.clone();
    let (log_mean, rel_se, ns) = batch_log_mean(seed, Salt::TiltedEf, rung_base(n), nsim, |rng| {
        let mut acc = PathAccumulator::new(0.0, None);
        for _ in 0..n {
            acc.push(tilted.sample(rng));
        }
        -lam * acc.s_current() + f.log_eval_log_arg(acc.i_log())
    })?;
    let total = log_mean + n as f64 * tilt.phi_at_lambda;
    Ok(estimate_from_log(total, rel_se, ns, "tilted"))
}

/// Separate stream spaces for different horizon rungs of the same stage.
fn rung_base(n: usize) -> u64 {
    (n as u64) << 20
}

/// Plain Bernoulli estimate of P(tau_0^- > n) (the event L_n >= 0).
pub fn estimate_tau_tail(model: &StepModel, n: usize, nsim: usize, seed: u64) -> Result<Estimate> {
    if n == 0 {
        return Ok(Estimate::exact(1.0, "tau_plain"));
    }
    let (mean, se, ns) = batch_mean(seed, Salt::TauTail, rung_base(n), nsim, |rng| {
        match simulate_tau_minus(model, 0.0, n, rng) {
            TauOutcome::Censored => 1.0,
            TauOutcome::Hit(_) => 0.0,
        }
    })?;
    Ok(Estimate { value: mean, stderr: se, n_samples: ns, method: "tau_plain", log_domain: false })
}

/// Big-jump splitting estimate of P(tau_0^- > n) for negative-drift
/// heavy-tailed walks: sum over the position k <= k_max of the designated
/// jump, with X_k importance-sampled from the conditional tail {X >= a n}.
pub fn estimate_tau_tail_bigjump(
    model: &StepModel,
    n: usize,
    k_max: usize,
    nsim: usize,
    seed: u64,
) -> Result<Estimate> {
    let a = -model.mean();
    if !(a > 0.0) {
        return Err(Error::Precondition("big-jump splitting needs negative drift".into()));
    }
    let threshold = a * n as f64;
    let w = model.tail_prob(threshold);
    if !(w > 0.0) {
        return Err(Error::ZeroProbabilityTail { threshold });
    }
    let mut value = 0.0;
    let mut var = 0.0;
    let mut total = 0u64;
    for k in 1..=k_max.min(n) {
        let (mean, se, ns) =
            batch_mean(seed, Salt::TauTail, bigjump_base(n, k), nsim, |rng| {
                let mut s = 0.0f64;
                for j in 1..=n {
                    let step = if j == k {
                        model
                            .sample_conditional_tail(threshold, rng)
                            .expect("tail checked positive")
                    } else {
                        model.sample(rng)
                    };
                    s += step;
                    if s < 0.0 {
                        return 0.0;
                    }
                }
                1.0
            })?;
        value += w * mean;
        var += (w * se) * (w * se);
        total += ns;
    }
    Ok(Estimate {
        value,
        stderr: var.sqrt(),
        n_samples: total,
        method: "tau_bigjump",
        log_domain: false,
    })
}

fn bigjump_base(n: usize, k: usize) -> u64 {
    ((n as u64) << 28) | ((k as u64) << 20)
}

/// Importance-sampled numerator E[F(I_n); X_k >= a n]: the designated step is
/// drawn from the conditional tail and weighted by P(X >= a n); all other
/// steps are unconditioned.
pub fn estimate_bigjump_numerator(
    model: &StepModel,
    f: &FSpec,
    n: usize,
    k: usize,
    nsim: usize,
    seed: u64,
) -> Result<Estimate> {
    if k > n {
        return Ok(Estimate::exact(0.0, "bigjump_numerator"));
    }
    let a = -model.mean();
    if !(a > 0.0) {
        return Err(Error::Precondition("big-jump numerator needs negative drift".into()));
    }
    let threshold = a * n as f64;
    let w = model.tail_prob(threshold);
    if !(w > 0.0) {
        return Err(Error::ZeroProbabilityTail { threshold });
    }
    let (mean, se, ns) = batch_mean(seed, Salt::BigJump, bigjump_base(n, k), nsim, |rng| {
        let mut acc = PathAccumulator::new(0.0, None);
        for j in 1..=n {
            let step = if j == k {
                model.sample_conditional_tail(threshold, rng).expect("tail checked positive")
            } else {
                model.sample(rng)
            };
            acc.push(step);
        }
        f.eval_log_arg(acc.i_log())
    })?;
    Ok(Estimate {
        value: w * mean,
        stderr: w * se,
        n_samples: ns,
        method: "bigjump_numerator",
        log_domain: false,
    })
}

/// log-argument for F(I + e^{b}) given log I and b: log-sum-exp of the two.
#[inline]
pub(crate) fn combine_log_args(i_log: f64, b: f64) -> f64 {
    log_add_exp(i_log, b)
}
