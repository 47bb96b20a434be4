//! Closed-form / truncated-series evaluation of the rate ingredients:
//! Spitzer's rho, the slowly varying corrections l1 and l1-hat, the heavy-tail
//! factor B_n, the stable density at zero, and the per-regime predicted
//! log-rate.

use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::numeric::{adaptive_simpson, Kahan};
use crate::rngs::Salt;
use crate::steps::StepModel;
use crate::tilt::RegimeTag;
use crate::walk::sign_stats;
use statrs::function::gamma::gamma;

/// How the per-k sign probabilities are obtained.
#[derive(Clone, Copy, Debug)]
pub enum RhoOracle {
    Dp,
    Mc { nsim: usize },
}

/// Cesaro average of P(S_k > 0) for k <= k_max; symmetric models short-cut to
/// the exact limit 1/2.
pub fn spitzer_rho(
    model: &StepModel,
    k_max: usize,
    oracle: RhoOracle,
    seed: u64,
) -> Result<Estimate> {
    if k_max < 16 {
        return Err(Error::Precondition(format!("spitzer_rho needs k_max >= 16, got {k_max}")));
    }
    if model.is_symmetric() {
        return Ok(Estimate::exact(0.5, "rho_symmetry"));
    }
    match oracle {
        RhoOracle::Dp => {
            let stats = sign_stats(model, k_max)?;
            let mut acc = Kahan::new();
            for s in &stats {
                acc.add(s.p_gt0);
            }
            Ok(Estimate::exact(acc.value() / k_max as f64, "rho_dp_cesaro"))
        }
        RhoOracle::Mc { nsim } => {
            let (mean, se, ns) =
                crate::estimators::batch_mean(seed, Salt::SpitzerRho, 0, nsim, |rng| {
                    let mut s = 0.0f64;
                    let mut hits = 0usize;
                    for _ in 0..k_max {
                        s += model.sample(rng);
                        if s > 0.0 {
                            hits += 1;
                        }
                    }
                    hits as f64 / k_max as f64
                })?;
            Ok(Estimate {
                value: mean,
                stderr: se,
                n_samples: ns,
                method: "rho_mc_cesaro",
                log_domain: false,
            })
        }
    }
}

/// A slowly varying value with its truncation remainder bound.
#[derive(Clone, Copy, Debug)]
pub struct SlowlyVarying {
    pub value: f64,
    pub remainder_bound: f64,
}

/// l1(x) = Gamma(rho)^{-1} exp{ sum_k (1 - 1/x)^k / k (P(S_k >= 0) - rho) },
/// truncated at the length of `probs_ge0` with the closed-form remainder
/// bound sup_{k > K} |P(S_k >= 0) - rho| * (ln x - sum_{k <= K} q^k / k).
///
/// A remainder above 10% of the value is an error.
pub fn slowly_varying_l1(probs_ge0: &[f64], rho: f64, x: f64) -> Result<SlowlyVarying> {
    slowly_varying_series(probs_ge0, rho, x, 1.0, gamma(rho).recip())
}

/// l1-hat(x) = Gamma(1 - rho)^{-1} exp{ -sum_k (1 - 1/x)^k / k
/// (P(S_k > 0) - rho) }; note the strict inequality in the probabilities and
/// the sign flip in the exponent.
pub fn slowly_varying_l1_hat(probs_gt0: &[f64], rho: f64, x: f64) -> Result<SlowlyVarying> {
    slowly_varying_series(probs_gt0, rho, x, -1.0, gamma(1.0 - rho).recip())
}

fn slowly_varying_series(
    probs: &[f64],
    rho: f64,
    x: f64,
    sign: f64,
    prefactor: f64,
) -> Result<SlowlyVarying> {
    if !(x >= 1.0) {
        return Err(Error::Precondition(format!("slowly varying functions need x >= 1, got {x}")));
    }
    if probs.is_empty() {
        return Err(Error::Precondition("need at least one sign probability".into()));
    }
    let q = 1.0 - 1.0 / x;
    let mut sum = Kahan::new();
    let mut partial_qk = Kahan::new();
    let mut qk = 1.0f64;
    for (i, &p) in probs.iter().enumerate() {
        qk *= q;
        let k = (i + 1) as f64;
        sum.add(qk / k * (p - rho));
        partial_qk.add(qk / k);
        if qk < 1e-18 {
            // the geometric weight is numerically dead; the rest of the
            // series cannot move anything
            let value = prefactor * (sign * sum.value()).exp();
            return Ok(SlowlyVarying { value, remainder_bound: 0.0 });
        }
    }
    let value = prefactor * (sign * sum.value()).exp();
    // sup over the untabulated range, proxied by the worst of the last eighth
    let tail_window = (probs.len() / 8).max(1);
    let sup = probs[probs.len() - tail_window..]
        .iter()
        .map(|&p| (p - rho).abs())
        .fold(0.0f64, f64::max);
    let weight_rest = (x.ln() - partial_qk.value()).max(0.0);
    let remainder_bound = value * ((sup * weight_rest).exp() - 1.0).max(sup * weight_rest);
    if remainder_bound > 0.1 * value.abs() {
        return Err(Error::RemainderTooLarge { value, bound: remainder_bound });
    }
    Ok(SlowlyVarying { value, remainder_bound })
}

/// B_n = beta / (a n) * P-tilt(X >= a n) with a = -E-tilt[X] > 0.
pub fn rate_b_n(tilted_model: &StepModel, n: usize) -> Result<f64> {
    let a = -tilted_model.mean();
    if !(a > 0.0) {
        return Err(Error::Precondition(format!("B_n needs negative drift, mean = {}", -a)));
    }
    let beta = tilted_model
        .tail_index()
        .ok_or_else(|| Error::Precondition("B_n needs a regularly varying tail index".into()))?;
    let an = a * n as f64;
    Ok(beta / an * tilted_model.tail_prob(an))
}

/// Density at zero of the strictly stable law Y_alpha with positivity
/// parameter rho, by quadrature of (1/pi) int_0^inf Re phi(t) dt under the
/// convention phi(t) = exp(-|t|^alpha e^{-i pi (2 rho - 1) alpha sgn(t) / 2})
/// (so alpha = 2 means variance 2).
///
/// Returns (value, quadrature error). (alpha, rho) pairs outside strict
/// stability are rejected.
pub fn stable_density_at_zero(alpha: f64, rho: f64) -> Result<(f64, f64)> {
    check_stable_params(alpha, rho)?;
    let theta = 2.0 * rho - 1.0;
    let c1 = (std::f64::consts::PI * theta * alpha / 2.0).cos();
    let c2 = (std::f64::consts::PI * theta * alpha / 2.0).sin();
    let t_cut = (40.0 / c1).powf(1.0 / alpha);
    let f = |t: f64| {
        let ta = t.powf(alpha);
        (-c1 * ta).exp() * (c2 * ta).cos()
    };
    let (v, e) = adaptive_simpson(&f, 0.0, t_cut, 1e-11);
    Ok((v / std::f64::consts::PI, e / std::f64::consts::PI + 1e-17))
}

/// Density of the symmetric strictly stable law at x, same convention
/// (used by the unimodality sanity checks).
pub fn symmetric_stable_density_at(alpha: f64, x: f64) -> Result<f64> {
    check_stable_params(alpha, 0.5)?;
    let t_cut = 40.0f64.powf(1.0 / alpha);
    let f = |t: f64| (-t.powf(alpha)).exp() * (t * x).cos();
    let (v, _) = adaptive_simpson(&f, 0.0, t_cut, 1e-11);
    Ok(v / std::f64::consts::PI)
}

fn check_stable_params(alpha: f64, rho: f64) -> Result<()> {
    let bad = !(alpha > 0.0 && alpha <= 2.0)
        || !(rho > 0.0 && rho < 1.0)
        || (alpha == 2.0 && rho != 0.5)
        || ((alpha - 1.0).abs() < 1e-12 && rho != 0.5)
        || (alpha > 1.0 && (rho < 1.0 - 1.0 / alpha - 1e-12 || rho > 1.0 / alpha + 1e-12));
    if bad {
        return Err(Error::InconsistentStable { alpha, rho });
    }
    Ok(())
}

/// Everything the rate formulas consume, recorded next to the prediction.
#[derive(Clone, Debug)]
pub struct RateIngredients {
    pub regime: RegimeTag,
    pub rho: f64,
    pub lambda: f64,
    /// Phi(Lambda) = log of the rho-factor.
    pub log_rho_factor: f64,
    /// a = -E-tilt[X] for the drift regimes.
    pub a: Option<f64>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    /// Exact P(S_k >= 0) per k (untilted), for l1.
    pub probs_ge0: Vec<f64>,
    /// Exact P-tilt(S_k > 0) per k, for l1-hat.
    pub probs_gt0: Vec<f64>,
    /// The model whose tail feeds the heavy-tail rates.
    pub tilted_model: StepModel,
}

/// log of the n-dependent factor of the predicted decay (constants excluded).
///
/// For the interior oscillating regime the prediction is relative to
/// P(tau_0^- > n) - the stable normalization cancels - so the factor is
/// constant and 0 is returned.
pub fn predicted_log_rate(ing: &RateIngredients, n: usize) -> Result<f64> {
    let nf = n as f64;
    match ing.regime {
        RegimeTag::OscLambdaZero => {
            let l1 = slowly_varying_l1(&ing.probs_ge0, ing.rho, nf)?;
            Ok((ing.rho - 1.0) * nf.ln() + l1.value.ln())
        }
        RegimeTag::OscInterior => Ok(0.0),
        RegimeTag::OscLambdaEqTheta => {
            let l1h = slowly_varying_l1_hat(&ing.probs_gt0, ing.rho, nf)?;
            Ok(nf * ing.log_rho_factor - ing.rho * nf.ln() + l1h.value.ln())
        }
        RegimeTag::DriftLambdaEqTheta => Ok(nf * ing.log_rho_factor),
        RegimeTag::DriftLambdaZeroHeavyTail => {
            let a = ing.a.ok_or_else(|| Error::Precondition("missing drift a".into()))?;
            Ok(ing.tilted_model.tail_prob(a * nf).ln())
        }
        RegimeTag::DriftInteriorHeavyTail => {
            let b_n = rate_b_n(&ing.tilted_model, n)?;
            Ok(nf * ing.log_rho_factor + b_n.ln())
        }
        RegimeTag::DriftsToInfinity | RegimeTag::Unsupported(_) => Err(Error::Unsupported(format!(
            "no rate prediction for regime {}",
            ing.regime
        ))),
    }
}
