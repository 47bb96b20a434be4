//! Doob h-transform walks: S-up (conditioned to stay nonnegative) and S-down,
//! their exponential functionals, and a rejection-based oracle for validating
//! the h-transform law against finite-horizon conditioning.

use crate::error::{Error, Result};
use crate::renewal::RenewalTable;
use crate::steps::StepModel;
use crate::walk::{exact_lattice_dp, Floor};
use rand::Rng;

/// Row-sum slack tolerated before an estimated V table is declared too noisy.
const ROW_SUM_TOL: f64 = 1e-3;

/// One transition of the walk conditioned to stay nonnegative:
/// p-up(x, dy) = V(y)/V(x) P(x + X in dy) on y >= 0.
///
/// Lattice models get the exact row (inverse transform over the reweighted
/// atoms); continuous models use rejection from the unconditioned step with
/// the subadditive envelope V(x) + V(X^+).
pub fn step_up<R: Rng + ?Sized>(
    x: f64,
    model: &StepModel,
    v_table: &RenewalTable,
    rng: &mut R,
) -> Result<f64> {
    if model.lattice_info().is_some() {
        let row = up_row(x, model, v_table)?;
        Ok(draw_from_row(&row, rng))
    } else {
        step_continuous(x, v_table, rng, |rng| model.sample(rng))
    }
}

/// One transition of the dual conditioned walk:
/// p-down(x, dy) = V-hat(y)/V-hat(x) P(x - X in dy) on y >= 0.
pub fn step_down<R: Rng + ?Sized>(
    x: f64,
    model: &StepModel,
    vhat_table: &RenewalTable,
    rng: &mut R,
) -> Result<f64> {
    if model.lattice_info().is_some() {
        let row = down_row(x, model, vhat_table)?;
        Ok(draw_from_row(&row, rng))
    } else {
        step_continuous(x, vhat_table, rng, |rng| -model.sample(rng))
    }
}

/// Exact transition row {(y, prob)} of the conditioned walk at a lattice
/// point x. Rows must sum to 1 by harmonicity; a deviation above 1e-3 means
/// the V table is too noisy, smaller deviations are renormalized.
pub fn up_row(x: f64, model: &StepModel, v_table: &RenewalTable) -> Result<Vec<(f64, f64)>> {
    let (spacing, offsets, probs) = model
        .lattice_info()
        .ok_or_else(|| Error::Precondition("exact rows need a lattice model".into()))?;
    let vx = v_table.value_at(x);
    if !(vx > 0.0) {
        return Err(Error::Precondition(format!("V({x}) = {vx} not positive")));
    }
    let mut row: Vec<(f64, f64)> = Vec::with_capacity(offsets.len());
    for (&o, &p) in offsets.iter().zip(probs) {
        let y = x + o as f64 * spacing;
        if y >= -spacing * 1e-9 {
            let y = y.max(0.0);
            let w = v_table.value_at(y) * p / vx;
            if w > 0.0 {
                row.push((y, w));
            }
        }
    }
    normalize_row(x, row)
}

/// Exact transition row of the dual conditioned walk at x (increments -X).
pub fn down_row(x: f64, model: &StepModel, vhat_table: &RenewalTable) -> Result<Vec<(f64, f64)>> {
    let (spacing, offsets, probs) = model
        .lattice_info()
        .ok_or_else(|| Error::Precondition("exact rows need a lattice model".into()))?;
    let vx = vhat_table.value_at(x);
    if !(vx > 0.0) {
        return Err(Error::Precondition(format!("V-hat({x}) = {vx} not positive")));
    }
    let mut row: Vec<(f64, f64)> = Vec::with_capacity(offsets.len());
    for (&o, &p) in offsets.iter().zip(probs) {
        let y = x - o as f64 * spacing;
        if y >= -spacing * 1e-9 {
            let y = y.max(0.0);
            let w = vhat_table.value_at(y) * p / vx;
            if w > 0.0 {
                row.push((y, w));
            }
        }
    }
    normalize_row(x, row)
}

fn normalize_row(x: f64, mut row: Vec<(f64, f64)>) -> Result<Vec<(f64, f64)>> {
    let sum: f64 = row.iter().map(|&(_, w)| w).sum();
    let deviation = (sum - 1.0).abs();
    if deviation > ROW_SUM_TOL {
        return Err(Error::RowSumDeviation { x, deviation });
    }
    for e in &mut row {
        e.1 /= sum;
    }
    Ok(row)
}

fn draw_from_row<R: Rng + ?Sized>(row: &[(f64, f64)], rng: &mut R) -> f64 {
    let mut u: f64 = rng.gen();
    for &(y, w) in row {
        if u < w {
            return y;
        }
        u -= w;
    }
    row.last().unwrap().0
}

fn step_continuous<R: Rng + ?Sized, S: FnMut(&mut R) -> f64>(
    x: f64,
    table: &RenewalTable,
    rng: &mut R,
    mut sample_increment: S,
) -> Result<f64> {
    const MAX_ATTEMPTS: usize = 1 << 24;
    for _ in 0..MAX_ATTEMPTS {
        let inc = sample_increment(rng);
        let y = x + inc;
        if y < 0.0 {
            continue;
        }
        let env = table.envelope(x, inc);
        let w = table.value_at(y) / env;
        if rng.gen::<f64>() < w.min(1.0) {
            return Ok(y);
        }
    }
    Err(Error::RejectionGuard(format!(
        "h-transform step from x = {x} exceeded {MAX_ATTEMPTS} proposals"
    )))
}

/// Exponential functional of the conditioned walk with adaptive stopping.
#[derive(Clone, Copy, Debug)]
pub struct IUpResult {
    pub value: f64,
    pub truncated: bool,
    pub steps: usize,
}

const WINDOW: usize = 256;

/// Accumulate I-up = sum_k exp(-S-up_k) from `start` until the increment over
/// a sliding window of 256 steps falls below eps * current value, or
/// `horizon_cap` steps have been taken (then the truncation flag is set).
pub fn simulate_i_up<R: Rng + ?Sized>(
    model: &StepModel,
    v_table: &RenewalTable,
    start: f64,
    eps: f64,
    horizon_cap: usize,
    rng: &mut R,
) -> Result<IUpResult> {
    simulate_conditioned_functional(start, eps, horizon_cap, rng, |x, rng| {
        step_up(x, model, v_table, rng)
    })
}

/// Same adaptive accumulation for the dual conditioned walk S-down.
pub fn simulate_i_down<R: Rng + ?Sized>(
    model: &StepModel,
    vhat_table: &RenewalTable,
    start: f64,
    eps: f64,
    horizon_cap: usize,
    rng: &mut R,
) -> Result<IUpResult> {
    simulate_conditioned_functional(start, eps, horizon_cap, rng, |x, rng| {
        step_down(x, model, vhat_table, rng)
    })
}

fn simulate_conditioned_functional<R: Rng + ?Sized, S>(
    start: f64,
    eps: f64,
    horizon_cap: usize,
    rng: &mut R,
    mut step: S,
) -> Result<IUpResult>
where
    S: FnMut(f64, &mut R) -> Result<f64>,
{
    let mut x = start;
    let mut i = 0.0f64;
    let mut ring = [0.0f64; WINDOW];
    for k in 0..horizon_cap {
        x = step(x, rng)?;
        i += (-x).exp();
        if k >= WINDOW {
            let past = ring[k % WINDOW];
            if i - past < eps * i {
                return Ok(IUpResult { value: i, truncated: false, steps: k + 1 });
            }
        }
        ring[k % WINDOW] = i;
    }
    Ok(IUpResult { value: i, truncated: true, steps: horizon_cap })
}

/// Exact finite-horizon conditioning by rejection: draws (S_1, ..., S_k)
/// conditioned on tau_0^- > n.
///
/// The acceptance probability is estimated up front for lattice models (DP)
/// and guarded at 1e-6.
pub struct RejectionConditioner {
    model: StepModel,
    k: usize,
    n: usize,
    acceptance_estimate: Option<f64>,
}

impl RejectionConditioner {
    pub fn new(model: &StepModel, k: usize, n: usize) -> Result<Self> {
        if k == 0 || n < k {
            return Err(Error::Precondition(format!(
                "rejection conditioning needs 1 <= k <= n, got k={k}, n={n}"
            )));
        }
        let acceptance_estimate = if model.lattice_info().is_some() && n <= 4096 {
            let t = exact_lattice_dp(model, n, Some(Floor::KillBelowZero))?;
            let p = t.row_sum(n);
            if p < 1e-6 {
                return Err(Error::RejectionGuard(format!(
                    "estimated acceptance P(tau_0^- > {n}) = {p:.3e} below 1e-6"
                )));
            }
            Some(p)
        } else {
            None
        };
        Ok(RejectionConditioner { model: model.clone(), k, n, acceptance_estimate })
    }

    pub fn acceptance_estimate(&self) -> Option<f64> {
        self.acceptance_estimate
    }

    /// One conditioned prefix. For models without a DP estimate the attempt
    /// count doubles as the 1e-6 acceptance guard.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.draw_with_attempts(rng).map(|(p, _)| p)
    }

    /// One conditioned prefix together with the number of attempts used.
    pub fn draw_with_attempts<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, usize)> {
        const MAX_ATTEMPTS: usize = 20_000_000;
        let mut prefix = vec![0.0f64; self.k];
        'attempt: for attempt in 1..=MAX_ATTEMPTS {
            let mut s = 0.0f64;
            for slot in prefix.iter_mut() {
                s += self.model.sample(rng);
                if s < 0.0 {
                    continue 'attempt;
                }
                *slot = s;
            }
            for _ in self.k..self.n {
                s += self.model.sample(rng);
                if s < 0.0 {
                    continue 'attempt;
                }
            }
            return Ok((prefix, attempt));
        }
        Err(Error::RejectionGuard(format!(
            "no acceptance in {MAX_ATTEMPTS} attempts (k={}, n={})",
            self.k, self.n
        )))
    }
}

/// Convenience wrapper for one draw.
pub fn conditioned_by_rejection<R: Rng + ?Sized>(
    model: &StepModel,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    RejectionConditioner::new(model, k, n)?.draw(rng)
}
