//! Trajectory simulation and every path functional the regime rates
//! reference, plus exact small-instance oracles (dynamic programming over the
//! lattice and full path enumeration).

mod dp;
mod enumerate;

pub use dp::{
    exact_lattice_dp, exact_lattice_dp_from, sign_stats, tau_minus_survival, DpTable, Floor,
    SignStat,
};
pub use enumerate::{enumerate_paths, enumerate_paths_with_steps};

use crate::numeric::LogSumExp;
use crate::steps::StepModel;
use rand::Rng;

/// First-passage outcome under a horizon cap. Censoring is an explicit
/// outcome, never an error: oscillating walks have infinite-mean passage
/// times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauOutcome {
    Hit(usize),
    Censored,
}

impl TauOutcome {
    pub fn hit(&self) -> Option<usize> {
        match self {
            TauOutcome::Hit(k) => Some(*k),
            TauOutcome::Censored => None,
        }
    }
}

/// Path functionals of one simulated trajectory.
///
/// `i_n_log` is log I_n accumulated by streaming log-sum-exp, so walks with
/// |S_k| of order 10^4 cannot overflow. Minima and maxima report the first
/// attainment index, with S_0 participating.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub n: usize,
    pub s_final: f64,
    pub i_n_log: f64,
    pub l_n: f64,
    pub m_n: f64,
    pub sigma_minus: usize,
    pub sigma_plus: usize,
    pub tau0_minus: TauOutcome,
    pub tau0_plus: TauOutcome,
    pub big_jump_index: Option<usize>,
}

/// Streaming accumulator for the functionals of PathSample; estimators feed it
/// one step at a time so no trajectory is ever stored.
#[derive(Clone, Debug)]
pub struct PathAccumulator {
    k: usize,
    s: f64,
    i_acc: LogSumExp,
    min: f64,
    argmin: usize,
    max: f64,
    argmax: usize,
    tau_minus: Option<usize>,
    tau_plus: Option<usize>,
    big_jump_threshold: Option<f64>,
    big_jump_index: Option<usize>,
}

impl PathAccumulator {
    pub fn new(start: f64, big_jump_threshold: Option<f64>) -> Self {
        PathAccumulator {
            k: 0,
            s: start,
            i_acc: LogSumExp::new(),
            min: start,
            argmin: 0,
            max: start,
            argmax: 0,
            tau_minus: None,
            tau_plus: None,
            big_jump_threshold,
            big_jump_index: None,
        }
    }

    #[inline(always)]
    pub fn push(&mut self, step: f64) {
        self.k += 1;
        self.s += step;
        self.i_acc.push(-self.s);
        // strict improvement keeps the first attainment on ties
        if self.s < self.min {
            self.min = self.s;
            self.argmin = self.k;
        }
        if self.s > self.max {
            self.max = self.s;
            self.argmax = self.k;
        }
        if self.tau_minus.is_none() && self.s < 0.0 {
            self.tau_minus = Some(self.k);
        }
        if self.tau_plus.is_none() && self.s > 0.0 {
            self.tau_plus = Some(self.k);
        }
        if let Some(t) = self.big_jump_threshold {
            if self.big_jump_index.is_none() && step > t {
                self.big_jump_index = Some(self.k);
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    #[inline]
    pub fn s_current(&self) -> f64 {
        self.s
    }

    #[inline]
    pub fn i_log(&self) -> f64 {
        self.i_acc.log_value()
    }

    #[inline]
    pub fn first_min_index(&self) -> usize {
        self.argmin
    }

    /// sigma_k^- = k: the running minimum is first attained at the current
    /// step (strictly below the start and everything before).
    #[inline]
    pub fn min_first_attained_now(&self) -> bool {
        self.argmin == self.k
    }

    pub fn finalize(&self) -> PathSample {
        PathSample {
            n: self.k,
            s_final: self.s,
            i_n_log: self.i_acc.log_value(),
            l_n: self.min,
            m_n: self.max,
            sigma_minus: self.argmin,
            sigma_plus: self.argmax,
            tau0_minus: self.tau_minus.map_or(TauOutcome::Censored, TauOutcome::Hit),
            tau0_plus: self.tau_plus.map_or(TauOutcome::Censored, TauOutcome::Hit),
            big_jump_index: self.big_jump_index,
        }
    }
}

/// Simulate an n-step trajectory from `start` and return all path functionals
/// in one pass.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &StepModel,
    n: usize,
    start: f64,
    big_jump_threshold: Option<f64>,
    rng: &mut R,
) -> PathSample {
    let mut acc = PathAccumulator::new(start, big_jump_threshold);
    for _ in 0..n {
        acc.push(model.sample(rng));
    }
    acc.finalize()
}

/// First passage below 0 from `start >= 0`, censored at `cap`.
pub fn simulate_tau_minus<R: Rng + ?Sized>(
    model: &StepModel,
    start: f64,
    cap: usize,
    rng: &mut R,
) -> TauOutcome {
    let mut s = start;
    for k in 1..=cap {
        s += model.sample(rng);
        if s < 0.0 {
            return TauOutcome::Hit(k);
        }
    }
    TauOutcome::Censored
}

/// First passage above 0, censored at `cap`.
pub fn simulate_tau_plus<R: Rng + ?Sized>(
    model: &StepModel,
    start: f64,
    cap: usize,
    rng: &mut R,
) -> TauOutcome {
    let mut s = start;
    for k in 1..=cap {
        s += model.sample(rng);
        if s > 0.0 {
            return TauOutcome::Hit(k);
        }
    }
    TauOutcome::Censored
}

/// Which ladder of the walk is being sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadderDirection {
    /// Strict descending ladder: height is -S at the first passage below 0.
    Descending,
    /// Strict ascending ladder: height is S at the first passage above 0.
    Ascending,
}

/// i.i.d. draws of the first strict ladder height magnitude.
#[derive(Clone, Debug)]
pub struct LadderSample {
    pub heights: Vec<f64>,
    pub censored: usize,
    pub attempts: usize,
}

impl LadderSample {
    pub fn censor_rate(&self) -> f64 {
        self.censored as f64 / self.attempts as f64
    }
}

/// Draw `count` first-ladder-height magnitudes, each censored at `cap` steps.
///
/// Censored walks are discarded and reported; more than 50% censoring is an
/// error (the walk likely drifts away from the ladder direction).
pub fn ladder_height_samples<R: Rng + ?Sized>(
    model: &StepModel,
    direction: LadderDirection,
    count: usize,
    cap: usize,
    rng: &mut R,
) -> crate::Result<LadderSample> {
    let mut heights = Vec::with_capacity(count);
    let mut censored = 0usize;
    for _ in 0..count {
        match sample_first_ladder_height(model, direction, cap, rng) {
            Some(h) => heights.push(h),
            None => censored += 1,
        }
    }
    if 2 * censored > count {
        return Err(crate::Error::LadderCensoring { censored, total: count });
    }
    Ok(LadderSample { heights, censored, attempts: count })
}

#[inline]
pub(crate) fn sample_first_ladder_height<R: Rng + ?Sized>(
    model: &StepModel,
    direction: LadderDirection,
    cap: usize,
    rng: &mut R,
) -> Option<f64> {
    let mut s = 0.0f64;
    for _ in 0..cap {
        s += model.sample(rng);
        match direction {
            LadderDirection::Descending => {
                if s < 0.0 {
                    return Some(-s);
                }
            }
            LadderDirection::Ascending => {
                if s > 0.0 {
                    return Some(s);
                }
            }
        }
    }
    None
}
