//! Exact dynamic programming over lattice walks.
//!
//! The walk lives on `spacing * Z`; a row is the exact law of S_k restricted
//! to the reachable window. With a kill boundary installed, mass entering the
//! forbidden half-line is dropped, so the row-k total is the survival
//! probability of the corresponding first-passage time.

use crate::error::{Error, Result};
use crate::numeric::Kahan;
use crate::steps::StepModel;

/// Kill boundary for first-passage tails.
///
/// `KillBelowZero` kills on S < 0 (tau_0^- survival keeps S_k >= 0);
/// `KillAboveZero` kills on S > 0 (tau_0^+ survival).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Floor {
    KillBelowZero,
    KillAboveZero,
}

/// Total states a materialized table may hold.
const TABLE_STATE_LIMIT: usize = 1 << 25;
const TABLE_HORIZON_LIMIT: usize = 1 << 12;

struct LatticeDp {
    offsets: Vec<i64>,
    probs: Vec<f64>,
    /// row[i] = P(S_k = spacing * (lo + i), alive)
    row: Vec<f64>,
    lo: i64,
    floor: Option<Floor>,
}

impl LatticeDp {
    fn new(model: &StepModel, start_index: i64, floor: Option<Floor>) -> Result<Self> {
        let (_, offsets, probs) = model
            .lattice_info()
            .ok_or_else(|| Error::Precondition("exact DP requires a lattice model".into()))?;
        Ok(LatticeDp {
            offsets: offsets.to_vec(),
            probs: probs.to_vec(),
            row: vec![1.0],
            lo: start_index,
            floor,
        })
    }

    fn step(&mut self) {
        let min_off = *self.offsets.first().unwrap();
        let max_off = *self.offsets.last().unwrap();
        let new_lo = self.lo + min_off;
        let new_len = self.row.len() + (max_off - min_off) as usize;
        let mut next = vec![0.0f64; new_len];
        for (i, &p) in self.row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let base = self.lo + i as i64;
            for (&o, &q) in self.offsets.iter().zip(&self.probs) {
                next[(base + o - new_lo) as usize] += p * q;
            }
        }
        self.lo = new_lo;
        self.row = next;
        match self.floor {
            Some(Floor::KillBelowZero) => self.truncate_below(0),
            Some(Floor::KillAboveZero) => self.truncate_above(0),
            None => {}
        }
    }

    fn truncate_below(&mut self, min_index: i64) {
        if self.lo < min_index {
            let cut = (min_index - self.lo) as usize;
            if cut >= self.row.len() {
                self.row.clear();
                self.lo = min_index;
            } else {
                self.row.drain(..cut);
                self.lo = min_index;
            }
        }
    }

    fn truncate_above(&mut self, max_index: i64) {
        let hi = self.lo + self.row.len() as i64 - 1;
        if hi > max_index {
            let keep = (max_index - self.lo + 1).max(0) as usize;
            self.row.truncate(keep);
        }
    }

    fn mass(&self) -> f64 {
        let mut k = Kahan::new();
        for &p in &self.row {
            k.add(p);
        }
        k.value()
    }

    fn sign_stat(&self) -> SignStat {
        let mut ge = Kahan::new();
        let mut gt = Kahan::new();
        let mut eq = 0.0;
        for (i, &p) in self.row.iter().enumerate() {
            let idx = self.lo + i as i64;
            if idx >= 0 {
                ge.add(p);
                if idx > 0 {
                    gt.add(p);
                } else {
                    eq = p;
                }
            }
        }
        SignStat { p_ge0: ge.value(), p_gt0: gt.value(), p_eq0: eq }
    }
}

/// Exact marginal law of S_k for k = 0..n over the lattice, optionally with a
/// kill boundary at zero.
#[derive(Clone, Debug)]
pub struct DpTable {
    pub spacing: f64,
    /// rows[k] = (lo, probs): P(S_k = spacing * (lo + i), alive) = probs[i].
    pub rows: Vec<(i64, Vec<f64>)>,
}

impl DpTable {
    /// P at lattice index `idx` in row `k` (zero off the stored window).
    pub fn prob(&self, k: usize, idx: i64) -> f64 {
        let (lo, row) = &self.rows[k];
        let i = idx - lo;
        if i < 0 || i as usize >= row.len() {
            0.0
        } else {
            row[i as usize]
        }
    }

    /// Total mass of row k; with a kill boundary this is the survival
    /// probability of the passage time after k steps.
    pub fn row_sum(&self, k: usize) -> f64 {
        let mut s = Kahan::new();
        for &p in &self.rows[k].1 {
            s.add(p);
        }
        s.value()
    }
}

/// Materialized exact DP table started from lattice index `0`.
///
/// Guards: horizon at most 4096 and at most 2^25 stored states, both reported
/// as state-space overflow.
pub fn exact_lattice_dp(model: &StepModel, n: usize, floor: Option<Floor>) -> Result<DpTable> {
    exact_lattice_dp_from(model, n, floor, 0)
}

/// Same as [`exact_lattice_dp`] with an arbitrary lattice start index.
pub fn exact_lattice_dp_from(
    model: &StepModel,
    n: usize,
    floor: Option<Floor>,
    start_index: i64,
) -> Result<DpTable> {
    let (spacing, offsets, _) = model
        .lattice_info()
        .ok_or_else(|| Error::Precondition("exact DP requires a lattice model".into()))?;
    if n > TABLE_HORIZON_LIMIT {
        return Err(Error::StateSpaceOverflow { states: n, limit: TABLE_HORIZON_LIMIT });
    }
    let span = (offsets.last().unwrap() - offsets.first().unwrap()) as usize;
    let states = (n * n).saturating_mul(span) / 2 + n + 1;
    if states > TABLE_STATE_LIMIT {
        return Err(Error::StateSpaceOverflow { states, limit: TABLE_STATE_LIMIT });
    }
    let mut dp = LatticeDp::new(model, start_index, floor)?;
    let mut rows = Vec::with_capacity(n + 1);
    rows.push((dp.lo, dp.row.clone()));
    for _ in 0..n {
        dp.step();
        rows.push((dp.lo, dp.row.clone()));
    }
    Ok(DpTable { spacing, rows })
}

/// P_x(tau_0^- > k) for k = 0..n, streaming (no table kept).
///
/// `start_index` is the lattice index of x = spacing * start_index >= 0.
pub fn tau_minus_survival(model: &StepModel, n: usize, start_index: i64) -> Result<Vec<f64>> {
    let mut dp = LatticeDp::new(model, start_index, Some(Floor::KillBelowZero))?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    for _ in 0..n {
        dp.step();
        out.push(dp.mass());
    }
    Ok(out)
}

/// Marginal sign statistics of the unrestricted walk.
#[derive(Clone, Copy, Debug, Default)]
pub struct SignStat {
    pub p_ge0: f64,
    pub p_gt0: f64,
    pub p_eq0: f64,
}

/// Exact P(S_k >= 0), P(S_k > 0), P(S_k = 0) for k = 1..=k_max, streaming.
pub fn sign_stats(model: &StepModel, k_max: usize) -> Result<Vec<SignStat>> {
    let mut dp = LatticeDp::new(model, 0, None)?;
    let mut out = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        dp.step();
        out.push(dp.sign_stat());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn binom(n: u64, k: u64) -> f64 {
        let mut v = 1.0f64;
        for i in 0..k {
            v = v * (n - i) as f64 / (i + 1) as f64;
        }
        v
    }

    /// ballot-type closed form P(tau_0^- > n) = 2^{-n} C(n, floor(n/2))
    fn ballot(n: usize) -> f64 {
        binom(n as u64, (n / 2) as u64) * 0.5f64.powi(n as i32)
    }

    #[test]
    fn floored_dp_matches_ballot_formula() {
        let m = StepModel::symmetric_unit_lattice();
        let t = exact_lattice_dp(&m, 20, Some(Floor::KillBelowZero)).unwrap();
        for n in 0..=20 {
            assert!((t.row_sum(n) - ballot(n)).abs() <= 1e-12, "n={n}");
        }
        // the named example: P(tau_0^- > 4) = 6/16
        assert_relative_eq!(t.row_sum(4), 6.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn unfloored_single_step_is_step_law() {
        let m = StepModel::lattice(0.5, vec![-1, 0, 2], vec![0.2, 0.5, 0.3]).unwrap();
        let t = exact_lattice_dp(&m, 1, None).unwrap();
        assert_relative_eq!(t.prob(1, -1), 0.2, epsilon = 1e-15);
        assert_relative_eq!(t.prob(1, 0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(t.prob(1, 2), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn unfloored_rows_conserve_mass() {
        let m = StepModel::lattice(1.0, vec![-1, 1], vec![0.75, 0.25]).unwrap();
        let t = exact_lattice_dp(&m, 40, None).unwrap();
        for n in 0..=40 {
            assert!((t.row_sum(n) - 1.0).abs() <= 1e-13);
        }
    }

    #[test]
    fn streaming_survival_matches_table() {
        let m = StepModel::symmetric_unit_lattice();
        let t = exact_lattice_dp(&m, 32, Some(Floor::KillBelowZero)).unwrap();
        let s = tau_minus_survival(&m, 32, 0).unwrap();
        for (n, sv) in s.iter().enumerate() {
            assert_relative_eq!(t.row_sum(n), *sv, epsilon = 1e-14);
        }
    }

    #[test]
    fn sign_stats_symmetric_walk() {
        let m = StepModel::symmetric_unit_lattice();
        let st = sign_stats(&m, 8).unwrap();
        // odd k: no mass at zero, P(>0) = 1/2
        assert_eq!(st[0].p_eq0, 0.0);
        assert_relative_eq!(st[0].p_gt0, 0.5, epsilon = 1e-15);
        // k = 2: P(S=0) = 1/2
        assert_relative_eq!(st[1].p_eq0, 0.5, epsilon = 1e-15);
        assert_relative_eq!(st[1].p_ge0, 0.75, epsilon = 1e-15);
        assert_relative_eq!(st[1].p_gt0, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn horizon_guard_trips() {
        let m = StepModel::symmetric_unit_lattice();
        assert!(matches!(
            exact_lattice_dp(&m, 5000, None),
            Err(Error::StateSpaceOverflow { .. })
        ));
    }
}
