//! Exhaustive path enumeration for lattice walks: the oracle for
//! path-dependent functionals (I_n, first-minimum indices) that the marginal
//! DP cannot carry.

use crate::error::{Error, Result};
use crate::numeric::Kahan;
use crate::steps::StepModel;

const PATH_LIMIT: f64 = 1e7;

/// Exact E[w(S_1, ..., S_n)] by full enumeration with compensated
/// accumulation. The weight sees the running path as a slice of S values
/// (start 0).
///
/// Guard: |support|^n <= 1e7.
pub fn enumerate_paths<F>(model: &StepModel, n: usize, mut weight: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    enumerate_paths_with_steps(model, n, |_steps, path| weight(path))
}

/// As [`enumerate_paths`], with the raw steps visible to the weight as well.
pub fn enumerate_paths_with_steps<F>(model: &StepModel, n: usize, mut weight: F) -> Result<f64>
where
    F: FnMut(&[f64], &[f64]) -> f64,
{
    let (spacing, offsets, probs) = model
        .lattice_info()
        .ok_or_else(|| Error::Precondition("enumeration requires a lattice model".into()))?;
    let paths = (offsets.len() as f64).powi(n as i32);
    if paths > PATH_LIMIT {
        return Err(Error::EnumerationGuard { paths, limit: PATH_LIMIT });
    }
    let values: Vec<f64> = offsets.iter().map(|&o| o as f64 * spacing).collect();
    let mut acc = Kahan::new();
    let mut steps = vec![0.0f64; n];
    let mut path = vec![0.0f64; n];
    let mut choice = vec![0usize; n];
    // depth-first odometer over the |support|^n step words
    let mut depth = 0usize;
    let mut prob_stack = vec![1.0f64; n + 1];
    loop {
        if depth == n {
            acc.add(prob_stack[n] * weight(&steps, &path));
            // backtrack to the next word
            loop {
                if depth == 0 {
                    return Ok(acc.value());
                }
                depth -= 1;
                choice[depth] += 1;
                if choice[depth] < values.len() {
                    break;
                }
                choice[depth] = 0;
            }
        }
        let c = choice[depth];
        steps[depth] = values[c];
        path[depth] = if depth == 0 { values[c] } else { path[depth - 1] + values[c] };
        prob_stack[depth + 1] = prob_stack[depth] * probs[c];
        depth += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::LogSumExp;
    use approx::assert_relative_eq;

    #[test]
    fn total_probability_is_one() {
        let m = StepModel::lattice(1.0, vec![-1, 0, 1], vec![0.2, 0.3, 0.5]).unwrap();
        let v = enumerate_paths(&m, 6, |_| 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn four_path_weight_example() {
        // E[2^{-S_2}] on the symmetric walk = 1/4 * 1/4 + 1/2 * 1 + 1/4 * 4
        let m = StepModel::symmetric_unit_lattice();
        let lam = 2f64.ln();
        let v = enumerate_paths(&m, 2, |s| (-lam * s[1]).exp()).unwrap();
        assert_relative_eq!(v, 1.5625, epsilon = 1e-14);
    }

    #[test]
    fn guard_trips_on_large_instances() {
        let m = StepModel::symmetric_unit_lattice();
        assert!(matches!(
            enumerate_paths(&m, 40, |_| 1.0),
            Err(Error::EnumerationGuard { .. })
        ));
    }

    #[test]
    fn first_min_bookkeeping_matches_accumulator() {
        // sigma_n^- as computed by the streaming accumulator agrees with a
        // direct scan on every path of length 8
        let m = StepModel::symmetric_unit_lattice();
        let bad = enumerate_paths(&m, 8, |path| {
            let mut acc = crate::walk::PathAccumulator::new(0.0, None);
            let mut prev = 0.0;
            for &s in path {
                acc.push(s - prev);
                prev = s;
            }
            // direct first-argmin scan with S_0 = 0 participating
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
        assert_eq!(bad, 0.0);
    }

    #[test]
    fn duality_identity_small() {
        // E[e^{-l S_n} I_n^{-l}] = E[(1 + Ihat_{n-1})^{-l}] exactly, where
        // Ihat is the functional of the reversed-negated path
        let m = StepModel::lattice(1.0, vec![-1, 1], vec![0.3, 0.7]).unwrap();
        for n in [1usize, 3, 6] {
            for lam in [0.5f64, 1.0] {
                let lhs = enumerate_paths(&m, n, |path| {
                    let mut i = LogSumExp::new();
                    for &s in path {
                        i.push(-s);
                    }
                    (-lam * path[n - 1] - lam * i.log_value()).exp()
                })
                .unwrap();
                let rhs = enumerate_paths(&m, n, |path| {
                    let mut i = LogSumExp::new();
                    i.push(0.0);
                    for &s in path.iter().take(n - 1) {
                        i.push(s);
                    }
                    (-lam * i.log_value()).exp()
                })
                .unwrap();
                assert!((lhs - rhs).abs() < 1e-12, "n={n} lam={lam}: {lhs} vs {rhs}");
            }
        }
    }
}
