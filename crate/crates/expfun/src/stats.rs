//! Statistical test helpers shared by the verification suites: KS statistics
//! against exact CDFs, two-sample KS, and Pearson chi-square utilities.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// One-sample KS statistic for pre-sorted draws against a continuous CDF.
pub fn ks_statistic_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// One-sample KS statistic sup |F_n - F| for laws with atoms: the ECDF jump
/// at each distinct value is compared against the CDF and its left limit.
pub fn ks_statistic_with_left<F, G>(sorted: &[f64], cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0usize;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let lo = i as f64 / n;
        let hi = j as f64 / n;
        d = d.max((cdf(x) - hi).abs()).max((cdf_left(x) - lo).abs());
        i = j;
    }
    d
}

/// Two-sample KS statistic (ECDF sup-distance); conservative for discrete
/// laws under ties.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic p-value of the (scaled) KS statistic via the Kolmogorov series.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let lambda = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    let mut p = 0.0f64;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Effective sample size for the two-sample KS test.
pub fn ks_two_sample_n_eff(n: usize, m: usize) -> f64 {
    (n * m) as f64 / (n + m) as f64
}

/// Pearson chi-square statistic of observed counts against expected counts.
/// Cells with expected count zero must have zero observed count.
pub fn chi_square_stat(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| if e > 0.0 { (o - e) * (o - e) / e } else { 0.0 })
        .sum()
}

/// Two-sample Pearson chi-square over shared cells: each sample is tested
/// against the pooled proportions. Returns (statistic, degrees of freedom).
pub fn chi_square_two_sample(counts_a: &[f64], counts_b: &[f64]) -> (f64, usize) {
    assert_eq!(counts_a.len(), counts_b.len());
    let na: f64 = counts_a.iter().sum();
    let nb: f64 = counts_b.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&a, &b) in counts_a.iter().zip(counts_b) {
        let pooled = (a + b) / (na + nb);
        if pooled > 0.0 {
            let ea = na * pooled;
            let eb = nb * pooled;
            stat += (a - ea) * (a - ea) / ea + (b - eb) * (b - eb) / eb;
            cells += 1;
        }
    }
    (stat, cells.saturating_sub(1))
}

/// Upper quantile of the chi-square law: P(X > value) = alpha.
pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_uniform_self_test() {
        let n = 10_000;
        let sorted: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic_sorted(&sorted, |x| x);
        assert!(d < 0.001);
    }

    #[test]
    fn chi2_critical_values() {
        // classic table entries
        assert!((chi_square_critical(1, 0.01) - 6.634897).abs() < 1e-4);
        assert!((chi_square_critical(2, 0.01) - 9.21034).abs() < 1e-4);
    }

    #[test]
    fn two_sample_ks_identical_laws() {
        let mut a: Vec<f64> = (0..1000).map(|i| (i % 10) as f64).collect();
        let mut b: Vec<f64> = (0..1000).map(|i| ((i + 3) % 10) as f64).collect();
        let d = ks_two_sample(&mut a, &mut b);
        assert!(d < 1e-12);
    }
}
