//! Renewal functions V (descending ladder) and V-hat (ascending ladder):
//! exact where structure permits, Monte Carlo over i.i.d. ladder chains
//! otherwise, plus the weighted Laplace integrals and the mu^(lambda)
//! probability measures built from them.

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, Kahan};
use crate::rngs::{stream_rng, Salt};
use crate::steps::StepModel;
use crate::walk::{sample_first_ladder_height, LadderDirection};
use rand::Rng;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// V: strict descending ladder heights.
    Descending,
    /// V-hat: strict ascending ladder heights (descending ladder of the dual).
    Ascending,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ExactSkipFree,
    ExactMeanFormula,
    MonteCarlo,
}

/// Gridded renewal function with V(0) = 1, non-decreasing values and a linear
/// tail model beyond the grid (V(x) = O(x)).
#[derive(Clone, Debug)]
pub struct RenewalTable {
    pub flavor: Flavor,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub provenance: Provenance,
    tail_slope: f64,
}

/// V(x) for a walk whose downward jumps are exactly one lattice step:
/// ladder heights are deterministic, V(x) = floor(x / spacing) + 1, and
/// V(x) = 0 for x < 0.
pub fn renewal_exact_skipfree(spacing: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        (x / spacing).floor() + 1.0
    }
}

impl RenewalTable {
    /// Exact staircase table for a skip-free walk, with pre-jump points so
    /// that linear interpolation reproduces the staircase.
    ///
    /// `points_per_step` interior points refine each flat segment for the
    /// quadrature consumers.
    pub fn exact_skip_free(spacing: f64, x_max: f64, points_per_step: usize) -> Self {
        let m = points_per_step.max(1);
        let steps = (x_max / spacing).floor() as usize;
        let delta = spacing * 1e-9;
        let mut grid = Vec::new();
        for k in 0..=steps {
            let x0 = k as f64 * spacing;
            for j in 0..m {
                let x = x0 + spacing * j as f64 / m as f64;
                if x <= x_max {
                    grid.push(x);
                }
            }
            let pre_jump = x0 + spacing - delta;
            if pre_jump <= x_max {
                grid.push(pre_jump);
            }
        }
        if *grid.last().unwrap() < x_max {
            grid.push(x_max);
        }
        let values: Vec<f64> = grid.iter().map(|&x| renewal_exact_skipfree(spacing, x)).collect();
        let stderr = vec![0.0; grid.len()];
        let tail_slope = 1.0 / spacing;
        RenewalTable {
            flavor: Flavor::Descending,
            grid,
            values,
            stderr,
            provenance: Provenance::ExactSkipFree,
            tail_slope,
        }
    }

    /// A constant table V = 1 on a uniform grid (the renewal function of a
    /// walk that never ladders in range); handy as a quadrature fixture.
    pub fn constant_one(x_max: f64, n_points: usize) -> Self {
        let n = n_points.max(2);
        let grid: Vec<f64> = (0..n).map(|i| x_max * i as f64 / (n - 1) as f64).collect();
        RenewalTable {
            flavor: Flavor::Descending,
            values: vec![1.0; n],
            stderr: vec![0.0; n],
            grid,
            provenance: Provenance::ExactMeanFormula,
            tail_slope: 0.0,
        }
    }

    pub fn x_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Fitted linear growth rate used beyond the grid.
    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    /// V at x: 0 below zero, linear interpolation on the grid, linear
    /// extrapolation with the fitted slope beyond it.
    pub fn value_at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let n = self.grid.len();
        if x >= self.grid[n - 1] {
            return self.values[n - 1] + self.tail_slope * (x - self.grid[n - 1]);
        }
        match self.grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
            Ok(i) => self.values[i],
            Err(i) => {
                // i >= 1 because grid[0] = 0 <= x
                let (x0, x1) = (self.grid[i - 1], self.grid[i]);
                let (v0, v1) = (self.values[i - 1], self.values[i]);
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Subadditivity-based envelope V(x + t) <= V(x) + V(t^+), used by the
    /// continuous-model rejection step in the h-transform sampler.
    pub fn envelope(&self, x: f64, t: f64) -> f64 {
        self.value_at(x) + if t > 0.0 { self.value_at(t) } else { 0.0 }
    }

    fn fit_tail_slope(grid: &[f64], values: &[f64]) -> f64 {
        let n = grid.len();
        let q = (3 * n) / 4;
        let xs = &grid[q..];
        let ys = &values[q..];
        if xs.len() < 2 {
            return 0.0;
        }
        linear_fit(xs, ys).0.max(0.0)
    }
}

/// Estimate V (or V-hat) by renewal counting over i.i.d. first-ladder-height
/// chains: V(x) = 1 + E #\{n >= 1 : H_1 + ... + H_n <= x\}.
///
/// The grid is uniform with at least 64 points; for lattice models every
/// lattice multiple in range is snapped in so staircase exactness is
/// preserved. Standard errors come from chain-level batching. More than 50%
/// censored chains is an error.
pub fn renewal_estimate(
    model: &StepModel,
    flavor: Flavor,
    x_max: f64,
    n_points: usize,
    n_chains: usize,
    cap: usize,
    seed: u64,
) -> Result<RenewalTable> {
    if !(x_max > 0.0) || n_chains < 2 {
        return Err(Error::Precondition("renewal_estimate needs x_max > 0, n_chains >= 2".into()));
    }
    let n_points = n_points.max(64);
    let mut grid: Vec<f64> = (0..n_points)
        .map(|i| x_max * i as f64 / (n_points - 1) as f64)
        .collect();
    if let Some((spacing, _, _)) = model.lattice_info() {
        let mut k = 0.0;
        while k * spacing <= x_max {
            grid.push(k * spacing);
            k += 1.0;
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() < spacing * 1e-12);
    }

    let direction = match flavor {
        Flavor::Descending => LadderDirection::Descending,
        Flavor::Ascending => LadderDirection::Ascending,
    };

    // one ladder chain: cumulative heights until the chain passes x_max
    let chains: Vec<Option<Vec<f64>>> = (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, Salt::Renewal, c as u64);
            let mut cum = Vec::new();
            let mut total = 0.0f64;
            while total <= x_max {
                match sample_first_ladder_height(model, direction, cap, &mut rng) {
                    Some(h) => {
                        total += h;
                        cum.push(total);
                    }
                    None => return None,
                }
            }
            Some(cum)
        })
        .collect();

    let censored = chains.iter().filter(|c| c.is_none()).count();
    if 2 * censored > n_chains {
        return Err(Error::LadderCensoring { censored, total: n_chains });
    }
    let kept: Vec<&Vec<f64>> = chains.iter().flatten().collect();
    let m = kept.len() as f64;

    let mut values = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    for &x in &grid {
        let mut sum = Kahan::new();
        let mut sumsq = 0.0f64;
        for chain in &kept {
            let cnt = chain.partition_point(|&c| c <= x) as f64;
            sum.add(cnt);
            sumsq += cnt * cnt;
        }
        let mean = sum.value() / m;
        let var = (sumsq / m - mean * mean).max(0.0) * m / (m - 1.0);
        values.push(1.0 + mean);
        stderr.push((var / m).sqrt());
    }
    let tail_slope = RenewalTable::fit_tail_slope(&grid, &values);
    Ok(RenewalTable {
        flavor,
        grid,
        values,
        stderr,
        provenance: Provenance::MonteCarlo,
        tail_slope,
    })
}

/// L_V^(lambda)(y) = int_0^y exp(-lambda z) V(z) dz by trapezoid quadrature on
/// the table grid, with a closed-form linear-growth tail beyond x_max.
///
/// Returns (value, error_estimate). lambda <= 0 with infinite y is an error.
pub fn laplace_weighted_integral(table: &RenewalTable, lambda: f64, y: f64) -> Result<(f64, f64)> {
    if y == 0.0 {
        return Ok((0.0, 0.0));
    }
    if !(y > 0.0) {
        return Err(Error::QuadratureDomain(format!("upper limit y = {y} must be >= 0")));
    }
    if y.is_infinite() && lambda <= 0.0 {
        return Err(Error::QuadratureDomain(
            "lambda must be positive when integrating to infinity".into(),
        ));
    }
    let mut acc = Kahan::new();
    let mut err = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    let mut prev_slope: Option<f64> = None;
    for &x in table.grid.iter() {
        let xc = x.min(y);
        let fv = (-lambda * xc).exp() * table.value_at(xc);
        if let Some((x0, f0)) = prev {
            if xc > x0 {
                let h = xc - x0;
                acc.add(0.5 * h * (f0 + fv));
                let slope = (fv - f0) / h;
                if let Some(s0) = prev_slope {
                    // second-difference curvature proxy for the trapezoid error
                    err += (slope - s0).abs() * h * h / 12.0;
                }
                prev_slope = Some(slope);
            }
        }
        prev = Some((xc, fv));
        if x >= y {
            break;
        }
    }
    // analytic tail: V(z) ~ V(x_max) + slope (z - x_max)
    let x_max = table.x_max();
    if y > x_max {
        let a = table.values[table.grid.len() - 1];
        let b = table.tail_slope();
        // int (a + b(z - x_max)) e^{-lambda z} dz with antiderivative
        // A(z) = -((a + b(z - x_max))/lambda + b/lambda^2) e^{-lambda z}
        let anti = |z: f64| -(((a + b * (z - x_max)) / lambda) + b / (lambda * lambda)) * (-lambda * z).exp();
        let upper = if y.is_infinite() { 0.0 } else { anti(y) };
        acc.add(upper - anti(x_max));
    }
    Ok((acc.value(), err))
}

/// Inverse-CDF sampler for mu_V^(lambda)(dx) proportional to exp(-lambda x) V(x) dx on
/// [0, inf), built from the table density (piecewise linear on the grid) plus
/// the analytic linear tail.
#[derive(Clone, Debug)]
pub struct MuSampler {
    grid: Vec<f64>,
    density: Vec<f64>,
    /// cumulative mass up to grid[i], normalized
    cum: Vec<f64>,
    /// tail parameters: density (a + b (z - x_max)) e^{-lambda z} / total
    lambda: f64,
    tail_a: f64,
    tail_b: f64,
    total: f64,
}

impl MuSampler {
    pub fn new(table: &RenewalTable, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::QuadratureDomain("mu sampler requires lambda > 0".into()));
        }
        let density: Vec<f64> = table
            .grid
            .iter()
            .zip(&table.values)
            .map(|(&x, &v)| (-lambda * x).exp() * v)
            .collect();
        let mut cum = Vec::with_capacity(table.grid.len());
        let mut acc = Kahan::new();
        cum.push(0.0);
        for i in 1..table.grid.len() {
            let h = table.grid[i] - table.grid[i - 1];
            acc.add(0.5 * h * (density[i] + density[i - 1]));
            cum.push(acc.value());
        }
        let x_max = table.x_max();
        let a = *table.values.last().unwrap();
        let b = table.tail_slope();
        let tail_mass = (a / lambda + b / (lambda * lambda)) * (-lambda * x_max).exp();
        let total = acc.value() + tail_mass;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::QuadratureDomain(format!("mu normalization {total} not positive")));
        }
        Ok(MuSampler {
            grid: table.grid.clone(),
            density,
            cum,
            lambda,
            tail_a: a,
            tail_b: b,
            total,
        })
    }

    /// Normalized CDF at grid end (tail excluded); 1 - this is the tail mass.
    pub fn grid_mass(&self) -> f64 {
        self.cum.last().unwrap() / self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen::<f64>() * self.total;
        let n = self.grid.len();
        if u >= *self.cum.last().unwrap() {
            return self.sample_tail(u - self.cum.last().unwrap());
        }
        let i = match self.cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
            Ok(i) => i.max(1),
            Err(i) => i.max(1).min(n - 1),
        };
        // invert the quadratic cell CDF: density linear between g0 and g1
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let (g0, g1) = (self.density[i - 1], self.density[i]);
        let h = x1 - x0;
        let rem = u - self.cum[i - 1];
        // solve g0 t + (g1-g0) t^2 / (2h) = rem for t in [0, h]
        let a = 0.5 * (g1 - g0) / h;
        let t = if a.abs() < 1e-300 {
            if g0 > 0.0 {
                rem / g0
            } else {
                0.5 * h
            }
        } else {
            let disc = (g0 * g0 + 4.0 * a * rem).max(0.0);
            (-g0 + disc.sqrt()) / (2.0 * a)
        };
        x0 + t.clamp(0.0, h)
    }

    fn sample_tail(&self, target: f64) -> f64 {
        // invert int_{x_max}^z (a + b(t - x_max)) e^{-lambda t} dt = target
        let x_max = *self.grid.last().unwrap();
        let (a, b, l) = (self.tail_a, self.tail_b, self.lambda);
        let anti = |z: f64| -(((a + b * (z - x_max)) / l) + b / (l * l)) * (-l * z).exp();
        let base = anti(x_max);
        let g = |z: f64| anti(z) - base - target;
        // bracket then bisect; the tail CDF is monotone with total mass known
        let mut lo = x_max;
        let mut hi = x_max + 1.0 / l;
        while g(hi) < 0.0 && hi - x_max < 1e6 / l {
            hi = x_max + 2.0 * (hi - x_max);
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// One draw from mu_V^(lambda).
pub fn mu_sampler<R: Rng + ?Sized>(table: &RenewalTable, lambda: f64, rng: &mut R) -> Result<f64> {
    Ok(MuSampler::new(table, lambda)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs::{stream_rng, Salt};
    use approx::assert_relative_eq;

    #[test]
    fn skipfree_values() {
        assert_eq!(renewal_exact_skipfree(1.0, 0.0), 1.0);
        assert_eq!(renewal_exact_skipfree(1.0, 3.5), 4.0);
        assert_eq!(renewal_exact_skipfree(1.0, -0.1), 0.0);
        assert_eq!(renewal_exact_skipfree(0.5, 1.25), 3.0);
    }

    #[test]
    fn exact_table_reproduces_staircase() {
        let t = RenewalTable::exact_skip_free(1.0, 12.0, 8);
        for &x in &[0.0, 0.25, 1.0, 3.5, 7.999, 11.5] {
            assert_eq!(t.value_at(x), renewal_exact_skipfree(1.0, x), "x={x}");
        }
        assert_eq!(t.value_at(-1.0), 0.0);
        // non-decreasing, V(0)=1
        assert_eq!(t.values[0], 1.0);
        assert!(t.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn harmonicity_on_exact_skip_free_rows() {
        // E[V(x + X); x + X >= 0] = V(x) exactly for the symmetric +-1 walk
        let t = RenewalTable::exact_skip_free(1.0, 64.0, 1);
        for x in 0..20 {
            let xf = x as f64;
            let lhs = 0.5 * t.value_at(xf + 1.0) + 0.5 * t.value_at(xf - 1.0);
            assert!((lhs - t.value_at(xf)).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn estimate_matches_skipfree_exact() {
        let m = StepModel::symmetric_unit_lattice();
        let t = renewal_estimate(&m, Flavor::Descending, 16.0, 64, 400, 1 << 20, 9).unwrap();
        for (i, &x) in t.grid.iter().enumerate() {
            let exact = renewal_exact_skipfree(1.0, x);
            let tol = 3.0 * t.stderr[i] + 1e-9;
            assert!(
                (t.values[i] - exact).abs() <= tol,
                "x={x}: {} vs {exact} (tol {tol})",
                t.values[i]
            );
        }
        assert_eq!(t.values[0], 1.0);
        assert!(t.values.windows(2).all(|w| w[1] >= w[0]), "V must be non-decreasing");
        assert!(t.values.iter().all(|&v| v >= 1.0), "V >= 1 on [0, inf)");
    }

    #[test]
    fn ascending_flavor_uses_upward_ladders() {
        // strongly downward-drifting walk rarely ladders up; ascending chains censor
        let m = StepModel::two_point(1.0, -1.0, 0.05).unwrap();
        let r = renewal_estimate(&m, Flavor::Ascending, 8.0, 64, 50, 2_000, 9);
        assert!(matches!(r, Err(Error::LadderCensoring { .. })));
        // and the symmetric walk gives the same staircase for both flavors
        let m = StepModel::symmetric_unit_lattice();
        let t = renewal_estimate(&m, Flavor::Ascending, 8.0, 64, 200, 1 << 20, 10).unwrap();
        for (i, &x) in t.grid.iter().enumerate() {
            let exact = renewal_exact_skipfree(1.0, x);
            assert!((t.values[i] - exact).abs() <= 3.0 * t.stderr[i] + 1e-9);
        }
    }

    #[test]
    fn weighted_integral_constant_table() {
        let t = RenewalTable::constant_one(40.0, 4096);
        let (v, _) = laplace_weighted_integral(&t, 1.0, f64::INFINITY).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-5);
        let (v0, _) = laplace_weighted_integral(&t, 1.0, 0.0).unwrap();
        assert_eq!(v0, 0.0);
    }

    #[test]
    fn weighted_integral_staircase_geometric_series() {
        // sum_{k>=0} (k+1)(e^{-k} - e^{-k-1}) = 1/(1 - e^{-1})
        let t = RenewalTable::exact_skip_free(1.0, 45.0, 64);
        let (v, err) = laplace_weighted_integral(&t, 1.0, f64::INFINITY).unwrap();
        let exact = 1.0 / (1.0 - (-1f64).exp());
        assert!((v - exact).abs() < 5e-4, "{v} vs {exact}, err est {err}");
    }

    #[test]
    fn weighted_integral_domain_errors() {
        let t = RenewalTable::constant_one(10.0, 64);
        assert!(laplace_weighted_integral(&t, -1.0, f64::INFINITY).is_err());
        assert!(laplace_weighted_integral(&t, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn mu_sampler_exponential_ks() {
        // V = 1 makes mu the Exp(1) law
        let t = RenewalTable::constant_one(40.0, 4096);
        let s = MuSampler::new(&t, 1.0).unwrap();
        let mut rng = stream_rng(3, Salt::MuSampler, 0);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = crate::stats::ks_statistic_sorted(&draws, |x| 1.0 - (-x).exp());
        let crit = 1.628 / (n as f64).sqrt();
        assert!(ks < crit, "ks {ks} crit {crit}");
        assert!(draws.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn mu_sampler_staircase_mean() {
        // closed-form mean of the staircase-exponential density via series
        let t = RenewalTable::exact_skip_free(1.0, 45.0, 64);
        let s = MuSampler::new(&t, 1.0).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..200u32 {
            let kf = k as f64;
            let e0 = (-kf).exp();
            let e1 = (-(kf + 1.0)).exp();
            den += (kf + 1.0) * (e0 - e1);
            // int_k^{k+1} z e^{-z} dz = (k+1) e^{-k} - (k+2) e^{-k-1}
            num += (kf + 1.0) * ((kf + 1.0) * e0 - (kf + 2.0) * e1);
        }
        let exact_mean = num / den;
        let mut rng = stream_rng(3, Salt::MuSampler, 1);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - exact_mean).abs() < 3.0 * se + 5e-4, "{mean} vs {exact_mean}");
    }

    #[test]
    fn mu_sampler_normalization_reaches_one() {
        let t = RenewalTable::exact_skip_free(1.0, 45.0, 32);
        let s = MuSampler::new(&t, 1.0).unwrap();
        assert!(s.grid_mass() <= 1.0 && s.grid_mass() > 1.0 - 1e-9);
    }
}
