//! Step-distribution families with exact analytics where available and safe
//! sampling everywhere.
//!
//! Four families are supported: lattice laws (atoms on `spacing * Z`), Gaussian,
//! two-point laws and the shifted Pareto family
//! `X = scale * (Pareto(beta) - 1) + shift`, which has
//! `P(X > x) = (1 + (x - shift)/scale)^{-beta}` for `x >= shift` and is the
//! canonical heavy-tail family here (its slowly varying tail factor is a
//! constant).

use crate::error::{Error, Result};
use crate::numeric::adaptive_simpson;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum StepModel {
    Lattice {
        spacing: f64,
        offsets: Vec<i64>,
        probs: Vec<f64>,
    },
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    TwoPoint {
        up: f64,
        down: f64,
        p_up: f64,
    },
    ShiftedPareto {
        beta: f64,
        scale: f64,
        shift: f64,
    },
}

impl StepModel {
    /// Lattice law with atoms at `spacing * offsets[i]`, sorted ascending.
    pub fn lattice(spacing: f64, offsets: Vec<i64>, probs: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidModel(format!("spacing {spacing} must be positive")));
        }
        if offsets.is_empty() || offsets.len() != probs.len() {
            return Err(Error::InvalidModel(
                "offsets and probs must be non-empty and of equal length".into(),
            ));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidModel("probabilities must be >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "probabilities sum to {sum}, off by more than {PROB_SUM_TOL}"
            )));
        }
        let mut pairs: Vec<(i64, f64)> = offsets.into_iter().zip(probs).collect();
        pairs.sort_by_key(|&(o, _)| o);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidModel("duplicate lattice offsets".into()));
        }
        let (offsets, probs) = pairs.into_iter().unzip();
        Ok(StepModel::Lattice { spacing, offsets, probs })
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidModel(format!("gaussian(mu={mu}, sigma={sigma})")));
        }
        Ok(StepModel::Gaussian { mu, sigma })
    }

    pub fn two_point(up: f64, down: f64, p_up: f64) -> Result<Self> {
        if !(up > 0.0) || !(down < 0.0) || !(0.0..=1.0).contains(&p_up) {
            return Err(Error::InvalidModel(format!(
                "two_point(up={up}, down={down}, p_up={p_up})"
            )));
        }
        Ok(StepModel::TwoPoint { up, down, p_up })
    }

    pub fn shifted_pareto(beta: f64, scale: f64, shift: f64) -> Result<Self> {
        if !(beta > 1.0) {
            return Err(Error::InvalidModel(format!("pareto tail index beta={beta} must be > 1")));
        }
        if !(scale > 0.0) || !shift.is_finite() {
            return Err(Error::InvalidModel(format!("pareto(scale={scale}, shift={shift})")));
        }
        Ok(StepModel::ShiftedPareto { beta, scale, shift })
    }

    /// The symmetric unit lattice walk, used throughout the self tests.
    pub fn symmetric_unit_lattice() -> Self {
        StepModel::lattice(1.0, vec![-1, 1], vec![0.5, 0.5]).unwrap()
    }

    /// One draw distributed as X.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            StepModel::Lattice { spacing, offsets, probs } => {
                let mut u: f64 = rng.gen();
                for (&o, &p) in offsets.iter().zip(probs) {
                    if u < p {
                        return o as f64 * spacing;
                    }
                    u -= p;
                }
                *offsets.last().unwrap() as f64 * spacing
            }
            StepModel::Gaussian { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                mu + sigma * z
            }
            StepModel::TwoPoint { up, down, p_up } => {
                if rng.gen::<f64>() < *p_up {
                    *up
                } else {
                    *down
                }
            }
            StepModel::ShiftedPareto { beta, scale, shift } => {
                let u = 1.0 - rng.gen::<f64>(); // (0, 1]
                scale * (u.powf(-1.0 / beta) - 1.0) + shift
            }
        }
    }

    /// Laplace transform E[exp(lambda X)] as an extended real.
    ///
    /// Exact for lattice / Gaussian / two-point laws. The shifted Pareto has
    /// positive Laplace domain {0}; for lambda < 0 the value is computed by
    /// quadrature to absolute tolerance 1e-10, and +inf is returned for
    /// lambda > 0 so the tilt solver can probe the domain boundary.
    pub fn laplace(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 1.0;
        }
        match self {
            StepModel::Lattice { spacing, offsets, probs } => offsets
                .iter()
                .zip(probs)
                .map(|(&o, &p)| p * (lambda * o as f64 * spacing).exp())
                .sum(),
            StepModel::Gaussian { mu, sigma } => {
                (mu * lambda + 0.5 * sigma * sigma * lambda * lambda).exp()
            }
            StepModel::TwoPoint { up, down, p_up } => {
                p_up * (lambda * up).exp() + (1.0 - p_up) * (lambda * down).exp()
            }
            StepModel::ShiftedPareto { beta, scale, shift } => {
                if lambda > 0.0 {
                    return f64::INFINITY;
                }
                // E[e^{lambda X}] = e^{lambda(shift-scale)} * beta
                //                   * int_0^1 e^{lambda*scale/u} u^{beta-1} du
                let s = lambda * scale;
                let (integral, _) =
                    adaptive_simpson(&|u: f64| if u == 0.0 { 0.0 } else { (s / u).exp() * u.powf(beta - 1.0) }, 0.0, 1.0, 1e-13);
                (lambda * (shift - scale)).exp() * beta * integral
            }
        }
    }

    /// d/dlambda of the Laplace transform, for the families with a full domain.
    pub(crate) fn laplace_deriv(&self, lambda: f64) -> Option<f64> {
        match self {
            StepModel::Lattice { spacing, offsets, probs } => Some(
                offsets
                    .iter()
                    .zip(probs)
                    .map(|(&o, &p)| {
                        let x = o as f64 * spacing;
                        p * x * (lambda * x).exp()
                    })
                    .sum(),
            ),
            StepModel::Gaussian { mu, sigma } => {
                Some((mu + sigma * sigma * lambda) * self.laplace(lambda))
            }
            StepModel::TwoPoint { up, down, p_up } => Some(
                p_up * up * (lambda * up).exp() + (1.0 - p_up) * down * (lambda * down).exp(),
            ),
            StepModel::ShiftedPareto { .. } => None,
        }
    }

    /// Second derivative of the Laplace transform where closed forms exist.
    pub(crate) fn laplace_deriv2(&self, lambda: f64) -> Option<f64> {
        match self {
            StepModel::Lattice { spacing, offsets, probs } => Some(
                offsets
                    .iter()
                    .zip(probs)
                    .map(|(&o, &p)| {
                        let x = o as f64 * spacing;
                        p * x * x * (lambda * x).exp()
                    })
                    .sum(),
            ),
            StepModel::Gaussian { mu, sigma } => {
                let m = mu + sigma * sigma * lambda;
                Some((sigma * sigma + m * m) * self.laplace(lambda))
            }
            StepModel::TwoPoint { up, down, p_up } => Some(
                p_up * up * up * (lambda * up).exp()
                    + (1.0 - p_up) * down * down * (lambda * down).exp(),
            ),
            StepModel::ShiftedPareto { .. } => None,
        }
    }

    /// P(X >= x), exact for every variant.
    pub fn tail_prob(&self, x: f64) -> f64 {
        match self {
            StepModel::Lattice { spacing, offsets, probs } => offsets
                .iter()
                .zip(probs)
                .filter(|&(&o, _)| o as f64 * spacing >= x)
                .map(|(_, &p)| p)
                .sum(),
            StepModel::Gaussian { mu, sigma } => {
                0.5 * erfc((x - mu) / (sigma * std::f64::consts::SQRT_2))
            }
            StepModel::TwoPoint { up, down, p_up } => {
                if x <= *down {
                    1.0
                } else if x <= *up {
                    *p_up
                } else {
                    0.0
                }
            }
            StepModel::ShiftedPareto { beta, scale, shift } => {
                if x <= *shift {
                    1.0
                } else {
                    (1.0 + (x - shift) / scale).powf(-beta)
                }
            }
        }
    }

    /// P(X <= x), used by the distribution self tests.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            StepModel::Lattice { spacing, offsets, probs } => offsets
                .iter()
                .zip(probs)
                .filter(|&(&o, _)| o as f64 * spacing <= x)
                .map(|(_, &p)| p)
                .sum(),
            StepModel::Gaussian { mu, sigma } => {
                0.5 * erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2))
            }
            StepModel::TwoPoint { up, down, p_up } => {
                if x < *down {
                    0.0
                } else if x < *up {
                    1.0 - p_up
                } else {
                    1.0
                }
            }
            StepModel::ShiftedPareto { .. } => 1.0 - self.tail_prob(x),
        }
    }

    /// E[X], exact per variant.
    pub fn mean(&self) -> f64 {
        match self {
            StepModel::Lattice { spacing, offsets, probs } => offsets
                .iter()
                .zip(probs)
                .map(|(&o, &p)| p * o as f64 * spacing)
                .sum(),
            StepModel::Gaussian { mu, .. } => *mu,
            StepModel::TwoPoint { up, down, p_up } => p_up * up + (1.0 - p_up) * down,
            StepModel::ShiftedPareto { beta, scale, shift } => shift + scale / (beta - 1.0),
        }
    }

    /// A draw from the law of X conditioned on {X >= x}.
    ///
    /// Inverse transform for the lattice / two-point / Pareto families,
    /// rejection with an exponential envelope for the Gaussian. `x = -inf`
    /// reproduces the unconditioned law.
    pub fn sample_conditional_tail<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        if x == f64::NEG_INFINITY {
            return Ok(self.sample(rng));
        }
        let tail = self.tail_prob(x);
        if tail <= 0.0 {
            return Err(Error::ZeroProbabilityTail { threshold: x });
        }
        match self {
            StepModel::Lattice { spacing, offsets, probs } => {
                let mut u: f64 = rng.gen::<f64>() * tail;
                for (&o, &p) in offsets.iter().zip(probs) {
                    let v = o as f64 * spacing;
                    if v >= x {
                        if u < p {
                            return Ok(v);
                        }
                        u -= p;
                    }
                }
                Ok(*offsets.last().unwrap() as f64 * spacing)
            }
            StepModel::TwoPoint { up, down, p_up } => {
                if x <= *down {
                    let mut u: f64 = rng.gen();
                    u *= tail;
                    Ok(if u < *p_up { *up } else { *down })
                } else {
                    Ok(*up)
                }
            }
            StepModel::Gaussian { mu, sigma } => {
                let t = (x - mu) / sigma;
                Ok(mu + sigma * sample_std_normal_tail(t, rng))
            }
            StepModel::ShiftedPareto { beta, scale, shift } => {
                // conditional tail is again Pareto-shaped with enlarged scale
                let t = x.max(*shift);
                let u = 1.0 - rng.gen::<f64>();
                Ok((t - shift + scale) * u.powf(-1.0 / beta) + shift - scale)
            }
        }
    }

    /// The law of -X. Closed form except for the shifted Pareto, whose
    /// negation leaves the family.
    pub fn negate(&self) -> Result<StepModel> {
        match self {
            StepModel::Lattice { spacing, offsets, probs } => StepModel::lattice(
                *spacing,
                offsets.iter().map(|&o| -o).collect(),
                probs.clone(),
            ),
            StepModel::Gaussian { mu, sigma } => StepModel::gaussian(-mu, *sigma),
            StepModel::TwoPoint { up, down, p_up } => {
                StepModel::two_point(-down, -up, 1.0 - p_up)
            }
            StepModel::ShiftedPareto { .. } => Err(Error::Unsupported(
                "negation of a shifted Pareto leaves the declared families".into(),
            )),
        }
    }

    /// Heavy-tail flag, declared by the variant rather than inferred.
    pub fn is_heavy_tailed(&self) -> bool {
        matches!(self, StepModel::ShiftedPareto { .. })
    }

    /// Regular-variation index of the right tail, if heavy.
    pub fn tail_index(&self) -> Option<f64> {
        match self {
            StepModel::ShiftedPareto { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            StepModel::Lattice { offsets, probs, .. } => offsets.iter().zip(probs).all(|(&o, &p)| {
                offsets
                    .iter()
                    .position(|&q| q == -o)
                    .map(|j| (probs[j] - p).abs() <= PROB_SUM_TOL)
                    .unwrap_or(false)
            }),
            StepModel::Gaussian { mu, .. } => *mu == 0.0,
            StepModel::TwoPoint { up, down, p_up } => {
                (up + down).abs() <= PROB_SUM_TOL && (p_up - 0.5).abs() <= PROB_SUM_TOL
            }
            StepModel::ShiftedPareto { .. } => false,
        }
    }

    pub fn lattice_info(&self) -> Option<(f64, &[i64], &[f64])> {
        match self {
            StepModel::Lattice { spacing, offsets, probs } => Some((*spacing, offsets, probs)),
            _ => None,
        }
    }

    /// Downward moves are exactly one lattice unit: ladder heights are
    /// deterministic and V is exact.
    pub fn is_skip_free_down(&self) -> bool {
        match self {
            StepModel::Lattice { offsets, probs, .. } => {
                offsets.iter().zip(probs).all(|(&o, &p)| o >= -1 || p == 0.0)
                    && offsets.iter().zip(probs).any(|(&o, &p)| o == -1 && p > 0.0)
            }
            _ => false,
        }
    }

    pub fn is_skip_free_up(&self) -> bool {
        match self {
            StepModel::Lattice { offsets, probs, .. } => {
                offsets.iter().zip(probs).all(|(&o, &p)| o <= 1 || p == 0.0)
                    && offsets.iter().zip(probs).any(|(&o, &p)| o == 1 && p > 0.0)
            }
            _ => false,
        }
    }
}

/// Standard normal draw conditioned on {Z >= t}.
///
/// For t <= 0 plain resampling has acceptance >= 1/2; for t > 0 this is
/// Robert's translated-exponential rejection sampler, whose acceptance is
/// bounded away from zero uniformly in t.
fn sample_std_normal_tail<R: Rng + ?Sized>(t: f64, rng: &mut R) -> f64 {
    if t <= 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= t {
                return z;
            }
        }
    }
    let alpha = 0.5 * (t + (t * t + 4.0).sqrt());
    loop {
        let e: f64 = -(1.0 - rng.gen::<f64>()).ln() / alpha;
        let z = t + e;
        let w = z - alpha;
        if rng.gen::<f64>() <= (-0.5 * w * w).exp() {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs::{stream_rng, Salt};
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_two_point_always_up() {
        let m = StepModel::two_point(1.0, -1.0, 1.0).unwrap();
        let mut rng = stream_rng(1, Salt::Scratch, 0);
        for _ in 0..100 {
            assert_eq!(m.sample(&mut rng), 1.0);
        }
    }

    #[test]
    fn lattice_sample_mean_symmetric() {
        let m = StepModel::symmetric_unit_lattice();
        let mut rng = stream_rng(1, Salt::Scratch, 1);
        let n = 1_000_000;
        let mean = (0..n).map(|_| m.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4e-3, "mean {mean}");
    }

    #[test]
    fn pareto_sample_tail_frequency() {
        // P(X > 0) = (1 + 2)^{-3} = 1/27 for beta=3, scale=1, shift=-2
        let m = StepModel::shifted_pareto(3.0, 1.0, -2.0).unwrap();
        let mut rng = stream_rng(1, Salt::Scratch, 2);
        let n = 1_000_000usize;
        let hits = (0..n).filter(|_| m.sample(&mut rng) > 0.0).count() as f64;
        let p = 1.0 / 27.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn laplace_at_zero_is_one() {
        for m in [
            StepModel::symmetric_unit_lattice(),
            StepModel::gaussian(-1.0, 2.0).unwrap(),
            StepModel::two_point(2.0, -1.0, 0.25).unwrap(),
            StepModel::shifted_pareto(3.0, 1.0, -2.0).unwrap(),
        ] {
            assert_eq!(m.laplace(0.0), 1.0);
        }
    }

    #[test]
    fn laplace_gaussian_closed_form() {
        let m = StepModel::gaussian(-1.0, 1.0).unwrap();
        assert_relative_eq!(m.laplace(1.0), (-0.5f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn laplace_two_point_example() {
        let m = StepModel::two_point(1.0, -1.0, 0.5).unwrap();
        assert_relative_eq!(m.laplace(2f64.ln()), 1.25, max_relative = 1e-14);
    }

    #[test]
    fn laplace_pareto_infinite_for_positive_lambda() {
        let m = StepModel::shifted_pareto(3.0, 1.0, -2.0).unwrap();
        assert!(m.laplace(1e-6).is_infinite());
        assert!(m.laplace(2.0).is_infinite());
    }

    #[test]
    fn laplace_pareto_negative_lambda_vs_mc() {
        // quadrature vs a independent Monte Carlo check
        let m = StepModel::shifted_pareto(3.0, 1.0, -2.0).unwrap();
        let lambda = -0.7;
        let mut rng = stream_rng(9, Salt::Scratch, 3);
        let n = 2_000_000usize;
        let mc = (0..n).map(|_| (lambda * m.sample(&mut rng)).exp()).sum::<f64>() / n as f64;
        let exact = m.laplace(lambda);
        assert!(
            (mc - exact).abs() < 4.0 * 0.002,
            "quadrature {exact} vs mc {mc}"
        );
    }

    #[test]
    fn tail_probs_exact() {
        let lat = StepModel::symmetric_unit_lattice();
        assert_eq!(lat.tail_prob(0.0), 0.5);
        assert_eq!(lat.tail_prob(1.0), 0.5);
        assert_eq!(lat.tail_prob(1.5), 0.0);
        let par = StepModel::shifted_pareto(3.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(par.tail_prob(1.0), 0.125, max_relative = 1e-14);
        let g = StepModel::gaussian(0.0, 1.0).unwrap();
        assert_relative_eq!(g.tail_prob(0.0), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn means_exact() {
        let tp = StepModel::two_point(2.0, -1.0, 1.0 / 3.0).unwrap();
        assert!(tp.mean().abs() < 1e-15);
        let par = StepModel::shifted_pareto(3.0, 1.0, -2.0).unwrap();
        assert_relative_eq!(par.mean(), -1.5, max_relative = 1e-14);
        assert_eq!(StepModel::gaussian(-2.0, 1.0).unwrap().mean(), -2.0);
    }

    #[test]
    fn pareto_mean_matches_quadrature_oracle() {
        // E[X] = int_0^1 quantile(u) du with quantile(u) = scale((1-u)^{-1/b}-1)+shift
        let (beta, scale, shift) = (3.0, 1.0, -0.25);
        let m = StepModel::shifted_pareto(beta, scale, shift).unwrap();
        let (q, _) = adaptive_simpson(
            &|u: f64| scale * ((1.0 - u).max(1e-300).powf(-1.0 / beta) - 1.0) + shift,
            0.0,
            1.0 - 1e-9,
            1e-10,
        );
        // the clipped upper sliver contributes O(eps^{1-1/beta})
        assert!((m.mean() - q).abs() < 1e-5, "mean {} vs quadrature {q}", m.mean());
    }

    #[test]
    fn conditional_tail_pareto_ratio() {
        // P(X > 3 | X >= 1) = (1+3)^{-3} / (1+1)^{-3} = 1/8 for shift=0
        let m = StepModel::shifted_pareto(3.0, 1.0, 0.0).unwrap();
        let mut rng = stream_rng(5, Salt::Scratch, 4);
        let n = 400_000usize;
        let hits = (0..n)
            .filter(|_| m.sample_conditional_tail(1.0, &mut rng).unwrap() > 3.0)
            .count() as f64;
        let p = 0.125;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn conditional_tail_lattice_single_atom() {
        let m = StepModel::symmetric_unit_lattice();
        let mut rng = stream_rng(5, Salt::Scratch, 5);
        for _ in 0..50 {
            assert_eq!(m.sample_conditional_tail(1.0, &mut rng).unwrap(), 1.0);
        }
    }

    #[test]
    fn conditional_tail_zero_probability_errors() {
        let m = StepModel::symmetric_unit_lattice();
        let mut rng = stream_rng(5, Salt::Scratch, 6);
        assert!(matches!(
            m.sample_conditional_tail(2.0, &mut rng),
            Err(Error::ZeroProbabilityTail { .. })
        ));
    }

    #[test]
    fn conditional_tail_gaussian_frequency() {
        let m = StepModel::gaussian(0.0, 1.0).unwrap();
        let mut rng = stream_rng(5, Salt::Scratch, 7);
        let x = 2.0;
        // P(X > 3 | X >= 2)
        let p = m.tail_prob(3.0) / m.tail_prob(2.0);
        let n = 400_000usize;
        let hits = (0..n)
            .filter(|_| m.sample_conditional_tail(x, &mut rng).unwrap() > 3.0)
            .count() as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn negate_closed_forms() {
        let m = StepModel::lattice(1.0, vec![-1, 2], vec![0.75, 0.25]).unwrap();
        let n = m.negate().unwrap();
        assert_eq!(n.tail_prob(1.0), 0.75);
        let tp = StepModel::two_point(2.0, -1.0, 0.25).unwrap().negate().unwrap();
        assert_relative_eq!(tp.mean(), -(0.25 * 2.0 - 0.75), max_relative = 1e-14);
        assert!(StepModel::shifted_pareto(3.0, 1.0, 0.0).unwrap().negate().is_err());
    }

    #[test]
    fn model_validation() {
        assert!(StepModel::lattice(1.0, vec![-1, 1], vec![0.5, 0.6]).is_err());
        assert!(StepModel::lattice(0.0, vec![0], vec![1.0]).is_err());
        assert!(StepModel::shifted_pareto(1.0, 1.0, 0.0).is_err());
        assert!(StepModel::two_point(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn skip_free_flags() {
        assert!(StepModel::symmetric_unit_lattice().is_skip_free_down());
        assert!(StepModel::symmetric_unit_lattice().is_skip_free_up());
        let m = StepModel::lattice(1.0, vec![-2, 1], vec![0.5, 0.5]).unwrap();
        assert!(!m.is_skip_free_down());
        assert!(m.is_skip_free_up());
    }
}
