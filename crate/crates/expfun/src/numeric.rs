//! Small numeric kernels shared across the crate: log-domain accumulation,
//! compensated summation and adaptive quadrature.

/// log(exp(a) + exp(b)) without overflow.
#[inline(always)]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Streaming log-sum-exp accumulator: holds log(sum_i exp(x_i)) for a stream
/// of exponents without ever materializing exp(x_i).
///
/// The running maximum is tracked so that the internal mantissa sum stays in
/// [1, n]; pushing is one `exp` per term.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    acc: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    #[inline]
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }

    /// Add a term exp(x) to the sum.
    #[inline(always)]
    pub fn push(&mut self, x: f64) {
        if x <= self.max {
            self.acc += (x - self.max).exp();
        } else {
            // rescale: acc * e^{max-x} + 1
            self.acc = if self.max == f64::NEG_INFINITY {
                1.0
            } else {
                self.acc * (self.max - x).exp() + 1.0
            };
            self.max = x;
        }
    }

    /// log of the accumulated sum; -inf for the empty sum.
    #[inline]
    pub fn log_value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

/// Neumaier compensated summation. Used where "extended precision
/// accumulation" is required by the oracles.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline(always)]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Adaptive Simpson quadrature of `f` on [a, b] to absolute tolerance `tol`.
///
/// Returns (value, error_estimate). Recursion depth is capped; the cap is
/// generous enough for the smooth integrands used here.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let (v, e) = simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
    (v, e)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        (left + right + delta / 15.0, delta.abs() / 15.0)
    } else {
        let (lv, le) = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
        let (rv, re) = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
        (lv + rv, le + re)
    }
}

/// Least-squares slope and intercept of y over x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}
