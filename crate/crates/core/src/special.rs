//! Special functions and log-domain arithmetic.

use statrs::function::erf::erfc;

use crate::error::{param, Result};

/// Digamma function for x > 0.
///
/// The argument is shifted up to at least 10 with psi(x) = psi(x+1) - 1/x and
/// the asymptotic Bernoulli series is summed there.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return param(format!("digamma needs a positive finite argument, got {x}"));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // B_{2k}/(2k) for k = 1..7
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0
                    - r * (1.0 / 240.0
                        - r * (1.0 / 132.0 - r * (691.0 / 32760.0 - r / 12.0))))));
    Ok(acc + x.ln() - 0.5 / x - series)
}

/// Trigamma function for x > 0, same shift-then-series scheme as [`digamma`].
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return param(format!("trigamma needs a positive finite argument, got {x}"));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let ix = 1.0 / x;
    let r = ix * ix;
    let series = ix
        + 0.5 * r
        + ix * r
            * (1.0 / 6.0
                - r * (1.0 / 30.0
                    - r * (1.0 / 42.0
                        - r * (1.0 / 30.0 - r * (5.0 / 66.0 - r * (691.0 / 2730.0 - r * 7.0 / 6.0))))));
    Ok(acc + series)
}

/// log(e^a + e^b), with -inf as the additive identity.
#[inline]
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

/// log(sum e^x) over a slice; -inf for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log(1 + e^x) without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Running sum kept as mantissa times e^shift; cheaper than a log-add per term
/// when many terms of similar size are accumulated.
#[derive(Clone, Copy, Debug)]
pub struct LogAccumulator {
    shift: f64,
    mantissa: f64,
}

impl Default for LogAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl LogAccumulator {
    pub fn new() -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            mantissa: 0.0,
        }
    }

    /// Adds e^x.
    #[inline]
    pub fn add_log(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if self.mantissa == 0.0 {
            self.shift = x;
            self.mantissa = 1.0;
            return;
        }
        let d = x - self.shift;
        if d > 30.0 {
            self.mantissa = self.mantissa * (-d).exp() + 1.0;
            self.shift = x;
        } else {
            self.mantissa += d.exp();
            if self.mantissa > 1e200 {
                self.shift += self.mantissa.ln();
                self.mantissa = 1.0;
            }
        }
    }

    pub fn log_value(&self) -> f64 {
        if self.mantissa == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + self.mantissa.ln()
        }
    }
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// log of the Gaussian upper tail Q(z) = P(N > z), accurate for large z.
pub fn log_normal_tail(z: f64) -> f64 {
    if z < 5.0 {
        return (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln();
    }
    // Laplace continued fraction for the Mills ratio
    let mut frac = z;
    for k in (1..=60).rev() {
        frac = z + k as f64 / frac;
    }
    -0.5 * z * z - (2.0 * std::f64::consts::PI).sqrt().ln() - frac.ln()
}
