//! Weight laws: gamma, inverse-gamma, Beta-prime, geometric, exponential.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{param, Error, Result};
use crate::rng::RngStream;
use crate::special::{digamma, trigamma};

/// Shape parameter of an inverse-gamma law, checked positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvGammaParam {
    theta: f64,
}

impl InvGammaParam {
    pub fn new(theta: f64) -> Result<Self> {
        check_shape(theta)?;
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

fn check_shape(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        param(format!("shape must be positive and finite, got {a}"))
    }
}

/// Marsaglia-Tsang gamma sampler with precomputed constants.
///
/// Shapes below one are boosted: G_a = G_{a+1} U^{1/a}. The boost is applied
/// in log space so tiny shapes do not underflow.
#[derive(Clone, Copy, Debug)]
pub struct GammaSampler {
    shape: f64,
    d: f64,
    c: f64,
    inv_shape: Option<f64>,
}

impl GammaSampler {
    pub fn new(shape: f64) -> Result<Self> {
        check_shape(shape)?;
        let (base, inv_shape) = if shape < 1.0 {
            (shape + 1.0, Some(1.0 / shape))
        } else {
            (shape, None)
        };
        let d = base - 1.0 / 3.0;
        Ok(Self {
            shape,
            d,
            c: 1.0 / (9.0 * d).sqrt(),
            inv_shape,
        })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    #[inline]
    fn log_base(&self, rng: &mut RngStream) -> f64 {
        loop {
            let x = rng.standard_normal();
            let t = 1.0 + self.c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = rng.uniform_open();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + self.d * (1.0 - v + v.ln()) {
                return self.d.ln() + v.ln();
            }
        }
    }

    /// log G with G ~ Gamma(shape, 1).
    #[inline]
    pub fn log_sample(&self, rng: &mut RngStream) -> f64 {
        let lg = self.log_base(rng);
        match self.inv_shape {
            Some(ia) => lg + rng.uniform_open().ln() * ia,
            None => lg,
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.log_sample(rng).exp()
    }

    /// log X with X ~ Gamma^{-1}(shape).
    #[inline]
    pub fn log_sample_inverse(&self, rng: &mut RngStream) -> f64 {
        -self.log_sample(rng)
    }
}

pub fn sample_gamma(a: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(GammaSampler::new(a)?.sample(rng))
}

/// X = 1/G with G ~ Gamma(theta).
pub fn sample_inverse_gamma(theta: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(1.0 / GammaSampler::new(theta)?.sample(rng))
}

/// log X = -log G with G ~ Gamma(theta).
pub fn log_sample_inverse_gamma(theta: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(GammaSampler::new(theta)?.log_sample_inverse(rng))
}

/// G_a / G_b.
pub fn sample_beta_prime(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    let ga = GammaSampler::new(a)?;
    let gb = GammaSampler::new(b)?;
    Ok((ga.log_sample(rng) - gb.log_sample(rng)).exp())
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        param(format!("geometric parameter must lie in (0,1), got {q}"))
    }
}

/// Geometric on {0,1,...} with P(k) = (1-q) q^k, by inversion.
pub fn sample_geometric(q: f64, rng: &mut RngStream) -> Result<u64> {
    check_q(q)?;
    Ok(geometric_by_inversion(q.ln(), rng))
}

#[inline]
pub(crate) fn geometric_by_inversion(log_q: f64, rng: &mut RngStream) -> u64 {
    (rng.uniform_open().ln() / log_q).floor() as u64
}

/// Exponential with rate a.
pub fn sample_exponential(a: f64, rng: &mut RngStream) -> Result<f64> {
    check_shape(a)?;
    Ok(-rng.uniform_open().ln() / a)
}

/// E[X^k] = 1/((theta-1)...(theta-k)) for X ~ Gamma^{-1}(theta).
pub fn inverse_gamma_moment(theta: f64, k: u32) -> Result<f64> {
    check_shape(theta)?;
    if theta <= k as f64 {
        return Err(Error::MomentDivergence { theta, k });
    }
    Ok((1..=k).map(|j| 1.0 / (theta - j as f64)).product())
}

/// (E[log X], Var[log X]) = (-digamma(theta), trigamma(theta)).
pub fn inverse_gamma_log_moments(theta: f64) -> Result<(f64, f64)> {
    check_shape(theta)?;
    Ok((-digamma(theta)?, trigamma(theta)?))
}

pub fn gamma_cdf(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(a, x)
    }
}

/// P(X <= x) = Q(theta, 1/x) for X ~ Gamma^{-1}(theta).
pub fn inverse_gamma_cdf(theta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_ur(theta, 1.0 / x)
    }
}

pub fn beta_prime_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        beta_reg(a, b, x / (1.0 + x))
    }
}

pub fn exponential_cdf(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-a * x).exp_m1()
    }
}

pub fn geometric_cdf(q: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        1.0 - q.powf(x.floor() + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn moment_examples() {
        assert_relative_eq!(inverse_gamma_moment(3.0, 1).unwrap(), 0.5);
        assert_relative_eq!(inverse_gamma_moment(4.0, 2).unwrap(), 1.0 / 6.0);
        assert!(matches!(
            inverse_gamma_moment(1.5, 2),
            Err(Error::MomentDivergence { .. })
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut r = RngStream::new(0, 0);
        assert!(sample_inverse_gamma(0.0, &mut r).is_err());
        assert!(sample_gamma(-1.0, &mut r).is_err());
        assert!(sample_geometric(1.0, &mut r).is_err());
        assert!(sample_exponential(0.0, &mut r).is_err());
        assert!(InvGammaParam::new(f64::NAN).is_err());
    }

    #[test]
    fn inverse_gamma_mean_theta_three() {
        let mut r = RngStream::new(11, 0);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| sample_inverse_gamma(3.0, &mut r).unwrap())
            .collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 0.5).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn log_moments_theta_one() {
        let (m, v) = inverse_gamma_log_moments(1.0).unwrap();
        assert_relative_eq!(m, 0.577_215_664_901_532_9, max_relative = 1e-12);
        assert_relative_eq!(v, std::f64::consts::PI.powi(2) / 6.0, max_relative = 1e-12);
        let mut r = RngStream::new(12, 0);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| log_sample_inverse_gamma(1.0, &mut r).unwrap())
            .collect();
        let (em, se) = mean_se(&xs);
        assert!((em - m).abs() < 3.0 * se);
        // variance SE from the fourth central moment
        let n = xs.len() as f64;
        let c2: Vec<f64> = xs.iter().map(|x| (x - em).powi(2)).collect();
        let (ev, vse) = mean_se(&c2);
        assert!((ev * n / (n - 1.0) - v).abs() < 3.0 * vse, "var {ev} vs {v}");
    }

    #[test]
    fn log_moments_large_theta() {
        let (m, _) = inverse_gamma_log_moments(1e6).unwrap();
        assert!((m + 1e6f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn log_moments_match_mc() {
        for (i, &theta) in [0.7, 2.0, 10.0].iter().enumerate() {
            let (m, v) = inverse_gamma_log_moments(theta).unwrap();
            let mut r = RngStream::new(13, i as u64);
            let xs: Vec<f64> = (0..200_000)
                .map(|_| log_sample_inverse_gamma(theta, &mut r).unwrap())
                .collect();
            let (em, se) = mean_se(&xs);
            assert!((em - m).abs() < 3.0 * se, "theta {theta}");
            assert!((se * se * xs.len() as f64 / v - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn determinism_and_log_consistency() {
        let mut a = RngStream::new(5, 9);
        let mut b = RngStream::new(5, 9);
        for &theta in &[0.01, 0.4, 1.0, 2.5, 40.0] {
            for _ in 0..200 {
                let x = sample_inverse_gamma(theta, &mut a).unwrap();
                let lx = log_sample_inverse_gamma(theta, &mut b).unwrap();
                assert_relative_eq!(lx.exp(), x, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn tiny_shape_does_not_underflow() {
        let s = GammaSampler::new(1e-3).unwrap();
        let mut r = RngStream::new(3, 3);
        for _ in 0..1000 {
            let lg = s.log_sample(&mut r);
            assert!(lg.is_finite());
        }
    }

    #[test]
    fn auxiliary_means() {
        let mut r = RngStream::new(21, 0);
        let n = 400_000;
        let bp: Vec<f64> = (0..n).map(|_| sample_beta_prime(1.5, 3.5, &mut r).unwrap()).collect();
        let (m, se) = mean_se(&bp);
        assert!((m - 1.5 / 2.5).abs() < 3.0 * se);
        let g: Vec<f64> = (0..n).map(|_| sample_geometric(0.5, &mut r).unwrap() as f64).collect();
        let (m, se) = mean_se(&g);
        assert!((m - 1.0).abs() < 3.0 * se);
        let e: Vec<f64> = (0..n).map(|_| sample_exponential(2.0, &mut r).unwrap()).collect();
        let (m, se) = mean_se(&e);
        assert!((m - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn cdfs_are_consistent() {
        // Gamma^{-1}(1) has cdf e^{-1/x}
        for &x in &[0.1, 1.0, 5.0] {
            assert_relative_eq!(inverse_gamma_cdf(1.0, x), (-1.0 / x).exp(), max_relative = 1e-12);
        }
        assert_relative_eq!(geometric_cdf(0.5, 0.0), 0.5);
        assert_relative_eq!(geometric_cdf(0.5, 1.7), 0.75);
        assert_relative_eq!(exponential_cdf(2.0, 1.0), 1.0 - (-2.0f64).exp());
        // Beta'(1,1) has cdf x/(1+x)
        assert_relative_eq!(beta_prime_cdf(1.0, 1.0, 3.0), 0.75, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn samples_are_positive_and_finite(theta in 0.05f64..30.0, seed in 0u64..1000) {
            let mut r = RngStream::new(seed, 1);
            let x = sample_inverse_gamma(theta, &mut r).unwrap();
            prop_assert!(x > 0.0 && x.is_finite());
        }

        #[test]
        fn moment_recursion(theta in 3.1f64..50.0) {
            let m1 = inverse_gamma_moment(theta, 1).unwrap();
            let m2 = inverse_gamma_moment(theta, 2).unwrap();
            prop_assert!((m2 - m1 / (theta - 2.0)).abs() <= 1e-12 * m2);
        }
    }
}
