//! Finite-n pipeline from the two-row log-gamma stationary grid to the
//! reflected-walk framework: the scaled process H^(n), the normalized
//! partition functions z~, the weight-matching moments and the matching
//! identity.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::distributions::inverse_gamma_moment;
use crate::error::{param, Error, Result};
use crate::lattice::{one_row_params, partition_recurrence, point_to_point_partition, sample_weight_field, two_row_params, PartitionGrid, WeightField};
use crate::mc::McRunner;
use crate::rng::RngStream;
use crate::she::{partition_with_initial_data, BoundaryWeights, BulkLaw, BulkWeights, InitialDataKind};
use crate::special::log_add_exp;
use crate::stationary::scaled_alpha;
use crate::stats::{ks_two_sample, KsResult, SampleSet};

/// n, u, v and the (T, X) points at which H^(n)_{u,v} is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpzScalingConfig {
    pub n: u64,
    pub u: f64,
    pub v: f64,
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
}

impl KpzScalingConfig {
    pub fn new(n: u64, u: f64, v: f64, t_grid: Vec<f64>, x_grid: Vec<f64>) -> Result<Self> {
        let c = Self { n, u, v, t_grid, x_grid };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return param("n must be positive");
        }
        if !(self.v <= self.u.min(0.0)) {
            return param(format!("need v <= min(0, u), got u={}, v={}", self.u, self.v));
        }
        let a = self.alpha();
        if !(self.u > -a && self.v > -a) {
            return param(format!("need u, v > -alpha = {}", -a));
        }
        for &t in &self.t_grid {
            self.half_time(t)?;
        }
        for &x in &self.x_grid {
            if !(x >= 0.0) {
                return param(format!("X must be nonnegative, got {x}"));
            }
        }
        Ok(())
    }

    /// alpha^(n) = 1/2 + sqrt n.
    pub fn alpha(&self) -> f64 {
        scaled_alpha(self.n)
    }

    /// mu = u - 1/2.
    pub fn mu(&self) -> f64 {
        self.u - 0.5
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// nT/2, which must be a nonnegative integer.
    pub fn half_time(&self, t: f64) -> Result<usize> {
        let h = self.n as f64 * t / 2.0;
        if !(t >= 0.0) || (h - h.round()).abs() > 1e-9 {
            return Err(Error::Grid(format!("nT/2 = {h} is not a nonnegative integer")));
        }
        Ok(h.round() as usize)
    }

    /// sqrt(n) X split into integer part and fractional remainder.
    fn space_index(&self, x: f64) -> (usize, f64) {
        let k = self.sqrt_n() * x;
        let r = k.round();
        if (k - r).abs() < 1e-9 {
            (r as usize, 0.0)
        } else {
            (k.floor() as usize, k - k.floor())
        }
    }
}

/// Sampled weights of a stationary grid together with its partition functions.
///
/// For v < u this is the two-row grid. For v = u the weight at (2,2)
/// degenerates and every ratio reduces to the one-row grid shifted by (1,1);
/// the field then stores that one-row grid and `shift` is 1.
#[derive(Clone, Debug)]
pub struct StationaryField {
    pub alpha: f64,
    pub u: f64,
    pub v: f64,
    pub field: WeightField,
    pub grid: PartitionGrid,
    shift: usize,
}

impl StationaryField {
    /// Samples a grid covering lattice points (i, j) with i <= max_i, j <= max_j.
    pub fn sample(alpha: f64, u: f64, v: f64, max_i: usize, max_j: usize, rng: &mut RngStream) -> Result<Self> {
        if max_j < 2 || max_i < max_j {
            return param(format!("need max_i >= max_j >= 2, got ({max_i},{max_j})"));
        }
        if v == u {
            let p = one_row_params(alpha, u, max_i - 1)?;
            let field = sample_weight_field(&p, rng)?;
            let grid = partition_recurrence(&field, max_i - 1, max_j - 1)?;
            return Ok(Self {
                alpha,
                u,
                v,
                field,
                grid,
                shift: 1,
            });
        }
        let p = two_row_params(alpha, u, v, max_i)?;
        let field = sample_weight_field(&p, rng)?;
        let grid = partition_recurrence(&field, max_i, max_j)?;
        Ok(Self {
            alpha,
            u,
            v,
            field,
            grid,
            shift: 0,
        })
    }

    /// log of z^stat(i, j) / (w_{1,1} w_{2,2}).
    pub fn log_normalized(&self, i: usize, j: usize) -> Result<f64> {
        if self.shift == 1 {
            return self.grid.log_z(i - 1, j - 1);
        }
        Ok(self.grid.log_z(i, j)? - self.field.log_weight(1, 1)? - self.field.log_weight(2, 2)?)
    }

    fn log_scale(&self) -> f64 {
        (self.alpha - 0.5).ln()
    }

    /// log z~(t, y) = (2t + y) log(alpha - 1/2) + log z^stat(t+y+2, t+2)/(w_{1,1} w_{2,2}).
    pub fn log_tilde(&self, t: usize, y: usize) -> Result<f64> {
        Ok((2 * t + y) as f64 * self.log_scale() + self.log_normalized(t + y + 2, t + 2)?)
    }

    /// log z~(x) = log z~(0, x + 1); uses rows 1 and 2 only.
    pub fn log_initial(&self, x: usize) -> Result<f64> {
        self.log_tilde(0, x + 1)
    }

    /// log z~_u(a,b; a',b'): point-to-point partition in rows >= 3, both
    /// endpoints included, times (alpha - 1/2)^{a'-a+b'-b+1}.
    pub fn log_propagator(&self, start: (usize, usize), end: (usize, usize)) -> Result<f64> {
        if start.1 < 3 || self.shift == 1 {
            return param("propagators start in row 3 of a two-row grid");
        }
        let steps = end.0 + end.1 + 1 - start.0 - start.1;
        Ok(steps as f64 * self.log_scale() + point_to_point_partition(&self.field, start, end)?)
    }

    /// Right side of the decomposition
    /// z~(t,y) = sum_{x=0}^{t+y-1} z~(x) z~_u(x+3, 3; t+y+2, t+2), in log form.
    pub fn log_tilde_decomposed(&self, t: usize, y: usize) -> Result<f64> {
        if t < 1 {
            return param("the decomposition needs t >= 1");
        }
        let mut acc = f64::NEG_INFINITY;
        for x in 0..t + y {
            acc = log_add_exp(acc, self.log_initial(x)? + self.log_propagator((x + 3, 3), (t + y + 2, t + 2))?);
        }
        Ok(acc)
    }
}

/// H^(n)_{u,v}(T, X_i) for one replica; one grid serves every X in the list.
///
/// Off-lattice X are handled by interpolating exp(H) linearly between the
/// neighbouring lattice columns and taking the log. T must satisfy nT/2 in Z.
pub fn scaled_stationary_process(config: &KpzScalingConfig, t: f64, xs: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    config.validate()?;
    let h = config.half_time(t)?;
    let idx: Vec<(usize, f64)> = xs
        .iter()
        .map(|&x| {
            if x < 0.0 {
                param(format!("X must be nonnegative, got {x}"))
            } else {
                Ok(config.space_index(x))
            }
        })
        .collect::<Result<_>>()?;
    let k_max = idx.iter().map(|&(k, f)| k + usize::from(f > 0.0)).max().unwrap_or(0);
    let f = StationaryField::sample(config.alpha(), config.u, config.v, h + k_max + 2, h + 2, rng)?;
    let lsn = config.sqrt_n().ln();
    let at = |k: usize| -> Result<f64> { Ok((2 * h + k) as f64 * lsn + f.log_normalized(h + k + 2, h + 2)?) };
    idx.iter()
        .map(|&(k, frac)| {
            if frac == 0.0 {
                at(k)
            } else {
                Ok(log_add_exp((1.0 - frac).ln() + at(k)?, frac.ln() + at(k + 1)?))
            }
        })
        .collect()
}

/// log z~_{u,v;alpha}(t, y) from a freshly sampled grid.
pub fn normalized_tilde_z(alpha: f64, u: f64, v: f64, t: usize, y: usize, rng: &mut RngStream) -> Result<f64> {
    if !(alpha > 0.5) {
        return param(format!("normalization needs alpha > 1/2, got {alpha}"));
    }
    StationaryField::sample(alpha, u, v, t + y + 2, t + 2, rng)?.log_tilde(t, y)
}

/// Exact moments of omega^(n) where 1 + beta^(n) omega^(n) ~ 2 sqrt(n) Gamma^{-1}(2 sqrt(n) + 1)
/// and beta^(n) = n^{-1/4}/sqrt 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkMomentReport {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub variance_formula: f64,
    /// Orders 1..=8 where the moment exists.
    pub moments: Vec<BulkMoment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkMoment {
    pub order: u32,
    pub value: f64,
    /// Standard Gaussian moment (N-1)!!, the n -> infinity limit.
    pub gaussian: f64,
    /// |value - gaussian| n^{rate}, see [`bulk_moment_rate`].
    pub scaled_deviation: f64,
}

/// Convergence rate exponent of E[omega^N] to (N-1)!!: 1/2 for even N and
/// 1/4 for odd N. The third cumulant of omega is of order n^{-1/4}, so odd
/// moments (which are linear in it) only decay at that rate; even moments
/// see it squared.
pub fn bulk_moment_rate(order: u32) -> f64 {
    if order % 2 == 0 {
        0.5
    } else {
        0.25
    }
}

/// Double factorial (N-1)!! for even N, 0 for odd N.
pub fn gaussian_moment(order: u32) -> f64 {
    if order % 2 == 1 {
        return 0.0;
    }
    (1..order).step_by(2).map(f64::from).product()
}

/// E[omega^N] = m^{N/2} sum_k C(N,k) (-1)^{N-k} m^k / (m (m-1) ... (m-k+1)), m = 2 sqrt n,
/// evaluated in exact rational arithmetic; the prefactor m^{N/2} is applied
/// after conversion (it is irrational for odd N).
fn bulk_moment_exact(m: i64, order: u32) -> BigRational {
    let mr = BigRational::from_integer(m.into());
    let mut total = BigRational::zero();
    let mut binom = BigRational::one();
    for k in 0..=order {
        // m^k / (m (m-1) ... (m-k+1))
        let mut ew = BigRational::one();
        for j in 0..k {
            ew = ew * &mr / BigRational::from_integer((m - j as i64).into());
        }
        let term = &binom * ew;
        if (order - k) % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
        binom = binom * BigRational::from_integer((order - k).into()) / BigRational::from_integer((k + 1).into());
    }
    total
}

pub fn bulk_weight_matching_moments(n: u64) -> Result<BulkMomentReport> {
    if n < 4 {
        return param(format!("bulk moments need n >= 4, got {n}"));
    }
    let m_f = 2.0 * (n as f64).sqrt();
    let m = m_f.round() as i64;
    if (m_f - m as f64).abs() > 1e-9 || 4 * n != (m * m) as u64 {
        return param(format!("exact bulk moments need 2 sqrt(n) to be an integer, got n={n}"));
    }
    let mut moments = Vec::new();
    let mut mean = f64::NAN;
    let mut variance = f64::NAN;
    for order in 1..=8u32 {
        // E[W^k] needs k < m + 1
        if order as i64 > m {
            break;
        }
        let core = bulk_moment_exact(m, order).to_f64().unwrap_or(f64::NAN);
        let value = core * m_f.powf(order as f64 / 2.0);
        if order == 1 {
            mean = value;
        }
        if order == 2 {
            variance = value - mean * mean;
        }
        let gaussian = gaussian_moment(order);
        moments.push(BulkMoment {
            order,
            value,
            gaussian,
            scaled_deviation: (value - gaussian).abs() * (n as f64).powf(bulk_moment_rate(order)),
        });
    }
    Ok(BulkMomentReport {
        n,
        mean,
        variance,
        variance_formula: m_f / (m_f - 1.0),
        moments,
    })
}

/// One draw of omega^(n).
pub fn sample_bulk_omega(n: u64, rng: &mut RngStream) -> Result<f64> {
    let m = 2.0 * (n as f64).sqrt();
    let g = crate::distributions::GammaSampler::new(m + 1.0)?;
    Ok(m.sqrt() * (m / g.sample(rng) - 1.0))
}

/// Mean and variance of X^(n) = ((2 alpha - 1)/2) Gamma^{-1}(alpha + u), alpha = 1/2 + sqrt n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMomentReport {
    pub n: u64,
    pub mu: f64,
    pub mean: f64,
    /// sqrt(n) / (sqrt(n) + mu).
    pub mean_formula: f64,
    /// sqrt(n) (1 - mean), which tends to mu.
    pub mu_recovered: f64,
    pub variance: f64,
    /// n / ((sqrt n + mu)^2 (sqrt n + mu - 1)).
    pub variance_formula: f64,
    /// sqrt(n) var, bounded in n.
    pub scaled_variance: f64,
}

pub fn boundary_weight_matching_moments(n: u64, u: f64) -> Result<BoundaryMomentReport> {
    let sn = (n as f64).sqrt();
    let mu = u - 0.5;
    if !(sn + mu > 1.0) {
        return param(format!("boundary variance needs sqrt(n) + mu > 1, got n={n}, u={u}"));
    }
    let alpha = scaled_alpha(n);
    let scale = (2.0 * alpha - 1.0) / 2.0;
    let m1 = inverse_gamma_moment(alpha + u, 1)?;
    let m2 = inverse_gamma_moment(alpha + u, 2)?;
    let mean = scale * m1;
    let variance = scale * scale * (m2 - m1 * m1);
    Ok(BoundaryMomentReport {
        n,
        mu,
        mean,
        mean_formula: sn / (sn + mu),
        mu_recovered: sn * (1.0 - mean),
        variance,
        variance_formula: n as f64 / ((sn + mu).powi(2) * (sn + mu - 1.0)),
        scaled_variance: sn * variance,
    })
}

/// Largest t and y accepted by the matching-identity check.
pub const MATCHING_MAX_T: usize = 5;
pub const MATCHING_MAX_Y: usize = 4;

fn matching_window(alpha: f64, t: usize, y: usize) -> Result<()> {
    if t < 1 || t > MATCHING_MAX_T || y > MATCHING_MAX_Y {
        return Err(Error::Window(format!("matching identity needs 1 <= t <= {MATCHING_MAX_T}, y <= {MATCHING_MAX_Y}; got ({t},{y})")));
    }
    if !(alpha > 0.5) {
        return param(format!("matching needs alpha > 1/2, got {alpha}"));
    }
    Ok(())
}

/// log z~(t, y) from the log-gamma octant (left side of the matching).
pub fn matching_lhs_sample(alpha: f64, u: f64, v: f64, t: usize, y: usize, rng: &mut RngStream) -> Result<f64> {
    matching_window(alpha, t, y)?;
    normalized_tilde_z(alpha, u, v, t, y, rng)
}

/// log of (2^{1{y=0}}/2) (endpoint factor) z^diag(2t+y-2, y), where the
/// diagonal initial data is an independent copy of z~(.), the boundary weights
/// are ((2 alpha - 1)/2) Gamma^{-1}(alpha + u) and the bulk factors
/// 1 + beta omega are (2 alpha - 1) Gamma^{-1}(2 alpha).
pub fn matching_rhs_sample(alpha: f64, u: f64, v: f64, t: usize, y: usize, rng: &mut RngStream) -> Result<f64> {
    matching_window(alpha, t, y)?;
    let tau = 2 * t + y - 2;
    let n_init = t + y;
    let init_field = StationaryField::sample(alpha, u, v, n_init + 2, 2, rng)?;
    let init: Vec<f64> = (0..n_init).map(|x| init_field.log_initial(x).map(f64::exp)).collect::<Result<_>>()?;
    let boundary = BoundaryWeights::log_gamma_matched(alpha, u, 0, tau + 1, rng)?;
    let a = 2.0 * alpha - 1.0;
    let bulk = BulkWeights::sample(1.0 / a.sqrt(), 0, tau as i64 + 1, tau + 2, BulkLaw::LogGammaMatched { a }, rng)?;
    let z = partition_with_initial_data(InitialDataKind::Diagonal, &init, &boundary, &bulk, tau as i64, y, init.len())?;
    let endpoint = if y == 0 {
        boundary.get(tau as i64)?
    } else {
        0.5 * (1.0 + bulk.beta_omega(tau as i64, y)?)
    };
    Ok(endpoint.ln() + z.value.ln())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchingReport {
    pub t: usize,
    pub y: usize,
    pub lhs: SampleSet,
    pub rhs: SampleSet,
    pub ks: KsResult,
}

/// Two-sample KS comparison of the two sides of the matching identity (on logs).
#[allow(clippy::too_many_arguments)]
pub fn matching_identity_check(runner: &McRunner, stream_base: u32, alpha: f64, u: f64, v: f64, t: usize, y: usize, n_samples: usize) -> Result<MatchingReport> {
    matching_window(alpha, t, y)?;
    let lhs = runner.sample(&format!("matching-lhs-{t}-{y}"), stream_base, n_samples, |r| matching_lhs_sample(alpha, u, v, t, y, r))?;
    let rhs = runner.sample(&format!("matching-rhs-{t}-{y}"), stream_base + 1, n_samples, |r| matching_rhs_sample(alpha, u, v, t, y, r))?;
    let ks = ks_two_sample(&lhs, &rhs)?;
    Ok(MatchingReport { t, y, lhs, rhs, ks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn config_checks() {
        assert!(KpzScalingConfig::new(256, 1.0, -0.5, vec![0.0, 0.5], vec![0.25]).is_ok());
        assert!(KpzScalingConfig::new(256, 1.0, 0.5, vec![0.0], vec![0.25]).is_err());
        assert!(KpzScalingConfig::new(256, 1.0, -0.5, vec![0.003], vec![0.25]).is_err());
        let c = KpzScalingConfig::new(16, 0.7, -0.2, vec![0.25], vec![0.0]).unwrap();
        assert_eq!(c.alpha(), 4.5);
        assert_relative_eq!(c.mu(), 0.2);
        assert_eq!(c.half_time(0.25).unwrap(), 2);
    }

    #[test]
    fn time_zero_is_scaled_initial_data() {
        // same stream, same draw order: the grid's first two rows are the
        // weights of the explicit two-row formula
        let c = KpzScalingConfig::new(16, 0.7, -0.2, vec![0.0], vec![0.0, 0.5, 1.0]).unwrap();
        let mut r = RngStream::new(4, 0);
        let h = scaled_stationary_process(&c, 0.0, &c.x_grid, &mut r).unwrap();
        assert_relative_eq!(h[0], 0.0, epsilon = 1e-12);
        let mut r = RngStream::new(4, 0);
        let f = StationaryField::sample(c.alpha(), c.u, c.v, 6, 2, &mut r).unwrap();
        let ln4 = 4f64.ln();
        for (i, k) in [(1, 2usize), (2, 4)] {
            let expect = k as f64 * ln4 + f.grid.log_z(k + 2, 2).unwrap() - f.grid.log_z(2, 2).unwrap();
            assert_relative_eq!(h[i], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn off_grid_interpolates_exponentials() {
        let c = KpzScalingConfig::new(16, 0.7, -0.2, vec![0.5], vec![0.25, 0.375, 0.5]).unwrap();
        let mut r = RngStream::new(9, 0);
        let h = scaled_stationary_process(&c, 0.5, &c.x_grid, &mut r).unwrap();
        let mid = (0.5 * (h[0].exp() + h[2].exp())).ln();
        assert_relative_eq!(h[1], mid, max_relative = 1e-12);
        assert!(scaled_stationary_process(&c, 0.1, &[0.0], &mut r).is_err());
    }

    #[test]
    fn decomposition_exact() {
        for seed in 0..5 {
            let mut r = RngStream::new(seed, 0);
            let f = StationaryField::sample(2.0, 0.8, -0.5, 12, 7, &mut r).unwrap();
            for t in 1..=4 {
                for y in 0..=4 {
                    let a = f.log_tilde(t, y).unwrap();
                    let b = f.log_tilde_decomposed(t, y).unwrap();
                    assert!((a - b).abs() < 1e-10, "t {t} y {y}: {a} vs {b}");
                }
            }
            for x in 0..5 {
                assert_eq!(f.log_initial(x).unwrap(), f.log_tilde(0, x + 1).unwrap());
            }
        }
    }

    #[test]
    fn factors_use_disjoint_rows() {
        let mut r = RngStream::new(1, 0);
        let f = StationaryField::sample(2.0, 0.8, -0.5, 10, 6, &mut r).unwrap();
        let init: Vec<f64> = (0..6).map(|x| f.log_initial(x).unwrap()).collect();
        let prop = f.log_propagator((4, 3), (9, 6)).unwrap();
        let mut g = f.clone();
        for i in 3..=10 {
            for j in 3..=i.min(6) {
                g.field.set_log_weight(i, j, 0.3).unwrap();
            }
        }
        g.grid = partition_recurrence(&g.field, 10, 6).unwrap();
        for x in 0..6 {
            assert_eq!(g.log_initial(x).unwrap(), init[x]);
        }
        let mut h = f.clone();
        for i in 1..=10 {
            for j in 1..=i.min(2) {
                let _ = h.field.set_log_weight(i, j, -0.7);
            }
        }
        assert_eq!(h.log_propagator((4, 3), (9, 6)).unwrap(), prop);
    }

    #[test]
    fn equal_parameters_use_shifted_one_row() {
        let mut r = RngStream::new(2, 0);
        let f = StationaryField::sample(2.0, -0.3, -0.3, 8, 4, &mut r).unwrap();
        assert_eq!(f.log_normalized(2, 2).unwrap(), 0.0);
        assert!(f.log_normalized(5, 3).unwrap().is_finite());
    }

    #[test]
    fn bulk_moments_exact() {
        let reps: Vec<BulkMomentReport> = [100u64, 10_000, 1_000_000].iter().map(|&n| bulk_weight_matching_moments(n).unwrap()).collect();
        for r in &reps {
            assert!(r.mean.abs() < 1e-14, "{r:?}");
            assert_relative_eq!(r.variance, r.variance_formula, max_relative = 1e-12);
        }
        // deviations shrink at the stated rate: scaled deviations do not grow
        for w in reps.windows(2) {
            for (a, b) in w[0].moments.iter().zip(&w[1].moments).skip(1) {
                assert!(b.scaled_deviation <= 1.2 * a.scaled_deviation, "{a:?} -> {b:?}");
            }
        }
        // quadrature oracle: E[(m/G - 1)^N] against the Gamma(m+1) density,
        // a positive integrand for even N
        let m = 200.0f64;
        let g = statrs::distribution::Gamma::new(m + 1.0, 1.0).unwrap();
        for order in [4, 8] {
            let integrand = |x: f64| (m / x - 1.0).powi(order) * statrs::distribution::Continuous::pdf(&g, x);
            let q = crate::she::simpson(integrand, 60.0, 500.0, 200_000) * m.powf(order as f64 / 2.0);
            assert_relative_eq!(reps[1].moments[order as usize - 1].value, q, max_relative = 1e-8);
        }
        assert_eq!(bulk_weight_matching_moments(4).unwrap().moments.len(), 4);
        assert!(bulk_weight_matching_moments(10).is_err());
        assert_eq!(gaussian_moment(8), 105.0);
    }

    #[test]
    fn bulk_moment_small_case_by_hand() {
        // m = 4: E[W] = 1, E[W^2] = 16/12, so E[(W-1)^2] = 1/3 and E[omega^2] = 4/3
        let r = bulk_weight_matching_moments(4).unwrap();
        assert_relative_eq!(r.moments[1].value, 4.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn boundary_moments() {
        let r = boundary_weight_matching_moments(10_000, 1.0).unwrap();
        assert_relative_eq!(r.mean, 100.0 / 100.5, max_relative = 1e-14);
        assert_relative_eq!(r.mean, r.mean_formula, max_relative = 1e-14);
        assert_relative_eq!(r.variance, r.variance_formula, max_relative = 1e-10);
        let s: Vec<f64> = [100u64, 10_000, 1_000_000]
            .iter()
            .map(|&n| boundary_weight_matching_moments(n, 1.0).unwrap().scaled_variance)
            .collect();
        assert!(s.iter().all(|v| *v < 1.2 && *v > 0.8), "{s:?}");
        let big = boundary_weight_matching_moments(1_000_000, 1.0).unwrap();
        assert!((big.mu_recovered - 0.5).abs() < 1e-3);
        assert!(boundary_weight_matching_moments(1, -0.4).is_err());
    }

    #[test]
    fn matching_t1_y0_reduces_to_three_sites() {
        // z~(1,0) = (alpha - 1/2)^2 w33 w32 (1 + w31/w22)
        let mut r = RngStream::new(6, 0);
        let f = StationaryField::sample(2.0, 0.8, -0.5, 3, 3, &mut r).unwrap();
        let w = |i, j| f.field.log_weight(i, j).unwrap().exp();
        let expect = 1.5f64.powi(2) * w(3, 3) * w(3, 2) * (1.0 + w(3, 1) / w(2, 2));
        assert_relative_eq!(f.log_tilde(1, 0).unwrap(), expect.ln(), max_relative = 1e-12);
        assert!(matching_lhs_sample(2.0, 0.8, -0.5, 0, 0, &mut r).is_err());
        assert!(matching_rhs_sample(2.0, 0.8, -0.5, 6, 0, &mut r).is_err());
    }

    #[test]
    fn matching_identity_small_run() {
        let runner = McRunner::new(3);
        for (t, y) in [(1, 0), (2, 1)] {
            let rep = matching_identity_check(&runner, 10, 2.0, 0.8, -0.5, t, y, 20_000).unwrap();
            assert!(rep.ks.passes(), "({t},{y}): {:?}", rep.ks);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn decomposition_holds(seed in 0u64..1000, t in 1usize..4, y in 0usize..4) {
            let mut r = RngStream::new(seed, 1);
            let f = StationaryField::sample(1.3, 0.4, -0.2, t + y + 2, t + 2, &mut r).unwrap();
            let a = f.log_tilde(t, y).unwrap();
            let b = f.log_tilde_decomposed(t, y).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
