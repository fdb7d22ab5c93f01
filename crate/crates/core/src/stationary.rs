//! Direct samplers for the stationary processes z_{u,v} (discrete) and
//! H_{u,v} (continuum), and the second-moment expansion of the scaled
//! initial data.

use serde::{Deserialize, Serialize};

use crate::distributions::{inverse_gamma_moment, GammaSampler};
use crate::error::{param, Error, Result};
use crate::rng::RngStream;
use crate::special::{log_add_exp, softplus, LogAccumulator};

/// A sampled trajectory in log domain on a grid of k or X values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPath {
    pub grid: Vec<f64>,
    pub log_values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteStationaryParams {
    pub alpha: f64,
    pub u: f64,
    pub v: f64,
}

impl DiscreteStationaryParams {
    pub fn new(alpha: f64, u: f64, v: f64) -> Result<Self> {
        let p = Self { alpha, u, v };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { alpha, u, v } = *self;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return param(format!("alpha must be positive, got {alpha}"));
        }
        if !(u > -alpha && v > -alpha && v < alpha) || !(v <= u) {
            return param(format!("need u, v > -alpha, v < alpha and v <= u; got alpha={alpha}, u={u}, v={v}"));
        }
        Ok(())
    }

    /// Shape of varpi, or None when u = v (then 1/varpi := 0).
    fn varpi_shape(&self) -> Option<f64> {
        (self.u > self.v).then(|| self.u - self.v)
    }
}

fn log_inv_varpi(shape: Option<f64>, rng: &mut RngStream) -> Result<f64> {
    Ok(match shape {
        // log(1/varpi) = log G
        Some(s) => GammaSampler::new(s)?.log_sample(rng),
        None => f64::NEG_INFINITY,
    })
}

/// log z_{u,v}(k), k = 0..=k_max, with
/// z(k) = r2(k) (1 + (1/varpi) sum_{l<=k} r1(l)/r2(l-1)),
/// r1 a Gamma^{-1}(alpha+v) walk and r2 a Gamma^{-1}(alpha-v) walk.
pub fn sample_zuv_path(params: &DiscreteStationaryParams, k_max: usize, rng: &mut RngStream) -> Result<StationaryPath> {
    params.validate()?;
    let s1 = GammaSampler::new(params.alpha + params.v)?;
    let s2 = GammaSampler::new(params.alpha - params.v)?;
    let liv = log_inv_varpi(params.varpi_shape(), rng)?;
    let (mut lr1, mut lr2) = (0.0, 0.0);
    let mut lsum = f64::NEG_INFINITY;
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(0.0);
    for _ in 1..=k_max {
        lr1 += s1.log_sample_inverse(rng);
        lsum = log_add_exp(lsum, lr1 - lr2);
        lr2 += s2.log_sample_inverse(rng);
        out.push(lr2 + softplus(liv + lsum));
    }
    Ok(StationaryPath {
        grid: (0..=k_max).map(|k| k as f64).collect(),
        log_values: out,
    })
}

/// Components of the p/r/a representation, all in log domain.
#[derive(Clone, Debug, PartialEq)]
pub struct PraComponents {
    /// log p(k), k = 0..=k_max.
    pub log_p: Vec<f64>,
    /// log r(k), k = 1..=k_max, stored at index k-1.
    pub log_r: Vec<f64>,
    /// log a(k), k = 0..=k_max.
    pub log_a: Vec<f64>,
}

/// p(k) = prod xi_i, r(k) = zeta_1 prod_{i=2}^k zeta_i/xi_{i-1},
/// a(k) = 1 + (1/varpi) sum_{j<=k} r(j).
pub fn sample_pra_components(params: &DiscreteStationaryParams, k_max: usize, rng: &mut RngStream) -> Result<PraComponents> {
    params.validate()?;
    let xi = GammaSampler::new(params.alpha - params.v)?;
    let zeta = GammaSampler::new(params.alpha + params.v)?;
    let xis: Vec<f64> = (0..k_max).map(|_| xi.log_sample_inverse(rng)).collect();
    let zetas: Vec<f64> = (0..k_max).map(|_| zeta.log_sample_inverse(rng)).collect();
    let liv = log_inv_varpi(params.varpi_shape(), rng)?;
    let mut log_p = vec![0.0];
    let mut log_r = Vec::with_capacity(k_max);
    let mut log_a = vec![0.0];
    let mut lsum = f64::NEG_INFINITY;
    for k in 0..k_max {
        log_p.push(log_p[k] + xis[k]);
        let r = if k == 0 { zetas[0] } else { log_r[k - 1] + zetas[k] - xis[k - 1] };
        log_r.push(r);
        lsum = log_add_exp(lsum, r);
        log_a.push(softplus(liv + lsum));
    }
    Ok(PraComponents { log_p, log_r, log_a })
}

/// log(p(k) a(k)), which has the law of z_{u,v}.
pub fn sample_zuv_pra(params: &DiscreteStationaryParams, k_max: usize, rng: &mut RngStream) -> Result<StationaryPath> {
    let c = sample_pra_components(params, k_max, rng)?;
    Ok(StationaryPath {
        grid: (0..=k_max).map(|k| k as f64).collect(),
        log_values: c.log_p.iter().zip(&c.log_a).map(|(p, a)| p + a).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumStationaryParams {
    pub u: f64,
    pub v: f64,
    pub delta: f64,
    pub x_max: f64,
}

impl ContinuumStationaryParams {
    pub fn new(u: f64, v: f64, delta: f64, x_max: f64) -> Result<Self> {
        let p = Self { u, v, delta, x_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.x_max > 0.0) || !self.x_max.is_finite() {
            return param("grid step and horizon must be positive");
        }
        if !(self.u >= self.v) || !self.u.is_finite() || !self.v.is_finite() {
            return param(format!("need u >= v, got u={}, v={}", self.u, self.v));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.x_max / self.delta).round() as usize
    }

    /// Grid index of X, which must be a multiple of delta.
    pub fn index_of(&self, x: f64) -> Result<usize> {
        let j = x / self.delta;
        if x < 0.0 || (j - j.round()).abs() > 1e-9 || j.round() as usize > self.steps() {
            return Err(Error::Grid(format!("X={x} is not on the grid of step {}", self.delta)));
        }
        Ok(j.round() as usize)
    }

    fn varpi_shape(&self) -> Option<f64> {
        (self.u > self.v).then(|| self.u - self.v)
    }
}

/// Walks the delta-grid, calling `visit(j, H(j delta), B2(j delta))`.
fn huv_walk(p: &ContinuumStationaryParams, rng: &mut RngStream, mut visit: impl FnMut(usize, f64, f64)) -> Result<()> {
    p.validate()?;
    let liv = log_inv_varpi(p.varpi_shape(), rng)?;
    let (d, sd) = (p.delta, p.delta.sqrt());
    let ld = d.ln();
    let (mut b1, mut b2) = (0.0, 0.0);
    let mut integral = LogAccumulator::new();
    visit(0, 0.0, 0.0);
    for j in 1..=p.steps() {
        integral.add_log(b1 - b2 + ld);
        b1 += -p.v * d + sd * rng.standard_normal();
        b2 += p.v * d + sd * rng.standard_normal();
        visit(j, b2 + softplus(liv + integral.log_value()), b2);
    }
    Ok(())
}

/// H_{u,v} on the grid X_j = j delta, j = 0..=x_max/delta:
/// H(X) = B2(X) + log(1 + (1/varpi) int_0^X e^{B1(S)-B2(S)} dS) with a
/// left-endpoint Riemann sum.
pub fn sample_huv_path(p: &ContinuumStationaryParams, rng: &mut RngStream) -> Result<StationaryPath> {
    Ok(sample_huv_coupled(p, rng)?.0)
}

/// H_{u,v} together with the B2 path it was built from.
pub fn sample_huv_coupled(p: &ContinuumStationaryParams, rng: &mut RngStream) -> Result<(StationaryPath, Vec<f64>)> {
    let n = p.steps() + 1;
    let (mut h, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    huv_walk(p, rng, |_, hv, bv| {
        h.push(hv);
        b.push(bv);
    })?;
    let grid = (0..n).map(|j| j as f64 * p.delta).collect();
    Ok((StationaryPath { grid, log_values: h }, b))
}

/// H_{u,v} at selected grid points only, without storing the path.
pub fn sample_huv_at(p: &ContinuumStationaryParams, xs: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    let idx: Vec<usize> = xs.iter().map(|&x| p.index_of(x)).collect::<Result<_>>()?;
    let mut out = vec![0.0; xs.len()];
    huv_walk(p, rng, |j, h, _| {
        for (o, &i) in out.iter_mut().zip(&idx) {
            if i == j {
                *o = h;
            }
        }
    })?;
    Ok(out)
}

/// The geometric Pitman form beta1 + beta2 + log(1 + (1/varpi) int e^{-2 beta2}),
/// with beta1 driftless, beta2 of drift v, both of variance 1/2 per unit time.
pub fn sample_huv_pitman(p: &ContinuumStationaryParams, rng: &mut RngStream) -> Result<StationaryPath> {
    p.validate()?;
    let liv = log_inv_varpi(p.varpi_shape(), rng)?;
    let (d, sd) = (p.delta, (0.5 * p.delta).sqrt());
    let ld = d.ln();
    let (mut b1, mut b2) = (0.0, 0.0);
    let mut integral = LogAccumulator::new();
    let mut out = vec![0.0];
    for _ in 1..=p.steps() {
        integral.add_log(-2.0 * b2 + ld);
        b1 += sd * rng.standard_normal();
        b2 += p.v * d + sd * rng.standard_normal();
        out.push(b1 + b2 + softplus(liv + integral.log_value()));
    }
    Ok(StationaryPath {
        grid: (0..out.len()).map(|j| j as f64 * p.delta).collect(),
        log_values: out,
    })
}

/// Lattice index sqrt(n) X, which must be a nonnegative integer.
pub fn lattice_offset(n: u64, x: f64) -> Result<usize> {
    let k = (n as f64).sqrt() * x;
    if x < 0.0 || (k - k.round()).abs() > 1e-9 {
        return Err(Error::Grid(format!("sqrt({n}) * {x} is not a nonnegative integer")));
    }
    Ok(k.round() as usize)
}

/// alpha^(n) = 1/2 + sqrt(n).
pub fn scaled_alpha(n: u64) -> f64 {
    0.5 + (n as f64).sqrt()
}

/// log of (sqrt n)^{sqrt(n) X} z_{u,v}(sqrt(n) X) with alpha = 1/2 + sqrt(n),
/// i.e. the scaled initial data H^(n)(0, X).
pub fn scaled_initial_data(n: u64, u: f64, v: f64, x_grid: &[f64], rng: &mut RngStream) -> Result<StationaryPath> {
    let ks: Vec<usize> = x_grid.iter().map(|&x| lattice_offset(n, x)).collect::<Result<_>>()?;
    let params = DiscreteStationaryParams::new(scaled_alpha(n), u, v)?;
    let path = sample_zuv_path(&params, ks.iter().copied().max().unwrap_or(0), rng)?;
    let lsn = 0.5 * (n as f64).ln();
    Ok(StationaryPath {
        grid: x_grid.to_vec(),
        log_values: ks.iter().map(|&k| k as f64 * lsn + path.log_values[k]).collect(),
    })
}

/// E[(e^{H^(n)(0,X)})^2] from the three-term expansion in M_k(+-v).
///
/// The cross term carries a factor 2 (it comes from squaring a sum), and the
/// moments of 1/varpi are those of a Gamma(u-v) variable, which always exist.
pub fn second_moment_analytic(n: u64, u: f64, v: f64, x: f64) -> Result<f64> {
    let k = lattice_offset(n, x)?;
    let alpha = scaled_alpha(n);
    if !(alpha + v > 2.0 && alpha - v > 2.0) {
        return param(format!("second moments need alpha +- v > 2, got alpha={alpha}, v={v}"));
    }
    if !(v <= u) {
        return param(format!("need v <= u, got u={u}, v={v}"));
    }
    let nf = n as f64;
    let m1p = inverse_gamma_moment(alpha + v, 1)?;
    let m1m = inverse_gamma_moment(alpha - v, 1)?;
    let a = nf * inverse_gamma_moment(alpha - v, 2)?;
    let b = nf * m1p * m1m;
    let c = nf * inverse_gamma_moment(alpha + v, 2)?;
    let e1 = u - v;
    let e2 = (u - v) * (u - v + 1.0);
    let pw = |base: f64, e: usize| base.powi(e as i32);
    let mut cross = 0.0;
    for l in 1..=k {
        cross += pw(b, l) * pw(a, k + 1 - l);
    }
    let mut quad = 0.0;
    for l in 1..=k {
        for l2 in 1..=k {
            let (lo, hi) = (l.min(l2), l.max(l2));
            quad += pw(c, lo) * pw(b, hi - lo) * pw(a, k + 1 - hi);
        }
    }
    Ok(pw(a, k) + 2.0 * e1 / (nf * m1m) * cross + e2 / nf * quad)
}
