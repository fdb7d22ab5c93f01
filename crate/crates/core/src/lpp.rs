//! Half-space geometric and exponential last-passage percolation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::distributions::{geometric_by_inversion, GammaSampler};
use crate::error::{param, Error, Result};
use crate::lattice::{partition_recurrence, path_count, sample_weight_field, OctantParams, Triangle, BRUTEFORCE_PATH_LIMIT};
use crate::rng::RngStream;
use crate::stats::{ks_two_sample, KsResult, SampleSet};

fn check_exemptions(size: usize, ex: &BTreeSet<(usize, usize)>) -> Result<()> {
    for &(i, j) in ex {
        if j < 1 || j > i || i > size {
            return Err(Error::OutOfRange { n: i, m: j });
        }
    }
    Ok(())
}

/// Geometric weights g_{i,j} with P(g = k) = (1 - q_i q_j)(q_i q_j)^k off the
/// diagonal and parameter q_circ q_i on it.
#[derive(Clone, Debug, PartialEq)]
pub struct LppGeomParams {
    pub q_circ: f64,
    pub qs: Vec<f64>,
    pub exemptions: BTreeSet<(usize, usize)>,
}

impl LppGeomParams {
    pub fn new(q_circ: f64, qs: Vec<f64>, exemptions: BTreeSet<(usize, usize)>) -> Result<Self> {
        if !(q_circ > 0.0) || qs.is_empty() || qs.iter().any(|q| !(*q > 0.0) || !q.is_finite()) {
            return param("geometric parameters must be positive");
        }
        check_exemptions(qs.len(), &exemptions)?;
        let p = Self { q_circ, qs, exemptions };
        for i in 1..=p.qs.len() {
            for j in 1..=i {
                let r = p.parameter(i, j);
                if !p.exemptions.contains(&(i, j)) && !(r > 0.0 && r < 1.0) {
                    return param(format!("site ({i},{j}) has geometric parameter {r} outside (0,1)"));
                }
            }
        }
        Ok(p)
    }

    pub fn parameter(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.q_circ * self.qs[i - 1]
        } else {
            self.qs[i - 1] * self.qs[j - 1]
        }
    }
}

/// Exponential weights e_{i,j} of rate a_i + a_j, a_circ + a_i on the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LppExpParams {
    pub a_circ: f64,
    pub as_: Vec<f64>,
    pub exemptions: BTreeSet<(usize, usize)>,
}

impl LppExpParams {
    pub fn new(a_circ: f64, as_: Vec<f64>, exemptions: BTreeSet<(usize, usize)>) -> Result<Self> {
        if as_.is_empty() || !a_circ.is_finite() || as_.iter().any(|a| !a.is_finite()) {
            return param("exponential parameters must be finite");
        }
        check_exemptions(as_.len(), &exemptions)?;
        let p = Self { a_circ, as_, exemptions };
        for i in 1..=p.as_.len() {
            for j in 1..=i {
                if !p.exemptions.contains(&(i, j)) && !(p.rate(i, j) > 0.0) {
                    return param(format!("site ({i},{j}) has rate {} <= 0", p.rate(i, j)));
                }
            }
        }
        Ok(p)
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.a_circ + self.as_[i - 1]
        } else {
            self.as_[i - 1] + self.as_[j - 1]
        }
    }
}

/// Weights on the octant triangle (geometric values stored as f64).
#[derive(Clone, Debug, PartialEq)]
pub struct LppWeights {
    w: Triangle<f64>,
}

impl LppWeights {
    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut w = Triangle::filled(size, 0.0);
        for i in 1..=size {
            for j in 1..=i {
                *w.get_mut(i, j).unwrap() = f(i, j);
            }
        }
        Self { w }
    }

    pub fn size(&self) -> usize {
        self.w.size()
    }

    pub fn weight(&self, i: usize, j: usize) -> Result<f64> {
        self.w.get(i, j).copied().ok_or(Error::OutOfRange { n: i, m: j })
    }
}

pub fn sample_geom_weights(p: &LppGeomParams, rng: &mut RngStream) -> Result<LppWeights> {
    let n = p.qs.len();
    let mut w = Triangle::filled(n, 0.0);
    for i in 1..=n {
        for j in 1..=i {
            if !p.exemptions.contains(&(i, j)) {
                *w.get_mut(i, j).unwrap() = geometric_by_inversion(p.parameter(i, j).ln(), rng) as f64;
            }
        }
    }
    Ok(LppWeights { w })
}

/// Exponential weights by inversion, -ln(U)/rate, so that lowering a rate
/// raises the weight under shared uniforms.
pub fn sample_exp_weights(p: &LppExpParams, rng: &mut RngStream) -> Result<LppWeights> {
    let n = p.as_.len();
    let mut w = Triangle::filled(n, 0.0);
    for i in 1..=n {
        for j in 1..=i {
            if !p.exemptions.contains(&(i, j)) {
                *w.get_mut(i, j).unwrap() = -rng.uniform_open().ln() / p.rate(i, j);
            }
        }
    }
    Ok(LppWeights { w })
}

/// Last-passage values G(n, m) on [1, max_n] x [1, max_m]; -inf off the octant.
#[derive(Clone, Debug, PartialEq)]
pub struct LppGrid {
    max_n: usize,
    max_m: usize,
    data: Vec<f64>,
}

impl LppGrid {
    pub fn value(&self, n: usize, m: usize) -> Result<f64> {
        if n < 1 || m < 1 || n > self.max_n || m > self.max_m {
            return Err(Error::OutOfRange { n, m });
        }
        Ok(self.data[(n - 1) * self.max_m + m - 1])
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn max_m(&self) -> usize {
        self.max_m
    }

    pub fn rows(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for n in 1..=self.max_n {
            for m in 1..=n.min(self.max_m) {
                out.push((n, m, self.data[(n - 1) * self.max_m + m - 1]));
            }
        }
        out
    }
}

/// G(n,m) = w(n,m) + max(G(n-1,m), G(n,m-1)) with off-octant cells at -inf.
pub fn lpp_recurrence(weights: &LppWeights, max_n: usize, max_m: usize) -> Result<LppGrid> {
    if max_m < 1 || max_n < max_m {
        return param(format!("need max_n >= max_m >= 1, got ({max_n},{max_m})"));
    }
    if weights.size() < max_n {
        return Err(Error::OutOfRange { n: max_n, m: max_m });
    }
    let mut data = vec![f64::NEG_INFINITY; max_n * max_m];
    for n in 1..=max_n {
        for m in 1..=n.min(max_m) {
            let w = *weights.w.get(n, m).unwrap();
            let k = (n - 1) * max_m + m - 1;
            data[k] = if n == 1 {
                w
            } else {
                let left = if n - 1 >= m { data[k - max_m] } else { f64::NEG_INFINITY };
                let down = if m >= 2 { data[k - 1] } else { f64::NEG_INFINITY };
                w + left.max(down)
            };
        }
    }
    Ok(LppGrid { max_n, max_m, data })
}

/// Maximum over explicitly enumerated up-right octant paths.
pub fn lpp_bruteforce(weights: &LppWeights, n: usize, m: usize) -> Result<f64> {
    if m < 1 || m > n || n > weights.size() {
        return Err(Error::OutOfRange { n, m });
    }
    let count = path_count(n, m);
    if count > BRUTEFORCE_PATH_LIMIT {
        return Err(Error::TooLarge(format!("{count} paths to ({n},{m})")));
    }
    fn walk(w: &LppWeights, at: (usize, usize), end: (usize, usize), acc: f64, best: &mut f64) {
        let acc = acc + w.w.get(at.0, at.1).unwrap();
        if at == end {
            *best = best.max(acc);
            return;
        }
        let (i, j) = at;
        if i < end.0 {
            walk(w, (i + 1, j), end, acc, best);
        }
        if j < end.1 && j < i {
            walk(w, (i, j + 1), end, acc, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    walk(weights, (1, 1), (n, m), 0.0, &mut best);
    Ok(best)
}

/// The four stationary specializations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StationaryLpp {
    /// q_circ = r, q_1 = 1/r, q_i = q; g_{1,1} removed.
    GeomOne { q: f64, r: f64 },
    /// q_circ = r, q_1 = s, q_2 = 1/s, q_i = q; g_{1,1} and g_{2,1} removed.
    GeomTwo { q: f64, r: f64, s: f64 },
    /// a_circ = u, a_1 = -u, a_i = a; e_{1,1} removed.
    ExpOne { a: f64, u: f64 },
    /// a_circ = u, a_1 = v, a_2 = -v, a_i = a; e_{1,1} and e_{2,1} removed.
    ExpTwo { a: f64, u: f64, v: f64 },
}

impl StationaryLpp {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GeomOne { .. } => "geom_one",
            Self::GeomTwo { .. } => "geom_two",
            Self::ExpOne { .. } => "exp_one",
            Self::ExpTwo { .. } => "exp_two",
        }
    }

    /// Smallest row index for which the row process is stationary.
    pub fn min_row(&self) -> usize {
        match self {
            Self::GeomOne { .. } | Self::ExpOne { .. } => 1,
            _ => 2,
        }
    }

    fn weights(&self, size: usize, rng: &mut RngStream) -> Result<LppWeights> {
        let size = size.max(2);
        match *self {
            Self::GeomOne { q, r } => {
                let in01 = |x: f64| x > 0.0 && x < 1.0;
                if !(in01(q) && r > 0.0 && in01(q * r) && in01(q / r)) {
                    return param(format!("geom_one needs q, qr, q/r in (0,1); got q={q}, r={r}"));
                }
                let mut qs = vec![q; size];
                qs[0] = 1.0 / r;
                sample_geom_weights(&LppGeomParams::new(r, qs, [(1, 1)].into())?, rng)
            }
            Self::GeomTwo { q, r, s } => {
                let in01 = |x: f64| x > 0.0 && x < 1.0;
                if !(in01(q) && r > 0.0 && s > 0.0 && in01(q * r) && in01(q * s) && in01(q / s) && in01(r / s)) {
                    return param(format!("geom_two needs qr, qs, q/s, r/s in (0,1); got q={q}, r={r}, s={s}"));
                }
                let mut qs = vec![q; size];
                qs[0] = s;
                qs[1] = 1.0 / s;
                sample_geom_weights(&LppGeomParams::new(r, qs, [(1, 1), (2, 1)].into())?, rng)
            }
            Self::ExpOne { a, u } => {
                if !(a > 0.0 && a - u > 0.0 && a + u > 0.0) {
                    return param(format!("exp_one needs a > 0 and a +- u > 0; got a={a}, u={u}"));
                }
                let mut as_ = vec![a; size];
                as_[0] = -u;
                sample_exp_weights(&LppExpParams::new(u, as_, [(1, 1)].into())?, rng)
            }
            Self::ExpTwo { a, u, v } => {
                if !(a + u > 0.0 && a + v > 0.0 && a - v > 0.0 && u - v > 0.0) {
                    return param(format!("exp_two needs a+u, a+v, a-v, u-v > 0; got a={a}, u={u}, v={v}"));
                }
                let mut as_ = vec![a; size];
                as_[0] = v;
                as_[1] = -v;
                sample_exp_weights(&LppExpParams::new(u, as_, [(1, 1), (2, 1)].into())?, rng)
            }
        }
    }
}

/// Stationary last-passage grid with the removed sites pinned to 0.
pub fn stationary_lpp_grid(kind: &StationaryLpp, max_n: usize, max_m: usize, rng: &mut RngStream) -> Result<LppGrid> {
    let w = kind.weights(max_n, rng)?;
    lpp_recurrence(&w, max_n.max(2).max(max_m), max_m)
}

/// KS distance between eps log z(n,m) of the log-gamma polymer with
/// alpha = eps a and the exponential last-passage value E(n,m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpLimitRow {
    pub epsilon: f64,
    pub ks: KsResult,
}

pub fn loggamma_to_exp_limit_check(
    a_circ: f64,
    as_: &[f64],
    epsilons: &[f64],
    point: (usize, usize),
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<Vec<ExpLimitRow>> {
    let (n, m) = point;
    if n > as_.len() || m < 1 || m > n {
        return Err(Error::OutOfRange { n, m });
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return param("epsilon grid must be decreasing");
    }
    let ep = LppExpParams::new(a_circ, as_.to_vec(), BTreeSet::new())?;
    let mut exact = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        exact.push(lpp_recurrence(&sample_exp_weights(&ep, rng)?, n, m)?.value(n, m)?);
    }
    let exact = SampleSet::new("exponential LPP", exact)?;
    let mut rows = Vec::new();
    for &eps in epsilons {
        let p = OctantParams::new(eps * a_circ, as_.iter().map(|a| eps * a).collect())?;
        let mut xs = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            xs.push(eps * partition_recurrence(&sample_weight_field(&p, rng)?, n, m)?.log_z(n, m)?);
        }
        let ks = ks_two_sample(&SampleSet::new(format!("eps={eps}"), xs)?, &exact)?;
        rows.push(ExpLimitRow { epsilon: eps, ks });
    }
    Ok(rows)
}

/// eps log varpi for varpi ~ Gamma^{-1}(eps a); tends to Exp(a) in law.
pub fn scaled_log_weight(eps: f64, a: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(eps * GammaSampler::new(eps * a)?.log_sample_inverse(rng))
}
