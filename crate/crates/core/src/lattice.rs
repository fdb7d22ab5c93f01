//! The inhomogeneous half-space log-gamma polymer on the octant
//! {(i, j) : i >= j >= 1}.

use std::collections::BTreeSet;

use crate::distributions::GammaSampler;
use crate::error::{param, Error, Result};
use crate::rng::RngStream;
use crate::special::{log_add_exp, log_sum_exp, softplus};
use crate::stats::SampleSet;

/// Dense storage for the triangle 1 <= j <= i <= size.
#[derive(Clone, Debug, PartialEq)]
pub struct Triangle<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Clone> Triangle<T> {
    pub fn filled(size: usize, value: T) -> Self {
        Self {
            size,
            data: vec![value; size * (size + 1) / 2],
        }
    }
}

impl<T> Triangle<T> {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> Option<usize> {
        (j >= 1 && j <= i && i <= self.size).then(|| i * (i - 1) / 2 + j - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&T> {
        self.index(i, j).map(|k| &self.data[k])
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> Option<&mut T> {
        self.index(i, j).map(move |k| &mut self.data[k])
    }
}

/// Inhomogeneity parameters: alpha_circ on the diagonal, alpha_i per row and
/// column. Sites listed as exempt carry a divergent weight (parameter sum 0)
/// and are pinned to weight 1 instead of being sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct OctantParams {
    pub alpha_circ: f64,
    pub alphas: Vec<f64>,
    pub exemptions: BTreeSet<(usize, usize)>,
}

impl OctantParams {
    pub fn new(alpha_circ: f64, alphas: Vec<f64>) -> Result<Self> {
        Self::with_exemptions(alpha_circ, alphas, BTreeSet::new())
    }

    pub fn with_exemptions(alpha_circ: f64, alphas: Vec<f64>, exemptions: BTreeSet<(usize, usize)>) -> Result<Self> {
        if alphas.is_empty() {
            return param("need at least one alpha");
        }
        if !alpha_circ.is_finite() || alphas.iter().any(|a| !a.is_finite()) {
            return param("parameters must be finite");
        }
        let p = Self {
            alpha_circ,
            alphas,
            exemptions,
        };
        for &(i, j) in &p.exemptions {
            if j < 1 || j > i || i > p.size() {
                return Err(Error::OutOfRange { n: i, m: j });
            }
        }
        for i in 1..=p.size() {
            for j in 1..=i {
                if !p.is_pinned(i, j) && !(p.shape(i, j) > 0.0) {
                    return param(format!(
                        "site ({i},{j}) has parameter sum {} <= 0 and is not exempt",
                        p.shape(i, j)
                    ));
                }
            }
        }
        Ok(p)
    }

    pub fn size(&self) -> usize {
        self.alphas.len()
    }

    /// Inverse-gamma shape of the weight at (i, j).
    pub fn shape(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.alpha_circ + self.alphas[i - 1]
        } else {
            self.alphas[i - 1] + self.alphas[j - 1]
        }
    }

    pub fn is_pinned(&self, i: usize, j: usize) -> bool {
        self.exemptions.contains(&(i, j))
    }
}

/// Log-weights on the octant triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    log_w: Triangle<f64>,
    pinned: BTreeSet<(usize, usize)>,
}

impl WeightField {
    /// Deterministic field from a closure, no pinned sites.
    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut log_w = Triangle::filled(size, 0.0);
        for i in 1..=size {
            for j in 1..=i {
                *log_w.get_mut(i, j).unwrap() = f(i, j);
            }
        }
        Self {
            log_w,
            pinned: BTreeSet::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.log_w.size()
    }

    pub fn log_weight(&self, i: usize, j: usize) -> Result<f64> {
        self.log_w.get(i, j).copied().ok_or(Error::OutOfRange { n: i, m: j })
    }

    pub fn pinned(&self) -> &BTreeSet<(usize, usize)> {
        &self.pinned
    }

    /// Overwrites one log-weight; pinned sites are refused.
    pub fn set_log_weight(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if self.pinned.contains(&(i, j)) {
            return param(format!("site ({i},{j}) is pinned"));
        }
        *self.log_w.get_mut(i, j).ok_or(Error::OutOfRange { n: i, m: j })? = value;
        Ok(())
    }
}

/// Independent log Gamma^{-1} weights; exempt sites pinned to log-weight 0.
pub fn sample_weight_field(params: &OctantParams, rng: &mut RngStream) -> Result<WeightField> {
    let n = params.size();
    let mut log_w = Triangle::filled(n, 0.0);
    for i in 1..=n {
        for j in 1..=i {
            if !params.is_pinned(i, j) {
                let s = GammaSampler::new(params.shape(i, j))?;
                *log_w.get_mut(i, j).unwrap() = s.log_sample_inverse(rng);
            }
        }
    }
    Ok(WeightField {
        log_w,
        pinned: params.exemptions.clone(),
    })
}

/// log z(n, m) for 1 <= m <= min(n, max_m), n <= max_n; -inf off the octant.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionGrid {
    max_n: usize,
    max_m: usize,
    data: Vec<f64>,
}

impl PartitionGrid {
    fn empty(max_n: usize, max_m: usize) -> Self {
        Self {
            max_n,
            max_m,
            data: vec![f64::NEG_INFINITY; max_n * max_m],
        }
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn max_m(&self) -> usize {
        self.max_m
    }

    #[inline]
    fn at(&self, n: usize, m: usize) -> f64 {
        self.data[(n - 1) * self.max_m + (m - 1)]
    }

    /// log z(n, m); -inf when m > n.
    pub fn log_z(&self, n: usize, m: usize) -> Result<f64> {
        if n < 1 || m < 1 || n > self.max_n || m > self.max_m {
            return Err(Error::OutOfRange { n, m });
        }
        Ok(self.at(n, m))
    }

    /// Rows (n, m, log z) over the octant part of the grid.
    pub fn rows(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for n in 1..=self.max_n {
            for m in 1..=n.min(self.max_m) {
                out.push((n, m, self.at(n, m)));
            }
        }
        out
    }
}

/// The dSHE recurrence in log domain:
/// log z(n,m) = log w(n,m) + logaddexp(log z(n-1,m), log z(n,m-1)).
pub fn partition_recurrence(field: &WeightField, max_n: usize, max_m: usize) -> Result<PartitionGrid> {
    if max_m < 1 || max_n < max_m {
        return param(format!("need max_n >= max_m >= 1, got ({max_n},{max_m})"));
    }
    if field.size() < max_n {
        return Err(Error::OutOfRange { n: max_n, m: max_m });
    }
    let mut g = PartitionGrid::empty(max_n, max_m);
    for n in 1..=max_n {
        let row = (n - 1) * max_m;
        for m in 1..=n.min(max_m) {
            let lw = field.log_w.data[n * (n - 1) / 2 + m - 1];
            let v = if n == 1 {
                lw
            } else {
                let left = if n - 1 >= m { g.data[row - max_m + m - 1] } else { f64::NEG_INFINITY };
                let down = if m >= 2 { g.data[row + m - 2] } else { f64::NEG_INFINITY };
                lw + log_add_exp(left, down)
            };
            g.data[row + m - 1] = v;
        }
    }
    Ok(g)
}

/// Upper bound on the number of paths enumerated by [`partition_bruteforce`].
pub const BRUTEFORCE_PATH_LIMIT: f64 = 1e6;

/// Number of up-right octant paths from (1,1) to (n,m).
pub fn path_count(n: usize, m: usize) -> f64 {
    let mut c = vec![vec![0.0f64; m + 1]; n + 1];
    c[1][1] = 1.0;
    for i in 1..=n {
        for j in 1..=i.min(m) {
            if (i, j) != (1, 1) {
                let left = if i - 1 >= j { c[i - 1][j] } else { 0.0 };
                c[i][j] = left + c[i][j - 1];
            }
        }
    }
    c[n][m]
}

/// log z(n,m) by explicit enumeration of every up-right octant path.
pub fn partition_bruteforce(field: &WeightField, n: usize, m: usize) -> Result<f64> {
    if m < 1 || m > n || n > field.size() {
        return Err(Error::OutOfRange { n, m });
    }
    let count = path_count(n, m);
    if count > BRUTEFORCE_PATH_LIMIT {
        return Err(Error::TooLarge(format!("{count} paths to ({n},{m})")));
    }
    let mut sums = Vec::with_capacity(count as usize);
    enumerate_paths(field, (1, 1), (n, m), 0.0, &mut sums);
    Ok(log_sum_exp(&sums))
}

fn enumerate_paths(field: &WeightField, at: (usize, usize), end: (usize, usize), acc: f64, out: &mut Vec<f64>) {
    let acc = acc + field.log_w.get(at.0, at.1).unwrap();
    if at == end {
        out.push(acc);
        return;
    }
    let (i, j) = at;
    if i < end.0 {
        enumerate_paths(field, (i + 1, j), end, acc, out);
    }
    if j < end.1 && j + 1 <= i {
        enumerate_paths(field, (i, j + 1), end, acc, out);
    }
}

/// log of the sum over up-right octant paths from `start` to `end` of the
/// product of all weights on the path, both endpoints included.
pub fn point_to_point_partition(field: &WeightField, start: (usize, usize), end: (usize, usize)) -> Result<f64> {
    let (a, b) = start;
    let (a2, b2) = end;
    for &(i, j) in &[start, end] {
        if j < 1 || j > i || i > field.size() {
            return Err(Error::OutOfRange { n: i, m: j });
        }
    }
    if a2 < a || b2 < b {
        return Ok(f64::NEG_INFINITY);
    }
    let w = b2 - b + 1;
    let mut z = vec![f64::NEG_INFINITY; (a2 - a + 1) * w];
    for i in a..=a2 {
        for j in b..=b2.min(i) {
            let lw = *field.log_w.get(i, j).unwrap();
            let k = (i - a) * w + (j - b);
            z[k] = if (i, j) == start {
                lw
            } else {
                let left = if i > a && i - 1 >= j { z[k - w] } else { f64::NEG_INFINITY };
                let down = if j > b { z[k - 1] } else { f64::NEG_INFINITY };
                lw + log_add_exp(left, down)
            };
        }
    }
    Ok(z[(a2 - a) * w + (b2 - b)])
}

/// The local update (U, V, w) -> (w(1+U/V), w(1+V/U), (1/U+1/V)^{-1}).
pub fn burke_step(u: f64, v: f64, w: f64) -> (f64, f64, f64) {
    let (a, b, c) = burke_step_log(u.ln(), v.ln(), w.ln());
    (a.exp(), b.exp(), c.exp())
}

/// [`burke_step`] on log inputs and outputs.
#[inline]
pub fn burke_step_log(lu: f64, lv: f64, lw: f64) -> (f64, f64, f64) {
    (lw + softplus(lu - lv), lw + softplus(lv - lu), -log_add_exp(-lu, -lv))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        param(format!("alpha must be positive, got {alpha}"))
    }
}

/// alpha_circ = u, alpha_1 = -u, alpha_i = alpha otherwise; (1,1) pinned.
pub fn one_row_params(alpha: f64, u: f64, size: usize) -> Result<OctantParams> {
    check_alpha(alpha)?;
    if !(u > -alpha && u < alpha) {
        return param(format!("one-row grid needs -alpha < u < alpha, got u={u}, alpha={alpha}"));
    }
    let mut alphas = vec![alpha; size.max(1)];
    alphas[0] = -u;
    OctantParams::with_exemptions(u, alphas, [(1, 1)].into())
}

/// alpha_circ = u, alpha_1 = v, alpha_2 = -v, alpha_i = alpha otherwise;
/// (2,1) pinned, (1,1) pinned when u+v <= 0.
pub fn two_row_params(alpha: f64, u: f64, v: f64, size: usize) -> Result<OctantParams> {
    check_alpha(alpha)?;
    if !(u > -alpha) || !(v > -alpha && v < alpha) || !(v < u) {
        return param(format!(
            "two-row grid needs u > -alpha, -alpha < v < alpha, v < u; got alpha={alpha}, u={u}, v={v}"
        ));
    }
    let mut alphas = vec![alpha; size.max(2)];
    alphas[0] = v;
    alphas[1] = -v;
    let mut ex: BTreeSet<(usize, usize)> = [(2, 1)].into();
    if u + v <= 0.0 {
        ex.insert((1, 1));
    }
    OctantParams::with_exemptions(u, alphas, ex)
}

/// log Z^stat_u on [1, max_n] x [1, max_m].
pub fn one_row_stationary_grid(alpha: f64, u: f64, max_n: usize, max_m: usize, rng: &mut RngStream) -> Result<PartitionGrid> {
    let p = one_row_params(alpha, u, max_n)?;
    partition_recurrence(&sample_weight_field(&p, rng)?, max_n, max_m)
}

/// log Z^stat_{u,v} on [1, max_n] x [1, max_m].
pub fn two_row_stationary_grid(alpha: f64, u: f64, v: f64, max_n: usize, max_m: usize, rng: &mut RngStream) -> Result<PartitionGrid> {
    let p = two_row_params(alpha, u, v, max_n.max(2))?;
    partition_recurrence(&sample_weight_field(&p, rng)?, max_n.max(2), max_m)
}

/// Offsets p_1..p_k of a down-right path; consecutive points differ by
/// (1,0) or (0,-1), and every point has n >= m >= 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DownRightPath {
    points: Vec<(usize, usize)>,
}

impl DownRightPath {
    pub fn new(points: Vec<(usize, usize)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Path("empty path".into()));
        }
        for &(n, m) in &points {
            if m > n {
                return Err(Error::Path(format!("point ({n},{m}) is off the octant")));
            }
        }
        for w in points.windows(2) {
            let (p, q) = (w[0], w[1]);
            let east = q.0 == p.0 + 1 && q.1 == p.1;
            let south = q.0 == p.0 && q.1 + 1 == p.1;
            if !east && !south {
                return Err(Error::Path(format!("step {p:?} -> {q:?} is not east or south")));
            }
        }
        Ok(Self { points })
    }

    /// (0,0), (1,0), ..., (k,0).
    pub fn horizontal(k: usize) -> Self {
        Self {
            points: (0..=k).map(|j| (j, 0)).collect(),
        }
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }
}

/// log z((m,m)+p_i) - log z((m,m)+p_1) along the path.
pub fn increments_along_path(grid: &PartitionGrid, path: &DownRightPath, m: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = path
        .points
        .iter()
        .map(|&(a, b)| grid.log_z(m + a, m + b))
        .collect::<Result<_>>()?;
    Ok(vals.iter().map(|v| v - vals[0]).collect())
}

/// log z(m+k, m) for each offset k, from one fresh field.
pub fn row_log_partition(params: &OctantParams, row_m: usize, offsets: &[usize], rng: &mut RngStream) -> Result<Vec<f64>> {
    let kmax = offsets.iter().copied().max().unwrap_or(0);
    let g = partition_recurrence(&sample_weight_field(params, rng)?, row_m + kmax, row_m)?;
    offsets.iter().map(|&k| g.log_z(row_m + k, row_m)).collect()
}

/// Applies `permutation` (0-based, slot i takes alpha_{permutation[i]}) to the
/// first m alphas.
pub fn permute_params(params: &OctantParams, permutation: &[usize], row_m: usize) -> Result<OctantParams> {
    if permutation.len() != row_m || row_m > params.size() {
        return param(format!("permutation must act on exactly the first {row_m} indices"));
    }
    let mut seen = vec![false; row_m];
    for &p in permutation {
        if p >= row_m || seen[p] {
            return param(format!("{permutation:?} is not a permutation of 0..{row_m}"));
        }
        seen[p] = true;
    }
    let mut alphas = params.alphas.clone();
    for (i, &p) in permutation.iter().enumerate() {
        alphas[i] = params.alphas[p];
    }
    OctantParams::with_exemptions(params.alpha_circ, alphas, params.exemptions.clone())
}

/// Samples of (log z(m+k, m))_k under the original and the permuted
/// parameters, one SampleSet per offset and arm.
pub fn permutation_symmetry_experiment(
    params: &OctantParams,
    permutation: &[usize],
    row_m: usize,
    offsets: &[usize],
    n_samples: usize,
    rng_original: &mut RngStream,
    rng_permuted: &mut RngStream,
) -> Result<(Vec<SampleSet>, Vec<SampleSet>)> {
    let permuted = permute_params(params, permutation, row_m)?;
    let kmax = offsets.iter().copied().max().unwrap_or(0);
    if row_m + kmax > params.size() {
        return Err(Error::OutOfRange { n: row_m + kmax, m: row_m });
    }
    let mut arms = Vec::new();
    for (p, rng, tag) in [(params, rng_original, "original"), (&permuted, rng_permuted, "permuted")] {
        let mut cols = vec![Vec::with_capacity(n_samples); offsets.len()];
        for _ in 0..n_samples {
            for (c, v) in cols.iter_mut().zip(row_log_partition(p, row_m, offsets, rng)?) {
                c.push(v);
            }
        }
        let sets = cols
            .into_iter()
            .zip(offsets)
            .map(|(c, k)| SampleSet::new(format!("{tag} k={k}"), c))
            .collect::<Result<Vec<_>>>()?;
        arms.push(sets);
    }
    let permuted_sets = arms.pop().unwrap();
    Ok((arms.pop().unwrap(), permuted_sets))
}
