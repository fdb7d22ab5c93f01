//! Reflected-walk polymer framework: boundary-weighted kernels, modified
//! partition functions (product form, chaos series, mild recursion),
//! initial-data partitions, the scaled sheet and the Robin heat kernel.

use serde::{Deserialize, Serialize};

use crate::distributions::GammaSampler;
use crate::error::{param, Error, Result};
use crate::rng::RngStream;
use crate::special::{log_normal_tail, normal_pdf};

/// Boundary weights X(i), collected when the walk sits at 0 at time i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryWeights {
    Constant(f64),
    Table { start: i64, values: Vec<f64> },
}

impl BoundaryWeights {
    pub fn constant(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return param(format!("boundary weight must be nonnegative, got {gamma}"));
        }
        Ok(Self::Constant(gamma))
    }

    pub fn table(start: i64, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return param("boundary weights must be nonnegative and finite");
        }
        Ok(Self::Table { start, values })
    }

    /// i.i.d. weights on times start..start+len drawn from `law`.
    pub fn sample_iid(start: i64, len: usize, rng: &mut RngStream, mut law: impl FnMut(&mut RngStream) -> f64) -> Result<Self> {
        Self::table(start, (0..len).map(|_| law(rng)).collect())
    }

    /// i.i.d. ((2 alpha - 1)/2) Gamma^{-1}(alpha + u) weights.
    pub fn log_gamma_matched(alpha: f64, u: f64, start: i64, len: usize, rng: &mut RngStream) -> Result<Self> {
        if !(alpha > 0.5) {
            return param(format!("matched boundary law needs alpha > 1/2, got {alpha}"));
        }
        let g = GammaSampler::new(alpha + u)?;
        let scale = (2.0 * alpha - 1.0) / 2.0;
        Self::sample_iid(start, len, rng, |r| scale / g.sample(r))
    }

    #[inline]
    pub fn get(&self, i: i64) -> Result<f64> {
        match self {
            Self::Constant(g) => Ok(*g),
            Self::Table { start, values } => {
                let k = i - start;
                if k < 0 || k as usize >= values.len() {
                    return Err(Error::Window(format!("boundary weight at time {i}")));
                }
                Ok(values[k as usize])
            }
        }
    }

    fn max_over(&self, s: i64, t: i64) -> Result<f64> {
        let mut m: f64 = 0.0;
        for i in s..t {
            m = m.max(self.get(i)?);
        }
        Ok(m)
    }
}

/// Law of the bulk variables omega.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum BulkLaw {
    /// omega = +-1 with probability 1/2.
    Rademacher,
    /// omega = sqrt(a) (W - 1) with W = a Gamma^{-1}(a + 1), so that
    /// 1 + omega/sqrt(a) is a rescaled log-gamma weight. Mean 0, variance a/(a-1).
    LogGammaMatched { a: f64 },
}

/// beta * omega(r, w) on a finite window; omega(r, 0) = 0 always.
#[derive(Clone, Debug, PartialEq)]
pub struct BulkWeights {
    beta: f64,
    table: Option<BulkTable>,
}

#[derive(Clone, Debug, PartialEq)]
struct BulkTable {
    t0: i64,
    t1: i64,
    x_max: usize,
    beta_omega: Vec<f64>,
}

impl BulkWeights {
    /// beta = 0: no disorder anywhere.
    pub fn zero() -> Self {
        Self { beta: 0.0, table: None }
    }

    /// From a table omega[r - t0][x], x = 0..=x_max; column 0 must vanish.
    pub fn from_omega(beta: f64, t0: i64, omega: Vec<Vec<f64>>) -> Result<Self> {
        let x_max = omega.first().map_or(0, |r| r.len().saturating_sub(1));
        let mut beta_omega = Vec::with_capacity(omega.len() * (x_max + 1));
        for row in &omega {
            if row.len() != x_max + 1 {
                return param("bulk table rows must have equal length");
            }
            if row[0] != 0.0 {
                return param("omega(s, 0) must be 0");
            }
            for &o in row {
                let bo = beta * o;
                if !(1.0 + bo >= 0.0) || !bo.is_finite() {
                    return param(format!("1 + beta omega = {} < 0", 1.0 + bo));
                }
                beta_omega.push(bo);
            }
        }
        Ok(Self {
            beta,
            table: Some(BulkTable {
                t0,
                t1: t0 + omega.len() as i64,
                x_max,
                beta_omega,
            }),
        })
    }

    /// Samples omega from `law` on times t0..t1 and positions 1..=x_max.
    pub fn sample(beta: f64, t0: i64, t1: i64, x_max: usize, law: BulkLaw, rng: &mut RngStream) -> Result<Self> {
        if t1 < t0 {
            return param("empty bulk window");
        }
        let draw: Box<dyn Fn(&mut RngStream) -> f64> = match law {
            BulkLaw::Rademacher => Box::new(|r: &mut RngStream| if r.uniform_open() < 0.5 { -1.0 } else { 1.0 }),
            BulkLaw::LogGammaMatched { a } => {
                let g = GammaSampler::new(a + 1.0)?;
                let sa = a.sqrt();
                Box::new(move |r: &mut RngStream| sa * (a / g.sample(r) - 1.0))
            }
        };
        let rows: Vec<Vec<f64>> = (t0..t1)
            .map(|_| {
                let mut row = vec![0.0; x_max + 1];
                for o in row.iter_mut().skip(1) {
                    *o = draw(rng);
                }
                row
            })
            .collect();
        Self::from_omega(beta, t0, rows)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_zero(&self) -> bool {
        self.table.is_none()
    }

    #[inline]
    pub fn beta_omega(&self, r: i64, w: usize) -> Result<f64> {
        if w == 0 {
            return Ok(0.0);
        }
        match &self.table {
            None => Ok(0.0),
            Some(t) => {
                if r < t.t0 || r >= t.t1 || w > t.x_max {
                    return Err(Error::Window(format!("bulk weight at ({r},{w})")));
                }
                Ok(t.beta_omega[(r - t.t0) as usize * (t.x_max + 1) + w])
            }
        }
    }

    /// omega itself; only meaningful for beta != 0.
    pub fn omega(&self, r: i64, w: usize) -> Result<f64> {
        if self.beta == 0.0 {
            return Ok(0.0);
        }
        Ok(self.beta_omega(r, w)? / self.beta)
    }

    fn max_factor(&self) -> f64 {
        self.table
            .as_ref()
            .map_or(1.0, |t| t.beta_omega.iter().fold(1.0f64, |m, b| m.max(1.0 + b)))
    }
}

/// True when (s,x) and (t,y) lie on the same parity sublattice.
pub fn on_parity(s: i64, x: usize, t: i64, y: usize) -> bool {
    (s + x as i64 - t - y as i64).rem_euclid(2) == 0
}

/// One forward step of the weighted reflected walk from time r. Mass pushed
/// beyond `cap` is dropped.
fn step(cur: &[f64], next: &mut [f64], r: i64, boundary: &BoundaryWeights, bulk: &BulkWeights) -> Result<()> {
    let cap = cur.len() - 1;
    next.iter_mut().for_each(|v| *v = 0.0);
    if cur[0] != 0.0 && cap >= 1 {
        next[1] += cur[0] * boundary.get(r)?;
    }
    let zero_bulk = bulk.is_zero();
    for w in 1..=cap {
        let c = cur[w];
        if c == 0.0 {
            continue;
        }
        let f = if zero_bulk { 0.5 * c } else { 0.5 * c * (1.0 + bulk.beta_omega(r, w)?) };
        next[w - 1] += f;
        if w < cap {
            next[w + 1] += f;
        }
    }
    Ok(())
}

/// Propagates a row of masses from time s to time t (s <= t).
fn propagate(init: Vec<f64>, s: i64, t: i64, boundary: &BoundaryWeights, bulk: &BulkWeights) -> Result<Vec<f64>> {
    let mut cur = init;
    let mut next = vec![0.0; cur.len()];
    for r in s..t {
        step(&cur, &mut next, r, boundary, bulk)?;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

fn delta_row(x: usize, cap: usize) -> Vec<f64> {
    let mut v = vec![0.0; cap + 1];
    v[x] = 1.0;
    v
}

/// Values p(s,x;t,y) for every y from one source point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub s: i64,
    pub x: usize,
    pub t: i64,
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn get(&self, y: usize) -> f64 {
        self.values.get(y).copied().unwrap_or(0.0)
    }

    /// CSV rows (s, x, t, y, value) on the parity sublattice.
    pub fn rows(&self) -> Vec<(i64, usize, i64, usize, f64)> {
        (0..self.values.len())
            .filter(|&y| on_parity(self.s, self.x, self.t, y))
            .map(|y| (self.s, self.x, self.t, y, self.values[y]))
            .collect()
    }
}

/// p_X(s,x;t,.) as a table; entries off the parity sublattice are 0.
pub fn kernel_table(boundary: &BoundaryWeights, s: i64, x: usize, t: i64) -> Result<KernelTable> {
    if t <= s {
        return param(format!("kernel needs t > s, got s={s}, t={t}"));
    }
    let cap = x + (t - s) as usize;
    let values = propagate(delta_row(x, cap), s, t, boundary, &BulkWeights::zero())?;
    Ok(KernelTable { s, x, t, values })
}

/// Transition probability of the reflected simple random walk. Off-parity
/// arguments give 0 (see [`on_parity`]).
pub fn reflected_kernel(s: i64, x: usize, t: i64, y: usize) -> Result<f64> {
    Ok(kernel_table(&BoundaryWeights::Constant(1.0), s, x, t)?.get(y))
}

/// The boundary-weighted kernel p_X(s,x;t,y).
pub fn boundary_kernel(weights: &BoundaryWeights, s: i64, x: usize, t: i64, y: usize) -> Result<f64> {
    Ok(kernel_table(weights, s, x, t)?.get(y))
}

fn check_times(s: i64, t: i64) -> Result<()> {
    if t < s {
        return param(format!("need s <= t, got s={s}, t={t}"));
    }
    Ok(())
}

/// z(s,x;t,y) as a sum over walk paths of prod_{r=s}^{t-1}(1 + beta omega(r,S_r))
/// against the boundary-weighted walk measure. For s = t this is the
/// indicator of x = y.
pub fn modified_partition_direct(boundary: &BoundaryWeights, bulk: &BulkWeights, s: i64, x: usize, t: i64, y: usize) -> Result<f64> {
    check_times(s, t)?;
    let cap = x + (t - s) as usize;
    Ok(propagate(delta_row(x, cap), s, t, boundary, bulk)?.get(y).copied().unwrap_or(0.0))
}

/// Row z(s,x;t,.) from the product form.
pub fn modified_partition_row(boundary: &BoundaryWeights, bulk: &BulkWeights, s: i64, x: usize, t: i64) -> Result<Vec<f64>> {
    check_times(s, t)?;
    propagate(delta_row(x, x + (t - s) as usize), s, t, boundary, bulk)
}

/// Boundary-kernel values between all window points, K[(r,w)][(r',w')].
struct WindowKernels {
    s: i64,
    t: i64,
    width: usize,
    /// rows[(r - s) * width + w] = propagated rows at times r..=t
    rows: Vec<Vec<Vec<f64>>>,
}

impl WindowKernels {
    fn new(boundary: &BoundaryWeights, s: i64, t: i64, width: usize) -> Result<Self> {
        let mut rows = Vec::new();
        let zero = BulkWeights::zero();
        for r in s..=t {
            for w in 0..width {
                let mut cur = delta_row(w, width - 1);
                let mut by_time = vec![cur.clone()];
                let mut next = vec![0.0; width];
                for q in r..t {
                    step(&cur, &mut next, q, boundary, &zero)?;
                    std::mem::swap(&mut cur, &mut next);
                    by_time.push(cur.clone());
                }
                rows.push(by_time);
            }
        }
        Ok(Self { s, t, width, rows })
    }

    /// p_X(r,w;r2,w2) with p(r,w;r,w2) = 1{w = w2}.
    #[inline]
    fn get(&self, r: i64, w: usize, r2: i64, w2: usize) -> f64 {
        debug_assert!(r2 >= r && r2 <= self.t);
        self.rows[(r - self.s) as usize * self.width + w][(r2 - r) as usize][w2]
    }
}

/// Outcome of a full chaos-series evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosSummary {
    pub value: f64,
    /// Contribution of each order k.
    pub by_order: Vec<f64>,
    /// Number of (k, r, w) cells with a nonzero product of kernels and weights.
    pub nonzero_terms: u64,
}

/// Largest t - s accepted by the chaos-series enumeration.
pub const CHAOS_MAX_SPAN: i64 = 12;

/// Full chaos expansion
/// sum_k sum_{s <= r_1 < ... < r_k < t} sum_w prod p_X(r_{j-1},w_{j-1};r_j,w_j)
/// prod beta omega(r_j, w_j).
pub fn modified_partition_chaos_terms(boundary: &BoundaryWeights, bulk: &BulkWeights, s: i64, x: usize, t: i64, y: usize) -> Result<ChaosSummary> {
    check_times(s, t)?;
    if t - s > CHAOS_MAX_SPAN {
        return Err(Error::TooLarge(format!("chaos series over span {} > {CHAOS_MAX_SPAN}", t - s)));
    }
    if y > x + (t - s) as usize {
        return Ok(ChaosSummary {
            value: 0.0,
            by_order: vec![0.0; (t - s) as usize + 1],
            nonzero_terms: 0,
        });
    }
    let width = x + (t - s) as usize + 1;
    let k = WindowKernels::new(boundary, s, t, width)?;
    let mut bw = vec![0.0; ((t - s) as usize) * width];
    for r in s..t {
        for w in 1..width {
            bw[(r - s) as usize * width + w] = bulk.beta_omega(r, w)?;
        }
    }
    let mut out = ChaosSummary {
        value: 0.0,
        by_order: vec![0.0; (t - s) as usize + 1],
        nonzero_terms: 0,
    };
    struct Ctx<'a> {
        k: &'a WindowKernels,
        bw: &'a [f64],
        s: i64,
        t: i64,
        y: usize,
        width: usize,
    }
    fn rec(c: &Ctx, r_prev: i64, w_prev: usize, first: bool, acc: f64, order: usize, out: &mut ChaosSummary) {
        let last = acc * c.k.get(r_prev, w_prev, c.t, c.y);
        if last != 0.0 {
            out.nonzero_terms += 1;
            out.by_order[order] += last;
        }
        let r_start = if first { r_prev } else { r_prev + 1 };
        for r in r_start..c.t {
            for w in 1..c.width {
                let b = c.bw[(r - c.s) as usize * c.width + w];
                if b == 0.0 {
                    continue;
                }
                let p = c.k.get(r_prev, w_prev, r, w);
                if p == 0.0 {
                    continue;
                }
                rec(c, r, w, false, acc * p * b, order + 1, out);
            }
        }
    }
    let ctx = Ctx {
        k: &k,
        bw: &bw,
        s,
        t,
        y,
        width,
    };
    rec(&ctx, s, x, true, 1.0, 0, &mut out);
    out.value = out.by_order.iter().sum();
    Ok(out)
}

pub fn modified_partition_chaos(boundary: &BoundaryWeights, bulk: &BulkWeights, s: i64, x: usize, t: i64, y: usize) -> Result<f64> {
    Ok(modified_partition_chaos_terms(boundary, bulk, s, x, t, y)?.value)
}

/// Discrete mild equation
/// z(s,x;t,y) = p_X(s,x;t,y) + sum_{r=s}^{t-1} sum_w p_X(r,w;t,y) beta omega(r,w) z(s,x;r,w),
/// with z(s,x;r,.) computed recursively in r.
pub fn modified_partition_mild(boundary: &BoundaryWeights, bulk: &BulkWeights, s: i64, x: usize, t: i64, y: usize) -> Result<f64> {
    check_times(s, t)?;
    if y > x + (t - s) as usize {
        return Ok(0.0);
    }
    let width = x + (t - s) as usize + 1;
    let k = WindowKernels::new(boundary, s, t, width)?;
    // z_rows[r - s][w] = z(s,x;r,w)
    let mut z_rows: Vec<Vec<f64>> = Vec::with_capacity((t - s) as usize + 1);
    for r2 in s..=t {
        let mut row = vec![0.0; width];
        for (w2, slot) in row.iter_mut().enumerate() {
            let mut v = k.get(s, x, r2, w2);
            for r in s..r2 {
                let zr = &z_rows[(r - s) as usize];
                for w in 1..width {
                    if zr[w] == 0.0 {
                        continue;
                    }
                    let b = bulk.beta_omega(r, w)?;
                    if b != 0.0 {
                        v += k.get(r, w, r2, w2) * b * zr[w];
                    }
                }
            }
            *slot = v;
        }
        z_rows.push(row);
    }
    Ok(z_rows[(t - s) as usize][y])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDataKind {
    /// sum over even x of init(x) z(0,x;t,y).
    Vertical,
    /// sum over x of init(x) z(x,x;t,y).
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDataPartition {
    pub value: f64,
    /// Upper bound on the dropped terms x > x_truncation.
    pub tail_bound: f64,
    /// Set when the truncation radius is below y + 8 sqrt(t).
    pub truncation_warning: bool,
}

/// Partition function with initial data `init[x]`, truncated at x <= x_truncation.
///
/// Dropped terms are bounded with the Hoeffding envelope of the reflected
/// walk, exp(-(x-y)^2 / (2 tau)), times the largest per-step weight factor
/// raised to the number of steps tau.
pub fn partition_with_initial_data(
    kind: InitialDataKind,
    init: &[f64],
    boundary: &BoundaryWeights,
    bulk: &BulkWeights,
    t: i64,
    y: usize,
    x_truncation: usize,
) -> Result<InitialDataPartition> {
    if t < 0 {
        return param("initial data partitions need t >= 0");
    }
    if init.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return param("initial data must be nonnegative and finite");
    }
    let keep = init.len().min(x_truncation + 1);
    let value = match kind {
        InitialDataKind::Vertical => {
            if init.iter().enumerate().any(|(x, v)| x % 2 == 1 && *v != 0.0) {
                return Err(Error::Grid("vertical initial data lives on even x".into()));
            }
            let cap = keep.max(y + 1) + t as usize;
            let mut row = vec![0.0; cap + 1];
            row[..keep].copy_from_slice(&init[..keep]);
            propagate(row, 0, t, boundary, bulk)?.get(y).copied().unwrap_or(0.0)
        }
        InitialDataKind::Diagonal => {
            let cap = (t as usize).max(y) + 1;
            let mut cur = vec![0.0; cap + 1];
            let mut next = vec![0.0; cap + 1];
            for r in 0..t {
                if (r as usize) < keep {
                    cur[r as usize] += init[r as usize];
                }
                step(&cur, &mut next, r, boundary, bulk)?;
                std::mem::swap(&mut cur, &mut next);
            }
            if (t as usize) < keep {
                cur[t as usize] += init[t as usize];
            }
            cur[y]
        }
    };
    let gamma = boundary.max_over(0, t.max(0))?.max(1.0) * bulk.max_factor();
    let mut tail_bound = 0.0;
    for (x, &v) in init.iter().enumerate().skip(keep) {
        if v == 0.0 {
            continue;
        }
        let tau = match kind {
            InitialDataKind::Vertical => t,
            InitialDataKind::Diagonal => t - x as i64,
        };
        if tau < 0 {
            continue;
        }
        let d = x as f64 - y as f64;
        let env = if tau == 0 {
            if x == y { 1.0 } else { 0.0 }
        } else if d > 0.0 {
            (-d * d / (2.0 * tau as f64)).exp()
        } else {
            1.0
        };
        tail_bound += v * gamma.powi(tau as i32) * env;
    }
    Ok(InitialDataPartition {
        value,
        tail_bound,
        truncation_warning: (x_truncation as f64) < y as f64 + 8.0 * (t.max(0) as f64).sqrt(),
    })
}

/// Window over which [`monotone_coupling_check`] compares partition functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingWindow {
    pub s_min: i64,
    pub s_max: i64,
    pub x_max: usize,
    pub t_max: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub checked: u64,
    pub violations: u64,
    /// Points where both inequalities are strict.
    pub strict: u64,
}

/// Checks z_low <= z_mid <= z_high at every (s,x,t,y) in the window.
pub fn monotone_coupling_check(
    low: &BoundaryWeights,
    mid: &BoundaryWeights,
    high: &BoundaryWeights,
    bulk: &BulkWeights,
    window: CouplingWindow,
) -> Result<CouplingReport> {
    for i in window.s_min..window.t_max {
        let (a, b, c) = (low.get(i)?, mid.get(i)?, high.get(i)?);
        if !(a <= b && b <= c) {
            return param(format!("boundary weights not ordered at time {i}: {a}, {b}, {c}"));
        }
    }
    let mut rep = CouplingReport {
        checked: 0,
        violations: 0,
        strict: 0,
    };
    for s in window.s_min..=window.s_max {
        for x in 0..=window.x_max {
            let cap = x + (window.t_max - s).max(0) as usize;
            let mut rows = [delta_row(x, cap), delta_row(x, cap), delta_row(x, cap)];
            let mut next = vec![0.0; cap + 1];
            for r in s..window.t_max {
                for (row, b) in rows.iter_mut().zip([low, mid, high]) {
                    step(row, &mut next, r, b, bulk)?;
                    std::mem::swap(row, &mut next);
                }
                for y in 0..=cap {
                    let (a, b, c) = (rows[0][y], rows[1][y], rows[2][y]);
                    rep.checked += 1;
                    if !(a <= b && b <= c) {
                        rep.violations += 1;
                    }
                    if a < b && b < c {
                        rep.strict += 1;
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// n, mu and beta of the intermediate-disorder scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub n: u64,
    pub mu: f64,
    pub beta: f64,
}

impl ScalingParams {
    pub fn new(n: u64, mu: f64, beta: f64) -> Result<Self> {
        if n == 0 || !mu.is_finite() || !beta.is_finite() {
            return param("scaling needs n >= 1 and finite mu, beta");
        }
        Ok(Self { n, mu, beta })
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// n^{-1/4} beta / sqrt 2.
    pub fn beta_n(&self) -> f64 {
        (self.n as f64).powf(-0.25) * self.beta / std::f64::consts::SQRT_2
    }

    /// Deterministic boundary level 1 - mu / sqrt n.
    pub fn gamma(&self) -> f64 {
        1.0 - self.mu / self.sqrt_n()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundaryMode {
    /// X = 1 - mu/sqrt(n) everywhere.
    Deterministic,
    /// i.i.d. ((2 alpha - 1)/2) Gamma^{-1}(alpha + u) with alpha = 1/2 + sqrt n
    /// and u = mu + 1/2.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheetOptions {
    pub boundary: BoundaryMode,
    pub bulk_law: BulkLaw,
    /// Positions beyond x + truncation_sigmas * sqrt(n (T-S)) are dropped.
    pub truncation_sigmas: f64,
    pub interpolate: bool,
}

impl Default for SheetOptions {
    fn default() -> Self {
        Self {
            boundary: BoundaryMode::Deterministic,
            bulk_law: BulkLaw::Rademacher,
            truncation_sigmas: 12.0,
            interpolate: true,
        }
    }
}

/// Scaled sheet values at every lattice y from one lattice source (s, x).
fn sheet_rows(p: &ScalingParams, s: i64, x: usize, t: i64, opts: &SheetOptions, rng: &mut RngStream) -> Result<Vec<f64>> {
    let span = (t - s) as usize;
    let cap = x + ((opts.truncation_sigmas * (span as f64).sqrt()).ceil() as usize).min(span) + 2;
    let boundary = match opts.boundary {
        BoundaryMode::Deterministic => BoundaryWeights::constant(p.gamma())?,
        BoundaryMode::Random => {
            let alpha = 0.5 + p.sqrt_n();
            BoundaryWeights::log_gamma_matched(alpha, p.mu + 0.5, s, span, rng)?
        }
    };
    let bulk = if p.beta == 0.0 {
        BulkWeights::zero()
    } else {
        BulkWeights::sample(p.beta_n(), s, t, cap, opts.bulk_law, rng)?
    };
    let row = propagate(delta_row(x, cap), s, t, &boundary, &bulk)?;
    let half = 0.5 * p.sqrt_n();
    Ok(row
        .iter()
        .enumerate()
        .map(|(y, v)| half * v * if y == 0 { 2.0 } else { 1.0 })
        .collect())
}

fn lattice_coord(v: f64, scale: f64, what: &str) -> Result<(i64, f64)> {
    let z = v * scale;
    let r = z.round();
    if (z - r).abs() < 1e-9 {
        return Ok((r as i64, 0.0));
    }
    if !z.is_finite() {
        return Err(Error::Grid(format!("{what} = {v}")));
    }
    Ok((z.floor() as i64, z - z.floor()))
}

/// (sqrt n / 2) z(nS, sqrt n X; nT, sqrt n Y) 2^{1{Y=0}} with
/// beta^(n) = n^{-1/4} beta / sqrt 2.
///
/// Off-grid arguments (or off-parity lattice points, which are replaced by the
/// average of their two spatial neighbours) are handled by multilinear
/// interpolation over the surrounding lattice cell when `opts.interpolate` is
/// set; otherwise they are an error. With random weights, every corner uses
/// fresh draws from `rng`.
pub fn scaled_sheet(p: &ScalingParams, s_time: f64, x: f64, t_time: f64, y: f64, opts: &SheetOptions, rng: &mut RngStream) -> Result<f64> {
    if !(s_time < t_time) || x < 0.0 || y < 0.0 {
        return param(format!("need S < T and X, Y >= 0; got S={s_time}, X={x}, T={t_time}, Y={y}"));
    }
    let nf = p.n as f64;
    let (s0, fs) = lattice_coord(s_time, nf, "S")?;
    let (t0, ft) = lattice_coord(t_time, nf, "T")?;
    let (x0, fx) = lattice_coord(x, p.sqrt_n(), "X")?;
    let (y0, fy) = lattice_coord(y, p.sqrt_n(), "Y")?;
    let off_grid = fs + ft + fx + fy > 0.0;
    if !opts.interpolate && (off_grid || !on_parity(s0, x0 as usize, t0, y0 as usize)) {
        return Err(Error::Grid(format!("({s_time},{x};{t_time},{y}) is not on the parity lattice")));
    }
    let mut total = 0.0;
    for corner in 0..16u32 {
        let pick = |bit: u32, base: i64, frac: f64| -> (i64, f64) {
            if corner & bit != 0 {
                (base + 1, frac)
            } else {
                (base, 1.0 - frac)
            }
        };
        let (cs, ws) = pick(1, s0, fs);
        let (cx, wx) = pick(2, x0, fx);
        let (ct, wt) = pick(4, t0, ft);
        let (cy, wy) = pick(8, y0, fy);
        let w = ws * wx * wt * wy;
        if w == 0.0 {
            continue;
        }
        if ct <= cs {
            return param("interpolation cell collapses S and T");
        }
        let rows = sheet_rows(p, cs, cx as usize, ct, opts, rng)?;
        let at = |yy: i64| rows.get(yy as usize).copied().unwrap_or(0.0);
        let v = if on_parity(cs, cx as usize, ct, cy as usize) {
            at(cy)
        } else if cy == 0 {
            at(1)
        } else {
            0.5 * (at(cy - 1) + at(cy + 1))
        };
        total += w * v;
    }
    Ok(total)
}

/// Scaled sheet at every lattice Y reachable from an on-grid (S, X) to an
/// on-grid T; returns (Y, value) on the parity sublattice.
pub fn scaled_sheet_profile(p: &ScalingParams, s_time: f64, x: f64, t_time: f64, opts: &SheetOptions, rng: &mut RngStream) -> Result<Vec<(f64, f64)>> {
    let nf = p.n as f64;
    let (s0, fs) = lattice_coord(s_time, nf, "S")?;
    let (t0, ft) = lattice_coord(t_time, nf, "T")?;
    let (x0, fx) = lattice_coord(x, p.sqrt_n(), "X")?;
    if fs + ft + fx > 0.0 || t0 <= s0 {
        return Err(Error::Grid("profile needs on-grid S < T and X".into()));
    }
    let rows = sheet_rows(p, s0, x0 as usize, t0, opts, rng)?;
    Ok(rows
        .iter()
        .enumerate()
        .filter(|(y, _)| on_parity(s0, x0 as usize, t0, *y))
        .map(|(y, v)| (y as f64 / p.sqrt_n(), *v))
        .collect())
}

/// Robin heat kernel on the half-line:
/// phi(X-Y) + phi(X+Y) - 2 mu exp(mu (X+Y) + mu^2 tau / 2) Q((X+Y+mu tau)/sqrt tau),
/// tau = T - S, phi the centred Gaussian density of variance tau.
pub fn robin_heat_kernel(mu: f64, s: f64, x: f64, t: f64, y: f64) -> Result<f64> {
    if !(t > s) {
        return param(format!("Robin kernel needs T > S, got S={s}, T={t}"));
    }
    if x < 0.0 || y < 0.0 {
        return param("Robin kernel lives on X, Y >= 0");
    }
    let tau = t - s;
    let st = tau.sqrt();
    let phi = |d: f64| normal_pdf(d / st) / st;
    let mut v = phi(x - y) + phi(x + y);
    if mu != 0.0 {
        let log_tail = mu * (x + y) + 0.5 * mu * mu * tau + log_normal_tail((x + y + mu * tau) / st);
        v -= 2.0 * mu * log_tail.exp();
    }
    Ok(v)
}

/// Residuals of the defining properties of the Robin kernel, by finite
/// differences with step h.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobinChecks {
    /// max |dP/dT - (1/2) d2P/dY2| over the probe points.
    pub pde_residual: f64,
    /// max |dP/dY(Y=0) - mu P(Y=0)| over the probe points.
    pub boundary_residual: f64,
    /// |int_0^inf P dY - 1| at mu = 0 (NaN for mu != 0).
    pub normalization_error: f64,
}

pub fn robin_property_checks(mu: f64, h: f64) -> Result<RobinChecks> {
    let p = |x: f64, t: f64, y: f64| robin_heat_kernel(mu, 0.0, x, t, y);
    let mut pde: f64 = 0.0;
    let mut bc: f64 = 0.0;
    for &x in &[0.0, 0.3, 1.0] {
        for &t in &[0.5, 1.0, 2.0] {
            for &y in &[0.2, 0.7, 1.5] {
                let dt = (p(x, t + h, y)? - p(x, t - h, y)?) / (2.0 * h);
                let dyy = (p(x, t, y + h)? - 2.0 * p(x, t, y)? + p(x, t, y - h)?) / (h * h);
                pde = pde.max((dt - 0.5 * dyy).abs());
            }
            let dy0 = (-3.0 * p(x, t, 0.0)? + 4.0 * p(x, t, h)? - p(x, t, 2.0 * h)?) / (2.0 * h);
            bc = bc.max((dy0 - mu * p(x, t, 0.0)?).abs());
        }
    }
    let normalization_error = if mu == 0.0 {
        let (x, t): (f64, f64) = (0.7, 1.0);
        (simpson(|y| robin_heat_kernel(0.0, 0.0, x, t, y).unwrap(), 0.0, x + 15.0 * t.sqrt(), 20_000) - 1.0).abs()
    } else {
        f64::NAN
    };
    Ok(RobinChecks {
        pde_residual: pde,
        boundary_residual: bc,
        normalization_error,
    })
}

/// Composite Simpson rule with an even number of intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Smallest C with value <= C tau^{-1/2} exp(-d^2/(C tau)) at every
/// (tau, d, value) triple; found by bisection since the envelope grows with C.
pub fn gaussian_envelope_constant(points: &[(f64, f64, f64)]) -> f64 {
    let fits = |c: f64| points.iter().all(|&(tau, d, v)| v <= c / tau.sqrt() * (-(d * d) / (c * tau)).exp());
    let mut hi = 1.0;
    while !fits(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn brute_force_kernel(b: &BoundaryWeights, s: i64, x: usize, t: i64, y: usize) -> f64 {
        fn go(b: &BoundaryWeights, r: i64, w: usize, t: i64, y: usize, acc: f64) -> f64 {
            if r == t {
                return if w == y { acc } else { 0.0 };
            }
            if w == 0 {
                go(b, r + 1, 1, t, y, acc * b.get(r).unwrap())
            } else {
                go(b, r + 1, w - 1, t, y, acc * 0.5) + go(b, r + 1, w + 1, t, y, acc * 0.5)
            }
        }
        go(b, s, x, t, y, 1.0)
    }

    #[test]
    fn reflected_kernel_examples() {
        assert_eq!(reflected_kernel(0, 0, 1, 1).unwrap(), 1.0);
        assert_eq!(reflected_kernel(0, 0, 2, 0).unwrap(), 0.5);
        assert_eq!(reflected_kernel(0, 0, 2, 2).unwrap(), 0.5);
        assert_eq!(reflected_kernel(0, 0, 2, 1).unwrap(), 0.0);
        assert!(!on_parity(0, 0, 2, 1));
        let total: f64 = kernel_table(&BoundaryWeights::Constant(1.0), 0, 3, 7).unwrap().values.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-15);
        assert!(reflected_kernel(3, 0, 3, 0).is_err());
    }

    #[test]
    fn boundary_kernel_examples() {
        let g = BoundaryWeights::Constant(0.7);
        assert_relative_eq!(boundary_kernel(&g, 0, 0, 2, 0).unwrap(), 0.35);
        let mut r = RngStream::new(1, 0);
        let b = BoundaryWeights::sample_iid(-2, 14, &mut r, |r| 2.0 * r.uniform_open()).unwrap();
        for (x, y, span) in [(0, 0, 10), (1, 3, 8), (2, 0, 6), (0, 4, 10)] {
            let s = -2;
            assert_relative_eq!(
                boundary_kernel(&b, s, x, s + span, y).unwrap(),
                brute_force_kernel(&b, s, x, s + span, y),
                max_relative = 1e-14
            );
        }
        assert!(boundary_kernel(&b, 5, 0, 14, 1).is_err());
    }

    fn random_instance(seed: u64, s: i64, span: i64, x: usize) -> (BoundaryWeights, BulkWeights) {
        let mut r = RngStream::new(seed, 0);
        let b = BoundaryWeights::sample_iid(s, span as usize, &mut r, |r| 0.5 + r.uniform_open()).unwrap();
        let bulk = BulkWeights::sample(0.6, s, s + span, x + span as usize + 2, BulkLaw::Rademacher, &mut r).unwrap();
        (b, bulk)
    }

    #[test]
    fn three_forms_agree() {
        for seed in 0..30 {
            let span = 1 + (seed % 10) as i64;
            let x = (seed % 3) as usize;
            let (b, bulk) = random_instance(seed, 1, span, x);
            for y in 0..=(x + span as usize) {
                if !on_parity(1, x, 1 + span, y) {
                    continue;
                }
                let d = modified_partition_direct(&b, &bulk, 1, x, 1 + span, y).unwrap();
                let c = modified_partition_chaos(&b, &bulk, 1, x, 1 + span, y).unwrap();
                let m = modified_partition_mild(&b, &bulk, 1, x, 1 + span, y).unwrap();
                assert!((d - c).abs() <= 1e-12 * d.abs().max(1e-300), "seed {seed} y {y}: {d} vs {c}");
                assert!((d - m).abs() <= 1e-12 * d.abs().max(1e-300), "seed {seed} y {y}: {d} vs {m}");
            }
        }
    }

    #[test]
    fn zero_beta_and_first_order() {
        let b = BoundaryWeights::Constant(0.8);
        let zero = BulkWeights::zero();
        assert_eq!(
            modified_partition_direct(&b, &zero, 0, 1, 6, 1).unwrap(),
            boundary_kernel(&b, 0, 1, 6, 1).unwrap()
        );
        let (bb, bulk) = random_instance(5, 0, 6, 1);
        let terms = modified_partition_chaos_terms(&bb, &bulk, 0, 1, 6, 3).unwrap();
        assert_relative_eq!(terms.by_order[0], boundary_kernel(&bb, 0, 1, 6, 3).unwrap(), max_relative = 1e-15);
        // one-step unroll of the mild equation
        let m = modified_partition_mild(&bb, &bulk, 0, 1, 1, 2).unwrap();
        let expect = 0.5 * (1.0 + bulk.beta_omega(0, 1).unwrap());
        assert_relative_eq!(m, expect, max_relative = 1e-15);
        assert_eq!(modified_partition_direct(&bb, &bulk, 2, 1, 2, 1).unwrap(), 1.0);
    }

    #[test]
    fn chaos_term_count_matches_enumeration() {
        // count (k, r, w) tuples whose kernels and weights are all nonzero by a
        // separate reachability rule: |w' - w| <= dr with matching parity
        let (s, span, x, y) = (0i64, 6i64, 1usize, 1usize);
        let (b, bulk) = random_instance(11, s, span, x);
        let t = s + span;
        let width = x.max(y) + span as usize + 1;
        let reach = |r: i64, w: usize, r2: i64, w2: usize| {
            let dr = r2 - r;
            let dw = (w2 as i64 - w as i64).abs();
            dr >= dw && (dr - dw) % 2 == 0
        };
        fn count(
            reach: &dyn Fn(i64, usize, i64, usize) -> bool,
            r: i64,
            w: usize,
            first: bool,
            t: i64,
            y: usize,
            width: usize,
        ) -> u64 {
            let mut c = u64::from(reach(r, w, t, y));
            let start = if first { r } else { r + 1 };
            for r2 in start..t {
                for w2 in 1..width {
                    if reach(r, w, r2, w2) {
                        c += count(reach, r2, w2, false, t, y, width);
                    }
                }
            }
            c
        }
        let expected = count(&reach, s, x, true, t, y, width);
        let got = modified_partition_chaos_terms(&b, &bulk, s, x, t, y).unwrap().nonzero_terms;
        assert_eq!(got, expected);
        assert!(modified_partition_chaos_terms(&b, &BulkWeights::zero(), 0, 0, 20, 0).is_err());
    }

    #[test]
    fn composition_law() {
        let (b, bulk) = random_instance(3, 0, 10, 2);
        let (s, x, t, y) = (0, 2, 10, 2);
        let full = modified_partition_direct(&b, &bulk, s, x, t, y).unwrap();
        for r in 1..10 {
            let left = modified_partition_row(&b, &bulk, s, x, r).unwrap();
            let mut sum = 0.0;
            for (w, lv) in left.iter().enumerate() {
                if *lv != 0.0 {
                    sum += lv * modified_partition_direct(&b, &bulk, r, w, t, y).unwrap();
                }
            }
            assert_relative_eq!(sum, full, max_relative = 1e-13);
        }
    }

    #[test]
    fn initial_data_cases() {
        let (b, bulk) = random_instance(8, 0, 8, 12);
        let mut init = vec![0.0; 13];
        init[4] = 1.0;
        let v = partition_with_initial_data(InitialDataKind::Vertical, &init, &b, &bulk, 8, 2, 12).unwrap();
        assert_relative_eq!(v.value, modified_partition_direct(&b, &bulk, 0, 4, 8, 2).unwrap(), max_relative = 1e-14);
        assert_eq!(v.tail_bound, 0.0);
        let ones: Vec<f64> = (0..30).map(|x| if x % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let g = BoundaryWeights::Constant(0.9);
        let zero = BulkWeights::zero();
        let v = partition_with_initial_data(InitialDataKind::Vertical, &ones, &g, &zero, 6, 0, 29).unwrap();
        let direct: f64 = (0..30).step_by(2).map(|x| boundary_kernel(&g, 0, x, 6, 0).unwrap()).sum();
        assert_relative_eq!(v.value, direct, max_relative = 1e-14);
        let trunc = partition_with_initial_data(InitialDataKind::Vertical, &ones, &g, &zero, 6, 0, 4).unwrap();
        assert!(trunc.truncation_warning);
        assert!(v.value - trunc.value <= trunc.tail_bound + 1e-15);
        // diagonal: compare with explicit sum
        let diag: Vec<f64> = (0..7).map(|x| 1.0 + x as f64).collect();
        let d = partition_with_initial_data(InitialDataKind::Diagonal, &diag, &b, &bulk, 6, 2, 6).unwrap();
        let explicit: f64 = (0..=6)
            .map(|x| diag[x] * modified_partition_direct(&b, &bulk, x as i64, x, 6, 2).unwrap())
            .sum();
        assert_relative_eq!(d.value, explicit, max_relative = 1e-14);
        let mut odd = vec![0.0; 4];
        odd[1] = 1.0;
        assert!(partition_with_initial_data(InitialDataKind::Vertical, &odd, &g, &zero, 4, 1, 3).is_err());
    }

    #[test]
    fn coupling_orders() {
        let w = CouplingWindow {
            s_min: 0,
            s_max: 2,
            x_max: 3,
            t_max: 9,
        };
        let (_, bulk) = random_instance(2, 0, 9, 12);
        let (lo, mid, hi) = (
            BoundaryWeights::Constant(0.5),
            BoundaryWeights::Constant(1.0),
            BoundaryWeights::Constant(1.5),
        );
        let rep = monotone_coupling_check(&lo, &mid, &hi, &bulk, w).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.strict > 0);
        let same = monotone_coupling_check(&mid, &mid, &mid, &bulk, w).unwrap();
        assert_eq!((same.violations, same.strict), (0, 0));
        assert!(monotone_coupling_check(&hi, &mid, &lo, &bulk, w).is_err());
    }

    #[test]
    fn robin_kernel_properties() {
        for &mu in &[-1.0, 0.0, 2.0] {
            let c = robin_property_checks(mu, 1e-3).unwrap();
            assert!(c.pde_residual < 1e-4, "mu {mu}: {c:?}");
            assert!(c.boundary_residual < 1e-5, "mu {mu}: {c:?}");
            if mu == 0.0 {
                assert!(c.normalization_error < 1e-8, "{c:?}");
            }
        }
        let (x, y, t) = (0.4, 0.9, 0.8);
        let phi = |d: f64| (-d * d / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt();
        assert_relative_eq!(robin_heat_kernel(0.0, 0.0, x, t, y).unwrap(), phi(x - y) + phi(x + y), max_relative = 1e-14);
        assert!(robin_heat_kernel(0.0, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn robin_delta_limit() {
        // mass and mean of P(0, X; tau, .) approach 1 and X as tau -> 0
        let x = 1.0;
        for &mu in &[-1.0, 0.5] {
            let tau = 1e-4;
            let f = |y: f64| robin_heat_kernel(mu, 0.0, x, tau, y).unwrap();
            let mass = simpson(f, 0.0, 2.0, 20_000);
            let mean = simpson(|y| y * f(y), 0.0, 2.0, 20_000);
            assert!((mass - 1.0).abs() < 1e-6 && (mean - x).abs() < 1e-6, "mu {mu}: {mass} {mean}");
        }
    }

    #[test]
    fn scaled_sheet_grid_and_interpolation() {
        let p = ScalingParams::new(64, 0.0, 0.0).unwrap();
        let opts = SheetOptions::default();
        let mut r = RngStream::new(0, 0);
        let on = scaled_sheet(&p, 0.0, 0.25, 1.0, 0.5, &opts, &mut r).unwrap();
        let direct = 4.0 * reflected_kernel(0, 2, 64, 4).unwrap();
        assert_relative_eq!(on, direct, max_relative = 1e-12);
        let strict = SheetOptions {
            interpolate: false,
            ..opts
        };
        assert!(scaled_sheet(&p, 0.0, 0.25, 1.0, 0.51, &strict, &mut r).is_err());
        let mid = scaled_sheet(&p, 0.0, 0.25, 1.0, 0.5625, &opts, &mut r).unwrap();
        assert!(mid > 0.0);
        assert_relative_eq!(p.beta_n(), 0.0);
        assert_relative_eq!(ScalingParams::new(16, 1.0, 1.0).unwrap().gamma(), 0.75);
    }

    #[test]
    fn envelope_fit() {
        let pts = [(1.0, 0.0, 0.5), (0.5, 1.0, 0.1)];
        let c = gaussian_envelope_constant(&pts);
        for &(tau, d, v) in &pts {
            assert!(v <= c / f64::sqrt(tau) * (-(d * d) / (c * tau)).exp() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn kernel_normalization(x in 0usize..6, span in 1i64..14) {
            let k = kernel_table(&BoundaryWeights::Constant(1.0), 0, x, span).unwrap();
            let total: f64 = k.values.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (y, v) in k.values.iter().enumerate() {
                if !on_parity(0, x, span, y) {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
    }
}
