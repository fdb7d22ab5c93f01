//! The experiment catalog: one suite per property, each turning sampled
//! laws into [`TestRecord`]s and optional CSV tables. Shared by the CLI and
//! the acceptance suite.

use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::distributions::{beta_prime_cdf, exponential_cdf, inverse_gamma_cdf, GammaSampler};
use crate::error::{Error, Result};
use crate::kpz::{
    boundary_weight_matching_moments, bulk_moment_rate, bulk_weight_matching_moments, matching_identity_check, sample_bulk_omega,
    scaled_stationary_process, KpzScalingConfig,
};
use crate::lattice::{
    burke_step_log, one_row_stationary_grid, partition_bruteforce, partition_recurrence, permutation_symmetry_experiment, sample_weight_field,
    two_row_stationary_grid, OctantParams,
};
use crate::lpp::{lpp_bruteforce, lpp_recurrence, sample_exp_weights, stationary_lpp_grid, LppExpParams, StationaryLpp};
use crate::mc::McRunner;
use crate::rng::RngStream;
use crate::she::{
    kernel_table, modified_partition_chaos, modified_partition_direct, modified_partition_mild, modified_partition_row, monotone_coupling_check,
    on_parity, robin_heat_kernel, robin_property_checks, scaled_sheet_profile, BoundaryWeights, BulkLaw, BulkWeights, CouplingWindow, ScalingParams,
    SheetOptions,
};
use crate::special::normal_cdf;
use crate::stationary::{
    lattice_offset, sample_huv_at, sample_pra_components, sample_zuv_path, scaled_initial_data, second_moment_analytic, ContinuumStationaryParams,
    DiscreteStationaryParams,
};
use crate::stats::{ks_one_sample, ks_two_sample, moment_compare, retry_seed, suite_verdict, SampleSet, TestRecord, Verdict};

/// Sample dumps keep at most this many replicas per sample set.
pub const DUMP_LIMIT: usize = 10_000;

/// A CSV table; cells are already formatted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal form.
fn cell(v: f64) -> String {
    format!("{v}")
}

/// replica,k,value,seed rows for a group of sample sets indexed by k.
fn sample_dump(name: impl Into<String>, sets: &[(f64, &SampleSet)], seed: u64) -> Table {
    let mut t = Table::new(name, &["replica", "k", "value", "seed"]);
    for (k, s) in sets {
        for (i, v) in s.values().iter().take(DUMP_LIMIT).enumerate() {
            t.push(vec![i.to_string(), cell(*k), cell(*v), seed.to_string()]);
        }
    }
    t
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub records: Vec<TestRecord>,
    pub tables: Vec<Table>,
}

impl Outcome {
    fn ks2(&mut self, name: impl std::fmt::Display, a: &SampleSet, b: &SampleSet) -> Result<()> {
        self.records.push(TestRecord::ks(format!("ks:{name}"), &ks_two_sample(a, b)?));
        Ok(())
    }

    fn ks1(&mut self, name: impl std::fmt::Display, a: &SampleSet, cdf: impl Fn(f64) -> f64) -> Result<()> {
        self.records.push(TestRecord::ks(format!("ks:{name}"), &ks_one_sample(a, cdf)?));
        Ok(())
    }

    fn bound(&mut self, name: impl Into<String>, value: f64, tol: f64) {
        self.records.push(TestRecord::bound(name, value, tol));
    }
}

/// Catalog entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExperimentInfo {
    pub name: &'static str,
    /// The property the experiment verifies.
    pub verifies: &'static str,
    pub default_samples: usize,
}

pub const CATALOG: [ExperimentInfo; 12] = [
    ExperimentInfo {
        name: "burke",
        verifies: "Burke fixed point of the local update map (U, V, w)",
        default_samples: 1_000_000,
    },
    ExperimentInfo {
        name: "one-row-stationarity",
        verifies: "one-row stationarity: increment law independent of m, Gamma^-1(alpha-u) walk",
        default_samples: 200_000,
    },
    ExperimentInfo {
        name: "two-row-stationarity",
        verifies: "two-row stationarity: increment law independent of m >= 2, equal to z_{u,v}",
        default_samples: 200_000,
    },
    ExperimentInfo {
        name: "permutation-symmetry",
        verifies: "partition function laws invariant under permutations of row parameters",
        default_samples: 200_000,
    },
    ExperimentInfo {
        name: "zuv-properties",
        verifies: "z_{u,v}: u+v=0 walk, v <-> -v symmetry, tail law, limit of a(n)",
        default_samples: 200_000,
    },
    ExperimentInfo {
        name: "huv-properties",
        verifies: "H_{u,v}: Brownian when u=-v, v <-> -v symmetry, grid refinement",
        default_samples: 200_000,
    },
    ExperimentInfo {
        name: "lpp-stationarity",
        verifies: "stationary half-space last passage percolation, four specializations",
        default_samples: 200_000,
    },
    ExperimentInfo {
        name: "she-identities",
        verifies: "product form = chaos series = mild equation, composition, monotone coupling",
        default_samples: 100,
    },
    ExperimentInfo {
        name: "sheet-convergence",
        verifies: "scaled boundary-weighted kernel tends to the Robin heat kernel",
        default_samples: 1,
    },
    ExperimentInfo {
        name: "kpz-scaling",
        verifies: "finite-n stationarity of H^(n)(T,.) - H^(n)(T,0) in T",
        default_samples: 200_000,
    },
    ExperimentInfo {
        name: "matching-identity",
        verifies: "log-gamma z~ matches the reflected-walk partition function in law",
        default_samples: 200_000,
    },
    ExperimentInfo {
        name: "moments",
        verifies: "second moment of scaled initial data; bulk and boundary weight moments",
        default_samples: 200_000,
    },
];

pub fn experiment_info(name: &str) -> Option<&'static ExperimentInfo> {
    CATALOG.iter().find(|e| e.name == name)
}

fn parse<T: DeserializeOwned + Default>(params: &Value) -> Result<T> {
    if params.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(params.clone()).map_err(|e| Error::Parameter(format!("invalid parameters: {e}")))
}

/// Parameters after defaults have been filled in, for the report.
pub fn resolved_params(name: &str, params: &Value) -> Result<Value> {
    fn to<T: DeserializeOwned + Default + Serialize>(p: &Value) -> Result<Value> {
        serde_json::to_value(parse::<T>(p)?).map_err(|e| Error::Parameter(e.to_string()))
    }
    match name {
        "burke" => to::<BurkeParams>(params),
        "one-row-stationarity" => to::<OneRowParams>(params),
        "two-row-stationarity" => to::<TwoRowParams>(params),
        "permutation-symmetry" => to::<PermutationParams>(params),
        "zuv-properties" => to::<ZuvParams>(params),
        "huv-properties" => to::<HuvParams>(params),
        "lpp-stationarity" => to::<LppParams>(params),
        "she-identities" => to::<SheParams>(params),
        "sheet-convergence" => to::<SheetParams>(params),
        "kpz-scaling" => to::<KpzParams>(params),
        "matching-identity" => to::<MatchingParams>(params),
        "moments" => to::<MomentsParams>(params),
        _ => Err(Error::Parameter(format!("unknown experiment '{name}'"))),
    }
}

/// One attempt of an experiment with the runner's seed.
pub fn run_once(name: &str, params: &Value, n_samples: Option<usize>, runner: &McRunner) -> Result<Outcome> {
    let info = experiment_info(name).ok_or_else(|| Error::Parameter(format!("unknown experiment '{name}'")))?;
    let n = n_samples.unwrap_or(info.default_samples);
    if n == 0 {
        return Err(Error::Parameter("n_samples must be positive".into()));
    }
    match name {
        "burke" => burke(&parse(params)?, n, runner),
        "one-row-stationarity" => one_row(&parse(params)?, n, runner),
        "two-row-stationarity" => two_row(&parse(params)?, n, runner),
        "permutation-symmetry" => permutation(&parse(params)?, n, runner),
        "zuv-properties" => zuv(&parse(params)?, n, runner),
        "huv-properties" => huv(&parse(params)?, n, runner),
        "lpp-stationarity" => lpp(&parse(params)?, n, runner),
        "she-identities" => she_identities(&parse(params)?, n, runner),
        "sheet-convergence" => sheet_convergence(&parse(params)?),
        "kpz-scaling" => kpz_scaling(&parse(params)?, n, runner),
        "matching-identity" => matching(&parse(params)?, n, runner),
        "moments" => moments(&parse(params)?, n, runner),
        _ => unreachable!(),
    }
}

/// Result of a suite under the multiplicity policy.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub verdict: Verdict,
    pub seed_used: u64,
    pub retried: bool,
    pub outcome: Outcome,
    pub wallclock_s: f64,
}

/// Runs an experiment and, on failure, once more with the derived retry seed.
pub fn run_suite(name: &str, params: &Value, n_samples: Option<usize>, runner: &McRunner) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let first = run_once(name, params, n_samples, runner)?;
    let v = suite_verdict(&first.records);
    if v.passed() {
        return Ok(SuiteOutcome {
            verdict: v,
            seed_used: runner.seed,
            retried: false,
            outcome: first,
            wallclock_s: start.elapsed().as_secs_f64(),
        });
    }
    let seed = retry_seed(runner.seed);
    let second = run_once(name, params, n_samples, &runner.reseeded(seed))?;
    Ok(SuiteOutcome {
        verdict: suite_verdict(&second.records),
        seed_used: seed,
        retried: true,
        outcome: second,
        wallclock_s: start.elapsed().as_secs_f64(),
    })
}

fn labels(names: impl IntoIterator<Item = String>) -> Vec<String> {
    names.into_iter().collect()
}

fn log_ig_cdf(theta: f64) -> impl Fn(f64) -> f64 {
    move |x| inverse_gamma_cdf(theta, x.exp())
}

// ---------------------------------------------------------------- burke

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurkeParams {
    /// (alpha, u) pairs.
    pub points: Vec<[f64; 2]>,
}

impl Default for BurkeParams {
    fn default() -> Self {
        let mut points = Vec::new();
        for alpha in [0.8, 1.5, 3.0] {
            for u in [-0.3, 0.0, 0.5 * alpha] {
                points.push([alpha, u]);
            }
        }
        Self { points }
    }
}

fn burke(p: &BurkeParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    for (i, &[alpha, u]) in p.points.iter().enumerate() {
        let (gu, gv, gw) = (GammaSampler::new(alpha + u)?, GammaSampler::new(alpha - u)?, GammaSampler::new(2.0 * alpha)?);
        let names = labels(["U'", "V'", "w'"].map(String::from));
        let sets = runner.samples(&format!("burke-{alpha}-{u}"), i as u32, n, &names, |r, o| {
            let (a, b, c) = burke_step_log(gu.log_sample_inverse(r), gv.log_sample_inverse(r), gw.log_sample_inverse(r));
            o.copy_from_slice(&[a, b, c]);
            Ok(())
        })?;
        for (s, theta) in sets.iter().zip([alpha + u, alpha - u, 2.0 * alpha]) {
            out.ks1(format!("burke alpha={alpha} u={u} {} vs IG({theta})", s.label), s, log_ig_cdf(theta))?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- one row

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneRowParams {
    pub alpha: f64,
    pub u: f64,
    pub rows: Vec<usize>,
    pub offsets: Vec<usize>,
}

impl Default for OneRowParams {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            u: 0.4,
            rows: vec![1, 2, 4],
            offsets: vec![1, 3],
        }
    }
}

/// Columns: log ratios at each offset, then the last one-step increment.
fn row_ratio_columns(grid_log_z: impl Fn(usize, usize) -> Result<f64>, m: usize, offsets: &[usize], o: &mut [f64]) -> Result<()> {
    let base = grid_log_z(m, m)?;
    let kmax = offsets.iter().copied().max().unwrap_or(1);
    for (slot, &k) in o.iter_mut().zip(offsets) {
        *slot = grid_log_z(m + k, m)? - base;
    }
    o[offsets.len()] = grid_log_z(m + kmax, m)? - grid_log_z(m + kmax - 1, m)?;
    Ok(())
}

fn check_offsets(offsets: &[usize]) -> Result<usize> {
    match offsets.iter().copied().max() {
        Some(k) if k >= 1 => Ok(k),
        _ => Err(Error::Parameter("offsets must contain a positive entry".into())),
    }
}

fn one_row(p: &OneRowParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    let kmax = check_offsets(&p.offsets)?;
    let mut arms = Vec::new();
    for (i, &m) in p.rows.iter().enumerate() {
        let mut names: Vec<String> = p.offsets.iter().map(|k| format!("m={m} k={k}")).collect();
        names.push(format!("m={m} last step"));
        let sets = runner.samples(&format!("one-row-{}-{}-m{m}", p.alpha, p.u), i as u32, n, &names, |r, o| {
            let g = one_row_stationary_grid(p.alpha, p.u, m + kmax, m, r)?;
            row_ratio_columns(|a, b| g.log_z(a, b), m, &p.offsets, o)
        })?;
        let theta = p.alpha - p.u;
        out.ks1(format!("one-row m={m} first step vs IG({theta})"), &sets[p.offsets.iter().position(|&k| k == 1).unwrap_or(0)], log_ig_cdf(theta))?;
        out.ks1(format!("one-row m={m} step at k={kmax} vs IG({theta})"), &sets[p.offsets.len()], log_ig_cdf(theta))?;
        arms.push((m, sets));
    }
    for a in 0..arms.len() {
        for b in a + 1..arms.len() {
            for (j, k) in p.offsets.iter().enumerate() {
                out.ks2(format!("one-row k={k} m={} vs m={}", arms[a].0, arms[b].0), &arms[a].1[j], &arms[b].1[j])?;
            }
        }
    }
    if let Some((m, sets)) = arms.first() {
        let dump: Vec<(f64, &SampleSet)> = p.offsets.iter().zip(sets).map(|(k, s)| (*k as f64, s)).collect();
        out.tables.push(sample_dump(format!("one_row_m{m}"), &dump, runner.seed));
        let mut r = RngStream::new(runner.seed, u64::MAX);
        let g = one_row_stationary_grid(p.alpha, p.u, m + kmax, *m, &mut r)?;
        let mut t = Table::new("one_row_grid", &["n", "m", "log_z"]);
        for (a, b, v) in g.rows() {
            t.push(vec![a.to_string(), b.to_string(), cell(v)]);
        }
        out.tables.push(t);
    }
    Ok(out)
}

// ---------------------------------------------------------------- two rows

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoRowParams {
    pub alpha: f64,
    /// (u, v) pairs.
    pub cases: Vec<[f64; 2]>,
    pub rows: Vec<usize>,
    pub offsets: Vec<usize>,
}

impl Default for TwoRowParams {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            cases: vec![[0.5, -0.4], [0.2, -0.6]],
            rows: vec![2, 3, 5],
            offsets: vec![1, 3, 6],
        }
    }
}

fn two_row(p: &TwoRowParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    let kmax = check_offsets(&p.offsets)?;
    if p.rows.iter().any(|&m| m < 2) {
        return Err(Error::Parameter("two-row stationarity holds for m >= 2".into()));
    }
    let mut stream = 0u32;
    for &[u, v] in &p.cases {
        let mut arms = Vec::new();
        for &m in &p.rows {
            let mut names: Vec<String> = p.offsets.iter().map(|k| format!("m={m} k={k}")).collect();
            names.push("last".into());
            let sets = runner.samples(&format!("two-row-{}-{u}-{v}-m{m}", p.alpha), stream, n, &names, |r, o| {
                let g = two_row_stationary_grid(p.alpha, u, v, m + kmax, m, r)?;
                row_ratio_columns(|a, b| g.log_z(a, b), m, &p.offsets, o)
            })?;
            stream += 1;
            arms.push((m, sets));
        }
        let params = DiscreteStationaryParams::new(p.alpha, u, v)?;
        let names: Vec<String> = p.offsets.iter().map(|k| format!("zuv k={k}")).collect();
        let direct = runner.samples(&format!("zuv-{}-{u}-{v}", p.alpha), stream, n, &names, |r, o| {
            let path = sample_zuv_path(&params, kmax, r)?;
            for (slot, &k) in o.iter_mut().zip(&p.offsets) {
                *slot = path.log_values[k];
            }
            Ok(())
        })?;
        stream += 1;
        for a in 0..arms.len() {
            for b in a + 1..arms.len() {
                for (j, k) in p.offsets.iter().enumerate() {
                    out.ks2(format!("two-row u={u} v={v} k={k} m={} vs m={}", arms[a].0, arms[b].0), &arms[a].1[j], &arms[b].1[j])?;
                }
            }
        }
        if let Some((m, sets)) = arms.iter().find(|(m, _)| *m == 2) {
            for (j, k) in p.offsets.iter().enumerate() {
                out.ks2(format!("two-row u={u} v={v} k={k} m={m} vs z_uv sampler"), &sets[j], &direct[j])?;
            }
            let dump: Vec<(f64, &SampleSet)> = p.offsets.iter().zip(sets).map(|(k, s)| (*k as f64, s)).collect();
            out.tables.push(sample_dump(format!("two_row_u{u}_v{v}_m2"), &dump, runner.seed));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- permutations

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermutationParams {
    pub alpha_circ: f64,
    /// Leading row parameters; later rows use `alpha_rest`.
    pub alphas: Vec<f64>,
    pub alpha_rest: f64,
    pub row_m: usize,
    pub offsets: Vec<usize>,
    /// 0-based permutations of the first `row_m` rows.
    pub permutations: Vec<Vec<usize>>,
}

impl Default for PermutationParams {
    fn default() -> Self {
        Self {
            alpha_circ: 0.7,
            alphas: vec![0.4, 0.9, 1.6],
            alpha_rest: 1.2,
            row_m: 3,
            offsets: vec![0, 1, 2],
            permutations: vec![vec![2, 1, 0], vec![1, 2, 0]],
        }
    }
}

fn permutation(p: &PermutationParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    let kmax = p.offsets.iter().copied().max().unwrap_or(0);
    let size = (p.row_m + kmax).max(p.alphas.len());
    let mut alphas = p.alphas.clone();
    alphas.resize(size, p.alpha_rest);
    let params = OctantParams::new(p.alpha_circ, alphas)?;
    for (i, perm) in p.permutations.iter().enumerate() {
        let mut r1 = RngStream::new(runner.seed, 2 * i as u64);
        let mut r2 = RngStream::new(runner.seed, 2 * i as u64 + 1);
        let (orig, permuted) = permutation_symmetry_experiment(&params, perm, p.row_m, &p.offsets, n, &mut r1, &mut r2)?;
        for ((a, b), k) in orig.iter().zip(&permuted).zip(&p.offsets) {
            out.ks2(format!("permutation {perm:?} m={} k={k}", p.row_m), a, b)?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- z_{u,v}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZuvParams {
    /// alpha, u with v = -u.
    pub antidiagonal: [f64; 2],
    pub antidiagonal_steps: Vec<usize>,
    /// alpha, u, |v|.
    pub symmetry: [f64; 3],
    pub symmetry_offsets: Vec<usize>,
    /// alpha, u, v, k.
    pub tail: [f64; 4],
    /// alpha, u, v, n.
    pub a_limit: [f64; 4],
}

impl Default for ZuvParams {
    fn default() -> Self {
        Self {
            antidiagonal: [1.5, 0.6],
            antidiagonal_steps: vec![1, 2, 5],
            symmetry: [1.5, 0.7, 0.4],
            symmetry_offsets: vec![1, 3, 6],
            tail: [2.0, 0.5, -0.5, 200.0],
            a_limit: [2.0, 1.0, 0.5, 400.0],
        }
    }
}

fn zuv(p: &ZuvParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();

    let [alpha, u] = p.antidiagonal;
    let kmax = check_offsets(&p.antidiagonal_steps)?;
    let params = DiscreteStationaryParams::new(alpha, u, -u)?;
    let names: Vec<String> = p.antidiagonal_steps.iter().map(|k| format!("step {k}")).collect();
    let steps = runner.samples("zuv-antidiagonal", 0, n, &names, |r, o| {
        let path = sample_zuv_path(&params, kmax, r)?;
        for (slot, &k) in o.iter_mut().zip(&p.antidiagonal_steps) {
            *slot = path.log_values[k] - path.log_values[k - 1];
        }
        Ok(())
    })?;
    for (s, k) in steps.iter().zip(&p.antidiagonal_steps) {
        out.ks1(format!("z_uv u+v=0 step {k} vs IG({})", alpha - u), s, log_ig_cdf(alpha - u))?;
    }

    let [alpha, u, v] = p.symmetry;
    let kmax = check_offsets(&p.symmetry_offsets)?;
    let mut arms = Vec::new();
    for (i, vv) in [v, -v].into_iter().enumerate() {
        let params = DiscreteStationaryParams::new(alpha, u, vv)?;
        let names: Vec<String> = p.symmetry_offsets.iter().map(|k| format!("v={vv} k={k}")).collect();
        arms.push(runner.samples(&format!("zuv-symmetry-{vv}"), 1 + i as u32, n, &names, |r, o| {
            let path = sample_zuv_path(&params, kmax, r)?;
            for (slot, &k) in o.iter_mut().zip(&p.symmetry_offsets) {
                *slot = path.log_values[k];
            }
            Ok(())
        })?);
    }
    for (j, k) in p.symmetry_offsets.iter().enumerate() {
        out.ks2(format!("z_uv v={v} vs v={} k={k}", -v), &arms[0][j], &arms[1][j])?;
    }

    let [alpha, u, v, k] = p.tail;
    let k = k as usize;
    let params = DiscreteStationaryParams::new(alpha, u, v)?;
    let tail = runner.sample("zuv-tail", 3, n, |r| {
        let path = sample_zuv_path(&params, k + 1, r)?;
        Ok(path.log_values[k + 1] - path.log_values[k])
    })?;
    let theta = alpha - v.abs();
    out.ks1(format!("z_uv ratio at k={k} vs IG({theta})"), &tail, log_ig_cdf(theta))?;

    let [alpha, u, v, nn] = p.a_limit;
    if !(v > 0.0 && u > v) {
        return Err(Error::Parameter("the a(n) limit needs 0 < v < u".into()));
    }
    let params = DiscreteStationaryParams::new(alpha, u, v)?;
    let nn = nn as usize;
    let a_n = runner.sample("zuv-a-limit", 4, n, |r| {
        let c = sample_pra_components(&params, nn, r)?;
        // log(a(n) - 1)
        Ok(c.log_a[nn] + (-(-c.log_a[nn]).exp()).ln_1p())
    })?;
    out.ks1(format!("a({nn}) - 1 vs Beta'({}, {})", u - v, 2.0 * v), &a_n, |x| beta_prime_cdf(u - v, 2.0 * v, x.exp()))?;
    Ok(out)
}

// ---------------------------------------------------------------- H_{u,v}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HuvParams {
    /// u with v = -u.
    pub brownian_u: f64,
    /// u, |v|.
    pub symmetry: [f64; 2],
    pub xs: Vec<f64>,
    /// log2 of the grid step; the refinement comparison uses twice the step.
    pub log2_delta: i32,
}

impl Default for HuvParams {
    fn default() -> Self {
        Self {
            brownian_u: 0.5,
            symmetry: [0.8, 0.3],
            xs: vec![0.5, 1.0, 2.0],
            log2_delta: -10,
        }
    }
}

fn huv(p: &HuvParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    let x_max = p.xs.iter().copied().fold(0.0, f64::max);
    let names: Vec<String> = p.xs.iter().map(|x| format!("X={x}")).collect();
    let mut stream = 0u32;
    let mut arm = |u: f64, v: f64, log2_delta: i32| -> Result<Vec<SampleSet>> {
        let cp = ContinuumStationaryParams::new(u, v, 2f64.powi(log2_delta), x_max)?;
        stream += 1;
        runner.samples(&format!("huv-{u}-{v}-d{log2_delta}"), stream, n, &names, |r, o| {
            o.copy_from_slice(&sample_huv_at(&cp, &p.xs, r)?);
            Ok(())
        })
    };
    let u = p.brownian_u;
    let mut brownian_stats = Vec::new();
    for d in [p.log2_delta, p.log2_delta + 1] {
        let sets = arm(u, -u, d)?;
        let mut stats = Vec::new();
        for (s, &x) in sets.iter().zip(&p.xs) {
            let cdf = move |h: f64| normal_cdf((h - u * x) / x.sqrt());
            let ks = ks_one_sample(s, cdf)?;
            if d == p.log2_delta {
                out.records.push(TestRecord::ks(format!("ks:H u={u} v={} X={x} vs N(uX, X)", -u), &ks));
            }
            stats.push(ks);
        }
        brownian_stats.push(stats);
    }
    for (j, x) in p.xs.iter().enumerate() {
        let (fine, coarse) = (&brownian_stats[0][j], &brownian_stats[1][j]);
        out.bound(format!("grid refinement: |D(delta) - D(2 delta)| at X={x}, u=-v"), fine.statistic - coarse.statistic, fine.threshold);
    }
    let [u, v] = p.symmetry;
    let mut sym_stats = Vec::new();
    for d in [p.log2_delta, p.log2_delta + 1] {
        let a = arm(u, -v, d)?;
        let b = arm(u, v, d)?;
        let mut stats = Vec::new();
        for ((sa, sb), x) in a.iter().zip(&b).zip(&p.xs) {
            let ks = ks_two_sample(sa, sb)?;
            if d == p.log2_delta {
                out.records.push(TestRecord::ks(format!("ks:H u={u} v={} vs v={v} X={x}", -v), &ks));
            }
            stats.push(ks);
        }
        sym_stats.push(stats);
    }
    for (j, x) in p.xs.iter().enumerate() {
        let (fine, coarse) = (&sym_stats[0][j], &sym_stats[1][j]);
        out.bound(format!("grid refinement: |D(delta) - D(2 delta)| at X={x}, v <-> -v"), fine.statistic - coarse.statistic, fine.threshold);
    }
    Ok(out)
}

// ---------------------------------------------------------------- LPP

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LppParams {
    pub kinds: Vec<StationaryLpp>,
}

impl Default for LppParams {
    fn default() -> Self {
        Self {
            kinds: vec![
                StationaryLpp::GeomOne { q: 0.5, r: 0.7 },
                StationaryLpp::GeomTwo { q: 0.5, r: 0.6, s: 0.8 },
                StationaryLpp::ExpOne { a: 1.0, u: 0.3 },
                StationaryLpp::ExpTwo { a: 1.0, u: 0.4, v: -0.3 },
            ],
        }
    }
}

fn lpp(p: &LppParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut stream = 0u32;
    for kind in &p.kinds {
        let m0 = kind.min_row();
        let (rows, offsets): (Vec<usize>, Vec<usize>) = if m0 == 1 { (vec![1, 2, 4], vec![1, 3]) } else { (vec![2, 3, 5], vec![1, 3, 6]) };
        let kmax = *offsets.iter().max().unwrap();
        let mut arms = Vec::new();
        for &m in &rows {
            let mut names: Vec<String> = offsets.iter().map(|k| format!("m={m} k={k}")).collect();
            names.push("last".into());
            let sets = runner.samples(&format!("lpp-{}-m{m}", kind.name()), stream, n, &names, |r, o| {
                let g = stationary_lpp_grid(kind, m + kmax, m, r)?;
                row_ratio_columns(|a, b| g.value(a, b), m, &offsets, o)
            })?;
            stream += 1;
            arms.push((m, sets));
        }
        let name = kind.name();
        for a in 0..arms.len() {
            for b in a + 1..arms.len() {
                for (j, k) in offsets.iter().enumerate() {
                    out.ks2(format!("lpp {name} k={k} m={} vs m={}", arms[a].0, arms[b].0), &arms[a].1[j], &arms[b].1[j])?;
                }
            }
        }
        if let StationaryLpp::ExpOne { a, u } = *kind {
            for (m, sets) in &arms {
                out.ks1(format!("lpp exp_one m={m} first increment vs Exp({})", a - u), &sets[0], |x| exponential_cdf(a - u, x))?;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- exact identities

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SheParams {
    pub max_span: i64,
    pub beta: f64,
    /// Largest n + m for the octant brute-force comparison.
    pub bruteforce_max_sum: usize,
}

impl Default for SheParams {
    fn default() -> Self {
        Self {
            max_span: 10,
            beta: 0.6,
            bruteforce_max_sum: 12,
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Deterministic identities over `instances` random instances: octant DP vs
/// brute force, LPP DP vs brute force, and the three forms of the modified
/// partition function with their composition law and monotone coupling.
fn she_identities(p: &SheParams, instances: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut r = RngStream::new(runner.seed, 0);

    let mut dp_err: f64 = 0.0;
    let mut lpp_err: f64 = 0.0;
    let size = p.bruteforce_max_sum;
    for _ in 0..instances {
        let alphas: Vec<f64> = (0..size).map(|_| 0.5 + 2.0 * r.uniform_open()).collect();
        let params = OctantParams::new(0.3 + r.uniform_open(), alphas)?;
        let field = sample_weight_field(&params, &mut r)?;
        let grid = partition_recurrence(&field, size, size / 2)?;
        let ep = LppExpParams::new(0.5 + r.uniform_open(), (0..size).map(|_| 0.5 + r.uniform_open()).collect(), Default::default())?;
        let w = sample_exp_weights(&ep, &mut r)?;
        let lg = lpp_recurrence(&w, size, size / 2)?;
        for nn in 1..size {
            for m in 1..=nn.min(size - nn) {
                dp_err = dp_err.max((grid.log_z(nn, m)? - partition_bruteforce(&field, nn, m)?).abs());
                lpp_err = lpp_err.max(rel_err(lg.value(nn, m)?, lpp_bruteforce(&w, nn, m)?));
            }
        }
    }
    out.bound(format!("octant DP vs brute force, n+m <= {size}, max abs err in log z"), dp_err, 1e-10);
    out.bound(format!("LPP DP vs brute-force max, n+m <= {size}, max rel err"), lpp_err, 1e-12);

    let mut chaos_err: f64 = 0.0;
    let mut mild_err: f64 = 0.0;
    let mut comp_err: f64 = 0.0;
    let mut norm_err: f64 = 0.0;
    let mut violations = 0u64;
    let mut kernel_rows = Table::new("kernel_samples", &["s", "x", "t", "y", "value"]);
    for i in 0..instances {
        let span = 1 + (i as i64 % p.max_span);
        let s = (r.uniform_open() * 5.0) as i64 - 2;
        let t = s + span;
        let x = (r.uniform_open() * 3.0) as usize;
        let cap = x + span as usize + 2;
        let boundary = BoundaryWeights::sample_iid(s, span as usize + 1, &mut r, |r| 0.3 + 1.4 * r.uniform_open())?;
        let bulk = BulkWeights::sample(p.beta, s, t, cap, BulkLaw::Rademacher, &mut r)?;
        let y = {
            let ys: Vec<usize> = (0..=x + span as usize).filter(|&y| on_parity(s, x, t, y)).collect();
            ys[(r.uniform_open() * ys.len() as f64) as usize % ys.len()]
        };
        let d = modified_partition_direct(&boundary, &bulk, s, x, t, y)?;
        chaos_err = chaos_err.max(rel_err(d, modified_partition_chaos(&boundary, &bulk, s, x, t, y)?));
        mild_err = mild_err.max(rel_err(d, modified_partition_mild(&boundary, &bulk, s, x, t, y)?));
        let mid = s + span / 2;
        let left = modified_partition_row(&boundary, &bulk, s, x, mid)?;
        let mut sum = 0.0;
        for (w, lv) in left.iter().enumerate() {
            if *lv != 0.0 {
                sum += lv * modified_partition_direct(&boundary, &bulk, mid, w, t, y)?;
            }
        }
        comp_err = comp_err.max(rel_err(d, sum));
        let k = kernel_table(&BoundaryWeights::Constant(1.0), s, x, t)?;
        norm_err = norm_err.max((k.values.iter().sum::<f64>() - 1.0).abs());
        if i < 5 {
            for (a, b, c, e, v) in k.rows() {
                kernel_rows.push(vec![a.to_string(), b.to_string(), c.to_string(), e.to_string(), cell(v)]);
            }
        }
        let lo = BoundaryWeights::Constant(0.5 + 0.4 * r.uniform_open());
        let mid_b = BoundaryWeights::Constant(1.0);
        let hi = BoundaryWeights::Constant(1.1 + 0.4 * r.uniform_open());
        let window = CouplingWindow {
            s_min: s,
            s_max: s + 1,
            x_max: x,
            t_max: t,
        };
        violations += monotone_coupling_check(&lo, &mid_b, &hi, &bulk, window)?.violations;
    }
    out.bound(format!("product form vs chaos series, t-s <= {}", p.max_span), chaos_err, 1e-12);
    out.bound(format!("product form vs mild equation, t-s <= {}", p.max_span), mild_err, 1e-12);
    out.bound("composition law at the midpoint", comp_err, 1e-12);
    out.bound("reflected kernel normalization", norm_err, 1e-12);
    out.bound("monotone coupling violations", violations as f64, 0.0);
    out.tables.push(kernel_rows);
    Ok(out)
}

// ---------------------------------------------------------------- sheet scaling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SheetParams {
    pub log2_n: u32,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub taus: Vec<f64>,
    pub mus: Vec<f64>,
    /// Sup-norm tolerance relative to the sup of the Robin kernel.
    pub tolerance: f64,
    /// Step for the finite-difference property checks.
    pub fd_step: f64,
}

impl Default for SheetParams {
    fn default() -> Self {
        Self {
            log2_n: 14,
            xs: vec![0.0, 0.25, 0.5, 1.0],
            ys: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5],
            taus: vec![0.5, 1.0],
            mus: vec![-0.5, 0.0, 1.0],
            tolerance: 0.02,
            fd_step: 1e-3,
        }
    }
}

fn sheet_convergence(p: &SheetParams) -> Result<Outcome> {
    let mut out = Outcome::default();
    let n = 1u64 << p.log2_n;
    let opts = SheetOptions::default();
    let mut table = Table::new("sheet", &["s", "x", "t", "y", "value"]);
    let mut dummy = RngStream::new(0, 0);
    for &mu in &p.mus {
        let sp = ScalingParams::new(n, mu, 0.0)?;
        let mut sup_diff: f64 = 0.0;
        let mut sup_p: f64 = 0.0;
        for &x in &p.xs {
            for &tau in &p.taus {
                let profile = scaled_sheet_profile(&sp, 0.0, x, tau, &opts, &mut dummy)?;
                for &y in &p.ys {
                    let k = lattice_offset(n, y)?;
                    let sheet = profile
                        .iter()
                        .find(|(yy, _)| (yy * sp.sqrt_n()).round() as usize == k)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| Error::Grid(format!("Y={y} is not on the parity lattice of X={x}")))?;
                    let robin = robin_heat_kernel(mu, 0.0, x, tau, y)?;
                    sup_diff = sup_diff.max((sheet - robin).abs());
                    sup_p = sup_p.max(robin.abs());
                    table.push(vec![cell(0.0), cell(x), cell(tau), cell(y), cell(sheet)]);
                }
            }
        }
        out.bound(format!("scaled kernel vs Robin kernel, mu={mu}, n=2^{}: relative sup error", p.log2_n), sup_diff / sup_p, p.tolerance);
        let c = robin_property_checks(mu, p.fd_step)?;
        let h2 = p.fd_step * p.fd_step;
        out.bound(format!("Robin kernel PDE residual, mu={mu}"), c.pde_residual, 100.0 * h2);
        out.bound(format!("Robin kernel boundary condition residual, mu={mu}"), c.boundary_residual, 100.0 * h2);
        if mu == 0.0 {
            out.bound("Robin kernel normalization at mu=0", c.normalization_error, 1e-8);
        }
    }
    out.tables.push(table);
    Ok(out)
}

// ---------------------------------------------------------------- KPZ scaling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KpzParams {
    pub n: u64,
    pub u: f64,
    pub v: f64,
    pub t_grid: Vec<f64>,
    pub xs: Vec<f64>,
    /// Replicas per n in the resolution study (reported, not gated); 0 skips it.
    pub resolution_samples: usize,
}

impl Default for KpzParams {
    fn default() -> Self {
        Self {
            n: 256,
            u: 1.0,
            v: -0.5,
            t_grid: vec![0.0, 0.5],
            xs: vec![0.25, 0.5, 1.0],
            resolution_samples: 20_000,
        }
    }
}

fn kpz_scaling(p: &KpzParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    let config = KpzScalingConfig::new(p.n, p.u, p.v, p.t_grid.clone(), p.xs.clone())?;
    let mut points = vec![0.0];
    points.extend(&p.xs);
    let names: Vec<String> = p.xs.iter().map(|x| format!("X={x}")).collect();
    let mut arms = Vec::new();
    for (i, &t) in p.t_grid.iter().enumerate() {
        let sets = runner.samples(&format!("kpz-{}-{}-{}-T{t}", p.n, p.u, p.v), i as u32, n, &names, |r, o| {
            let h = scaled_stationary_process(&config, t, &points, r)?;
            for (slot, hv) in o.iter_mut().zip(&h[1..]) {
                *slot = hv - h[0];
            }
            Ok(())
        })?;
        let mut table = Table::new(format!("kpz_T{t}"), &["replica", "X", "value"]);
        for (s, x) in sets.iter().zip(&p.xs) {
            for (j, v) in s.values().iter().take(DUMP_LIMIT).enumerate() {
                table.push(vec![j.to_string(), cell(*x), cell(*v)]);
            }
        }
        out.tables.push(table);
        arms.push((t, sets));
    }
    for a in 0..arms.len() {
        for b in a + 1..arms.len() {
            for (j, x) in p.xs.iter().enumerate() {
                out.ks2(format!("H(T,X)-H(T,0) n={} X={x} T={} vs T={}", p.n, arms[a].0, arms[b].0), &arms[a].1[j], &arms[b].1[j])?;
            }
        }
    }
    if p.resolution_samples > 0 {
        let mut table = Table::new("kpz_resolution", &["X", "n", "ks_statistic"]);
        let sample_at = |nn: u64, base: u32| -> Result<Vec<SampleSet>> {
            runner.samples(&format!("kpz-res-{nn}-{}-{}", p.u, p.v), base, p.resolution_samples, &names, |r, o| {
                o.copy_from_slice(&scaled_initial_data(nn, p.u, p.v, &p.xs, r)?.log_values);
                Ok(())
            })
        };
        let coarse = sample_at(p.n, 100)?;
        let fine = sample_at(4 * p.n, 101)?;
        for ((a, b), x) in coarse.iter().zip(&fine).zip(&p.xs) {
            table.push(vec![cell(*x), p.n.to_string(), cell(ks_two_sample(a, b)?.statistic)]);
        }
        out.tables.push(table);
    }
    Ok(out)
}

// ---------------------------------------------------------------- matching identity

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingParams {
    pub alpha: f64,
    pub u: f64,
    pub v: f64,
    /// (t, y) points.
    pub points: Vec<[usize; 2]>,
}

impl Default for MatchingParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            u: 0.8,
            v: -0.5,
            points: vec![[1, 0], [3, 2]],
        }
    }
}

fn matching(p: &MatchingParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    for (i, &[t, y]) in p.points.iter().enumerate() {
        let rep = matching_identity_check(runner, 2 * i as u32, p.alpha, p.u, p.v, t, y, n)?;
        out.records.push(TestRecord::ks(format!("ks:matching identity (t,y)=({t},{y}) alpha={}", p.alpha), &rep.ks));
        let mut table = Table::new(format!("matching_t{t}_y{y}"), &["replica", "k", "value", "seed"]);
        for (side, s) in [(0.0, &rep.lhs), (1.0, &rep.rhs)] {
            for (j, v) in s.values().iter().take(DUMP_LIMIT).enumerate() {
                table.push(vec![j.to_string(), cell(side), cell(*v), runner.seed.to_string()]);
            }
        }
        out.tables.push(table);
    }
    Ok(out)
}

// ---------------------------------------------------------------- moments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsParams {
    /// (n, u, v, X) points for the second moment of exp(H^(n)(0, X)).
    pub second_moment_points: Vec<(u64, f64, f64, f64)>,
    pub ns: Vec<u64>,
    pub boundary_u: f64,
    pub eighth_moment_n: u64,
    pub eighth_moment_samples: usize,
    /// Relative tolerance of the MC 8th moment against 7!! = 105.
    pub eighth_moment_tolerance: f64,
}

impl Default for MomentsParams {
    fn default() -> Self {
        Self {
            second_moment_points: vec![(16, 0.5, -0.5, 0.5), (16, 1.0, 0.0, 0.75), (64, 1.0, -0.5, 0.5), (64, 0.8, -0.3, 0.25), (100, 1.5, -0.5, 0.3)],
            ns: vec![100, 10_000, 1_000_000],
            boundary_u: 1.0,
            eighth_moment_n: 10_000,
            eighth_moment_samples: 2_000_000,
            eighth_moment_tolerance: 0.05,
        }
    }
}

fn moments(p: &MomentsParams, n: usize, runner: &McRunner) -> Result<Outcome> {
    let mut out = Outcome::default();
    for (i, &(nn, u, v, x)) in p.second_moment_points.iter().enumerate() {
        let exact = second_moment_analytic(nn, u, v, x)?;
        let s = runner.sample(&format!("second-moment-{nn}-{u}-{v}-{x}"), i as u32, n, |r| {
            Ok((2.0 * scaled_initial_data(nn, u, v, &[x], r)?.log_values[0]).exp())
        })?;
        let m = moment_compare(&s, 1, exact)?;
        out.bound(format!("E[exp(2H)] n={nn} u={u} v={v} X={x}: (MC - exact)/SE"), (m.estimate - exact) / m.se, 3.0);
    }

    let bulk: Vec<_> = p.ns.iter().map(|&nn| bulk_weight_matching_moments(nn)).collect::<Result<_>>()?;
    for b in &bulk {
        out.bound(format!("bulk E[omega] at n={}", b.n), b.mean, 1e-14);
        out.bound(format!("bulk var(omega) vs 2 sqrt n/(2 sqrt n - 1) at n={}", b.n), rel_err(b.variance, b.variance_formula), 1e-12);
    }
    for order in 2..=8u32 {
        let devs: Vec<f64> = bulk
            .iter()
            .filter_map(|b| b.moments.iter().find(|m| m.order == order).map(|m| m.scaled_deviation))
            .collect();
        let growth = devs.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        out.bound(
            format!("bulk E[omega^{order}] - {}!! scaled by n^{}: growth over n", order.saturating_sub(1), bulk_moment_rate(order)),
            growth,
            1.2,
        );
    }

    let bnd: Vec<_> = p.ns.iter().map(|&nn| boundary_weight_matching_moments(nn, p.boundary_u)).collect::<Result<_>>()?;
    for b in &bnd {
        out.bound(format!("boundary mean vs sqrt n/(sqrt n + mu) at n={}", b.n), rel_err(b.mean, b.mean_formula), 1e-12);
        out.bound(format!("boundary variance vs closed form at n={}", b.n), rel_err(b.variance, b.variance_formula), 1e-9);
    }
    let mu = p.boundary_u - 0.5;
    let mean_dev: Vec<f64> = bnd.iter().map(|b| (b.mu_recovered - mu).abs() * (b.n as f64).sqrt()).collect();
    out.bound(
        "boundary |sqrt n (1 - E X) - mu| sqrt n: growth over n",
        mean_dev.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max),
        1.2,
    );
    let sv: Vec<f64> = bnd.iter().map(|b| b.scaled_variance).collect();
    out.bound(
        "boundary sqrt(n) var: max/min over n",
        sv.iter().copied().fold(0.0, f64::max) / sv.iter().copied().fold(f64::INFINITY, f64::min),
        2.0,
    );

    let nn = p.eighth_moment_n;
    let s = runner.sample(&format!("omega-{nn}"), 100, p.eighth_moment_samples, |r| sample_bulk_omega(nn, r))?;
    let exact = bulk_weight_matching_moments(nn)?.moments.iter().find(|m| m.order == 8).map(|m| m.value).unwrap_or(f64::NAN);
    let m = moment_compare(&s, 8, exact)?;
    out.bound(format!("MC E[omega^8] at n={nn} vs exact {exact:.3}: (MC - exact)/SE"), (m.estimate - exact) / m.se, 3.0);
    out.bound(format!("MC E[omega^8] at n={nn} vs 105: relative deviation"), m.estimate / 105.0 - 1.0, p.eighth_moment_tolerance);
    Ok(out)
}
