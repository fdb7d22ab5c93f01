//! Kolmogorov-Smirnov tests, moment checks, the multiplicity policy and the
//! JSON report records shared by every experiment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided critical value of the Kolmogorov distribution at level 0.1%.
pub fn ks_critical_value(level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt()
}

pub const KS_LEVEL: f64 = 1e-3;

/// Tagged i.i.d. draws; only finite values are accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub label: String,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Sample(format!(
                "{label}: non-finite entry {} at index {i}",
                values[i]
            )));
        }
        Ok(Self {
            label,
            seed: None,
            stream: None,
            values,
        })
    }

    pub fn with_provenance(mut self, seed: u64, stream: u64) -> Self {
        self.seed = Some(seed);
        self.stream = Some(stream);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n_eff: f64,
    pub p_approx: f64,
    pub threshold: f64,
}

impl KsResult {
    fn from_statistic(d: f64, n_eff: f64) -> Self {
        Self {
            statistic: d,
            n_eff,
            p_approx: kolmogorov_survival(n_eff.sqrt() * d),
            threshold: ks_critical_value(KS_LEVEL) / n_eff.sqrt(),
        }
    }

    pub fn passes(&self) -> bool {
        self.statistic <= self.threshold
    }
}

/// P(K > lambda) for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small lambda
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 0..20 {
            let j = (2 * k + 1) as f64;
            s += (-j * j * c).exp();
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Exact sup-distance between the two empirical CDFs, ties handled.
pub fn ks_two_sample(a: &SampleSet, b: &SampleSet) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Sample("two-sample KS needs nonempty inputs".into()));
    }
    let (xa, xb) = (a.sorted(), b.sorted());
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let n_eff = (na as f64 * nb as f64) / (na + nb) as f64;
    Ok(KsResult::from_statistic(d, n_eff))
}

/// sup |F_emp - F| against an analytic CDF. The CDF is checked for
/// monotonicity and range at every sample point.
pub fn ks_one_sample(a: &SampleSet, cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if a.is_empty() {
        return Err(Error::Sample("one-sample KS needs a nonempty input".into()));
    }
    let xs = a.sorted();
    let n = xs.len();
    let mut d: f64 = 0.0;
    let mut prev = f64::NEG_INFINITY;
    let mut i = 0;
    while i < n {
        let x = xs[i];
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) || f < prev - 1e-12 {
            return Err(Error::Sample(format!(
                "{}: CDF not monotone or out of range at x={x}",
                a.label
            )));
        }
        prev = f;
        let below = i as f64 / n as f64;
        while i < n && xs[i] <= x {
            i += 1;
        }
        let at = i as f64 / n as f64;
        d = d.max((at - f).abs()).max((f - below).abs());
    }
    Ok(KsResult::from_statistic(d, n as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub k: u32,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub pass: bool,
    /// Hill estimate of the tail index of |x|^k; below 2 the SE is meaningless.
    pub tail_index: Option<f64>,
    pub se_unstable: bool,
}

/// k-th raw moment with its jackknife standard error.
///
/// For a plain average the jackknife SE reduces to s/sqrt(n), which is what
/// is computed here.
pub fn moment_compare(a: &SampleSet, k: u32, target: f64) -> Result<MomentReport> {
    let n = a.len();
    if n < 2 {
        return Err(Error::Sample("moment check needs at least two draws".into()));
    }
    let powers: Vec<f64> = a.values().iter().map(|x| x.powi(k as i32)).collect();
    let nf = n as f64;
    let mean = powers.iter().sum::<f64>() / nf;
    let var = powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = (var / nf).sqrt();
    let tail_index = hill_tail_index(&powers);
    let se_unstable = !se.is_finite() || tail_index.is_some_and(|t| t < 1.5);
    Ok(MomentReport {
        k,
        estimate: mean,
        se,
        target,
        pass: (mean - target).abs() <= 3.0 * se,
        tail_index,
        se_unstable,
    })
}

fn hill_tail_index(values: &[f64]) -> Option<f64> {
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    if abs.len() < 100 {
        return None;
    }
    abs.sort_by(|a, b| b.total_cmp(a));
    let k = (abs.len() as f64).sqrt() as usize;
    let threshold = abs[k].ln();
    let mean_excess = abs[..k].iter().map(|v| v.ln() - threshold).sum::<f64>() / k as f64;
    (mean_excess > 0.0).then(|| 1.0 / mean_excess)
}

/// (x, F_emp(x)) at every distinct sample value.
pub fn empirical_cdf_dump(a: &SampleSet) -> Vec<(f64, f64)> {
    let xs = a.sorted();
    let n = xs.len() as f64;
    let mut out = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        if i + 1 == xs.len() || xs[i + 1] > *x {
            out.push((*x, (i + 1) as f64 / n));
        }
    }
    out
}

/// One line of a machine-readable report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl TestRecord {
    pub fn ks(test: impl Into<String>, r: &KsResult) -> Self {
        Self {
            test: test.into(),
            statistic: r.statistic,
            threshold: r.threshold,
            pass: r.passes(),
        }
    }

    /// A deviation compared against a tolerance; passes iff |value| <= tol.
    pub fn bound(test: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            test: test.into(),
            statistic: value,
            threshold: tol,
            pass: value.abs() <= tol,
        }
    }
}

/// Full report of an experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub paper_ref: String,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub results: Vec<TestRecord>,
    pub wallclock_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    /// Exactly one record above threshold but within 1.2 times it.
    PassWithExcursion,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self != Verdict::Fail
    }
}

/// Ratio allowed for the single marginal excursion.
pub const EXCURSION_FACTOR: f64 = 1.2;

/// Multiplicity policy over a suite of records.
///
/// All records must pass, except that one KS-type record may sit above its
/// threshold by less than [`EXCURSION_FACTOR`]. Records whose threshold is not
/// a KS critical value are marked with `pass` already and are never excused.
pub fn suite_verdict(records: &[TestRecord]) -> Verdict {
    let failed: Vec<&TestRecord> = records.iter().filter(|r| !r.pass).collect();
    match failed.as_slice() {
        [] => Verdict::Pass,
        [one] if one.test.starts_with("ks:") && one.statistic < EXCURSION_FACTOR * one.threshold => {
            Verdict::PassWithExcursion
        }
        _ => Verdict::Fail,
    }
}

/// Runs a suite and, if it fails, reruns it once with a derived seed. The
/// retry's verdict is final. Returns the records of the deciding attempt.
pub fn run_with_retry<F>(seed: u64, mut suite: F) -> Result<(Verdict, Vec<TestRecord>, u64)>
where
    F: FnMut(u64) -> Result<Vec<TestRecord>>,
{
    let first = suite(seed)?;
    let v = suite_verdict(&first);
    if v.passed() {
        return Ok((v, first, seed));
    }
    let reseed = retry_seed(seed);
    let second = suite(reseed)?;
    Ok((suite_verdict(&second), second, reseed))
}

/// Seed used for the single retry.
pub fn retry_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}
