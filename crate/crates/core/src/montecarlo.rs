//! Reproducible Monte Carlo for the K-set events and the census experiments.
//!
//! Sample `i` of an estimate always uses the stream `(seed, i)`, so the hit
//! set does not depend on the shard layout or on the thread schedule.
//! Entries are drawn in row-major lower-triangle order, the same order as
//! [`FitnessMatrix::sample`], and drawing stops at the first failing pair.
//! The drawn prefix is therefore identical to the full sample.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitness::{FitnessDistribution, FitnessMatrix, Law};
use crate::formulas;
use crate::kinship::{self, pair_values_ok, star_values_ok, MINIMAL_SCAN_LIMIT};
use crate::rng::RngStream;

/// Estimates with fewer hits than this carry `rare_event_warning`.
pub const RARE_EVENT_HITS: u64 = 100;
pub const DEFAULT_LMAX_CAP: usize = 300;
pub const CONCENTRATION_MAX_N: usize = 100;
pub const CONCENTRATION_MAX_R: usize = 6;
pub const KSTAR_CENSUS_MAX_N: usize = 100;
pub const KSTAR_CENSUS_MAX_R: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// A fixed `r`-set is a K-set.
    D,
    /// Two `r`-sets sharing `k` elements are both K-sets.
    Dpair(usize),
    /// A fixed `r`-set is a K*-set.
    Dstar,
    /// A fixed `r`-set is a minimal K-set.
    Dminimal,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::D => "D",
            EventKind::Dpair(_) => "Dpair",
            EventKind::Dstar => "Dstar",
            EventKind::Dminimal => "Dminimal",
        }
    }

    pub fn overlap(&self) -> Option<usize> {
        match self {
            EventKind::Dpair(k) => Some(*k),
            _ => None,
        }
    }

    /// `name` is one of D, Dpair, Dstar, Dminimal; `k` is required for Dpair only.
    pub fn from_parts(name: &str, k: Option<usize>) -> Result<Self> {
        match (name, k) {
            ("D", None) => Ok(EventKind::D),
            ("Dstar", None) => Ok(EventKind::Dstar),
            ("Dminimal", None) => Ok(EventKind::Dminimal),
            ("Dpair", Some(k)) => Ok(EventKind::Dpair(k)),
            ("Dpair", None) => Err(Error::pre("event Dpair needs an overlap k")),
            ("D" | "Dstar" | "Dminimal", Some(_)) => Err(Error::pre(format!("event {name} takes no overlap k"))),
            _ => Err(Error::invalid(format!("unknown event '{name}'"))),
        }
    }

    fn validate(&self, r: usize) -> Result<()> {
        if r < 2 {
            return Err(Error::pre(format!("r = {r} must be >= 2")));
        }
        match *self {
            EventKind::Dpair(k) if k < 1 || k >= r => {
                Err(Error::pre(format!("overlap k = {k} outside [1, {}]", r - 1)))
            }
            EventKind::Dminimal if r > MINIMAL_SCAN_LIMIT => Err(Error::SubsetScanTooLarge {
                size: r,
                limit: MINIMAL_SCAN_LIMIT,
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Dpair(k) => write!(f, "Dpair({k})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    /// Accepts `D`, `Dstar`, `Dminimal`, `Dpair(k)` and `Dpair:k`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("Dpair") {
            let k = rest
                .trim_start_matches(['(', ':'])
                .trim_end_matches(')')
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("cannot parse overlap in '{s}'")))?;
            return Ok(EventKind::Dpair(k));
        }
        EventKind::from_parts(s, None)
    }
}

/// Per-sample draw-and-test state. Reuse one per thread to avoid allocation.
struct EventSampler {
    kind: EventKind,
    r: usize,
    dist: FitnessDistribution,
    tril: Vec<f64>,
    diag: Vec<f64>,
    row: Vec<f64>,
}

impl EventSampler {
    fn new(kind: EventKind, r: usize, dist: FitnessDistribution) -> Self {
        let m = match kind {
            EventKind::Dpair(k) => 2 * r - k,
            _ => r,
        };
        Self {
            kind,
            r,
            dist,
            tril: Vec::with_capacity(m * (m + 1) / 2),
            diag: vec![0.0; m],
            row: vec![0.0; m],
        }
    }

    fn hit(&mut self, stream: &mut RngStream) -> Result<bool> {
        match self.kind {
            EventKind::D => Ok(self.clique(stream, false)),
            EventKind::Dstar => Ok(self.clique(stream, true)),
            EventKind::Dpair(k) => Ok(self.pair(stream, k)),
            EventKind::Dminimal => {
                if !self.clique(stream, false) {
                    return Ok(false);
                }
                // a K-set hit has drawn the whole lower triangle
                let f = FitnessMatrix::from_tril(self.r, self.tril.clone())?;
                let all: Vec<usize> = (0..self.r).collect();
                kinship::is_minimal_kset(&f, &all)
            }
        }
    }

    fn clique(&mut self, stream: &mut RngStream, star: bool) -> bool {
        let test = if star { star_values_ok } else { pair_values_ok };
        self.tril.clear();
        for m in 0..self.r {
            for j in 0..m {
                self.row[j] = self.dist.sample(stream);
            }
            let xm = self.dist.sample(stream);
            self.diag[m] = xm;
            self.tril.extend_from_slice(&self.row[..m]);
            self.tril.push(xm);
            if !(0..m).all(|j| test(self.row[j], self.diag[j], xm)) {
                return false;
            }
        }
        true
    }

    /// `I1 = 0..r` and `I2 = r-k..2r-k`; cross pairs between the private
    /// parts are never drawn.
    fn pair(&mut self, stream: &mut RngStream, k: usize) -> bool {
        let (r, m_total) = (self.r, 2 * self.r - k);
        let shared = r - k;
        let constrained = |i: usize, j: usize| (i < r && j < r) || (i >= shared && j >= shared);
        for m in 0..m_total {
            for j in 0..m {
                if constrained(m, j) {
                    self.row[j] = self.dist.sample(stream);
                }
            }
            let xm = self.dist.sample(stream);
            self.diag[m] = xm;
            if !(0..m).all(|j| !constrained(m, j) || pair_values_ok(self.row[j], self.diag[j], xm)) {
                return false;
            }
        }
        true
    }
}

/// One Bernoulli draw of the event from `stream`.
pub fn sample_event(kind: EventKind, r: usize, d: &FitnessDistribution, stream: &mut RngStream) -> Result<bool> {
    kind.validate(r)?;
    EventSampler::new(kind, r, *d).hit(stream)
}

/// All single-set events evaluated on one fully drawn `r x r` matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SampleOutcomes {
    pub d: bool,
    pub dstar: bool,
    pub dminimal: bool,
}

pub fn sample_outcomes(r: usize, d: &FitnessDistribution, stream: &mut RngStream) -> Result<SampleOutcomes> {
    EventKind::Dminimal.validate(r)?;
    let f = FitnessMatrix::sample(r, d, stream)?;
    let all: Vec<usize> = (0..r).collect();
    let is_k = kinship::is_kset(&f, &all);
    Ok(SampleOutcomes {
        d: is_k,
        dstar: kinship::is_kstar_set(&f, &all)?,
        dminimal: is_k && kinship::is_minimal_kset(&f, &all)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventDescriptor {
    pub kind: String,
    pub r: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub law: Law,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MCEstimate {
    pub event: EventDescriptor,
    pub p_hat: f64,
    pub stderr: f64,
    pub samples: u64,
    pub hits: u64,
    pub seed: u64,
    pub shards: usize,
    pub rare_event_warning: bool,
}

impl MCEstimate {
    /// `|p_hat - target| <= z * stderr`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.p_hat - target).abs() <= z * self.stderr
    }

    pub fn z_score(&self, target: f64) -> f64 {
        (self.p_hat - target) / self.stderr
    }
}

/// Contiguous sample-index range of shard `s` out of `shards`.
pub fn shard_range(samples: u64, shards: usize, s: usize) -> std::ops::Range<u64> {
    let shards = shards as u64;
    let s = s as u64;
    let base = samples / shards;
    let extra = samples % shards;
    let start = s * base + s.min(extra);
    let len = base + u64::from(s < extra);
    start..start + len
}

/// Hits over the sample indices in `range`.
pub fn count_hits(
    kind: EventKind,
    r: usize,
    d: &FitnessDistribution,
    seed: u64,
    range: std::ops::Range<u64>,
) -> Result<u64> {
    kind.validate(r)?;
    let mut sampler = EventSampler::new(kind, r, *d);
    let mut hits = 0;
    for i in range {
        let mut stream = RngStream::new(seed, i);
        hits += u64::from(sampler.hit(&mut stream)?);
    }
    Ok(hits)
}

/// Combine per-shard hit counts into an estimate. Order does not matter.
pub fn assemble(
    kind: EventKind,
    r: usize,
    d: &FitnessDistribution,
    samples: u64,
    seed: u64,
    shards: usize,
    hits_per_shard: &[u64],
) -> MCEstimate {
    let hits: u64 = hits_per_shard.iter().sum();
    let p_hat = hits as f64 / samples as f64;
    MCEstimate {
        event: EventDescriptor {
            kind: kind.name().to_string(),
            r,
            k: kind.overlap(),
            law: d.law(),
        },
        p_hat,
        stderr: (p_hat * (1.0 - p_hat) / samples as f64).sqrt(),
        samples,
        hits,
        seed,
        shards,
        rare_event_warning: hits < RARE_EVENT_HITS,
    }
}

pub fn estimate(
    kind: EventKind,
    r: usize,
    d: &FitnessDistribution,
    samples: u64,
    seed: u64,
    shards: usize,
) -> Result<MCEstimate> {
    if samples < 1 {
        return Err(Error::pre("samples must be >= 1"));
    }
    if shards < 1 {
        return Err(Error::pre("shards must be >= 1"));
    }
    kind.validate(r)?;
    // split shards further so a single large shard does not serialize the run
    let chunks = (rayon::current_num_threads() * 4).max(1) as u64;
    let hits = (0..shards)
        .into_par_iter()
        .map(|s| {
            let range = shard_range(samples, shards, s);
            let len = range.end - range.start;
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let lo = range.start + len * c / chunks;
                    let hi = range.start + len * (c + 1) / chunks;
                    count_hits(kind, r, d, seed, lo..hi)
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(assemble(kind, r, d, samples, seed, shards, &hits))
}

/// Samples needed for about `target_hits` expected hits of `D`, using the
/// law-free lower bound on its probability.
pub fn samples_for_hits(r: usize, target_hits: f64) -> Result<u64> {
    let p = formulas::lower_bound_pd(r as u64)?;
    Ok((target_hits / p).ceil() as u64)
}

fn substream_of(block: u64, trial: u64) -> u64 {
    block << 32 | trial
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LmaxRow {
    pub n: usize,
    pub law: String,
    pub trials: usize,
    pub completed: usize,
    pub budget_exceeded: usize,
    pub min: Option<usize>,
    pub mean: Option<f64>,
    pub max: Option<usize>,
    pub ref_lower: f64,
    pub ref_upper: f64,
    pub soft_upper: f64,
    pub cube_root_floor: usize,
    pub within_soft_bounds: Option<bool>,
}

#[derive(Clone, Copy, Debug)]
pub struct LmaxOptions {
    pub n_cap: usize,
    pub node_budget: u64,
}

impl Default for LmaxOptions {
    fn default() -> Self {
        Self {
            n_cap: DEFAULT_LMAX_CAP,
            node_budget: kinship::DEFAULT_NODE_BUDGET,
        }
    }
}

fn cube_root_floor(n: usize) -> usize {
    let mut c = (n as f64).cbrt().round() as usize;
    while c * c * c > n {
        c -= 1;
    }
    while (c + 1) * (c + 1) * (c + 1) <= n {
        c += 1;
    }
    c
}

/// `L_n` over `trials` random matrices per `n`, with the reference curves
/// `2 n^{1/3}`, `c_class sqrt(n)` and the soft bound `2.5 sqrt(n)`.
pub fn experiment_lmax(
    n_list: &[usize],
    d: &FitnessDistribution,
    trials: usize,
    seed: u64,
    opts: LmaxOptions,
) -> Result<Vec<LmaxRow>> {
    if let Some(&n) = n_list.iter().find(|&&n| n > opts.n_cap || n == 0) {
        return Err(Error::pre(format!("n = {n} outside [1, {}]", opts.n_cap)));
    }
    let c_class = formulas::kingman_constants().c_class;
    let mut rows = Vec::with_capacity(n_list.len());
    for (b, &n) in n_list.iter().enumerate() {
        let results: Vec<Result<usize>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut stream = RngStream::new(seed, substream_of(b as u64, t as u64));
                let f = FitnessMatrix::sample(n, d, &mut stream)?;
                kinship::max_kset_size_with_budget(&f, opts.node_budget)
            })
            .collect();
        let mut sizes = Vec::new();
        let mut over = 0;
        for res in results {
            match res {
                Ok(l) => sizes.push(l),
                Err(Error::BudgetExceeded { .. }) => over += 1,
                Err(e) => return Err(e),
            }
        }
        let sqrt_n = (n as f64).sqrt();
        let floor3 = cube_root_floor(n);
        let soft_upper = 2.5 * sqrt_n;
        let mean = (!sizes.is_empty()).then(|| sizes.iter().sum::<usize>() as f64 / sizes.len() as f64);
        let min = sizes.iter().copied().min();
        let max = sizes.iter().copied().max();
        rows.push(LmaxRow {
            n,
            law: d.law().to_string(),
            trials,
            completed: sizes.len(),
            budget_exceeded: over,
            min,
            mean,
            max,
            ref_lower: 2.0 * (n as f64).cbrt(),
            ref_upper: c_class * sqrt_n,
            soft_upper,
            cube_root_floor: floor3,
            within_soft_bounds: min.zip(max).map(|(lo, hi)| lo >= floor3 && hi as f64 <= soft_upper),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub r: usize,
    pub law: String,
    pub trials: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_stderr: f64,
    pub p_hat: f64,
    pub p_stderr: f64,
    pub expected: f64,
    pub expected_stderr: f64,
    pub ratio: f64,
    /// `(mean - expected)` over the combined standard error.
    pub z: f64,
}

/// Empirical moments of `X_{n,r}` for `r` in `2..=r_max`, against
/// `C(n,r) p_hat` with `p_hat` from [`estimate`] on `mc_samples` samples.
pub fn experiment_concentration(
    n: usize,
    r_max: usize,
    trials: usize,
    d: &FitnessDistribution,
    seed: u64,
    mc_samples: u64,
) -> Result<Vec<ConcentrationRow>> {
    if n > CONCENTRATION_MAX_N || r_max > CONCENTRATION_MAX_R || r_max < 2 || r_max > n || trials < 1 {
        return Err(Error::pre(format!(
            "concentration needs 2 <= r_max <= min(n, {CONCENTRATION_MAX_R}), n <= {CONCENTRATION_MAX_N}, \
             trials >= 1 (got n = {n}, r_max = {r_max}, trials = {trials})"
        )));
    }
    let counts: Vec<Vec<u64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = RngStream::new(seed, substream_of(0, t as u64));
            let f = FitnessMatrix::sample(n, d, &mut stream)?;
            let inv = kinship::enumerate_ksets(&f, 2, r_max, kinship::EnumerationMode::Count)?;
            Ok((2..=r_max).map(|r| inv.count(r).unwrap_or(0)).collect())
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (idx, r) in (2..=r_max).enumerate() {
        let xs: Vec<f64> = counts.iter().map(|c| c[idx] as f64).collect();
        let (mean, variance) = mean_var(&xs);
        let est = estimate(EventKind::D, r, d, mc_samples, seed ^ 0x9e37_79b9_7f4a_7c15, 1)?;
        let binom = formulas::ln_binomial(n as u64, r as u64)?.exp();
        let expected = binom * est.p_hat;
        let expected_stderr = binom * est.stderr;
        let mean_stderr = (variance / trials as f64).sqrt();
        let se = (mean_stderr.powi(2) + expected_stderr.powi(2)).sqrt();
        rows.push(ConcentrationRow {
            n,
            r,
            law: d.law().to_string(),
            trials,
            mean,
            variance,
            mean_stderr,
            p_hat: est.p_hat,
            p_stderr: est.stderr,
            expected,
            expected_stderr,
            ratio: mean / expected,
            z: if se > 0.0 { (mean - expected) / se } else { 0.0 },
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KStarCensusRow {
    pub n: usize,
    pub r: usize,
    pub trials: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_stderr: f64,
    pub kset_mean: f64,
    pub pd_star: f64,
    pub expected: f64,
    pub ratio: f64,
    pub z: f64,
}

/// K*-set counts of sizes `2..=r` under uniform fitnesses against
/// `C(n,r) P(D*)`.
pub fn experiment_kstar_census(n: usize, r: usize, trials: usize, seed: u64) -> Result<Vec<KStarCensusRow>> {
    if n > KSTAR_CENSUS_MAX_N || r > KSTAR_CENSUS_MAX_R || r < 2 || r > n || trials < 1 {
        return Err(Error::pre(format!(
            "K* census needs 2 <= r <= min(n, {KSTAR_CENSUS_MAX_R}), n <= {KSTAR_CENSUS_MAX_N}, \
             trials >= 1 (got n = {n}, r = {r}, trials = {trials})"
        )));
    }
    let d = FitnessDistribution::uniform();
    let counts: Vec<(Vec<u64>, Vec<u64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = RngStream::new(seed, substream_of(0, t as u64));
            let f = FitnessMatrix::sample(n, &d, &mut stream)?;
            let star = kinship::enumerate_kstar_sets(&f, 2, r, kinship::EnumerationMode::Count)?;
            let plain = kinship::enumerate_ksets(&f, 2, r, kinship::EnumerationMode::Count)?;
            Ok((
                (2..=r).map(|s| star.count(s).unwrap_or(0)).collect(),
                (2..=r).map(|s| plain.count(s).unwrap_or(0)).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (idx, s) in (2..=r).enumerate() {
        let xs: Vec<f64> = counts.iter().map(|c| c.0[idx] as f64).collect();
        let ks: Vec<f64> = counts.iter().map(|c| c.1[idx] as f64).collect();
        let (mean, variance) = mean_var(&xs);
        let pd_star = formulas::pd_star_uniform(s as u64)?.exact;
        let expected = formulas::ln_binomial(n as u64, s as u64)?.exp() * pd_star;
        let mean_stderr = (variance / trials as f64).sqrt();
        rows.push(KStarCensusRow {
            n,
            r: s,
            trials,
            mean,
            variance,
            mean_stderr,
            kset_mean: mean_var(&ks).0,
            pd_star,
            expected,
            ratio: mean / expected,
            z: if mean_stderr > 0.0 { (mean - expected) / mean_stderr } else { 0.0 },
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub r: u64,
    pub lower: f64,
    pub upper_tight: f64,
    pub upper_asym: f64,
    pub target: f64,
    pub lower_rel_dev: f64,
}

/// `{r! p}^{1/r}` for the three bounds on `P(D)`; the limit is `2/e`.
pub fn experiment_ratio(r_list: &[u64]) -> Result<Vec<RatioRow>> {
    let target = 2.0 / std::f64::consts::E;
    r_list
        .iter()
        .map(|&r| {
            let lower = formulas::kingman_ratio_ln(r, formulas::ln_lower_bound_pd(r)?)?;
            Ok(RatioRow {
                r,
                lower,
                upper_tight: formulas::kingman_ratio_ln(r, formulas::ln_upper_bound_pd_tight(r)?)?,
                upper_asym: formulas::kingman_ratio_ln(r, formulas::ln_upper_bound_pd_asym(r)?)?,
                target,
                lower_rel_dev: lower / target - 1.0,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticRow {
    pub r: usize,
    pub law: String,
    pub samples: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub stderr: f64,
    pub asymptotic: f64,
    pub ratio: f64,
    pub rare_event_warning: bool,
}

/// `p_hat(D) / asymptotic_pd(r)`; a trend table, no rate is asserted.
pub fn experiment_asymptotic(
    r_list: &[usize],
    d: &FitnessDistribution,
    samples: u64,
    seed: u64,
) -> Result<Vec<AsymptoticRow>> {
    r_list
        .iter()
        .map(|&r| {
            let est = estimate(EventKind::D, r, d, samples, seed, 1)?;
            let asym = formulas::asymptotic_pd(r as u64, d)?;
            Ok(AsymptoticRow {
                r,
                law: d.law().to_string(),
                samples,
                hits: est.hits,
                p_hat: est.p_hat,
                stderr: est.stderr,
                asymptotic: asym,
                ratio: est.p_hat / asym,
                rare_event_warning: est.rare_event_warning,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairBoundRow {
    pub r: usize,
    pub k: usize,
    pub law: String,
    pub samples: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub stderr: f64,
    pub pair_bound: f64,
    pub ratio: f64,
    pub factor_count: u64,
    pub rare_event_warning: bool,
}

/// `p_hat(Dpair(k)) / P(r, k)` over `k` in `1..r`; reported, not asserted.
pub fn experiment_pairbound(
    r_list: &[usize],
    d: &FitnessDistribution,
    samples: u64,
    seed: u64,
) -> Result<Vec<PairBoundRow>> {
    let mut rows = Vec::new();
    for &r in r_list {
        for k in 1..r {
            let est = estimate(EventKind::Dpair(k), r, d, samples, seed, 1)?;
            let bound = formulas::pair_bound(r as u64, k as u64)?;
            rows.push(PairBoundRow {
                r,
                k,
                law: d.law().to_string(),
                samples,
                hits: est.hits,
                p_hat: est.p_hat,
                stderr: est.stderr,
                pair_bound: bound,
                ratio: est.p_hat / bound,
                factor_count: formulas::factor_count(r as u64, k as u64)?,
                rare_event_warning: est.rare_event_warning,
            });
        }
    }
    Ok(rows)
}

/// CSV with a header row naming every field of `T`.
pub fn write_table<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
