//! Seeded Monte Carlo simulation of GWO populations.
//!
//! Replicate `i` draws from a ChaCha8 stream keyed by `(seed, i)`, so results are
//! identical for any number of worker threads.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::JointPmf;
use crate::lifelaw::LifeLaw;
use crate::stats::{binomial_sigma, wilson_interval};

/// Default cap on the number of pending individuals per replicate.
pub const DEFAULT_MAX_INDIVIDUALS: usize = 10_000_000;
/// Default cap on rejection-sampling attempts.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000_000;
/// Replicates launched per round of rejection sampling.
pub const CONDITIONAL_BATCH: u64 = 4096;
/// Normal quantile for the reported 99% Wilson intervals.
const Z_99: f64 = 2.576;

/// A simulation experiment.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: LifeLaw,
    /// Births after this time are discarded.
    pub horizon: u64,
    /// Sorted observation times, all `<= horizon`.
    pub query_times: Vec<u64>,
    pub replicates: u64,
    pub seed: u64,
    /// Overflow threshold on the pending-individual queue.
    pub max_individuals: usize,
    /// Conditioning time for [`conditional_sample`]; defaults to the horizon.
    pub condition_at: Option<u64>,
    /// Attempt cap for [`conditional_sample`].
    pub max_attempts: u64,
    /// Worker threads; 0 means rayon's default. Does not affect results.
    pub threads: usize,
}

impl SimConfig {
    pub fn new(model: LifeLaw, horizon: u64, query_times: Vec<u64>, replicates: u64, seed: u64) -> Self {
        Self {
            model,
            horizon,
            query_times,
            replicates,
            seed,
            max_individuals: DEFAULT_MAX_INDIVIDUALS,
            condition_at: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            threads: 0,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn conditioned_at(mut self, t: u64) -> Self {
        self.condition_at = Some(t);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::InvalidQuery("at least one replicate is required".into()));
        }
        if self.query_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidQuery("query times must be strictly increasing".into()));
        }
        if self.query_times.last().is_some_and(|&t| t > self.horizon) {
            return Err(Error::InvalidQuery("query times must not exceed the horizon".into()));
        }
        if self.condition_at.is_some_and(|t| t > self.horizon) {
            return Err(Error::InvalidQuery("conditioning time must not exceed the horizon".into()));
        }
        Ok(())
    }

    fn condition_time(&self) -> u64 {
        self.condition_at.unwrap_or(self.horizon)
    }
}

/// Outcome of one replicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Replicate {
    pub index: u64,
    /// `Z` at each query time
    pub counts: Vec<u64>,
    pub z_horizon: u64,
    /// `Z` at the conditioning time
    pub z_condition: u64,
    /// `Z(horizon) > 0`
    pub survived: bool,
    /// pending queue exceeded `max_individuals`; counts are then incomplete
    pub overflow: bool,
}

/// A proportion with its binomial standard error and 99% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub sigma: f64,
    pub wilson_99: (f64, f64),
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        let estimate = if trials == 0 { f64::NAN } else { successes as f64 / trials as f64 };
        Self {
            successes,
            trials,
            estimate,
            sigma: binomial_sigma(estimate, trials as usize),
            wilson_99: wilson_interval(successes as usize, trials as usize, Z_99),
        }
    }
}

/// Sample mean of `Z(t)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub t: u64,
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub horizon: u64,
    pub query_times: Vec<u64>,
    pub seed: u64,
    pub replicates: Vec<Replicate>,
    /// replicates simulated, including rejected ones
    pub attempts: u64,
    pub overflowed: u64,
    /// `P(Z(horizon) > 0)` over non-overflowed attempts
    pub survival: Proportion,
    /// per query time, over the returned non-overflowed replicates
    pub means: Vec<MeanEstimate>,
}

/// Simulates one replicate in birth-time order.
fn run_replicate(cfg: &SimConfig, index: u64) -> Replicate {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let times = &cfg.query_times;
    let t_cond = cfg.condition_time();
    let mut counts = vec![0u64; times.len()];
    let (mut z_horizon, mut z_condition) = (0u64, 0u64);
    let mut pending = BinaryHeap::new();
    pending.push(Reverse(0u64));
    let mut ages = Vec::new();
    let mut overflow = false;
    while let Some(Reverse(birth)) = pending.pop() {
        let life = cfg.model.sample_into(&mut rng, &mut ages);
        // alive during [birth, birth + life - 1]
        let death = birth.saturating_add(life);
        let lo = times.partition_point(|&t| t < birth);
        let hi = times.partition_point(|&t| t < death);
        for c in &mut counts[lo..hi] {
            *c += 1;
        }
        z_horizon += u64::from(birth <= cfg.horizon && cfg.horizon < death);
        z_condition += u64::from(birth <= t_cond && t_cond < death);
        for &tau in &ages {
            let child = birth + tau;
            if child <= cfg.horizon {
                pending.push(Reverse(child));
            }
        }
        if pending.len() > cfg.max_individuals {
            overflow = true;
            break;
        }
    }
    Replicate { index, counts, z_horizon, z_condition, survived: z_horizon > 0, overflow }
}

fn run_range(cfg: &SimConfig, range: std::ops::Range<u64>) -> Result<Vec<Replicate>> {
    let work = || range.clone().into_par_iter().map(|i| run_replicate(cfg, i)).collect::<Vec<_>>();
    if cfg.threads == 0 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidQuery(format!("thread pool: {e}")))?;
    Ok(pool.install(work))
}

fn mean_estimates(times: &[u64], reps: &[Replicate]) -> Vec<MeanEstimate> {
    let valid: Vec<&Replicate> = reps.iter().filter(|r| !r.overflow).collect();
    let n = valid.len() as f64;
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mean = valid.iter().map(|r| r.counts[i] as f64).sum::<f64>() / n;
            let var = valid.iter().map(|r| (r.counts[i] as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            MeanEstimate { t, mean, sigma: (var / n).sqrt() }
        })
        .collect()
}

/// Runs `config.replicates` independent replicates.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let reps = run_range(config, 0..config.replicates)?;
    let overflowed = reps.iter().filter(|r| r.overflow).count() as u64;
    if overflowed > 0 {
        log::warn!("{overflowed} replicates overflowed the population cap");
    }
    let survivors = reps.iter().filter(|r| !r.overflow && r.survived).count() as u64;
    Ok(SimResult {
        horizon: config.horizon,
        query_times: config.query_times.clone(),
        seed: config.seed,
        means: mean_estimates(&config.query_times, &reps),
        survival: Proportion::new(survivors, config.replicates - overflowed),
        attempts: config.replicates,
        overflowed,
        replicates: reps,
    })
}

/// Rejection sampling of replicates with `Z(condition_at) > 0`.
///
/// Batches are simulated in parallel and scanned in index order, so the accepted
/// set depends only on the seed. `survival` estimates `Q(condition_at)`.
pub fn conditional_sample(config: &SimConfig, target_survivors: u64) -> Result<SimResult> {
    config.validate()?;
    let mut accepted = Vec::with_capacity(target_survivors as usize);
    let mut next = 0u64;
    let mut overflowed = 0u64;
    let mut attempts = 0u64;
    while (accepted.len() as u64) < target_survivors {
        if next >= config.max_attempts {
            return Err(Error::BudgetExhausted { attempts: next, survivors: accepted.len() as u64 });
        }
        let end = (next + CONDITIONAL_BATCH.max(target_survivors - accepted.len() as u64)).min(config.max_attempts);
        for rep in run_range(config, next..end)? {
            if (accepted.len() as u64) == target_survivors {
                break;
            }
            attempts = rep.index + 1;
            if rep.overflow {
                overflowed += 1;
            } else if rep.z_condition > 0 {
                accepted.push(rep);
            }
        }
        next = end;
    }
    if overflowed > 0 {
        log::warn!("{overflowed} attempts overflowed the population cap and were excluded");
    }
    Ok(SimResult {
        horizon: config.horizon,
        query_times: config.query_times.clone(),
        seed: config.seed,
        means: mean_estimates(&config.query_times, &accepted),
        survival: Proportion::new(target_survivors, attempts - overflowed),
        attempts,
        overflowed,
        replicates: accepted,
    })
}

impl SimResult {
    /// Empirical joint pmf of the query-time counts on `sum <= cap`, rest in the overflow.
    pub fn empirical_pmf(&self, cap: usize) -> JointPmf {
        let valid: Vec<&Replicate> = self.replicates.iter().filter(|r| !r.overflow).collect();
        let n = valid.len() as f64;
        let mut cells: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for r in valid {
            if r.counts.iter().sum::<u64>() <= cap as u64 {
                *cells.entry(r.counts.iter().map(|&c| c as u32).collect()).or_insert(0.0) += 1.0 / n;
            }
        }
        JointPmf::from_cells(self.query_times.clone(), None, cap, cells)
    }

    /// CSV `replicate,survived,overflow,Z_<t>...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,survived,overflow");
        for t in &self.query_times {
            write!(out, ",Z_{t}").expect("writing to a String");
        }
        out.push('\n');
        for r in &self.replicates {
            write!(out, "{},{},{}", r.index, u8::from(r.survived), u8::from(r.overflow)).expect("writing to a String");
            for c in &r.counts {
                write!(out, ",{c}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    /// Summary JSON without the per-replicate records.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "horizon": self.horizon,
            "query_times": self.query_times,
            "seed": self.seed,
            "returned": self.replicates.len(),
            "attempts": self.attempts,
            "overflowed": self.overflowed,
            "survival": self.survival,
            "means": self.means,
        }))
        .expect("summary serializes")
    }
}

/// Survivor split at time `t` into small (`1 <= Z <= K_t`) and large (`Z > K_t`) populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DichotomyStats {
    pub t: u64,
    pub cutoff: u64,
    pub survivors: u64,
    pub small: u64,
    pub large: u64,
    pub small_fraction: f64,
    pub sigma: f64,
}

/// Default cutoff `K_t = ceil(sqrt(t))`.
pub fn sqrt_cutoff(t: u64) -> u64 {
    (t as f64).sqrt().ceil() as u64
}

/// Limit of the small-population fraction: `P(T <= 1) = (sqrt(1+c) - 1) / (sqrt(1+c) + 1)`.
pub fn dichotomy_limit(c: f64) -> f64 {
    let s = (1.0 + c).sqrt();
    (s - 1.0) / (s + 1.0)
}

/// Conditions on survival at `config.horizon` and classifies `Z(horizon)` by the cutoff.
pub fn dichotomy_stats<F: Fn(u64) -> u64>(config: &SimConfig, cutoff: F, target_survivors: u64) -> Result<DichotomyStats> {
    let mut cfg = config.clone();
    cfg.condition_at = None;
    let res = conditional_sample(&cfg, target_survivors)?;
    let k = cutoff(cfg.horizon);
    let small = res.replicates.iter().filter(|r| r.z_horizon <= k).count() as u64;
    let n = res.replicates.len() as u64;
    let frac = small as f64 / n as f64;
    Ok(DichotomyStats {
        t: cfg.horizon,
        cutoff: k,
        survivors: n,
        small,
        large: n - small,
        small_fraction: frac,
        sigma: binomial_sigma(frac, n as usize),
    })
}
