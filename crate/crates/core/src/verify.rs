//! Cross-validation of the exact engine, the simulator and the limit law.
//!
//! Every check records its statistic, reference, tolerance and where the
//! reference comes from; a report passes iff all of its checks pass.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{
    conditional_pmf, expected_population, extinction_seq, fdd_pgf, joint_pmf, offsets_for, FddSpec, JointPmf,
};
use crate::lifelaw::{g_k, LifeLaw};
use crate::limitlaw::{eta_fdd_pmf, LimitParams};
use crate::report::{CheckResult, Provenance, RunReport};
use crate::simulator::{conditional_sample, dichotomy_limit, dichotomy_stats, simulate, sqrt_cutoff, SimConfig};
use crate::stats::{binomial_sigma, decreasing_with_slack, extrapolate};

/// Agreement required between the DP and the enumeration oracle.
pub const ORACLE_TOL: f64 = 1e-12;
/// Default node budget of the enumeration oracle.
pub const DEFAULT_NODE_BUDGET: usize = 200_000;
/// Additive slack in decreasing-trend checks on TV distances.
pub const TREND_SLACK: f64 = 1e-3;

// ---------------------------------------------------------------------------
// exhaustive enumeration

/// One outcome of an individual: probability, life length, birth ages.
type Outcome = (f64, u64, Vec<u64>);

/// All outcomes that matter up to `horizon`; life lengths beyond it are lumped
/// into `horizon + 1`, which changes nothing observable by then.
fn outcomes(model: &LifeLaw, horizon: u64) -> Result<Vec<Outcome>> {
    let cut = horizon + 1;
    let lives = |life: &crate::lifelaw::LifeLengthLaw| -> Vec<(u64, f64)> {
        let mut v: Vec<(u64, f64)> = (1..cut).map(|l| (l, life.pmf(l))).collect();
        v.push((cut, life.survival(horizon as i64)));
        v.into_iter().filter(|&(_, p)| p > 0.0).collect()
    };
    let mut out = Vec::new();
    match model {
        LifeLaw::Tabulated { atoms, .. } => {
            out.extend(atoms.iter().map(|a| (a.prob, a.life, a.birth_ages.clone())));
        }
        LifeLaw::BellmanHarris { life, offspring } => {
            for (l, pl) in lives(life) {
                for (n, &q) in offspring.probs().iter().enumerate() {
                    out.push((pl * q, l, vec![l; n]));
                }
            }
        }
        LifeLaw::Sevastyanov { life, rule } => {
            for (l, pl) in lives(life) {
                for (n, &q) in rule.offspring(l).probs().iter().enumerate() {
                    out.push((pl * q, l, vec![l; n]));
                }
            }
        }
        LifeLaw::DelayedDeath { schedules, residual, .. } => {
            for s in schedules {
                for (r, pr) in lives(residual) {
                    out.push((s.prob * pr, s.last_birth() + r, s.birth_ages.clone()));
                }
            }
        }
    }
    out.retain(|o| o.0 > 0.0);
    Ok(out)
}

/// Exact joint law of `(Z(t_1), ..., Z(t_k))` by expanding the outcome tree.
///
/// States are probability-weighted pairs (pending birth times, counts so far);
/// identical states are merged. Counts only grow, so with `count_cap` states whose
/// total exceeds it are dropped: cells with `sum i <= count_cap` stay exact and the
/// rest of the mass is not reported. Fails with `OracleBlowup` past `node_budget` states.
pub fn enumerate_joint(
    model: &LifeLaw,
    times: &[u64],
    count_cap: Option<u32>,
    node_budget: usize,
) -> Result<BTreeMap<Vec<u32>, f64>> {
    let horizon = times.iter().copied().max().unwrap_or(0);
    let outs = outcomes(model, horizon)?;
    let mut frontier: HashMap<(Vec<u64>, Vec<u32>), f64> = HashMap::new();
    frontier.insert((vec![0], vec![0; times.len()]), 1.0);
    let mut finished: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut visited = 0usize;
    while !frontier.is_empty() {
        let mut next: HashMap<(Vec<u64>, Vec<u32>), f64> = HashMap::new();
        for ((pending, counts), p) in frontier {
            visited += 1;
            if visited > node_budget {
                return Err(Error::OracleBlowup(node_budget));
            }
            let birth = pending[0];
            for (q, life, ages) in &outs {
                let mut c = counts.clone();
                for (ci, &t) in c.iter_mut().zip(times) {
                    *ci += u32::from(birth <= t && t < birth + life);
                }
                if count_cap.is_some_and(|cap| c.iter().sum::<u32>() > cap) {
                    continue;
                }
                let mut rest = pending[1..].to_vec();
                rest.extend(ages.iter().map(|&a| birth + a).filter(|&b| b <= horizon));
                rest.sort_unstable();
                if rest.is_empty() {
                    *finished.entry(c).or_insert(0.0) += p * q;
                } else {
                    *next.entry((rest, c)).or_insert(0.0) += p * q;
                }
            }
        }
        frontier = next;
    }
    Ok(finished)
}

/// Sparse convolution of two count laws, keeping cells with `sum i <= cap`.
fn convolve(a: &BTreeMap<Vec<u32>, f64>, b: &BTreeMap<Vec<u32>, f64>, cap: u32) -> BTreeMap<Vec<u32>, f64> {
    let mut out = BTreeMap::new();
    for (ia, &pa) in a {
        let sa: u32 = ia.iter().sum();
        for (ib, &pb) in b {
            if sa + ib.iter().sum::<u32>() <= cap {
                let idx: Vec<u32> = ia.iter().zip(ib).map(|(x, y)| x + y).collect();
                *out.entry(idx).or_insert(0.0) += pa * pb;
            }
        }
    }
    out
}

/// Joint law of `(Z(t_1), ..., Z(t_k))` on `sum i <= cap` by enumerating each
/// individual's outcomes and convolving the explicit count laws of its children's
/// subtrees; subtrees rooted at the same birth time are shared.
///
/// Works in pmf space only (no generating functions), so it checks the DP
/// independently where the full tree of [`enumerate_joint`] is too large.
pub fn subtree_oracle(model: &LifeLaw, times: &[u64], cap: u32) -> Result<BTreeMap<Vec<u32>, f64>> {
    let horizon = times.iter().copied().max().unwrap_or(0);
    let outs = outcomes(model, horizon)?;
    // law[b]: counts contributed by an individual born at b and all its descendants
    let mut law: Vec<BTreeMap<Vec<u32>, f64>> = vec![BTreeMap::new(); horizon as usize + 1];
    for b in (0..=horizon).rev() {
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (q, life, ages) in &outs {
            let own: Vec<u32> = times.iter().map(|&t| u32::from(b <= t && t < b + life)).collect();
            if own.iter().sum::<u32>() > cap {
                continue;
            }
            let mut dist = BTreeMap::from([(own, 1.0)]);
            for &a in ages {
                if b + a <= horizon {
                    dist = convolve(&dist, &law[(b + a) as usize], cap);
                }
            }
            for (idx, p) in dist {
                *acc.entry(idx).or_insert(0.0) += q * p;
            }
        }
        law[b as usize] = acc;
    }
    Ok(std::mem::take(&mut law[0]))
}

fn max_cell_diff(dp: &JointPmf, oracle: &BTreeMap<Vec<u32>, f64>, cap: usize) -> f64 {
    let mut worst = 0.0f64;
    for (idx, &p) in oracle {
        if idx.iter().map(|&i| i as usize).sum::<usize>() <= cap {
            worst = worst.max((dp.get(idx) - p).abs());
        }
    }
    for (idx, &p) in &dp.cells {
        if !oracle.contains_key(idx) {
            worst = worst.max(p.abs());
        }
    }
    worst
}

/// Which enumeration produced an oracle law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OracleKind {
    Tree,
    Subtree,
}

impl OracleKind {
    fn label(self) -> &'static str {
        match self {
            Self::Tree => "tree",
            Self::Subtree => "subtree",
        }
    }
}

/// Law of the counts at `sel` on `sum i <= cap` from the chosen oracle.
fn oracle_law(kind: OracleKind, model: &LifeLaw, sel: &[u64], cap: u32, budget: usize) -> Result<BTreeMap<Vec<u32>, f64>> {
    match kind {
        OracleKind::Tree => enumerate_joint(model, sel, Some(cap), budget),
        OracleKind::Subtree => subtree_oracle(model, sel, cap),
    }
}

/// DP extinction, joint and conditional pmfs against exhaustive enumeration for `t <= t_small`.
///
/// The subtree oracle always runs. The full outcome tree runs as a second oracle
/// while it stays within `node_budget` states; past that it is recorded as skipped.
pub fn oracle_equivalence(name: &str, model: &LifeLaw, t_small: u64, node_budget: usize) -> Result<RunReport> {
    let mut report = RunReport::new(format!("oracle_equivalence[{name}]"));
    for kind in [OracleKind::Subtree, OracleKind::Tree] {
        match oracle_checks(kind, model, t_small, node_budget) {
            Ok(r) => report.extend(r),
            Err(Error::OracleBlowup(n)) if kind == OracleKind::Tree => {
                report.rows.push(serde_json::json!({"t_small": t_small, "tree_oracle": format!("skipped: over {n} states")}));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

fn oracle_checks(kind: OracleKind, model: &LifeLaw, t_small: u64, budget: usize) -> Result<RunReport> {
    let start = Instant::now();
    let tag = kind.label();
    let mut report = RunReport::new(tag);
    let table = extinction_seq(model, t_small)?;
    let mut oracle_extinction = Vec::new();
    let mut worst_ext = 0.0f64;
    for t in 0..=t_small {
        let p0 = oracle_law(kind, model, &[t], 0, budget)?.get(&vec![0]).copied().unwrap_or(0.0);
        worst_ext = worst_ext.max((table.extinction(t) - p0).abs());
        oracle_extinction.push(p0);
    }
    report.push(
        CheckResult::within(format!("extinction_t<={t_small}_vs_{tag}"), worst_ext, 0.0, ORACLE_TOL, Provenance::Oracle)
            .timed(start),
    );

    let cap = 12;
    let pairs: Vec<Vec<u64>> = if t_small >= 2 {
        vec![vec![t_small - 1, t_small], vec![1, t_small / 2 + 1, t_small]]
    } else {
        vec![vec![t_small]]
    };
    for sel in pairs {
        let mut sel = sel;
        sel.dedup();
        let oracle = oracle_law(kind, model, &sel, cap as u32, budget)?;
        let dp = joint_pmf(model, &sel, cap)?;
        let diff = max_cell_diff(&dp, &oracle, cap);
        report.push(
            CheckResult::within(format!("joint_pmf{sel:?}_vs_{tag}"), diff, 0.0, ORACLE_TOL, Provenance::Oracle).timed(start),
        );
    }

    let q = 1.0 - oracle_extinction[t_small as usize];
    if t_small >= 1 && q > 0.0 {
        // Bayes from the oracle: P(Z(1) = i, Z(t) = j | Z(t) > 0)
        let sel = if t_small >= 2 { vec![1, t_small] } else { vec![t_small] };
        let last = sel.len() - 1;
        let cond: BTreeMap<Vec<u32>, f64> = oracle_law(kind, model, &sel, cap as u32, budget)?
            .into_iter()
            .filter(|(idx, _)| idx[last] > 0)
            .map(|(idx, p)| (idx, p / q))
            .collect();
        let spec = FddSpec::new(sel.clone(), vec![0.0; sel.len()])?.conditioned_at(t_small);
        let dp = conditional_pmf(model, &spec, cap)?;
        let diff = max_cell_diff(&dp, &cond, cap);
        report.push(
            CheckResult::within(format!("conditional_pmf_t{t_small}_vs_{tag}"), diff, 0.0, ORACLE_TOL, Provenance::Oracle)
                .timed(start),
        );
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// convergence of t Q(t) and t Q_k(t)

/// Configuration of a limit-convergence run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    /// dyadic times, increasing
    pub t_grid: Vec<u64>,
    /// relative tolerance of the extrapolated limit
    pub rel_tol: f64,
    /// leading grid points excluded from the monotonicity check
    pub burn_in: usize,
    /// optional multi-time query `(y, z)` with `y_1 = 1`
    pub fdd: Option<(Vec<f64>, Vec<f64>)>,
}

impl ConvergenceConfig {
    pub fn dyadic(lo: u32, hi: u32, rel_tol: f64) -> Self {
        Self { t_grid: (lo..=hi).map(|e| 1u64 << e).collect(), rel_tol, burn_in: 0, fdd: None }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ConvergenceRowOut {
    sequence: &'static str,
    t: u64,
    value: f64,
    limit: f64,
    abs_error: f64,
}

fn trend_checks(
    report: &mut RunReport,
    label: &'static str,
    grid: &[u64],
    values: &[f64],
    limit: f64,
    cfg: &ConvergenceConfig,
    start: Instant,
) {
    let errors: Vec<f64> = values.iter().map(|v| (v - limit).abs()).collect();
    for ((&t, &v), &e) in grid.iter().zip(values).zip(&errors) {
        report.rows.push(
            serde_json::to_value(ConvergenceRowOut { sequence: label, t, value: v, limit, abs_error: e }).expect("row"),
        );
    }
    let tail = &errors[cfg.burn_in.min(errors.len())..];
    // errors at rounding level cannot decrease further and count as converged
    let floor = 4.0 * f64::EPSILON * limit.abs().max(1.0);
    let decreasing = tail.windows(2).all(|w| w[1] < w[0] || w[0].max(w[1]) <= floor);
    report.push(
        CheckResult::flag(
            format!("{label}_error_strictly_decreasing"),
            *tail.last().unwrap_or(&f64::NAN),
            0.0,
            0.0,
            decreasing,
            Provenance::Exact,
        )
        .with_detail(format!("errors {tail:?}"))
        .timed(start),
    );
    let n = values.len();
    if n >= 3 {
        let ex = extrapolate(values[n - 3], values[n - 2], values[n - 1]);
        report.push(
            CheckResult::within(
                format!("{label}_extrapolated_limit"),
                ex.limit,
                limit,
                cfg.rel_tol * limit.abs(),
                Provenance::Theory,
            )
            .with_detail(format!("fitted order {:.3} per doubling", ex.order))
            .timed(start),
        );
    }
}

/// `t Q(t) -> h`, and optionally `t Q_k(t) -> h_k` and `Q_k / Q -> h_k / h`, along a dyadic grid.
pub fn limit_convergence(name: &str, model: &LifeLaw, cfg: &ConvergenceConfig) -> Result<RunReport> {
    let start = Instant::now();
    let summary = model.summary()?;
    if !(summary.critical && summary.a_finite) {
        return Err(Error::InvalidModel("limit checks need a critical model with finite a".into()));
    }
    let mut report = RunReport::new(format!("limit_convergence[{name}]"));
    let t_max = cfg.t_grid.iter().copied().max().unwrap_or(0);
    let table = extinction_seq(model, t_max)?;
    let tq: Vec<f64> = cfg.t_grid.iter().map(|&t| t as f64 * table.survival(t)).collect();
    trend_checks(&mut report, "tQ", &cfg.t_grid, &tq, summary.h, cfg, start);

    if let Some((y, z)) = &cfg.fdd {
        let h_k = summary.h_k(g_k(y, z));
        let mut tqk = Vec::new();
        let mut ratio = Vec::new();
        for &t in &cfg.t_grid {
            let times: Vec<u64> = offsets_for(t, y).into_iter().map(|o| t + o).collect();
            let q_k = 1.0 - fdd_pgf(model, &FddSpec::new(times, z.clone())?)?;
            tqk.push(t as f64 * q_k);
            ratio.push(q_k / table.survival(t));
        }
        trend_checks(&mut report, "tQ_k", &cfg.t_grid, &tqk, h_k, cfg, start);
        trend_checks(&mut report, "ratio", &cfg.t_grid, &ratio, h_k / summary.h, cfg, start);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// fdd convergence to the limit process

/// Exact survival-conditioned pmf at times `round(t y_i)` given `Z(t) > 0`.
pub fn exact_scaled_pmf(model: &LifeLaw, t: u64, y: &[f64], cap: usize) -> Result<JointPmf> {
    let times: Vec<u64> = y.iter().map(|&yi| (t as f64 * yi + 0.5).floor() as u64).collect();
    let spec = FddSpec::new(times.clone(), vec![0.0; times.len()])?.conditioned_at(t);
    conditional_pmf(model, &spec, cap)
}

/// Monte Carlo arm of [`fdd_limit_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McArm {
    pub t: u64,
    pub survivors: u64,
    pub seed: u64,
    pub threads: usize,
}

/// TV distance between exact conditional pmfs and the limit pmf, decreasing in `t`;
/// optionally a Monte Carlo cross-check of the exact pmf at one `t`.
pub fn fdd_limit_check(name: &str, model: &LifeLaw, y: &[f64], t_grid: &[u64], cap: usize, mc: Option<McArm>) -> Result<RunReport> {
    let start = Instant::now();
    let summary = model.summary()?;
    let limit = eta_fdd_pmf(&LimitParams::new(summary.c)?, y, cap)?.pmf;
    let mut report = RunReport::new(format!("fdd_limit_check[{name}]"));
    let mut tvs = Vec::new();
    for &t in t_grid {
        let exact = exact_scaled_pmf(model, t, y, cap)?;
        let tv = exact.tv_distance(&limit);
        report.rows.push(serde_json::json!({"t": t, "tv": tv, "c": summary.c}));
        tvs.push(tv);
    }
    let in_range = tvs.iter().all(|tv| (0.0..=1.0).contains(tv));
    let decreasing = decreasing_with_slack(&tvs, TREND_SLACK) && tvs.windows(2).all(|w| w[1] < w[0]);
    report.push(
        CheckResult::flag("tv_decreasing", *tvs.last().unwrap_or(&f64::NAN), 0.0, TREND_SLACK, decreasing && in_range, Provenance::Theory)
            .with_detail(format!("tv {tvs:?}"))
            .timed(start),
    );

    if let Some(arm) = mc {
        let exact = exact_scaled_pmf(model, arm.t, y, cap)?;
        let times: Vec<u64> = y.iter().map(|&yi| (arm.t as f64 * yi + 0.5).floor() as u64).collect();
        let horizon = *times.last().expect("nonempty");
        let cfg = SimConfig::new(model.clone(), horizon, times, 1, arm.seed).with_threads(arm.threads).conditioned_at(arm.t);
        let sim = conditional_sample(&cfg, arm.survivors)?;
        report.extend(pmf_agreement("mc_vs_exact", &sim.empirical_pmf(cap), &exact, arm.survivors, start));
    }
    Ok(report)
}

/// Cells expected to hold fewer draws than this are pooled before scoring, where
/// the normal approximation behind a sigma bound would not hold.
pub const MIN_EXPECTED_COUNT: f64 = 20.0;

/// Largest per-cell deviation of an empirical pmf from the exact one, in binomial sigmas.
///
/// Sparse cells and the overflow are pooled into one bucket when their expected
/// counts are below [`MIN_EXPECTED_COUNT`].
pub fn pmf_agreement(label: &str, empirical: &JointPmf, exact: &JointPmf, n: u64, start: Instant) -> RunReport {
    let mut report = RunReport::new(label);
    let mut worst = 0.0f64;
    let mut worst_cell = String::new();
    let mut score = |name: String, p_hat: f64, p: f64| {
        let sigma = binomial_sigma(p, n as usize).max(1.0 / n as f64);
        let z = (p_hat - p).abs() / sigma;
        if z > worst {
            worst = z;
            worst_cell = name;
        }
    };
    let dense = |p: f64| p * n as f64 >= MIN_EXPECTED_COUNT;
    let (mut pooled, mut pooled_hat, mut scored) = (0.0, 0.0, 0usize);
    for (idx, &p) in &exact.cells {
        if dense(p) {
            score(format!("{idx:?}"), empirical.get(idx), p);
            scored += 1;
        } else {
            pooled += p;
            pooled_hat += empirical.get(idx);
        }
    }
    // empirical cells the exact law does not list count toward the pool
    pooled_hat += empirical.cells.iter().filter(|(idx, _)| !exact.cells.contains_key(*idx)).map(|(_, &p)| p).sum::<f64>();
    if dense(exact.overflow) {
        score("overflow".into(), empirical.overflow, exact.overflow);
    } else {
        pooled += exact.overflow;
        pooled_hat += empirical.overflow;
    }
    score("pooled sparse cells".into(), pooled_hat, pooled);
    report.push(
        CheckResult::flag(format!("{label}_max_sigma"), worst, 0.0, 3.0, worst <= 3.0, Provenance::MonteCarlo)
            .with_detail(format!("worst cell {worst_cell}; {scored} cells scored"))
            .timed(start),
    );
    report
}

/// Empirical `P(Z(t) > 0)` against the DP at every query time.
pub fn survival_agreement(name: &str, model: &LifeLaw, horizon: u64, replicates: u64, seed: u64, threads: usize) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new(format!("survival_agreement[{name}]"));
    let cfg = SimConfig::new(model.clone(), horizon, vec![horizon], replicates, seed).with_threads(threads);
    let sim = simulate(&cfg)?;
    let q = extinction_seq(model, horizon)?.survival(horizon);
    let p_hat = sim.survival.estimate;
    let sigma = binomial_sigma(q, sim.survival.trials as usize);
    report.push(
        CheckResult::within(format!("survival_t{horizon}"), p_hat, q, 3.0 * sigma, Provenance::Exact)
            .with_detail(format!("overflowed {}", sim.overflowed))
            .timed(start),
    );
    let expected = expected_population(model, horizon);
    for m in &sim.means {
        let e = expected[m.t as usize];
        report.push(CheckResult::within(format!("mean_Z_t{}", m.t), m.mean, e, 4.0 * m.sigma, Provenance::Exact).timed(start));
    }
    Ok(report)
}

/// Survivor small-count fractions along `t_grid`, trending toward `(sqrt(1+c)-1)/(sqrt(1+c)+1)`.
///
/// Each step may move away from the limit by at most `slack`. The exact DP value
/// of the same fraction is recorded alongside each estimate.
pub fn dichotomy_trend(name: &str, model: &LifeLaw, t_grid: &[u64], survivors: u64, seed: u64, slack: f64) -> Result<RunReport> {
    let start = Instant::now();
    let summary = model.summary()?;
    let limit = dichotomy_limit(summary.c);
    let mut report = RunReport::new(format!("dichotomy_trend[{name}]"));
    let mut gaps = Vec::new();
    for &t in t_grid {
        let cfg = SimConfig::new(model.clone(), t, vec![t], 1, seed);
        let stats = dichotomy_stats(&cfg, sqrt_cutoff, survivors)?;
        let k = sqrt_cutoff(t) as usize;
        let exact = exact_scaled_pmf(model, t, &[1.0], k)?;
        let exact_small: f64 = (1..=k as u32).map(|i| exact.get(&[i])).sum();
        report.rows.push(serde_json::json!({
            "t": t, "cutoff": stats.cutoff, "small_fraction": stats.small_fraction,
            "sigma": stats.sigma, "exact_small_fraction": exact_small, "limit": limit,
        }));
        report.push(
            CheckResult::within(
                format!("small_fraction_t{t}_vs_exact"),
                stats.small_fraction,
                exact_small,
                3.0 * binomial_sigma(exact_small, survivors as usize),
                Provenance::Exact,
            )
            .timed(start),
        );
        gaps.push((stats.small_fraction - limit).abs());
    }
    let ok = decreasing_with_slack(&gaps, slack);
    report.push(
        CheckResult::flag("small_fraction_trend", *gaps.last().unwrap_or(&f64::NAN), 0.0, slack, ok, Provenance::Theory)
            .with_detail(format!("|fraction - limit| {gaps:?}"))
            .timed(start),
    );
    Ok(report)
}
