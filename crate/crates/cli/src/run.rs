//! Subcommand execution.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use gwolab_core::exact::{
    conditional_pgf, conditional_pmf, convergence_csv, convergence_table, extinction_seq, fdd_pgf, joint_pmf, FddSpec,
    JointPmf,
};
use gwolab_core::lifelaw::{LifeLaw, DEFAULT_CRITICAL_TOL};
use gwolab_core::limitlaw::{eta_fdd_pgf, eta_fdd_pmf, figure1_data, FddQuery, LimitParams};
use gwolab_core::report::{fmt_real, RunReport};
use gwolab_core::simulator::{conditional_sample, simulate, SimConfig};
use gwolab_core::verify::{
    dichotomy_trend, fdd_limit_check, limit_convergence, oracle_equivalence, survival_agreement, ConvergenceConfig,
    DEFAULT_NODE_BUDGET,
};

use crate::config::{Check, Cli, CliError, CommandName, ExperimentConfig, Format};

/// Exit status of a verification whose checks did not all pass.
const VERIFY_FAILED: u8 = 1;

type Run = Result<ExitCode, CliError>;

pub fn run(cli: Cli) -> Run {
    let (name, params) = cli.command.split();
    let cfg = ExperimentConfig::resolve(name, params)?;
    log::info!("resolved config: {}", serde_json::to_string(&cfg).unwrap_or_default());
    let outcome = match name {
        CommandName::Summarize => summarize(&cfg),
        CommandName::Dp => dp(&cfg),
        CommandName::Fdd => fdd(&cfg),
        CommandName::Simulate => simulate_cmd(&cfg),
        CommandName::Limit => limit(&cfg),
        CommandName::Figure1 => figure1(&cfg),
        CommandName::Verify => verify(&cfg),
    }?;
    emit(&cfg, &outcome)?;
    Ok(if outcome.passed { ExitCode::SUCCESS } else { ExitCode::from(VERIFY_FAILED) })
}

/// What a subcommand produced.
struct Outcome {
    csv: String,
    json: String,
    summary: String,
    passed: bool,
}

impl Outcome {
    fn new(csv: String, json: String, summary: String) -> Self {
        Self { csv, json, summary, passed: true }
    }
}

/// Writes the payload to `--out` (plus a config echo) or stdout, and the summary line.
fn emit(cfg: &ExperimentConfig, outcome: &Outcome) -> Result<(), CliError> {
    let body = match cfg.format() {
        Format::Csv => &outcome.csv,
        Format::Json => &outcome.json,
    };
    match &cfg.out {
        Some(path) => {
            write(path, body)?;
            let echo = echo_path(path);
            let text = serde_json::to_string_pretty(cfg).map_err(|e| CliError::Config(e.to_string()))?;
            write(&echo, &(text + "\n"))?;
            println!("{}", outcome.summary);
            log::info!("wrote {} and {}", path.display(), echo.display());
        }
        None if body.is_empty() => println!("{}", outcome.summary),
        None => {
            print!("{body}");
            if !body.ends_with('\n') {
                println!();
            }
            eprintln!("{}", outcome.summary);
        }
    }
    Ok(())
}

/// `<out>.config.json`
pub fn echo_path(out: &std::path::Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

fn write(path: &std::path::Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("outputs serialize") + "\n"
}

fn model(cfg: &ExperimentConfig) -> Result<LifeLaw, CliError> {
    Ok(cfg.model_config()?.build()?)
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

/// Plain decimal for summary lines: `0.5`, `2`, `1.2345678901234567`.
fn short(x: f64) -> String {
    format!("{x}")
}

fn summarize(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let s = gwolab_core::lifelaw::summarize(&m, DEFAULT_CRITICAL_TOL)?;
    let line = format!(
        "{}: E(N)={} b={} a={} d={} h={} c={} critical={}",
        m.variant_name(),
        short(s.mean_offspring),
        short(s.b),
        short(s.a),
        short(s.d),
        short(s.h),
        short(s.c),
        s.critical
    );
    let csv = format!(
        "mean_offspring,b,a,d,h,c,critical\n{},{},{},{},{},{},{}\n",
        fmt_real(s.mean_offspring),
        fmt_real(s.b),
        fmt_real(s.a),
        fmt_real(s.d),
        fmt_real(s.h),
        fmt_real(s.c),
        s.critical
    );
    let mut out = Outcome::new(csv, json(&s), line);
    if cfg.out.is_none() {
        // the summary line is the whole answer
        out.csv.clear();
        out.json = if cfg.format() == Format::Json { json(&s) } else { String::new() };
    }
    Ok(out)
}

fn dp(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    if let Some(y) = &cfg.y {
        let grid = required(&cfg.times, "times")?;
        let z = cfg.z.clone().unwrap_or_else(|| vec![0.0; y.len()]);
        let rows = convergence_table(&m, y, &z, &grid)?;
        let last = rows.last().map(|r| format!("t={} tQ_k={} h_k={}", r.t, short(r.t_q_k), short(r.h_k))).unwrap_or_default();
        return Ok(Outcome::new(convergence_csv(&rows), json(&rows), format!("dp: {} rows; {last}", rows.len())));
    }
    let t_max = required(&cfg.tmax, "tmax")?;
    let table = extinction_seq(&m, t_max)?;
    let q = table.survival(t_max);
    Ok(Outcome::new(table.to_csv(), json(&table), format!("dp: Q({t_max})={} tQ={}", short(q), short(t_max as f64 * q))))
}

fn pmf_outcome(label: &str, pmf: &JointPmf) -> Outcome {
    let summary = format!("{label}: {} cells, total {}, overflow {}", pmf.cells.len(), short(pmf.total()), short(pmf.overflow));
    Outcome::new(pmf.to_csv(), json(pmf), summary)
}

fn fdd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let times = required(&cfg.times, "times")?;
    let z = cfg.z.clone().unwrap_or_else(|| vec![0.0; times.len()]);
    let mut spec = FddSpec::new(times, z)?;
    if let Some(t) = cfg.condition_at {
        spec = spec.conditioned_at(t);
    }
    if let Some(k) = cfg.k {
        let pmf = match spec.t_obs {
            Some(_) => conditional_pmf(&m, &spec, k)?,
            None => joint_pmf(&m, &spec.times, k)?,
        };
        return Ok(pmf_outcome("fdd", &pmf));
    }
    let value = match spec.t_obs {
        Some(_) => conditional_pgf(&m, &spec)?,
        None => fdd_pgf(&m, &spec)?,
    };
    let csv = format!("pgf\n{}\n", fmt_real(value));
    let body = serde_json::json!({"times": spec.times, "z": spec.z, "t_obs": spec.t_obs, "pgf": value});
    Ok(Outcome::new(csv, json(&body), format!("fdd: pgf={}", short(value))))
}

fn simulate_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let times = required(&cfg.times, "times")?;
    let horizon = cfg.tmax.or(times.last().copied()).unwrap_or(0);
    let mut sim = SimConfig::new(m, horizon, times, cfg.replicates.unwrap_or(1000), cfg.seed())
        .with_threads(cfg.threads.unwrap_or(0));
    if let Some(t) = cfg.condition_at {
        sim = sim.conditioned_at(t);
    }
    let res = match cfg.survivors {
        Some(n) => conditional_sample(&sim, n)?,
        None => simulate(&sim)?,
    };
    let p = res.survival;
    let summary = format!(
        "simulate: {} replicates ({} attempts, {} overflowed); P(Z({horizon})>0)={} +- {}",
        res.replicates.len(),
        res.attempts,
        res.overflowed,
        short(p.estimate),
        short(p.sigma)
    );
    Ok(Outcome::new(res.to_csv(), json(&res), summary))
}

fn limit_c(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    match (cfg.c, &cfg.model) {
        (Some(c), _) => Ok(c),
        (None, Some(_)) => Ok(model(cfg)?.summary()?.c),
        (None, None) => Err(CliError::Config("--c or --model is required".into())),
    }
}

fn limit(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let c = limit_c(cfg)?;
    let p = LimitParams::new(c)?;
    let y = required(&cfg.y, "y")?;
    if let Some(k) = cfg.k {
        let res = eta_fdd_pmf(&p, &y, k)?;
        let mut out = pmf_outcome("limit", &res.pmf);
        out.summary.push_str(&format!("; {} negative coefficients clamped", res.clamped));
        return Ok(out);
    }
    let z = required(&cfg.z, "z")?;
    let value = eta_fdd_pgf(&p, &FddQuery::new(y.clone(), z.clone())?);
    let csv = format!("pgf\n{}\n", fmt_real(value));
    let body = serde_json::json!({"c": c, "y": y, "z": z, "pgf": value});
    Ok(Outcome::new(csv, json(&body), format!("limit: c={} pgf={}", short(c), short(value))))
}

fn figure1(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let c = limit_c(cfg)?;
    LimitParams::new(c)?;
    let step = cfg.grid.unwrap_or(0.01);
    let y_max = cfg.ymax.unwrap_or(3.0);
    if !(step > 0.0 && y_max >= step) {
        return Err(CliError::Config("--grid must be positive and at most --ymax".into()));
    }
    let csv = figure1_data(c, step, y_max);
    let rows: Vec<serde_json::Value> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect();
            serde_json::json!({"y": v[0], "f": v[1], "f0": v[2]})
        })
        .collect();
    let jump = 1.0 / (1.0 + c).sqrt();
    let summary = format!("figure1: c={} step={} rows={} jump at 1={}", short(c), short(step), rows.len(), short(jump));
    Ok(Outcome::new(csv, json(&rows), summary))
}

fn dyadic(times: &Option<Vec<u64>>, lo: u32, hi: u32) -> Vec<u64> {
    times.clone().unwrap_or_else(|| (lo..=hi).map(|e| 1u64 << e).collect())
}

fn verify(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let m = model(cfg)?;
    let name = m.variant_name();
    let threads = cfg.threads.unwrap_or(0);
    let check = cfg.check.unwrap_or(Check::Oracle);
    let report: RunReport = match check {
        Check::Oracle => oracle_equivalence(name, &m, cfg.tmax.unwrap_or(6), DEFAULT_NODE_BUDGET)?,
        Check::Convergence => {
            let grid = dyadic(&cfg.times, 10, 14);
            let mut conv = ConvergenceConfig::dyadic(0, 0, 0.02);
            conv.t_grid = grid;
            if let Some(y) = &cfg.y {
                conv.fdd = Some((y.clone(), cfg.z.clone().unwrap_or_else(|| vec![0.0; y.len()])));
            }
            limit_convergence(name, &m, &conv)?
        }
        Check::Fdd => {
            let y = cfg.y.clone().unwrap_or_else(|| vec![1.0]);
            fdd_limit_check(name, &m, &y, &dyadic(&cfg.times, 8, 11), cfg.k.unwrap_or(10), None)?
        }
        Check::Survival => {
            survival_agreement(name, &m, cfg.tmax.unwrap_or(512), cfg.replicates.unwrap_or(100_000), cfg.seed(), threads)?
        }
        Check::Dichotomy => {
            dichotomy_trend(name, &m, &dyadic(&cfg.times, 4, 8), cfg.survivors.unwrap_or(2000), cfg.seed(), 0.02)?
        }
    };
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    let summary = format!(
        "verify {}: {} ({} checks, {failed} failed)",
        report.name,
        if report.passed() { "PASS" } else { "FAIL" },
        report.checks.len()
    );
    let mut out = Outcome::new(report.to_csv(), report.to_json() + "\n", summary);
    out.passed = report.passed();
    Ok(out)
}
