//! Individual life laws: the joint law of life length `L`, offspring count `N`
//! and birth ages `1 <= tau_1 <= ... <= tau_N <= L`.
//!
//! Four variants are supported. `Tabulated` lists the atoms of the joint law
//! directly. `BellmanHarris` has all births at death with `L` and `N`
//! independent. `Sevastyanov` drops the independence through a rule giving the
//! offspring law for each life length. `DelayedDeath` draws a birth schedule and
//! then lives a further residual time `R >= 1` after the last birth, which is the
//! way to combine births strictly before death with a heavy life-length tail.

mod config;
mod life;
mod offspring;

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

pub use config::{AtomConfig, LifeConfig, ModelConfig, ScheduleConfig};
pub use life::{FiniteLife, LifeLengthLaw, QuadraticTail};
pub use offspring::{phi, OffspringPmf, MASS_TOLERANCE};

use crate::error::{Error, Result};
use offspring::{check_masses, cumulative, invert_cdf};

/// Default tolerance on `|E(N) - 1|` for the criticality flag.
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-9;

/// Remainders below this are treated as certified zero when summing moment series.
pub const MOMENT_REMAINDER_TOL: f64 = 1e-12;

/// Term budget for moment series that are only controlled by a bound.
pub const MAX_MOMENT_TERMS: u64 = 10_000_000;

/// One atom of a tabulated life law.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub prob: f64,
    pub birth_ages: Vec<u64>,
    pub life: u64,
}

/// Birth schedule of a delayed-death law; death follows the last birth after a residual time.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub prob: f64,
    pub birth_ages: Vec<u64>,
}

impl Schedule {
    pub fn last_birth(&self) -> u64 {
        self.birth_ages.last().copied().unwrap_or(0)
    }
}

/// Sums of the three moment series `E(N)`, `E(N^2)` and `a = E(N L)` over some range of `L`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentSums {
    pub mean: f64,
    pub second: f64,
    pub generation: f64,
}

/// What a rule knows about the moment series beyond a given life length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentTail {
    /// The exact remaining sums.
    Exact(MomentSums),
    /// Certified upper bounds on the remaining sums.
    Bound(MomentSums),
}

/// Offspring law as a function of the life length, for Sevastyanov processes.
pub trait OffspringRule: Send + Sync + fmt::Debug {
    fn offspring(&self, life: u64) -> Cow<'_, OffspringPmf>;

    /// Remainders of the moment series `sum_{l > after} P(L = l) m(l)`.
    fn moment_tail(&self, life: &LifeLengthLaw, after: u64) -> MomentTail;

    /// Serializable form, when the rule has one.
    fn to_config(&self) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        None
    }
}

/// Offspring law tabulated for `L = 1..=by_life.len()`, with a default beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRule {
    by_life: Vec<OffspringPmf>,
    default: OffspringPmf,
}

impl TableRule {
    pub fn new(by_life: Vec<OffspringPmf>, default: OffspringPmf) -> Self {
        Self { by_life, default }
    }
}

impl OffspringRule for TableRule {
    fn offspring(&self, life: u64) -> Cow<'_, OffspringPmf> {
        let l = life as usize;
        Cow::Borrowed(if l >= 1 && l <= self.by_life.len() { &self.by_life[l - 1] } else { &self.default })
    }

    fn moment_tail(&self, life: &LifeLengthLaw, after: u64) -> MomentTail {
        if (after as usize) < self.by_life.len() {
            // the sum has not reached the default yet; keep summing
            return MomentTail::Bound(MomentSums { mean: 1.0, second: 1.0, generation: 1.0 });
        }
        let s = life.survival(after as i64);
        MomentTail::Exact(MomentSums {
            mean: self.default.mean() * s,
            second: self.default.second_moment() * s,
            generation: self.default.mean() * life.partial_mean_above(after),
        })
    }

    fn to_config(&self) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        Some((self.by_life.iter().map(|p| p.probs().to_vec()).collect(), self.default.probs().to_vec()))
    }
}

type RuleFn = dyn Fn(u64) -> OffspringPmf + Send + Sync;
type TailFn = dyn Fn(u64) -> MomentSums + Send + Sync;

/// Rule given by closures: the offspring law per life length and a certified remainder bound.
pub struct FnRule {
    offspring: Box<RuleFn>,
    bound: Box<TailFn>,
}

impl FnRule {
    pub fn new<F, B>(offspring: F, bound: B) -> Self
    where
        F: Fn(u64) -> OffspringPmf + Send + Sync + 'static,
        B: Fn(u64) -> MomentSums + Send + Sync + 'static,
    {
        Self { offspring: Box::new(offspring), bound: Box::new(bound) }
    }
}

impl fmt::Debug for FnRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnRule")
    }
}

impl OffspringRule for FnRule {
    fn offspring(&self, life: u64) -> Cow<'_, OffspringPmf> {
        Cow::Owned((self.offspring)(life))
    }

    fn moment_tail(&self, _life: &LifeLengthLaw, after: u64) -> MomentTail {
        MomentTail::Bound((self.bound)(after))
    }
}

/// The joint law of `(L, N, tau_1..tau_N)`.
#[derive(Debug, Clone)]
pub enum LifeLaw {
    Tabulated { atoms: Vec<Atom>, cdf: Vec<f64> },
    BellmanHarris { life: LifeLengthLaw, offspring: OffspringPmf },
    Sevastyanov { life: LifeLengthLaw, rule: Arc<dyn OffspringRule> },
    DelayedDeath { schedules: Vec<Schedule>, cdf: Vec<f64>, residual: LifeLengthLaw },
}

fn check_ages(ages: &[u64], life: Option<u64>) -> Result<()> {
    if ages.first().is_some_and(|&a| a < 1) {
        return Err(Error::InvalidModel("birth ages must be at least 1".into()));
    }
    if ages.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidModel(format!("birth ages {ages:?} are not sorted")));
    }
    if let (Some(&last), Some(l)) = (ages.last(), life) {
        if last > l {
            return Err(Error::InvalidModel(format!("birth age {last} exceeds life length {l}")));
        }
    }
    Ok(())
}

impl LifeLaw {
    pub fn tabulated(atoms: Vec<Atom>) -> Result<Self> {
        let probs: Vec<f64> = atoms.iter().map(|a| a.prob).collect();
        check_masses("atoms", &probs)?;
        for a in &atoms {
            if a.life == 0 {
                return Err(Error::InvalidModel("life length must be at least 1".into()));
            }
            check_ages(&a.birth_ages, Some(a.life))?;
        }
        Ok(Self::Tabulated { cdf: cumulative(&probs), atoms })
    }

    pub fn bellman_harris(life: LifeLengthLaw, offspring: OffspringPmf) -> Self {
        Self::BellmanHarris { life, offspring }
    }

    /// Galton-Watson process: unit life length, all births at age 1.
    pub fn galton_watson(offspring: OffspringPmf) -> Self {
        Self::BellmanHarris { life: LifeLengthLaw::constant(1).expect("unit life"), offspring }
    }

    pub fn sevastyanov(life: LifeLengthLaw, rule: Arc<dyn OffspringRule>) -> Self {
        Self::Sevastyanov { life, rule }
    }

    pub fn delayed_death(schedules: Vec<Schedule>, residual: LifeLengthLaw) -> Result<Self> {
        let probs: Vec<f64> = schedules.iter().map(|s| s.prob).collect();
        check_masses("schedules", &probs)?;
        for s in &schedules {
            check_ages(&s.birth_ages, None)?;
        }
        Ok(Self::DelayedDeath { cdf: cumulative(&probs), schedules, residual })
    }

    /// Short human-readable name of the variant.
    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Tabulated { .. } => "tabulated",
            Self::BellmanHarris { .. } => "bellman_harris",
            Self::Sevastyanov { .. } => "sevastyanov",
            Self::DelayedDeath { .. } => "delayed_death",
        }
    }

    /// Life length law when `L` has its own marginal description.
    pub fn life_length(&self) -> Option<&LifeLengthLaw> {
        match self {
            Self::BellmanHarris { life, .. } | Self::Sevastyanov { life, .. } => Some(life),
            Self::DelayedDeath { residual, .. } => Some(residual),
            Self::Tabulated { .. } => None,
        }
    }

    /// Largest possible life length, if bounded.
    pub fn max_life(&self) -> Option<u64> {
        match self {
            Self::Tabulated { atoms, .. } => atoms.iter().map(|a| a.life).max(),
            Self::BellmanHarris { life, .. } | Self::Sevastyanov { life, .. } => life.max_life(),
            Self::DelayedDeath { schedules, residual, .. } => {
                let last = schedules.iter().map(Schedule::last_birth).max().unwrap_or(0);
                residual.max_life().map(|r| last + r)
            }
        }
    }

    /// Tail coefficient `d`.
    pub fn tail_coefficient(&self) -> f64 {
        match self {
            Self::Tabulated { .. } => 0.0,
            Self::BellmanHarris { life, .. } | Self::Sevastyanov { life, .. } => life.tail_coefficient(),
            Self::DelayedDeath { residual, .. } => residual.tail_coefficient(),
        }
    }

    /// Draws one individual: its life length, with birth ages written into `ages` (sorted).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, ages: &mut Vec<u64>) -> u64 {
        ages.clear();
        match self {
            Self::Tabulated { atoms, cdf } => {
                let atom = &atoms[invert_cdf(cdf, rng.random::<f64>())];
                ages.extend_from_slice(&atom.birth_ages);
                atom.life
            }
            Self::BellmanHarris { life, offspring } => {
                let l = life.sample(rng);
                let n = offspring.sample(rng);
                ages.resize(n, l);
                l
            }
            Self::Sevastyanov { life, rule } => {
                let l = life.sample(rng);
                let n = rule.offspring(l).sample(rng);
                ages.resize(n, l);
                l
            }
            Self::DelayedDeath { schedules, cdf, residual } => {
                let s = &schedules[invert_cdf(cdf, rng.random::<f64>())];
                ages.extend_from_slice(&s.birth_ages);
                s.last_birth() + residual.sample(rng)
            }
        }
    }

    pub fn sample_individual<R: Rng + ?Sized>(&self, rng: &mut R) -> Individual {
        let mut birth_ages = Vec::new();
        let life = self.sample_into(rng, &mut birth_ages);
        Individual { life, birth_ages }
    }

    /// Derived parameters with the default criticality tolerance.
    pub fn summary(&self) -> Result<ModelSummary> {
        summarize(self, DEFAULT_CRITICAL_TOL)
    }
}

/// A sampled individual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Individual {
    pub life: u64,
    pub birth_ages: Vec<u64>,
}

/// Derived parameters of a life law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSummary {
    pub mean_offspring: f64,
    /// `Var(N) / 2`
    pub b: f64,
    /// Mean generation length `E(tau_1 + ... + tau_N)`.
    pub a: f64,
    /// Tail coefficient `lim t^2 P(L > t)`.
    pub d: f64,
    /// `(a + sqrt(a^2 + 4 b d)) / (2 b)`
    pub h: f64,
    /// `4 b d / a^2`
    pub c: f64,
    pub critical: bool,
    pub a_finite: bool,
}

impl ModelSummary {
    /// Builds the summary from the primitive moments.
    pub fn from_moments(mean_offspring: f64, b: f64, a: f64, d: f64, tol: f64) -> Self {
        Self {
            mean_offspring,
            b,
            a,
            d,
            h: limit_constant(a, b, d),
            c: compound_parameter(a, b, d),
            critical: (mean_offspring - 1.0).abs() <= tol,
            a_finite: a.is_finite(),
        }
    }

    /// `b h^2 - a h - d`, zero up to rounding.
    pub fn quadratic_residual(&self) -> f64 {
        self.b * self.h * self.h - self.a * self.h - self.d
    }

    /// `h_k = h (1 + sqrt(1 + c g)) / (1 + sqrt(1 + c))`.
    pub fn h_k(&self, g: f64) -> f64 {
        self.h * (1.0 + (1.0 + self.c * g).sqrt()) / (1.0 + (1.0 + self.c).sqrt())
    }
}

/// `h = (a + sqrt(a^2 + 4 b d)) / (2 b)`.
pub fn limit_constant(a: f64, b: f64, d: f64) -> f64 {
    (a + (a * a + 4.0 * b * d).sqrt()) / (2.0 * b)
}

/// `c = 4 b d / a^2`.
pub fn compound_parameter(a: f64, b: f64, d: f64) -> f64 {
    4.0 * b * d / (a * a)
}

/// `g_k = sum_i z_1 ... z_{i-1} (1 - z_i) y_i^{-2}`.
pub fn g_k(y: &[f64], z: &[f64]) -> f64 {
    let mut prefix = 1.0;
    let mut g = 0.0;
    for (&yi, &zi) in y.iter().zip(z) {
        g += prefix * (1.0 - zi) / (yi * yi);
        prefix *= zi;
    }
    g
}

fn sum_moments(life: &LifeLengthLaw, rule: &dyn OffspringRule) -> Result<MomentSums> {
    let mut acc = MomentSums::default();
    let mut after = 0u64;
    loop {
        if life.survival(after as i64) == 0.0 {
            return Ok(acc);
        }
        match rule.moment_tail(life, after) {
            MomentTail::Exact(t) => {
                return Ok(MomentSums {
                    mean: acc.mean + t.mean,
                    second: acc.second + t.second,
                    generation: acc.generation + t.generation,
                })
            }
            MomentTail::Bound(t) => {
                if t.mean < MOMENT_REMAINDER_TOL && t.second < MOMENT_REMAINDER_TOL && t.generation < MOMENT_REMAINDER_TOL {
                    return Ok(acc);
                }
                let failing = [
                    (t.generation, "mean generation length series"),
                    (t.second, "Var(N) series"),
                    (t.mean, "E(N) series"),
                ];
                if let Some((_, which)) = failing.iter().find(|(r, _)| !r.is_finite()) {
                    return Err(Error::DivergentMoment(format!("{which} has no finite remainder bound")));
                }
                if after >= MAX_MOMENT_TERMS {
                    let (_, which) = failing
                        .iter()
                        .find(|(r, _)| *r >= MOMENT_REMAINDER_TOL)
                        .expect("some bound is above tolerance");
                    return Err(Error::DivergentMoment(format!(
                        "{which} remainder bound not below {MOMENT_REMAINDER_TOL} after {after} terms"
                    )));
                }
            }
        }
        after += 1;
        let p = life.pmf(after);
        if p > 0.0 {
            let pmf = rule.offspring(after);
            acc.mean += p * pmf.mean();
            acc.second += p * pmf.second_moment();
            acc.generation += p * after as f64 * pmf.mean();
        }
    }
}

/// Computes `E(N)`, `b`, `a`, `d`, `h`, `c` and the criticality flag (`|E(N) - 1| <= tol`).
pub fn summarize(model: &LifeLaw, tol: f64) -> Result<ModelSummary> {
    let (mean, second, a, d) = match model {
        LifeLaw::Tabulated { atoms, .. } => {
            let mut m = MomentSums::default();
            for at in atoms {
                let n = at.birth_ages.len() as f64;
                m.mean += at.prob * n;
                m.second += at.prob * n * n;
                m.generation += at.prob * at.birth_ages.iter().map(|&t| t as f64).sum::<f64>();
            }
            (m.mean, m.second, m.generation, 0.0)
        }
        LifeLaw::BellmanHarris { life, offspring } => {
            (offspring.mean(), offspring.second_moment(), offspring.mean() * life.mean(), life.tail_coefficient())
        }
        LifeLaw::Sevastyanov { life, rule } => {
            let m = sum_moments(life, rule.as_ref())?;
            (m.mean, m.second, m.generation, life.tail_coefficient())
        }
        LifeLaw::DelayedDeath { schedules, residual, .. } => {
            let mut m = MomentSums::default();
            for s in schedules {
                let n = s.birth_ages.len() as f64;
                m.mean += s.prob * n;
                m.second += s.prob * n * n;
                m.generation += s.prob * s.birth_ages.iter().map(|&t| t as f64).sum::<f64>();
            }
            (m.mean, m.second, m.generation, residual.tail_coefficient())
        }
    };
    if !(second.is_finite() && a.is_finite()) {
        return Err(Error::DivergentMoment(format!("E(N^2) = {second}, a = {a}")));
    }
    let b = 0.5 * (second - mean * mean);
    Ok(ModelSummary::from_moments(mean, b, a, d, tol))
}
