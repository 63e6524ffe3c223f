//! The branching recursion for multi-time generating functions.
//!
//! For observation times `t_1 < ... < t_k` write `delta_i = t_i - t_1` and
//! `G(s) = E(prod_{i: s + delta_i >= 0} z_i^{Z(s + delta_i)})`. Splitting on the
//! founder,
//!
//! `G(s) = E[prod_{i: 0 <= s + delta_i < L} z_i * prod_j G(s - tau_j)]`,
//!
//! with `G(s) = 1` once every shifted time is negative. All arguments move in
//! lockstep with `s`, so one table indexed by `s` suffices and `G(t_1)` is the
//! generating function `P_k(t, z)`.

use super::value::{eval_pgf, PgfValue};
use crate::error::{Error, Result};
use crate::lifelaw::LifeLaw;
use crate::scalar::Scalar;

/// Largest time span the recursion will tabulate.
pub const MAX_HORIZON: u64 = 20_000_000;

enum Offspring<S> {
    Shared(Vec<S>),
    /// `by_life[l]` is the law of `N` given `L = l`
    PerLife(Vec<Vec<S>>),
}

enum Kernel<S> {
    Atoms(Vec<(S, Vec<i64>, i64)>),
    /// Births at death: `pmf[l] = P(L = l)`, `surv[x] = P(L > x)`.
    AtDeath { pmf: Vec<S>, surv: Vec<S>, offspring: Offspring<S> },
    /// Birth schedule then residual life `R`; `surv[x] = P(R > x)`.
    Delayed { schedules: Vec<(S, Vec<i64>, i64)>, surv: Vec<S> },
}

fn survival_table<S: Scalar>(life: &crate::lifelaw::LifeLengthLaw, horizon: usize) -> Vec<S> {
    let bound = life.max_life().map_or(horizon, |m| (m as usize).min(horizon));
    let mut surv: Vec<S> = (0..=bound).map(|x| S::lit(life.survival(x as i64))).collect();
    surv.resize(horizon + 1, S::zero());
    surv
}

fn pmf_table<S: Scalar>(life: &crate::lifelaw::LifeLengthLaw, horizon: usize) -> Vec<S> {
    let bound = life.max_life().map_or(horizon, |m| (m as usize).min(horizon));
    let mut pmf: Vec<S> = (0..=bound).map(|l| S::lit(life.pmf(l as u64))).collect();
    pmf.resize(horizon + 1, S::zero());
    pmf
}

fn to_scalars<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::lit(x)).collect()
}

impl<S: Scalar> Kernel<S> {
    fn new(model: &LifeLaw, horizon: usize) -> Self {
        match model {
            LifeLaw::Tabulated { atoms, .. } => Kernel::Atoms(
                atoms
                    .iter()
                    .map(|a| (S::lit(a.prob), a.birth_ages.iter().map(|&t| t as i64).collect(), a.life as i64))
                    .collect(),
            ),
            LifeLaw::BellmanHarris { life, offspring } => Kernel::AtDeath {
                pmf: pmf_table(life, horizon),
                surv: survival_table(life, horizon),
                offspring: Offspring::Shared(to_scalars(offspring.probs())),
            },
            LifeLaw::Sevastyanov { life, rule } => {
                let pmf = pmf_table::<S>(life, horizon);
                let by_life = (0..=horizon)
                    .map(|l| {
                        if l == 0 || pmf[l] == S::zero() {
                            vec![S::one()]
                        } else {
                            to_scalars(rule.offspring(l as u64).probs())
                        }
                    })
                    .collect();
                Kernel::AtDeath { pmf, surv: survival_table(life, horizon), offspring: Offspring::PerLife(by_life) }
            }
            LifeLaw::DelayedDeath { schedules, residual, .. } => Kernel::Delayed {
                schedules: schedules
                    .iter()
                    .map(|s| {
                        (S::lit(s.prob), s.birth_ages.iter().map(|&t| t as i64).collect(), s.last_birth() as i64)
                    })
                    .collect(),
                surv: survival_table(residual, horizon),
            },
        }
    }
}

/// Tabulates `G(s)` for the shifts `s = -span ..= t_1`.
pub(crate) struct Recursion<S, V> {
    offsets: Vec<i64>,
    span: i64,
    kernel: Kernel<S>,
    one: V,
    /// `prefix[i0][m] = z_{i0} * ... * z_{i0 + m - 1}`
    prefix: Vec<Vec<V>>,
    /// `memo[s + span] = G(s)`
    memo: Vec<V>,
    /// `mapped[s + span] = f(G(s))` when the offspring pgf `f` does not depend on `L`
    mapped: Vec<V>,
}

impl<S: Scalar, V: PgfValue<S>> Recursion<S, V> {
    /// `times` strictly increasing, one `z` per time; `one` fixes the shape of the values.
    pub(crate) fn new(model: &LifeLaw, times: &[u64], z: Vec<V>, one: V) -> Result<Self> {
        if times.is_empty() || times.len() != z.len() {
            return Err(Error::InvalidQuery(format!("{} times but {} arguments", times.len(), z.len())));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidQuery(format!("times {times:?} are not strictly increasing")));
        }
        let horizon = *times.last().expect("nonempty");
        if horizon > MAX_HORIZON {
            return Err(Error::UnsupportedModel(format!(
                "horizon {horizon} exceeds the tabulation limit {MAX_HORIZON}"
            )));
        }
        let offsets: Vec<i64> = times.iter().map(|&t| (t - times[0]) as i64).collect();
        let span = *offsets.last().expect("nonempty");
        let prefix = (0..z.len())
            .map(|i0| {
                let mut row = vec![one.clone()];
                for zi in &z[i0..] {
                    let next = row.last().expect("nonempty").mul(zi);
                    row.push(next);
                }
                row
            })
            .collect();
        Ok(Self {
            offsets,
            span,
            kernel: Kernel::new(model, horizon as usize),
            one,
            prefix,
            memo: Vec::with_capacity(horizon as usize + 1),
            mapped: Vec::new(),
        })
    }

    fn g(&self, s: i64) -> &V {
        let idx = s + self.span;
        if idx < 0 {
            &self.one
        } else {
            &self.memo[idx as usize]
        }
    }

    /// Computes `G` up to shift `s_max` (inclusive) and returns `G(s_max)`.
    pub(crate) fn run_to(&mut self, s_max: i64) -> &V {
        while (self.memo.len() as i64) <= s_max + self.span {
            let s = self.memo.len() as i64 - self.span;
            let value = self.step(s);
            if let Kernel::AtDeath { offspring: Offspring::Shared(probs), .. } = &self.kernel {
                self.mapped.push(eval_pgf(probs, &value));
            }
            self.memo.push(value);
        }
        self.g(s_max)
    }

    /// The tabulated values `G(s)` for `s = 0..` (available after `run_to`).
    pub(crate) fn values_from_zero(&self) -> &[V] {
        &self.memo[self.span as usize..]
    }

    fn step(&self, s: i64) -> V {
        // valid coordinates are those with s + delta_i >= 0; they form a suffix
        let i0 = self.offsets.partition_point(|&o| s + o < 0);
        let times: Vec<i64> = self.offsets[i0..].iter().map(|&o| s + o).collect();
        let prefix = &self.prefix[i0];
        let last = *times.last().expect("the final coordinate is always valid");
        let mut acc = self.one.constant_like(S::zero());
        match &self.kernel {
            Kernel::Atoms(atoms) => {
                for (p, ages, life) in atoms {
                    let alive = times.partition_point(|&u| u < *life);
                    let mut term = prefix[alive].clone();
                    for &tau in ages {
                        term = term.mul(self.g(s - tau));
                    }
                    acc.add_scaled(&term, *p);
                }
            }
            Kernel::AtDeath { pmf, surv, offspring } => {
                // the founder is alive exactly at the first m valid times iff times[m-1] < L <= times[m]
                let mut lo = 1i64;
                for (m, &hi) in times.iter().enumerate() {
                    if hi < lo {
                        continue;
                    }
                    let mut inner = self.one.constant_like(S::zero());
                    for l in lo..=hi {
                        let p = pmf[l as usize];
                        if p == S::zero() {
                            continue;
                        }
                        match offspring {
                            Offspring::Shared(_) => {
                                let idx = (s - l + self.span) as usize;
                                inner.add_scaled(&self.mapped[idx], p);
                            }
                            Offspring::PerLife(by_life) => {
                                inner.add_scaled(&eval_pgf(&by_life[l as usize], self.g(s - l)), p);
                            }
                        }
                    }
                    prefix[m].mul_acc(&inner, S::one(), &mut acc);
                    lo = hi + 1;
                }
                acc.add_scaled(&prefix[times.len()], surv[last as usize]);
            }
            Kernel::Delayed { schedules, surv } => {
                for (p, ages, last_birth) in schedules {
                    // P(L > u) with L = last_birth + R
                    let alive_after = |u: i64| {
                        let x = u - last_birth;
                        if x < 1 {
                            S::one()
                        } else {
                            surv[x as usize]
                        }
                    };
                    let mut founder = self.one.constant_like(S::zero());
                    let mut above = S::one();
                    for (m, &u) in times.iter().enumerate() {
                        let next = alive_after(u);
                        founder.add_scaled(&prefix[m], above - next);
                        above = next;
                    }
                    founder.add_scaled(&prefix[times.len()], above);
                    let mut term = founder;
                    for &tau in ages {
                        term = term.mul(self.g(s - tau));
                    }
                    acc.add_scaled(&term, *p);
                }
            }
        }
        acc
    }
}

/// `P_k(t, z) = E(prod_i z_i^{Z(t_i)})` over any value type.
pub(crate) fn pgf_at<S: Scalar, V: PgfValue<S>>(model: &LifeLaw, times: &[u64], z: Vec<V>, one: V) -> Result<V> {
    let mut rec = Recursion::new(model, times, z, one)?;
    Ok(rec.run_to(times[0] as i64).clone())
}
