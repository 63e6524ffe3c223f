//! Exact dynamic programming for the GWO process: survival probabilities,
//! multi-time generating functions and survival-conditioned joint pmfs.

mod pmf;
mod recursion;
mod value;

use std::fmt::Write as _;

use serde::Serialize;

pub use pmf::JointPmf;
pub use recursion::MAX_HORIZON;
pub use value::PgfValue;

use crate::error::{Error, Result};
use crate::lifelaw::{g_k, LifeLaw, ModelSummary};
use crate::report::fmt_real;
use crate::scalar::Scalar;
use crate::series::TruncatedSeries;
use recursion::{pgf_at, Recursion};

/// Budget on `coefficients x table length` for series-valued recursions.
pub const SERIES_MEMORY_BUDGET: usize = 400_000_000;

/// `Q(t) = P(Z(t) > 0)` for `t = 0..=t_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionTable {
    pub q: Vec<f64>,
    pub summary: Option<ModelSummary>,
}

impl ExtinctionTable {
    pub fn t_max(&self) -> u64 {
        self.q.len() as u64 - 1
    }

    pub fn survival(&self, t: u64) -> f64 {
        self.q[t as usize]
    }

    pub fn extinction(&self, t: u64) -> f64 {
        1.0 - self.q[t as usize]
    }

    /// CSV with columns `t,Q,tQ,h,abs_error`; `h` is blank without a summary.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,Q,tQ,h,abs_error\n");
        let h = self.summary.map(|s| s.h);
        for (t, &q) in self.q.iter().enumerate() {
            let tq = t as f64 * q;
            let (hs, err) = match h {
                Some(h) => (fmt_real(h), fmt_real((tq - h).abs())),
                None => (String::new(), String::new()),
            };
            writeln!(out, "{t},{},{},{hs},{err}", fmt_real(q), fmt_real(tq)).expect("writing to a String");
        }
        out
    }
}

/// Observation times with generating-function arguments, optionally conditioned
/// on survival at `t_obs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FddSpec {
    pub times: Vec<u64>,
    pub z: Vec<f64>,
    pub t_obs: Option<u64>,
}

impl FddSpec {
    pub fn new(times: Vec<u64>, z: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidQuery("at least one observation time is required".into()));
        }
        if times.len() != z.len() {
            return Err(Error::InvalidQuery(format!("{} times but {} arguments", times.len(), z.len())));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidQuery(format!("times {times:?} are not strictly increasing")));
        }
        if let Some(x) = z.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidQuery(format!("argument {x} is outside [0, 1]")));
        }
        Ok(Self { times, z, t_obs: None })
    }

    pub fn conditioned_at(mut self, t_obs: u64) -> Self {
        self.t_obs = Some(t_obs);
        self
    }

    /// Drops coordinates whose argument is 1; they do not affect the generating function.
    fn reduced(&self) -> (Vec<u64>, Vec<f64>) {
        self.times.iter().zip(&self.z).filter(|(_, &z)| z < 1.0).map(|(&t, &z)| (t, z)).unzip()
    }

    fn observation(&self) -> Result<u64> {
        match self.t_obs {
            Some(t) if t >= 1 => Ok(t),
            Some(_) => Err(Error::InvalidQuery("conditioning time must be at least 1".into())),
            None => Err(Error::InvalidQuery("conditioning time t_obs is required".into())),
        }
    }
}

/// Extinction probabilities `P(t) = E(prod_j P(t - tau_j); L <= t)` tabulated bottom-up.
pub fn extinction_seq(model: &LifeLaw, t_max: u64) -> Result<ExtinctionTable> {
    let p = extinction_values::<f64>(model, t_max)?;
    Ok(ExtinctionTable { q: p.iter().map(|x| 1.0 - x).collect(), summary: model.summary().ok() })
}

/// `P(Z(t) = 0)` for `t = 0..=t_max` in any scalar type.
pub fn extinction_values<S: Scalar>(model: &LifeLaw, t_max: u64) -> Result<Vec<S>> {
    let mut rec = Recursion::<S, S>::new(model, &[t_max], vec![S::zero()], S::one())?;
    rec.run_to(t_max as i64);
    Ok(rec.values_from_zero().to_vec())
}

/// `E(z_1^{Z(t_1)} ... z_k^{Z(t_k)})`.
pub fn fdd_pgf(model: &LifeLaw, spec: &FddSpec) -> Result<f64> {
    fdd_pgf_in::<f64>(model, spec)
}

/// [`fdd_pgf`] evaluated in scalar type `S`.
pub fn fdd_pgf_in<S: Scalar>(model: &LifeLaw, spec: &FddSpec) -> Result<S> {
    let (times, z) = spec.reduced();
    if times.is_empty() {
        return Ok(S::one());
    }
    let z: Vec<S> = z.into_iter().map(S::lit).collect();
    pgf_at(model, &times, z, S::one())
}

/// Inserts `(t_obs, 0)` into the coordinate list; a coinciding time gets argument 0.
fn with_extinction_at<V: Clone>(times: &[u64], z: &[V], t_obs: u64, zero: V) -> (Vec<u64>, Vec<V>) {
    let pos = times.partition_point(|&t| t < t_obs);
    let mut t2 = times.to_vec();
    let mut z2 = z.to_vec();
    if times.get(pos) == Some(&t_obs) {
        z2[pos] = zero;
    } else {
        t2.insert(pos, t_obs);
        z2.insert(pos, zero);
    }
    (t2, z2)
}

fn survival_at(model: &LifeLaw, t_obs: u64) -> Result<f64> {
    let p: f64 = pgf_at(model, &[t_obs], vec![0.0], 1.0)?;
    let q = 1.0 - p;
    if q <= 0.0 {
        return Err(Error::ZeroConditioningEvent(t_obs));
    }
    Ok(q)
}

/// `E(prod z_i^{Z(t_i)} | Z(t_obs) > 0)`.
///
/// Computed as `(P_k(t, z) - P_{k+1}(t + t_obs, z + 0)) / Q(t_obs)`: since extinct
/// populations stay extinct, the second term is `E(prod z_i^{Z(t_i)}; Z(t_obs) = 0)`.
pub fn conditional_pgf(model: &LifeLaw, spec: &FddSpec) -> Result<f64> {
    let t_obs = spec.observation()?;
    let q = survival_at(model, t_obs)?;
    let (times, z) = spec.reduced();
    let full = if times.is_empty() { 1.0 } else { pgf_at(model, &times, z.clone(), 1.0)? };
    let (t2, z2) = with_extinction_at(&times, &z, t_obs, 0.0);
    let on_extinction = pgf_at(model, &t2, z2, 1.0)?;
    Ok((full - on_extinction) / q)
}

fn series_shape_check(nvars: usize, cap: usize, horizon: u64) -> Result<TruncatedSeries<f64>> {
    let one = TruncatedSeries::<f64>::constant(nvars, cap, 1.0)?;
    let ncoef = one.terms().len().max(1);
    if ncoef.saturating_mul(horizon as usize + 1) > SERIES_MEMORY_BUDGET {
        return Err(Error::CapTooLarge(format!(
            "{ncoef} coefficients over {} table entries exceed the memory budget",
            horizon + 1
        )));
    }
    Ok(one)
}

fn variables(one: &TruncatedSeries<f64>, k: usize) -> Result<Vec<TruncatedSeries<f64>>> {
    (0..k).map(|i| TruncatedSeries::variable(k, one.cap(), i)).collect()
}

/// Joint generating function of `(Z(t_1), ..., Z(t_k))` as a series truncated at total degree `cap`.
pub fn joint_pgf_series(model: &LifeLaw, times: &[u64], cap: usize) -> Result<TruncatedSeries<f64>> {
    let horizon = times.last().copied().unwrap_or(0);
    let one = series_shape_check(times.len(), cap, horizon)?;
    let vars = variables(&one, times.len())?;
    pgf_at(model, times, vars, one)
}

/// `P(Z(t_1) = i_1, ..., Z(t_k) = i_k)` for `sum i <= cap`, with the rest lumped in `overflow`.
pub fn joint_pmf(model: &LifeLaw, times: &[u64], cap: usize) -> Result<JointPmf> {
    let series = joint_pgf_series(model, times, cap)?;
    Ok(JointPmf::from_series(times.to_vec(), None, &series))
}

/// Conditional joint generating function given `Z(t_obs) > 0`, as a truncated series.
pub fn conditional_pgf_series(model: &LifeLaw, times: &[u64], t_obs: u64, cap: usize) -> Result<TruncatedSeries<f64>> {
    if t_obs == 0 {
        return Err(Error::InvalidQuery("conditioning time must be at least 1".into()));
    }
    let q = survival_at(model, t_obs)?;
    let horizon = times.last().copied().unwrap_or(0).max(t_obs);
    let one = series_shape_check(times.len(), cap, horizon)?;
    let vars = variables(&one, times.len())?;
    let full = pgf_at(model, times, vars.clone(), one.clone())?;
    let (t2, z2) = with_extinction_at(times, &vars, t_obs, one.zero_like());
    let on_extinction = pgf_at(model, &t2, z2, one)?;
    Ok((&full - &on_extinction).scale(1.0 / q))
}

/// `P(Z(t_1) = i_1, ... | Z(t_obs) > 0)` for `sum i <= cap` plus the lumped remainder.
pub fn conditional_pmf(model: &LifeLaw, spec: &FddSpec, cap: usize) -> Result<JointPmf> {
    if cap < 1 {
        return Err(Error::InvalidQuery("cap must be at least 1".into()));
    }
    let t_obs = spec.observation()?;
    let series = conditional_pgf_series(model, &spec.times, t_obs, cap)?;
    Ok(JointPmf::from_series(spec.times.clone(), Some(t_obs), &series))
}

/// `E Z(t)` for `t = 0..=t_max` from the renewal equation
/// `m(t) = P(L > t) + sum_{u=1}^{t} mu(u) m(t - u)`, with `mu(u)` the expected births at age `u`.
pub fn expected_population(model: &LifeLaw, t_max: u64) -> Vec<f64> {
    let n = t_max as usize + 1;
    let mut alive = vec![0.0; n];
    let mut mu = vec![0.0; n];
    match model {
        LifeLaw::Tabulated { atoms, .. } => {
            for a in atoms {
                for s in alive.iter_mut().take(a.life as usize) {
                    *s += a.prob;
                }
                for &age in a.birth_ages.iter().filter(|&&age| age < n as u64) {
                    mu[age as usize] += a.prob;
                }
            }
        }
        LifeLaw::BellmanHarris { life, offspring } => {
            let m = offspring.mean();
            for t in 0..n {
                alive[t] = life.survival(t as i64);
                mu[t] = if t == 0 { 0.0 } else { life.pmf(t as u64) * m };
            }
        }
        LifeLaw::Sevastyanov { life, rule } => {
            for t in 0..n {
                alive[t] = life.survival(t as i64);
                mu[t] = if t == 0 { 0.0 } else { life.pmf(t as u64) * rule.offspring(t as u64).mean() };
            }
        }
        LifeLaw::DelayedDeath { schedules, residual, .. } => {
            for s in schedules {
                let last = s.last_birth() as i64;
                for (t, a) in alive.iter_mut().enumerate() {
                    *a += s.prob * residual.survival(t as i64 - last);
                }
                for &age in s.birth_ages.iter().filter(|&&age| age < n as u64) {
                    mu[age as usize] += s.prob;
                }
            }
        }
    }
    let mut m = vec![0.0; n];
    for t in 0..n {
        m[t] = alive[t] + (1..=t).map(|u| mu[u] * m[t - u]).sum::<f64>();
    }
    m
}

/// Integer observation offsets `round(t (y_i - 1))`, rounding half up.
pub fn offsets_for(t: u64, y: &[f64]) -> Vec<u64> {
    y.iter().map(|&yi| (t as f64 * (yi - 1.0) + 0.5).floor().max(0.0) as u64).collect()
}

/// One row of a multi-time convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub t: u64,
    /// `Q_k(t) = 1 - P_k(t + t_bar, z)`
    pub q_k: f64,
    pub t_q_k: f64,
    pub h_k: f64,
    pub abs_error: f64,
    /// `Q_k(t) / Q(t)`
    pub ratio: f64,
    /// `(1 + sqrt(1 + c g_k)) / (1 + sqrt(1 + c))`
    pub ratio_limit: f64,
}

/// Rows `(t, t Q_k(t), h_k, |t Q_k(t) - h_k|)` along `t_grid`; requires `y_1 = 1 < y_2 < ...`.
pub fn convergence_table(model: &LifeLaw, y: &[f64], z: &[f64], t_grid: &[u64]) -> Result<Vec<ConvergenceRow>> {
    if y.is_empty() || y.len() != z.len() {
        return Err(Error::InvalidQuery("y and z must be nonempty and of equal length".into()));
    }
    if y[0] != 1.0 || y.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidQuery(format!("fractions {y:?} must satisfy 1 = y_1 < y_2 < ...")));
    }
    if z.iter().any(|x| !(0.0..1.0).contains(x)) {
        return Err(Error::InvalidQuery("arguments must lie in [0, 1)".into()));
    }
    let summary = model.summary()?;
    let g = g_k(y, z);
    let h_k = summary.h_k(g);
    let ratio_limit = h_k / summary.h;
    let t_max = t_grid.iter().copied().max().unwrap_or(0);
    let base = extinction_seq(model, t_max)?;
    t_grid
        .iter()
        .map(|&t| {
            let times: Vec<u64> = offsets_for(t, y).into_iter().map(|o| t + o).collect();
            let spec = FddSpec::new(times, z.to_vec())?;
            let q_k = 1.0 - fdd_pgf(model, &spec)?;
            let t_q_k = t as f64 * q_k;
            Ok(ConvergenceRow {
                t,
                q_k,
                t_q_k,
                h_k,
                abs_error: (t_q_k - h_k).abs(),
                ratio: q_k / base.survival(t),
                ratio_limit,
            })
        })
        .collect()
}

/// CSV with columns `t,Q,tQ,h,abs_error` for a convergence table.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("t,Q,tQ,h,abs_error\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.t, fmt_real(r.q_k), fmt_real(r.t_q_k), fmt_real(r.h_k), fmt_real(r.abs_error))
            .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifelaw::{Atom, LifeLengthLaw, OffspringPmf};

    fn gw_binary() -> LifeLaw {
        LifeLaw::galton_watson(OffspringPmf::new(vec![0.5, 0.0, 0.5]).unwrap())
    }

    #[test]
    fn expected_population_renewal() {
        let gw = expected_population(&gw_binary(), 10);
        assert!(gw.iter().all(|&m| (m - 1.0).abs() < 1e-15));
        let model = LifeLaw::tabulated(vec![
            Atom { prob: 0.5, birth_ages: vec![], life: 3 },
            Atom { prob: 0.5, birth_ages: vec![1, 2], life: 3 },
        ])
        .unwrap();
        let m = expected_population(&model, 2);
        assert_eq!(m, vec![1.0, 1.5, 2.25]);
    }

    #[test]
    fn gw_binary_hand_values() {
        let table = extinction_seq(&gw_binary(), 3).unwrap();
        assert_eq!(table.survival(0), 1.0);
        assert_eq!(table.survival(1), 0.5);
        assert_eq!(table.survival(2), 0.375);
        // P(3) = 1/2 + P(2)^2 / 2
        assert!((table.extinction(3) - (0.5 + 0.5 * 0.625f64.powi(2))).abs() < 1e-15);
    }

    #[test]
    fn founder_alive_at_zero() {
        let tab = LifeLaw::tabulated(vec![Atom { prob: 1.0, birth_ages: vec![1], life: 1 }]).unwrap();
        for model in [gw_binary(), tab] {
            assert_eq!(extinction_seq(&model, 0).unwrap().q, vec![1.0]);
        }
    }

    #[test]
    fn no_birth_atom_survival() {
        let model = LifeLaw::tabulated(vec![Atom { prob: 1.0, birth_ages: vec![], life: 5 }]).unwrap();
        let table = extinction_seq(&model, 8).unwrap();
        for t in 0..=8 {
            assert_eq!(table.survival(t), if t < 5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn gw_binary_kolmogorov_limit() {
        let table = extinction_seq(&gw_binary(), 4096).unwrap();
        let tq = 4096.0 * table.survival(4096);
        assert!((tq - 2.0).abs() < 0.01, "tQ = {tq}");
    }

    #[test]
    fn z_zero_reduces_to_extinction() {
        let model = gw_binary();
        let spec = FddSpec::new(vec![7], vec![0.0]).unwrap();
        let p = fdd_pgf(&model, &spec).unwrap();
        assert!((p - extinction_seq(&model, 7).unwrap().extinction(7)).abs() < 1e-15);
    }

    #[test]
    fn unit_arguments_are_dropped() {
        let spec = FddSpec::new(vec![2, 5], vec![1.0, 1.0]).unwrap();
        assert_eq!(fdd_pgf(&gw_binary(), &spec).unwrap(), 1.0);
    }

    #[test]
    fn spec_validation() {
        assert!(FddSpec::new(vec![], vec![]).is_err());
        assert!(FddSpec::new(vec![2, 2], vec![0.5, 0.5]).is_err());
        assert!(FddSpec::new(vec![2], vec![1.5]).is_err());
        assert!(FddSpec::new(vec![2, 3], vec![0.5]).is_err());
        let spec = FddSpec::new(vec![2], vec![0.5]).unwrap();
        assert!(conditional_pgf(&gw_binary(), &spec).is_err());
        assert!(conditional_pgf(&gw_binary(), &spec.clone().conditioned_at(0)).is_err());
    }

    #[test]
    fn conditioning_on_survival_at_the_same_time() {
        let model = gw_binary();
        let zero = FddSpec::new(vec![4], vec![0.0]).unwrap().conditioned_at(4);
        assert!(conditional_pgf(&model, &zero).unwrap().abs() < 1e-15);
        let near_one = FddSpec::new(vec![4], vec![1.0 - 1e-9]).unwrap().conditioned_at(4);
        assert!((conditional_pgf(&model, &near_one).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn early_observation_recovers_one_minus_ratio() {
        // t_obs <= t_1: E(. | Z(t_obs) > 0) = 1 - Q_k / Q(t_obs)
        let model = gw_binary();
        let spec = FddSpec::new(vec![5, 9], vec![0.3, 0.6]).unwrap();
        let q_k = 1.0 - fdd_pgf(&model, &spec).unwrap();
        let q = extinction_seq(&model, 3).unwrap().survival(3);
        let cond = conditional_pgf(&model, &spec.conditioned_at(3)).unwrap();
        assert!((cond - (1.0 - q_k / q)).abs() < 1e-14);
    }

    #[test]
    fn zero_conditioning_event() {
        let model = LifeLaw::tabulated(vec![Atom { prob: 1.0, birth_ages: vec![], life: 2 }]).unwrap();
        let spec = FddSpec::new(vec![1], vec![0.5]).unwrap().conditioned_at(3);
        assert_eq!(conditional_pgf(&model, &spec), Err(Error::ZeroConditioningEvent(3)));
    }

    #[test]
    fn conditional_pmf_marginal_at_observation_has_no_zero() {
        let model = LifeLaw::bellman_harris(
            LifeLengthLaw::finite(vec![0.3, 0.4, 0.3]).unwrap(),
            OffspringPmf::new(vec![0.3, 0.5, 0.1, 0.1]).unwrap(),
        );
        let spec = FddSpec::new(vec![6], vec![0.0]).unwrap().conditioned_at(6);
        let pmf = conditional_pmf(&model, &spec, 8).unwrap();
        assert!(pmf.get(&[0]).abs() < 1e-15);
        assert!((pmf.total() + pmf.overflow - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cap_too_large() {
        let spec = FddSpec::new(vec![1000, 2000, 3000], vec![0.0; 3]).unwrap().conditioned_at(3000);
        assert!(matches!(conditional_pmf(&gw_binary(), &spec, 200), Err(Error::CapTooLarge(_))));
    }

    #[test]
    fn offsets_round_half_up() {
        assert_eq!(offsets_for(10, &[1.0, 1.25, 2.0]), vec![0, 3, 10]);
        assert_eq!(offsets_for(3, &[1.0, 1.5]), vec![0, 2]);
    }

    #[test]
    fn convergence_table_trivial_limits() {
        let model = gw_binary();
        let rows = convergence_table(&model, &[1.0], &[0.0], &[64]).unwrap();
        assert_eq!(rows[0].h_k, 2.0);
        assert_eq!(rows[0].ratio, 1.0);
        // c = 0: h_k = h whatever z is
        let rows = convergence_table(&model, &[1.0, 2.0], &[0.3, 0.5], &[64]).unwrap();
        assert!((rows[0].h_k - 2.0).abs() < 1e-15);
        assert!(convergence_table(&model, &[1.5, 2.0], &[0.0, 0.5], &[64]).is_err());
    }

    #[test]
    fn single_precision_extinction() {
        let p32 = extinction_values::<f32>(&gw_binary(), 50).unwrap();
        let p64 = extinction_values::<f64>(&gw_binary(), 50).unwrap();
        for (a, b) in p32.iter().zip(&p64) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }
}
