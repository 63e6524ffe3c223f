use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on the total mass of any probability table.
pub const MASS_TOLERANCE: f64 = 1e-12;

pub(crate) fn check_masses(what: &str, probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidModel(format!("{what}: empty probability table")));
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidModel(format!("{what}: invalid mass {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidModel(format!("{what}: masses sum to {total}, not 1")));
    }
    Ok(())
}

pub(crate) fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Index `i` with `cdf[i-1] <= u < cdf[i]`; the last index absorbs rounding at the top.
pub(crate) fn invert_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Law of the offspring count `N` on `0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringPmf {
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl OffspringPmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_masses("offspring pmf", &probs)?;
        let cdf = cumulative(&probs);
        Ok(Self { probs, cdf })
    }

    /// `P(N = n)` for `n = 0..=n_max`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| (n * n) as f64 * p).sum()
    }

    /// Half the variance, `b = Var(N) / 2`.
    pub fn half_variance(&self) -> f64 {
        let m = self.mean();
        0.5 * (self.second_moment() - m * m)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        invert_cdf(&self.cdf, rng.random::<f64>())
    }
}

/// `Phi(z) = E((1 - z)^N - 1 + N z)` for `0 <= z <= 1`.
pub fn phi(offspring: &OffspringPmf, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let log1m = (-z).ln_1p();
    let total: f64 = offspring
        .probs
        .iter()
        .enumerate()
        .skip(2)
        .map(|(n, &p)| {
            let n = n as f64;
            let term = if z < 1.0 { (n * log1m).exp_m1() + n * z } else { n - 1.0 };
            p * term
        })
        .sum();
    total.max(0.0)
}
