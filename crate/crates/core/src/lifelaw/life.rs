use rand::Rng;

use super::offspring::{check_masses, cumulative, invert_cdf};
use crate::error::{Error, Result};

/// `sum_{t >= m} 1/t^2` for `m >= 1`.
pub(crate) fn inverse_square_tail(m: u64) -> f64 {
    const DIRECT: u64 = 64;
    let m = m.max(1);
    let cut = m.max(DIRECT);
    // Euler-Maclaurin remainder from `cut` on
    let x = cut as f64;
    let x2 = x * x;
    let mut total = 1.0 / x + 0.5 / x2 + 1.0 / (6.0 * x2 * x) - 1.0 / (30.0 * x2 * x2 * x)
        + 1.0 / (42.0 * x2 * x2 * x2 * x);
    for t in (m..cut).rev() {
        let t = t as f64;
        total += 1.0 / (t * t);
    }
    total
}

/// Life length `L >= 1` given by an explicit pmf on `1..=l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLife {
    /// `probs[l - 1] = P(L = l)`
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

/// Life length with `P(L > t) = min(1, d / t^2)` for `t >= t_min` and `P(L > t) = 1` below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticTail {
    d: f64,
    t_min: u64,
}

/// Law of the life length `L`.
#[derive(Debug, Clone, PartialEq)]
pub enum LifeLengthLaw {
    Finite(FiniteLife),
    QuadraticTail(QuadraticTail),
}

impl LifeLengthLaw {
    /// `pmf[l - 1] = P(L = l)`.
    pub fn finite(pmf: Vec<f64>) -> Result<Self> {
        check_masses("life pmf", &pmf)?;
        let mut probs = pmf;
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        let cdf = cumulative(&probs);
        Ok(Self::Finite(FiniteLife { probs, cdf }))
    }

    /// Deterministic life length.
    pub fn constant(l: u64) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidModel("life length must be at least 1".into()));
        }
        let mut pmf = vec![0.0; l as usize];
        pmf[l as usize - 1] = 1.0;
        Self::finite(pmf)
    }

    /// Quadratic tail with coefficient `d`; `t_min` defaults to `max(1, ceil(sqrt(d)))`.
    pub fn quadratic_tail(d: f64, t_min: Option<u64>) -> Result<Self> {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::InvalidModel(format!("tail coefficient d = {d} must be finite and >= 0")));
        }
        let least = (d.sqrt().ceil() as u64).max(1);
        let t_min = t_min.unwrap_or(least);
        if t_min < least {
            return Err(Error::InvalidModel(format!("t_min = {t_min} must be at least {least} for d = {d}")));
        }
        Ok(Self::QuadraticTail(QuadraticTail { d, t_min }))
    }

    /// Tail coefficient `d = lim t^2 P(L > t)`.
    pub fn tail_coefficient(&self) -> f64 {
        match self {
            Self::Finite(_) => 0.0,
            Self::QuadraticTail(q) => q.d,
        }
    }

    /// Largest possible life length, if bounded.
    pub fn max_life(&self) -> Option<u64> {
        match self {
            Self::Finite(f) => Some(f.probs.len() as u64),
            Self::QuadraticTail(q) if q.d == 0.0 => Some(q.t_min),
            Self::QuadraticTail(_) => None,
        }
    }

    /// `P(L > t)`; equal to 1 for negative `t`.
    pub fn survival(&self, t: i64) -> f64 {
        if t < 1 {
            return 1.0;
        }
        match self {
            Self::Finite(f) => {
                let t = t as usize;
                if t >= f.probs.len() {
                    0.0
                } else {
                    f.probs[t..].iter().sum()
                }
            }
            Self::QuadraticTail(q) => {
                if (t as u64) < q.t_min {
                    1.0
                } else {
                    let t = t as f64;
                    (q.d / (t * t)).min(1.0)
                }
            }
        }
    }

    /// `P(L = l)`.
    pub fn pmf(&self, l: u64) -> f64 {
        if l == 0 {
            return 0.0;
        }
        match self {
            Self::Finite(f) => f.probs.get(l as usize - 1).copied().unwrap_or(0.0),
            Self::QuadraticTail(q) => {
                if l < q.t_min {
                    0.0
                } else if l == q.t_min {
                    1.0 - self.survival(l as i64)
                } else {
                    // d/(l-1)^2 - d/l^2 without cancellation
                    let x = l as f64;
                    q.d * (2.0 * x - 1.0) / (x * x * (x - 1.0) * (x - 1.0))
                }
            }
        }
    }

    /// `P(L = l)` for `l = 1..=n` as a table indexed by `l`.
    pub fn pmf_table(&self, n: u64) -> Vec<f64> {
        (0..=n).map(|l| self.pmf(l)).collect()
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Finite(f) => f.probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum(),
            Self::QuadraticTail(q) => q.t_min as f64 + q.d * inverse_square_tail(q.t_min),
        }
    }

    /// `E(L; L > m)`.
    pub fn partial_mean_above(&self, m: u64) -> f64 {
        match self {
            Self::Finite(f) => f
                .probs
                .iter()
                .enumerate()
                .skip(m as usize)
                .map(|(i, p)| (i + 1) as f64 * p)
                .sum(),
            Self::QuadraticTail(q) => {
                if m < q.t_min {
                    // L > m always here
                    self.mean()
                } else {
                    // m P(L > m) + sum_{t >= m} P(L > t)
                    let x = m as f64;
                    q.d / x + q.d * inverse_square_tail(m)
                }
            }
        }
    }

    /// Inverse transform sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Self::Finite(f) => invert_cdf(&f.cdf, rng.random::<f64>()) as u64 + 1,
            Self::QuadraticTail(q) => {
                // U in (0, 1]; L is the smallest t with P(L > t) < U
                let u = 1.0 - rng.random::<f64>();
                q.invert(u)
            }
        }
    }
}

impl QuadraticTail {
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn t_min(&self) -> u64 {
        self.t_min
    }

    fn surv(&self, t: u64) -> f64 {
        if t < self.t_min {
            1.0
        } else {
            let x = t as f64;
            (self.d / (x * x)).min(1.0)
        }
    }

    fn invert(&self, u: f64) -> u64 {
        if self.d == 0.0 {
            return self.t_min;
        }
        let guess = (self.d / u).sqrt().floor();
        let mut t = if guess >= 1e18 { 1_000_000_000_000_000_000 } else { guess as u64 + 1 };
        t = t.max(self.t_min);
        while t > self.t_min && self.surv(t - 1) < u {
            t -= 1;
        }
        while self.surv(t) >= u {
            t += 1;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_square_tail_matches_zeta() {
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((inverse_square_tail(1) - zeta2).abs() < 1e-15);
        assert!((inverse_square_tail(3) - (zeta2 - 1.0 - 0.25)).abs() < 1e-15);
        let brute: f64 = (1000..200_000u64).rev().map(|t| 1.0 / (t as f64).powi(2)).sum::<f64>() + 1.0 / 200_000.0;
        assert!((inverse_square_tail(1000) - brute).abs() < 1e-10);
    }

    #[test]
    fn quadratic_tail_identity_is_exact() {
        let life = LifeLengthLaw::quadratic_tail(4.0, Some(2)).unwrap();
        assert_eq!(life.survival(10), 0.04);
        for t in 2..2000i64 {
            let s = life.survival(t);
            assert!(((t * t) as f64 * s - 4.0).abs() <= 4.0 * f64::EPSILON, "t={t}");
        }
        assert_eq!(life.survival(0), 1.0);
        assert_eq!(life.survival(1), 1.0);
    }

    #[test]
    fn quadratic_tail_pmf_sums_to_survival() {
        let life = LifeLengthLaw::quadratic_tail(2.5, None).unwrap();
        let head: f64 = (1..=500).map(|l| life.pmf(l)).sum();
        assert!((head + life.survival(500) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_small_t_min() {
        assert!(LifeLengthLaw::quadratic_tail(4.0, Some(1)).is_err());
        assert!(LifeLengthLaw::quadratic_tail(-1.0, None).is_err());
        assert!(LifeLengthLaw::quadratic_tail(f64::INFINITY, None).is_err());
    }

    #[test]
    fn means() {
        let life = LifeLengthLaw::finite(vec![0.5, 0.3, 0.2]).unwrap();
        assert!((life.mean() - 1.7).abs() < 1e-15);
        assert!((life.partial_mean_above(1) - 1.2).abs() < 1e-15);
        let q = LifeLengthLaw::quadratic_tail(1.0, Some(1)).unwrap();
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((q.mean() - (1.0 + zeta2)).abs() < 1e-14);
        let direct: f64 = (1..=100u64).map(|l| l as f64 * q.pmf(l)).sum();
        assert!((q.mean() - direct - q.partial_mean_above(100)).abs() < 1e-13);
    }

    #[test]
    fn quadratic_tail_inversion_boundaries() {
        let q = QuadraticTail { d: 4.0, t_min: 2 };
        // P(L > t) < u is first met at t = 10 for u just above 0.04
        assert_eq!(q.invert(0.040_000_1), 10);
        assert_eq!(q.invert(0.04), 11);
        assert_eq!(q.invert(1.0), 3);
        assert!(q.invert(1e-16) > 100_000_000);
    }

    #[test]
    fn quadratic_tail_sample_frequency() {
        let life = LifeLengthLaw::quadratic_tail(4.0, Some(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| life.sample(&mut rng) > 10).count() as f64;
        let p = 0.04;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - n as f64 * p).abs() < 3.0 * sigma, "hits={hits}");
    }
}
