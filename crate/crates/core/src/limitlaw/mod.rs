//! The limiting pure death process `eta(y)` and its characteristic times
//! `T = sup{u : eta(u) = inf}` and `T0 = inf{u : eta(u) = 0}`.
//!
//! Everything is a closed form in the compound parameter `c` and
//! `A = 1 + sqrt(1 + c)`; joint pmfs come from series square roots.

mod times;

use std::collections::BTreeMap;

use serde::Serialize;

pub use times::{figure1_data, LawT, LawT0};

use crate::error::{Error, Result};
use crate::exact::JointPmf;
use crate::scalar::Scalar;
use crate::series::TruncatedSeries;

/// Largest number of observation fractions for joint pmf extraction.
pub const MAX_FDD_DIM: usize = 3;

/// Coefficients below this are reported as genuine sign violations, not rounding.
pub const NEGATIVE_COEFF_TOL: f64 = 1e-12;

/// The compound parameter `c >= 0` of the limit process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitParams<S> {
    pub c: S,
}

impl<S: Scalar> LimitParams<S> {
    pub fn new(c: S) -> Result<Self> {
        if !(c.is_finite() && c >= S::zero()) {
            return Err(Error::InvalidQuery(format!("compound parameter c = {c} must be finite and >= 0")));
        }
        Ok(Self { c })
    }

    /// `A = 1 + sqrt(1 + c)`
    pub fn a_const(&self) -> S {
        S::one() + (S::one() + self.c).sqrt()
    }

    /// `P(eta(y) < inf)`; equals `P(T <= y)`.
    pub fn finite_probability(&self, y: S) -> S {
        LawT::new(*self).cdf(y)
    }
}

/// Fractions `0 < y_1 < ... < y_k` of the observation time with pgf arguments `z_i in [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FddQuery<S> {
    pub y: Vec<S>,
    pub z: Vec<S>,
}

impl<S: Scalar> FddQuery<S> {
    pub fn new(y: Vec<S>, z: Vec<S>) -> Result<Self> {
        validate_fractions(&y)?;
        if y.len() != z.len() {
            return Err(Error::InvalidQuery(format!("{} fractions but {} arguments", y.len(), z.len())));
        }
        if z.iter().any(|&x| !(x >= S::zero() && x <= S::one())) {
            return Err(Error::InvalidQuery("arguments must lie in [0, 1]".into()));
        }
        Ok(Self { y, z })
    }

    /// Number of fractions below 1; `y_i = 1` counts on the `>= 1` side.
    pub fn j(&self) -> usize {
        self.y.iter().filter(|&&y| y < S::one()).count()
    }

    /// The query with `z_i = 1` coordinates removed.
    pub fn reduced(&self) -> Self {
        let (y, z) = self.y.iter().zip(&self.z).filter(|(_, &z)| z < S::one()).map(|(&y, &z)| (y, z)).unzip();
        Self { y, z }
    }
}

fn validate_fractions<S: Scalar>(y: &[S]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidQuery("at least one fraction is required".into()));
    }
    if !(y[0] > S::zero()) || y.windows(2).any(|w| !(w[0] < w[1])) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidQuery("fractions must satisfy 0 < y_1 < ... < y_k < inf".into()));
    }
    Ok(())
}

/// `Gamma_i = c (y_1 / y_i)^2`
fn gammas<S: Scalar>(c: S, y: &[S]) -> Vec<S> {
    y.iter().map(|&yi| c * (y[0] / yi).powi(2)).collect()
}

/// `E(z_1^{eta(y_1)} ... z_k^{eta(y_k)})`.
pub fn eta_fdd_pgf<S: Scalar>(p: &LimitParams<S>, q: &FddQuery<S>) -> S {
    let q = q.reduced();
    if q.y.is_empty() {
        return S::one();
    }
    let one = S::one();
    let gam = gammas(p.c, &q.y);
    let denom = p.a_const() * q.y[0];
    let j = q.j();
    // partial[m] = sum_{i <= m} z_1 ... z_{i-1} (1 - z_i) Gamma_i; prefix[m] = z_1 ... z_m
    let mut partial = vec![S::zero()];
    let mut prefix = vec![one];
    for (i, (&zi, &gi)) in q.z.iter().zip(&gam).enumerate() {
        partial.push(partial[i] + prefix[i] * (one - zi) * gi);
        prefix.push(prefix[i] * zi);
    }
    let all = (one + partial[q.y.len()]).sqrt();
    if j == 0 {
        one - (one + all) / denom
    } else {
        ((one + partial[j] + p.c * prefix[j] * q.y[0] * q.y[0]).sqrt() - all) / denom
    }
}

/// `E(z^{eta(y)})`.
pub fn eta_marginal_pgf<S: Scalar>(p: &LimitParams<S>, y: S, z: S) -> S {
    let one = S::one();
    if z >= one {
        return p.finite_probability(y);
    }
    let denom = p.a_const() * y;
    let base = (one + p.c * (one - z)).sqrt();
    if y < one {
        ((one + p.c * (one - z) + p.c * z * y * y).sqrt() - base) / denom
    } else {
        one - (one + base) / denom
    }
}

/// Taylor coefficients of `sqrt(alpha - beta x)` up to degree `k_max`:
/// `sqrt(alpha) binom(1/2, k) (-beta / alpha)^k`.
pub fn sqrt_binomial_coeffs<S: Scalar>(alpha: S, beta: S, k_max: usize) -> Vec<S> {
    let ratio = beta / alpha;
    let half = S::lit(0.5);
    let mut out = Vec::with_capacity(k_max + 1);
    let mut term = alpha.sqrt();
    out.push(term);
    for k in 1..=k_max {
        let kk = S::from_usize(k).expect("small integer");
        term = term * (half - (kk - S::one())) / kk * (-ratio);
        out.push(term);
    }
    out
}

/// Law of `eta(y)` on `0..=k_max`, with the finite remainder and the mass at infinity kept apart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalPmf<S> {
    pub pmf: Vec<S>,
    /// `P(k_max < eta(y) < inf)`
    pub remainder: S,
    /// `P(eta(y) = inf)`
    pub mass_at_infinity: S,
}

/// Coefficients of the marginal pgf from the binomial series of its radicals.
pub fn eta_marginal_pmf<S: Scalar>(p: &LimitParams<S>, y: S, k_max: usize) -> Result<MarginalPmf<S>> {
    validate_fractions(&[y])?;
    let one = S::one();
    let alpha = one + p.c;
    let denom = p.a_const() * y;
    let outer = sqrt_binomial_coeffs(alpha, p.c, k_max);
    let pmf: Vec<S> = if y >= one {
        outer
            .iter()
            .enumerate()
            .map(|(k, &r)| if k == 0 { (y - one) / y } else { -r / denom })
            .collect()
    } else {
        let inner = sqrt_binomial_coeffs(alpha, p.c * (one - y * y), k_max);
        inner.iter().zip(&outer).map(|(&a, &b)| (a - b) / denom).collect()
    };
    let finite = p.finite_probability(y);
    let listed: S = pmf.iter().copied().sum();
    Ok(MarginalPmf { remainder: (finite - listed).max(S::zero()), mass_at_infinity: one - finite, pmf })
}

/// Joint pmf of `(eta(y_1), ..., eta(y_k))` on total degree `<= k_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaFddPmf {
    pub pmf: JointPmf,
    /// negative coefficients set to zero
    pub clamped: usize,
    /// most negative coefficient before clamping (0 if none)
    pub worst_negative: f64,
}

/// The fdd pgf as a truncated series in `z_1, ..., z_k`.
pub fn eta_fdd_series<S: Scalar>(p: &LimitParams<S>, y: &[S], k_max: usize) -> Result<TruncatedSeries<S>> {
    validate_fractions(y)?;
    let k = y.len();
    if k > MAX_FDD_DIM {
        return Err(Error::CapTooLarge(format!("{k} fractions exceed the configured limit {MAX_FDD_DIM}")));
    }
    let one = TruncatedSeries::<S>::constant(k, k_max, S::one())?;
    let gam = gammas(p.c, y);
    let j = y.iter().filter(|&&v| v < S::one()).count();
    let mut partial = vec![one.zero_like()];
    let mut prefix = vec![one.clone()];
    for i in 0..k {
        let next = &prefix[i] * &TruncatedSeries::variable(k, k_max, i)?;
        // z_1 ... z_{i-1} (1 - z_i) = prefix_{i-1} - prefix_i
        let mut term = partial[i].clone();
        term.add_scaled(&prefix[i], gam[i]);
        term.add_scaled(&next, -gam[i]);
        partial.push(term);
        prefix.push(next);
    }
    let all = (&one + &partial[k]).sqrt()?;
    let inv = S::one() / (p.a_const() * y[0]);
    let numer = if j == 0 {
        let mut n = one.scale(p.a_const() * y[0]);
        n.add_scaled(&one, -S::one());
        n.add_scaled(&all, -S::one());
        n
    } else {
        let mut inner = &one + &partial[j];
        inner.add_scaled(&prefix[j], p.c * y[0] * y[0]);
        &inner.sqrt()? - &all
    };
    Ok(numer.scale(inv))
}

/// Joint coefficients of the fdd pgf; negative round-off is clamped to zero and counted.
pub fn eta_fdd_pmf<S: Scalar>(p: &LimitParams<S>, y: &[S], k_max: usize) -> Result<EtaFddPmf> {
    let series = eta_fdd_series(p, y, k_max)?;
    let mut clamped = 0;
    let mut worst_negative = 0.0f64;
    let cells: BTreeMap<Vec<u32>, f64> = series
        .terms()
        .into_iter()
        .map(|(e, c)| {
            let c = c.to_f64_lossy();
            if c < 0.0 {
                clamped += 1;
                worst_negative = worst_negative.min(c);
                (e, 0.0)
            } else {
                (e, c)
            }
        })
        .collect();
    if worst_negative < -NEGATIVE_COEFF_TOL {
        log::warn!("limit pmf coefficient {worst_negative:e} clamped to zero");
    }
    let times = Vec::new();
    Ok(EtaFddPmf { pmf: JointPmf::from_cells(times, None, k_max, cells), clamped, worst_negative })
}

/// `E(z^{eta(y_1) - eta(y_2)}; eta(y_1) < inf)`, or the same given `eta(y_1) < inf` when `conditional`.
pub fn increment_pgf<S: Scalar>(p: &LimitParams<S>, y1: S, y2: S, z: S, conditional: bool) -> Result<S> {
    validate_fractions(&[y1, y2])?;
    if !(z >= S::zero() && z <= S::one()) {
        return Err(Error::InvalidQuery(format!("argument {z} is outside [0, 1]")));
    }
    let one = S::one();
    let c = p.c;
    let a = p.a_const();
    let w = c * (one - z) * (one - (y1 / y2).powi(2));
    let lower = (one + w).sqrt();
    let value = if y2 < one {
        let top = (one + c * y1 * y1 + w).sqrt() - lower;
        if conditional {
            top / ((one + c * y1 * y1).sqrt() - one)
        } else {
            top / (a * y1)
        }
    } else if y1 < one {
        let top = (one + c * y1 * y1 + c * (one - z) * (one - y1 * y1)).sqrt() - lower;
        if conditional {
            top / ((one + c * y1 * y1).sqrt() - one)
        } else {
            top / (a * y1)
        }
    } else if conditional {
        one - (lower - one) / (a * y1 - S::lit(2.0))
    } else {
        one - (one + lower) / (a * y1)
    };
    Ok(value)
}
