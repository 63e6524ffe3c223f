//! Multivariate power series truncated at a total degree.
//!
//! Series with at most [`DENSE_MAX_VARS`] variables keep their coefficients in a
//! dense vector over a shared monomial layout (graded order, precomputed product
//! table). Wider series fall back to a sparse map keyed by exponent vectors.

use std::collections::{BTreeMap, HashMap};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DENSE_MAX_VARS: usize = 3;

/// Upper bound on the dense product table, in entries.
const MAX_PRODUCT_TABLE: usize = 40_000_000;

#[derive(Debug)]
struct Layout {
    nvars: usize,
    cap: usize,
    monomials: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    /// `(i, j, k)` with `monomials[i] + monomials[j] == monomials[k]`, total degree within cap.
    products: Vec<(u32, u32, u32)>,
}

impl Layout {
    fn dense(&self) -> bool {
        self.nvars <= DENSE_MAX_VARS
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn monomials_of_degree(nvars: usize, degree: u32, out: &mut Vec<Vec<u32>>) {
    fn rec(prefix: &mut Vec<u32>, remaining: usize, degree: u32, out: &mut Vec<Vec<u32>>) {
        if remaining == 1 {
            prefix.push(degree);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=degree).rev() {
            prefix.push(e);
            rec(prefix, remaining - 1, degree - e, out);
            prefix.pop();
        }
    }
    if nvars == 0 {
        if degree == 0 {
            out.push(Vec::new());
        }
        return;
    }
    rec(&mut Vec::with_capacity(nvars), nvars, degree, out);
}

fn build_layout(nvars: usize, cap: usize) -> Result<Layout> {
    if nvars > DENSE_MAX_VARS {
        return Ok(Layout { nvars, cap, monomials: Vec::new(), index: HashMap::new(), products: Vec::new() });
    }
    // number of pairs (m1, m2) with deg(m1) + deg(m2) <= cap
    let pairs = binomial(cap + 2 * nvars, 2 * nvars);
    if pairs > MAX_PRODUCT_TABLE {
        return Err(Error::CapTooLarge(format!(
            "{nvars} variables at cap {cap} need {pairs} product entries"
        )));
    }
    let mut monomials = Vec::new();
    let mut starts = Vec::with_capacity(cap + 2);
    for deg in 0..=cap {
        starts.push(monomials.len());
        monomials_of_degree(nvars, deg as u32, &mut monomials);
    }
    starts.push(monomials.len());
    let index: HashMap<Vec<u32>, usize> =
        monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
    let mut products = Vec::with_capacity(pairs);
    for (i, a) in monomials.iter().enumerate() {
        let da: usize = a.iter().map(|&e| e as usize).sum();
        for (j, b) in monomials[..starts[cap - da + 1]].iter().enumerate() {
            let sum: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            products.push((i as u32, j as u32, index[&sum] as u32));
        }
    }
    Ok(Layout { nvars, cap, monomials, index, products })
}

fn layout(nvars: usize, cap: usize) -> Result<Arc<Layout>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(l) = cache.lock().expect("layout cache poisoned").get(&(nvars, cap)) {
        return Ok(l.clone());
    }
    let built = Arc::new(build_layout(nvars, cap)?);
    let mut guard = cache.lock().expect("layout cache poisoned");
    Ok(guard.entry((nvars, cap)).or_insert(built).clone())
}

#[derive(Debug, Clone, PartialEq)]
enum Coeffs<S> {
    Dense(Vec<S>),
    Sparse(BTreeMap<Vec<u32>, S>),
}

/// A power series in `nvars` variables with every term of total degree above `cap` discarded.
#[derive(Debug, Clone)]
pub struct TruncatedSeries<S> {
    layout: Arc<Layout>,
    coeffs: Coeffs<S>,
}

impl<S: Scalar> PartialEq for TruncatedSeries<S> {
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other) && self.max_abs_diff(other) == S::zero()
    }
}

impl<S: Scalar> TruncatedSeries<S> {
    /// The zero series.
    pub fn zero(nvars: usize, cap: usize) -> Result<Self> {
        let layout = layout(nvars, cap)?;
        let coeffs = if layout.dense() {
            Coeffs::Dense(vec![S::zero(); layout.monomials.len()])
        } else {
            Coeffs::Sparse(BTreeMap::new())
        };
        Ok(Self { layout, coeffs })
    }

    pub fn constant(nvars: usize, cap: usize, value: S) -> Result<Self> {
        Ok(Self::zero(nvars, cap)?.constant_like(value))
    }

    /// The series `x_var`.
    pub fn variable(nvars: usize, cap: usize, var: usize) -> Result<Self> {
        if var >= nvars {
            return Err(Error::InvalidQuery(format!("variable {var} out of range for {nvars} variables")));
        }
        let mut s = Self::zero(nvars, cap)?;
        if cap >= 1 {
            let mut e = vec![0; nvars];
            e[var] = 1;
            s.set_coeff(&e, S::one());
        }
        Ok(s)
    }

    /// Builds a series from `(exponents, coefficient)` pairs; terms above the cap are dropped.
    pub fn from_terms<I>(nvars: usize, cap: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, S)>,
    {
        let mut s = Self::zero(nvars, cap)?;
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(Error::InvalidQuery(format!("exponent vector {e:?} has wrong length")));
            }
            let prev = s.coeff(&e);
            s.set_coeff(&e, prev + c);
        }
        Ok(s)
    }

    /// Zero series with the same shape as `self`.
    pub fn zero_like(&self) -> Self {
        let coeffs = match &self.coeffs {
            Coeffs::Dense(v) => Coeffs::Dense(vec![S::zero(); v.len()]),
            Coeffs::Sparse(_) => Coeffs::Sparse(BTreeMap::new()),
        };
        Self { layout: self.layout.clone(), coeffs }
    }

    /// Constant series with the same shape as `self`.
    pub fn constant_like(&self, value: S) -> Self {
        let mut s = self.zero_like();
        s.set_coeff(&vec![0; self.nvars()], value);
        s
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn cap(&self) -> usize {
        self.layout.cap
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nvars() == other.nvars() && self.cap() == other.cap()
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(self.nvars(), self.cap(), other.nvars(), other.cap()))
        }
    }

    pub fn coeff(&self, exponents: &[u32]) -> S {
        match &self.coeffs {
            Coeffs::Dense(v) => self.layout.index.get(exponents).map_or(S::zero(), |&i| v[i]),
            Coeffs::Sparse(m) => m.get(exponents).copied().unwrap_or_else(S::zero),
        }
    }

    /// Sets a coefficient. Exponents above the cap are ignored.
    pub fn set_coeff(&mut self, exponents: &[u32], value: S) {
        let degree: usize = exponents.iter().map(|&e| e as usize).sum();
        if degree > self.cap() {
            return;
        }
        match &mut self.coeffs {
            Coeffs::Dense(v) => {
                let i = self.layout.index[exponents];
                v[i] = value;
            }
            Coeffs::Sparse(m) => {
                if value == S::zero() {
                    m.remove(exponents);
                } else {
                    m.insert(exponents.to_vec(), value);
                }
            }
        }
    }

    pub fn constant_term(&self) -> S {
        self.coeff(&vec![0; self.nvars()])
    }

    /// All stored terms, in graded order for dense series.
    pub fn terms(&self) -> Vec<(Vec<u32>, S)> {
        match &self.coeffs {
            Coeffs::Dense(v) => self.layout.monomials.iter().cloned().zip(v.iter().copied()).collect(),
            Coeffs::Sparse(m) => m.iter().map(|(e, c)| (e.clone(), *c)).collect(),
        }
    }

    /// Largest absolute coefficient difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        let diff = self - other;
        diff.terms().into_iter().fold(S::zero(), |m, (_, c)| m.max(c.abs()))
    }

    /// Sum of all stored coefficients (the series evaluated at all-ones, truncated).
    pub fn coefficient_sum(&self) -> S {
        match &self.coeffs {
            Coeffs::Dense(v) => v.iter().copied().sum(),
            Coeffs::Sparse(m) => m.values().copied().sum(),
        }
    }

    /// Evaluates the truncated polynomial at `point`.
    pub fn evaluate(&self, point: &[S]) -> S {
        self.terms()
            .into_iter()
            .map(|(e, c)| {
                e.iter().zip(point).fold(c, |acc, (&k, &x)| acc * x.powi(k as i32))
            })
            .sum()
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut out = self.clone();
        out.add_assign_ref(other);
        Ok(out)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut out = self.zero_like();
        self.mul_acc_into(other, S::one(), &mut out);
        Ok(out)
    }

    pub fn scale(&self, factor: S) -> Self {
        let mut out = self.clone();
        out.scale_in_place(factor);
        out
    }

    pub fn scale_in_place(&mut self, factor: S) {
        match &mut self.coeffs {
            Coeffs::Dense(v) => v.iter_mut().for_each(|c| *c = *c * factor),
            Coeffs::Sparse(m) => {
                if factor == S::zero() {
                    m.clear();
                } else {
                    m.values_mut().for_each(|c| *c = *c * factor);
                }
            }
        }
    }

    /// `self += other`. Panics on shape mismatch.
    pub fn add_assign_ref(&mut self, other: &Self) {
        self.add_scaled(other, S::one());
    }

    /// `self += factor * other`. Panics on shape mismatch.
    pub fn add_scaled(&mut self, other: &Self, factor: S) {
        assert!(self.same_shape(other), "series shape mismatch");
        match (&mut self.coeffs, &other.coeffs) {
            (Coeffs::Dense(a), Coeffs::Dense(b)) => {
                a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x + factor * y)
            }
            (Coeffs::Sparse(a), Coeffs::Sparse(b)) => {
                for (e, &c) in b {
                    let entry = a.entry(e.clone()).or_insert_with(S::zero);
                    *entry = *entry + factor * c;
                }
            }
            _ => unreachable!("same shape implies same storage"),
        }
    }

    /// `out += factor * self * other`, truncated. Panics on shape mismatch.
    pub fn mul_acc_into(&self, other: &Self, factor: S, out: &mut Self) {
        assert!(self.same_shape(other) && self.same_shape(out), "series shape mismatch");
        let cap = self.cap();
        match (&self.coeffs, &other.coeffs, &mut out.coeffs) {
            (Coeffs::Dense(a), Coeffs::Dense(b), Coeffs::Dense(o)) => {
                for &(i, j, k) in &self.layout.products {
                    let x = a[i as usize];
                    if x != S::zero() {
                        o[k as usize] = o[k as usize] + factor * x * b[j as usize];
                    }
                }
            }
            (Coeffs::Sparse(a), Coeffs::Sparse(b), Coeffs::Sparse(o)) => {
                for (ea, &ca) in a {
                    let da: usize = ea.iter().map(|&e| e as usize).sum();
                    for (eb, &cb) in b {
                        let db: usize = eb.iter().map(|&e| e as usize).sum();
                        if da + db > cap {
                            continue;
                        }
                        let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                        let entry = o.entry(e).or_insert_with(S::zero);
                        *entry = *entry + factor * ca * cb;
                    }
                }
            }
            _ => unreachable!("same shape implies same storage"),
        }
    }

    fn newton_rounds(&self) -> usize {
        let mut rounds = 1;
        while (1usize << (rounds - 1)) <= self.cap() {
            rounds += 1;
        }
        rounds + 1
    }

    /// Multiplicative inverse by Newton iteration `v <- v (2 - s v)`.
    pub fn recip(&self) -> Result<Self> {
        let c0 = self.constant_term();
        if c0 == S::zero() {
            return Err(Error::InvalidQuery("reciprocal of a series with zero constant term".into()));
        }
        let two = self.constant_like(S::lit(2.0));
        let mut v = self.constant_like(S::one() / c0);
        for _ in 0..self.newton_rounds() {
            let sv = self * &v;
            v = &v * &(&two - &sv);
        }
        Ok(v)
    }

    /// Square root by Newton iteration `r <- (r + s / r) / 2`, starting from the root of the constant term.
    pub fn sqrt(&self) -> Result<Self> {
        let c0 = self.constant_term();
        if !(c0 > S::zero()) {
            return Err(Error::NonpositiveConstantTerm(c0.to_f64_lossy()));
        }
        let half = S::lit(0.5);
        let mut r = self.constant_like(c0.sqrt());
        for _ in 0..self.newton_rounds() {
            let q = self * &r.recip()?;
            r = (&r + &q).scale(half);
        }
        Ok(r)
    }
}

/// Free-function form of [`TruncatedSeries::sqrt`].
pub fn sqrt_series<S: Scalar>(s: &TruncatedSeries<S>) -> Result<TruncatedSeries<S>> {
    s.sqrt()
}

impl<'a, S: Scalar> Add for &'a TruncatedSeries<S> {
    type Output = TruncatedSeries<S>;
    fn add(self, rhs: Self) -> TruncatedSeries<S> {
        self.try_add(rhs).expect("series shape mismatch")
    }
}

impl<'a, S: Scalar> Sub for &'a TruncatedSeries<S> {
    type Output = TruncatedSeries<S>;
    fn sub(self, rhs: Self) -> TruncatedSeries<S> {
        let mut out = self.clone();
        out.add_scaled(rhs, -S::one());
        out
    }
}

impl<'a, S: Scalar> Mul for &'a TruncatedSeries<S> {
    type Output = TruncatedSeries<S>;
    fn mul(self, rhs: Self) -> TruncatedSeries<S> {
        self.try_mul(rhs).expect("series shape mismatch")
    }
}

impl<'a, S: Scalar> Neg for &'a TruncatedSeries<S> {
    type Output = TruncatedSeries<S>;
    fn neg(self) -> TruncatedSeries<S> {
        self.scale(-S::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Series = TruncatedSeries<f64>;

    fn uni(cap: usize, coeffs: &[f64]) -> Series {
        Series::from_terms(1, cap, coeffs.iter().enumerate().map(|(k, &c)| (vec![k as u32], c))).unwrap()
    }

    #[test]
    fn product_of_conjugates() {
        let p = uni(2, &[1.0, 1.0]);
        let m = uni(2, &[1.0, -1.0]);
        assert_eq!(&p * &m, uni(2, &[1.0, 0.0, -1.0]));
    }

    #[test]
    fn product_truncates_at_cap() {
        let p = uni(1, &[1.0, 1.0]);
        assert_eq!(&p * &p, uni(1, &[1.0, 2.0]));
    }

    #[test]
    fn scale_by_zero_is_zero() {
        let p = uni(3, &[1.0, 1.0]);
        assert_eq!(p.scale(0.0), p.zero_like());
        let wide = Series::variable(5, 3, 4).unwrap();
        assert_eq!(wide.scale(0.0).terms().len(), 0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = uni(2, &[1.0]);
        let b = uni(3, &[1.0]);
        assert!(matches!(a.try_add(&b), Err(Error::ShapeMismatch(1, 2, 1, 3))));
        let c = Series::zero(2, 2).unwrap();
        assert!(matches!(a.try_mul(&c), Err(Error::ShapeMismatch(..))));
    }

    #[test]
    fn sqrt_of_one() {
        let one = Series::constant(2, 6, 1.0).unwrap();
        assert!(one.sqrt().unwrap().max_abs_diff(&one) < 1e-15);
    }

    #[test]
    fn sqrt_rejects_nonpositive_constant() {
        let s = uni(4, &[0.0, 1.0]);
        assert!(matches!(s.sqrt(), Err(Error::NonpositiveConstantTerm(_))));
        let s = uni(4, &[-1.0, 1.0]);
        assert!(matches!(s.sqrt(), Err(Error::NonpositiveConstantTerm(_))));
    }

    #[test]
    fn dense_and_sparse_agree() {
        // the same bivariate product computed through a 4-variable (sparse) embedding
        let a2 = Series::from_terms(2, 5, [(vec![0, 0], 1.0), (vec![1, 0], 0.5), (vec![0, 2], -0.25)]).unwrap();
        let b2 = Series::from_terms(2, 5, [(vec![0, 0], 2.0), (vec![1, 1], 0.75)]).unwrap();
        let embed = |s: &Series| {
            Series::from_terms(4, 5, s.terms().into_iter().map(|(e, c)| (vec![e[0], e[1], 0, 0], c))).unwrap()
        };
        let p2 = &a2 * &b2;
        let p4 = &embed(&a2) * &embed(&b2);
        for (e, c) in p2.terms() {
            assert!((p4.coeff(&[e[0], e[1], 0, 0]) - c).abs() < 1e-15);
        }
        let r2 = (&a2 + &b2).sqrt().unwrap();
        let r4 = (&embed(&a2) + &embed(&b2)).sqrt().unwrap();
        for (e, c) in r2.terms() {
            assert!((r4.coeff(&[e[0], e[1], 0, 0]) - c).abs() < 1e-13);
        }
    }

    #[test]
    fn evaluate_matches_polynomial() {
        let s = Series::from_terms(2, 3, [(vec![0, 0], 1.0), (vec![1, 1], 2.0), (vec![0, 3], -1.0)]).unwrap();
        let v = s.evaluate(&[0.5, 0.25]);
        assert!((v - (1.0 + 2.0 * 0.125 - 0.25f64.powi(3))).abs() < 1e-15);
    }

    #[test]
    fn recip_inverts() {
        let s = uni(10, &[2.0, -1.0, 0.5, 0.3]);
        let one = s.constant_like(1.0);
        assert!((&s * &s.recip().unwrap()).max_abs_diff(&one) < 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let s = TruncatedSeries::<f32>::from_terms(1, 6, [(vec![0], 4.0f32), (vec![1], 1.0)]).unwrap();
        let r = s.sqrt().unwrap();
        assert!((r.coeff(&[0]) - 2.0).abs() < 1e-6);
        assert!((r.coeff(&[1]) - 0.25).abs() < 1e-6);
    }
}
