use crate::scalar::Scalar;
use crate::series::TruncatedSeries;

/// Values the generating-function recursion can run over: plain scalars, or
/// truncated series when joint coefficients are wanted.
pub trait PgfValue<S: Scalar>: Clone + Send + Sync {
    fn constant_like(&self, value: S) -> Self;

    /// `self += factor * other`
    fn add_scaled(&mut self, other: &Self, factor: S);

    /// `out += factor * self * other`
    fn mul_acc(&self, other: &Self, factor: S, out: &mut Self);

    fn mul(&self, other: &Self) -> Self {
        let mut out = self.constant_like(S::zero());
        self.mul_acc(other, S::one(), &mut out);
        out
    }
}

impl<S: Scalar> PgfValue<S> for S {
    fn constant_like(&self, value: S) -> Self {
        value
    }

    fn add_scaled(&mut self, other: &Self, factor: S) {
        *self = *self + factor * *other;
    }

    fn mul_acc(&self, other: &Self, factor: S, out: &mut Self) {
        *out = *out + factor * *self * *other;
    }

    fn mul(&self, other: &Self) -> Self {
        *self * *other
    }
}

impl<S: Scalar> PgfValue<S> for TruncatedSeries<S> {
    fn constant_like(&self, value: S) -> Self {
        TruncatedSeries::constant_like(self, value)
    }

    fn add_scaled(&mut self, other: &Self, factor: S) {
        TruncatedSeries::add_scaled(self, other, factor);
    }

    fn mul_acc(&self, other: &Self, factor: S, out: &mut Self) {
        self.mul_acc_into(other, factor, out);
    }
}

/// Horner evaluation of `sum_n probs[n] x^n`.
pub(crate) fn eval_pgf<S: Scalar, V: PgfValue<S>>(probs: &[S], x: &V) -> V {
    let mut acc = x.constant_like(*probs.last().expect("nonempty pmf"));
    for &p in probs.iter().rev().skip(1) {
        let mut next = x.constant_like(p);
        acc.mul_acc(x, S::one(), &mut next);
        acc = next;
    }
    acc
}
