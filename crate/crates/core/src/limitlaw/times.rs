use std::fmt::Write as _;

use rand::Rng;

use super::LimitParams;
use crate::report::fmt_real;
use crate::scalar::Scalar;
use crate::stats::adaptive_simpson;

/// Absolute accuracy of the bisection used on the `y < 1` branch of `T`.
pub const BISECTION_TOL: f64 = 1e-12;

/// Law of `T`, the last time the limit process is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawT<S> {
    c: S,
    a: S,
}

/// Law of `T0`, the absorption time: Pareto with density `y^{-2}` on `y > 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LawT0;

impl<S: Scalar> LawT<S> {
    pub fn new(p: LimitParams<S>) -> Self {
        Self { c: p.c, a: p.a_const() }
    }

    pub fn cdf(&self, y: S) -> S {
        let one = S::one();
        if !(y > S::zero()) {
            S::zero()
        } else if y < one {
            // (sqrt(1 + c y^2) - 1) / (A y) without cancellation
            self.c * y / (self.a * ((one + self.c * y * y).sqrt() + one))
        } else {
            one - S::lit(2.0) / (self.a * y)
        }
    }

    pub fn density(&self, y: S) -> S {
        let one = S::one();
        if y < S::zero() {
            S::zero()
        } else if y < one {
            // (1 - 1/sqrt(1 + c y^2)) / (A y^2), rewritten to stay finite at y = 0
            let r = (one + self.c * y * y).sqrt();
            self.c / (self.a * r * (r + one))
        } else {
            S::lit(2.0) / (self.a * y * y)
        }
    }

    /// `f(1-)`
    pub fn density_left_of_one(&self) -> S {
        self.density_below(S::one())
    }

    fn density_below(&self, y: S) -> S {
        let r = (S::one() + self.c * y * y).sqrt();
        self.c / (self.a * r * (r + S::one()))
    }

    /// `f(1) - f(1-)`
    pub fn jump_at_one(&self) -> S {
        self.density(S::one()) - self.density_below(S::one())
    }

    /// Inverse CDF: closed form above `F(1)`, bisection below.
    pub fn quantile(&self, u: S) -> S {
        let one = S::one();
        let at_one = self.cdf(one);
        if u >= at_one {
            return S::lit(2.0) / (self.a * (one - u));
        }
        let (mut lo, mut hi) = (S::zero(), one);
        let tol = S::lit(BISECTION_TOL);
        while hi - lo > tol {
            let mid = S::lit(0.5) * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
            if mid == lo && mid == hi {
                break;
            }
        }
        S::lit(0.5) * (lo + hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        self.quantile(S::lit(rng.random::<f64>()))
    }

    /// `int_0^inf f`, split at 1 with `y = 1/u` on the unbounded piece.
    pub fn total_mass(&self, tol: f64) -> f64 {
        let f = |y: f64| self.density(S::lit(y)).to_f64_lossy();
        let below = adaptive_simpson(&|y: f64| self.density_below(S::lit(y)).to_f64_lossy(), 0.0, 1.0, tol);
        // y^2 f(y) -> 2/A as y -> inf
        let at_infinity = (S::lit(2.0) / self.a).to_f64_lossy();
        let above = adaptive_simpson(&|u: f64| if u > 0.0 { f(1.0 / u) / (u * u) } else { at_infinity }, 0.0, 1.0, tol);
        below + above
    }
}

impl LawT0 {
    pub fn cdf<S: Scalar>(&self, y: S) -> S {
        if y >= S::one() {
            (y - S::one()) / y
        } else {
            S::zero()
        }
    }

    pub fn density<S: Scalar>(&self, y: S) -> S {
        if y > S::one() {
            S::one() / (y * y)
        } else {
            S::zero()
        }
    }

    pub fn quantile<S: Scalar>(&self, u: S) -> S {
        S::one() / (S::one() - u)
    }

    /// `y = 1 / (1 - U)`
    pub fn sample<S: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        self.quantile(S::lit(rng.random::<f64>()))
    }
}

/// CSV `y,f,f0` for `y = step, 2 step, ..., y_max`; `y = 1` appears twice, left limit first.
pub fn figure1_data(c: f64, step: f64, y_max: f64) -> String {
    let law = LawT::new(LimitParams { c });
    let mut out = String::from("y,f,f0\n");
    let n = (y_max / step).round() as u64;
    let one_index = (1.0 / step).round() as u64;
    for i in 1..=n {
        let y = if i == one_index { 1.0 } else { i as f64 * step };
        if i == one_index {
            writeln!(out, "{},{},{}", fmt_real(1.0), fmt_real(law.density_below(1.0)), fmt_real(0.0)).expect("String");
        }
        writeln!(out, "{},{},{}", fmt_real(y), fmt_real(law.density(y)), fmt_real(LawT0.density(y))).expect("String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn law(c: f64) -> LawT<f64> {
        LawT::new(LimitParams::new(c).unwrap())
    }

    #[test]
    fn cdf_continuous_at_one() {
        for c in [0.0, 1.0, 5.0, 15.0] {
            let t = law(c);
            let s = (1.0f64 + c).sqrt();
            let left = (s - 1.0) / (s + 1.0);
            assert!((t.cdf(1.0) - left).abs() < 1e-15);
            assert!((t.cdf(1.0 - 1e-15) - left).abs() < 1e-12);
        }
    }

    #[test]
    fn density_jump() {
        assert!((law(15.0).jump_at_one() - 0.25).abs() < 1e-15);
        for c in [1.0f64, 5.0] {
            assert!((law(c).jump_at_one() - 1.0 / (1.0 + c).sqrt()).abs() < 1e-15);
        }
        assert_eq!(law(3.0).density_left_of_one(), law(3.0).density_below(1.0));
    }

    #[test]
    fn density_integrates_to_one() {
        for c in [0.0, 1.0, 15.0] {
            assert!((law(c).total_mass(1e-12) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn no_long_livers_means_t_equals_t0() {
        let t = law(0.0);
        for i in 1..200 {
            let y = i as f64 * 0.05;
            assert!((t.cdf(y) - LawT0.cdf(y)).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let t = law(5.0);
        for u in [0.01, 0.2, t.cdf(1.0), 0.9, 0.999] {
            assert!((t.cdf(t.quantile(u)) - u).abs() < 1e-11, "u={u}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: f64 = LawT0.sample(&mut rng);
        assert!(y >= 1.0);
    }

    #[test]
    fn figure_csv_has_jump_rows() {
        let csv = figure1_data(15.0, 0.01, 3.0);
        let rows: Vec<Vec<f64>> =
            csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
        let ones: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] == 1.0).collect();
        assert_eq!(ones.len(), 2);
        assert!((ones[1][1] - ones[0][1] - 0.25).abs() < 1e-15);
    }
}
