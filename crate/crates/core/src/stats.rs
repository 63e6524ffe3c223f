//! Small numerical and statistical helpers: goodness of fit, binomial errors,
//! sequence extrapolation and adaptive quadrature.

use serde::Serialize;

/// Kolmogorov-Smirnov critical coefficient at the 99% level.
pub const KS_99_COEFFICIENT: f64 = 1.628;

/// `sup_y |F_n(y) - F(y)|` for the empirical CDF of `samples` (sorted in place).
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs())
    })
}

/// Asymptotic 99% acceptance band `1.628 / sqrt(n)`.
pub fn ks_band_99(n: usize) -> f64 {
    KS_99_COEFFICIENT / (n as f64).sqrt()
}

/// Standard error of a binomial proportion `p` estimated from `n` trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// One-step extrapolation from three points of a sequence on a geometric grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrapolation {
    pub limit: f64,
    /// fitted convergence order `p` in `x_n ~ L + C r^{-p n}`, per grid doubling if the grid is dyadic
    pub order: f64,
}

/// Richardson/Aitken extrapolation with the order fitted from the three points.
///
/// `L = x3 - (x3 - x2)^2 / ((x3 - x2) - (x2 - x1))`; falls back to `x3` when the
/// differences do not shrink.
pub fn extrapolate(x1: f64, x2: f64, x3: f64) -> Extrapolation {
    let d1 = x2 - x1;
    let d2 = x3 - x2;
    let ratio = d1 / d2;
    if !(ratio.is_finite() && ratio > 1.0) {
        return Extrapolation { limit: x3, order: f64::NAN };
    }
    Extrapolation { limit: x3 + d2 / (ratio - 1.0), order: ratio.log2() }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Whether `xs` strictly decreases, allowing each step to rise by at most `slack`.
pub fn decreasing_with_slack(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] < w[0] + slack)
}
