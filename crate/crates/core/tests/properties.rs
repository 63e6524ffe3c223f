//! Algebraic and probabilistic invariants under random inputs.

use gwolab_core::exact::{fdd_pgf, joint_pgf_series, FddSpec};
use gwolab_core::lifelaw::{g_k, limit_constant, LifeLaw, LifeLengthLaw, ModelSummary, OffspringPmf};
use gwolab_core::limitlaw::{eta_fdd_pgf, eta_marginal_pgf, sqrt_binomial_coeffs, FddQuery, LimitParams};
use gwolab_core::Series;
use proptest::prelude::*;

const NVARS: usize = 2;
const CAP: usize = 6;

fn monomials(cap: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for i in 0..=cap as u32 {
        for j in 0..=(cap as u32 - i) {
            out.push(vec![i, j]);
        }
    }
    out
}

fn series_strategy() -> impl Strategy<Value = Series> {
    let n = monomials(CAP).len();
    prop::collection::vec(-1.0f64..1.0, n)
        .prop_map(|cs| Series::from_terms(NVARS, CAP, monomials(CAP).into_iter().zip(cs)).unwrap())
}

/// Series with constant term in [0.5, 2] and small higher coefficients.
fn positive_series_strategy() -> impl Strategy<Value = Series> {
    (0.5f64..2.0, series_strategy()).prop_map(|(c0, s)| {
        let mut s = s.scale(0.2);
        s.set_coeff(&[0, 0], c0);
        s
    })
}

fn offspring_strategy() -> impl Strategy<Value = OffspringPmf> {
    // critical laws on {0, 1, 2, 3}: p0 = p2 + 2 p3
    (0.0f64..0.3, 0.0f64..0.1).prop_map(|(p2, p3)| {
        let p0 = p2 + 2.0 * p3;
        let p1 = 1.0 - p0 - p2 - p3;
        OffspringPmf::new(vec![p0, p1, p2, p3]).unwrap()
    })
}

fn small_model_strategy() -> impl Strategy<Value = LifeLaw> {
    (offspring_strategy(), 0.05f64..0.9).prop_map(|(off, q)| {
        LifeLaw::bellman_harris(LifeLengthLaw::finite(vec![q, 1.0 - q]).unwrap(), off)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mul_commutes(a in series_strategy(), b in series_strategy()) {
        let ab = a.try_mul(&b).unwrap();
        let ba = b.try_mul(&a).unwrap();
        prop_assert!(ab.max_abs_diff(&ba) <= 1e-14);
    }

    #[test]
    fn mul_associates(a in series_strategy(), b in series_strategy(), c in series_strategy()) {
        let left = a.try_mul(&b).unwrap().try_mul(&c).unwrap();
        let right = a.try_mul(&b.try_mul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) <= 1e-13);
    }

    #[test]
    fn sqrt_squares_back(s in positive_series_strategy()) {
        let r = s.sqrt().unwrap();
        let back = r.try_mul(&r).unwrap();
        prop_assert!(back.max_abs_diff(&s) <= 1e-12);
    }

    #[test]
    fn sqrt_matches_binomial_series(alpha in 0.1f64..10.0, beta in 0.0f64..1.0) {
        let beta = beta * alpha;
        let k = 20;
        let s = Series::from_terms(1, k, [(vec![0], alpha), (vec![1], -beta)]).unwrap();
        let r = s.sqrt().unwrap();
        let closed = sqrt_binomial_coeffs(alpha, beta, k);
        for (i, &c) in closed.iter().enumerate() {
            let got = r.coeff(&[i as u32]);
            prop_assert!((got - c).abs() <= 1e-12 * (1.0 + c.abs()), "coefficient {i}: {got} vs {c}");
        }
    }

    #[test]
    fn pgf_bounded_by_survival(model in small_model_strategy(), t in 1u64..12, z1 in 0.0f64..1.0, z2 in 0.0f64..1.0) {
        let q = 1.0 - fdd_pgf(&model, &FddSpec::new(vec![t], vec![0.0]).unwrap()).unwrap();
        let q_k = 1.0 - fdd_pgf(&model, &FddSpec::new(vec![t, t + 3], vec![z1, z2]).unwrap()).unwrap();
        prop_assert!(q_k <= q + 1e-14);
        prop_assert!(q_k >= (1.0 - z1) * q - 1e-14);
    }

    #[test]
    fn pgf_monotone_in_z(model in small_model_strategy(), t in 1u64..12, z in 0.0f64..0.9, dz in 0.0f64..0.1) {
        let at = |z: f64| fdd_pgf(&model, &FddSpec::new(vec![t, t + 2], vec![z, z]).unwrap()).unwrap();
        prop_assert!(at(z + dz) >= at(z) - 1e-14);
    }

    #[test]
    fn scalar_pgf_matches_series(model in small_model_strategy(), t in 1u64..8, z1 in 0.0f64..0.5, z2 in 0.0f64..0.5) {
        let times = vec![t, t + 1];
        let series = joint_pgf_series(&model, &times, 40).unwrap();
        let scalar = fdd_pgf(&model, &FddSpec::new(times, vec![z1, z2]).unwrap()).unwrap();
        // the series tail beyond degree 40 is below 0.5^40 times the mass
        prop_assert!((series.evaluate(&[z1, z2]) - scalar).abs() <= 1e-10);
    }

    #[test]
    fn limit_pgf_is_a_pgf(c in 0.0f64..20.0, y1 in 0.3f64..3.0, dy in 0.0f64..3.0, z1 in 0.0f64..1.0, z2 in 0.0f64..1.0, dz in 0.0f64..0.2) {
        let p = LimitParams::new(c).unwrap();
        let at = |a: f64, b: f64| {
            let q = FddQuery::new(vec![y1, y1 + dy + 1e-3], vec![a.min(1.0), b.min(1.0)]).unwrap();
            eta_fdd_pgf(&p, &q)
        };
        let v = at(z1, z2);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        prop_assert!(at(z1 + dz, z2) >= v - 1e-12);
        prop_assert!(at(z1, z2 + dz) >= v - 1e-12);
        let m = eta_marginal_pgf(&p, y1, z1);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&m));
    }

    #[test]
    fn quadratic_identities(b in 0.05f64..5.0, a in 0.1f64..10.0, d in 0.0f64..10.0,
                            y2 in 1.0f64..4.0, z1 in 0.0f64..1.0, z2 in 0.0f64..1.0) {
        let s = ModelSummary::from_moments(1.0, b, a, d, 1e-9);
        prop_assert_eq!(s.h, limit_constant(a, b, d));
        let scale = b * s.h * s.h + a * s.h + d;
        prop_assert!(s.quadratic_residual().abs() <= 1e-12 * scale);
        let g = g_k(&[1.0, y2], &[z1, z2]);
        let h_k = s.h_k(g);
        let residual = b * h_k * h_k - a * h_k - d * g;
        prop_assert!(residual.abs() <= 1e-12 * scale);
    }
}
