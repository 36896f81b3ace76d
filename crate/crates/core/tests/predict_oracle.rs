use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spikelab::model::Hypothesis;
use spikelab::predict::{char_fn, erfc, kl_limit, lr_asymptotics, optimal_error, summarize, theta, NormalRef};

/// Maclaurin series of erf below 2, Lentz continued fraction above.
fn erfc_oracle(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_oracle(-x);
    }
    if x < 2.0 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        return 1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum;
    }
    // erfc(x) = exp(-x²)/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

#[test]
fn erfc_against_series_and_continued_fraction() {
    assert_eq!(erfc(0.0), 1.0);
    assert!((erfc(1.0) - 0.157299207).abs() < 1e-9);
    for k in -40..=80 {
        let x = 0.1 * k as f64;
        let (got, want) = (erfc(x), erfc_oracle(x));
        assert!((got - want).abs() <= 1e-12 * want.max(1e-300).max(if x < 2.0 { 1.0 } else { 0.0 }), "x={x}: {got} vs {want}");
        assert!((erfc(-x) - (2.0 - got)).abs() < 1e-15);
    }
}

#[test]
fn closed_form_values() {
    let a = lr_asymptotics(1.0, 0.5);
    assert!((a.mean_null + 0.0719205).abs() < 1e-7);
    assert!((a.mean_alt - 0.0719205).abs() < 1e-7);
    assert!((a.variance - 0.1438410).abs() < 1e-7);
    assert!((lr_asymptotics(1.0, 0.999).variance - 3.107).abs() < 1e-3);
    assert!((optimal_error(1.0, 0.5).unwrap() - 0.8496).abs() < 1e-4);
    assert_eq!(optimal_error(1.0, 0.0).unwrap(), 1.0);
    assert!(optimal_error(1.0, 0.99999).unwrap() < 0.6);
    assert!((theta(1.0, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((theta(2.0, 0.5).unwrap() - 2.0).abs() < 1e-15);
    assert!(kl_limit(1.0, 1.0).is_err() && optimal_error(2.0, 0.8).is_err() && theta(1.0, 1.5).is_err());
    let z = char_fn(1.0, 1.0, 0.5, Hypothesis::Spiked).unwrap();
    assert!((z.norm() - (-0.0719205f64).exp()).abs() < 1e-7);
    assert!((z.arg() - 0.0719205).abs() < 1e-7);
    assert_eq!(char_fn(0.0, 1.0, 0.5, Hypothesis::Null).unwrap().re, 1.0);
}

#[test]
fn optimal_error_decreases_in_beta() {
    for alpha in [0.5f64, 1.0, 2.0] {
        let top = 1.0 / alpha.sqrt();
        let mut last = 1.0 + 1e-12;
        for k in 0..100 {
            let e = optimal_error(alpha, top * k as f64 / 100.0).unwrap();
            assert!(e < last || k == 0, "alpha {alpha} step {k}");
            last = e;
        }
    }
}

proptest! {
    #[test]
    fn asymptotics_identities(alpha in 0.01f64..10.0, frac in 0.0f64..0.999) {
        let beta = (frac / alpha).sqrt();
        let a = lr_asymptotics(alpha, beta);
        prop_assert!(a.valid);
        prop_assert!((a.mean_null + a.mean_alt).abs() <= 1e-15);
        prop_assert!((a.variance + 2.0 * a.mean_null).abs() <= 1e-15 * (1.0 + a.variance));
        prop_assert_eq!(kl_limit(alpha, beta).unwrap(), a.mean_alt);
    }

    #[test]
    fn char_fn_symmetry_and_curvature(alpha in 0.1f64..3.0, frac in 0.05f64..0.95, s in -3.0f64..3.0, spiked in any::<bool>()) {
        let beta = (frac / alpha).sqrt();
        let h = if spiked { Hypothesis::Spiked } else { Hypothesis::Null };
        let a = char_fn(s, alpha, beta, h).unwrap();
        let b = char_fn(-s, alpha, beta, h).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-14);
        let step = 1e-3;
        let logmod = |t: f64| char_fn(t, alpha, beta, h).unwrap().norm().ln();
        let curv = -(logmod(step) - 2.0 * logmod(0.0) + logmod(-step)) / (step * step);
        prop_assert!((curv - lr_asymptotics(alpha, beta).variance).abs() < 1e-4);
    }
}

#[test]
fn ks_of_normal_draws() {
    let reference = NormalRef { mean: 0.0, variance: 1.0 };
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = summarize(&xs, reference).unwrap();
        assert!(s.ks < 0.022, "seed {seed}: {}", s.ks);
    }
}

fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * libm::erfc(-mid / std::f64::consts::SQRT_2) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn ks_of_exact_quantiles_and_constants() {
    let n = 1000;
    let xs: Vec<f64> = (0..n).map(|i| normal_quantile((i as f64 + 0.5) / n as f64)).collect();
    let s = summarize(&xs, NormalRef { mean: 0.0, variance: 1.0 }).unwrap();
    assert!(s.ks < 0.002, "{}", s.ks);
    let c = summarize(&[0.3; 50], NormalRef { mean: 0.0, variance: 1.0 }).unwrap();
    assert_eq!(c.variance, 0.0);
    let gap = 1.0 - spikelab::predict::normal_cdf(0.3);
    assert!((c.ks - gap.max(1.0 - gap)).abs() < 1e-12);
}
