use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spikelab::exact::{exact_gibbs, exact_log_lr, u_marginal_log, Observable, Side};
use spikelab::model::{generate_spiked, Matrix, ModelParams};
use spikelab::prior::Prior;

fn configs(prior: &Prior, len: usize) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|(x, w)| {
                prior.atoms().iter().zip(prior.weights()).map(move |(&a, &p)| {
                    let mut y = x.clone();
                    y.push(a);
                    (y, w * p)
                })
            })
            .collect();
    }
    out
}

/// `log E_{u,v} exp(-H(u, v))` by direct summation over every joint configuration.
fn brute_log_lr(y: &Matrix, beta: f64, pu: &Prior, pv: &Prior) -> f64 {
    let n = y.rows() as f64;
    let cu = configs(pu, y.rows());
    let cv = configs(pv, y.cols());
    let mut terms = Vec::new();
    for (u, wu) in &cu {
        for (v, wv) in &cv {
            let mut uyv = 0.0;
            for (i, ui) in u.iter().enumerate() {
                for (j, vj) in v.iter().enumerate() {
                    uyv += ui * y.get(i, j) * vj;
                }
            }
            let uu: f64 = u.iter().map(|x| x * x).sum();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            terms.push((wu * wv).ln() + (beta / n).sqrt() * uyv - beta / (2.0 * n) * uu * vv);
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn gaussian_matrix(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_row_major(n, m, (0..n * m).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
}

fn binary_prior(kind: u8) -> Prior {
    match kind {
        0 => Prior::rademacher(),
        _ => Prior::standardize(&[0.0, 1.0], &[0.7, 0.3]).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_lr_equals_joint_enumeration(
        n in 1usize..=6,
        m in 1usize..=6,
        beta in 0.0f64..1.5,
        seed in any::<u64>(),
        ku in 0u8..2,
        kv in 0u8..2,
    ) {
        let y = gaussian_matrix(n, m, seed);
        let (pu, pv) = (binary_prior(ku), binary_prior(kv));
        let got = exact_log_lr(&y, beta, &pu, &pv).unwrap().value;
        let want = brute_log_lr(&y, beta, &pu, &pv);
        prop_assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
    }

    #[test]
    fn sparse_u_marginal_closed_form(a in -3.0f64..3.0, c in 0.0f64..0.5) {
        let p = Prior::sparse_rademacher(0.04).unwrap();
        let want = (0.96 + 0.04 * (-25.0 * c).exp() * (5.0 * a).cosh()).ln();
        prop_assert!((u_marginal_log(a, c, &p) - want).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_of_data(seed in any::<u64>(), beta in 0.0f64..1.0) {
        let y = gaussian_matrix(4, 3, seed);
        let p = Prior::sparse_rademacher(0.2).unwrap();
        let a = exact_log_lr(&y, beta, &p, &p).unwrap().value;
        let b = exact_log_lr(&y.neg(), beta, &p, &p).unwrap().value;
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn continuous_in_beta(seed in any::<u64>(), beta in 0.05f64..1.0) {
        let y = gaussian_matrix(3, 4, seed);
        let r = Prior::rademacher();
        let a = exact_log_lr(&y, beta, &r, &r).unwrap().value;
        let b = exact_log_lr(&y, beta + 1e-7, &r, &r).unwrap().value;
        prop_assert!((a - b).abs() < 1e-4);
    }
}

#[test]
fn replica_and_spike_overlaps_agree_in_mean() {
    let r = Prior::rademacher();
    let params = ModelParams::new(3, 3, 0.8).unwrap();
    let ru = Observable::replica_pair(Side::U);
    let su = Observable::with_spike(Side::U);
    let draws = 100_000;
    let (mut a, mut b) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for seed in 0..draws as u64 {
        let inst = generate_spiked(&params, &r, &r, seed).unwrap();
        a.push(exact_gibbs(&inst, 0.8, &r, &r, &ru, 2).unwrap().value);
        b.push(exact_gibbs(&inst, 0.8, &r, &r, &su, 1).unwrap().value);
    }
    let stat = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let ((ma, sa), (mb, sb)) = (stat(&a), stat(&b));
    assert!((ma - mb).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{ma} vs {mb}");
}
