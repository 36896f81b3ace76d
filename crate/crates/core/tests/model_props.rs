use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spikelab::model::{
    generate_null, generate_null_with, generate_spiked, generate_spiked_with, neg_hamiltonian, read_instance, write_instance,
    MatrixFormat, ModelParams,
};
use spikelab::prior::Prior;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_scales_linearly_and_quadratically(
        seed in any::<u64>(),
        n in 1usize..8,
        m in 1usize..8,
        beta in 0.0f64..3.0,
    ) {
        let inst = generate_null(&ModelParams::new(n, m, beta).unwrap(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let p = Prior::sparse_rademacher(0.3).unwrap();
        let u = p.sample(n, &mut rng).unwrap();
        let v = p.sample(m, &mut rng).unwrap();
        let nn = n as f64;
        let linear = (beta / nn).sqrt() * inst.data.bilinear(&u, &v);
        let quad = beta / (2.0 * nn) * u.iter().map(|x| x * x).sum::<f64>() * v.iter().map(|x| x * x).sum::<f64>();
        for c in [-1.0, 0.0, 2.0] {
            let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
            let got = neg_hamiltonian(&inst.data, beta, &cu, &v).unwrap();
            prop_assert!((got - (c * linear - c * c * quad)).abs() < 1e-9 * (1.0 + linear.abs() + quad));
        }
    }

    #[test]
    fn zero_signal_spiked_equals_null(seed in any::<u64>(), n in 1usize..10, m in 1usize..10) {
        let params = ModelParams::new(n, m, 0.0).unwrap();
        let r = Prior::rademacher();
        let a = generate_null_with(&params, &mut ChaCha8Rng::seed_from_u64(seed), seed);
        let b = generate_spiked_with(&params, &r, &r, &mut ChaCha8Rng::seed_from_u64(seed), seed).unwrap();
        prop_assert_eq!(&a.data, &b.data);
        prop_assert_eq!(generate_null(&params, seed).data, generate_spiked(&params, &r, &r, seed).unwrap().data);
    }

    #[test]
    fn instance_files_roundtrip(seed in any::<u64>(), n in 1usize..6, m in 1usize..6, spiked in any::<bool>()) {
        let params = ModelParams::new(n, m, 0.7).unwrap();
        let r = Prior::sparse_rademacher(0.5).unwrap();
        let inst = if spiked { generate_spiked(&params, &r, &r, seed).unwrap() } else { generate_null(&params, seed) };
        let dir = tempfile::tempdir().unwrap();
        for format in [MatrixFormat::Csv, MatrixFormat::F64le] {
            let header = write_instance(&inst, &dir.path().join("x"), format).unwrap();
            prop_assert_eq!(&read_instance(&header).unwrap(), &inst);
        }
    }
}

#[test]
fn second_moment_is_identity_plus_spike() {
    let (n, m, beta) = (4, 8, 1.0);
    let params = ModelParams::new(n, m, beta).unwrap();
    let r = Prior::rademacher();
    let draws = 100_000;
    // Running sums of (YYᵀ)_ik u_i u_k / M; conditional expectation is δ_ik + β/N.
    // Diagonal at 3 SE, off-diagonal at 4 SE since there are twelve of them.
    let mut sum = vec![0.0; n * n];
    let mut sum_sq = vec![0.0; n * n];
    for seed in 0..draws {
        let inst = generate_spiked(&params, &r, &r, seed).unwrap();
        let u = &inst.planted.as_ref().unwrap().u;
        for i in 0..n {
            for k in 0..n {
                let g: f64 = inst.data.row(i).iter().zip(inst.data.row(k)).map(|(a, b)| a * b).sum::<f64>() / m as f64;
                let x = g * u[i] * u[k];
                sum[i * n + k] += x;
                sum_sq[i * n + k] += x * x;
            }
        }
    }
    let d = draws as f64;
    for i in 0..n {
        for k in 0..n {
            let mean = sum[i * n + k] / d;
            let se = ((sum_sq[i * n + k] / d - mean * mean) / d).sqrt();
            let want = if i == k { 1.0 } else { 0.0 } + beta / n as f64;
            let k_se = if i == k { 3.0 } else { 4.0 };
            assert!((mean - want).abs() < k_se * se, "({i},{k}): {mean} vs {want} (se {se})");
        }
    }
}
