use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use spikelab::model::{generate_null, ModelParams};
use spikelab::spectral::{power_iteration, small_gram, top_singular_value_sq, POWER_MAX_ITER, POWER_TOL};

fn dense_top(y: &spikelab::model::Matrix) -> f64 {
    let a = DMatrix::from_row_slice(y.rows(), y.cols(), y.as_slice());
    SymmetricEigen::new(&a * a.transpose()).eigenvalues.max()
}

#[test]
fn matches_dense_eigensolver() {
    for seed in 0..10 {
        let y = generate_null(&ModelParams::new(50, 50, 0.0).unwrap(), seed).data;
        let (got, want) = (top_singular_value_sq(&y), dense_top(&y));
        assert!((got - want).abs() <= 1e-8 * want, "seed {seed}: {got} vs {want}");
    }
    let tall = generate_null(&ModelParams::new(40, 15, 0.0).unwrap(), 3).data;
    assert!((top_singular_value_sq(&tall) - dense_top(&tall)).abs() <= 1e-8 * dense_top(&tall));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scales_quadratically(seed in any::<u64>(), c in -5.0f64..5.0, n in 2usize..20, m in 2usize..20) {
        let y = generate_null(&ModelParams::new(n, m, 0.0).unwrap(), seed).data;
        let a = top_singular_value_sq(&y);
        let b = top_singular_value_sq(&y.scaled(c));
        prop_assert!((b - c * c * a).abs() <= 1e-8 * (1.0 + c * c * a));
    }

    #[test]
    fn rayleigh_quotients_never_decrease(seed in any::<u64>(), n in 2usize..30) {
        let y = generate_null(&ModelParams::new(n, n + 3, 0.0).unwrap(), seed).data;
        let t = power_iteration(&small_gram(&y), POWER_TOL, POWER_MAX_ITER, true);
        for w in t.history.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
    }
}
