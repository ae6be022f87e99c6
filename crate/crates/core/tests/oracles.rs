mod common;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use factorclust::panel::{lag_autocov, TimeSeriesPanel};

#[test]
fn integer_panels_match_double_loop_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = rng.gen_range(2..7);
        let n = rng.gen_range(4..25);
        let y = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-9..10) as f64);
        let panel = TimeSeriesPanel::new(y.clone()).unwrap();
        for k in 0..n {
            let got = lag_autocov(&panel, k).unwrap().matrix;
            assert!(common::max_abs_diff(&got, &common::lag_autocov_oracle(&y, k)) < 1e-12);
        }
    }
}

#[test]
fn oracle_bundle_on_twenty_seeds() {
    for seed in 0..20 {
        if let Err(e) = common::oracle_checks(seed) {
            panic!("seed {seed}: {e}");
        }
    }
}
