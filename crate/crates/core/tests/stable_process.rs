use proptest::prelude::*;
use superproc::stable_process::{empirical_laplace, sample_path, sample_replicate, PathConfig};
use superproc::stats::ks_two_sample;

/// `L_{ct}` and `c^{1/κ} L_t` share a law.
#[test]
fn self_similarity() {
    let kappa = 1.5;
    let short = PathConfig::new(kappa, 1.0, 1e-3, 1e-3).unwrap();
    let long = PathConfig::new(kappa, 4.0, 1e-3, 1e-3).unwrap();
    let c: f64 = 4.0;
    let a: Vec<f64> = (0..2000)
        .map(|r| sample_replicate(&long, 11, r).value_at(4.0).unwrap())
        .collect();
    let b: Vec<f64> = (0..2000)
        .map(|r| c.powf(1.0 / kappa) * sample_replicate(&short, 12, r).value_at(1.0).unwrap())
        .collect();
    let ks = ks_two_sample(&a, &b);
    assert!(ks.p_value > 0.05, "{ks:?}");
}

#[test]
fn laplace_transform_small_sample() {
    let cfg = PathConfig::new(1.5, 1.0, 1e-3, 1e-3).unwrap();
    let paths: Vec<_> = (0..4000).map(|r| sample_replicate(&cfg, 3, r)).collect();
    let e = empirical_laplace(&paths, 1.0, 1.0).unwrap();
    let target = 1f64.exp();
    assert!((e.estimate - target).abs() <= 3.0 * e.std_err, "{e:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn jumps_are_positive_and_above_truncation(kappa in 1.05f64..1.95, seed in any::<u64>()) {
        let cfg = PathConfig::new(kappa, 1.0, 1e-2, 1e-2).unwrap();
        let path = sample_path(&cfg, seed).unwrap();
        prop_assert_eq!(path.values[0], 0.0);
        for j in &path.jumps {
            prop_assert!(j.size > cfg.truncation);
        }
    }
}
