mod common;

use ccfmap::cca::{canonical_correlation, Matrix};
use common::*;
use proptest::prelude::*;

#[test]
fn matches_generalized_eigen_oracle_on_random_instances() {
    let mut r = rng(2024);
    for _ in 0..20 {
        let x = gaussian(&mut r, 30, 5);
        let (y, _) = random_one_hot(&mut r, 30, 3);
        let got = canonical_correlation(&x, &y, 1e-6).unwrap();
        let oracle = gev_correlations(&x, &y, 1e-6);
        let gap = max_correlation_gap(&got.correlations, &oracle);
        assert!(
            gap < 1e-8,
            "gap {gap:e}: {:?} vs {oracle:?}",
            got.correlations
        );
    }
}

#[test]
fn projections_are_whitened() {
    let mut r = rng(5);
    let x = gaussian(&mut r, 40, 4);
    let y = gaussian(&mut r, 40, 3);
    let gamma = 1e-3;
    let res = canonical_correlation(&x, &y, gamma).unwrap();
    let (xc, _) = ccfmap::cca::center_columns(&x);
    let sxx = xc.transpose() * &xc / 39.0 + Matrix::identity(4, 4) * gamma;
    let a = &res.projections_x;
    let g = a.transpose() * sxx * a;
    let eye = Matrix::identity(g.nrows(), g.ncols());
    assert!((g - eye).amax() < 1e-6);
}

#[test]
fn continuous_targets_match_oracle_in_every_component() {
    let mut r = rng(77);
    let x = gaussian(&mut r, 50, 4);
    let y = &x.columns(0, 2) * 0.5 + gaussian(&mut r, 50, 2);
    let got = canonical_correlation(&x, &y, 0.0).unwrap();
    let oracle = gev_correlations(&x, &y, 0.0);
    assert_eq!(got.rank(), 2);
    assert!(max_correlation_gap(&got.correlations, &oracle) < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn correlations_are_sorted_and_bounded(seed in any::<u64>(), n in 3usize..25, d in 1usize..6, k in 2usize..4) {
        let mut r = rng(seed);
        let x = gaussian(&mut r, n, d);
        let (y, _) = random_one_hot(&mut r, n.max(k), k);
        let x = if x.nrows() < y.nrows() { gaussian(&mut r, y.nrows(), d) } else { x };
        let res = canonical_correlation(&x, &y, 1e-6).unwrap();
        prop_assert!(res.rank() >= 1);
        prop_assert!(res.rank() <= d.min(k).min(x.nrows() - 1));
        for w in res.correlations.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for &c in &res.correlations {
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&c));
        }
    }

    #[test]
    fn oracle_agreement_when_well_determined(seed in any::<u64>(), d in 1usize..5, k in 2usize..4) {
        let mut r = rng(seed);
        let n = d + k + 2 + r.gen_range(0..20usize);
        let x = gaussian(&mut r, n, d);
        let (y, _) = random_one_hot(&mut r, n, k);
        let res = canonical_correlation(&x, &y, 1e-6).unwrap();
        let oracle = gev_correlations(&x, &y, 1e-6);
        prop_assert!(max_correlation_gap(&res.correlations, &oracle) < 1e-8);
    }

    #[test]
    fn rank_deficient_input_with_ridge_is_finite(seed in any::<u64>()) {
        let mut r = rng(seed);
        let base = gaussian(&mut r, 12, 3);
        let x = Matrix::from_fn(12, 4, |i, j| base[(i, j.min(2))]);
        let (y, _) = random_one_hot(&mut r, 12, 3);
        let res = canonical_correlation(&x, &y, 1e-6).unwrap();
        prop_assert!(res.projections_x.iter().all(|v| v.is_finite()));
        prop_assert!(res.projections_y.iter().all(|v| v.is_finite()));
    }
}

use rand::Rng;
