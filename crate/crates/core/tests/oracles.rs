use fedcgm_core::verification::{
    check_conditional_unbiasedness, enumerate_subset_mean, random_instance, sag_counterexample, UnbiasednessTarget,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn subset_deviation_identity(
        vectors in (2usize..=8).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), n)),
    ) {
        for m in 1..=vectors.len() {
            let mo = enumerate_subset_mean(&vectors, m).unwrap();
            if mo.formula == 0.0 {
                prop_assert!(mo.deviation < 1e-20);
            } else {
                prop_assert!((mo.deviation - mo.formula).abs() <= 1e-12 * mo.formula);
            }
        }
    }
}

#[test]
fn all_estimators_unbiased_on_small_instances() {
    for n in 4..=8 {
        let problem = random_instance(n, 3, 100 + n as u64).unwrap();
        for m in 1..n {
            for target in [UnbiasednessTarget::Saga, UnbiasednessTarget::Svrg, UnbiasednessTarget::RgSaga, UnbiasednessTarget::RgSvrg]
            {
                let r = check_conditional_unbiasedness(target, &problem, m, 7).unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
    }
}

#[test]
fn sag_negative_control() {
    let reports = sag_counterexample().unwrap();
    let biased = reports.iter().find(|r| r.name == "sag/biased").unwrap();
    assert!(biased.pass, "{biased:?}");
    assert!(biased.observed > 1e-3);
}
