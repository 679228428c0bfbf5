//! Property tests: invariants that must hold for arbitrary valid inputs, not
//! just the worked examples.

use proptest::prelude::*;

use covimpute::identify::{build_identified_joint, check_identification, Restriction};
use covimpute::impute::{mean_impute, mi_design_stage, regression_impute};
use covimpute::infer::rubin_combine;
use covimpute::rng::derive_stream;
use covimpute::types::{validate_dataset, CompletedDataset, Dataset, Stratification, Unit};

fn arb_unit() -> impl Strategy<Value = Unit> {
    (
        0u8..2,
        0u8..2,
        prop_oneof![Just(None), (0u8..2).prop_map(Some)],
        prop_oneof![Just(None), (0u8..2).prop_map(Some)],
    )
        .prop_map(|(t, y, x1, x2)| Unit::new(t, y, x1, x2))
}

/// Random dataset with a guaranteed block of complete cases spanning every
/// (x1, x2) cell in both arms and outcomes, so fits and margins usually
/// exist; the random tail adds missingness patterns.
fn arb_dataset() -> impl Strategy<Value = Dataset> {
    proptest::collection::vec(arb_unit(), 5..60).prop_map(|tail| {
        let mut units = Vec::new();
        for t in 0..2u8 {
            for y in 0..2u8 {
                for x1 in 0..2u8 {
                    for x2 in 0..2u8 {
                        units.push(Unit::new(t, y, Some(x1), Some(x2)));
                        if (x1 + x2) % 2 == 0 {
                            units.push(Unit::new(t, y, Some(x1), Some(x2)));
                        }
                    }
                }
            }
        }
        units.extend(tail);
        validate_dataset(units).unwrap()
    })
}

/// Observed entries and design variables survive any completed dataset.
fn assert_preserves(data: &Dataset, completed: &CompletedDataset, binary_only: bool) {
    assert_eq!(data.n(), completed.n());
    for (i, (u, c)) in data.units().iter().zip(completed.units()).enumerate() {
        assert_eq!(u.t, c.t);
        assert_eq!(u.y, c.y);
        match u.x1 {
            Some(v) => {
                assert_eq!(c.x1, v as f64);
                assert!(!completed.x1_imputed(i));
            }
            None => {
                assert!(completed.x1_imputed(i));
                assert!((0.0..=1.0).contains(&c.x1));
                if binary_only {
                    assert!(c.x1 == 0.0 || c.x1 == 1.0);
                }
            }
        }
        match u.x2 {
            Some(v) => {
                assert_eq!(c.x2, v as f64);
                assert!(!completed.x2_imputed(i));
            }
            None => {
                assert!(completed.x2_imputed(i));
                assert!((0.0..=1.0).contains(&c.x2));
                if binary_only {
                    assert!(c.x2 == 0.0 || c.x2 == 1.0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn imputation_methods_preserve_observed_entries(data in arb_dataset(), seed in 0u64..1000) {
        let mut stream = derive_stream(seed, 0);
        for strat in [Stratification::Pooled, Stratification::ByArm, Stratification::ByArmOutcome] {
            for restriction in [Restriction::Icin, Restriction::Mar] {
                if let Ok(sets) = mi_design_stage(&data, restriction, strat, 2, &mut stream) {
                    for c in &sets {
                        assert_preserves(&data, c, true);
                    }
                }
            }
            if let Ok(c) = mean_impute(&data, strat) {
                assert_preserves(&data, &c, false);
            }
            if let Ok(c) = regression_impute(&data, strat, &mut stream) {
                assert_preserves(&data, &c, true);
            }
        }
    }

    #[test]
    fn identification_round_trip_holds_for_random_tables(weights in proptest::collection::vec(1e-3f64..1.0, 9)) {
        let total: f64 = weights.iter().sum();
        let p: [f64; 9] = std::array::from_fn(|i| weights[i] / total);
        let theta = covimpute::types::ObservedProbs::new(p).unwrap();
        for restriction in [Restriction::Icin, Restriction::Mar] {
            let joint = build_identified_joint(&theta, restriction).unwrap();
            let report = check_identification(&joint);
            prop_assert!(report.max_marginalization_error <= 1e-12);
            prop_assert!(report.max_restriction_error <= 1e-10);
            prop_assert_eq!(report.undefined_cells, 0);
        }
    }

    #[test]
    fn pooled_variance_dominates_within_variance(
        estimates in proptest::collection::vec(-5.0f64..5.0, 3..20),
        variance in 1e-6f64..4.0,
    ) {
        let variances = vec![variance; estimates.len()];
        let pooled = rubin_combine(&estimates, &variances, 0.95).unwrap();
        prop_assert!(pooled.t_var >= pooled.w - 1e-15);
        prop_assert!(pooled.ci.0 <= pooled.qbar && pooled.qbar <= pooled.ci.1);
        // widening the spread of estimates widens the interval
        let spread: Vec<f64> = estimates.iter().map(|e| pooled.qbar + 2.0 * (e - pooled.qbar)).collect();
        let wider = rubin_combine(&spread, &variances, 0.95).unwrap();
        if pooled.b > 0.0 {
            prop_assert!(wider.ci.1 - wider.ci.0 > pooled.ci.1 - pooled.ci.0);
        }
    }
}
