mod support;

use proptest::prelude::*;
use scip_core::features::{cov_sequence, cov_sequence_from_iats};
use support::invariants::{close, cov_affine_invariance, naive_cov};

fn trace() -> impl Strategy<Value = Vec<f64>> {
    (1e-3f64..1.0, prop::collection::vec(0.05f64..3.0, 2..60)).prop_map(|(p, xs)| {
        let mut t = 0.0;
        let mut out = vec![0.0];
        for x in xs {
            t += p * x;
            out.push(t);
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cov_is_scale_and_shift_free(t in trace(), k in 1e-4f64..1e4, b in -1e3f64..1e3) {
        cov_affine_invariance(&t, k, b).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn matches_two_pass_oracle(t in trace()) {
        let got = cov_sequence(&t).unwrap();
        close(got.values(), &naive_cov(&t), 1e-10).map_err(TestCaseError::fail)?;
        let iats: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        prop_assert_eq!(cov_sequence_from_iats(&iats).unwrap(), got);
    }
}

#[test]
fn tiny_spread_on_large_period_keeps_precision() {
    // second-scale IATs jittered by nanoseconds
    let iats: Vec<f64> = (0..40).map(|i| 2.0 + if i % 2 == 0 { 1e-9 } else { -1e-9 }).collect();
    let cov = cov_sequence_from_iats(&iats).unwrap();
    let last = *cov.values().last().unwrap();
    assert!((last - 5e-10).abs() < 1e-15, "{last}");
}
