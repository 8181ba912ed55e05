mod support;

use proptest::prelude::*;
use scip_core::descriptor::{
    deviation_profile_with, extract_descriptor, extract_descriptor_with, window_bound, DeviationRange,
};
use scip_core::seed::mix;

use support::grid::*;
use support::invariants::descriptor_scale_covariance;

const GRID_POINTS: usize = 1_000_000;

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

#[test]
fn pair_pattern_matches_grid() {
    let t = [0.0, 1.0, 10.0, 11.0, 20.0, 21.0];
    let p = deviation_profile_with(&t, DeviationRange::Trimmed).unwrap();
    let e = p.get(1).unwrap();
    let grid = grid_deviation(&t, 1, e.window, 21.0 - e.window, GRID_POINTS);
    assert!(rel_err(e.deviation.unwrap(), grid) <= 1e-9, "{:?} vs {grid}", e.deviation);
}

#[test]
fn exact_sweep_matches_grid_on_random_lattice_traces() {
    let mut checked = 0;
    for case in 0..200u64 {
        let n = 4 + (mix(case) % 9) as usize;
        let t = lattice_trace(0xD0E5 ^ case, n, 12);
        let last = t[n - 1];
        for range in [DeviationRange::Trimmed, DeviationRange::Observed] {
            let profile = deviation_profile_with(&t, range).unwrap();
            for e in &profile.entries {
                assert_eq!(e.window, naive_window(&t, e.m));
                let Some(d) = e.deviation else {
                    assert!(last - e.window <= t[0], "case {case}: m={} skipped", e.m);
                    continue;
                };
                let end = match range {
                    DeviationRange::Trimmed => last - e.window,
                    DeviationRange::Observed => last,
                };
                let grid = grid_deviation(&t, e.m, e.window, end, GRID_POINTS);
                assert!(
                    rel_err(d, grid) <= 1e-6,
                    "case {case} {range:?} m={}: exact {d} grid {grid} on {t:?}",
                    e.m
                );
                checked += 1;
            }
        }
        let (desc, _) = extract_descriptor(&t, &[100]).unwrap();
        assert!(naive_max_occupancy(&t, desc.interval) <= desc.max_frames, "case {case}: {t:?}");
    }
    assert!(checked > 400);
}

#[test]
fn tightest_window_is_filled_somewhere() {
    for case in 0..200u64 {
        let n = 4 + (mix(!case) % 9) as usize;
        let t = lattice_trace(0x7167 ^ case, n, 9);
        for m in 1..n / 2 {
            let w = window_bound(&t, m).unwrap();
            let end = t[n - 1] - w;
            if end > t[0] {
                assert_eq!(grid_max_occupancy(&t, w, end, 10_000), m, "{t:?} m={m}");
            }
        }
    }
}

#[test]
fn pure_periodic_picks_one() {
    let t: Vec<f64> = (0..36).map(|i| 0.013 * i as f64).collect();
    let (d, _) = extract_descriptor(&t, &[64; 36]).unwrap();
    assert_eq!(d.max_frames, 1);
    assert!((d.interval - 0.013).abs() < 1e-12);
}

fn real_trace() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..5.0, 3..40).prop_map(|gaps| {
        let mut t = vec![0.0];
        for g in gaps {
            let next = t[t.len() - 1] + g;
            t.push(next);
        }
        t
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn emitted_descriptor_conforms_and_is_tight(t in real_trace(), observed in any::<bool>()) {
        let range = if observed { DeviationRange::Observed } else { DeviationRange::Trimmed };
        let Ok((d, _)) = extract_descriptor_with(&t, &[1500], range) else { return Ok(()) };
        prop_assert!(d.conforms(&t));
        prop_assert!(naive_max_occupancy(&t, d.interval) <= d.max_frames);
        // any longer window admits one more frame
        prop_assert!(naive_max_occupancy(&t, d.interval * (1.0 + 1e-9)) > d.max_frames);
    }

    #[test]
    fn power_of_two_scaling_is_exact(t in real_trace(), e in -20i32..20) {
        let k = 2f64.powi(e);
        let scaled: Vec<f64> = t.iter().map(|x| x * k).collect();
        let a = extract_descriptor(&t, &[100]);
        let b = extract_descriptor(&scaled, &[100]);
        match (a, b) {
            (Ok((da, pa)), Ok((db, pb))) => {
                prop_assert_eq!(da.max_frames, db.max_frames);
                prop_assert_eq!(db.interval, da.interval * k);
                for (x, y) in pa.entries.iter().zip(&pb.entries) {
                    prop_assert_eq!(x.deviation, y.deviation);
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "scaling changed success"),
        }
    }

    #[test]
    fn arbitrary_scaling_preserves_profile(t in real_trace(), k in 1e-6f64..1e6) {
        descriptor_scale_covariance(&t, k).map_err(TestCaseError::fail)?;
    }
}
