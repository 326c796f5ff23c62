mod common;

use common::{brute_ap, brute_best_dice, brute_dice_at};
use cyclesem_core::dataio::LesionMask;
use cyclesem_core::metrics::{auprc, best_dice, dice_at, pool_scores, EvalReport, ScoredPixels};
use cyclesem_core::Error;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..400, 0u32..4).prop_flat_map(|(n, levels)| {
        let score = match levels {
            0 => (0.0f64..1.0).boxed(),
            l => (0u32..(l * 3)).prop_map(move |k| k as f64 / (l * 3) as f64).boxed(),
        };
        (prop::collection::vec(score, n), prop::collection::vec(any::<bool>(), n))
    })
    .prop_map(|(s, mut l)| {
        let n = l.len();
        l[0] = true;
        l[n - 1] = false;
        (s, l)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auprc_matches_enumeration((scores, labels) in instance()) {
        let sp = ScoredPixels::new(scores.clone(), labels.clone()).unwrap();
        prop_assert!((auprc(&sp).unwrap() - brute_ap(&scores, &labels)).abs() < 1e-9);
    }

    #[test]
    fn best_dice_matches_enumeration((scores, labels) in instance()) {
        let sp = ScoredPixels::new(scores.clone(), labels.clone()).unwrap();
        let (d, t) = best_dice(&sp).unwrap();
        let (od, ot) = brute_best_dice(&scores, &labels);
        prop_assert!((d - od).abs() < 1e-9);
        prop_assert_eq!(t, ot);
    }

    #[test]
    fn metrics_are_invariant_to_increasing_maps((scores, labels) in instance(), a in 0.1f64..5.0, b in -2.0f64..2.0) {
        let sp = ScoredPixels::new(scores.clone(), labels.clone()).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
        let wp = ScoredPixels::new(warped, labels).unwrap();
        prop_assert!((auprc(&sp).unwrap() - auprc(&wp).unwrap()).abs() < 1e-12);
        prop_assert!((best_dice(&sp).unwrap().0 - best_dice(&wp).unwrap().0).abs() < 1e-12);
    }

    #[test]
    fn best_dice_dominates_random_thresholds((scores, labels) in instance(), ts in prop::collection::vec(-0.5f64..1.5, 100)) {
        let sp = ScoredPixels::new(scores.clone(), labels.clone()).unwrap();
        let (best, _) = best_dice(&sp).unwrap();
        for t in ts {
            prop_assert!(best >= dice_at(&sp, t) - 1e-12);
            prop_assert!((dice_at(&sp, t) - brute_dice_at(&scores, &labels, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn best_dice_at_least_predict_everything((scores, labels) in instance()) {
        let sp = ScoredPixels::new(scores, labels).unwrap();
        let p = sp.positives() as f64;
        let n = sp.len() as f64;
        prop_assert!(best_dice(&sp).unwrap().0 >= 2.0 * p / (p + n) - 1e-12);
    }
}

#[test]
fn worked_examples() {
    let sp = ScoredPixels::new(vec![0.9, 0.8, 0.7, 0.6], vec![true, false, true, false]).unwrap();
    assert!((auprc(&sp).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(best_dice(&sp).unwrap(), (0.8, 0.7));
    let equal = ScoredPixels::new(vec![0.3; 10], (0..10).map(|i| i < 3).collect()).unwrap();
    assert!((auprc(&equal).unwrap() - 0.3).abs() < 1e-12);
    let perfect = ScoredPixels::new(vec![0.1, 0.2, 0.8, 0.9], vec![false, false, true, true]).unwrap();
    assert_eq!(auprc(&perfect).unwrap(), 1.0);
    assert_eq!(best_dice(&perfect).unwrap().0, 1.0);
}

#[test]
fn single_class_is_undefined() {
    let sp = ScoredPixels::new(vec![0.1, 0.2], vec![false, false]).unwrap();
    assert!(matches!(auprc(&sp), Err(Error::UndefinedMetric(_))));
    assert!(matches!(best_dice(&sp), Err(Error::UndefinedMetric(_))));
}

#[test]
fn large_pools_use_quantile_thresholds() {
    // 30,001 scores put the 90% quantile exactly on the first positive.
    let n = 30_001;
    let scores: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let labels: Vec<bool> = (0..n).map(|i| i >= 27_000).collect();
    let (d, t) = best_dice(&ScoredPixels::new(scores, labels).unwrap()).unwrap();
    assert!((d - 1.0).abs() < 1e-9);
    assert!((t - 0.9).abs() < 1e-3);
}

#[test]
fn pooling_is_ordered_and_keeps_healthy_slices() {
    let a = [0.1f32, 0.2, 0.3, 0.4];
    let b = [0.5f32, 0.6, 0.7, 0.8];
    let ma = LesionMask::empty(2);
    let mb = LesionMask::new(2, vec![false, true, false, false]).unwrap();
    let sp = pool_scores("test", [("a", &a[..], Some(&ma)), ("b", &b[..], Some(&mb))]).unwrap();
    assert_eq!(sp.len(), 8);
    assert_eq!(sp.scores[4], 0.5f32 as f64);
    assert_eq!(sp.labels.iter().filter(|&&l| l).count(), 1);
    assert_eq!(sp.slice_ids, ["a", "b"]);
    let again = pool_scores("test", [("a", &a[..], Some(&ma)), ("b", &b[..], Some(&mb))]).unwrap();
    assert_eq!(sp, again);

    let healthy = pool_scores("test", [("a", &a[..], Some(&ma))]).unwrap();
    assert!(auprc(&healthy).is_err());
    assert!(matches!(pool_scores("test", [("a", &a[..], None)]), Err(Error::MissingMask(_))));
}

#[test]
fn report_csv_row_follows_header() {
    let sp = ScoredPixels::new(vec![0.9, 0.8, 0.7, 0.6], vec![true, false, true, false]).unwrap();
    let r = EvalReport::evaluate("ae", &sp, "abc").unwrap();
    assert_eq!(EvalReport::CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}
