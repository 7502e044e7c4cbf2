mod common;

use common::{brute_metrics, rng};
use rand::Rng;
use tdanet::metrics::{accuracy, f1, overall_accuracy, precision, recall, ConfusionMatrix};

#[test]
fn random_matrices_match_per_sample_tallies() {
    let mut r = rng(5);
    for _ in 0..100 {
        let n = r.random_range(2..=10);
        let samples = r.random_range(1..400);
        let mut pairs = Vec::with_capacity(samples);
        let mut cm = ConfusionMatrix::new(n).unwrap();
        for _ in 0..samples {
            let t = r.random_range(0..n);
            // Bias towards the diagonal so precision/recall vary.
            let p = if r.random_bool(0.6) {
                t
            } else {
                r.random_range(0..n)
            };
            pairs.push((t, p));
            cm.update(t, p).unwrap();
        }
        let expected = brute_metrics(&pairs, n);
        let got = [
            accuracy(&cm),
            overall_accuracy(&cm),
            precision(&cm),
            recall(&cm),
            f1(&cm),
        ];
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
        let ovr = cm.ovr_counts();
        for c in 0..n {
            assert_eq!(
                ovr.tp[c] + ovr.fp[c] + ovr.fn_[c] + ovr.tn[c],
                samples as u64
            );
        }
    }
}

#[test]
fn classes_never_predicted_are_excluded_from_precision() {
    let cm = ConfusionMatrix::from_counts(&[vec![5, 0, 0], vec![3, 2, 0], vec![1, 1, 0]]).unwrap();
    let report = cm.report();
    assert_eq!(report.excluded_precision, 1);
    assert_eq!(report.excluded_recall, 0);
    let expected = (5.0 / 9.0 + 2.0 / 3.0) / 2.0;
    assert!((report.precision - expected).abs() < 1e-15);
}

#[test]
fn merge_equals_combined_updates() {
    let mut a = ConfusionMatrix::new(3).unwrap();
    let mut b = ConfusionMatrix::new(3).unwrap();
    let mut all = ConfusionMatrix::new(3).unwrap();
    for (i, (t, p)) in [(0, 0), (1, 2), (2, 2), (1, 1), (0, 2)]
        .into_iter()
        .enumerate()
    {
        if i % 2 == 0 {
            a.update(t, p).unwrap()
        } else {
            b.update(t, p).unwrap()
        }
        all.update(t, p).unwrap();
    }
    a.merge(&b).unwrap();
    assert_eq!(a, all);
}
