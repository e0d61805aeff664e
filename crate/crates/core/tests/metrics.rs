use dcrnn_core::trainer::{binary_auc, metrics, roc_auc, ConfusionCounts};
use dcrnn_core::SeededRng;
use proptest::prelude::*;

fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn pick(rng: &mut SeededRng, n: usize) -> usize {
    (rng.uniform(0.0, n as f64) as usize).min(n - 1)
}

#[test]
fn counts_and_metrics_match_recount() {
    let mut rng = SeededRng::new(8);
    for trial in 0..200 {
        let classes = 2 + trial % 4;
        let n = 1 + pick(&mut rng, 60);
        let labels: Vec<usize> = (0..n).map(|_| pick(&mut rng, classes)).collect();
        let predicted: Vec<usize> = (0..n).map(|_| pick(&mut rng, classes)).collect();
        let counts = ConfusionCounts::from_predictions(&labels, &predicted, classes).unwrap();
        let m = metrics(&counts);
        assert_eq!(counts.samples, n as u64);
        let correct = labels
            .iter()
            .zip(&predicted)
            .filter(|(a, b)| a == b)
            .count();
        assert_eq!(m.accuracy, Some(correct as f64 / n as f64));
        for c in 0..classes {
            let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
            for (&y, &p) in labels.iter().zip(&predicted) {
                match (y == c, p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (false, false) => tn += 1,
                    (true, false) => fn_ += 1,
                }
            }
            let k = &counts.per_class[c];
            assert_eq!((k.tp, k.fp, k.tn, k.fn_), (tp, fp, tn, fn_));
            let div = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
            let cm = &m.per_class[c];
            assert_eq!(cm.sensitivity, div(tp, tp + fn_));
            assert_eq!(cm.specificity, div(tn, tn + fp));
            assert_eq!(cm.accuracy, div(tp + tn, n as u64));
            assert_eq!(cm.f1, div(2 * tp, 2 * tp + fp + fn_));
        }
    }
}

#[test]
fn auc_matches_pairwise_oracle() {
    let mut rng = SeededRng::new(99);
    for trial in 0..100 {
        let n = 2 + pick(&mut rng, 80);
        // coarse rounding on some trials to force ties
        let grain = if trial % 3 == 0 { 10.0 } else { 1e9 };
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.uniform(0.0, 1.0) * grain).round() / grain)
            .collect();
        let mut positive: Vec<bool> = (0..n).map(|_| rng.uniform(0.0, 1.0) < 0.4).collect();
        positive[0] = true;
        positive[1] = false;
        let got = binary_auc(&scores, &positive).unwrap();
        let want = pairwise_auc(&scores, &positive);
        assert!(
            (got - want).abs() <= 1e-12,
            "trial {trial}: {got} vs {want}"
        );
    }
}

#[test]
fn auc_undefined_for_single_class() {
    assert_eq!(binary_auc(&[0.1, 0.9], &[true, true]), None);
    let scores = vec![vec![0.2, 0.8], vec![0.6, 0.4]];
    assert!(roc_auc(&scores, &[0, 0], 2).is_err());
    assert_eq!(roc_auc(&scores, &[1, 0], 2).unwrap(), vec![1.0, 1.0]);
}

proptest! {
    #[test]
    fn auc_is_invariant_to_monotone_rescaling(
        raw in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..50)
    ) {
        let (scores, positive): (Vec<f64>, Vec<bool>) = raw.into_iter().unzip();
        let a = binary_auc(&scores, &positive);
        let scaled: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
        prop_assert_eq!(a, binary_auc(&scaled, &positive));
        if let Some(a) = a {
            let flipped: Vec<bool> = positive.iter().map(|p| !p).collect();
            let b = binary_auc(&scores, &flipped).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}
