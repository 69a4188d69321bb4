use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ral_lab::loss::TargetBatch;
use ral_lab::metrics::{average_precision, roc_auc};
use ral_lab::{evaluate, LabelMode, Matrix};

/// Position of `i` in a stable descending order, computed by counting.
fn rank_of(scores: &[f64], i: usize) -> usize {
    (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i))
        .count()
}

fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut positives: Vec<(usize, usize)> = (0..scores.len())
        .filter(|&i| labels[i])
        .map(|i| (rank_of(scores, i), i))
        .collect();
    positives.sort();
    let mut sum = 0.0;
    for &(rank, _) in &positives {
        let hits = positives.iter().filter(|&&(r, _)| r <= rank).count();
        sum += hits as f64 / rank as f64;
    }
    sum / positives.len() as f64
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counted ½.
fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut credit = 0.0;
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        for j in (0..scores.len()).filter(|&j| !labels[j]) {
            if scores[i] > scores[j] {
                credit += 1.0;
            } else if scores[i] == scores[j] {
                credit += 0.5;
            }
        }
    }
    credit / (p as f64 * n as f64)
}

/// Scores on a coarse grid so that ties are frequent.
fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let b = rng.random_range(2..=8);
    let levels = rng.random_range(2..=6);
    let scores = (0..b)
        .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
        .collect();
    let labels = (0..b).map(|_| rng.random_bool(0.4)).collect();
    (scores, labels)
}

#[test]
fn ap_and_auc_equal_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut n_ap, mut n_auc) = (0, 0);
    for _ in 0..1000 {
        let (s, y) = random_instance(&mut rng);
        let pos = y.iter().filter(|&&l| l).count();
        if pos > 0 {
            assert_eq!(
                average_precision(&s, &y).unwrap().to_bits(),
                brute_ap(&s, &y).to_bits(),
                "{s:?} {y:?}"
            );
            n_ap += 1;
        }
        if pos > 0 && pos < y.len() {
            assert_eq!(
                roc_auc(&s, &y).unwrap().to_bits(),
                brute_auc(&s, &y).to_bits(),
                "{s:?} {y:?}"
            );
            n_auc += 1;
        }
    }
    assert!(n_ap > 800 && n_auc > 700, "{n_ap} {n_auc}");
}

#[test]
fn macro_means_skip_invalid_classes() {
    // Class 2 has no positives, class 3 no negatives.
    let targets = Matrix::from_rows(&[
        vec![1.0, 0.0, 0.0, 1.0],
        vec![0.0, 1.0, 0.0, 1.0],
        vec![1.0, 1.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap();
    let probs = Matrix::from_rows(&[
        vec![0.9, 0.2, 0.1, 0.7],
        vec![0.3, 0.6, 0.4, 0.8],
        vec![0.6, 0.1, 0.3, 0.2],
        vec![0.7, 0.5, 0.2, 0.9],
    ])
    .unwrap();
    let t = TargetBatch::new(targets.clone()).unwrap();
    let r = evaluate(&probs, &t, LabelMode::Multilabel).unwrap();
    assert_eq!(r.valid_class_mask, vec![true, true, false, false]);
    let labels = |c: usize| {
        targets
            .column(c)
            .iter()
            .map(|&v| v == 1.0)
            .collect::<Vec<_>>()
    };
    let ap0 = brute_ap(&probs.column(0), &labels(0));
    let ap1 = brute_ap(&probs.column(1), &labels(1));
    assert!((r.map - (ap0 + ap1) / 2.0).abs() < 1e-15);
    let auc0 = brute_auc(&probs.column(0), &labels(0));
    let auc1 = brute_auc(&probs.column(1), &labels(1));
    assert!((r.mauc - (auc0 + auc1) / 2.0).abs() < 1e-15);
    // Class 0 ranks: pos, neg, pos, neg.
    assert!((ap0 - 5.0 / 6.0).abs() < 1e-15);
}

#[test]
fn perfect_scores_give_unit_metrics() {
    let targets = Matrix::from_rows(&[
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
    ])
    .unwrap();
    let r = evaluate(
        &targets,
        &TargetBatch::new(targets.clone()).unwrap(),
        LabelMode::Multilabel,
    )
    .unwrap();
    assert_eq!((r.map, r.mauc, r.mf1), (1.0, 1.0, 1.0));
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(prop::bool::ANY, n),
        )
    })
}

proptest! {
    #[test]
    fn strictly_monotone_maps_preserve_ap_and_auc((s, y) in instance()) {
        let pos = y.iter().filter(|&&l| l).count();
        prop_assume!(pos > 0 && pos < y.len());
        let t: Vec<f64> = s.iter().map(|&v| 3.0 * v.exp() + 1.0).collect();
        prop_assert_eq!(average_precision(&s, &y).unwrap(), average_precision(&t, &y).unwrap());
        prop_assert_eq!(roc_auc(&s, &y).unwrap(), roc_auc(&t, &y).unwrap());
    }

    #[test]
    fn reversing_labels_mirrors_auc((s, y) in instance()) {
        let pos = y.iter().filter(|&&l| l).count();
        prop_assume!(pos > 0 && pos < y.len());
        let flipped: Vec<bool> = y.iter().map(|&l| !l).collect();
        let a = roc_auc(&s, &y).unwrap();
        let b = roc_auc(&s, &flipped).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_lie_in_unit_interval((s, y) in instance()) {
        let pos = y.iter().filter(|&&l| l).count();
        prop_assume!(pos > 0 && pos < y.len());
        let ap = average_precision(&s, &y).unwrap();
        let auc = roc_auc(&s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap) && (0.0..=1.0).contains(&auc));
    }
}
