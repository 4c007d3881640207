use proptest::collection::vec;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codeseg::corpus::{fleiss_kappa, majority_vote, Vote};
use codeseg::eval::{confusion, metrics};
use codeseg::Label;

fn any_label() -> impl Strategy<Value = Label> {
    (0..8usize).prop_map(|i| Label::ALL[i])
}

fn gold_label() -> impl Strategy<Value = Label> {
    (0..7usize).prop_map(|i| Label::CLASSES[i])
}

proptest! {
    #[test]
    fn metrics_invariant_under_pair_permutation(
        pairs in vec((gold_label(), any_label()), 1..150),
        seed in any::<u64>(),
    ) {
        let (gold, pred): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (g2, p2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        let a = metrics(&confusion(&gold, &pred).unwrap()).unwrap();
        let b = metrics(&confusion(&g2, &p2).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn metrics_stay_in_unit_interval(pairs in vec((gold_label(), any_label()), 1..150)) {
        let (gold, pred): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let m = metrics(&confusion(&gold, &pred).unwrap()).unwrap();
        for v in [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1, m.micro_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let total: usize = confusion(&gold, &pred).unwrap().total();
        prop_assert_eq!(total, gold.len());
    }

    #[test]
    fn kappa_invariant_under_item_and_category_permutation(
        rows in vec(vec(0..4usize, 3), 2..30),
        seed in any::<u64>(),
    ) {
        // rows of three category picks each, turned into count rows
        let matrix: Vec<Vec<usize>> = rows
            .iter()
            .map(|picks| {
                let mut row = vec![0; 4];
                for &p in picks {
                    row[p] += 1;
                }
                row
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items = matrix.clone();
        items.shuffle(&mut rng);
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut rng);
        let relabeled: Vec<Vec<usize>> = items
            .iter()
            .map(|row| perm.iter().map(|&j| row[j]).collect())
            .collect();
        let a = fleiss_kappa(&matrix).unwrap();
        let b = fleiss_kappa(&relabeled).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a <= 1.0 + 1e-12);
    }

    #[test]
    fn majority_vote_ignores_annotator_order(
        labels in vec(gold_label(), 3..8),
        seed in any::<u64>(),
    ) {
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = majority_vote(&labels).unwrap();
        prop_assert_eq!(&a, &majority_vote(&shuffled).unwrap());
        if let Vote::Majority(l) = a {
            prop_assert!(labels.iter().filter(|x| **x == l).count() * 2 > labels.len());
        }
    }
}

#[test]
fn uniform_random_predictor_macro_f1() {
    // k balanced classes, uniform guesses: every class has P = R = F1 = 1/k
    let k = Label::CLASSES.len();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let gold: Vec<Label> = (0..n).map(|i| Label::CLASSES[i % k]).collect();
    let pred: Vec<Label> = (0..n).map(|_| Label::CLASSES[rng.gen_range(0..k)]).collect();
    let m = metrics(&confusion(&gold, &pred).unwrap()).unwrap();
    assert!((m.macro_f1 - 1.0 / k as f64).abs() < 0.02, "macro F1 {}", m.macro_f1);
    assert!((m.accuracy - 1.0 / k as f64).abs() < 0.02);
}

#[test]
fn majority_vote_examples() {
    use Label::*;
    assert_eq!(majority_vote(&[Comment, Comment, Analysis]).unwrap(), Vote::Majority(Comment));
    assert_eq!(majority_vote(&[Comment, Analysis, Visualization]).unwrap(), Vote::Conflict);
    assert!(majority_vote(&[Comment, Comment]).is_err());
}
