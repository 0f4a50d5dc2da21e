mod common;

use proptest::prelude::*;

use common::brute_report;
use fairprune::metrics::{confusion, eodd, eopp0, eopp1, group_accuracy, EoddVariant};

fn prediction_set() -> impl Strategy<Value = (usize, Vec<(usize, usize, u8)>)> {
    (2usize..8).prop_flat_map(|k| (Just(k), prop::collection::vec((0..k, 0..k, 0u8..2), 1..200)))
}

proptest! {
    #[test]
    fn matches_brute_force((k, rows) in prediction_set()) {
        let preds: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let groups: Vec<u8> = rows.iter().map(|r| r.2).collect();
        let ct = confusion(&preds, &labels, &groups, k).unwrap();
        let b = brute_report(&preds, &labels, &groups, k);
        prop_assert!((eopp0(&ct).value - b.eopp0).abs() < 1e-12);
        prop_assert!((eopp1(&ct).value - b.eopp1).abs() < 1e-12);
        prop_assert!((eodd(&ct, EoddVariant::Signed).value - b.eodd).abs() < 1e-12);
        for g in 0..2 {
            let acc = group_accuracy(&ct, g);
            prop_assert!((acc.f1 - b.prf[g][2]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaps_are_symmetric_and_bounded((k, rows) in prediction_set()) {
        let preds: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let groups: Vec<u8> = rows.iter().map(|r| r.2).collect();
        let ct = confusion(&preds, &labels, &groups, k).unwrap();
        let sw = ct.swapped();
        prop_assert_eq!(eopp1(&ct).value, eopp1(&sw).value);
        prop_assert_eq!(eopp0(&ct).value, eopp0(&sw).value);
        prop_assert!(eopp1(&ct).value <= k as f64 && eopp1(&ct).value >= 0.0);
    }
}

#[test]
fn perfect_predictions_have_no_gap() {
    let labels = vec![0, 1, 2, 0, 1, 2];
    let groups = vec![0, 0, 0, 1, 1, 1];
    let ct = confusion(&labels, &labels, &groups, 3).unwrap();
    assert_eq!(eopp1(&ct).value, 0.0);
    assert_eq!(group_accuracy(&ct, 0).f1, 1.0);
}

#[test]
fn out_of_range_labels_rejected() {
    assert!(confusion(&[0], &[5], &[0], 3).is_err());
}
