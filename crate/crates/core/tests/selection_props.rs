mod common;

use common::{check_selection, selection_instance};
use fairrank::dataset::PaperId;
use fairrank::numeric::Rng;
use fairrank::selection::select_top;
use proptest::prelude::*;

#[test]
fn randomized_selection_contract() {
    let mut rng = Rng::new(2024);
    for case in 0..1000 {
        let (ids, probs, k) = selection_instance(&mut rng);
        check_selection(&ids, &probs, k).unwrap_or_else(|e| panic!("case {case}: {e}"));
    }
}

proptest! {
    #[test]
    fn selection_contract_holds(
        probs in prop::collection::vec(0u8..=8, 1..40),
        k_frac in 0.0f64..1.0,
    ) {
        let probs: Vec<f64> = probs.into_iter().map(|p| f64::from(p) / 8.0).collect();
        let ids: Vec<PaperId> = (0..probs.len() as u64).rev().map(PaperId).collect();
        let k = 1 + ((probs.len() - 1) as f64 * k_frac) as usize;
        prop_assert!(check_selection(&ids, &probs, k).is_ok());
    }

    #[test]
    fn permuting_inputs_keeps_the_selected_ids(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let (ids, probs, k) = selection_instance(&mut rng);
        let pick = |ids: &[PaperId], probs: &[f64]| {
            let mut s: Vec<PaperId> = select_top(ids, probs, k).unwrap().into_iter().map(|i| ids[i]).collect();
            s.sort();
            s
        };
        let mut perm: Vec<usize> = (0..ids.len()).collect();
        rng.shuffle(&mut perm);
        let ids2: Vec<PaperId> = perm.iter().map(|&i| ids[i]).collect();
        let probs2: Vec<f64> = perm.iter().map(|&i| probs[i]).collect();
        prop_assert_eq!(pick(&ids, &probs), pick(&ids2, &probs2));
    }
}
