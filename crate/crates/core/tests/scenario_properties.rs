mod common;

use proptest::prelude::*;
use tcpp_core::pricing::{price, reprice_with_minimal_penalty};
use tcpp_core::random::{random_leaf_claim, random_model, random_stopping_time, random_tree, ModelShape};
use tcpp_core::scenario::{
    check_cocycle, minimal_penalty_for_law, region, AggregatedPenalty, PenaltyValue,
};
use tcpp_core::tree::StoppingTime;
use tcpp_core::Settings;

proptest! {
    #![proptest_config(common::config(32))]

    #[test]
    fn repricing_with_minimal_penalty_is_exact(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 2, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::default());
        let s = Settings::default();
        let sigma = random_stopping_time(&mut rng, &tree, 0.3);
        for _ in 0..3 {
            let x = random_leaf_claim(&mut rng, &tree, 3.0);
            let direct = price(&model, &x, &sigma).unwrap();
            let dual = reprice_with_minimal_penalty(&model, &x, &sigma, &s).unwrap();
            prop_assert!(direct.max_abs_diff(&dual) <= 1e-9, "{direct:?} vs {dual:?}");
        }
    }

    #[test]
    fn minimal_penalty_never_exceeds_stated(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 2, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::default());
        let s = Settings::default();
        let root = tree.root();
        let leaves = StoppingTime::leaves(&tree);
        let nodes = region(&tree, root, &leaves);
        for sel in model.selections_over(&nodes, |_, _| true, s.enumeration_cap).unwrap() {
            let stated = model.accumulated_penalty(&sel, root, &leaves);
            let law = model.conditional_law(&sel, root, &leaves);
            match minimal_penalty_for_law(&model, root, &leaves, &law, &s).unwrap() {
                PenaltyValue::Finite(a) => prop_assert!(a <= stated + 1e-9),
                PenaltyValue::Infinite => prop_assert!(false, "own scenario has infinite penalty"),
            }
        }
    }

    #[test]
    fn aggregated_penalties_satisfy_the_cocycle(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 2, 3);
        let model = random_model(&mut rng, tree, ModelShape::default());
        let report = check_cocycle(&AggregatedPenalty { model: &model }, &model, &Settings::default()).unwrap();
        prop_assert!(report.passed());
        prop_assert!(report.checks > 0);
    }
}
