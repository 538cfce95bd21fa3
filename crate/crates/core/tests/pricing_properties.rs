mod common;

use proptest::prelude::*;
use rand::Rng;
use tcpp_core::oracle::{dual_price_by_enumeration, enumeration_size};
use tcpp_core::pricing::{american_price, bid_ask, check_axioms, check_time_consistency, generating_chains, price};
use tcpp_core::random::{random_claim, random_leaf_claim, random_model, random_stopping_time, random_stopping_time_between, random_tree, ModelShape};
use tcpp_core::tree::{AdaptedProcess, StoppingTime};
use tcpp_core::Settings;

proptest! {
    #![proptest_config(common::config(32))]

    #[test]
    fn induction_matches_enumeration(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 2, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::default());
        let s = Settings::default();
        let tau = random_stopping_time(&mut rng, &tree, 0.2);
        let sigma = random_stopping_time_between(&mut rng, &tree, &StoppingTime::root(&tree), &tau, 0.5);
        prop_assume!(enumeration_size(&model, &tau, &sigma) <= 100_000);
        let x = random_claim(&mut rng, &tau, 4.0);
        let a = price(&model, &x, &sigma).unwrap();
        let b = dual_price_by_enumeration(&model, &x, &sigma, &s).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-9);
    }

    #[test]
    fn axioms_hold(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 3, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::default());
        let sigma = random_stopping_time(&mut rng, &tree, 0.3);
        let samples: Vec<_> = (0..50)
            .map(|_| (random_leaf_claim(&mut rng, &tree, 3.0), random_leaf_claim(&mut rng, &tree, 3.0)))
            .collect();
        let report = check_axioms(&model, &sigma, &samples, &[0.0, 0.3, 0.5, 1.0], &mut rng, 1e-12).unwrap();
        prop_assert!(report.passed(), "{:?}", report.violations.first());
    }

    #[test]
    fn sublinear_models_are_positively_homogeneous(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 3, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::sublinear());
        let sigma = random_stopping_time(&mut rng, &tree, 0.3);
        let x = random_leaf_claim(&mut rng, &tree, 3.0);
        let px = price(&model, &x, &sigma).unwrap();
        for lambda in [2.0, 5.0, 17.0] {
            let scaled = price(&model, &x.scale(lambda), &sigma).unwrap();
            prop_assert!(scaled.max_abs_diff(&px.scale(lambda)) <= 1e-12 * lambda * 4.0);
        }
    }

    #[test]
    fn bid_never_exceeds_ask(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 3, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::default());
        let x = random_leaf_claim(&mut rng, &tree, 3.0);
        let sigma = random_stopping_time(&mut rng, &tree, 0.3);
        let ba = bid_ask(&model, &x, &sigma).unwrap();
        for (b, a) in ba.bid.values().iter().zip(ba.ask.values()) {
            prop_assert!(b <= &(a + 1e-12));
        }
    }

    #[test]
    fn menu_models_are_time_consistent(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 2, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::default());
        let samples: Vec<_> = (0..5).map(|_| random_leaf_claim(&mut rng, &tree, 3.0)).collect();
        let report = check_time_consistency(&model, &generating_chains(&tree), &samples, 1e-12).unwrap();
        prop_assert!(report.passed());
    }

    #[test]
    fn american_enumeration_matches_induction(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let tree = random_tree(&mut rng, 2, 3);
        let shape = if seed % 2 == 0 { ModelShape::sublinear() } else { ModelShape::default() };
        let model = random_model(&mut rng, tree.clone(), shape);
        let y = AdaptedProcess::new(&tree, (0..tree.len()).map(|_| rng.gen_range(-1.0..2.0)).collect()).unwrap();
        let am = american_price(&model, &y, &StoppingTime::root(&tree), &StoppingTime::leaves(&tree), &Settings::default()).unwrap();
        prop_assert!(am.agree(1e-9), "gap {}", am.max_gap());
    }
}
