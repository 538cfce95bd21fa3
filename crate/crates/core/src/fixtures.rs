//! Small hand-built instances with known answers.

use crate::pricing::MeasureFamily;
use crate::scenario::{MenuEntry, ScenarioModel};
use crate::tree::{AdaptedProcess, FiltrationTree, Measure, NodeSpec, StoppingTime};

/// Binomial stock with up factor 2, down factor 1/2 and `S_0 = 1` on a
/// uniform tree. Its unique martingale kernel is `(1/3, 2/3)`.
pub fn binomial_stock(horizon: usize) -> (FiltrationTree, AdaptedProcess) {
    let tree = FiltrationTree::uniform(horizon, 2).expect("valid horizon");
    let mut values = vec![0.0; tree.len()];
    values[tree.root()] = 1.0;
    for v in tree.internal_nodes() {
        let c = tree.children(v);
        values[c[0]] = values[v] * 2.0;
        values[c[1]] = values[v] * 0.5;
    }
    let stock = AdaptedProcess::new(&tree, values).expect("one value per node");
    (tree, stock)
}

/// The model whose only kernel is the binomial martingale kernel.
pub fn binomial_mme_model(horizon: usize) -> ScenarioModel {
    let (tree, _) = binomial_stock(horizon);
    ScenarioModel::from_fn(tree, |_, _| vec![MenuEntry::free(vec![1.0 / 3.0, 2.0 / 3.0])]).expect("valid kernel")
}

/// One-period trinomial with uniform reference weights and stock
/// `1 -> (2, 1, 1/2)`. Martingale kernels are `(t, 1 - 3t, 2t)`, `t in [0, 1/3]`.
pub fn trinomial_stock() -> (FiltrationTree, AdaptedProcess) {
    let tree = FiltrationTree::uniform(1, 3).expect("valid tree");
    let stock = AdaptedProcess::new(&tree, vec![1.0, 2.0, 1.0, 0.5]).expect("one value per node");
    (tree, stock)
}

pub fn trinomial_kernel(t: f64) -> Vec<f64> {
    vec![t, 1.0 - 3.0 * t, 2.0 * t]
}

/// Two-period binomial family whose members couple the kernels of the two
/// time-1 nodes. It is not stable under pasting, so its sublinear price is
/// not time consistent. The second model lists every kernel the family
/// uses, chosen independently per node.
pub fn coupled_binomial_family() -> (MeasureFamily, ScenarioModel) {
    let tree = FiltrationTree::uniform(2, 2).expect("valid tree");
    let a = [0.8, 0.2];
    let b = [0.2, 0.8];
    let member = |k: [f64; 2]| {
        let probs = [0.5 * k[0], 0.5 * k[1], 0.5 * k[0], 0.5 * k[1]];
        Measure::from_probabilities(&tree, &probs).expect("probability vector")
    };
    let family = MeasureFamily::sublinear(tree.clone(), vec![member(a), member(b)]).expect("nonempty family");
    let envelope = ScenarioModel::from_fn(tree, |_, v| {
        if v == 0 {
            vec![MenuEntry::free(vec![0.5, 0.5])]
        } else {
            vec![MenuEntry::free(a.to_vec()), MenuEntry::free(b.to_vec())]
        }
    })
    .expect("valid kernels");
    (family, envelope)
}

/// Reference measure penalized by `E[tau | A]^2 - t_A^2`. Prices compose
/// across deterministic times but not across a random intermediate time.
pub fn squared_time_family(tree: FiltrationTree) -> MeasureFamily {
    let t = tree.clone();
    MeasureFamily::with_penalty(tree.clone(), vec![Measure::reference(&tree)], move |_, atom, tau| {
        squared_time_penalty(&t, atom, tau)
    })
    .expect("nonempty family")
}

pub fn squared_time_penalty(tree: &FiltrationTree, atom: usize, tau: &StoppingTime) -> f64 {
    let range = tree.leaf_range(atom);
    let mean: f64 = range
        .map(|l| tree.leaf_weights()[l] * tree.time(tau.nodes()[tau.atom_of_leaf(l)]) as f64)
        .sum::<f64>()
        / tree.weight(atom);
    let t = tree.time(atom) as f64;
    mean * mean - t * t
}

/// One-period binomial on which the root menu offers the reference kernel
/// for free and a kernel that kills the second leaf at a cost.
pub fn penalized_binomial() -> ScenarioModel {
    let tree = FiltrationTree::new(&[
        NodeSpec { parent: None, weight: None },
        NodeSpec { parent: Some(0), weight: Some(0.5) },
        NodeSpec { parent: Some(0), weight: Some(0.5) },
    ])
    .expect("valid tree");
    ScenarioModel::from_fn(tree, |_, _| {
        vec![MenuEntry::free(vec![0.5, 0.5]), MenuEntry::new(vec![1.0, 0.0], 1.0)]
    })
    .expect("valid menu")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::{check_time_consistency, generating_chains, Chain};
    use crate::scenario::{check_cocycle, MinimalPenaltyProcess};
    use crate::settings::Settings;
    use crate::tree::Claim;

    #[test]
    fn binomial_values() {
        let (t, s) = binomial_stock(2);
        assert_eq!(s.values, vec![1.0, 2.0, 0.5, 4.0, 1.0, 1.0, 0.25]);
        assert_eq!(t.num_leaves(), 4);
    }

    #[test]
    fn coupled_family_fails_both_checks_at_the_root() {
        let (family, envelope) = coupled_binomial_family();
        let t = envelope.tree().clone();
        let x = Claim::from_leaves(&t, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let chain = Chain {
            nu: StoppingTime::root(&t),
            sigma: StoppingTime::at_time(&t, 1).unwrap(),
            tau: StoppingTime::leaves(&t),
        };
        let tc = check_time_consistency(&family, &[chain], &[x], 1e-9).unwrap();
        assert_eq!(tc.violations.len(), 1);
        assert_eq!(tc.violations[0].node, 0);
        assert!((tc.violations[0].composed - 0.8).abs() < 1e-12);
        assert!((tc.violations[0].direct - 0.5).abs() < 1e-12);

        let s = Settings::default();
        let pen = MinimalPenaltyProcess { dual: &family, envelope: &envelope, settings: s };
        let cc = check_cocycle(&pen, &envelope, &s).unwrap();
        assert!(!cc.passed());
        assert!(cc.violations.iter().all(|v| v.node == 0));
    }

    #[test]
    fn squared_time_passes_deterministic_chains_only() {
        let t = FiltrationTree::uniform(2, 2).unwrap();
        let fam = squared_time_family(t.clone());
        let samples = vec![Claim::from_leaves(&t, vec![1.0, -2.0, 0.5, 3.0]).unwrap()];
        let det = |s: &StoppingTime| s.is_deterministic(&t);
        let (deterministic, random): (Vec<Chain>, Vec<Chain>) = generating_chains(&t)
            .into_iter()
            .partition(|c| det(&c.nu) && det(&c.sigma) && det(&c.tau));
        assert!(check_time_consistency(&fam, &deterministic, &samples, 1e-12).unwrap().passed());
        assert!(!check_time_consistency(&fam, &random, &samples, 1e-12).unwrap().passed());
    }
}
