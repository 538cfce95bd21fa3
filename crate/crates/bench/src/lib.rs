//! Fixed inputs shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcpp_core::lp::{LinearProgram, Relation};
use tcpp_core::random::{random_leaf_claim, random_model, random_tree, ModelShape};
use tcpp_core::scenario::ScenarioModel;
use tcpp_core::tree::Claim;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random model on a tree of the given horizon plus one leaf claim.
pub fn model_and_claim(horizon: usize, max_branching: usize, seed: u64) -> (ScenarioModel, Claim) {
    let mut r = rng(seed);
    let tree = random_tree(&mut r, horizon, max_branching);
    let model = random_model(&mut r, tree.clone(), ModelShape::default());
    let x = random_leaf_claim(&mut r, &tree, 3.0);
    (model, x)
}

/// Dense transport-style program with `n` sources and `n` sinks.
pub fn transport_lp(n: usize) -> LinearProgram {
    let cost = (0..n * n).map(|k| ((k * 7919) % 97) as f64 / 10.0 + 1.0).collect();
    let mut lp = LinearProgram::minimize(cost);
    for i in 0..n {
        let row = (0..n * n).map(|k| if k / n == i { 1.0 } else { 0.0 }).collect();
        lp.add_constraint(row, Relation::Le, 2.0);
        let col = (0..n * n).map(|k| if k % n == i { 1.0 } else { 0.0 }).collect();
        lp.add_constraint(col, Relation::Ge, 1.5);
    }
    lp
}
