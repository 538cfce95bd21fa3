//! Seeded generators of random trees, models, claims and stopping times.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::scenario::{MenuEntry, ScenarioModel};
use crate::tree::{AdaptedProcess, Claim, FiltrationTree, Measure, NodeId, NodeSpec, StoppingTime};

/// Tree whose nodes have between 2 and `max_branching` children.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, horizon: usize, max_branching: usize) -> FiltrationTree {
    let mut specs = vec![NodeSpec { parent: None, weight: None }];
    let mut frontier = vec![0usize];
    for t in 0..horizon {
        let mut next = Vec::new();
        for &v in &frontier {
            let b = rng.gen_range(2..=max_branching.max(2));
            for _ in 0..b {
                next.push(specs.len());
                specs.push(NodeSpec { parent: Some(v), weight: None });
            }
        }
        if t + 1 == horizon {
            let raw: Vec<f64> = next.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for (&v, w) in next.iter().zip(raw) {
                specs[v].weight = Some(w / total);
            }
        }
        frontier = next;
    }
    FiltrationTree::new(&specs).expect("generated tree is valid")
}

/// Probability vector of length `k`; each component is zero with
/// probability `zero_prob` (at least one component stays positive).
pub fn random_kernel<R: Rng + ?Sized>(rng: &mut R, k: usize, zero_prob: f64) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..k)
        .map(|_| if rng.gen_bool(zero_prob) { 0.0 } else { rng.gen_range(0.05..1.0) })
        .collect();
    if raw.iter().all(|&x| x == 0.0) {
        raw[rng.gen_range(0..k)] = 1.0;
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub max_entries: usize,
    /// Chance that an entry other than the free one carries a penalty.
    pub penalty_prob: f64,
    pub max_penalty: f64,
    pub zero_prob: f64,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape { max_entries: 3, penalty_prob: 0.6, max_penalty: 0.5, zero_prob: 0.2 }
    }
}

impl ModelShape {
    pub fn sublinear() -> Self {
        ModelShape { penalty_prob: 0.0, ..Self::default() }
    }
}

/// Menu of random kernels at every node with at least one free entry.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, tree: FiltrationTree, shape: ModelShape) -> ScenarioModel {
    ScenarioModel::from_fn(tree, |t, v| random_menu(rng, t.children(v).len(), shape))
        .expect("generated menus are valid")
}

fn random_menu<R: Rng + ?Sized>(rng: &mut R, k: usize, shape: ModelShape) -> Vec<MenuEntry> {
    let n = rng.gen_range(1..=shape.max_entries.max(1));
    let mut menu: Vec<MenuEntry> = (0..n)
        .map(|i| {
            let penalty = if i > 0 && rng.gen_bool(shape.penalty_prob) {
                rng.gen_range(0.0..shape.max_penalty)
            } else {
                0.0
            };
            MenuEntry::new(random_kernel(rng, k, shape.zero_prob), penalty)
        })
        .collect();
    menu.shuffle(rng);
    menu
}

/// Random model in which one free entry per node charges every child, so a
/// mixture of zero-penalty scenarios is equivalent to the reference measure.
pub fn random_nfl_model<R: Rng + ?Sized>(rng: &mut R, tree: FiltrationTree, shape: ModelShape) -> ScenarioModel {
    ScenarioModel::from_fn(tree, |t, v| {
        let k = t.children(v).len();
        let mut menu = random_menu(rng, k, shape);
        menu.push(MenuEntry::free(random_kernel(rng, k, 0.0)));
        menu.shuffle(rng);
        menu
    })
    .expect("generated menus are valid")
}

/// Random model in which every entry at the parent of one random leaf gives
/// that leaf zero probability. Returns the leaf position as well.
pub fn random_killed_leaf_model<R: Rng + ?Sized>(
    rng: &mut R,
    tree: FiltrationTree,
    shape: ModelShape,
) -> (ScenarioModel, usize) {
    let leaf_pos = rng.gen_range(0..tree.num_leaves());
    let leaf = tree.leaves()[leaf_pos];
    let parent = tree.parent(leaf).expect("leaves have parents");
    let slot = tree.children(parent).iter().position(|&c| c == leaf).expect("child");
    let model = ScenarioModel::from_fn(tree, |t, v| {
        let mut menu = random_menu(rng, t.children(v).len(), shape);
        if v == parent {
            for e in &mut menu {
                e.kernel[slot] = 0.0;
                let total: f64 = e.kernel.iter().sum();
                if total == 0.0 {
                    let other = (slot + 1) % e.kernel.len();
                    e.kernel[other] = 1.0;
                } else {
                    for q in &mut e.kernel {
                        *q /= total;
                    }
                }
            }
        }
        menu
    })
    .expect("generated menus are valid");
    (model, leaf_pos)
}

/// Measure with random densities; each leaf is null with probability `zero_prob`.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, tree: &FiltrationTree, zero_prob: f64) -> Measure {
    let probs = random_kernel(rng, tree.num_leaves(), zero_prob);
    Measure::from_probabilities(tree, &probs).expect("probability vector")
}

pub fn random_leaf_claim<R: Rng + ?Sized>(rng: &mut R, tree: &FiltrationTree, scale: f64) -> Claim {
    let values = (0..tree.num_leaves()).map(|_| rng.gen_range(-scale..scale)).collect();
    Claim::from_leaves(tree, values).expect("one value per leaf")
}

pub fn random_claim<R: Rng + ?Sized>(rng: &mut R, at: &StoppingTime, scale: f64) -> Claim {
    Claim::from_fn(at.clone(), |_| rng.gen_range(-scale..scale))
}

/// Stopping time that stops at each visited node with probability `stop_prob`.
pub fn random_stopping_time<R: Rng + ?Sized>(rng: &mut R, tree: &FiltrationTree, stop_prob: f64) -> StoppingTime {
    let root = StoppingTime::root(tree);
    let leaves = StoppingTime::leaves(tree);
    random_stopping_time_between(rng, tree, &root, &leaves, stop_prob)
}

/// Random stopping time `sigma` with `nu <= sigma <= tau`.
pub fn random_stopping_time_between<R: Rng + ?Sized>(
    rng: &mut R,
    tree: &FiltrationTree,
    nu: &StoppingTime,
    tau: &StoppingTime,
    stop_prob: f64,
) -> StoppingTime {
    let mut cut = Vec::new();
    let mut stack: Vec<NodeId> = nu.nodes().to_vec();
    while let Some(v) = stack.pop() {
        if tau.contains(tree, v) || rng.gen_bool(stop_prob) {
            cut.push(v);
        } else {
            stack.extend(tree.children(v));
        }
    }
    StoppingTime::new(tree, cut).expect("generated cut is an antichain")
}

/// Asset whose children straddle their parent's value at every node, so
/// martingale kernels exist everywhere.
pub fn random_asset<R: Rng + ?Sized>(rng: &mut R, tree: &FiltrationTree) -> AdaptedProcess {
    let mut values = vec![0.0; tree.len()];
    values[tree.root()] = 1.0;
    for v in tree.internal_nodes() {
        let s = values[v];
        let children = tree.children(v);
        let up = rng.gen_range(0..children.len());
        let mut down = rng.gen_range(0..children.len() - 1);
        if down >= up {
            down += 1;
        }
        for (k, &c) in children.iter().enumerate() {
            let factor = if k == up {
                rng.gen_range(1.1..1.8)
            } else if k == down {
                rng.gen_range(0.4..0.9)
            } else {
                rng.gen_range(0.5..1.6)
            };
            values[c] = s * factor;
        }
    }
    AdaptedProcess::new(tree, values).expect("one value per node")
}

/// Random martingale kernel for one asset at `node`: a mixture of two-point
/// martingale kernels.
pub fn random_martingale_kernel<R: Rng + ?Sized>(rng: &mut R, tree: &FiltrationTree, asset: &AdaptedProcess, node: NodeId) -> Vec<f64> {
    let s = asset.at(node);
    let children = tree.children(node);
    let k = children.len();
    let mut kernel = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let (a, b) = (asset.at(children[i]) - s, asset.at(children[j]) - s);
            if a > 0.0 && b < 0.0 {
                let w = rng.gen_range(0.1..1.0);
                kernel[i] += w * (-b) / (a - b);
                kernel[j] += w * a / (a - b);
                total += w;
            } else if a == 0.0 && i == j {
                let w = rng.gen_range(0.1..1.0);
                kernel[i] += w;
                total += w;
            }
        }
    }
    assert!(total > 0.0, "node {node} admits no martingale kernel");
    kernel.iter().map(|q| q / total).collect()
}
