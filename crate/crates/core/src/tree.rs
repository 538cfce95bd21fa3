//! Finite filtered probability spaces realized as event trees.
//!
//! Atoms of `F_t` are the nodes at time `t`; a stopping time is an antichain
//! of nodes that meets every root-to-leaf path exactly once, and its atoms
//! are exactly those nodes. Leaves are kept in depth-first order so that
//! every node owns a contiguous range of leaves.

use std::ops::Range;

use crate::error::{Error, Result};

pub type NodeId = usize;

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub time: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// Input description of one node: its parent and, for leaves, its weight
/// under the reference measure.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub parent: Option<NodeId>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationTree {
    nodes: Vec<Node>,
    root: NodeId,
    horizon: usize,
    leaves: Vec<NodeId>,
    leaf_weights: Vec<f64>,
    leaf_range: Vec<Range<usize>>,
    node_weight: Vec<f64>,
}

impl FiltrationTree {
    /// Build a tree from node specs indexed by node id. Children keep the
    /// order in which they appear in `specs`.
    pub fn new(specs: &[NodeSpec]) -> Result<Self> {
        let n = specs.len();
        if n < 2 {
            return Err(Error::InvalidTree("a tree needs at least one period".into()));
        }
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (id, spec) in specs.iter().enumerate() {
            match spec.parent {
                None if root.is_some() => {
                    return Err(Error::InvalidTree(format!("second root at node {id}")))
                }
                None => root = Some(id),
                Some(p) if p >= n => return Err(Error::ForeignNode(p)),
                Some(p) if p == id => {
                    return Err(Error::InvalidTree(format!("node {id} is its own parent")))
                }
                Some(p) => children[p].push(id),
            }
        }
        let root = root.ok_or_else(|| Error::InvalidTree("no root node".into()))?;

        let mut time = vec![usize::MAX; n];
        time[root] = 0;
        let mut stack = vec![root];
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            order.push(v);
            for &c in children[v].iter().rev() {
                time[c] = time[v] + 1;
                stack.push(c);
            }
        }
        if order.len() != n {
            return Err(Error::InvalidTree("some nodes are not reachable from the root".into()));
        }

        let leaves: Vec<NodeId> = order.iter().copied().filter(|&v| children[v].is_empty()).collect();
        let horizon = time[leaves[0]];
        if let Some(&bad) = leaves.iter().find(|&&l| time[l] != horizon) {
            return Err(Error::InvalidTree(format!(
                "leaf {bad} sits at time {} but the horizon is {horizon}",
                time[bad]
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidTree("horizon must be at least 1".into()));
        }

        let mut leaf_weights = Vec::with_capacity(leaves.len());
        for &l in &leaves {
            match specs[l].weight {
                Some(w) if w.is_finite() && w > 0.0 => leaf_weights.push(w),
                Some(w) => {
                    return Err(Error::InvalidTree(format!("leaf {l} has non-positive weight {w}")))
                }
                None => return Err(Error::InvalidTree(format!("leaf {l} has no weight"))),
            }
        }
        for (id, spec) in specs.iter().enumerate() {
            if !children[id].is_empty() && spec.weight.is_some() {
                return Err(Error::InvalidTree(format!("internal node {id} carries a leaf weight")));
            }
        }
        let total: f64 = leaf_weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidTree(format!("leaf weights sum to {total}, not 1")));
        }

        let mut leaf_pos = vec![usize::MAX; n];
        for (i, &l) in leaves.iter().enumerate() {
            leaf_pos[l] = i;
        }
        let mut leaf_range = vec![0..0; n];
        for &v in order.iter().rev() {
            leaf_range[v] = if children[v].is_empty() {
                leaf_pos[v]..leaf_pos[v] + 1
            } else {
                let first = leaf_range[children[v][0]].start;
                let last = leaf_range[*children[v].last().unwrap()].end;
                first..last
            };
        }
        let node_weight = leaf_range.iter().map(|r| leaf_weights[r.clone()].iter().sum()).collect();

        let nodes = (0..n)
            .map(|id| Node {
                id,
                time: time[id],
                parent: specs[id].parent,
                children: std::mem::take(&mut children[id]),
            })
            .collect();
        Ok(FiltrationTree { nodes, root, horizon, leaves, leaf_weights, leaf_range, node_weight })
    }

    /// Complete tree in which every internal node has `branching` children and
    /// the reference measure moves to child `c` with probability `step_probs[c]`.
    /// Node ids are assigned breadth first.
    pub fn homogeneous(horizon: usize, step_probs: &[f64]) -> Result<Self> {
        let b = step_probs.len();
        if b == 0 {
            return Err(Error::InvalidTree("branching must be positive".into()));
        }
        let mut specs = vec![NodeSpec { parent: None, weight: None }];
        let mut frontier = vec![(0usize, 1.0f64)];
        for t in 0..horizon {
            let mut next = Vec::with_capacity(frontier.len() * b);
            for &(parent, mass) in &frontier {
                for &p in step_probs {
                    let id = specs.len();
                    let w = mass * p;
                    specs.push(NodeSpec { parent: Some(parent), weight: (t + 1 == horizon).then_some(w) });
                    next.push((id, w));
                }
            }
            frontier = next;
        }
        Self::new(&specs)
    }

    pub fn uniform(horizon: usize, branching: usize) -> Result<Self> {
        Self::homogeneous(horizon, &vec![1.0 / branching as f64; branching])
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id < self.nodes.len()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn time(&self, id: NodeId) -> usize {
        self.nodes[id].time
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Reference probabilities of the leaves, in leaf order.
    pub fn leaf_weights(&self) -> &[f64] {
        &self.leaf_weights
    }

    /// Positions (in leaf order) of the leaves below `id`.
    pub fn leaf_range(&self, id: NodeId) -> Range<usize> {
        self.leaf_range[id].clone()
    }

    /// Reference probability of the event represented by `id`.
    pub fn weight(&self, id: NodeId) -> f64 {
        self.node_weight[id]
    }

    /// Internal nodes, parents before children.
    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        let mut ids: Vec<NodeId> = (0..self.len()).filter(|&v| !self.is_leaf(v)).collect();
        ids.sort_by_key(|&v| (self.time(v), self.leaf_range[v].start));
        ids.into_iter()
    }

    pub fn nodes_at_time(&self, t: usize) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = (0..self.len()).filter(|&v| self.time(v) == t).collect();
        ids.sort_by_key(|&v| self.leaf_range[v].start);
        ids
    }

    pub fn is_ancestor_or_self(&self, a: NodeId, b: NodeId) -> bool {
        let (ra, rb) = (&self.leaf_range[a], &self.leaf_range[b]);
        self.time(a) <= self.time(b) && ra.start <= rb.start && rb.end <= ra.end
    }

    /// One-step transition law of the reference measure at `id`.
    pub fn reference_kernel(&self, id: NodeId) -> Vec<f64> {
        let w = self.weight(id);
        self.children(id).iter().map(|&c| self.weight(c) / w).collect()
    }

    /// Child of `ancestor` on the path down to leaf position `leaf`.
    pub fn child_toward(&self, ancestor: NodeId, leaf: usize) -> Option<NodeId> {
        self.children(ancestor).iter().copied().find(|&c| self.leaf_range[c].contains(&leaf))
    }
}

/// A stopping time stored as the antichain of nodes where it stops.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StoppingTime {
    cut: Vec<NodeId>,
    leaf_atom: Vec<usize>,
}

impl StoppingTime {
    pub fn new(tree: &FiltrationTree, mut nodes: Vec<NodeId>) -> Result<Self> {
        if let Some(&bad) = nodes.iter().find(|&&v| !tree.contains(v)) {
            return Err(Error::ForeignNode(bad));
        }
        nodes.sort_by_key(|&v| tree.leaf_range[v].start);
        nodes.dedup();
        let mut leaf_atom = vec![usize::MAX; tree.num_leaves()];
        let mut next = 0;
        for (i, &v) in nodes.iter().enumerate() {
            let r = tree.leaf_range(v);
            if r.start != next {
                return Err(Error::InvalidStoppingTime(if r.start < next {
                    format!("node {v} lies on a path that is already stopped")
                } else {
                    format!("leaves {next}..{} are never stopped", r.start)
                }));
            }
            for slot in &mut leaf_atom[r.clone()] {
                *slot = i;
            }
            next = r.end;
        }
        if next != tree.num_leaves() {
            return Err(Error::InvalidStoppingTime(format!(
                "leaves {next}..{} are never stopped",
                tree.num_leaves()
            )));
        }
        Ok(StoppingTime { cut: nodes, leaf_atom })
    }

    pub fn root(tree: &FiltrationTree) -> Self {
        Self::new(tree, vec![tree.root()]).expect("root is a stopping time")
    }

    pub fn leaves(tree: &FiltrationTree) -> Self {
        Self::new(tree, tree.leaves().to_vec()).expect("leaves form a stopping time")
    }

    pub fn at_time(tree: &FiltrationTree, t: usize) -> Result<Self> {
        if t > tree.horizon() {
            return Err(Error::InvalidStoppingTime(format!(
                "time {t} is beyond the horizon {}",
                tree.horizon()
            )));
        }
        Self::new(tree, tree.nodes_at_time(t))
    }

    /// Atoms of `F_tau`, ordered by their leftmost leaf.
    pub fn nodes(&self) -> &[NodeId] {
        &self.cut
    }

    pub fn len(&self) -> usize {
        self.cut.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cut.is_empty()
    }

    /// Index of the atom containing leaf position `leaf`.
    pub fn atom_of_leaf(&self, leaf: usize) -> usize {
        self.leaf_atom[leaf]
    }

    /// Index of `node` in the cut, if the stopping time stops there.
    pub fn index_of(&self, tree: &FiltrationTree, node: NodeId) -> Option<usize> {
        let i = self.leaf_atom[tree.leaf_range(node).start];
        (self.cut[i] == node).then_some(i)
    }

    pub fn contains(&self, tree: &FiltrationTree, node: NodeId) -> bool {
        self.index_of(tree, node).is_some()
    }

    /// True when `node` lies strictly before this stopping time on its paths.
    pub fn is_strictly_before(&self, tree: &FiltrationTree, node: NodeId) -> bool {
        let atom = self.cut[self.leaf_atom[tree.leaf_range(node).start]];
        atom != node && tree.is_ancestor_or_self(node, atom)
    }

    /// `self <= other` pathwise.
    pub fn precedes(&self, tree: &FiltrationTree, other: &StoppingTime) -> bool {
        other.cut.iter().all(|&b| {
            let a = self.cut[self.leaf_atom[tree.leaf_range(b).start]];
            tree.is_ancestor_or_self(a, b)
        })
    }

    pub fn is_deterministic(&self, tree: &FiltrationTree) -> bool {
        self.cut.iter().all(|&v| tree.time(v) == tree.time(self.cut[0]))
    }

    /// Atoms of `self` lying inside the subtree of `node`.
    pub fn atoms_below(&self, tree: &FiltrationTree, node: NodeId) -> Range<usize> {
        let r = tree.leaf_range(node);
        self.leaf_atom[r.start]..self.leaf_atom[r.end - 1] + 1
    }

    /// The stopping time obtained by deferring the stop at `node` to its children.
    pub fn refine_at(&self, tree: &FiltrationTree, node: NodeId) -> Result<Self> {
        if !self.contains(tree, node) || tree.is_leaf(node) {
            return Err(Error::InvalidStoppingTime(format!("cannot refine at node {node}")));
        }
        let mut cut: Vec<NodeId> = self.cut.iter().copied().filter(|&v| v != node).collect();
        cut.extend_from_slice(tree.children(node));
        Self::new(tree, cut)
    }
}

/// Deterministic times plus every single-node refinement of them. Any pair
/// of ordered stopping times is connected through chains of these.
pub fn generating_stopping_times(tree: &FiltrationTree) -> Vec<StoppingTime> {
    let mut out: Vec<StoppingTime> = Vec::new();
    for t in 0..=tree.horizon() {
        let base = StoppingTime::at_time(tree, t).expect("deterministic time");
        if t < tree.horizon() {
            for &v in base.nodes() {
                let refined = base.refine_at(tree, v).expect("internal node");
                if !out.contains(&refined) {
                    out.push(refined);
                }
            }
        }
        if !out.contains(&base) {
            out.push(base);
        }
    }
    out
}

/// Number of stopping times `sigma` with `node <= sigma <= tau` inside the
/// subtree of `node` (saturating).
pub fn count_local_stopping_times(tree: &FiltrationTree, node: NodeId, tau: &StoppingTime) -> u128 {
    if tau.contains(tree, node) {
        return 1;
    }
    tree.children(node)
        .iter()
        .fold(1u128, |acc, &c| acc.saturating_mul(count_local_stopping_times(tree, c, tau)))
        .saturating_add(1)
}

/// Every antichain between `node` and `tau` inside the subtree of `node`.
pub fn local_stopping_cuts(tree: &FiltrationTree, node: NodeId, tau: &StoppingTime) -> Vec<Vec<NodeId>> {
    if tau.contains(tree, node) {
        return vec![vec![node]];
    }
    let mut combos: Vec<Vec<NodeId>> = vec![Vec::new()];
    for &c in tree.children(node) {
        let sub = local_stopping_cuts(tree, c, tau);
        let mut next = Vec::with_capacity(combos.len() * sub.len());
        for prefix in &combos {
            for s in &sub {
                let mut v = prefix.clone();
                v.extend_from_slice(s);
                next.push(v);
            }
        }
        combos = next;
    }
    combos.insert(0, vec![node]);
    combos
}

/// All stopping times between `nu` and `tau`.
pub fn stopping_times_between(
    tree: &FiltrationTree,
    nu: &StoppingTime,
    tau: &StoppingTime,
    cap: u64,
) -> Result<Vec<StoppingTime>> {
    if !nu.precedes(tree, tau) {
        return Err(Error::NotOrdered("nu must precede tau".into()));
    }
    let count = nu
        .nodes()
        .iter()
        .fold(1u128, |acc, &v| acc.saturating_mul(count_local_stopping_times(tree, v, tau)));
    if count > cap as u128 {
        return Err(Error::EnumerationOverflow { count, cap });
    }
    let mut combos: Vec<Vec<NodeId>> = vec![Vec::new()];
    for &v in nu.nodes() {
        let local = local_stopping_cuts(tree, v, tau);
        let mut next = Vec::with_capacity(combos.len() * local.len());
        for prefix in &combos {
            for s in &local {
                let mut c = prefix.clone();
                c.extend_from_slice(s);
                next.push(c);
            }
        }
        combos = next;
    }
    combos.into_iter().map(|c| StoppingTime::new(tree, c)).collect()
}

/// A bounded `F_tau`-measurable position: one value per atom of `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    at: StoppingTime,
    values: Vec<f64>,
}

impl Claim {
    pub fn new(at: StoppingTime, values: Vec<f64>) -> Result<Self> {
        if values.len() != at.len() {
            return Err(Error::InvalidClaim(format!(
                "{} values for a stopping time with {} atoms",
                values.len(),
                at.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidClaim("claims must be bounded".into()));
        }
        Ok(Claim { at, values })
    }

    pub fn constant(at: StoppingTime, c: f64) -> Self {
        let values = vec![c; at.len()];
        Claim { at, values }
    }

    pub fn zero(at: StoppingTime) -> Self {
        Self::constant(at, 0.0)
    }

    /// Claim at maturity given one value per leaf (leaf order).
    pub fn from_leaves(tree: &FiltrationTree, values: Vec<f64>) -> Result<Self> {
        Self::new(StoppingTime::leaves(tree), values)
    }

    pub fn from_fn(at: StoppingTime, f: impl FnMut(NodeId) -> f64) -> Self {
        let values = at.nodes().iter().copied().map(f).collect();
        Claim { at, values }
    }

    pub fn at(&self) -> &StoppingTime {
        &self.at
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, tree: &FiltrationTree, node: NodeId) -> Option<f64> {
        self.at.index_of(tree, node).map(|i| self.values[i])
    }

    /// Values repeated onto every leaf.
    pub fn leaf_values(&self, tree: &FiltrationTree) -> Vec<f64> {
        (0..tree.num_leaves()).map(|l| self.values[self.at.atom_of_leaf(l)]).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Claim {
        Claim { at: self.at.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Claim, f: impl Fn(f64, f64) -> f64) -> Result<Claim> {
        if self.at != other.at {
            return Err(Error::InvalidClaim("claims live on different stopping times".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Claim { at: self.at.clone(), values })
    }

    pub fn scale(&self, k: f64) -> Claim {
        self.map(|v| k * v)
    }

    pub fn neg(&self) -> Claim {
        self.map(|v| -v)
    }

    /// Add an `F_sigma`-measurable claim (sigma <= self.at) atomwise.
    pub fn shift_by(&self, tree: &FiltrationTree, z: &Claim) -> Result<Claim> {
        if !z.at.precedes(tree, &self.at) {
            return Err(Error::NotOrdered("shift must be measurable earlier".into()));
        }
        let values = self
            .at
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&v, &x)| x + z.values[z.at.atom_of_leaf(tree.leaf_range(v).start)])
            .collect();
        Ok(Claim { at: self.at.clone(), values })
    }

    /// Re-express an `F_sigma`-measurable claim on a later stopping time.
    pub fn lift_to(&self, tree: &FiltrationTree, tau: &StoppingTime) -> Result<Claim> {
        if !self.at.precedes(tree, tau) {
            return Err(Error::NotOrdered("can only lift to a later stopping time".into()));
        }
        Ok(Claim::from_fn(tau.clone(), |v| {
            self.values[self.at.atom_of_leaf(tree.leaf_range(v).start)]
        }))
    }

    pub fn max_abs_diff(&self, other: &Claim) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Value of a real process at every node of the tree (adapted by construction).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    pub values: Vec<f64>,
}

impl AdaptedProcess {
    pub fn new(tree: &FiltrationTree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(Error::InvalidClaim(format!(
                "process has {} values for {} nodes",
                values.len(),
                tree.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidClaim("process values must be finite".into()));
        }
        Ok(AdaptedProcess { values })
    }

    pub fn at(&self, node: NodeId) -> f64 {
        self.values[node]
    }

    /// The process stopped at `tau`.
    pub fn stopped(&self, tau: &StoppingTime) -> Claim {
        Claim::from_fn(tau.clone(), |v| self.values[v])
    }
}

/// A probability measure given by its density with respect to the reference
/// measure, one entry per leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    density: Vec<f64>,
}

const MASS_TOL: f64 = 1e-9;

impl Measure {
    pub fn from_density(tree: &FiltrationTree, density: Vec<f64>) -> Result<Self> {
        if density.len() != tree.num_leaves() {
            return Err(Error::InvalidMeasure(format!(
                "{} densities for {} leaves",
                density.len(),
                tree.num_leaves()
            )));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidMeasure("densities must be finite and nonnegative".into()));
        }
        let total: f64 = density.iter().zip(tree.leaf_weights()).map(|(d, w)| d * w).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("total mass {total} is not 1")));
        }
        Ok(Measure { density })
    }

    pub fn from_probabilities(tree: &FiltrationTree, probs: &[f64]) -> Result<Self> {
        if probs.len() != tree.num_leaves() {
            return Err(Error::InvalidMeasure(format!(
                "{} probabilities for {} leaves",
                probs.len(),
                tree.num_leaves()
            )));
        }
        let density = probs.iter().zip(tree.leaf_weights()).map(|(p, w)| p / w).collect();
        Self::from_density(tree, density)
    }

    pub fn reference(tree: &FiltrationTree) -> Self {
        Measure { density: vec![1.0; tree.num_leaves()] }
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn probabilities(&self, tree: &FiltrationTree) -> Vec<f64> {
        self.density.iter().zip(tree.leaf_weights()).map(|(d, w)| d * w).collect()
    }

    pub fn mass(&self, tree: &FiltrationTree, node: NodeId) -> f64 {
        tree.leaf_range(node).map(|l| self.density[l] * tree.leaf_weights()[l]).sum()
    }

    pub fn is_equivalent(&self) -> bool {
        self.density.iter().all(|&d| d > 0.0)
    }

    pub fn expectation(&self, tree: &FiltrationTree, x: &Claim) -> f64 {
        x.leaf_values(tree)
            .iter()
            .zip(&self.density)
            .zip(tree.leaf_weights())
            .map(|((x, d), w)| x * d * w)
            .sum()
    }

    /// One-step conditional law at `node`, or `None` on a null node.
    pub fn kernel(&self, tree: &FiltrationTree, node: NodeId) -> Option<Vec<f64>> {
        let m = self.mass(tree, node);
        (m > 0.0).then(|| tree.children(node).iter().map(|&c| self.mass(tree, c) / m).collect())
    }
}

/// Per-atom result of conditioning; `None` marks atoms the measure does not charge.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub at: StoppingTime,
    pub values: Vec<Option<f64>>,
}

impl Conditional {
    pub fn into_claim(self) -> Result<Claim> {
        let mut values = Vec::with_capacity(self.values.len());
        for (i, v) in self.values.iter().enumerate() {
            match v {
                Some(v) => values.push(*v),
                None => return Err(Error::ZeroConditioningMass(self.at.nodes()[i])),
            }
        }
        Claim::new(self.at, values)
    }

    /// Replace undefined atoms by `fallback`.
    pub fn into_claim_or(self, fallback: f64) -> Claim {
        let values = self.values.iter().map(|v| v.unwrap_or(fallback)).collect();
        Claim { at: self.at, values }
    }
}

/// `E_Q(X | F_sigma)` atom by atom.
pub fn conditional_expectation(
    tree: &FiltrationTree,
    q: &Measure,
    x: &Claim,
    sigma: &StoppingTime,
) -> Result<Conditional> {
    if !sigma.precedes(tree, x.at()) {
        return Err(Error::NotOrdered("conditioning time must precede the claim".into()));
    }
    let probs = q.probabilities(tree);
    let values = sigma
        .nodes()
        .iter()
        .map(|&a| {
            let r = tree.leaf_range(a);
            let mass: f64 = probs[r.clone()].iter().sum();
            if mass <= 0.0 {
                return None;
            }
            let num: f64 = r.map(|l| probs[l] * x.values[x.at.atom_of_leaf(l)]).sum();
            Some(num / mass)
        })
        .collect();
    Ok(Conditional { at: sigma.clone(), values })
}

/// Atomwise maximum of claims sharing a stopping time.
pub fn essential_supremum(claims: &[Claim]) -> Result<Claim> {
    let (first, rest) = claims.split_first().ok_or(Error::EmptyList)?;
    rest.iter().try_fold(first.clone(), |acc, c| acc.zip_with(c, f64::max))
}

/// Atoms of `F_tau` (the cut nodes themselves).
pub fn sigma_algebra_nodes(tree: &FiltrationTree, tau: &StoppingTime) -> Result<Vec<NodeId>> {
    if let Some(&bad) = tau.nodes().iter().find(|&&v| !tree.contains(v)) {
        return Err(Error::ForeignNode(bad));
    }
    Ok(tau.nodes().to_vec())
}

/// Measure following `q1` up to `sigma` and the conditional law of `q2` after it.
pub fn paste_measures(tree: &FiltrationTree, q1: &Measure, q2: &Measure, sigma: &StoppingTime) -> Result<Measure> {
    let p1 = q1.probabilities(tree);
    let p2 = q2.probabilities(tree);
    let mut density = vec![0.0; tree.num_leaves()];
    for &a in sigma.nodes() {
        let r = tree.leaf_range(a);
        let m1: f64 = p1[r.clone()].iter().sum();
        let m2: f64 = p2[r.clone()].iter().sum();
        if m1 <= 0.0 {
            continue;
        }
        if m2 <= 0.0 {
            return Err(Error::MassMismatch(a));
        }
        for l in r {
            density[l] = m1 * p2[l] / m2 / tree.leaf_weights()[l];
        }
    }
    Measure::from_density(tree, density)
}
