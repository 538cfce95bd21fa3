//! Rectangular scenario models: one menu of (transition kernel, penalty)
//! pairs per internal node.
//!
//! Choosing one entry independently at every node yields a measure together
//! with a penalty that adds up along the tree, so the induced family is
//! stable under pasting and its penalty satisfies the cocycle identity by
//! construction.

use std::fmt;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::settings::Settings;
use crate::tree::{generating_stopping_times, Claim, FiltrationTree, Measure, NodeId, StoppingTime};

const KERNEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MenuEntry {
    /// Transition probabilities to the node's children, in child order.
    pub kernel: Vec<f64>,
    pub penalty: f64,
}

impl MenuEntry {
    pub fn new(kernel: Vec<f64>, penalty: f64) -> Self {
        MenuEntry { kernel, penalty }
    }

    pub fn free(kernel: Vec<f64>) -> Self {
        Self::new(kernel, 0.0)
    }

    pub fn expectation(&self, child_values: &[f64]) -> f64 {
        lp::dot(&self.kernel, child_values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioModel {
    tree: FiltrationTree,
    menus: Vec<Vec<MenuEntry>>,
}

/// A node whose menu does not reach a minimum penalty of exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationIssue {
    pub node: NodeId,
    pub min_penalty: f64,
}

impl ScenarioModel {
    /// Validate every invariant, including nonnegative penalties with a
    /// zero minimum at each node.
    pub fn new(tree: FiltrationTree, menus: Vec<Vec<MenuEntry>>) -> Result<Self> {
        let model = Self::new_unnormalized(tree, menus)?;
        if let Some(issue) = model.normalization_issues().first() {
            return Err(Error::InvalidModel(format!(
                "menu at node {} has minimum penalty {} (must be 0 with no negative entries)",
                issue.node, issue.min_penalty
            )));
        }
        Ok(model)
    }

    /// Structural checks only: kernel shapes and probabilities, finite
    /// penalties. Used for inputs that are themselves under inspection.
    pub fn new_unnormalized(tree: FiltrationTree, menus: Vec<Vec<MenuEntry>>) -> Result<Self> {
        if menus.len() != tree.len() {
            return Err(Error::InvalidModel(format!(
                "{} menus for {} nodes",
                menus.len(),
                tree.len()
            )));
        }
        for (node, menu) in menus.iter().enumerate() {
            let arity = tree.children(node).len();
            if arity == 0 {
                if !menu.is_empty() {
                    return Err(Error::InvalidModel(format!("leaf {node} has a menu")));
                }
                continue;
            }
            if menu.is_empty() {
                return Err(Error::InvalidModel(format!("node {node} has an empty menu")));
            }
            for (i, e) in menu.iter().enumerate() {
                check_kernel(&e.kernel, arity)
                    .map_err(|m| Error::InvalidModel(format!("node {node}, entry {i}: {m}")))?;
                if !e.penalty.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "node {node}, entry {i}: penalty must be finite"
                    )));
                }
            }
        }
        Ok(ScenarioModel { tree, menus })
    }

    pub fn from_fn(tree: FiltrationTree, mut menu: impl FnMut(&FiltrationTree, NodeId) -> Vec<MenuEntry>) -> Result<Self> {
        let menus = (0..tree.len())
            .map(|v| if tree.is_leaf(v) { Vec::new() } else { menu(&tree, v) })
            .collect();
        Self::new(tree, menus)
    }

    /// The model whose only scenario is the reference measure.
    pub fn reference(tree: FiltrationTree) -> Self {
        Self::from_fn(tree, |t, v| vec![MenuEntry::free(t.reference_kernel(v))])
            .expect("reference kernels are valid")
    }

    pub fn tree(&self) -> &FiltrationTree {
        &self.tree
    }

    pub fn menu(&self, node: NodeId) -> &[MenuEntry] {
        &self.menus[node]
    }

    pub fn menus(&self) -> &[Vec<MenuEntry>] {
        &self.menus
    }

    pub fn entry(&self, node: NodeId, index: usize) -> &MenuEntry {
        &self.menus[node][index]
    }

    pub fn normalization_issues(&self) -> Vec<NormalizationIssue> {
        self.tree
            .internal_nodes()
            .filter_map(|v| {
                let min = self.menus[v].iter().map(|e| e.penalty).fold(f64::INFINITY, f64::min);
                (min != 0.0).then_some(NormalizationIssue { node: v, min_penalty: min })
            })
            .collect()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization_issues().is_empty()
    }

    pub fn require_normalized(&self) -> Result<()> {
        match self.normalization_issues().first() {
            None => Ok(()),
            Some(i) => Err(Error::InvalidModel(format!(
                "menu at node {} has minimum penalty {}",
                i.node, i.min_penalty
            ))),
        }
    }

    /// True when every menu entry carries zero penalty.
    pub fn all_penalties_zero(&self) -> bool {
        self.menus.iter().flatten().all(|e| e.penalty == 0.0)
    }

    /// One-step operator at `node`: best entry (lowest index on ties) and its value.
    pub fn node_step(&self, node: NodeId, child_values: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, e) in self.menus[node].iter().enumerate() {
            let v = e.expectation(child_values) - e.penalty;
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// Number of selections over `nodes` (saturating).
    pub fn count_selections(&self, nodes: &[NodeId]) -> u128 {
        nodes.iter().fold(1u128, |acc, &v| acc.saturating_mul(self.menus[v].len() as u128))
    }

    /// Every selection that varies the entries at `nodes` (entry 0 elsewhere)
    /// and uses only entries accepted by `allowed`.
    pub fn selections_over(
        &self,
        nodes: &[NodeId],
        allowed: impl Fn(NodeId, &MenuEntry) -> bool,
        cap: u64,
    ) -> Result<Vec<MeasureSelection>> {
        let options: Vec<Vec<usize>> = nodes
            .iter()
            .map(|&v| (0..self.menus[v].len()).filter(|&i| allowed(v, &self.menus[v][i])).collect())
            .collect();
        let count = options.iter().fold(1u128, |acc, o| acc.saturating_mul(o.len() as u128));
        if count > cap as u128 {
            return Err(Error::EnumerationOverflow { count, cap });
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut digits = vec![0usize; nodes.len()];
        let mut base = vec![0usize; self.tree.len()];
        for (k, &v) in nodes.iter().enumerate() {
            base[v] = options[k][0];
        }
        loop {
            let mut choice = base.clone();
            for (k, &v) in nodes.iter().enumerate() {
                choice[v] = options[k][digits[k]];
            }
            out.push(MeasureSelection { choice });
            let mut k = 0;
            loop {
                if k == nodes.len() {
                    return Ok(out);
                }
                digits[k] += 1;
                if digits[k] < options[k].len() {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
        }
    }

    /// All selections over every internal node.
    pub fn selections(&self, settings: &Settings) -> Result<Vec<MeasureSelection>> {
        let nodes: Vec<NodeId> = self.tree.internal_nodes().collect();
        self.selections_over(&nodes, |_, _| true, settings.enumeration_cap)
    }

    /// Probability of moving from `from` to its descendant `to` under `sel`.
    pub fn transition(&self, sel: &MeasureSelection, from: NodeId, to: NodeId) -> f64 {
        let mut p = 1.0;
        let mut v = to;
        while v != from {
            let parent = self.tree.parent(v).expect("`from` is an ancestor of `to`");
            let idx = child_index(&self.tree, parent, v);
            p *= self.menus[parent][sel.choice[parent]].kernel[idx];
            v = parent;
        }
        p
    }

    /// Law of the atoms of `tau` below `atom` under `sel`, started at `atom`.
    pub fn conditional_law(&self, sel: &MeasureSelection, atom: NodeId, tau: &StoppingTime) -> Vec<f64> {
        tau.atoms_below(&self.tree, atom)
            .map(|b| self.transition(sel, atom, tau.nodes()[b]))
            .collect()
    }

    /// Penalty accumulated from `node` up to (not including) `tau`,
    /// in expectation under `sel`.
    pub fn accumulated_penalty(&self, sel: &MeasureSelection, node: NodeId, tau: &StoppingTime) -> f64 {
        if tau.contains(&self.tree, node) || self.tree.is_leaf(node) {
            return 0.0;
        }
        let e = &self.menus[node][sel.choice[node]];
        let future: f64 = self
            .tree
            .children(node)
            .iter()
            .zip(&e.kernel)
            .map(|(&c, &q)| if q == 0.0 { 0.0 } else { q * self.accumulated_penalty(sel, c, tau) })
            .sum();
        e.penalty + future
    }
}

/// Shape, sign and sum checks for one kernel at a node with `arity` children.
pub fn check_kernel(kernel: &[f64], arity: usize) -> std::result::Result<(), String> {
    if kernel.len() != arity {
        return Err(format!("kernel has {} entries but the node has {arity} children", kernel.len()));
    }
    if kernel.iter().any(|q| !q.is_finite() || *q < 0.0) {
        return Err("kernel entries must be finite and nonnegative".into());
    }
    let total: f64 = kernel.iter().sum();
    if (total - 1.0).abs() > KERNEL_TOL {
        return Err(format!("kernel sums to {total}, not 1"));
    }
    Ok(())
}

pub(crate) fn child_index(tree: &FiltrationTree, parent: NodeId, child: NodeId) -> usize {
    tree.children(parent).iter().position(|&c| c == child).expect("child of parent")
}

/// Internal nodes in the subtree of `node` that lie strictly before `tau`.
pub fn region(tree: &FiltrationTree, node: NodeId, tau: &StoppingTime) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![node];
    while let Some(v) = stack.pop() {
        if tau.contains(tree, v) || tree.is_leaf(v) {
            continue;
        }
        out.push(v);
        stack.extend(tree.children(v).iter().rev());
    }
    out
}

/// One menu index per node (ignored at leaves).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MeasureSelection {
    choice: Vec<usize>,
}

impl MeasureSelection {
    pub fn new(model: &ScenarioModel, choice: Vec<usize>) -> Result<Self> {
        if choice.len() != model.tree.len() {
            return Err(Error::InvalidModel(format!(
                "selection has {} entries for {} nodes",
                choice.len(),
                model.tree.len()
            )));
        }
        for v in model.tree.internal_nodes() {
            if choice[v] >= model.menus[v].len() {
                return Err(Error::InvalidModel(format!(
                    "selection picks entry {} at node {v}, whose menu has {}",
                    choice[v],
                    model.menus[v].len()
                )));
            }
        }
        Ok(MeasureSelection { choice })
    }

    /// Entry 0 everywhere.
    pub fn first(model: &ScenarioModel) -> Self {
        MeasureSelection { choice: vec![0; model.tree.len()] }
    }

    pub fn choice(&self) -> &[usize] {
        &self.choice
    }

    pub fn entry(&self, node: NodeId) -> usize {
        self.choice[node]
    }

    pub fn set(&mut self, node: NodeId, index: usize) {
        self.choice[node] = index;
    }
}

/// Product of the chosen kernels along each path, as a density.
pub fn selection_to_measure(model: &ScenarioModel, sel: &MeasureSelection) -> Measure {
    let tree = model.tree();
    let mut density = vec![0.0; tree.num_leaves()];
    for (pos, &leaf) in tree.leaves().iter().enumerate() {
        density[pos] = model.transition(sel, tree.root(), leaf) / tree.leaf_weights()[pos];
    }
    Measure::from_density(tree, density).expect("products of kernels form a probability")
}

/// `alpha_{nu,tau}` of the selected measure on each atom of `nu`.
pub fn aggregate_penalty(
    model: &ScenarioModel,
    sel: &MeasureSelection,
    nu: &StoppingTime,
    tau: &StoppingTime,
) -> Result<Claim> {
    if !nu.precedes(model.tree(), tau) {
        return Err(Error::NotOrdered("nu must precede tau".into()));
    }
    Ok(Claim::from_fn(nu.clone(), |a| model.accumulated_penalty(sel, a, tau)))
}

/// A penalty value that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyValue {
    Finite(f64),
    Infinite,
}

impl PenaltyValue {
    pub fn is_finite(self) -> bool {
        matches!(self, PenaltyValue::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            PenaltyValue::Finite(v) => Some(v),
            PenaltyValue::Infinite => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn approx_eq(self, other: PenaltyValue, tol: f64) -> bool {
        match (self, other) {
            (PenaltyValue::Finite(a), PenaltyValue::Finite(b)) => (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())),
            (PenaltyValue::Infinite, PenaltyValue::Infinite) => true,
            _ => false,
        }
    }
}

impl fmt::Display for PenaltyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyValue::Finite(v) => write!(f, "{v}"),
            PenaltyValue::Infinite => f.write_str("inf"),
        }
    }
}

/// `alpha_{nu,tau}(Q)` evaluated on one atom of `nu`, for the measure of a
/// selection in some envelope model.
pub trait PenaltyProcess {
    fn value(&self, sel: &MeasureSelection, node: NodeId, tau: &StoppingTime) -> Result<PenaltyValue>;
}

/// The penalty a scenario model itself assigns to its selections.
pub struct AggregatedPenalty<'a> {
    pub model: &'a ScenarioModel,
}

impl PenaltyProcess for AggregatedPenalty<'_> {
    fn value(&self, sel: &MeasureSelection, node: NodeId, tau: &StoppingTime) -> Result<PenaltyValue> {
        Ok(PenaltyValue::Finite(self.model.accumulated_penalty(sel, node, tau)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocycleViolation {
    pub selection: usize,
    pub nu: Vec<NodeId>,
    pub sigma: Vec<NodeId>,
    pub tau: Vec<NodeId>,
    pub node: NodeId,
    pub direct: PenaltyValue,
    pub composed: PenaltyValue,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CocycleReport {
    pub checks: usize,
    pub violations: Vec<CocycleViolation>,
}

impl CocycleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `alpha_{nu,tau} = alpha_{nu,sigma} + E_Q(alpha_{sigma,tau} | F_nu)` for
/// every selection of `model` and every ordered triple drawn from the
/// generating stopping times.
pub fn check_cocycle(penalty: &dyn PenaltyProcess, model: &ScenarioModel, settings: &Settings) -> Result<CocycleReport> {
    let tree = model.tree();
    let times = generating_stopping_times(tree);
    let sels = model.selections(settings)?;
    let mut report = CocycleReport::default();
    for (si, sel) in sels.iter().enumerate() {
        for nu in &times {
            for sigma in times.iter().filter(|s| nu.precedes(tree, s)) {
                for tau in times.iter().filter(|t| sigma.precedes(tree, t)) {
                    for &a in nu.nodes() {
                        let direct = penalty.value(sel, a, tau)?;
                        let mut composed = penalty.value(sel, a, sigma)?;
                        for b in sigma.atoms_below(tree, a) {
                            let node_b = sigma.nodes()[b];
                            let w = model.transition(sel, a, node_b);
                            if w == 0.0 {
                                continue;
                            }
                            composed = match (composed, penalty.value(sel, node_b, tau)?) {
                                (PenaltyValue::Finite(x), PenaltyValue::Finite(y)) => PenaltyValue::Finite(x + w * y),
                                _ => PenaltyValue::Infinite,
                            };
                        }
                        report.checks += 1;
                        if !direct.approx_eq(composed, settings.feasibility_tol) {
                            report.violations.push(CocycleViolation {
                                selection: si,
                                nu: nu.nodes().to_vec(),
                                sigma: sigma.nodes().to_vec(),
                                tau: tau.nodes().to_vec(),
                                node: a,
                                direct,
                                composed,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// A conditional law over the atoms of `tau` below some atom, with the
/// penalty attached to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub law: Vec<f64>,
    pub penalty: f64,
}

/// Anything that can list the scenarios of its dual representation on an atom.
pub trait DualRepresentation {
    fn tree(&self) -> &FiltrationTree;
    fn scenarios(&self, atom: NodeId, tau: &StoppingTime, settings: &Settings) -> Result<Vec<Scenario>>;
}

impl DualRepresentation for ScenarioModel {
    fn tree(&self) -> &FiltrationTree {
        &self.tree
    }

    fn scenarios(&self, atom: NodeId, tau: &StoppingTime, settings: &Settings) -> Result<Vec<Scenario>> {
        let nodes = region(&self.tree, atom, tau);
        let sels = self.selections_over(&nodes, |_, _| true, settings.enumeration_cap)?;
        Ok(sels
            .iter()
            .map(|s| Scenario {
                law: self.conditional_law(s, atom, tau),
                penalty: self.accumulated_penalty(s, atom, tau),
            })
            .collect())
    }
}

/// Smallest mixture penalty reproducing `target` (a law over the atoms of
/// `tau` below `atom`), or infinity when no mixture of scenarios matches.
pub fn minimal_penalty_for_law(
    dual: &dyn DualRepresentation,
    atom: NodeId,
    tau: &StoppingTime,
    target: &[f64],
    settings: &Settings,
) -> Result<PenaltyValue> {
    let scenarios = dual.scenarios(atom, tau, settings)?;
    if scenarios.is_empty() {
        return Ok(PenaltyValue::Infinite);
    }
    let k = scenarios.len();
    let mut prog = LinearProgram::minimize(scenarios.iter().map(|s| s.penalty).collect());
    prog.add_constraint(vec![1.0; k], Relation::Eq, 1.0);
    for (b, &t) in target.iter().enumerate() {
        prog.add_constraint(scenarios.iter().map(|s| s.law[b]).collect(), Relation::Eq, t);
    }
    let sol = lp::solve_with(&prog, settings)?;
    match sol.status {
        LpStatus::Optimal => Ok(PenaltyValue::Finite(sol.value)),
        LpStatus::Infeasible => Ok(PenaltyValue::Infinite),
        LpStatus::Unbounded => Err(Error::NumericalBreakdown("penalty mixture program is unbounded".into())),
    }
}

/// Per-atom minimal penalty on `sigma`; `None` on atoms that `r` does not charge.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyClaim {
    pub at: StoppingTime,
    pub values: Vec<Option<PenaltyValue>>,
}

impl PenaltyClaim {
    /// Largest penalty over charged atoms.
    pub fn max(&self) -> PenaltyValue {
        let mut best = PenaltyValue::Finite(0.0);
        for v in self.values.iter().flatten() {
            best = match (best, *v) {
                (PenaltyValue::Finite(a), PenaltyValue::Finite(b)) => PenaltyValue::Finite(a.max(b)),
                _ => PenaltyValue::Infinite,
            };
        }
        best
    }
}

/// Convex conjugate of `Pi_{sigma,tau}` at `r`, atom by atom.
pub fn minimal_penalty(
    dual: &dyn DualRepresentation,
    r: &Measure,
    sigma: &StoppingTime,
    tau: &StoppingTime,
    settings: &Settings,
) -> Result<PenaltyClaim> {
    let tree = dual.tree();
    if !sigma.precedes(tree, tau) {
        return Err(Error::NotOrdered("sigma must precede tau".into()));
    }
    let probs = r.probabilities(tree);
    let mut values = Vec::with_capacity(sigma.len());
    for &a in sigma.nodes() {
        let mass: f64 = probs[tree.leaf_range(a)].iter().sum();
        if mass <= 0.0 {
            values.push(None);
            continue;
        }
        let law: Vec<f64> = tau
            .atoms_below(tree, a)
            .map(|b| probs[tree.leaf_range(tau.nodes()[b])].iter().sum::<f64>() / mass)
            .collect();
        values.push(Some(minimal_penalty_for_law(dual, a, tau, &law, settings)?));
    }
    Ok(PenaltyClaim { at: sigma.clone(), values })
}

/// Minimal penalty of a dual representation, evaluated on the selections of
/// an envelope model (whose measures need not belong to the representation).
pub struct MinimalPenaltyProcess<'a> {
    pub dual: &'a dyn DualRepresentation,
    pub envelope: &'a ScenarioModel,
    pub settings: Settings,
}

impl PenaltyProcess for MinimalPenaltyProcess<'_> {
    fn value(&self, sel: &MeasureSelection, node: NodeId, tau: &StoppingTime) -> Result<PenaltyValue> {
        let law = self.envelope.conditional_law(sel, node, tau);
        minimal_penalty_for_law(self.dual, node, tau, &law, &self.settings)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NondegeneracyReport {
    /// Highest nodes that no scenario can reach.
    pub dead_nodes: Vec<NodeId>,
    /// Leaf positions below the dead nodes.
    pub dead_leaves: Vec<usize>,
}

impl NondegeneracyReport {
    pub fn passed(&self) -> bool {
        self.dead_nodes.is_empty()
    }
}

/// Every leaf must be charged by at least one selection.
pub fn check_nondegenerate(model: &ScenarioModel) -> NondegeneracyReport {
    let tree = model.tree();
    let mut report = NondegeneracyReport::default();
    let mut stack = vec![tree.root()];
    while let Some(v) = stack.pop() {
        for (k, &c) in tree.children(v).iter().enumerate() {
            if model.menu(v).iter().all(|e| e.kernel[k] <= 0.0) {
                report.dead_nodes.push(c);
                report.dead_leaves.extend(tree.leaf_range(c));
            } else {
                stack.push(c);
            }
        }
    }
    report.dead_nodes.sort_unstable();
    report.dead_leaves.sort_unstable();
    report
}
