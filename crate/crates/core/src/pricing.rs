//! Ask and bid prices of claims by backward induction, plus executable
//! checks of the pricing axioms.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, Relation};
use crate::scenario::{minimal_penalty, minimal_penalty_for_law, DualRepresentation, PenaltyValue, Scenario, ScenarioModel};
use crate::settings::Settings;
use crate::tree::{
    conditional_expectation, count_local_stopping_times, generating_stopping_times, local_stopping_cuts,
    AdaptedProcess, Claim, FiltrationTree, Measure, NodeId, StoppingTime,
};

/// A dynamic pricing procedure: the ask price at `sigma` of a claim.
pub trait PricingProcedure {
    fn tree(&self) -> &FiltrationTree;
    fn price(&self, x: &Claim, sigma: &StoppingTime) -> Result<Claim>;
}

impl PricingProcedure for ScenarioModel {
    fn tree(&self) -> &FiltrationTree {
        ScenarioModel::tree(self)
    }

    fn price(&self, x: &Claim, sigma: &StoppingTime) -> Result<Claim> {
        price(self, x, sigma)
    }
}

/// Ask value of `x` at every node from the root down to `x.at()`; `None`
/// below the claim's stopping time.
pub fn node_values(model: &ScenarioModel, x: &Claim) -> Vec<Option<f64>> {
    node_values_with_policy(model, x).0
}

fn node_values_with_policy(model: &ScenarioModel, x: &Claim) -> (Vec<Option<f64>>, Vec<Option<usize>>) {
    let tree = model.tree();
    let mut values = vec![None; tree.len()];
    let mut policy = vec![None; tree.len()];
    for (&v, &val) in x.at().nodes().iter().zip(x.values()) {
        values[v] = Some(val);
    }
    let internal: Vec<NodeId> = tree.internal_nodes().collect();
    let mut child_vals = Vec::new();
    for &v in internal.iter().rev() {
        if !x.at().is_strictly_before(tree, v) {
            continue;
        }
        child_vals.clear();
        child_vals.extend(tree.children(v).iter().map(|&c| values[c].expect("children are priced first")));
        let (idx, val) = model.node_step(v, &child_vals);
        values[v] = Some(val);
        policy[v] = Some(idx);
    }
    (values, policy)
}

/// Price together with the menu entry chosen at every node that was
/// evaluated (lowest index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct Priced {
    pub claim: Claim,
    pub policy: Vec<Option<usize>>,
}

pub fn price_with_policy(model: &ScenarioModel, x: &Claim, sigma: &StoppingTime) -> Result<Priced> {
    let tree = model.tree();
    if !sigma.precedes(tree, x.at()) {
        return Err(Error::NotOrdered("pricing time must precede the claim".into()));
    }
    let (values, policy) = node_values_with_policy(model, x);
    let claim = Claim::new(sigma.clone(), sigma.nodes().iter().map(|&v| values[v].expect("priced")).collect())?;
    Ok(Priced { claim, policy })
}

/// `Pi_{sigma, x.at}(x)`.
pub fn price(model: &ScenarioModel, x: &Claim, sigma: &StoppingTime) -> Result<Claim> {
    price_with_policy(model, x, sigma).map(|p| p.claim)
}

/// Price of `x` at `sigma` recomputed from the dual side: the best
/// scenario expectation less that scenario's minimal penalty. Agrees with
/// [`price`] whenever the stated penalties are convex-conjugate consistent.
pub fn reprice_with_minimal_penalty(
    dual: &dyn DualRepresentation,
    x: &Claim,
    sigma: &StoppingTime,
    settings: &Settings,
) -> Result<Claim> {
    let tree = dual.tree();
    let tau = x.at();
    if !sigma.precedes(tree, tau) {
        return Err(Error::NotOrdered("pricing time must precede the claim".into()));
    }
    let mut values = Vec::with_capacity(sigma.len());
    for &a in sigma.nodes() {
        let payoff: Vec<f64> = tau.atoms_below(tree, a).map(|b| x.values()[b]).collect();
        let mut best = f64::NEG_INFINITY;
        for sc in dual.scenarios(a, tau, settings)? {
            if let PenaltyValue::Finite(alpha) = minimal_penalty_for_law(dual, a, tau, &sc.law, settings)? {
                let gain: f64 = sc.law.iter().zip(&payoff).map(|(q, v)| q * v).sum();
                best = best.max(gain - alpha);
            }
        }
        values.push(best);
    }
    Claim::new(sigma.clone(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BidAsk {
    pub bid: Claim,
    pub ask: Claim,
}

pub fn bid_ask(proc: &dyn PricingProcedure, x: &Claim, sigma: &StoppingTime) -> Result<BidAsk> {
    let ask = proc.price(x, sigma)?;
    let bid = proc.price(&x.neg(), sigma)?.neg();
    Ok(BidAsk { bid, ask })
}

type FamilyPenalty = dyn Fn(usize, NodeId, &StoppingTime) -> f64 + Send + Sync;

/// An explicit, not necessarily stable, family of measures with penalties.
/// The ask price on an atom is the best penalized conditional expectation
/// over the members that charge the atom.
#[derive(Clone)]
pub struct MeasureFamily {
    tree: FiltrationTree,
    members: Vec<Measure>,
    penalty: Arc<FamilyPenalty>,
}

impl fmt::Debug for MeasureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasureFamily").field("members", &self.members).finish_non_exhaustive()
    }
}

impl MeasureFamily {
    pub fn sublinear(tree: FiltrationTree, members: Vec<Measure>) -> Result<Self> {
        Self::with_penalty(tree, members, |_, _, _| 0.0)
    }

    /// `penalty(member, atom, tau)` is the member's penalty on `atom` for
    /// claims maturing at `tau`.
    pub fn with_penalty(
        tree: FiltrationTree,
        members: Vec<Measure>,
        penalty: impl Fn(usize, NodeId, &StoppingTime) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyList);
        }
        if let Some(m) = members.iter().find(|m| m.density().len() != tree.num_leaves()) {
            return Err(Error::InvalidMeasure(format!(
                "member has {} densities for {} leaves",
                m.density().len(),
                tree.num_leaves()
            )));
        }
        Ok(MeasureFamily { tree, members, penalty: Arc::new(penalty) })
    }

    pub fn members(&self) -> &[Measure] {
        &self.members
    }

    pub fn penalty(&self, member: usize, atom: NodeId, tau: &StoppingTime) -> f64 {
        (self.penalty)(member, atom, tau)
    }
}

impl PricingProcedure for MeasureFamily {
    fn tree(&self) -> &FiltrationTree {
        &self.tree
    }

    fn price(&self, x: &Claim, sigma: &StoppingTime) -> Result<Claim> {
        let mut best = vec![f64::NEG_INFINITY; sigma.len()];
        for (i, q) in self.members.iter().enumerate() {
            let cond = conditional_expectation(&self.tree, q, x, sigma)?;
            for (k, v) in cond.values.iter().enumerate() {
                if let Some(v) = v {
                    let val = v - self.penalty(i, sigma.nodes()[k], x.at());
                    best[k] = best[k].max(val);
                }
            }
        }
        if let Some(k) = best.iter().position(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::ZeroConditioningMass(sigma.nodes()[k]));
        }
        Claim::new(sigma.clone(), best)
    }
}

impl DualRepresentation for MeasureFamily {
    fn tree(&self) -> &FiltrationTree {
        &self.tree
    }

    fn scenarios(&self, atom: NodeId, tau: &StoppingTime, _: &Settings) -> Result<Vec<Scenario>> {
        let mut out = Vec::new();
        for (i, q) in self.members.iter().enumerate() {
            let mass = q.mass(&self.tree, atom);
            if mass <= 0.0 {
                continue;
            }
            let law = tau.atoms_below(&self.tree, atom).map(|b| q.mass(&self.tree, tau.nodes()[b]) / mass).collect();
            out.push(Scenario { law, penalty: self.penalty(i, atom, tau) });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Axiom {
    Monotonicity,
    TranslationInvariance,
    Convexity { lambda: f64 },
    Normalization,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axiom::Monotonicity => f.write_str("monotonicity"),
            Axiom::TranslationInvariance => f.write_str("translation invariance"),
            Axiom::Convexity { lambda } => write!(f, "convexity at lambda={lambda}"),
            Axiom::Normalization => f.write_str("normalization"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    pub sample: usize,
    pub node: NodeId,
    /// The side that should be smaller (or equal).
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AxiomReport {
    pub checks: usize,
    pub violations: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    fn compare(&mut self, axiom: Axiom, sample: usize, sigma: &StoppingTime, lhs: &Claim, rhs: &Claim, tol: f64, equal: bool) {
        for ((&node, &l), &r) in sigma.nodes().iter().zip(lhs.values()).zip(rhs.values()) {
            self.checks += 1;
            let slack = tol * (1.0 + l.abs().max(r.abs()));
            let bad = if equal { (l - r).abs() > slack } else { l > r + slack };
            if bad {
                self.violations.push(AxiomViolation { axiom, sample, node, lhs: l, rhs: r });
            }
        }
    }
}

/// Check monotonicity, translation invariance (with a random
/// `F_sigma`-measurable shift), convexity at each `lambda`, and
/// normalization on every sample pair.
pub fn check_axioms<R: Rng + ?Sized>(
    proc: &dyn PricingProcedure,
    sigma: &StoppingTime,
    samples: &[(Claim, Claim)],
    lambdas: &[f64],
    rng: &mut R,
    tol: f64,
) -> Result<AxiomReport> {
    let tree = proc.tree();
    let mut report = AxiomReport::default();
    let mut seen_times: Vec<StoppingTime> = Vec::new();
    for (i, (x, y)) in samples.iter().enumerate() {
        let (x, y) = if x.at() == y.at() {
            (x.clone(), y.clone())
        } else {
            let leaves = StoppingTime::leaves(tree);
            (x.lift_to(tree, &leaves)?, y.lift_to(tree, &leaves)?)
        };
        let px = proc.price(&x, sigma)?;
        let py = proc.price(&y, sigma)?;

        let lo = x.zip_with(&y, f64::min)?;
        let hi = x.zip_with(&y, f64::max)?;
        report.compare(Axiom::Monotonicity, i, sigma, &proc.price(&lo, sigma)?, &px, tol, false);
        report.compare(Axiom::Monotonicity, i, sigma, &px, &proc.price(&hi, sigma)?, tol, false);

        let z = Claim::from_fn(sigma.clone(), |_| rng.gen_range(-1.0..1.0));
        let shifted = proc.price(&x.shift_by(tree, &z)?, sigma)?;
        report.compare(Axiom::TranslationInvariance, i, sigma, &shifted, &px.zip_with(&z, |a, b| a + b)?, tol, true);

        for &lambda in lambdas {
            let mix = x.zip_with(&y, |a, b| lambda * a + (1.0 - lambda) * b)?;
            let bound = px.zip_with(&py, |a, b| lambda * a + (1.0 - lambda) * b)?;
            report.compare(Axiom::Convexity { lambda }, i, sigma, &proc.price(&mix, sigma)?, &bound, tol, false);
        }

        if !seen_times.contains(x.at()) {
            seen_times.push(x.at().clone());
            let zero = proc.price(&Claim::zero(x.at().clone()), sigma)?;
            report.compare(Axiom::Normalization, i, sigma, &zero, &Claim::zero(sigma.clone()), tol, true);
        }
    }
    Ok(report)
}

/// `Pi(lambda X) != lambda Pi(X)` on atom `node` of `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityWitness {
    pub sigma: StoppingTime,
    pub claim: Claim,
    pub lambda: f64,
    pub node: NodeId,
    pub scaled_price: f64,
    pub price_scaled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SublinearReport {
    /// Every menu penalty is zero.
    pub sublinear: bool,
    pub witness: Option<HomogeneityWitness>,
    /// Sampled homogeneity failures for a model declared sublinear.
    pub sampled_failures: usize,
}

const HOMOGENEITY_LAMBDAS: [f64; 3] = [2.0, 5.0, 17.0];
const WITNESS_LAMBDAS: [f64; 9] = [2.0, 5.0, 17.0, 100.0, 1e3, 1e4, 1e5, 1e6, 1e7];

/// Decide sublinearity from the menus and back the answer with sampling:
/// homogeneity is spot-checked on random claims for sublinear models, and a
/// witness with `Pi(lambda X) > lambda Pi(X)` is searched for otherwise.
pub fn check_sublinear<R: Rng + ?Sized>(model: &ScenarioModel, rng: &mut R, settings: &Settings) -> Result<SublinearReport> {
    let tree = model.tree();
    let leaves = StoppingTime::leaves(tree);
    let root = StoppingTime::root(tree);
    if model.all_penalties_zero() {
        let mut failures = 0;
        for _ in 0..50 {
            let x = Claim::from_leaves(tree, (0..tree.num_leaves()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
            let base = price(model, &x, &root)?.values()[0];
            for lambda in HOMOGENEITY_LAMBDAS {
                let scaled = price(model, &x.scale(lambda), &root)?.values()[0];
                if (scaled - lambda * base).abs() > 1e-12 * (1.0 + scaled.abs()) {
                    failures += 1;
                }
            }
        }
        return Ok(SublinearReport { sublinear: true, witness: None, sampled_failures: failures });
    }

    let mut candidates: Vec<(StoppingTime, Claim)> = Vec::new();
    for v in tree.internal_nodes() {
        let menu = model.menu(v);
        for e in menu.iter().filter(|e| e.penalty > 0.0) {
            let Some(y) = dominating_direction(&e.kernel, menu, settings)? else { continue };
            let sigma = StoppingTime::at_time(tree, tree.time(v))?;
            let mut values = vec![0.0; tree.num_leaves()];
            for (k, &c) in tree.children(v).iter().enumerate() {
                for l in tree.leaf_range(c) {
                    values[l] = y[k];
                }
            }
            candidates.push((sigma, Claim::new(leaves.clone(), values)?));
        }
    }
    for _ in 0..200 {
        let values = (0..tree.num_leaves()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        candidates.push((root.clone(), Claim::new(leaves.clone(), values)?));
    }
    for (sigma, x) in candidates {
        let base = price(model, &x, &sigma)?;
        for lambda in WITNESS_LAMBDAS {
            let scaled = price(model, &x.scale(lambda), &sigma)?;
            for (k, &node) in sigma.nodes().iter().enumerate() {
                let (s, b) = (scaled.values()[k], lambda * base.values()[k]);
                if s - b > 1e-9 * (1.0 + s.abs()) {
                    let witness = HomogeneityWitness { sigma, claim: x, lambda, node, scaled_price: s, price_scaled: b };
                    return Ok(SublinearReport { sublinear: false, witness: Some(witness), sampled_failures: 0 });
                }
            }
        }
    }
    Ok(SublinearReport { sublinear: false, witness: None, sampled_failures: 0 })
}

/// A direction `y` in `[-1, 1]^children` along which `kernel` beats every
/// zero-penalty kernel of the menu, if one exists.
fn dominating_direction(kernel: &[f64], menu: &[crate::scenario::MenuEntry], settings: &Settings) -> Result<Option<Vec<f64>>> {
    let n = kernel.len();
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let mut prog = LinearProgram::maximize(obj);
    for j in 0..n {
        prog.set_bounds(j, -1.0, 1.0);
    }
    prog.set_bounds(n, f64::NEG_INFINITY, 2.0);
    for other in menu.iter().filter(|e| e.penalty == 0.0) {
        let mut row: Vec<f64> = kernel.iter().zip(&other.kernel).map(|(a, b)| b - a).collect();
        row.push(1.0);
        prog.add_constraint(row, Relation::Le, 0.0);
    }
    let sol = lp::solve_with(&prog, settings)?;
    Ok((sol.is_optimal() && sol.value > 1e-9).then(|| sol.point[..n].to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub nu: StoppingTime,
    pub sigma: StoppingTime,
    pub tau: StoppingTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyViolation {
    pub chain: usize,
    pub sample: usize,
    pub node: NodeId,
    pub composed: f64,
    pub direct: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeConsistencyReport {
    pub checks: usize,
    pub violations: Vec<ConsistencyViolation>,
}

impl TimeConsistencyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `Pi_{nu,sigma}(Pi_{sigma,tau}(X)) = Pi_{nu,tau}(X)` for each chain.
/// Samples are leaf claims; each is read on the atoms of `tau` at the first
/// leaf of every atom.
pub fn check_time_consistency(
    proc: &dyn PricingProcedure,
    chains: &[Chain],
    samples: &[Claim],
    tol: f64,
) -> Result<TimeConsistencyReport> {
    let tree = proc.tree();
    let mut report = TimeConsistencyReport::default();
    for (ci, chain) in chains.iter().enumerate() {
        if !chain.nu.precedes(tree, &chain.sigma) || !chain.sigma.precedes(tree, &chain.tau) {
            return Err(Error::NotOrdered(format!("chain {ci} is not ordered")));
        }
        for (si, sample) in samples.iter().enumerate() {
            let leaf_vals = sample.leaf_values(tree);
            let x = Claim::from_fn(chain.tau.clone(), |v| leaf_vals[tree.leaf_range(v).start]);
            let inner = proc.price(&x, &chain.sigma)?;
            let composed = proc.price(&inner, &chain.nu)?;
            let direct = proc.price(&x, &chain.nu)?;
            for (k, &node) in chain.nu.nodes().iter().enumerate() {
                report.checks += 1;
                let (c, d) = (composed.values()[k], direct.values()[k]);
                if (c - d).abs() > tol * (1.0 + c.abs().max(d.abs())) {
                    report.violations.push(ConsistencyViolation { chain: ci, sample: si, node, composed: c, direct: d });
                }
            }
        }
    }
    Ok(report)
}

/// Every ordered chain drawn from the generating stopping times.
pub fn generating_chains(tree: &FiltrationTree) -> Vec<Chain> {
    let times = generating_stopping_times(tree);
    let mut out = Vec::new();
    for nu in &times {
        for sigma in times.iter().filter(|s| nu.precedes(tree, s)) {
            for tau in times.iter().filter(|t| sigma.precedes(tree, t)) {
                out.push(Chain { nu: nu.clone(), sigma: sigma.clone(), tau: tau.clone() });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MartingaleCheck {
    /// `E_R(ask_{t+1} | F_t) <= ask_t`.
    AskSupermartingale,
    /// `E_R(bid_{t+1} | F_t) >= bid_t`.
    BidSubmartingale,
    /// `bid <= E_R(X | F_sigma) <= ask` on the given test stopping time.
    Sandwich { stopping_time: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleViolation {
    pub check: MartingaleCheck,
    pub node: NodeId,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupermartingaleReport {
    pub checks: usize,
    pub violations: Vec<MartingaleViolation>,
}

impl SupermartingaleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Under an equivalent zero-penalty measure `r`, the ask process of `x` is
/// an `r`-supermartingale, the bid process a submartingale, and the
/// conditional expectation sits between them.
pub fn check_supermartingale(model: &ScenarioModel, x: &Claim, r: &Measure, settings: &Settings) -> Result<SupermartingaleReport> {
    let tree = model.tree();
    if !r.is_equivalent() {
        return Err(Error::PreconditionViolation("measure is not equivalent to the reference measure".into()));
    }
    let root = StoppingTime::root(tree);
    let leaves = StoppingTime::leaves(tree);
    let alpha = minimal_penalty(model, r, &root, &leaves, settings)?;
    match alpha.values[0] {
        Some(a) if a.finite().is_some_and(|v| v.abs() <= settings.feasibility_tol) => {}
        Some(a) => {
            return Err(Error::PreconditionViolation(format!("measure has minimal penalty {a}, not zero")));
        }
        None => unreachable!("equivalent measures charge the root"),
    }
    martingale_checks(model, x, r, settings.feasibility_tol)
}

/// The inequalities of [`check_supermartingale`] without re-deriving the
/// penalty of `r`; the caller vouches that `r` is an equivalent zero-penalty measure.
pub(crate) fn martingale_checks(model: &ScenarioModel, x: &Claim, r: &Measure, tol: f64) -> Result<SupermartingaleReport> {
    let tree = model.tree();
    let ask = node_values(model, x);
    let bid: Vec<Option<f64>> = node_values(model, &x.neg()).into_iter().map(|v| v.map(|b| -b)).collect();
    let mut report = SupermartingaleReport::default();
    for v in tree.internal_nodes().filter(|&v| x.at().is_strictly_before(tree, v)) {
        let kernel = r.kernel(tree, v).expect("equivalent measure charges every node");
        let children = tree.children(v);
        let next_ask: f64 = children.iter().zip(&kernel).map(|(&c, q)| q * ask[c].unwrap()).sum();
        let next_bid: f64 = children.iter().zip(&kernel).map(|(&c, q)| q * bid[c].unwrap()).sum();
        report.checks += 2;
        if next_ask > ask[v].unwrap() + tol {
            report.violations.push(MartingaleViolation {
                check: MartingaleCheck::AskSupermartingale,
                node: v,
                lhs: next_ask,
                rhs: ask[v].unwrap(),
            });
        }
        if next_bid < bid[v].unwrap() - tol {
            report.violations.push(MartingaleViolation {
                check: MartingaleCheck::BidSubmartingale,
                node: v,
                lhs: bid[v].unwrap(),
                rhs: next_bid,
            });
        }
    }
    let tests: Vec<StoppingTime> =
        generating_stopping_times(tree).into_iter().filter(|s| s.precedes(tree, x.at())).collect();
    for (i, sigma) in tests.iter().enumerate() {
        let e = conditional_expectation(tree, r, x, sigma)?.into_claim()?;
        for (&v, &ev) in sigma.nodes().iter().zip(e.values()) {
            report.checks += 2;
            let check = MartingaleCheck::Sandwich { stopping_time: i };
            if bid[v].unwrap() > ev + tol {
                report.violations.push(MartingaleViolation { check, node: v, lhs: bid[v].unwrap(), rhs: ev });
            }
            if ev > ask[v].unwrap() + tol {
                report.violations.push(MartingaleViolation { check, node: v, lhs: ev, rhs: ask[v].unwrap() });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmericanPrice {
    /// Atomwise supremum over every stopping time between `nu` and `tau`.
    pub enumerated: Claim,
    /// `U = max(Y, one-step price of U)` computed backwards from `tau`.
    pub induction: Claim,
    pub stopping_times: u128,
}

impl AmericanPrice {
    pub fn max_gap(&self) -> f64 {
        self.enumerated.max_abs_diff(&self.induction)
    }

    pub fn agree(&self, tol: f64) -> bool {
        self.max_gap() <= tol
    }
}

/// Ask price at `nu` of the right to receive `y` at a stopping time of the
/// holder's choice between `nu` and `tau`.
pub fn american_price(
    model: &ScenarioModel,
    y: &AdaptedProcess,
    nu: &StoppingTime,
    tau: &StoppingTime,
    settings: &Settings,
) -> Result<AmericanPrice> {
    let tree = model.tree();
    if !nu.precedes(tree, tau) {
        return Err(Error::NotOrdered("nu must precede tau".into()));
    }
    let count = nu
        .nodes()
        .iter()
        .fold(0u128, |acc, &a| acc.saturating_add(count_local_stopping_times(tree, a, tau)));
    if count > settings.stopping_time_cap as u128 {
        return Err(Error::EnumerationOverflow { count, cap: settings.stopping_time_cap });
    }

    let mut stop_here = vec![false; tree.len()];
    let mut enumerated = Vec::with_capacity(nu.len());
    for &a in nu.nodes() {
        let mut best = f64::NEG_INFINITY;
        for cut in local_stopping_cuts(tree, a, tau) {
            for &v in &cut {
                stop_here[v] = true;
            }
            best = best.max(stopped_value(model, y, a, &stop_here));
            for &v in &cut {
                stop_here[v] = false;
            }
        }
        enumerated.push(best);
    }

    let induction = nu.nodes().iter().map(|&a| snell_value(model, y, a, tau)).collect();
    Ok(AmericanPrice {
        enumerated: Claim::new(nu.clone(), enumerated)?,
        induction: Claim::new(nu.clone(), induction)?,
        stopping_times: count,
    })
}

fn stopped_value(model: &ScenarioModel, y: &AdaptedProcess, node: NodeId, stop_here: &[bool]) -> f64 {
    if stop_here[node] {
        return y.at(node);
    }
    let vals: Vec<f64> = model.tree().children(node).iter().map(|&c| stopped_value(model, y, c, stop_here)).collect();
    model.node_step(node, &vals).1
}

fn snell_value(model: &ScenarioModel, y: &AdaptedProcess, node: NodeId, tau: &StoppingTime) -> f64 {
    let tree = model.tree();
    if tau.contains(tree, node) {
        return y.at(node);
    }
    let vals: Vec<f64> = tree.children(node).iter().map(|&c| snell_value(model, y, c, tau)).collect();
    y.at(node).max(model.node_step(node, &vals).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::MenuEntry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trinomial_two_entries() -> ScenarioModel {
        let t = FiltrationTree::uniform(1, 3).unwrap();
        ScenarioModel::from_fn(t, |_, _| {
            vec![MenuEntry::free(vec![1.0 / 3.0, 0.0, 2.0 / 3.0]), MenuEntry::new(vec![0.0, 1.0, 0.0], 0.2)]
        })
        .unwrap()
    }

    #[test]
    fn trinomial_menu_prices() {
        let m = trinomial_two_entries();
        let t = m.tree().clone();
        let root = StoppingTime::root(&t);
        let x = Claim::from_leaves(&t, vec![1.0, 0.0, 0.0]).unwrap();
        let ba = bid_ask(&m, &x, &root).unwrap();
        assert!((ba.ask.values()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((ba.bid.values()[0] - 0.2).abs() < 1e-15);
        let priced = price_with_policy(&m, &x, &root).unwrap();
        assert_eq!(priced.policy[0], Some(0));
    }

    #[test]
    fn normalization_and_translation() {
        let m = trinomial_two_entries();
        let t = m.tree().clone();
        let root = StoppingTime::root(&t);
        assert_eq!(price(&m, &Claim::zero(StoppingTime::leaves(&t)), &root).unwrap().values(), &[0.0]);
        let c = Claim::constant(StoppingTime::leaves(&t), 2.5);
        let ba = bid_ask(&m, &c, &root).unwrap();
        assert!((ba.ask.values()[0] - 2.5).abs() < 1e-15 && (ba.bid.values()[0] - 2.5).abs() < 1e-15);
        let z = Claim::new(root.clone(), vec![0.7]).unwrap();
        assert_eq!(price(&m, &z, &root).unwrap(), z);
    }

    #[test]
    fn sublinear_spread_is_expectation_gap() {
        let t = FiltrationTree::uniform(1, 2).unwrap();
        let m = ScenarioModel::from_fn(t.clone(), |_, _| {
            vec![MenuEntry::free(vec![0.2, 0.8]), MenuEntry::free(vec![0.6, 0.4])]
        })
        .unwrap();
        let x = Claim::from_leaves(&t, vec![1.0, -1.0]).unwrap();
        let ba = bid_ask(&m, &x, &StoppingTime::root(&t)).unwrap();
        assert!((ba.ask.values()[0] - 0.2).abs() < 1e-15);
        assert!((ba.bid.values()[0] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn axioms_hold_and_negative_penalty_breaks_normalization() {
        let m = trinomial_two_entries();
        let t = m.tree().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<(Claim, Claim)> = (0..20)
            .map(|_| {
                let mut f = || Claim::from_leaves(&t, (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
                (f(), f())
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let root = StoppingTime::root(&t);
        let r = check_axioms(&m, &root, &samples, &[0.0, 0.3, 0.5, 1.0], &mut rng, 1e-12).unwrap();
        assert!(r.passed(), "{:?}", r.violations);

        let broken = ScenarioModel::new_unnormalized(
            t.clone(),
            vec![vec![MenuEntry::free(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]), MenuEntry::new(vec![0.0, 1.0, 0.0], -0.1)], vec![], vec![], vec![]],
        )
        .unwrap();
        let r = check_axioms(&broken, &root, &samples, &[0.5], &mut rng, 1e-12).unwrap();
        assert!(r.violations.iter().any(|v| v.axiom == Axiom::Normalization));
    }

    #[test]
    fn sublinear_detection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = Settings::default();
        let t = FiltrationTree::uniform(2, 2).unwrap();
        let zero = ScenarioModel::from_fn(t.clone(), |_, _| {
            vec![MenuEntry::free(vec![0.5, 0.5]), MenuEntry::free(vec![0.7, 0.3])]
        })
        .unwrap();
        let r = check_sublinear(&zero, &mut rng, &s).unwrap();
        assert!(r.sublinear && r.sampled_failures == 0);

        let convex = ScenarioModel::from_fn(t.clone(), |_, v| {
            let mut menu = vec![MenuEntry::free(vec![0.5, 0.5])];
            if v == 0 {
                menu.push(MenuEntry::new(vec![0.9, 0.1], 0.3));
            }
            menu
        })
        .unwrap();
        let r = check_sublinear(&convex, &mut rng, &s).unwrap();
        assert!(!r.sublinear);
        let w = r.witness.expect("positive penalty at the root is eventually active");
        assert_eq!(w.node, 0);
        assert!(w.scaled_price > w.price_scaled);
        let direct = price(&convex, &w.claim.scale(w.lambda), &w.sigma).unwrap().values()[0];
        assert!((direct - w.scaled_price).abs() < 1e-12);
    }

    #[test]
    fn time_consistency_holds_for_backward_induction() {
        let t = FiltrationTree::uniform(2, 2).unwrap();
        let m = ScenarioModel::from_fn(t.clone(), |_, v| {
            vec![MenuEntry::free(vec![0.5, 0.5]), MenuEntry::new(vec![0.8, 0.2], 0.05 * (v + 1) as f64)]
        })
        .unwrap();
        let samples: Vec<Claim> = (0..5)
            .map(|k| Claim::from_leaves(&t, (0..4).map(|l| ((k * 7 + l * 3) % 5) as f64 - 2.0).collect()).unwrap())
            .collect();
        let r = check_time_consistency(&m, &generating_chains(&t), &samples, 1e-12).unwrap();
        assert!(r.passed());
        assert!(r.checks > 50);
    }

    #[test]
    fn supermartingale_sandwich_on_binomial() {
        let t = FiltrationTree::uniform(2, 2).unwrap();
        let m = ScenarioModel::from_fn(t.clone(), |_, _| {
            vec![MenuEntry::free(vec![0.5, 0.5]), MenuEntry::free(vec![0.3, 0.7])]
        })
        .unwrap();
        let s = Settings::default();
        let r = Measure::reference(&t);
        let x = Claim::from_leaves(&t, vec![0.0, 3.0, 1.0, -1.0]).unwrap();
        let report = check_supermartingale(&m, &x, &r, &s).unwrap();
        assert!(report.passed(), "{:?}", report.violations);
        let ba = bid_ask(&m, &x, &StoppingTime::root(&t)).unwrap();
        let e = r.expectation(&t, &x);
        assert!(ba.bid.values()[0] < e && e < ba.ask.values()[0]);

        let c = Claim::constant(StoppingTime::root(&t), 1.5);
        assert!(check_supermartingale(&m, &c, &r, &s).unwrap().passed());

        let outside = Measure::from_probabilities(&t, &[0.7, 0.1, 0.1, 0.1]).unwrap();
        assert!(matches!(check_supermartingale(&m, &x, &outside, &s), Err(Error::PreconditionViolation(_))));
        let killed = Measure::from_probabilities(&t, &[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(check_supermartingale(&m, &x, &killed, &s), Err(Error::PreconditionViolation(_))));
    }

    fn binomial_stock() -> (FiltrationTree, AdaptedProcess, ScenarioModel) {
        let t = FiltrationTree::uniform(2, 2).unwrap();
        // ids: 0 root; 1 up, 2 down; 3 uu, 4 ud, 5 du, 6 dd
        let s = AdaptedProcess::new(&t, vec![1.0, 2.0, 0.5, 4.0, 1.0, 1.0, 0.25]).unwrap();
        let m = ScenarioModel::from_fn(t.clone(), |_, _| vec![MenuEntry::free(vec![1.0 / 3.0, 2.0 / 3.0])]).unwrap();
        (t, s, m)
    }

    #[test]
    fn american_put_matches_hand_enumeration() {
        let (t, s, m) = binomial_stock();
        let put = AdaptedProcess::new(&t, s.values.iter().map(|v| (1.0 - v).max(0.0)).collect()).unwrap();
        let (root, leaves) = (StoppingTime::root(&t), StoppingTime::leaves(&t));
        let a = american_price(&m, &put, &root, &leaves, &Settings::default()).unwrap();
        assert_eq!(a.stopping_times, 5);
        // Stop at the down node (0.5) versus continuing: (1/3)*0 + (2/3)*0.75 = 0.5.
        // Root: max(0, (2/3)*0.5) = 1/3.
        assert!((a.enumerated.values()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(a.agree(1e-12));
        let capped = american_price(&m, &put, &root, &leaves, &Settings { stopping_time_cap: 4, ..Settings::default() });
        assert!(matches!(capped, Err(Error::EnumerationOverflow { .. })));
    }

    #[test]
    fn american_trivial_cases() {
        let (t, _, m) = binomial_stock();
        let (root, leaves) = (StoppingTime::root(&t), StoppingTime::leaves(&t));
        let c = AdaptedProcess::new(&t, vec![2.0; 7]).unwrap();
        let a = american_price(&m, &c, &root, &leaves, &Settings::default()).unwrap();
        assert!((a.enumerated.values()[0] - 2.0).abs() < 1e-15);
        let inc = AdaptedProcess::new(&t, (0..7).map(|v| t.time(v) as f64).collect()).unwrap();
        let a = american_price(&m, &inc, &root, &leaves, &Settings::default()).unwrap();
        assert!((a.enumerated.values()[0] - 2.0).abs() < 1e-15);
    }
}
