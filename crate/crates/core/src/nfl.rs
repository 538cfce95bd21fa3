//! No-free-lunch decisions: static arbitrage claims, equivalent zero-penalty
//! measures, zero-cost strategies and the joint verdict.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::pricing::{martingale_checks, price};
use crate::random::{random_leaf_claim, random_stopping_time, random_stopping_time_between};
use crate::scenario::{minimal_penalty, selection_to_measure, MeasureSelection, PenaltyValue, ScenarioModel};
use crate::settings::Settings;
use crate::tree::{Claim, FiltrationTree, Measure, StoppingTime};

/// Optimal values of the static LP at or below this are free lunches.
pub const FREE_LUNCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    StaticArbitrageClaim,
    ZeroPenaltyEquivalentMeasure,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeLunchCertificate {
    pub kind: CertificateKind,
    pub claim: Option<Claim>,
    pub measure: Option<Measure>,
}

impl FreeLunchCertificate {
    pub fn none() -> Self {
        FreeLunchCertificate { kind: CertificateKind::None, claim: None, measure: None }
    }

    pub fn arbitrage(claim: Claim) -> Self {
        FreeLunchCertificate { kind: CertificateKind::StaticArbitrageClaim, claim: Some(claim), measure: None }
    }

    pub fn measure(r: Measure) -> Self {
        FreeLunchCertificate { kind: CertificateKind::ZeroPenaltyEquivalentMeasure, claim: None, measure: Some(r) }
    }

    /// Re-derives the certificate's defining properties from the model.
    pub fn validate(&self, model: &ScenarioModel, settings: &Settings) -> Result<bool> {
        let tree = model.tree();
        match (self.kind, &self.claim, &self.measure) {
            (CertificateKind::StaticArbitrageClaim, Some(x), None) => {
                let v = x.leaf_values(tree);
                if v.iter().any(|&a| a < 0.0) || v.iter().all(|&a| a == 0.0) {
                    return Ok(false);
                }
                let p = price(model, x, &StoppingTime::root(tree))?;
                Ok(p.values()[0] <= FREE_LUNCH_TOL)
            }
            (CertificateKind::ZeroPenaltyEquivalentMeasure, None, Some(r)) => {
                if r.density().iter().any(|&d| d < settings.positivity_tol) {
                    return Ok(false);
                }
                Ok(root_penalty_is_zero(model, r, settings)?)
            }
            (CertificateKind::None, None, None) => Ok(true),
            _ => Ok(false),
        }
    }
}

fn root_penalty_is_zero(model: &ScenarioModel, r: &Measure, settings: &Settings) -> Result<bool> {
    let tree = model.tree();
    let alpha = minimal_penalty(model, r, &StoppingTime::root(tree), &StoppingTime::leaves(tree), settings)?;
    Ok(matches!(alpha.values[0], Some(PenaltyValue::Finite(a)) if a.abs() <= FREE_LUNCH_TOL))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticFreeLunch {
    /// Leaf claim `X >= 0` with `sum X = 1` and root ask at most [`FREE_LUNCH_TOL`].
    pub claim: Claim,
    /// Optimal value of the normalized program (the claim's root ask).
    pub value: f64,
}

/// Minimizes the root ask over nonnegative leaf claims summing to one.
/// A value within [`FREE_LUNCH_TOL`] of zero exposes a static free lunch.
///
/// The program has one row per selection, so it is solved in dual form:
/// maximize `z - sum_i y_i alpha_i` over `y` in the simplex with
/// `z <= sum_i y_i Q_i(w)` at every leaf. The claim is read off the leaf
/// shadow prices.
pub fn find_static_free_lunch(model: &ScenarioModel, settings: &Settings) -> Result<Option<StaticFreeLunch>> {
    model.require_normalized()?;
    let tree = model.tree();
    let root = tree.root();
    let leaves = StoppingTime::leaves(tree);
    let sels = model.selections(settings)?;
    let n = tree.num_leaves();
    let k = sels.len();
    let laws: Vec<Vec<f64>> = sels.iter().map(|s| selection_to_measure(model, s).probabilities(tree)).collect();
    let mut objective: Vec<f64> = sels.iter().map(|s| -model.accumulated_penalty(s, root, &leaves)).collect();
    objective.push(1.0);
    let mut prog = LinearProgram::maximize(objective);
    prog.set_free(k);
    for leaf in 0..n {
        let mut row: Vec<f64> = laws.iter().map(|q| -q[leaf]).collect();
        row.push(1.0);
        prog.add_constraint(row, Relation::Le, 0.0);
    }
    let mut simplex = vec![1.0; k];
    simplex.push(0.0);
    prog.add_constraint(simplex, Relation::Eq, 1.0);
    let sol = lp::solve_with(&prog, settings)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalBreakdown(format!("static free lunch program ended {:?}", sol.status)));
    }
    if sol.value > FREE_LUNCH_TOL {
        return Ok(None);
    }
    let mut values: Vec<f64> = sol.duals[..n].iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::NumericalBreakdown("static free lunch multipliers vanish".into()));
    }
    values.iter_mut().for_each(|x| *x /= total);
    Ok(Some(StaticFreeLunch { claim: Claim::from_leaves(tree, values)?, value: sol.value }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentMeasure {
    pub measure: Measure,
    /// Smallest leaf probability of the mixture (the max-min value).
    pub margin: f64,
    /// Zero-penalty selections mixed into the measure, with their weights.
    pub components: Vec<(MeasureSelection, f64)>,
}

/// Searches the mixtures of zero-penalty selections for the one whose
/// smallest leaf probability is largest. Returns it when that probability
/// exceeds the positivity tolerance.
pub fn find_zero_penalty_equivalent_measure(model: &ScenarioModel, settings: &Settings) -> Result<Option<EquivalentMeasure>> {
    model.require_normalized()?;
    let tree = model.tree();
    let nodes: Vec<_> = tree.internal_nodes().collect();
    let sels = model.selections_over(&nodes, |_, e| e.penalty == 0.0, settings.enumeration_cap)?;
    let laws: Vec<Vec<f64>> = sels.iter().map(|s| selection_to_measure(model, s).probabilities(tree)).collect();
    let k = sels.len();
    let mut objective = vec![0.0; k + 1];
    objective[k] = 1.0;
    let mut prog = LinearProgram::maximize(objective);
    prog.set_free(k);
    let mut simplex = vec![1.0; k];
    simplex.push(0.0);
    prog.add_constraint(simplex, Relation::Eq, 1.0);
    for leaf in 0..tree.num_leaves() {
        let mut row: Vec<f64> = laws.iter().map(|q| q[leaf]).collect();
        row.push(-1.0);
        prog.add_constraint(row, Relation::Ge, 0.0);
    }
    let sol = lp::solve_with(&prog, settings)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalBreakdown(format!("equivalent measure program ended {:?}", sol.status)));
    }
    if sol.value <= settings.positivity_tol {
        return Ok(None);
    }
    let weights: Vec<f64> = sol.point[..k].iter().map(|&w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut probs = vec![0.0; tree.num_leaves()];
    let mut components = Vec::new();
    for ((sel, q), &w) in sels.into_iter().zip(&laws).zip(&weights) {
        if w <= 0.0 {
            continue;
        }
        let w = w / total;
        for (p, qi) in probs.iter_mut().zip(q) {
            *p += w * qi;
        }
        components.push((sel, w));
    }
    let measure = Measure::from_probabilities(tree, &probs)?;
    let margin = probs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Some(EquivalentMeasure { measure, margin, components }))
}

/// One exchange at `tau`: deliver `y` and receive `z`, both paid at the leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Swap {
    pub tau: StoppingTime,
    pub z: Claim,
    pub y: Claim,
}

/// A claim bought at nonpositive root price followed by self-financing swaps.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCostStrategy {
    pub initial: Claim,
    pub swaps: Vec<Swap>,
}

impl ZeroCostStrategy {
    pub fn zero(tree: &FiltrationTree) -> Self {
        ZeroCostStrategy { initial: Claim::zero(StoppingTime::leaves(tree)), swaps: Vec::new() }
    }

    /// `X_0 + sum (Z_i - Y_i)` as a leaf claim.
    pub fn terminal(&self, tree: &FiltrationTree) -> Claim {
        let mut total = self.initial.leaf_values(tree);
        for s in &self.swaps {
            for ((t, z), y) in total.iter_mut().zip(s.z.leaf_values(tree)).zip(s.y.leaf_values(tree)) {
                *t += z - y;
            }
        }
        Claim::from_leaves(tree, total).expect("one value per leaf")
    }

    /// Root price of the initial claim is nonpositive, swap times are
    /// nondecreasing and each swap costs no more than it earns at its time.
    pub fn is_valid(&self, model: &ScenarioModel, tol: f64) -> Result<bool> {
        let tree = model.tree();
        if price(model, &self.initial, &StoppingTime::root(tree))?.values()[0] > tol {
            return Ok(false);
        }
        for pair in self.swaps.windows(2) {
            if !pair[0].tau.precedes(tree, &pair[1].tau) {
                return Ok(false);
            }
        }
        for s in &self.swaps {
            let ask = price(model, &s.z, &s.tau)?;
            let bid = price(model, &s.y.neg(), &s.tau)?.neg();
            if ask.values().iter().zip(bid.values()).any(|(a, b)| a > &(b + tol)) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Random strategy whose initial claim costs exactly zero and whose swaps
/// bind: `ask_tau(Z) = bid_tau(Y)` on every atom.
pub fn sample_zero_cost<R: Rng + ?Sized>(model: &ScenarioModel, rng: &mut R, n_swaps: usize) -> Result<ZeroCostStrategy> {
    let tree = model.tree();
    let root = StoppingTime::root(tree);
    let leaves = StoppingTime::leaves(tree);
    let raw = random_leaf_claim(rng, tree, 1.0);
    let cost = price(model, &raw, &root)?.values()[0];
    let initial = raw.map(|v| v - cost);
    let mut swaps = Vec::with_capacity(n_swaps);
    let mut tau = random_stopping_time(rng, tree, 0.5);
    for i in 0..n_swaps {
        if i > 0 {
            tau = random_stopping_time_between(rng, tree, &tau, &leaves, 0.5);
        }
        let y = random_leaf_claim(rng, tree, 1.0).map(f64::abs);
        let z_raw = random_leaf_claim(rng, tree, 1.0).map(f64::abs);
        let ask = price(model, &z_raw, &tau)?;
        let bid = price(model, &y.neg(), &tau)?.neg();
        let shift = bid.zip_with(&ask, |b, a| b - a)?;
        let z = z_raw.shift_by(tree, &shift)?;
        swaps.push(Swap { tau: tau.clone(), z, y });
    }
    Ok(ZeroCostStrategy { initial, swaps })
}

/// Sample sizes for the corroborating checks of [`nfl_verdict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NflSampling {
    pub claims: usize,
    pub strategies: usize,
    pub swaps: usize,
}

impl Default for NflSampling {
    fn default() -> Self {
        NflSampling { claims: 20, strategies: 20, swaps: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NflReport {
    /// No free lunch by sampled zero-cost strategies (`E_R X <= 0`).
    pub multiperiod: bool,
    /// No static free lunch by the normalized program.
    pub static_check: bool,
    /// An equivalent zero-penalty measure exists.
    pub measure_check: bool,
    /// The bid/ask sandwich holds for that measure on sampled claims.
    pub sandwich_check: bool,
    pub static_free_lunch: Option<StaticFreeLunch>,
    pub measure: Option<EquivalentMeasure>,
    pub certificate: FreeLunchCertificate,
    /// Largest `E_R X` over sampled zero-cost strategies.
    pub worst_strategy_value: Option<f64>,
}

impl NflReport {
    pub fn no_free_lunch(&self) -> bool {
        self.static_check
    }
}

/// Decides no free lunch four ways and insists that they agree.
pub fn nfl_verdict<R: Rng + ?Sized>(
    model: &ScenarioModel,
    rng: &mut R,
    sampling: NflSampling,
    settings: &Settings,
) -> Result<NflReport> {
    let tree = model.tree();
    let static_fl = find_static_free_lunch(model, settings)?;
    let measure = find_zero_penalty_equivalent_measure(model, settings)?;

    let (multiperiod, sandwich, worst, certificate) = match (&static_fl, &measure) {
        (Some(fl), None) => (false, false, None, FreeLunchCertificate::arbitrage(fl.claim.clone())),
        (None, Some(m)) => {
            let r = &m.measure;
            let sandwich = root_penalty_is_zero(model, r, settings)? && {
                let mut ok = true;
                for _ in 0..sampling.claims {
                    let x = random_leaf_claim(rng, tree, 1.0);
                    ok &= martingale_checks(model, &x, r, settings.feasibility_tol)?.passed();
                }
                ok
            };
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..sampling.strategies {
                let s = sample_zero_cost(model, rng, sampling.swaps)?;
                worst = worst.max(r.expectation(tree, &s.terminal(tree)));
            }
            let multiperiod = sampling.strategies == 0 || worst <= FREE_LUNCH_TOL;
            (multiperiod, sandwich, Some(worst), FreeLunchCertificate::measure(r.clone()))
        }
        (Some(_), Some(m)) => {
            return Err(Error::InconsistentVerdicts(format!(
                "static free lunch found alongside an equivalent measure with margin {}",
                m.margin
            )))
        }
        (None, None) => {
            return Err(Error::InconsistentVerdicts(
                "no static free lunch but no equivalent zero-penalty measure".into(),
            ))
        }
    };
    let static_check = static_fl.is_none();
    let measure_check = measure.is_some();
    if multiperiod != static_check || sandwich != static_check {
        return Err(Error::InconsistentVerdicts(format!(
            "multiperiod {multiperiod}, static {static_check}, measure {measure_check}, sandwich {sandwich}"
        )));
    }
    if !certificate.validate(model, settings)? {
        return Err(Error::InconsistentVerdicts("certificate does not validate".into()));
    }
    Ok(NflReport {
        multiperiod,
        static_check,
        measure_check,
        sandwich_check: sandwich,
        static_free_lunch: static_fl,
        measure,
        certificate,
        worst_strategy_value: worst,
    })
}
