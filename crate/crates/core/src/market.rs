//! Reference assets and the bounds they induce: martingale-measure
//! polytope, calibration to quotes, good-deal caps and hedging constraints.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lp::{self, dot, solve_square, subsets, LinearProgram, LpSolution, LpStatus, Relation, Sense};
use crate::pricing::price;
use crate::random::{random_stopping_time, random_stopping_time_between};
use crate::scenario::{minimal_penalty, selection_to_measure, MeasureSelection, PenaltyValue, ScenarioModel};
use crate::settings::Settings;
use crate::tree::{AdaptedProcess, Claim, FiltrationTree, Measure, NodeId, StoppingTime};

/// Discounted price of one reference asset at every node.
pub type AssetProcess = AdaptedProcess;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Whether `other` lies inside `self`, up to `tol` on each end.
    pub fn contains(&self, other: &Interval, tol: f64) -> bool {
        self.lower <= other.lower + tol && other.upper <= self.upper + tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuotedOption {
    pub payoff: Claim,
    pub bid: f64,
    pub ask: f64,
}

impl QuotedOption {
    pub fn new(payoff: Claim, bid: f64, ask: f64) -> Result<Self> {
        if !(bid.is_finite() && ask.is_finite()) || bid > ask {
            return Err(Error::InvalidMarket(format!("quote bid {bid} above ask {ask}")));
        }
        Ok(QuotedOption { payoff, bid, ask })
    }
}

/// Convex hull of finitely many positions, one weight per risky asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    vertices: Vec<Vec<f64>>,
}

impl ConstraintSet {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let Some(d) = vertices.first().map(Vec::len) else {
            return Err(Error::InvalidMarket("constraint set has no vertices".into()));
        };
        if vertices.iter().any(|v| v.len() != d || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidMarket("constraint vertices must be finite and share one dimension".into()));
        }
        // 0 = sum lambda_v h_v with lambda in the simplex.
        let k = vertices.len();
        let mut prog = LinearProgram::minimize(vec![0.0; k]);
        prog.add_constraint(vec![1.0; k], Relation::Eq, 1.0);
        for j in 0..d {
            prog.add_constraint(vertices.iter().map(|v| v[j]).collect(), Relation::Eq, 0.0);
        }
        if lp::solve(&prog)?.status != LpStatus::Optimal {
            return Err(Error::InvalidMarket("constraint set does not contain the zero position".into()));
        }
        Ok(ConstraintSet { vertices })
    }

    /// The set `{0}`: no hedging allowed.
    pub fn origin(dim: usize) -> Self {
        ConstraintSet { vertices: vec![vec![0.0; dim]] }
    }

    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidMarket("box bounds must pair up with lower <= upper".into()));
        }
        let d = lower.len();
        let vertices = (0..1usize << d)
            .map(|mask| (0..d).map(|j| if mask >> j & 1 == 1 { upper[j] } else { lower[j] }).collect())
            .collect();
        Self::new(vertices)
    }

    /// Bounded polyhedron `{h : rows[i] . h <= rhs[i]}`, converted to vertices.
    pub fn from_halfspaces(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Self> {
        let Some(d) = rows.first().map(Vec::len) else {
            return Err(Error::InvalidMarket("no half-spaces given".into()));
        };
        if rows.len() != rhs.len() || rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidMarket("half-space rows must share one dimension".into()));
        }
        for j in 0..d {
            for sign in [1.0, -1.0] {
                let mut obj = vec![0.0; d];
                obj[j] = sign;
                let mut prog = LinearProgram::maximize(obj);
                for v in 0..d {
                    prog.set_free(v);
                }
                for (r, &b) in rows.iter().zip(rhs) {
                    prog.add_constraint(r.clone(), Relation::Le, b);
                }
                match lp::solve(&prog)?.status {
                    LpStatus::Optimal => {}
                    LpStatus::Unbounded => return Err(Error::InvalidMarket("half-spaces do not bound a polytope".into())),
                    LpStatus::Infeasible => return Err(Error::InvalidMarket("half-spaces have empty intersection".into())),
                }
            }
        }
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        for pick in subsets(rows.len(), d) {
            let a = pick.iter().map(|&i| rows[i].clone()).collect();
            let b = pick.iter().map(|&i| rhs[i]).collect();
            let Some(h) = solve_square(a, b, 1e-12) else { continue };
            let inside = rows.iter().zip(rhs).all(|(r, &b)| dot(r, &h) <= b + 1e-9);
            let fresh = vertices.iter().all(|v| v.iter().zip(&h).any(|(x, y)| (x - y).abs() > 1e-9));
            if inside && fresh {
                vertices.push(h);
            }
        }
        Self::new(vertices)
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    /// `max_{h in H} h . v`.
    pub fn support(&self, v: &[f64]) -> f64 {
        self.vertices.iter().map(|h| dot(h, v)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Bound `A` on the one-step second moment of the density, per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodDealCaps {
    pub global: f64,
    pub per_node: Vec<(NodeId, f64)>,
}

impl GoodDealCaps {
    pub fn uniform(cap: f64) -> Self {
        GoodDealCaps { global: cap, per_node: Vec::new() }
    }

    pub fn with_node(mut self, node: NodeId, cap: f64) -> Self {
        self.per_node.push((node, cap));
        self
    }

    pub fn cap(&self, node: NodeId) -> f64 {
        self.per_node.iter().rev().find(|(v, _)| *v == node).map_or(self.global, |&(_, a)| a)
    }

    pub fn validate(&self, tree: &FiltrationTree) -> Result<()> {
        if let Some(&(v, _)) = self.per_node.iter().find(|(v, _)| *v >= tree.len()) {
            return Err(Error::ForeignNode(v));
        }
        let all = std::iter::once(self.global).chain(self.per_node.iter().map(|&(_, a)| a));
        for a in all {
            if a.is_nan() || a < 1.0 {
                return Err(Error::InvalidMarket(format!("good-deal cap {a} is below 1")));
            }
        }
        Ok(())
    }
}

fn check_assets(tree: &FiltrationTree, assets: &[AssetProcess]) -> Result<()> {
    for (k, a) in assets.iter().enumerate() {
        if a.values.len() != tree.len() {
            return Err(Error::InvalidMarket(format!(
                "asset {k} has {} values for {} nodes",
                a.values.len(),
                tree.len()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftViolation {
    pub node: NodeId,
    pub entry: usize,
    pub asset: usize,
    /// `sum_c q_c S(c) - S(n)`.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpotFailure {
    pub asset: usize,
    pub multiple: i32,
    pub sigma: StoppingTime,
    pub tau: StoppingTime,
    pub node: NodeId,
    pub price: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtendsReport {
    pub checks: usize,
    pub drift_violations: Vec<DriftViolation>,
    pub spot_failures: Vec<SpotFailure>,
}

impl ExtendsReport {
    pub fn passed(&self) -> bool {
        self.drift_violations.is_empty() && self.spot_failures.is_empty()
    }
}

/// Menu kernels whose one-step expectation of some asset moves it.
pub fn kernel_drifts(model: &ScenarioModel, assets: &[AssetProcess], tol: f64) -> Result<Vec<DriftViolation>> {
    let tree = model.tree();
    check_assets(tree, assets)?;
    let mut out = Vec::new();
    for v in tree.internal_nodes() {
        let children = tree.children(v);
        for (e, entry) in model.menu(v).iter().enumerate() {
            for (k, s) in assets.iter().enumerate() {
                let drift = children.iter().zip(&entry.kernel).map(|(&c, q)| q * s.at(c)).sum::<f64>() - s.at(v);
                if drift.abs() > tol {
                    out.push(DriftViolation { node: v, entry: e, asset: k, drift });
                }
            }
        }
    }
    Ok(out)
}

/// Every kernel must be a martingale kernel for every asset; also checks
/// `Pi_{sigma,tau}(n S_tau) = n S_sigma` for `n` in `-3..=3` on a few
/// random pairs `sigma <= tau`.
pub fn check_extends_dynamics<R: Rng + ?Sized>(
    model: &ScenarioModel,
    assets: &[AssetProcess],
    rng: &mut R,
    settings: &Settings,
) -> Result<ExtendsReport> {
    let tree = model.tree();
    let tol = settings.feasibility_tol;
    let mut report = ExtendsReport {
        checks: (tree.len() - tree.num_leaves()) * assets.len(),
        drift_violations: kernel_drifts(model, assets, tol)?,
        spot_failures: Vec::new(),
    };
    let root = StoppingTime::root(tree);
    let mut pairs = vec![(root.clone(), StoppingTime::leaves(tree))];
    for _ in 0..4 {
        let tau = random_stopping_time(rng, tree, 0.4);
        let sigma = random_stopping_time_between(rng, tree, &root, &tau, 0.5);
        pairs.push((sigma, tau));
    }
    for (k, s) in assets.iter().enumerate() {
        for (sigma, tau) in &pairs {
            for n in -3..=3 {
                let x = s.stopped(tau).scale(n as f64);
                let p = price(model, &x, sigma)?;
                for (&v, &got) in sigma.nodes().iter().zip(p.values()) {
                    report.checks += 1;
                    let expected = n as f64 * s.at(v);
                    if (got - expected).abs() > tol * (1.0 + expected.abs()) {
                        report.spot_failures.push(SpotFailure {
                            asset: k,
                            multiple: n,
                            sigma: sigma.clone(),
                            tau: tau.clone(),
                            node: v,
                            price: got,
                            expected,
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Rows `sum_{leaf under n} q_leaf (S(child toward leaf) - S(n)) = 0`, one
/// per internal node and asset, over leaf probabilities.
fn martingale_rows(tree: &FiltrationTree, assets: &[AssetProcess]) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for v in tree.internal_nodes() {
        for s in assets {
            let mut row = vec![0.0; tree.num_leaves()];
            for l in tree.leaf_range(v) {
                let c = tree.child_toward(v, l).expect("leaf lies below the node");
                row[l] = s.at(c) - s.at(v);
            }
            rows.push(row);
        }
    }
    rows
}

/// Program over leaf probabilities of martingale measures, followed by
/// `extra` further variables (left at their default bounds).
fn mme_program(tree: &FiltrationTree, assets: &[AssetProcess], sense: Sense, objective: Vec<f64>) -> LinearProgram {
    let n = tree.num_leaves();
    let total = objective.len();
    let pad = |mut r: Vec<f64>| {
        r.resize(total, 0.0);
        r
    };
    let mut prog = LinearProgram::new(sense, objective);
    prog.add_constraint(pad(vec![1.0; n]), Relation::Eq, 1.0);
    for row in martingale_rows(tree, assets) {
        prog.add_constraint(pad(row), Relation::Eq, 0.0);
    }
    prog
}

fn pad_objective(leaf_part: &[f64], extra: usize) -> Vec<f64> {
    let mut v = leaf_part.to_vec();
    v.resize(leaf_part.len() + extra, 0.0);
    v
}

fn optimal(sol: LpSolution, empty: Error) -> Result<f64> {
    match sol.status {
        LpStatus::Optimal => Ok(sol.value),
        LpStatus::Infeasible => Err(empty),
        LpStatus::Unbounded => Err(Error::NumericalBreakdown("bounded program reported unbounded".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmeBounds {
    pub bounds: Interval,
    /// Whether some martingale measure charges every leaf.
    pub equivalent: bool,
    /// Largest achievable smallest leaf probability.
    pub margin: f64,
}

/// Range of `E_Q X` over the closed set of martingale measures.
pub fn mme_bounds(tree: &FiltrationTree, assets: &[AssetProcess], x: &Claim, settings: &Settings) -> Result<MmeBounds> {
    check_assets(tree, assets)?;
    let xv = x.leaf_values(tree);
    let upper = optimal(lp::solve_with(&mme_program(tree, assets, Sense::Maximize, xv.clone()), settings)?, Error::NoMartingaleMeasure)?;
    let lower = optimal(lp::solve_with(&mme_program(tree, assets, Sense::Minimize, xv), settings)?, Error::NoMartingaleMeasure)?;
    let margin = max_min_probability(tree, assets, &[], settings)?.map_or(0.0, |(s, _)| s);
    Ok(MmeBounds { bounds: Interval { lower, upper }, equivalent: margin > settings.positivity_tol, margin })
}

/// Martingale measure inside every quote band whose smallest leaf
/// probability is largest, with that probability.
fn max_min_probability(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    quotes: &[QuotedOption],
    settings: &Settings,
) -> Result<Option<(f64, Vec<f64>)>> {
    let n = tree.num_leaves();
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let mut prog = mme_program(tree, assets, Sense::Maximize, obj);
    prog.set_free(n);
    for l in 0..n {
        let mut row = vec![0.0; n + 1];
        row[l] = 1.0;
        row[n] = -1.0;
        prog.add_constraint(row, Relation::Ge, 0.0);
    }
    for q in quotes {
        let y = pad_objective(&q.payoff.leaf_values(tree), 1);
        prog.add_constraint(y.clone(), Relation::Ge, q.bid);
        prog.add_constraint(y, Relation::Le, q.ask);
    }
    let sol = lp::solve_with(&prog, settings)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some((sol.value, sol.point[..n].iter().map(|p| p.max(0.0)).collect())),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimBounds {
    pub mme: Interval,
    pub bid: f64,
    pub ask: f64,
}

impl ClaimBounds {
    pub fn holds(&self, tol: f64) -> bool {
        self.mme.lower <= self.bid + tol && self.bid <= self.ask + tol && self.ask <= self.mme.upper + tol
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriceBoundsReport {
    pub claims: Vec<ClaimBounds>,
    /// Indices into `claims` where the sandwich fails.
    pub violations: Vec<usize>,
}

impl PriceBoundsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `sub <= bid <= ask <= sup` at the root for each claim.
pub fn check_price_in_mme_bounds(
    model: &ScenarioModel,
    assets: &[AssetProcess],
    claims: &[Claim],
    settings: &Settings,
) -> Result<PriceBoundsReport> {
    let tree = model.tree();
    let drifts = kernel_drifts(model, assets, settings.feasibility_tol)?;
    if let Some(d) = drifts.first() {
        return Err(Error::PreconditionViolation(format!(
            "entry {} at node {} moves asset {} by {}",
            d.entry, d.node, d.asset, d.drift
        )));
    }
    let root = StoppingTime::root(tree);
    let mut report = PriceBoundsReport::default();
    for (i, x) in claims.iter().enumerate() {
        let mme = mme_bounds(tree, assets, x, settings)?.bounds;
        let ask = price(model, x, &root)?.values()[0];
        let bid = -price(model, &x.neg(), &root)?.values()[0];
        let cb = ClaimBounds { mme, bid, ask };
        if !cb.holds(settings.feasibility_tol) {
            report.violations.push(i);
        }
        report.claims.push(cb);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub measure: Measure,
    pub margin: f64,
}

/// An equivalent martingale measure pricing every quote inside its band.
pub fn calibration_feasible(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    quotes: &[QuotedOption],
    settings: &Settings,
) -> Result<Option<Calibration>> {
    check_assets(tree, assets)?;
    match max_min_probability(tree, assets, quotes, settings)? {
        Some((margin, probs)) if margin > settings.positivity_tol => {
            let total: f64 = probs.iter().sum();
            let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
            Ok(Some(Calibration { measure: Measure::from_probabilities(tree, &probs)?, margin }))
        }
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuoteViolation {
    pub quote: usize,
    pub bid: f64,
    pub ask: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyBoundViolation {
    pub sample: usize,
    pub tau: StoppingTime,
    pub penalty: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub extends: ExtendsReport,
    pub quote_violations: Vec<QuoteViolation>,
    pub penalty_checks: usize,
    pub penalty_violations: Vec<PenaltyBoundViolation>,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.extends.passed() && self.quote_violations.is_empty() && self.penalty_violations.is_empty()
    }
}

/// Extends the asset dynamics, prices every quote inside its band, and
/// charges sampled measures at least their worst quote mispricing.
pub fn check_strong_admissibility<R: Rng + ?Sized>(
    model: &ScenarioModel,
    assets: &[AssetProcess],
    quotes: &[QuotedOption],
    rng: &mut R,
    settings: &Settings,
) -> Result<AdmissibilityReport> {
    let tree = model.tree();
    let tol = settings.feasibility_tol;
    let extends = check_extends_dynamics(model, assets, rng, settings)?;
    let root = StoppingTime::root(tree);
    let mut quote_violations = Vec::new();
    for (l, q) in quotes.iter().enumerate() {
        let ask = price(model, &q.payoff, &root)?.values()[0];
        let bid = -price(model, &q.payoff.neg(), &root)?.values()[0];
        if bid < q.bid - tol || ask > q.ask + tol {
            quote_violations.push(QuoteViolation { quote: l, bid, ask });
        }
    }

    let random_selection = |rng: &mut R| {
        let choice = (0..tree.len()).map(|v| rng.gen_range(0..model.menu(v).len().max(1))).collect();
        selection_to_measure(model, &MeasureSelection::new(model, choice).expect("choices index the menus"))
    };
    let mut samples = vec![Measure::reference(tree)];
    for _ in 0..4 {
        samples.push(random_selection(rng));
        let (a, b) = (random_selection(rng), random_selection(rng));
        let w = rng.gen_range(0.0..1.0);
        let density = a.density().iter().zip(b.density()).map(|(x, y)| w * x + (1.0 - w) * y).collect();
        samples.push(Measure::from_density(tree, density)?);
    }
    let mut taus = vec![StoppingTime::leaves(tree)];
    for q in quotes {
        if !taus.contains(q.payoff.at()) {
            taus.push(q.payoff.at().clone());
        }
    }
    let mut penalty_checks = 0;
    let mut penalty_violations = Vec::new();
    for (i, r) in samples.iter().enumerate() {
        for tau in &taus {
            let bound = quotes
                .iter()
                .filter(|q| q.payoff.at().precedes(tree, tau))
                .map(|q| {
                    let e = r.expectation(tree, &q.payoff);
                    (q.bid - e).max(e - q.ask)
                })
                .fold(0.0, f64::max);
            penalty_checks += 1;
            if let Some(PenaltyValue::Finite(a)) = minimal_penalty(model, r, &root, tau, settings)?.values[0] {
                if a < bound - tol {
                    penalty_violations.push(PenaltyBoundViolation { sample: i, tau: tau.clone(), penalty: a, bound });
                }
            }
        }
    }
    Ok(AdmissibilityReport { extends, quote_violations, penalty_checks, penalty_violations })
}

/// `[inf (E_Q X + beta(Q)), sup (E_Q X - beta(Q))]` over martingale
/// measures, where `beta(Q)` is the worst quote mispricing under `Q`.
pub fn calibrated_bounds(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    quotes: &[QuotedOption],
    x: &Claim,
    settings: &Settings,
) -> Result<Interval> {
    check_assets(tree, assets)?;
    let n = tree.num_leaves();
    let xv = x.leaf_values(tree);
    let with_z = |coeffs: Vec<f64>| {
        let mut r: Vec<f64> = coeffs.iter().map(|c| -c).collect();
        r.push(1.0);
        r
    };
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let mut bounds = [0.0; 2];
    for (slot, sense) in [Sense::Minimize, Sense::Maximize].into_iter().enumerate() {
        let mut prog = mme_program(tree, assets, sense, obj.clone());
        prog.set_free(n);
        // Upper: z <= E X - beta pieces. Lower: z >= E X + beta pieces.
        let (rel, sign) = if sense == Sense::Maximize { (Relation::Le, -1.0) } else { (Relation::Ge, 1.0) };
        prog.add_constraint(with_z(xv.clone()), rel, 0.0);
        for q in quotes {
            let y = q.payoff.leaf_values(tree);
            let x_minus_y: Vec<f64> = xv.iter().zip(&y).map(|(a, b)| a - sign * b).collect();
            let x_plus_y: Vec<f64> = xv.iter().zip(&y).map(|(a, b)| a + sign * b).collect();
            // sign * (bid - E Y) and sign * (E Y - ask).
            prog.add_constraint(with_z(x_minus_y), rel, sign * q.bid);
            prog.add_constraint(with_z(x_plus_y), rel, -sign * q.ask);
        }
        bounds[slot] = optimal(lp::solve_with(&prog, settings)?, Error::NoMartingaleMeasure)?;
    }
    Ok(Interval { lower: bounds[0], upper: bounds[1] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodDealBounds {
    pub bounds: Interval,
    /// Tangent cuts added over both optimizations.
    pub cuts: usize,
}

/// Range of `E_Q X` over martingale measures whose one-step densities obey
/// `sum_c q_c^2 / p_c <= A^2` at every node.
pub fn good_deal_bounds(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    caps: &GoodDealCaps,
    x: &Claim,
    settings: &Settings,
) -> Result<GoodDealBounds> {
    check_assets(tree, assets)?;
    caps.validate(tree)?;
    let feas = mme_program(tree, assets, Sense::Minimize, vec![0.0; tree.num_leaves()]);
    optimal(lp::solve_with(&feas, settings)?, Error::NoMartingaleMeasure)?;
    let xv = x.leaf_values(tree);
    let (lower, c1) = good_deal_extreme(tree, assets, caps, &xv, Sense::Minimize, settings)?;
    let (upper, c2) = good_deal_extreme(tree, assets, caps, &xv, Sense::Maximize, settings)?;
    Ok(GoodDealBounds { bounds: Interval { lower, upper }, cuts: c1 + c2 })
}

/// Kelley cutting planes on the cones `||(Q(c)/sqrt(p_c))_c|| <= A Q(n)`,
/// the one-step constraint multiplied through by `Q(n)`.
fn good_deal_extreme(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    caps: &GoodDealCaps,
    xv: &[f64],
    sense: Sense,
    settings: &Settings,
) -> Result<(f64, usize)> {
    let n = tree.num_leaves();
    let mut prog = mme_program(tree, assets, sense, xv.to_vec());
    let mut cones = Vec::new();
    for v in tree.internal_nodes() {
        let a = caps.cap(v);
        let p = tree.reference_kernel(v);
        if a <= 1.0 {
            // Equality case of Cauchy-Schwarz: the kernel is the reference one.
            for (&c, &pc) in tree.children(v).iter().zip(&p) {
                let mut row = vec![0.0; n];
                for l in tree.leaf_range(v) {
                    row[l] = -pc;
                }
                for l in tree.leaf_range(c) {
                    row[l] += 1.0;
                }
                prog.add_constraint(row, Relation::Eq, 0.0);
            }
        } else {
            cones.push((v, a, p));
        }
    }
    let mut cuts = 0;
    let mut last_point: Option<Vec<f64>> = None;
    loop {
        let sol = lp::solve_with(&prog, settings)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(Error::EmptyGoodDealSet),
            LpStatus::Unbounded => return Err(Error::NumericalBreakdown("good-deal program unbounded".into())),
        }
        let q = &sol.point;
        let mut worst: Option<(f64, usize, Vec<f64>)> = None;
        for (i, (v, a, p)) in cones.iter().enumerate() {
            let y: Vec<f64> = tree
                .children(*v)
                .iter()
                .zip(p)
                .map(|(&c, pc)| q[tree.leaf_range(c)].iter().sum::<f64>() / pc.sqrt())
                .collect();
            let norm = y.iter().map(|t| t * t).sum::<f64>().sqrt();
            let qn: f64 = q[tree.leaf_range(*v)].iter().sum();
            let violation = norm - a * qn;
            if violation > settings.cut_tol && worst.as_ref().is_none_or(|w| violation > w.0) {
                worst = Some((violation, i, y.iter().map(|t| t / norm).collect()));
            }
        }
        let Some((_, i, u)) = worst else {
            return Ok((sol.value, cuts));
        };
        // The previous cut already separates this point: the LP ignored it.
        if last_point.as_ref().is_some_and(|p| p.iter().zip(q).all(|(a, b)| (a - b).abs() <= settings.feasibility_tol)) {
            return Err(Error::NumericalBreakdown("good-deal cut did not separate the LP solution".into()));
        }
        last_point = Some(q.clone());
        cuts += 1;
        if cuts > settings.max_cuts {
            return Err(Error::NumericalBreakdown(format!("good-deal cuts exceeded {}", settings.max_cuts)));
        }
        let (v, a, p) = &cones[i];
        let mut row = vec![0.0; n];
        for l in tree.leaf_range(*v) {
            row[l] = -a;
        }
        for ((&c, pc), uc) in tree.children(*v).iter().zip(p).zip(&u) {
            for l in tree.leaf_range(c) {
                row[l] += uc / pc.sqrt();
            }
        }
        prog.add_constraint(row, Relation::Le, 0.0);
    }
}

/// Superhedging-style value at every node on or before `x`'s stopping time,
/// with hedges restricted to `h`. Nodes after it are `None`.
pub fn constrained_node_values(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    h: &ConstraintSet,
    x: &Claim,
    settings: &Settings,
) -> Result<Vec<Option<f64>>> {
    check_assets(tree, assets)?;
    if h.dim() != assets.len() {
        return Err(Error::InvalidMarket(format!(
            "constraint set has dimension {} for {} assets",
            h.dim(),
            assets.len()
        )));
    }
    let tau = x.at();
    let mut values: Vec<Option<f64>> = vec![None; tree.len()];
    for (&v, &xv) in tau.nodes().iter().zip(x.values()) {
        values[v] = Some(xv);
    }
    let nodes: Vec<NodeId> = tree.internal_nodes().filter(|&v| tau.is_strictly_before(tree, v)).collect();
    for &v in nodes.iter().rev() {
        let children = tree.children(v);
        let k = children.len();
        let cont: Vec<f64> = children.iter().map(|&c| values[c].expect("children are valued first")).collect();
        if h.vertices().iter().all(|hv| hv.iter().all(|&x| x == 0.0)) {
            // No hedging: the best kernel puts all mass on the best child.
            values[v] = Some(cont.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            continue;
        }
        let mut obj = vec![0.0; k + 1];
        obj[k] = 1.0;
        let mut prog = LinearProgram::maximize(obj);
        prog.set_free(k);
        let mut simplex = vec![1.0; k];
        simplex.push(0.0);
        prog.add_constraint(simplex, Relation::Eq, 1.0);
        for hv in h.vertices() {
            // z <= sum_c q_c (v_c - h . (S(c) - S(n))).
            let mut row: Vec<f64> = children
                .iter()
                .zip(&cont)
                .map(|(&c, vc)| {
                    let gain: f64 = hv.iter().zip(assets).map(|(hk, s)| hk * (s.at(c) - s.at(v))).sum();
                    gain - vc
                })
                .collect();
            row.push(1.0);
            prog.add_constraint(row, Relation::Le, 0.0);
        }
        let sol = lp::solve_with(&prog, settings)?;
        values[v] = Some(match sol.status {
            LpStatus::Optimal => sol.value,
            LpStatus::Unbounded => return Err(Error::UnboundedNodeLp(v)),
            LpStatus::Infeasible => return Err(Error::NumericalBreakdown(format!("node {v} program infeasible"))),
        });
    }
    Ok(values)
}

/// Root value of [`constrained_node_values`].
pub fn constrained_price(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    h: &ConstraintSet,
    x: &Claim,
    settings: &Settings,
) -> Result<Claim> {
    let values = constrained_node_values(tree, assets, h, x, settings)?;
    Claim::new(StoppingTime::root(tree), vec![values[tree.root()].expect("root precedes every stopping time")])
}
