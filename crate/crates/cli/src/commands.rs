//! Command dispatch. Each command turns a validated market (and claim)
//! into a [`Report`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcpp_core::market::{
    calibrated_bounds, calibration_feasible, check_extends_dynamics, constrained_price, good_deal_bounds, mme_bounds,
    GoodDealCaps,
};
use tcpp_core::nfl::{nfl_verdict, CertificateKind, NflSampling};
use tcpp_core::pricing::{american_price, bid_ask, check_axioms, check_time_consistency, generating_chains};
use tcpp_core::random::random_leaf_claim;
use tcpp_core::scenario::{check_cocycle, check_nondegenerate, AggregatedPenalty, ScenarioModel};
use tcpp_core::tree::{Measure, StoppingTime};
use tcpp_core::Error;

use crate::claim::ClaimFile;
use crate::cut::{format_cut, parse_cut};
use crate::file::{InputError, Market};
use crate::report::Report;
use crate::{BoundsKind, CommandName};

/// Everything a command needs besides the market.
#[derive(Debug, Clone)]
pub struct Request {
    pub command: CommandName,
    pub claim: Option<ClaimFile>,
    pub at: Option<String>,
    pub seed: u64,
    pub tol: f64,
    pub good_deal_cap: Option<f64>,
    pub kind: BoundsKind,
}

#[derive(Debug)]
pub enum Failure {
    Input(InputError),
    Engine(Error),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

type Outcome = Result<Report, Failure>;

const AXIOM_SAMPLES: usize = 100;
const CONSISTENCY_SAMPLES: usize = 5;
const MAX_CHAINS: usize = 500;

pub fn run_command(market: &Market, req: &Request) -> Outcome {
    match req.command {
        CommandName::Price => price(market, req),
        CommandName::CheckTcpp => check_tcpp(market, req),
        CommandName::Nfl => nfl(market, req),
        CommandName::Bounds => bounds(market, req),
        CommandName::Calibrate => calibrate(market),
        CommandName::Extends => extends(market, req),
        CommandName::Constrained => constrained(market, req),
        CommandName::American => american(market, req),
    }
}

fn model(market: &Market) -> Result<&ScenarioModel, InputError> {
    market.model.as_ref().ok_or_else(|| InputError::new("model", "this command needs a [model] section"))
}

fn claim_file(req: &Request) -> Result<&ClaimFile, InputError> {
    req.claim.as_ref().ok_or_else(|| InputError::new("--claim", "this command needs a claim file"))
}

fn assets(market: &Market) -> Result<(), InputError> {
    if market.assets.is_empty() {
        return Err(InputError::new("assets", "this command needs at least one asset"));
    }
    Ok(())
}

fn at(market: &Market, req: &Request) -> Result<StoppingTime, InputError> {
    parse_cut(&market.tree, req.at.as_deref().unwrap_or("root")).map_err(|m| InputError::new("--at", m))
}

fn rng(req: &Request) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(req.seed)
}

fn push_measure(report: &mut Report, market: &Market, r: &Measure) {
    let tree = &market.tree;
    for (l, &leaf) in tree.leaves().iter().enumerate() {
        report.push(format!("density.{leaf}"), r.density()[l]);
    }
}

fn price(market: &Market, req: &Request) -> Outcome {
    let model = model(market)?;
    let x = claim_file(req)?.claim(market)?;
    let sigma = at(market, req)?;
    let ba = bid_ask(model, &x, &sigma)?;
    let mut r = Report::new();
    r.push("at", format_cut(&market.tree, &sigma));
    for (k, &v) in sigma.nodes().iter().enumerate() {
        r.push(format!("bid.{v}"), ba.bid.values()[k]);
        r.push(format!("ask.{v}"), ba.ask.values()[k]);
    }
    Ok(r)
}

fn check_tcpp(market: &Market, req: &Request) -> Outcome {
    let model = model(market)?;
    let tree = &market.tree;
    let s = market.settings;
    let mut rng = rng(req);
    let mut r = Report::new();

    let issues = model.normalization_issues();
    r.check("normalization", issues.is_empty());
    for i in &issues {
        r.push(format!("normalization.node.{}", i.node), format!("minimum penalty {}", i.min_penalty));
    }

    let samples: Vec<_> = (0..AXIOM_SAMPLES)
        .map(|_| (random_leaf_claim(&mut rng, tree, 1.0), random_leaf_claim(&mut rng, tree, 1.0)))
        .collect();
    let mut axiom_checks = 0;
    let mut axiom_witness = None;
    for sigma in [StoppingTime::root(tree), StoppingTime::at_time(tree, tree.horizon() - 1)?] {
        let report = check_axioms(model, &sigma, &samples, &[0.0, 0.3, 0.5, 1.0], &mut rng, req.tol)?;
        axiom_checks += report.checks;
        if axiom_witness.is_none() {
            axiom_witness = report.violations.first().cloned();
        }
    }
    r.check("axioms", axiom_witness.is_none());
    r.push("axioms.checks", axiom_checks);
    if let Some(v) = axiom_witness {
        r.push("axioms.witness", format!("{} fails at node {}: {} vs {}", v.axiom, v.node, v.lhs, v.rhs));
    }

    let mut chains = generating_chains(tree);
    if chains.len() > MAX_CHAINS {
        chains.shuffle(&mut rng);
        chains.truncate(MAX_CHAINS);
    }
    let claims: Vec<_> = (0..CONSISTENCY_SAMPLES).map(|_| random_leaf_claim(&mut rng, tree, 1.0)).collect();
    let tc = check_time_consistency(model, &chains, &claims, req.tol)?;
    r.check("time_consistency", tc.passed());
    r.push("time_consistency.checks", tc.checks);
    if let Some(v) = tc.violations.first() {
        let c = &chains[v.chain];
        r.push(
            "time_consistency.witness",
            format!(
                "nu {} sigma {} tau {}: composed {} vs direct {} at node {}",
                format_cut(tree, &c.nu),
                format_cut(tree, &c.sigma),
                format_cut(tree, &c.tau),
                v.composed,
                v.direct,
                v.node
            ),
        );
    }

    match check_cocycle(&AggregatedPenalty { model }, model, &s) {
        Ok(cc) => {
            r.check("cocycle", cc.passed());
            r.push("cocycle.checks", cc.checks);
            if let Some(v) = cc.violations.first() {
                r.push("cocycle.witness", format!("node {}: direct {} vs composed {}", v.node, v.direct, v.composed));
            }
        }
        Err(e @ Error::EnumerationOverflow { .. }) => r.push("cocycle", format!("skipped: {e}")),
        Err(e) => return Err(e.into()),
    }

    let nd = check_nondegenerate(model);
    r.check("nondegenerate", nd.passed());
    if !nd.passed() {
        let dead: Vec<String> = nd.dead_nodes.iter().map(|v| v.to_string()).collect();
        r.push("nondegenerate.dead_nodes", dead.join(","));
    }
    Ok(r)
}

fn nfl(market: &Market, req: &Request) -> Outcome {
    let model = model(market)?;
    let report = nfl_verdict(model, &mut rng(req), NflSampling::default(), &market.settings)?;
    let mut r = Report::new();
    r.check("no_free_lunch", report.no_free_lunch());
    r.push("multiperiod", report.multiperiod);
    r.push("static", report.static_check);
    r.push("measure", report.measure_check);
    r.push("sandwich", report.sandwich_check);
    if let Some(w) = report.worst_strategy_value {
        r.push("worst_strategy_value", w);
    }
    match report.certificate.kind {
        CertificateKind::ZeroPenaltyEquivalentMeasure => {
            r.push("certificate", "zero-penalty-equivalent-measure");
            if let Some(m) = &report.measure {
                r.push("margin", m.margin);
                push_measure(&mut r, market, &m.measure);
            }
        }
        CertificateKind::StaticArbitrageClaim => {
            r.push("certificate", "static-arbitrage-claim");
            if let Some(x) = &report.certificate.claim {
                for (&leaf, v) in market.tree.leaves().iter().zip(x.leaf_values(&market.tree)) {
                    r.push(format!("claim.{leaf}"), v);
                }
            }
        }
        CertificateKind::None => r.push("certificate", "none"),
    }
    Ok(r)
}

fn bounds(market: &Market, req: &Request) -> Outcome {
    assets(market)?;
    let x = claim_file(req)?.claim(market)?;
    let (tree, s) = (&market.tree, &market.settings);
    let mut r = Report::new();
    match req.kind {
        BoundsKind::Mme => {
            let b = mme_bounds(tree, &market.assets, &x, s)?;
            r.push("kind", "mme");
            r.push("lower", b.bounds.lower);
            r.push("upper", b.bounds.upper);
            r.push("equivalent", b.equivalent);
            r.push("margin", b.margin);
        }
        BoundsKind::Calibrated => {
            let b = calibrated_bounds(tree, &market.assets, &market.quotes, &x, s)?;
            r.push("kind", "calibrated");
            r.push("quotes", market.quotes.len());
            r.push("lower", b.lower);
            r.push("upper", b.upper);
        }
        BoundsKind::GoodDeal => {
            let caps = match (req.good_deal_cap, &market.caps) {
                (Some(a), _) => GoodDealCaps::uniform(a),
                (None, Some(c)) => c.clone(),
                (None, None) => return Err(InputError::new("good_deal", "give --good-deal-cap or a [good_deal] section").into()),
            };
            caps.validate(tree).map_err(|e| InputError::new("--good-deal-cap", e))?;
            let b = good_deal_bounds(tree, &market.assets, &caps, &x, s)?;
            r.push("kind", "good-deal");
            r.push("cap", caps.global);
            r.push("lower", b.bounds.lower);
            r.push("upper", b.bounds.upper);
            r.push("cuts", b.cuts);
        }
    }
    Ok(r)
}

fn calibrate(market: &Market) -> Outcome {
    assets(market)?;
    let mut r = Report::new();
    match calibration_feasible(&market.tree, &market.assets, &market.quotes, &market.settings)? {
        Some(c) => {
            r.check("feasible", true);
            r.push("margin", c.margin);
            for (name, q) in market.quote_names.iter().zip(&market.quotes) {
                r.push(format!("quote.{name}"), c.measure.expectation(&market.tree, &q.payoff));
            }
            push_measure(&mut r, market, &c.measure);
        }
        None => r.check("feasible", false),
    }
    Ok(r)
}

fn extends(market: &Market, req: &Request) -> Outcome {
    assets(market)?;
    let model = model(market)?;
    let report = check_extends_dynamics(model, &market.assets, &mut rng(req), &market.settings)?;
    let mut r = Report::new();
    r.check("extends", report.passed());
    r.push("checks", report.checks);
    for d in &report.drift_violations {
        r.push(
            format!("drift.node.{}.entry.{}", d.node, d.entry),
            format!("{} moves by {}", market.asset_names[d.asset], d.drift),
        );
    }
    for f in &report.spot_failures {
        r.push(
            format!("spot.{}.node.{}", market.asset_names[f.asset], f.node),
            format!("{} x asset priced {} instead of {}", f.multiple, f.price, f.expected),
        );
    }
    Ok(r)
}

fn constrained(market: &Market, req: &Request) -> Outcome {
    assets(market)?;
    let h = market.constraints.as_ref().ok_or_else(|| InputError::new("constraints", "this command needs a [constraints] section"))?;
    let x = claim_file(req)?.claim(market)?;
    let p = constrained_price(&market.tree, &market.assets, h, &x, &market.settings)?;
    let mut r = Report::new();
    r.push("price", p.values()[0]);
    Ok(r)
}

fn american(market: &Market, req: &Request) -> Outcome {
    let model = model(market)?;
    let file = claim_file(req)?;
    let y = file.process(market)?;
    let tau = file.horizon(market)?;
    let nu = at(market, req)?;
    let am = american_price(model, &y, &nu, &tau, &market.settings)?;
    let mut r = Report::new();
    r.push("at", format_cut(&market.tree, &nu));
    r.push("stopping_times", am.stopping_times);
    for (k, &v) in nu.nodes().iter().enumerate() {
        r.push(format!("price.{v}"), am.enumerated.values()[k]);
        r.push(format!("induction.{v}"), am.induction.values()[k]);
    }
    r.push("agree", am.agree(req.tol));
    r.push("max_gap", am.max_gap());
    Ok(r)
}
