use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcpp_core::fixtures::{binomial_stock, coupled_binomial_family, trinomial_kernel, trinomial_stock};
use tcpp_core::market::{
    calibrated_bounds, check_extends_dynamics, constrained_price, good_deal_bounds, mme_bounds, ConstraintSet,
    GoodDealCaps, QuotedOption,
};
use tcpp_core::nfl::{nfl_verdict, NflSampling};
use tcpp_core::oracle::{constrained_price_by_enumeration, dual_price_by_enumeration, enumeration_size, grid_extremes};
use tcpp_core::pricing::{
    american_price, check_axioms, check_supermartingale, check_time_consistency, node_values, price,
    reprice_with_minimal_penalty, Chain,
};
use tcpp_core::random::{
    random_asset, random_claim, random_killed_leaf_model, random_leaf_claim, random_model, random_nfl_model,
    random_stopping_time, random_stopping_time_between, random_tree, ModelShape,
};
use tcpp_core::scenario::{check_cocycle, MenuEntry, MinimalPenaltyProcess, ScenarioModel};
use tcpp_core::tree::{conditional_expectation, AdaptedProcess, Claim, FiltrationTree, Measure, StoppingTime};
use tcpp_core::Settings;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

fn axioms() -> Outcome {
    let mut rng = rng(1);
    let mut checks = 0;
    for m in 0..200 {
        let horizon = 1 + m % 3;
        let tree = random_tree(&mut rng, horizon, 3);
        let shape = if m % 4 == 0 { ModelShape::sublinear() } else { ModelShape::default() };
        let model = random_model(&mut rng, tree.clone(), shape);
        let sigma = random_stopping_time(&mut rng, &tree, 0.3);
        let samples: Vec<_> = (0..1000)
            .map(|i| {
                let at = if i % 4 == 0 { random_stopping_time_between(&mut rng, &tree, &sigma, &StoppingTime::leaves(&tree), 0.4) } else { StoppingTime::leaves(&tree) };
                (random_claim(&mut rng, &at, 3.0), random_claim(&mut rng, &at, 3.0))
            })
            .collect();
        let report = check_axioms(&model, &sigma, &samples, &[0.0, 0.3, 0.5, 1.0], &mut rng, 1e-12).map_err(err)?;
        ensure(report.passed(), || format!("model {m}: {:?}", report.violations[0]))?;
        checks += report.checks;
    }
    Ok(format!("200 models x 1000 claim pairs, {checks} atom checks"))
}

fn time_consistency() -> Outcome {
    let mut rng = rng(2);
    let s = Settings::default();
    let (mut compared, mut skipped) = (0, 0);
    for m in 0..300 {
        let tree = random_tree(&mut rng, 1 + m % 3, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::default());
        let tau = random_stopping_time(&mut rng, &tree, 0.2);
        let sigma = random_stopping_time_between(&mut rng, &tree, &StoppingTime::root(&tree), &tau, 0.5);
        if enumeration_size(&model, &tau, &sigma) > 100_000 {
            skipped += 1;
            continue;
        }
        let x = random_claim(&mut rng, &tau, 4.0);
        let a = price(&model, &x, &sigma).map_err(err)?;
        let b = dual_price_by_enumeration(&model, &x, &sigma, &s).map_err(err)?;
        ensure(a.max_abs_diff(&b) <= 1e-9, || format!("model {m}: induction {a:?} vs dual {b:?}"))?;
        compared += 1;
    }

    let (family, envelope) = coupled_binomial_family();
    let tree = envelope.tree().clone();
    let x = Claim::from_leaves(&tree, vec![1.0, 0.0, 0.0, 1.0]).map_err(err)?;
    let chain = Chain {
        nu: StoppingTime::root(&tree),
        sigma: StoppingTime::at_time(&tree, 1).map_err(err)?,
        tau: StoppingTime::leaves(&tree),
    };
    let tc = check_time_consistency(&family, &[chain], &[x], 1e-9).map_err(err)?;
    let witness = tc.violations.first().ok_or("counterexample passed check_time_consistency")?;
    let pen = MinimalPenaltyProcess { dual: &family, envelope: &envelope, settings: s };
    let cc = check_cocycle(&pen, &envelope, &s).map_err(err)?;
    ensure(cc.violations.iter().any(|v| v.node == witness.node), || {
        format!("cocycle violations {:?} miss witness node {}", cc.violations, witness.node)
    })?;
    Ok(format!(
        "{compared} instances match the dual ({skipped} over 1e5 selections); counterexample fails both at node {} ({} vs {})",
        witness.node, witness.composed, witness.direct
    ))
}

/// NFL instances shared by criteria 3 and 5.
fn nfl_instances() -> Vec<(ScenarioModel, bool)> {
    let mut rng = rng(3);
    (0..100)
        .map(|i| {
            let tree = random_tree(&mut rng, 1 + i / 2 % 2, 3);
            if i % 2 == 0 {
                (random_nfl_model(&mut rng, tree, ModelShape::default()), true)
            } else {
                (random_killed_leaf_model(&mut rng, tree, ModelShape::default()).0, false)
            }
        })
        .collect()
}

fn nfl_equivalence() -> Outcome {
    let mut rng = rng(30);
    let s = Settings::default();
    for (i, (model, expected)) in nfl_instances().iter().enumerate() {
        let report = nfl_verdict(model, &mut rng, NflSampling::default(), &s).map_err(|e| format!("instance {i}: {e}"))?;
        ensure(report.no_free_lunch() == *expected, || format!("instance {i}: verdict {}", report.no_free_lunch()))?;
        ensure(report.certificate.validate(model, &s).map_err(err)?, || format!("instance {i}: certificate rejected"))?;
        if let Some(fl) = &report.static_free_lunch {
            let v = fl.claim.values();
            ensure(v.iter().all(|&x| x >= 0.0) && v.iter().any(|&x| x > 0.0), || format!("instance {i}: claim {v:?}"))?;
            let p = price(model, &fl.claim, &StoppingTime::root(model.tree())).map_err(err)?.values()[0];
            ensure(p <= 1e-9, || format!("instance {i}: free lunch costs {p}"))?;
        }
    }
    Ok("100 instances, four verdicts agree, certificates validate".into())
}

fn bidual() -> Outcome {
    let mut rng = rng(4);
    let s = Settings::default();
    let mut worst: f64 = 0.0;
    for m in 0..50 {
        let tree = random_tree(&mut rng, 1 + m % 2, 3);
        let model = random_model(&mut rng, tree.clone(), ModelShape::default());
        let sigma = random_stopping_time(&mut rng, &tree, 0.3);
        for _ in 0..3 {
            let x = random_leaf_claim(&mut rng, &tree, 3.0);
            let direct = price(&model, &x, &sigma).map_err(err)?;
            let dual = reprice_with_minimal_penalty(&model, &x, &sigma, &s).map_err(err)?;
            worst = worst.max(direct.max_abs_diff(&dual));
        }
    }
    ensure(worst <= 1e-9, || format!("max gap {worst:e}"))?;
    Ok(format!("50 models, max gap {worst:.1e}"))
}

fn sandwich() -> Outcome {
    let mut rng = rng(5);
    let s = Settings::default();
    let tol = 1e-9;
    let mut instances = 0;
    let mut checks = 0usize;
    let mut vrng = self::rng(30);
    for (i, (model, expected)) in nfl_instances().iter().enumerate() {
        if !expected {
            continue;
        }
        let report = nfl_verdict(model, &mut vrng, NflSampling::default(), &s).map_err(err)?;
        let r: Measure = report.measure.ok_or_else(|| format!("instance {i}: no certificate measure"))?.measure;
        let tree = model.tree();
        let times: Vec<StoppingTime> = (0..10).map(|_| random_stopping_time(&mut rng, tree, 0.4)).collect();
        for c in 0..500 {
            let x = random_leaf_claim(&mut rng, tree, 2.0);
            if c < 3 {
                let rep = check_supermartingale(model, &x, &r, &s).map_err(err)?;
                ensure(rep.passed(), || format!("instance {i}: {:?}", rep.violations[0]))?;
            }
            let ask = node_values(model, &x);
            let bid: Vec<f64> = node_values(model, &x.neg()).into_iter().map(|v| -v.unwrap()).collect();
            for v in tree.internal_nodes() {
                let k = r.kernel(tree, v).ok_or("measure misses a node")?;
                let ch = tree.children(v);
                let ea: f64 = ch.iter().zip(&k).map(|(&c, q)| q * ask[c].unwrap()).sum();
                let eb: f64 = ch.iter().zip(&k).map(|(&c, q)| q * bid[c]).sum();
                ensure(ea <= ask[v].unwrap() + tol && eb >= bid[v] - tol, || format!("instance {i}: one-step check at node {v}"))?;
                checks += 2;
            }
            for sigma in &times {
                let e = conditional_expectation(tree, &r, &x, sigma).map_err(err)?.into_claim().map_err(err)?;
                for (&v, &ev) in sigma.nodes().iter().zip(e.values()) {
                    ensure(bid[v] <= ev + tol && ev <= ask[v].unwrap() + tol, || {
                        format!("instance {i}: bid {} E_R {ev} ask {:?} at node {v}", bid[v], ask[v])
                    })?;
                    checks += 2;
                }
            }
        }
        instances += 1;
    }
    Ok(format!("{instances} NFL instances x 500 claims, {checks} inequalities"))
}

fn call(tree: &FiltrationTree, stock: &AdaptedProcess) -> Claim {
    Claim::from_leaves(tree, tree.leaves().iter().map(|&l| (stock.at(l) - 1.0).max(0.0)).collect()).expect("leaf claim")
}

fn complete_market() -> Outcome {
    let mut rng = rng(6);
    let s = Settings::default();
    let (tree, stock) = binomial_stock(1);
    let x = call(&tree, &stock);
    let b = mme_bounds(&tree, std::slice::from_ref(&stock), &x, &s).map_err(err)?.bounds;
    ensure((b.lower - 1.0 / 3.0).abs() <= 1e-9 && (b.upper - 1.0 / 3.0).abs() <= 1e-9, || format!("bounds {b:?}"))?;
    let mut extending = 0;
    for horizon in 1..=3 {
        let (tree, stock) = binomial_stock(horizon);
        let x = call(&tree, &stock);
        // Binomial sum under the martingale kernel (1/3, 2/3).
        let expected: f64 = (0..=horizon)
            .map(|k| {
                let paths = (0..k).fold(1.0, |acc, j| acc * (horizon - j) as f64 / (j + 1) as f64);
                let q = (1.0f64 / 3.0).powi(k as i32) * (2.0f64 / 3.0).powi((horizon - k) as i32);
                paths * q * (2f64.powi(2 * k as i32 - horizon as i32) - 1.0).max(0.0)
            })
            .sum();
        if horizon <= 2 {
            ensure((expected - 1.0 / 3.0).abs() < 1e-15, || format!("oracle {expected}"))?;
        }
        let b = mme_bounds(&tree, std::slice::from_ref(&stock), &x, &s).map_err(err)?.bounds;
        ensure((b.lower - expected).abs() <= 1e-9 && (b.upper - expected).abs() <= 1e-9, || format!("h={horizon}: {b:?}"))?;
        for _ in 0..10 {
            let model = ScenarioModel::from_fn(tree.clone(), |_, _| {
                let n = rng.gen_range(1..=3);
                (0..n)
                    .map(|i| MenuEntry::new(vec![1.0 / 3.0, 2.0 / 3.0], if i == 0 { 0.0 } else { rng.gen_range(0.0..1.0) }))
                    .collect()
            })
            .map_err(err)?;
            ensure(check_extends_dynamics(&model, std::slice::from_ref(&stock), &mut rng, &s).map_err(err)?.passed(), || "model does not extend".into())?;
            let root = StoppingTime::root(&tree);
            let ask = price(&model, &x, &root).map_err(err)?.values()[0];
            let bid = -price(&model, &x.neg(), &root).map_err(err)?.values()[0];
            ensure((ask - expected).abs() <= 1e-12 && (bid - expected).abs() <= 1e-12, || format!("h={horizon}: bid {bid} ask {ask}"))?;
            extending += 1;
        }
    }
    Ok(format!("call bounds ({}, {}); {extending} extending models price at the unique value", b.lower, b.upper))
}

fn bound_nesting() -> Outcome {
    let mut rng = rng(7);
    let s = Settings::default();
    let (tree, stock) = trinomial_stock();
    let assets = [stock];
    let x = Claim::from_leaves(&tree, vec![1.0, 0.0, 0.0]).map_err(err)?;
    let b = mme_bounds(&tree, &assets, &x, &s).map_err(err)?.bounds;
    ensure(b.lower.abs() <= 1e-9 && (b.upper - 1.0 / 3.0).abs() <= 1e-9, || format!("mme {b:?}"))?;
    let band = QuotedOption::new(x.clone(), 0.1, 0.2).map_err(err)?;
    let cal = calibrated_bounds(&tree, &assets, &[band], &x, &s).map_err(err)?;
    ensure(cal.lower >= 0.1 - 1e-9 && cal.upper <= 0.2 + 1e-9, || format!("calibrated {cal:?}"))?;

    for set in 0..50 {
        let tree = random_tree(&mut rng, 1 + set % 2, 3);
        let assets = [random_asset(&mut rng, &tree)];
        let x = random_leaf_claim(&mut rng, &tree, 2.0);
        let mut quotes = Vec::new();
        let mut prev = calibrated_bounds(&tree, &assets, &quotes, &x, &s).map_err(err)?;
        for _ in 0..3 {
            let y = random_leaf_claim(&mut rng, &tree, 1.0);
            let yb = mme_bounds(&tree, &assets, &y, &s).map_err(err)?.bounds;
            let (u, v): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let q = QuotedOption::new(y, yb.lower + u.min(v) * yb.width(), yb.lower + u.max(v) * yb.width()).map_err(err)?;
            let own = calibrated_bounds(&tree, &assets, std::slice::from_ref(&q), &q.payoff, &s).map_err(err)?;
            ensure(own.lower >= q.bid - 1e-9 && own.upper <= q.ask + 1e-9, || format!("set {set}: {own:?} outside its band"))?;
            quotes.push(q);
            let next = calibrated_bounds(&tree, &assets, &quotes, &x, &s).map_err(err)?;
            ensure(prev.contains(&next, 1e-9), || format!("set {set}: {prev:?} widened to {next:?}"))?;
            prev = next;
        }
    }
    Ok(format!("trinomial mme ({:.3e}, {}), band gives [{}, {}]; 50 quote sets nest", b.lower, b.upper, cal.lower, cal.upper))
}

fn good_deal() -> Outcome {
    let mut rng = rng(8);
    let s = Settings::default();
    let mut worst_wide: f64 = 0.0;
    for m in 0..20 {
        let (tree, assets) = if m == 0 {
            let (t, st) = trinomial_stock();
            (t, vec![st])
        } else {
            let t = random_tree(&mut rng, 1 + m % 2, 3);
            let a = random_asset(&mut rng, &t);
            (t, vec![a])
        };
        let x = if m == 0 { Claim::from_leaves(&tree, vec![1.0, 0.0, 0.0]).map_err(err)? } else { random_leaf_claim(&mut rng, &tree, 2.0) };
        let mme = mme_bounds(&tree, &assets, &x, &s).map_err(err)?.bounds;
        let gd = good_deal_bounds(&tree, &assets, &GoodDealCaps::uniform(1e6), &x, &s).map_err(err)?.bounds;
        worst_wide = worst_wide.max((gd.lower - mme.lower).abs()).max((gd.upper - mme.upper).abs());
    }
    ensure(worst_wide <= 1e-6, || format!("cap 1e6 gap {worst_wide:e}"))?;

    let tree = FiltrationTree::homogeneous(3, &[1.0 / 3.0, 2.0 / 3.0]).map_err(err)?;
    let (_, stock) = binomial_stock(3);
    let mut worst_unit: f64 = 0.0;
    for _ in 0..10 {
        let x = random_leaf_claim(&mut rng, &tree, 2.0);
        let ep = Measure::reference(&tree).expectation(&tree, &x);
        let b = good_deal_bounds(&tree, std::slice::from_ref(&stock), &GoodDealCaps::uniform(1.0), &x, &s).map_err(err)?.bounds;
        worst_unit = worst_unit.max((b.lower - ep).abs()).max((b.upper - ep).abs());
    }
    ensure(worst_unit <= 1e-8, || format!("cap 1 gap {worst_unit:e}"))?;

    let (tree, stock) = trinomial_stock();
    let p = tree.reference_kernel(tree.root());
    let mut worst_grid: f64 = 0.0;
    for cap in [1.05, 1.1, 1.2, 1.5, 2.0] {
        for _ in 0..4 {
            let xv: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Claim::from_leaves(&tree, xv.clone()).map_err(err)?;
            let feasible = |t: f64| trinomial_kernel(t).iter().zip(&p).map(|(q, pc)| q * q / pc).sum::<f64>() <= cap * cap;
            let objective = |t: f64| trinomial_kernel(t).iter().zip(&xv).map(|(q, v)| q * v).sum::<f64>();
            let grid = grid_extremes(0.0, 1.0 / 3.0, 10_000, feasible, objective).ok_or("empty grid")?;
            let cut = good_deal_bounds(&tree, std::slice::from_ref(&stock), &GoodDealCaps::uniform(cap), &x, &s).map_err(err)?.bounds;
            worst_grid = worst_grid.max((cut.lower - grid.lower).abs()).max((cut.upper - grid.upper).abs());
        }
    }
    ensure(worst_grid <= 1e-6, || format!("grid gap {worst_grid:e}"))?;
    Ok(format!("cap 1e6 gap {worst_wide:.1e}, cap 1 gap {worst_unit:.1e}, grid gap {worst_grid:.1e}"))
}

/// Backward induction of `max(children)` from the leaves.
fn childwise_max(tree: &FiltrationTree, x: &Claim, v: usize) -> f64 {
    if tree.is_leaf(v) {
        return x.leaf_values(tree)[tree.leaf_range(v).start];
    }
    tree.children(v).iter().map(|&c| childwise_max(tree, x, c)).fold(f64::NEG_INFINITY, f64::max)
}

fn constrained() -> Outcome {
    let mut rng = rng(9);
    let s = Settings::default();
    let band = ConstraintSet::from_box(&[-100.0], &[100.0]).map_err(err)?;
    for horizon in 1..=2 {
        let (tree, stock) = binomial_stock(horizon);
        let x = call(&tree, &stock);
        let p = constrained_price(&tree, std::slice::from_ref(&stock), &band, &x, &s).map_err(err)?.values()[0];
        ensure((p - 1.0 / 3.0).abs() <= 1e-6, || format!("h={horizon}: banded price {p}"))?;
    }
    for m in 0..20 {
        let tree = random_tree(&mut rng, 1 + m % 3, 3);
        let assets = [random_asset(&mut rng, &tree)];
        let x = random_leaf_claim(&mut rng, &tree, 2.0);
        let p = constrained_price(&tree, &assets, &ConstraintSet::origin(1), &x, &s).map_err(err)?.values()[0];
        let expected = childwise_max(&tree, &x, tree.root());
        ensure(p == expected, || format!("H = {{0}}: {p} vs {expected}"))?;
    }
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for m in 0..40 {
        let tree = random_tree(&mut rng, 1 + m % 2, 3);
        let n_assets = 1 + m % 3 / 2;
        let assets: Vec<AdaptedProcess> = (0..n_assets).map(|_| random_asset(&mut rng, &tree)).collect();
        let lower: Vec<f64> = (0..n_assets).map(|_| -rng.gen_range(0.0..3.0)).collect();
        let upper: Vec<f64> = (0..n_assets).map(|_| rng.gen_range(0.1..3.0)).collect();
        let h = ConstraintSet::from_box(&lower, &upper).map_err(err)?;
        let x = random_leaf_claim(&mut rng, &tree, 2.0);
        let a = constrained_price(&tree, &assets, &h, &x, &s).map_err(err)?.values()[0];
        let b = constrained_price_by_enumeration(&tree, &assets, &h, &x, 2, 5_000_000).map_err(err)?;
        worst = worst.max((a - b).abs());
        instances += 1;
    }
    ensure(worst <= 1e-6, || format!("oracle gap {worst:e}"))?;
    Ok(format!("banded call at 1/3, H={{0}} exact on 20 trees, {instances} oracle instances with max gap {worst:.1e}"))
}

fn american() -> Outcome {
    let mut rng = rng(10);
    let s = Settings::default();
    let mut worst: f64 = 0.0;
    let mut instances = Vec::new();
    for m in 0..100 {
        let sublinear = m < 50;
        let tree = random_tree(&mut rng, 1 + m % 3, 3);
        let shape = if sublinear { ModelShape::sublinear() } else { ModelShape::default() };
        let model = random_model(&mut rng, tree.clone(), shape);
        let y = AdaptedProcess::new(&tree, (0..tree.len()).map(|_| rng.gen_range(-1.0..2.0)).collect()).map_err(err)?;
        let am = american_price(&model, &y, &StoppingTime::root(&tree), &StoppingTime::leaves(&tree), &s).map_err(err)?;
        if sublinear {
            worst = worst.max(am.max_gap());
        } else if !am.agree(1e-9) {
            instances.push(am.max_gap());
        }
    }
    ensure(worst <= 1e-9, || format!("sublinear gap {worst:e}"))?;
    let report = match instances.iter().copied().fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.max(g)))) {
        Some(g) => format!("{} of 50 convex instances disagree, largest gap {g:.3e}", instances.len()),
        None => "all 50 convex instances agree".into(),
    };
    Ok(format!("50 sublinear instances agree (max gap {worst:.1e}); {report}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("axiom suite", axioms),
        ("time consistency and cocycle", time_consistency),
        ("no-free-lunch equivalence", nfl_equivalence),
        ("bidual repricing", bidual),
        ("sandwich and supermartingale", sandwich),
        ("complete-market collapse", complete_market),
        ("bound nesting", bound_nesting),
        ("good-deal limits", good_deal),
        ("constrained pricing", constrained),
        ("american pricing", american),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of 10 criteria passed in {:.1}s", 10 - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
