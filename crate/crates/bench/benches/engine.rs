use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use tcpp_bench::{model_and_claim, rng, transport_lp};
use tcpp_core::fixtures::trinomial_stock;
use tcpp_core::lp::solve;
use tcpp_core::market::{good_deal_bounds, mme_bounds, GoodDealCaps};
use tcpp_core::nfl::{nfl_verdict, NflSampling};
use tcpp_core::pricing::{price, reprice_with_minimal_penalty};
use tcpp_core::tree::{Claim, StoppingTime};
use tcpp_core::Settings;

fn lp(c: &mut Criterion) {
    let mut g = c.benchmark_group("lp");
    for n in [5, 10, 20] {
        let prog = transport_lp(n);
        g.bench_with_input(BenchmarkId::new("transport", n), &prog, |b, p| b.iter(|| solve(black_box(p)).unwrap()));
    }
    g.finish();
}

fn induction(c: &mut Criterion) {
    let mut g = c.benchmark_group("backward_induction");
    for horizon in [2, 4, 6] {
        let (model, x) = model_and_claim(horizon, 3, horizon as u64);
        let root = StoppingTime::root(model.tree());
        g.bench_function(BenchmarkId::from_parameter(horizon), |b| b.iter(|| price(&model, black_box(&x), &root).unwrap()));
    }
    g.finish();
}

fn minimal_penalty(c: &mut Criterion) {
    let s = Settings::default();
    let mut g = c.benchmark_group("minimal_penalty_reprice");
    for horizon in [1, 2] {
        let (model, x) = model_and_claim(horizon, 3, 10 + horizon as u64);
        let root = StoppingTime::root(model.tree());
        g.bench_function(BenchmarkId::from_parameter(horizon), |b| {
            b.iter(|| reprice_with_minimal_penalty(&model, black_box(&x), &root, &s).unwrap())
        });
    }
    g.finish();
}

fn nfl(c: &mut Criterion) {
    let s = Settings::default();
    let (model, _) = model_and_claim(2, 3, 21);
    c.bench_function("nfl_verdict/2", |b| b.iter(|| nfl_verdict(&model, &mut rng(0), NflSampling::default(), &s).unwrap()));
}

fn market(c: &mut Criterion) {
    let s = Settings::default();
    let (tree, stock) = trinomial_stock();
    let x = Claim::new(StoppingTime::leaves(&tree), vec![1.0, 0.0, 0.0]).unwrap();
    let assets = [stock];
    c.bench_function("mme_bounds/trinomial", |b| b.iter(|| mme_bounds(&tree, &assets, black_box(&x), &s).unwrap()));
    let mut g = c.benchmark_group("good_deal/trinomial");
    for cap in [1.05, 1.5] {
        let caps = GoodDealCaps::uniform(cap);
        g.bench_function(BenchmarkId::from_parameter(cap), |b| {
            b.iter(|| good_deal_bounds(&tree, &assets, &caps, black_box(&x), &s).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, lp, induction, minimal_penalty, nfl, market);
criterion_main!(benches);
