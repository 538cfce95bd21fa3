//! Brute-force reference evaluators used to cross-check the production
//! algorithms. They enumerate scenarios and are exponential in tree size.

use crate::error::{Error, Result};
use crate::lp::{solve_square, subsets};
use crate::market::{AssetProcess, ConstraintSet, Interval};
use crate::scenario::{region, ScenarioModel};
use crate::settings::Settings;
use crate::tree::{Claim, FiltrationTree, NodeId, StoppingTime};

/// Ask price as the best penalized conditional expectation over every
/// selection that differs below each atom of `sigma`. Probabilities are
/// forward products of kernels and the penalty is the path-weighted sum of
/// one-step penalties, so no backward recursion is involved.
pub fn dual_price_by_enumeration(model: &ScenarioModel, x: &Claim, sigma: &StoppingTime, settings: &Settings) -> Result<Claim> {
    let tree = model.tree();
    let tau = x.at();
    if !sigma.precedes(tree, tau) {
        return Err(Error::NotOrdered("pricing time must precede the claim".into()));
    }
    let mut values = Vec::with_capacity(sigma.len());
    for &a in sigma.nodes() {
        let nodes = region(tree, a, tau);
        let mut best = f64::NEG_INFINITY;
        for sel in model.selections_over(&nodes, |_, _| true, settings.enumeration_cap)? {
            let gain: f64 = tau
                .atoms_below(tree, a)
                .map(|b| model.transition(&sel, a, tau.nodes()[b]) * x.values()[b])
                .sum();
            let cost: f64 = nodes
                .iter()
                .map(|&n| model.transition(&sel, a, n) * model.entry(n, sel.entry(n)).penalty)
                .sum();
            best = best.max(gain - cost);
        }
        values.push(best);
    }
    Claim::new(sigma.clone(), values)
}

/// Number of selections the oracle enumerates for `x` priced at `sigma`.
pub fn enumeration_size(model: &ScenarioModel, tau: &StoppingTime, sigma: &StoppingTime) -> u128 {
    sigma
        .nodes()
        .iter()
        .map(|&a| model.count_selections(&region(model.tree(), a, tau)))
        .fold(0u128, |acc, c| acc.saturating_add(c))
}

/// Every probability vector of length `k` with entries in multiples of `1/n`.
fn simplex_grid(k: usize, n: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, n: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if k == 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&c| c as f64 / n as f64).collect());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(k - 1, left - c, n, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, n, n, &mut Vec::new(), &mut out);
    out
}

/// Kernels at `node` where the hedging penalty `max_h h . E_q(dS)` can
/// change slope: vertices of the arrangement cut out by the simplex facets
/// and the ties between pairs of constraint vertices, plus a regular grid.
pub fn constrained_kernel_candidates(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    h: &ConstraintSet,
    node: NodeId,
    grid: usize,
) -> Vec<Vec<f64>> {
    let children = tree.children(node);
    let k = children.len();
    let delta = |c: NodeId, dir: &[f64]| -> f64 {
        dir.iter().zip(assets).map(|(d, s)| d * (s.at(c) - s.at(node))).sum()
    };
    let mut planes: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut e = vec![0.0; k];
            e[c] = 1.0;
            e
        })
        .collect();
    let hv = h.vertices();
    for i in 0..hv.len() {
        for j in i + 1..hv.len() {
            let dir: Vec<f64> = hv[i].iter().zip(&hv[j]).map(|(a, b)| a - b).collect();
            planes.push(children.iter().map(|&c| delta(c, &dir)).collect());
        }
    }
    let mut out = simplex_grid(k, grid);
    for pick in subsets(planes.len(), k - 1) {
        let mut a: Vec<Vec<f64>> = pick.iter().map(|&i| planes[i].clone()).collect();
        let mut b = vec![0.0; k - 1];
        a.push(vec![1.0; k]);
        b.push(1.0);
        let Some(q) = solve_square(a, b, 1e-12) else { continue };
        if q.iter().all(|&x| x >= -1e-12) {
            let q: Vec<f64> = q.iter().map(|x| x.max(0.0)).collect();
            let total: f64 = q.iter().sum();
            out.push(q.iter().map(|x| x / total).collect());
        }
    }
    out
}

/// Constrained price at the root by enumerating every combination of
/// candidate kernels over the nodes before `x`'s stopping time and
/// charging each node's hedging penalty along the resulting measure.
pub fn constrained_price_by_enumeration(
    tree: &FiltrationTree,
    assets: &[AssetProcess],
    h: &ConstraintSet,
    x: &Claim,
    grid: usize,
    cap: u64,
) -> Result<f64> {
    let tau = x.at();
    let nodes: Vec<NodeId> = tree.internal_nodes().filter(|&v| tau.is_strictly_before(tree, v)).collect();
    let options: Vec<Vec<Vec<f64>>> =
        nodes.iter().map(|&v| constrained_kernel_candidates(tree, assets, h, v, grid)).collect();
    let count = options.iter().fold(1u128, |acc, o| acc.saturating_mul(o.len() as u128));
    if count > cap as u128 {
        return Err(Error::EnumerationOverflow { count, cap });
    }
    let mut slot = vec![usize::MAX; tree.len()];
    for (i, &v) in nodes.iter().enumerate() {
        slot[v] = i;
    }
    let penalty = |v: NodeId, q: &[f64]| -> f64 {
        let drift: Vec<f64> = assets
            .iter()
            .map(|s| tree.children(v).iter().zip(q).map(|(&c, p)| p * s.at(c)).sum::<f64>() - s.at(v))
            .collect();
        h.support(&drift)
    };
    let mut digits = vec![0usize; nodes.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        // Forward pass: node probabilities under the chosen kernels.
        let mut prob = vec![0.0; tree.len()];
        prob[tree.root()] = 1.0;
        let mut value = 0.0;
        for (i, &v) in nodes.iter().enumerate() {
            let q = &options[i][digits[i]];
            value -= prob[v] * penalty(v, q);
            for (&c, p) in tree.children(v).iter().zip(q) {
                prob[c] = prob[v] * p;
            }
        }
        for (&b, xb) in tau.nodes().iter().zip(x.values()) {
            value += prob[b] * xb;
        }
        best = best.max(value);
        let mut k = 0;
        loop {
            if k == nodes.len() {
                return Ok(best);
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

/// Extremes of `objective` over the feasible points of `[lo, hi]`: scans
/// `n` grid points, then bisects every feasible/infeasible neighbour pair
/// to locate the ends of the feasible set precisely.
pub fn grid_extremes(
    lo: f64,
    hi: f64,
    n: usize,
    feasible: impl Fn(f64) -> bool,
    objective: impl Fn(f64) -> f64,
) -> Option<Interval> {
    let pts: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let flags: Vec<bool> = pts.iter().map(|&t| feasible(t)).collect();
    let mut candidates: Vec<f64> = pts.iter().zip(&flags).filter(|(_, &f)| f).map(|(&t, _)| t).collect();
    for i in 0..n - 1 {
        if flags[i] != flags[i + 1] {
            let (mut good, mut bad) = if flags[i] { (pts[i], pts[i + 1]) } else { (pts[i + 1], pts[i]) };
            for _ in 0..100 {
                let mid = 0.5 * (good + bad);
                if feasible(mid) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            candidates.push(good);
        }
    }
    let values: Vec<f64> = candidates.iter().map(|&t| objective(t)).collect();
    if values.is_empty() {
        return None;
    }
    Some(Interval {
        lower: values.iter().copied().fold(f64::INFINITY, f64::min),
        upper: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::price;
    use crate::scenario::MenuEntry;
    use crate::tree::FiltrationTree;

    #[test]
    fn oracle_agrees_with_induction_on_small_model() {
        let t = FiltrationTree::uniform(2, 3).unwrap();
        let m = ScenarioModel::from_fn(t.clone(), |_, v| {
            vec![
                MenuEntry::free(vec![0.2, 0.3, 0.5]),
                MenuEntry::new(vec![0.6, 0.2, 0.2], 0.01 * v as f64),
                MenuEntry::new(vec![0.0, 0.0, 1.0], 0.15),
            ]
        })
        .unwrap();
        let x = Claim::from_leaves(&t, (0..9).map(|l| ((l * 5) % 7) as f64 - 3.0).collect()).unwrap();
        let s = Settings::default();
        for sigma in [StoppingTime::root(&t), StoppingTime::at_time(&t, 1).unwrap(), StoppingTime::new(&t, vec![1, 7, 8, 9, 3]).unwrap()] {
            let a = price(&m, &x, &sigma).unwrap();
            let b = dual_price_by_enumeration(&m, &x, &sigma, &s).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12, "{a:?} vs {b:?}");
        }
        assert_eq!(enumeration_size(&m, &StoppingTime::leaves(&t), &StoppingTime::root(&t)), 81);
    }

    #[test]
    fn constrained_oracle_agrees_on_binomial_and_trinomial() {
        use crate::fixtures::{binomial_stock, trinomial_stock};
        use crate::market::constrained_price;
        let s = Settings::default();
        let (t, st) = binomial_stock(2);
        let x = Claim::from_leaves(&t, vec![3.0, 0.0, 0.0, 0.0]).unwrap();
        for h in [vec![vec![0.0]], vec![vec![-2.0], vec![1.0]], vec![vec![-100.0], vec![100.0]]] {
            let h = ConstraintSet::new(h).unwrap();
            let a = constrained_price(&t, std::slice::from_ref(&st), &h, &x, &s).unwrap().values()[0];
            let b = constrained_price_by_enumeration(&t, std::slice::from_ref(&st), &h, &x, 10, 1_000_000).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let (t, st) = trinomial_stock();
        let x = Claim::from_leaves(&t, vec![0.3, 1.0, -0.4]).unwrap();
        let h = ConstraintSet::new(vec![vec![-0.5], vec![1.5]]).unwrap();
        let a = constrained_price(&t, std::slice::from_ref(&st), &h, &x, &s).unwrap().values()[0];
        let b = constrained_price_by_enumeration(&t, &[st], &h, &x, 10, 1_000_000).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn grid_extremes_pin_interval_ends() {
        let r = grid_extremes(0.0, 1.0, 10_000, |t| (0.2..=0.7123456789).contains(&t), |t| t).unwrap();
        assert!((r.lower - 0.2).abs() < 1e-12 && (r.upper - 0.7123456789).abs() < 1e-12);
    }
}
