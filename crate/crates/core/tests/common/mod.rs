//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use exitcontract::model::{AtomicMeasure, MarkovLattice, Model, ProblemSpec, TimeGrid, DEFAULT_STRICT_MARGIN};

/// Two-state chain observed on `M` equal steps of `[0, 1]`, with switching
/// intensities 1 (0 -> 1) and 2 (1 -> 0), and rates Lipschitz in time.
pub fn lipschitz_reference(big_m: usize) -> ProblemSpec {
    let dt = 1.0 / big_m as f64;
    let (a, b) = (1.0, 2.0);
    let e = (-(a + b) * dt).exp();
    let step = vec![
        vec![(b + a * e) / (a + b), a * (1.0 - e) / (a + b)],
        vec![b * (1.0 - e) / (a + b), (a + b * e) / (a + b)],
    ];
    let time = |j: usize| j as f64 * dt;
    let f = |t: f64, x: usize| {
        let f1 = -0.5 + 0.5 * t + 0.3 * x as f64;
        vec![f1, f1 + 0.8 + 0.3 * (std::f64::consts::PI * t).cos()]
    };
    let g = |t: f64, x: usize| vec![1.0 + 0.5 * t - 0.4 * x as f64, 0.6 - 0.3 * t + 0.5 * x as f64];
    let mut states = vec![1];
    states.extend(std::iter::repeat_n(2, big_m));
    let mut transitions = vec![vec![step[0].clone()]];
    transitions.extend(std::iter::repeat_n(step, big_m - 1));
    let per_state = |h: &dyn Fn(f64, usize) -> Vec<f64>| -> Vec<Vec<Vec<f64>>> {
        (0..=big_m)
            .map(|j| (0..states[j]).map(|x| h(time(j), x)).collect())
            .collect()
    };
    let mut weights = vec![0.0];
    weights.extend(std::iter::repeat_n(dt, big_m));
    ProblemSpec {
        grid: TimeGrid::uniform(1.0, big_m),
        mu_a: AtomicMeasure::new(weights.clone()),
        mu_p: AtomicMeasure::new(weights),
        agents: 2,
        model: Model::Lattice(MarkovLattice {
            agent_rates: per_state(&f),
            principal_rates: per_state(&g),
            states: states.clone(),
            transitions,
            init: vec![1.0],
            terminal: vec![0.2, -0.1],
        }),
        strict_margin: DEFAULT_STRICT_MARGIN,
    }
}

use exitcontract::model::{NodeId, ScenarioTree, TreeProblem};
use exitcontract::{AdaptedProcess, StoppingRule};

/// Piecewise-linear rate interpolation, written out independently.
pub fn rate_at(rates: &[f64], level: f64) -> f64 {
    let n = rates.len();
    if level <= 1.0 {
        return rates[0] - (1.0 - level);
    }
    if level >= n as f64 {
        return rates[n - 1] + (level - n as f64);
    }
    let k = level as usize;
    rates[k - 1] + (rates[k] - rates[k - 1]) * (level - k as f64)
}

/// `Z^l(v)` by direct recursion for a fixed level `l`.
fn z_at(problem: &TreeProblem, y: &AdaptedProcess, v: NodeId, level: f64) -> f64 {
    if problem.tree.is_leaf(v) {
        return y[v];
    }
    y[v].max(cont_at(problem, y, v, level))
}

fn cont_at(problem: &TreeProblem, y: &AdaptedProcess, v: NodeId, level: f64) -> f64 {
    problem
        .tree
        .children(v)
        .map(|(c, p)| p * (problem.agent_weight(c) * rate_at(problem.f(c), level) + z_at(problem, y, c, level)))
        .sum()
}

/// `sup { l : Z^l(v) = Y(v) }` at an internal node by bisection on the
/// increasing map `l -> E[c^A f(l) + Z^l]`.
pub fn bisection_level(problem: &TreeProblem, y: &AdaptedProcess, v: NodeId) -> f64 {
    let below = |l: f64| cont_at(problem, y, v, l) <= y[v];
    let (mut lo, mut hi) = (-1.0, problem.agents as f64 + 1.0);
    while !below(lo) {
        lo = 2.0 * lo - 1.0;
    }
    while below(hi) {
        hi = 2.0 * hi + 1.0;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Every stopping rule of the subtree at `v`, as a set of stop nodes.
pub fn all_stopping_rules(tree: &ScenarioTree, v: NodeId) -> Vec<Vec<NodeId>> {
    let mut out = vec![vec![v]];
    if tree.is_leaf(v) {
        return out;
    }
    let mut partial: Vec<Vec<NodeId>> = vec![Vec::new()];
    for (c, _) in tree.children(v) {
        let sub = all_stopping_rules(tree, c);
        partial = partial
            .iter()
            .flat_map(|p| {
                sub.iter().map(move |s| {
                    let mut q = p.clone();
                    q.extend(s);
                    q
                })
            })
            .collect();
    }
    out.extend(partial);
    out
}

/// Stop node on the path to each leaf, in leaf order.
pub fn stops_per_leaf(tree: &ScenarioTree, stops: &[NodeId]) -> Vec<NodeId> {
    tree.leaves()
        .map(|leaf| {
            *tree
                .path_to(leaf)
                .iter()
                .find(|u| stops.contains(u))
                .expect("a stopping rule stops every path")
        })
        .collect()
}

pub fn rule_per_leaf(tree: &ScenarioTree, rule: &StoppingRule) -> Vec<NodeId> {
    stops_per_leaf(tree, &rule.stop_nodes().collect::<Vec<_>>())
}

/// Exits ordered along every path: `tau_1 <= tau_2 <= ...`.
pub fn pathwise_ordered(tree: &ScenarioTree, rules: &[StoppingRule]) -> usize {
    let per: Vec<Vec<NodeId>> = rules.iter().map(|r| rule_per_leaf(tree, r)).collect();
    let mut violations = 0;
    for w in per.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            if tree.stage(*a) > tree.stage(*b) {
                violations += 1;
            }
        }
    }
    violations
}

pub fn path_sum(tree: &ScenarioTree, d: impl Fn(NodeId) -> f64, v: NodeId) -> f64 {
    tree.path_to(v).into_iter().map(d).sum()
}

/// `max E[sum_i sum_{s <= tau_i} d_i(s)]` over ordered tuples of stopping
/// rules, by enumeration; `None` when there are more than `cap` tuples.
pub fn multistop_by_enumeration(tree: &ScenarioTree, increments: &[Vec<f64>], cap: u64) -> Option<f64> {
    let rules = all_stopping_rules(tree, tree.root());
    let n = increments.len();
    if (rules.len() as u64).checked_pow(n as u32).is_none_or(|k| k > cap) {
        return None;
    }
    let leaves: Vec<NodeId> = tree.leaves().collect();
    let per_leaf: Vec<Vec<NodeId>> = rules.iter().map(|r| stops_per_leaf(tree, r)).collect();
    // gain[i][r]: E[A_i at rule r]
    let gain: Vec<Vec<f64>> = increments
        .iter()
        .map(|d| {
            per_leaf
                .iter()
                .map(|stops| {
                    stops
                        .iter()
                        .zip(&leaves)
                        .map(|(&u, &leaf)| tree.probability(leaf) * path_sum(tree, |w| d[w], u))
                        .sum()
                })
                .collect()
        })
        .collect();
    fn go(i: usize, prev: Option<usize>, per_leaf: &[Vec<NodeId>], gain: &[Vec<f64>], tree: &ScenarioTree) -> f64 {
        if i == gain.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for r in 0..per_leaf.len() {
            let ok = prev.is_none_or(|p| {
                per_leaf[p]
                    .iter()
                    .zip(&per_leaf[r])
                    .all(|(a, b)| tree.stage(*a) <= tree.stage(*b))
            });
            if ok {
                best = best.max(gain[i][r] + go(i + 1, Some(r), per_leaf, gain, tree));
            }
        }
        best
    }
    Some(go(0, None, &per_leaf, &gain, tree))
}

/// Multistop increments `g_i c^P + (i f_i - (i-1) f_{i-1}) c^A` per node.
pub fn increments(problem: &TreeProblem) -> Vec<Vec<f64>> {
    (1..=problem.agents)
        .map(|i| {
            (0..problem.tree.len())
                .map(|v| {
                    let f = problem.f(v);
                    let lower = if i == 1 { 0.0 } else { (i - 1) as f64 * f[i - 2] };
                    problem.g(v)[i - 1] * problem.principal_weight(v)
                        + (i as f64 * f[i - 1] - lower) * problem.agent_weight(v)
                })
                .collect()
        })
        .collect()
}

/// Principal value implied by the multistop value `ms`.
pub fn principal_from_multistop(problem: &TreeProblem, ms: f64) -> f64 {
    let tree = &problem.tree;
    let n = problem.agents;
    let tail: f64 = tree
        .leaves()
        .map(|leaf| {
            let carry = path_sum(tree, |w| problem.agent_weight(w) * problem.f(w)[n - 1], leaf);
            tree.probability(leaf) * (carry + problem.terminal(leaf))
        })
        .sum();
    ms - n as f64 * tail
}

/// Principal's realized payoff when agent `i` exits by `rules[i]` under `y`:
/// `sum_i E[sum_{s <= tau_i} g_i c^P - Y(tau_i)]`.
pub fn realized_payoff(problem: &TreeProblem, y: &AdaptedProcess, rules: &[StoppingRule]) -> f64 {
    let tree = &problem.tree;
    rules
        .iter()
        .enumerate()
        .map(|(i, rule)| {
            rule.stop_nodes()
                .map(|u| {
                    tree.probability(u) * (path_sum(tree, |w| problem.g(w)[i] * problem.principal_weight(w), u) - y[u])
                })
                .sum::<f64>()
        })
        .sum()
}
