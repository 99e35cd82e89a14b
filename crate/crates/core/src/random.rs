//! Seeded generators of small random instances for property checks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    AdaptedProcess, AtomicMeasure, MarkovLattice, Model, Node, ProblemSpec, ScenarioTree, TimeGrid, TreeProblem,
    DEFAULT_STRICT_MARGIN,
};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug)]
pub struct TreeConfig {
    pub max_nodes: usize,
    pub max_depth: usize,
    pub max_branching: usize,
    pub max_agents: usize,
    /// Rates are drawn from `[-rate_bound, rate_bound]`.
    pub rate_bound: f64,
    pub terminal_bound: f64,
    /// Smallest gap between consecutive agent rates.
    pub min_gap: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_nodes: 20,
            max_depth: 4,
            max_branching: 3,
            max_agents: 3,
            rate_bound: 2.0,
            terminal_bound: 1.0,
            min_gap: 1e-3,
        }
    }
}

/// `n` strictly increasing rates in `[-bound, bound]` at least `gap` apart.
pub fn sorted_rates<R: Rng>(rng: &mut R, n: usize, bound: f64, gap: f64) -> Vec<f64> {
    loop {
        let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        r.sort_by(f64::total_cmp);
        if r.windows(2).all(|w| w[1] - w[0] >= gap) {
            return r;
        }
    }
}

fn probability_vector<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn weights<R: Rng>(rng: &mut R, m: usize) -> AtomicMeasure {
    let mut w: Vec<f64> = (0..=m).map(|_| rng.gen_range(0.1..1.0)).collect();
    if rng.gen_bool(0.25) {
        w[0] = 0.0;
    }
    AtomicMeasure::new(w)
}

/// Random tree with every leaf at the horizon and at most `max_nodes` nodes.
pub fn random_tree_problem<R: Rng>(rng: &mut R, cfg: &TreeConfig) -> TreeProblem {
    let m = rng.gen_range(1..=cfg.max_depth);
    let n = rng.gen_range(1..=cfg.max_agents);
    let rates = |rng: &mut R, stage: usize, parent: Option<usize>| Node {
        stage,
        parent,
        children: Vec::new(),
        child_probs: Vec::new(),
        agent_rates: sorted_rates(rng, n, cfg.rate_bound, cfg.min_gap),
        principal_rates: (0..n)
            .map(|_| rng.gen_range(-cfg.rate_bound..=cfg.rate_bound))
            .collect(),
        terminal: (stage == m).then(|| rng.gen_range(-cfg.terminal_bound..=cfg.terminal_bound)),
        state: None,
    };
    let mut nodes = vec![rates(rng, 0, None)];
    // nodes already created plus the shortest completion of every open path
    let mut committed = 1 + m;
    let mut v = 0;
    while v < nodes.len() {
        let j = nodes[v].stage;
        if j < m {
            let depth_left = m - j;
            let room = cfg.max_nodes.saturating_sub(committed) / depth_left;
            let b = rng.gen_range(1..=cfg.max_branching.min(1 + room));
            committed += (b - 1) * depth_left;
            let probs = probability_vector(rng, b);
            for p in probs {
                let id = nodes.len();
                nodes.push(rates(rng, j + 1, Some(v)));
                nodes[v].children.push(id);
                nodes[v].child_probs.push(p);
            }
        }
        v += 1;
    }
    TreeProblem {
        grid: TimeGrid::uniform(1.0, m),
        mu_a: weights(rng, m),
        mu_p: weights(rng, m),
        agents: n,
        tree: ScenarioTree::from_nodes(nodes),
    }
}

/// Monotone integer levels in `[0, n]` along every path.
pub fn random_integer_levels<R: Rng>(rng: &mut R, problem: &TreeProblem) -> AdaptedProcess {
    let tree = &problem.tree;
    let n = problem.agents;
    let mut levels = AdaptedProcess::constant(tree, 0.0);
    for v in 0..tree.len() {
        let lo = tree.parent(v).map_or(0, |p| levels[p] as usize);
        let up = if rng.gen_bool(0.5) {
            0
        } else {
            rng.gen_range(0..=n - lo)
        };
        levels[v] = (lo + up) as f64;
    }
    levels
}

/// Monotone fractional levels in `[0, n]` along every path.
pub fn random_fractional_levels<R: Rng>(rng: &mut R, problem: &TreeProblem) -> AdaptedProcess {
    let tree = &problem.tree;
    let n = problem.agents as f64;
    let mut levels = AdaptedProcess::constant(tree, 0.0);
    for v in 0..tree.len() {
        let lo = tree.parent(v).map_or(0.0, |p| levels[p]);
        levels[v] = if rng.gen_bool(0.3) { lo } else { rng.gen_range(lo..=n) };
    }
    levels
}

#[derive(Clone, Debug)]
pub struct LatticeConfig {
    pub max_stages: usize,
    pub max_states: usize,
    pub max_agents: usize,
    pub rate_bound: f64,
    pub terminal_bound: f64,
    /// Chance that a transition entry is zero.
    pub sparsity: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            max_stages: 3,
            max_states: 3,
            max_agents: 2,
            rate_bound: 2.0,
            terminal_bound: 1.0,
            sparsity: 0.3,
        }
    }
}

pub fn random_lattice_problem<R: Rng>(rng: &mut R, cfg: &LatticeConfig) -> ProblemSpec {
    let m = rng.gen_range(1..=cfg.max_stages);
    let n = rng.gen_range(1..=cfg.max_agents);
    let mut states = vec![1];
    states.extend((0..m).map(|_| rng.gen_range(1..=cfg.max_states)));
    let transitions = (0..m)
        .map(|j| {
            (0..states[j])
                .map(|_| {
                    let k = states[j + 1];
                    let mut row: Vec<f64> = (0..k)
                        .map(|_| {
                            if rng.gen_bool(cfg.sparsity) {
                                0.0
                            } else {
                                rng.gen_range(0.1..1.0)
                            }
                        })
                        .collect();
                    if row.iter().all(|&q| q == 0.0) {
                        row[rng.gen_range(0..k)] = 1.0;
                    }
                    let total: f64 = row.iter().sum();
                    row.iter().map(|q| q / total).collect()
                })
                .collect()
        })
        .collect();
    let per_state = |rng: &mut R, gen: &mut dyn FnMut(&mut R) -> Vec<f64>| -> Vec<Vec<Vec<f64>>> {
        states.iter().map(|&k| (0..k).map(|_| gen(rng)).collect()).collect()
    };
    let agent_rates = per_state(rng, &mut |r| sorted_rates(r, n, cfg.rate_bound, 1e-3));
    let principal_rates = per_state(rng, &mut |r| {
        (0..n).map(|_| r.gen_range(-cfg.rate_bound..=cfg.rate_bound)).collect()
    });
    let terminal = (0..states[m])
        .map(|_| rng.gen_range(-cfg.terminal_bound..=cfg.terminal_bound))
        .collect();
    ProblemSpec {
        grid: TimeGrid::uniform(1.0, m),
        mu_a: weights(rng, m),
        mu_p: weights(rng, m),
        agents: n,
        model: Model::Lattice(MarkovLattice {
            init: vec![1.0],
            states,
            transitions,
            agent_rates,
            principal_rates,
            terminal,
        }),
        strict_margin: DEFAULT_STRICT_MARGIN,
    }
}

/// Edge-monotone fractional levels on a lattice, `levels[j][x]` in `[0, n]`.
pub fn random_markov_levels<R: Rng>(rng: &mut R, lattice: &MarkovLattice, agents: usize) -> Vec<Vec<f64>> {
    let n = agents as f64;
    let mut levels: Vec<Vec<f64>> = vec![vec![0.0; lattice.states[0]]];
    for j in 0..lattice.states.len() {
        if j > 0 {
            let mut lo = vec![0.0f64; lattice.states[j]];
            for (x, row) in lattice.transitions[j - 1].iter().enumerate() {
                for (y, &q) in row.iter().enumerate() {
                    if q > 0.0 {
                        lo[y] = lo[y].max(levels[j - 1][x]);
                    }
                }
            }
            levels.push(lo);
        }
        for l in levels[j].iter_mut() {
            if rng.gen_bool(0.6) {
                *l = rng.gen_range(*l..=n);
            }
        }
    }
    levels
}
