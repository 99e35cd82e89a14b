//! The principal's contract design problem on a scenario tree, solved three
//! ways: a dynamic program over (node, level), a reduction to ordered
//! multiple stopping, and exhaustive enumeration of level policies.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{AdaptedProcess, NodeId, ScenarioTree, TreeProblem};
use crate::representation::{build_contract_from_levels, hitting_rule, interp};
use crate::snell::{agent_best_response, cumulative, ordered_multistop, StoppingRule};

/// Default node cap for [`brute_force_principal`].
pub const BRUTE_FORCE_NODE_CAP: usize = 20;
/// Largest agent count accepted by [`brute_force_principal`].
pub const BRUTE_FORCE_MAX_AGENTS: usize = 3;
/// Agreement tolerance between the solution value and its realization.
pub const VALUE_TOL: f64 = 1e-9;

/// Integer level per node, nondecreasing from parent to child.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelPolicy {
    pub levels: Vec<usize>,
}

impl LevelPolicy {
    pub fn zero(tree: &ScenarioTree) -> Self {
        LevelPolicy {
            levels: vec![0; tree.len()],
        }
    }

    pub fn to_process(&self) -> AdaptedProcess {
        AdaptedProcess(self.levels.iter().map(|&l| l as f64).collect())
    }

    pub fn is_monotone(&self, tree: &ScenarioTree) -> bool {
        (0..tree.len()).all(|v| tree.parent(v).is_none_or(|p| self.levels[p] <= self.levels[v]))
    }

    /// Exit rule of every agent: agent `i` leaves at the first node with
    /// level `>= i`, or at the horizon.
    pub fn exit_rules(&self, tree: &ScenarioTree, agents: usize) -> Vec<StoppingRule> {
        let l = self.to_process();
        (1..=agents).map(|i| hitting_rule(tree, &l, i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dp,
    Multistop,
    Brute,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dp => "dp",
            Method::Multistop => "multistop",
            Method::Brute => "brute",
        })
    }
}

#[derive(Clone, Debug)]
pub struct PrincipalSolution {
    pub value: f64,
    pub policy: LevelPolicy,
    /// Optimal contract `Y^{L*}`.
    pub contract: AdaptedProcess,
    /// `tau_1 <= ... <= tau_n`.
    pub exit_rules: Vec<StoppingRule>,
    pub method: Method,
    /// Number of labelings examined (brute force only).
    pub labelings: Option<u64>,
}

/// Principal's reward at the atom of `v` when the level in force is `level`:
/// `sum_i (g_i c^P 1{level < i} - f(level) c^A 1{level >= i})`.
pub fn atom_reward(problem: &TreeProblem, v: NodeId, level: f64) -> f64 {
    reward_at(
        problem.f(v),
        problem.g(v),
        problem.agent_weight(v),
        problem.principal_weight(v),
        level,
    )
}

pub(crate) fn reward_at(f: &[f64], g: &[f64], ca: f64, cp: f64, level: f64) -> f64 {
    let f_at = interp(f, level);
    (1..=g.len())
        .map(|i| if level < i as f64 { g[i - 1] * cp } else { -f_at * ca })
        .sum()
}

fn expected_terminal(problem: &TreeProblem) -> f64 {
    let tree = &problem.tree;
    tree.leaves().map(|v| tree.probability(v) * problem.terminal(v)).sum()
}

/// Principal's objective for a nondecreasing level process with values in
/// `[0, n]` (fractional levels allowed). The level in force at the first
/// atom is 0.
pub fn principal_objective(problem: &TreeProblem, levels: &AdaptedProcess) -> Result<f64> {
    let tree = &problem.tree;
    let n = problem.agents as f64;
    for v in 0..tree.len() {
        if tree.is_leaf(v) {
            continue;
        }
        if !(0.0..=n).contains(&levels[v]) {
            return Err(Error::LevelOutOfRange {
                node: tree.path_key(v),
                level: levels[v],
                agents: problem.agents,
            });
        }
        if tree.parent(v).is_some_and(|p| levels[p] > levels[v]) {
            return Err(Error::NonMonotoneLevel { node: tree.path_key(v) });
        }
    }
    let total: f64 = (0..tree.len())
        .map(|v| {
            let in_force = tree.parent(v).map_or(0.0, |p| levels[p]);
            tree.probability(v) * atom_reward(problem, v, in_force)
        })
        .sum();
    Ok(total - n * expected_terminal(problem))
}

pub fn policy_objective(problem: &TreeProblem, policy: &LevelPolicy) -> Result<f64> {
    principal_objective(problem, &policy.to_process())
}

/// `r(l) = sum_{i > l} g_i c^P - l f(l) c^A` at integer level `l`.
fn dp_reward(problem: &TreeProblem, v: NodeId, level: usize) -> f64 {
    let g_tail: f64 = problem.g(v)[level..].iter().sum();
    let cost = if level == 0 {
        0.0
    } else {
        level as f64 * problem.f(v)[level - 1]
    };
    g_tail * problem.principal_weight(v) - cost * problem.agent_weight(v)
}

fn finish(problem: &TreeProblem, value: f64, policy: LevelPolicy, method: Method) -> Result<PrincipalSolution> {
    let contract = build_contract_from_levels(problem, &policy.to_process())?;
    let exit_rules = policy.exit_rules(&problem.tree, problem.agents);
    Ok(PrincipalSolution {
        value,
        policy,
        contract,
        exit_rules,
        method,
        labelings: None,
    })
}

/// Backward dynamic program over `(node, level in force)`. Among optimal
/// levels the smallest is chosen; at leaves the level is held.
pub fn solve_principal_dp(problem: &TreeProblem) -> Result<PrincipalSolution> {
    let tree = &problem.tree;
    let n = problem.agents;
    let xi_weight = n as f64;
    let mut value = vec![vec![0.0; n + 1]; tree.len()];
    let mut choice = vec![vec![0usize; n + 1]; tree.len()];
    for v in (0..tree.len()).rev() {
        if tree.is_leaf(v) {
            for l in 0..=n {
                value[v][l] = dp_reward(problem, v, l) - xi_weight * problem.terminal(v);
                choice[v][l] = l;
            }
            continue;
        }
        let cont: Vec<f64> = (0..=n)
            .map(|next| tree.child_expectation(v, |c| value[c][next]))
            .collect();
        // best[l] = argmax over next >= l, smallest on ties
        let mut best = n;
        for l in (0..=n).rev() {
            if cont[l] >= cont[best] {
                best = l;
            }
            choice[v][l] = best;
            value[v][l] = dp_reward(problem, v, l) + cont[best];
        }
    }
    let mut policy = LevelPolicy::zero(tree);
    for (v, row) in choice.iter().enumerate() {
        let in_force = tree.parent(v).map_or(0, |p| policy.levels[p]);
        policy.levels[v] = row[in_force];
    }
    finish(problem, value[tree.root()][0], policy, Method::Dp)
}

/// Per-agent increments of the multiple stopping reformulation:
/// `d_i = g_i c^P + (i f_i - (i-1) f_{i-1}) c^A`, with `f_0 = 0`.
pub fn multistop_increments(problem: &TreeProblem) -> Vec<AdaptedProcess> {
    (1..=problem.agents)
        .map(|i| {
            AdaptedProcess::from_fn(&problem.tree, |v| {
                let f = problem.f(v);
                let prev = if i > 1 { (i - 1) as f64 * f[i - 2] } else { 0.0 };
                problem.g(v)[i - 1] * problem.principal_weight(v)
                    + (i as f64 * f[i - 1] - prev) * problem.agent_weight(v)
            })
        })
        .collect()
}

/// Solves the principal's problem as ordered multiple stopping and recovers
/// the level policy as the number of agents gone at each node.
pub fn solve_principal_multistop(problem: &TreeProblem) -> Result<PrincipalSolution> {
    let tree = &problem.tree;
    let n = problem.agents;
    let ms = ordered_multistop(tree, &multistop_increments(problem));
    let top = AdaptedProcess::from_fn(tree, |v| problem.agent_weight(v) * problem.f(v)[n - 1]);
    let top_acc = cumulative(tree, &top);
    let top_total: f64 = tree.leaves().map(|v| tree.probability(v) * top_acc[v]).sum();
    let value = ms.value - n as f64 * (top_total + expected_terminal(problem));

    let mut policy = LevelPolicy::zero(tree);
    for v in 0..tree.len() {
        policy.levels[v] = match tree.parent(v) {
            Some(p) if tree.is_leaf(v) => policy.levels[p],
            _ => ms.rules.iter().filter(|r| r.stopped_by(tree, v)).count(),
        };
    }
    let mut sol = finish(problem, value, policy, Method::Multistop)?;
    debug_assert_eq!(sol.exit_rules, ms.rules);
    sol.exit_rules = ms.rules;
    Ok(sol)
}

/// Exhaustive search over monotone integer level policies (leaf levels held
/// at the parent's). Ties go to the lexicographically smallest labeling in
/// node order.
pub fn brute_force_principal(problem: &TreeProblem, cap: usize) -> Result<PrincipalSolution> {
    let tree = &problem.tree;
    let n = problem.agents;
    if tree.len() > cap {
        return Err(Error::CapExceeded {
            what: "brute-force tree",
            size: tree.len() as u128,
            cap: cap as u128,
        });
    }
    if n > BRUTE_FORCE_MAX_AGENTS {
        return Err(Error::CapExceeded {
            what: "brute-force agent count",
            size: n as u128,
            cap: BRUTE_FORCE_MAX_AGENTS as u128,
        });
    }
    let internal: Vec<NodeId> = (0..tree.len()).filter(|&v| !tree.is_leaf(v)).collect();
    // reward of each child's atom as a function of its parent's level
    let child_reward: Vec<Vec<f64>> = (0..tree.len())
        .map(|v| {
            (0..=n)
                .map(|l| tree.child_expectation(v, |c| atom_reward(problem, c, l as f64)) * tree.probability(v))
                .collect()
        })
        .collect();
    let base = atom_reward(problem, tree.root(), 0.0) - n as f64 * expected_terminal(problem);

    struct Search<'a> {
        tree: &'a ScenarioTree,
        internal: &'a [NodeId],
        child_reward: &'a [Vec<f64>],
        n: usize,
        levels: Vec<usize>,
        best: f64,
        best_levels: Vec<usize>,
        count: u64,
    }

    impl Search<'_> {
        fn go(&mut self, k: usize, acc: f64) {
            if k == self.internal.len() {
                self.count += 1;
                if acc > self.best {
                    self.best = acc;
                    self.best_levels.clone_from(&self.levels);
                }
                return;
            }
            let v = self.internal[k];
            let lo = self.tree.parent(v).map_or(0, |p| self.levels[p]);
            for l in lo..=self.n {
                self.levels[v] = l;
                self.go(k + 1, acc + self.child_reward[v][l]);
            }
        }
    }

    let mut search = Search {
        tree,
        internal: &internal,
        child_reward: &child_reward,
        n,
        levels: vec![0; tree.len()],
        best: f64::NEG_INFINITY,
        best_levels: vec![0; tree.len()],
        count: 0,
    };
    search.go(0, base);

    let mut policy = LevelPolicy {
        levels: search.best_levels,
    };
    for v in 0..tree.len() {
        if let (true, Some(p)) = (tree.is_leaf(v), tree.parent(v)) {
            policy.levels[v] = policy.levels[p];
        }
    }
    let value = policy_objective(problem, &policy)?;
    let mut sol = finish(problem, value, policy, Method::Brute)?;
    sol.labelings = Some(search.count);
    Ok(sol)
}

pub fn solve_principal(problem: &TreeProblem, method: Method) -> Result<PrincipalSolution> {
    match method {
        Method::Dp => solve_principal_dp(problem),
        Method::Multistop => solve_principal_multistop(problem),
        Method::Brute => brute_force_principal(problem, BRUTE_FORCE_NODE_CAP),
    }
}

/// Number of rule pairs `(i, path)` with `tau_i > tau_{i+1}`.
pub fn count_order_violations(tree: &ScenarioTree, rules: &[StoppingRule]) -> usize {
    let mut violations = 0;
    for leaf in tree.leaves() {
        let stages: Vec<Option<usize>> = rules
            .iter()
            .map(|r| r.stop_node(tree, leaf).map(|u| tree.stage(u)))
            .collect();
        violations += stages
            .windows(2)
            .filter(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => a > b,
                _ => true,
            })
            .count();
    }
    violations
}

#[derive(Clone, Debug)]
pub struct AgentCheck {
    pub agent: usize,
    /// The agent's smallest optimal exit coincides with the solution's rule.
    pub exit_matches: bool,
    pub agent_value: f64,
}

#[derive(Clone, Debug)]
pub struct IncentiveReport {
    pub agents: Vec<AgentCheck>,
    /// Principal payoff realized by the agents' own best responses.
    pub realized_value: f64,
    pub value_gap: f64,
}

impl IncentiveReport {
    pub fn passed(&self) -> bool {
        self.agents.iter().all(|a| a.exit_matches) && self.value_gap <= VALUE_TOL
    }
}

/// Re-solves every agent's exit problem under the solution's contract and
/// recomputes the principal's payoff from the resulting exits.
pub fn verify_incentive_compatibility(problem: &TreeProblem, solution: &PrincipalSolution) -> Result<IncentiveReport> {
    let tree = &problem.tree;
    let y = &solution.contract;
    let mut agents = Vec::with_capacity(problem.agents);
    let mut realized = 0.0;
    for i in 1..=problem.agents {
        let (res, agent_value) = agent_best_response(problem, i, y)?;
        let rule = &res.smallest_stop;
        agents.push(AgentCheck {
            agent: i,
            exit_matches: solution.exit_rules.get(i - 1) == Some(rule),
            agent_value,
        });
        let reward = AdaptedProcess::from_fn(tree, |v| problem.g(v)[i - 1] * problem.principal_weight(v));
        let acc = cumulative(tree, &reward);
        realized += rule
            .stop_nodes()
            .map(|u| tree.probability(u) * (acc[u] - y[u]))
            .sum::<f64>();
    }
    Ok(IncentiveReport {
        agents,
        realized_value: realized,
        value_gap: (realized - solution.value).abs(),
    })
}
