//! Backward-induction optimal stopping on scenario trees.

use crate::error::{Error, Result};
use crate::model::{AdaptedProcess, NodeId, ScenarioTree, TreeProblem};

/// Tolerance of the `S = G` test deciding the smallest optimal stop. Ties
/// resolve toward stopping.
pub const TOL_EQ: f64 = 1e-9;

/// A first-hit stopping rule. Only the node where the rule fires on each
/// path is flagged, so two rules inducing the same stopping time compare
/// equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoppingRule {
    hit: Vec<bool>,
}

impl StoppingRule {
    /// Stopping time `inf { v on the path : flags[v] }`.
    pub fn from_flags(tree: &ScenarioTree, flags: &[bool]) -> Self {
        let mut hit = vec![false; tree.len()];
        let mut done = vec![false; tree.len()];
        for v in 0..tree.len() {
            if let Some(p) = tree.parent(v) {
                done[v] = done[p] || hit[p];
            }
            hit[v] = flags[v] && !done[v];
        }
        StoppingRule { hit }
    }

    /// True when the rule fires exactly at `v`.
    pub fn stops_at(&self, v: NodeId) -> bool {
        self.hit[v]
    }

    /// True when the rule has fired at `v` or at one of its ancestors.
    pub fn stopped_by(&self, tree: &ScenarioTree, v: NodeId) -> bool {
        let mut cur = Some(v);
        while let Some(u) = cur {
            if self.hit[u] {
                return true;
            }
            cur = tree.parent(u);
        }
        false
    }

    /// Node where the rule fires on the path to `leaf`.
    pub fn stop_node(&self, tree: &ScenarioTree, leaf: NodeId) -> Option<NodeId> {
        tree.path_to(leaf).into_iter().find(|&u| self.hit[u])
    }

    /// Every root-to-leaf path carries a stop.
    pub fn is_complete(&self, tree: &ScenarioTree) -> bool {
        tree.leaves().all(|leaf| self.stop_node(tree, leaf).is_some())
    }

    pub fn stop_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.hit.len()).filter(|&v| self.hit[v])
    }
}

#[derive(Clone, Debug)]
pub struct SnellResult {
    pub envelope: AdaptedProcess,
    pub gains: AdaptedProcess,
    pub smallest_stop: StoppingRule,
    /// `S` at the root.
    pub value: f64,
}

/// Largest violations of the Snell optimality conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SnellCertificate {
    /// `max (E[S | children] - S)` over internal nodes.
    pub supermartingale: f64,
    /// `max (G - S)`.
    pub dominance: f64,
    /// `max |S - E[S | children]|` over nodes strictly before the stop.
    pub martingale: f64,
    /// `max |S - G|` at the stop.
    pub stop_gap: f64,
}

impl SnellCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.supermartingale <= tol && self.dominance <= tol && self.martingale <= tol && self.stop_gap <= tol
    }

    pub fn worst(&self) -> f64 {
        self.supermartingale
            .max(self.dominance)
            .max(self.martingale)
            .max(self.stop_gap)
    }
}

impl SnellResult {
    pub fn certificate(&self, tree: &ScenarioTree) -> SnellCertificate {
        let s = &self.envelope;
        let g = &self.gains;
        let mut cert = SnellCertificate::default();
        for v in 0..tree.len() {
            cert.dominance = cert.dominance.max(g[v] - s[v]);
            let stopped = self.smallest_stop.stopped_by(tree, v);
            if self.smallest_stop.stops_at(v) {
                cert.stop_gap = cert.stop_gap.max((s[v] - g[v]).abs());
            }
            if tree.is_leaf(v) {
                continue;
            }
            let cont = tree.child_expectation(v, |c| s[c]);
            cert.supermartingale = cert.supermartingale.max(cont - s[v]);
            if !stopped {
                cert.martingale = cert.martingale.max((s[v] - cont).abs());
            }
        }
        cert
    }
}

/// Snell envelope of `gains` by backward recursion, with the smallest
/// optimal stopping rule.
pub fn snell_envelope(tree: &ScenarioTree, gains: &AdaptedProcess) -> SnellResult {
    let mut s = gains.clone();
    let mut flags = vec![true; tree.len()];
    for v in (0..tree.len()).rev() {
        if tree.is_leaf(v) {
            continue;
        }
        let cont = tree.child_expectation(v, |c| s[c]);
        flags[v] = gains[v] >= cont - TOL_EQ;
        s[v] = gains[v].max(cont);
    }
    let value = s[tree.root()];
    SnellResult {
        smallest_stop: StoppingRule::from_flags(tree, &flags),
        envelope: s,
        gains: gains.clone(),
        value,
    }
}

/// Path-cumulative sum `A(v) = sum of d over the root-to-v path`.
pub fn cumulative(tree: &ScenarioTree, d: &AdaptedProcess) -> AdaptedProcess {
    let mut a = d.clone();
    for v in 0..tree.len() {
        if let Some(p) = tree.parent(v) {
            a[v] += a[p];
        }
    }
    a
}

/// Gains of agent `i` (1-based) under contract `y`: accumulated reward over
/// `[0, t]`, atoms included, plus the exit payment.
pub fn agent_gains(problem: &TreeProblem, i: usize, y: &AdaptedProcess) -> AdaptedProcess {
    let d = AdaptedProcess::from_fn(&problem.tree, |v| problem.agent_weight(v) * problem.f(v)[i - 1]);
    let mut g = cumulative(&problem.tree, &d);
    for v in 0..problem.tree.len() {
        g[v] += y[v];
    }
    g
}

/// Agent `i`'s optimal exit problem under contract `y`: the Snell envelope
/// of its gains and the value `V^A_i`.
pub fn agent_best_response(problem: &TreeProblem, i: usize, y: &AdaptedProcess) -> Result<(SnellResult, f64)> {
    if i == 0 || i > problem.agents {
        return Err(Error::AgentIndex {
            index: i,
            agents: problem.agents,
        });
    }
    let res = snell_envelope(&problem.tree, &agent_gains(problem, i, y));
    let value = res.value;
    Ok((res, value))
}

#[derive(Clone, Debug)]
pub struct MultiStopResult {
    /// `sup E[sum_i A_i(tau_i)]` over ordered tuples.
    pub value: f64,
    /// Smallest optimal ordered rules `tau_1 <= ... <= tau_n`.
    pub rules: Vec<StoppingRule>,
    /// Envelope for each stop, `envelopes[i]` belonging to `tau_{i+1}`.
    pub envelopes: Vec<SnellResult>,
}

/// Ordered multiple stopping with additive gains: maximizes
/// `E[sum_i sum_{s <= tau_i} d_i(s)]` over `tau_1 <= ... <= tau_n`.
///
/// The value from a node onward satisfies `U_{n+1} = 0` and
/// `U_i = Snell(A_i + U_{i+1})`; the stops are chosen greedily, each the
/// first contact of its envelope at or after the previous stop.
pub fn ordered_multistop(tree: &ScenarioTree, increments: &[AdaptedProcess]) -> MultiStopResult {
    let n = increments.len();
    let mut next = AdaptedProcess::constant(tree, 0.0);
    let mut envelopes = Vec::with_capacity(n);
    for d in increments.iter().rev() {
        let mut g = cumulative(tree, d);
        for v in 0..tree.len() {
            g[v] += next[v];
        }
        let res = snell_envelope(tree, &g);
        next = res.envelope.clone();
        envelopes.push(res);
    }
    envelopes.reverse();
    let value = if n == 0 { 0.0 } else { envelopes[0].value };

    let mut rules: Vec<StoppingRule> = Vec::with_capacity(n);
    for res in &envelopes {
        let flags: Vec<bool> = (0..tree.len())
            .map(|v| {
                let contact = res.envelope[v] - res.gains[v] <= TOL_EQ || tree.is_leaf(v);
                let allowed = rules.last().is_none_or(|prev| prev.stopped_by(tree, v));
                contact && allowed
            })
            .collect();
        rules.push(StoppingRule::from_flags(tree, &flags));
    }
    MultiStopResult {
        value,
        rules,
        envelopes,
    }
}
