//! Contracts as level processes: the interpolated rate `f(t, ., l)`, the
//! contract-to-level map `Y -> L` and its inverse `L -> Y^L`.
//!
//! For a contract `Y` the level process is read off the family of value
//! functions `Z^l(v) = sup_{sigma >= v} E[sum_{v < s <= sigma} c^A_s f(s, l) + Y(sigma)]`.
//! `l -> Z^l(v)` is piecewise linear because `f` is, so the whole family is
//! carried exactly as one [`PwlMonotone`] per node, and `L(v)` is the right
//! end of `{ l : Z^l(v) = Y(v) }`.

use crate::error::{Error, Result};
use crate::model::{AdaptedProcess, NodeId, ScenarioTree, TreeProblem};
use crate::pwl::PwlMonotone;
use crate::snell::StoppingRule;

/// Slack on `L >= i` when turning a level process into exit times; absorbs
/// rounding in levels that sit exactly on an integer.
pub const HIT_TOL: f64 = 1e-9;

/// Interpolated agent rate `f(l)` through `f(i) = rates[i-1]`, with unit
/// slope tails.
pub fn interpolate_f(rates: &[f64], level: f64) -> Result<f64> {
    if rates.is_empty() || rates.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::RateOrdering(rates.to_vec()));
    }
    Ok(interp(rates, level))
}

pub(crate) fn interp(rates: &[f64], level: f64) -> f64 {
    let n = rates.len();
    if level <= 1.0 {
        rates[0] + (level - 1.0)
    } else if level >= n as f64 {
        rates[n - 1] + (level - n as f64)
    } else {
        let i = level.floor() as usize; // 1 <= i < n
        let w = level - i as f64;
        (1.0 - w) * rates[i - 1] + w * rates[i]
    }
}

/// Level process together with the value functions it was read from.
#[derive(Clone, Debug)]
pub struct Representation {
    /// Raw level per node, `+inf` at leaves.
    pub levels: AdaptedProcess,
    /// `l -> Z^l(v)` per node.
    pub envelopes: Vec<PwlMonotone>,
}

fn check_admissible(problem: &TreeProblem, y: &AdaptedProcess) -> Result<()> {
    let tree = &problem.tree;
    for leaf in tree.leaves() {
        let xi = problem.terminal(leaf);
        if !(y[leaf] >= xi) {
            return Err(Error::Inadmissible {
                node: tree.path_key(leaf),
                value: y[leaf],
                terminal: xi,
            });
        }
    }
    Ok(())
}

/// `l -> E[c^A_{j+1} f(child, l) + Z^l(child) | v]`.
fn continuation(problem: &TreeProblem, v: NodeId, z: &[Option<PwlMonotone>]) -> PwlMonotone {
    let mut acc: Option<PwlMonotone> = None;
    for (c, p) in problem.tree.children(v) {
        let zc = z[c].as_ref().expect("children are processed first");
        let term = PwlMonotone::interpolated_rate(problem.f(c), problem.agent_weight(c)).add(zc);
        acc = Some(match acc {
            None => term.scale(p),
            Some(a) => a.combine(1.0, &term, p),
        });
    }
    acc.expect("internal node has children")
}

pub fn represent_contract_detailed(problem: &TreeProblem, y: &AdaptedProcess) -> Result<Representation> {
    check_admissible(problem, y)?;
    let tree = &problem.tree;
    let mut z: Vec<Option<PwlMonotone>> = vec![None; tree.len()];
    let mut levels = AdaptedProcess::constant(tree, f64::INFINITY);
    for v in (0..tree.len()).rev() {
        if tree.is_leaf(v) {
            z[v] = Some(PwlMonotone::constant(y[v]));
            continue;
        }
        let cont = continuation(problem, v, &z);
        levels[v] = cont.sup_level_at_most(y[v]);
        z[v] = Some(cont.max_const(y[v]));
    }
    Ok(Representation {
        levels,
        envelopes: z.into_iter().map(|e| e.expect("every node visited")).collect(),
    })
}

/// Level process representing the admissible contract `y`. Leaves carry the
/// `+inf` sentinel.
pub fn represent_contract(problem: &TreeProblem, y: &AdaptedProcess) -> Result<AdaptedProcess> {
    Ok(represent_contract_detailed(problem, y)?.levels)
}

fn check_monotone_levels(problem: &TreeProblem, levels: &AdaptedProcess) -> Result<()> {
    let tree = &problem.tree;
    let n = problem.agents as f64;
    for v in 0..tree.len() {
        let l = levels[v];
        if !(0.0..=n).contains(&l) {
            return Err(Error::LevelOutOfRange {
                node: tree.path_key(v),
                level: l,
                agents: problem.agents,
            });
        }
        if let Some(p) = tree.parent(v) {
            if l < levels[p] {
                return Err(Error::NonMonotoneLevel { node: tree.path_key(v) });
            }
        }
    }
    Ok(())
}

/// Contract `Y^L(v) = E[xi + sum_{s > stage(v)} c^A_s f(s, L_{s-}) | v]` for a
/// nondecreasing level process with values in `[0, n]`.
pub fn build_contract_from_levels(problem: &TreeProblem, levels: &AdaptedProcess) -> Result<AdaptedProcess> {
    check_monotone_levels(problem, levels)?;
    let tree = &problem.tree;
    let mut y = AdaptedProcess::constant(tree, 0.0);
    for v in (0..tree.len()).rev() {
        y[v] = if tree.is_leaf(v) {
            problem.terminal(v)
        } else {
            let l = levels[v];
            tree.child_expectation(v, |c| problem.agent_weight(c) * interp(problem.f(c), l) + y[c])
        };
    }
    Ok(y)
}

/// Running pathwise maximum of a raw level process, clamped to `[0, n]`.
/// The value at stage `j` is the level in force at the atom `t_{j+1}`.
pub fn clamp_level(tree: &ScenarioTree, raw: &AdaptedProcess, agents: usize) -> AdaptedProcess {
    let n = agents as f64;
    let mut out = AdaptedProcess::constant(tree, 0.0);
    for v in 0..tree.len() {
        let own = raw[v].clamp(0.0, n);
        out[v] = match tree.parent(v) {
            Some(p) => out[p].max(own),
            None => own,
        };
    }
    out
}

/// `L_{t-}` per node: the parent's level, and `0` at the root.
pub fn levels_in_force(tree: &ScenarioTree, levels: &AdaptedProcess) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, |v| tree.parent(v).map_or(0.0, |p| levels[p]))
}

/// Nodewise floor of a level process in `[0, n]`.
pub fn round_level_down(levels: &AdaptedProcess) -> Vec<usize> {
    levels.values().iter().map(|&l| l.floor().max(0.0) as usize).collect()
}

/// Exit rule of agent `i`: first node with `L >= i`, or the leaf when the
/// level is never reached.
pub fn hitting_rule(tree: &ScenarioTree, levels: &AdaptedProcess, i: usize) -> StoppingRule {
    let flags: Vec<bool> = (0..tree.len())
        .map(|v| tree.is_leaf(v) || levels[v] >= i as f64 - HIT_TOL)
        .collect();
    StoppingRule::from_flags(tree, &flags)
}

/// Largest `|Y(v) - E[Y(leaf) + sum_{s > stage(v)} c^A_s f(s, sup_{[v, s)} L) | v]|`.
pub fn verify_representation(problem: &TreeProblem, y: &AdaptedProcess, levels: &AdaptedProcess) -> f64 {
    let tree = &problem.tree;
    let mut worst: f64 = 0.0;
    for v in 0..tree.len() {
        let rhs = subtree_value(problem, y, levels, v, f64::NEG_INFINITY);
        worst = worst.max((y[v] - rhs).abs());
    }
    worst
}

fn subtree_value(
    problem: &TreeProblem,
    y: &AdaptedProcess,
    levels: &AdaptedProcess,
    v: NodeId,
    sup_before: f64,
) -> f64 {
    let tree = &problem.tree;
    if tree.is_leaf(v) {
        return y[v];
    }
    let running = sup_before.max(levels[v]);
    tree.child_expectation(v, |c| {
        problem.agent_weight(c) * interp(problem.f(c), running) + subtree_value(problem, y, levels, c, running)
    })
}
