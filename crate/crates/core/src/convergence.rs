//! Grid-refinement study: coarse problems built from a fine reference
//! problem, solved and compared with the reference value.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markovian::solve_lattice_dp;
use crate::model::{AtomicMeasure, MarkovLattice, Model, Node, NodeId, ProblemSpec, ScenarioTree, TimeGrid};
use crate::principal::solve_principal_dp;

/// Relative slack when matching coarse times to reference times.
const TIME_TOL: f64 = 1e-12;
/// An error counts as rising when it grows by more than this.
const RISE_TOL: f64 = 1e-12;

/// Nested coarse grids, each stored as indices into the reference grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementPlan {
    pub reference: TimeGrid,
    pub grids: Vec<Vec<usize>>,
}

/// Plan file: explicit coarse grids, or dyadic-style subdivision counts of
/// the reference horizon.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subdivisions: Option<Vec<usize>>,
}

impl RefinementPlan {
    pub fn from_times(reference: &TimeGrid, grids: &[Vec<f64>]) -> Result<Self> {
        let times = reference.times();
        let scale = reference.horizon().abs().max(1.0);
        let grids = grids
            .iter()
            .map(|grid| {
                grid.iter()
                    .map(|&t| {
                        times
                            .iter()
                            .position(|&r| (r - t).abs() <= TIME_TOL * scale)
                            .ok_or_else(|| Error::NotSubgrid(format!("time {t} is not a reference grid point")))
                    })
                    .collect::<Result<Vec<usize>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(reference, grids)
    }

    /// Every `M / k`-th reference point for each `k`; `k` must divide `M`.
    pub fn subdivisions(reference: &TimeGrid, counts: &[usize]) -> Result<Self> {
        let big_m = reference.stages();
        let grids = counts
            .iter()
            .map(|&k| {
                if k == 0 || !big_m.is_multiple_of(k) {
                    return Err(Error::NotSubgrid(format!(
                        "{k} does not divide the {big_m} reference steps"
                    )));
                }
                Ok((0..=k).map(|j| j * (big_m / k)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(reference, grids)
    }

    pub fn from_file(reference: &TimeGrid, file: &PlanFile) -> Result<Self> {
        match (&file.grids, &file.subdivisions) {
            (Some(g), None) => Self::from_times(reference, g),
            (None, Some(s)) => Self::subdivisions(reference, s),
            _ => Err(Error::Parse(
                "plan needs exactly one of `grids` or `subdivisions`".into(),
            )),
        }
    }

    pub fn from_indices(reference: &TimeGrid, grids: Vec<Vec<usize>>) -> Result<Self> {
        let last = reference.stages();
        let plan = RefinementPlan {
            reference: reference.clone(),
            grids,
        };
        let mut prev_mesh = f64::INFINITY;
        for (k, idx) in plan.grids.iter().enumerate() {
            if idx.first() != Some(&0) || idx.last() != Some(&last) {
                return Err(Error::NotSubgrid(format!("grid {k} must contain both endpoints")));
            }
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::NotSubgrid(format!("grid {k} is not strictly increasing")));
            }
            let mesh = plan.grid(k).mesh();
            if mesh > prev_mesh {
                return Err(Error::NotSubgrid(format!("grid {k} is coarser than the one before it")));
            }
            prev_mesh = mesh;
        }
        Ok(plan)
    }

    pub fn grid(&self, k: usize) -> TimeGrid {
        let t = self.reference.times();
        TimeGrid::new(self.grids[k].iter().map(|&i| t[i]).collect())
    }
}

fn aggregate(mu: &AtomicMeasure, idx: &[usize]) -> AtomicMeasure {
    let w = mu.weights();
    let mut out = vec![w[0]];
    for pair in idx.windows(2) {
        out.push(w[pair[0] + 1..=pair[1]].iter().sum());
    }
    AtomicMeasure::new(out)
}

fn coarsen_lattice(lattice: &MarkovLattice, idx: &[usize]) -> MarkovLattice {
    let pick = |v: &Vec<Vec<Vec<f64>>>| idx.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let transitions = idx
        .windows(2)
        .map(|pair| {
            let mut acc = lattice.transitions[pair[0]].clone();
            for step in &lattice.transitions[pair[0] + 1..pair[1]] {
                acc = acc
                    .iter()
                    .map(|row| {
                        (0..step[0].len())
                            .map(|z| row.iter().zip(step).map(|(p, s)| p * s[z]).sum())
                            .collect()
                    })
                    .collect();
            }
            acc
        })
        .collect();
    MarkovLattice {
        states: idx.iter().map(|&i| lattice.states[i]).collect(),
        transitions,
        init: lattice.init.clone(),
        agent_rates: pick(&lattice.agent_rates),
        principal_rates: pick(&lattice.principal_rates),
        terminal: lattice.terminal.clone(),
    }
}

/// Descendants of `v` at `stage`, left to right, with conditional
/// probabilities.
fn descendants_at(tree: &ScenarioTree, v: NodeId, stage: usize, p: f64, out: &mut Vec<(NodeId, f64)>) {
    if tree.stage(v) == stage {
        out.push((v, p));
        return;
    }
    for (c, q) in tree.children(v) {
        descendants_at(tree, c, stage, p * q, out);
    }
}

fn coarsen_tree(tree: &ScenarioTree, idx: &[usize]) -> ScenarioTree {
    let src = |v: NodeId| tree.node(v);
    let copy = |v: NodeId, stage: usize, parent: Option<NodeId>| Node {
        stage,
        parent,
        children: Vec::new(),
        child_probs: Vec::new(),
        ..src(v).clone()
    };
    let mut origin = vec![tree.root()];
    let mut nodes = vec![copy(tree.root(), 0, None)];
    let mut u = 0;
    while u < nodes.len() {
        let k = nodes[u].stage;
        if k + 1 < idx.len() {
            let mut below = Vec::new();
            for (c, q) in tree.children(origin[u]) {
                descendants_at(tree, c, idx[k + 1], q, &mut below);
            }
            for (d, p) in below {
                let id = nodes.len();
                nodes.push(copy(d, k + 1, Some(u)));
                origin.push(d);
                nodes[u].children.push(id);
                nodes[u].child_probs.push(p);
            }
        }
        u += 1;
    }
    ScenarioTree::from_nodes(nodes)
}

/// The reference problem seen on the coarse sub-grid `idx` (indices into
/// the reference grid): atom weights summed over each coarse step, rates
/// read at the right endpoint, chain steps composed.
pub fn coarsen_problem(reference: &ProblemSpec, idx: &[usize]) -> Result<ProblemSpec> {
    let plan = RefinementPlan::from_indices(&reference.grid, vec![idx.to_vec()])?;
    let model = match &reference.model {
        Model::Lattice(l) => Model::Lattice(coarsen_lattice(l, idx)),
        Model::Tree(t) => Model::Tree(coarsen_tree(t, idx)),
    };
    Ok(ProblemSpec {
        grid: plan.grid(0),
        mu_a: aggregate(&reference.mu_a, idx),
        mu_p: aggregate(&reference.mu_p, idx),
        agents: reference.agents,
        model,
        strict_margin: reference.strict_margin,
    })
}

/// Optimal principal value; lattices are solved without compiling a tree.
pub fn principal_value(spec: &ProblemSpec, tree_cap: usize) -> Result<f64> {
    match &spec.model {
        Model::Lattice(_) => solve_lattice_dp(spec),
        Model::Tree(_) => Ok(solve_principal_dp(&spec.tree_problem(tree_cap)?)?.value),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub mesh: f64,
    pub value: f64,
    pub abs_error: f64,
    /// Error larger than on the previous, coarser grid.
    pub flag: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub reference_value: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mesh,value,abs_error,flag\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.mesh, r.value, r.abs_error, u8::from(r.flag));
        }
        s
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flag)
    }
}

/// Solves the reference and every coarsening in the plan (in parallel) and
/// tabulates the errors in plan order.
pub fn run_convergence(reference: &ProblemSpec, plan: &RefinementPlan, tree_cap: usize) -> Result<ConvergenceTable> {
    if plan.reference != reference.grid {
        return Err(Error::NotSubgrid(
            "plan was built for a different reference grid".into(),
        ));
    }
    let reference_value = principal_value(reference, tree_cap)?;
    let solved: Vec<(f64, f64)> = plan
        .grids
        .par_iter()
        .map(|idx| {
            let coarse = coarsen_problem(reference, idx)?;
            Ok((coarse.grid.mesh(), principal_value(&coarse, tree_cap)?))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(solved.len());
    let mut prev_err = f64::INFINITY;
    for (mesh, value) in solved {
        let abs_error = (value - reference_value).abs();
        rows.push(ConvergenceRow {
            mesh,
            value,
            abs_error,
            flag: abs_error > prev_err + RISE_TOL,
        });
        prev_err = abs_error;
    }
    Ok(ConvergenceTable { reference_value, rows })
}
