//! Problem data: time grid, atomic measures, the scenario tree or Markov
//! lattice carrying the reward rates, and the JSON problem file format.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default minimum gap required between consecutive agent rates.
pub const DEFAULT_STRICT_MARGIN: f64 = 1e-9;
/// Tolerance on probability rows summing to one.
pub const PROB_TOL: f64 = 1e-12;
/// Default node cap when compiling a lattice into a tree.
pub const DEFAULT_TREE_CAP: usize = 2_000_000;

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Self {
        TimeGrid { times }
    }

    /// Equally spaced grid `0, T/m, ..., T`.
    pub fn uniform(horizon: f64, stages: usize) -> Self {
        let times = (0..=stages).map(|j| horizon * j as f64 / stages as f64).collect();
        TimeGrid { times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `m`; the grid has `m + 1` points.
    pub fn stages(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Largest step `max_j (t_{j+1} - t_j)`.
    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Atom weights `c_0, ..., c_m` of a measure carried by the grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure {
    weights: Vec<f64>,
}

impl AtomicMeasure {
    pub fn new(weights: Vec<f64>) -> Self {
        AtomicMeasure { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, stage: usize) -> f64 {
        self.weights[stage]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub stage: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Transition probability to each entry of `children`.
    pub child_probs: Vec<f64>,
    pub agent_rates: Vec<f64>,
    pub principal_rates: Vec<f64>,
    pub terminal: Option<f64>,
    /// Lattice state when the tree was compiled from a lattice.
    pub state: Option<usize>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Finite filtered probability space. Nodes are stored breadth first, so a
/// parent always precedes its children and node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTree {
    nodes: Vec<Node>,
    prob: Vec<f64>,
}

impl ScenarioTree {
    /// Builds a tree from nodes already in breadth-first order with
    /// consistent parent/child links.
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Self {
        let mut prob = vec![0.0; nodes.len()];
        if !nodes.is_empty() {
            prob[0] = 1.0;
        }
        for v in 0..nodes.len() {
            for (&c, &p) in nodes[v].children.iter().zip(&nodes[v].child_probs) {
                prob[c] = prob[v] * p;
            }
        }
        ScenarioTree { nodes, prob }
    }

    pub fn from_file_node(root: &TreeNodeFile) -> Self {
        let mut nodes: Vec<Node> = Vec::new();
        let mut queue: VecDeque<(&TreeNodeFile, Option<NodeId>, usize)> = VecDeque::new();
        queue.push_back((root, None, 0));
        while let Some((raw, parent, stage)) = queue.pop_front() {
            let id = nodes.len();
            if let Some(p) = parent {
                nodes[p].children.push(id);
                nodes[p].child_probs.push(raw.p.unwrap_or(f64::NAN));
            }
            nodes.push(Node {
                stage,
                parent,
                children: Vec::new(),
                child_probs: Vec::new(),
                agent_rates: raw.f.clone(),
                principal_rates: raw.g.clone(),
                terminal: raw.xi,
                state: None,
            });
            for child in &raw.children {
                queue.push_back((child, Some(id), stage + 1));
            }
        }
        Self::from_nodes(nodes)
    }

    pub fn to_file_node(&self) -> TreeNodeFile {
        self.file_node(0, None)
    }

    fn file_node(&self, v: NodeId, p: Option<f64>) -> TreeNodeFile {
        let node = &self.nodes[v];
        TreeNodeFile {
            p,
            f: node.agent_rates.clone(),
            g: node.principal_rates.clone(),
            xi: node.terminal,
            children: node
                .children
                .iter()
                .zip(&node.child_probs)
                .map(|(&c, &q)| self.file_node(c, Some(q)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, v: NodeId) -> &Node {
        &self.nodes[v]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn stage(&self, v: NodeId) -> usize {
        self.nodes[v].stage
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes[v].parent
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.nodes[v].is_leaf()
    }

    /// `(child, transition probability)` pairs.
    pub fn children(&self, v: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let n = &self.nodes[v];
        n.children.iter().copied().zip(n.child_probs.iter().copied())
    }

    /// Unconditional probability of reaching `v`.
    pub fn probability(&self, v: NodeId) -> f64 {
        self.prob[v]
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&v| self.nodes[v].is_leaf())
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.stage).max().unwrap_or(0)
    }

    /// Root-to-`v` node sequence, inclusive.
    pub fn path_to(&self, v: NodeId) -> Vec<NodeId> {
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Canonical node key: child indices from the root joined by `/`; the
    /// root is the empty string.
    pub fn path_key(&self, v: NodeId) -> String {
        let path = self.path_to(v);
        path.windows(2)
            .map(|w| {
                let idx = self.nodes[w[0]]
                    .children
                    .iter()
                    .position(|&c| c == w[1])
                    .expect("child link");
                idx.to_string()
            })
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn node_by_key(&self, key: &str) -> Option<NodeId> {
        let mut cur = self.root();
        if key.is_empty() {
            return Some(cur);
        }
        for part in key.split('/') {
            let idx: usize = part.parse().ok()?;
            cur = *self.nodes[cur].children.get(idx)?;
        }
        Some(cur)
    }

    /// Expectation over the children of `v` of `value(child)`.
    pub fn child_expectation(&self, v: NodeId, mut value: impl FnMut(NodeId) -> f64) -> f64 {
        self.children(v).map(|(c, p)| p * value(c)).sum()
    }
}

/// One real value per node of a scenario tree.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedProcess(pub Vec<f64>);

impl AdaptedProcess {
    pub fn constant(tree: &ScenarioTree, value: f64) -> Self {
        AdaptedProcess(vec![value; tree.len()])
    }

    pub fn from_fn(tree: &ScenarioTree, f: impl FnMut(NodeId) -> f64) -> Self {
        AdaptedProcess((0..tree.len()).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Reads a process from a `path key -> value` map; every node must be
    /// present.
    pub fn from_key_map(tree: &ScenarioTree, map: &BTreeMap<String, f64>) -> Result<Self> {
        for key in map.keys() {
            if tree.node_by_key(key).is_none() {
                return Err(Error::UnknownNode(key.clone()));
            }
        }
        let mut values = Vec::with_capacity(tree.len());
        for v in 0..tree.len() {
            let key = tree.path_key(v);
            match map.get(&key) {
                Some(&x) => values.push(x),
                None => return Err(Error::MissingNode(key)),
            }
        }
        Ok(AdaptedProcess(values))
    }

    /// Writes the process as a `path key -> value` map, skipping non-finite
    /// sentinels.
    pub fn to_key_map(&self, tree: &ScenarioTree) -> BTreeMap<String, f64> {
        (0..tree.len())
            .filter(|&v| self.0[v].is_finite())
            .map(|v| (tree.path_key(v), self.0[v]))
            .collect()
    }
}

impl Index<NodeId> for AdaptedProcess {
    type Output = f64;
    fn index(&self, v: NodeId) -> &f64 {
        &self.0[v]
    }
}

impl IndexMut<NodeId> for AdaptedProcess {
    fn index_mut(&mut self, v: NodeId) -> &mut f64 {
        &mut self.0[v]
    }
}

/// Finite-state Markov chain on the grid with state-dependent rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovLattice {
    /// Number of states at each stage `0..=m`.
    pub states: Vec<usize>,
    /// `transitions[j][x][y]`: probability of moving from state `x` at
    /// stage `j` to state `y` at stage `j + 1`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub init: Vec<f64>,
    /// `f[j][x][i]`.
    #[serde(rename = "f")]
    pub agent_rates: Vec<Vec<Vec<f64>>>,
    /// `g[j][x][i]`.
    #[serde(rename = "g")]
    pub principal_rates: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "xi")]
    pub terminal: Vec<f64>,
}

impl MarkovLattice {
    pub fn stages(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// The state carrying all initial mass.
    pub fn initial_state(&self) -> Option<usize> {
        let support: Vec<usize> = (0..self.init.len()).filter(|&x| self.init[x] > 0.0).collect();
        match support.as_slice() {
            [x] => Some(*x),
            _ => None,
        }
    }

    /// Marginal law of the chain at every stage.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.init.clone()];
        for j in 0..self.stages() {
            let prev = &out[j];
            let mut next = vec![0.0; self.states[j + 1]];
            for (x, &px) in prev.iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                for (y, &q) in self.transitions[j][x].iter().enumerate() {
                    next[y] += px * q;
                }
            }
            out.push(next);
        }
        out
    }
}

/// Expands a lattice into the tree of positive-probability state histories.
pub fn compile_lattice_to_tree(lattice: &MarkovLattice, cap: usize) -> Result<ScenarioTree> {
    let x0 = lattice
        .initial_state()
        .ok_or_else(|| Error::Parse("lattice initial distribution must be a point mass".into()))?;
    let m = lattice.stages();
    let make = |j: usize, x: usize, parent: Option<NodeId>| Node {
        stage: j,
        parent,
        children: Vec::new(),
        child_probs: Vec::new(),
        agent_rates: lattice.agent_rates[j][x].clone(),
        principal_rates: lattice.principal_rates[j][x].clone(),
        terminal: (j == m).then(|| lattice.terminal[x]),
        state: Some(x),
    };
    let mut nodes = vec![make(0, x0, None)];
    let mut v = 0;
    while v < nodes.len() {
        let (j, x) = (nodes[v].stage, nodes[v].state.unwrap_or(0));
        if j < m {
            for (y, &q) in lattice.transitions[j][x].iter().enumerate() {
                if q > 0.0 {
                    if nodes.len() >= cap {
                        return Err(Error::CapExceeded {
                            what: "compiled tree",
                            size: nodes.len() as u128 + 1,
                            cap: cap as u128,
                        });
                    }
                    let id = nodes.len();
                    nodes.push(make(j + 1, y, Some(v)));
                    nodes[v].children.push(id);
                    nodes[v].child_probs.push(q);
                }
            }
        }
        v += 1;
    }
    Ok(ScenarioTree::from_nodes(nodes))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Tree(ScenarioTree),
    Lattice(MarkovLattice),
}

/// A full principal/agent instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub grid: TimeGrid,
    pub mu_a: AtomicMeasure,
    pub mu_p: AtomicMeasure,
    pub agents: usize,
    pub model: Model,
    pub strict_margin: f64,
}

impl ProblemSpec {
    pub fn lattice(&self) -> Option<&MarkovLattice> {
        match &self.model {
            Model::Lattice(l) => Some(l),
            Model::Tree(_) => None,
        }
    }

    /// The instance on its scenario tree, compiling a lattice if needed.
    pub fn tree_problem(&self, cap: usize) -> Result<TreeProblem> {
        let tree = match &self.model {
            Model::Tree(t) => t.clone(),
            Model::Lattice(l) => compile_lattice_to_tree(l, cap)?,
        };
        Ok(TreeProblem {
            grid: self.grid.clone(),
            mu_a: self.mu_a.clone(),
            mu_p: self.mu_p.clone(),
            agents: self.agents,
            tree,
        })
    }

    pub fn to_file(&self) -> ProblemFile {
        let (tree, lattice) = match &self.model {
            Model::Tree(t) => (Some(t.to_file_node()), None),
            Model::Lattice(l) => (None, Some(l.clone())),
        };
        ProblemFile {
            grid: self.grid.times.clone(),
            mu_a: self.mu_a.weights.clone(),
            mu_p: self.mu_p.weights.clone(),
            agents: self.agents,
            strict_margin: (self.strict_margin != DEFAULT_STRICT_MARGIN).then_some(self.strict_margin),
            tree,
            lattice,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("problem serializes")
    }
}

/// Problem instance on an explicit scenario tree, the input of every tree
/// solver.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeProblem {
    pub grid: TimeGrid,
    pub mu_a: AtomicMeasure,
    pub mu_p: AtomicMeasure,
    pub agents: usize,
    pub tree: ScenarioTree,
}

impl TreeProblem {
    pub fn stages(&self) -> usize {
        self.grid.stages()
    }

    /// `c^A_j` at the stage of `v`.
    pub fn agent_weight(&self, v: NodeId) -> f64 {
        self.mu_a.weight(self.tree.stage(v))
    }

    pub fn principal_weight(&self, v: NodeId) -> f64 {
        self.mu_p.weight(self.tree.stage(v))
    }

    /// Agent rates `f_1..f_n` at `v`.
    pub fn f(&self, v: NodeId) -> &[f64] {
        &self.tree.node(v).agent_rates
    }

    /// Principal rates `g_1..g_n` at `v`.
    pub fn g(&self, v: NodeId) -> &[f64] {
        &self.tree.node(v).principal_rates
    }

    pub fn terminal(&self, v: NodeId) -> f64 {
        self.tree.node(v).terminal.unwrap_or(0.0)
    }

    pub fn to_spec(&self) -> ProblemSpec {
        ProblemSpec {
            grid: self.grid.clone(),
            mu_a: self.mu_a.clone(),
            mu_p: self.mu_p.clone(),
            agents: self.agents,
            model: Model::Tree(self.tree.clone()),
            strict_margin: DEFAULT_STRICT_MARGIN,
        }
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNodeFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNodeFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub grid: Vec<f64>,
    #[serde(rename = "muA")]
    pub mu_a: Vec<f64>,
    #[serde(rename = "muP")]
    pub mu_p: Vec<f64>,
    pub agents: usize,
    #[serde(rename = "strictMargin", default, skip_serializing_if = "Option::is_none")]
    pub strict_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeNodeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<MarkovLattice>,
}

impl ProblemFile {
    pub fn into_spec(self) -> Result<ProblemSpec> {
        let model = match (self.tree, self.lattice) {
            (Some(t), None) => Model::Tree(ScenarioTree::from_file_node(&t)),
            (None, Some(l)) => Model::Lattice(l),
            (Some(_), Some(_)) => return Err(Error::Parse("both `tree` and `lattice` given".into())),
            (None, None) => return Err(Error::Parse("one of `tree` or `lattice` is required".into())),
        };
        Ok(ProblemSpec {
            grid: TimeGrid::new(self.grid),
            mu_a: AtomicMeasure::new(self.mu_a),
            mu_p: AtomicMeasure::new(self.mu_p),
            agents: self.agents,
            model,
            strict_margin: self.strict_margin.unwrap_or(DEFAULT_STRICT_MARGIN),
        })
    }
}

/// Parses and validates a problem given as JSON text.
pub fn parse_problem(text: &str) -> Result<ProblemSpec> {
    let file: ProblemFile = serde_json::from_str(text)?;
    let spec = file.into_spec()?;
    let report = validate_problem(&spec);
    if report.is_empty() {
        Ok(spec)
    } else {
        Err(Error::Invalid(report))
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_problem(&text)
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            location: location.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}: {}", v.location, v.message)?;
        }
        Ok(())
    }
}

fn check_rates(report: &mut ValidationReport, loc: &str, f: &[f64], g: &[f64], agents: usize, margin: f64) {
    if f.len() != agents {
        report.push(loc, format!("expected {agents} agent rates, found {}", f.len()));
    }
    if g.len() != agents {
        report.push(loc, format!("expected {agents} principal rates, found {}", g.len()));
    }
    if f.iter().chain(g).any(|x| !x.is_finite()) {
        report.push(loc, "non-finite rate");
    }
    for (i, w) in f.windows(2).enumerate() {
        if !(w[1] - w[0] >= margin) {
            report.push(
                loc,
                format!(
                    "agent rates not strictly increasing: f_{} = {} vs f_{} = {}",
                    i + 1,
                    w[0],
                    i + 2,
                    w[1]
                ),
            );
        }
    }
}

fn check_distribution(report: &mut ValidationReport, loc: &str, row: &[f64]) {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        report.push(loc, "negative or non-finite probability");
    }
    let sum: f64 = row.iter().sum();
    if !((sum - 1.0).abs() <= PROB_TOL) {
        report.push(loc, format!("probabilities sum to {sum}, not 1"));
    }
}

/// Lists every violated invariant of `spec`; empty iff the instance is valid.
pub fn validate_problem(spec: &ProblemSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let times = spec.grid.times();
    if times.len() < 2 {
        report.push("grid", "need at least two grid points (m >= 1)");
    }
    if times.first().is_some_and(|&t| t != 0.0) {
        report.push("grid[0]", "first grid time must be 0");
    }
    for (j, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            report.push(format!("grid[{}]", j + 1), "grid times must be strictly increasing");
        }
    }
    let m = spec.grid.stages();
    for (name, mu) in [("muA", &spec.mu_a), ("muP", &spec.mu_p)] {
        if mu.weights().len() != m + 1 {
            report.push(
                name,
                format!("expected {} weights, found {}", m + 1, mu.weights().len()),
            );
        }
        for (j, &c) in mu.weights().iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                report.push(format!("{name}[{j}]"), "weight must be finite and nonnegative");
            } else if j >= 1 && c <= 0.0 {
                report.push(format!("{name}[{j}]"), "atom weight must be positive for j >= 1");
            }
        }
    }
    if spec.agents == 0 {
        report.push("agents", "at least one agent is required");
    }
    if !(spec.strict_margin > 0.0) {
        report.push("strictMargin", "must be positive");
    }
    let n = spec.agents;
    match &spec.model {
        Model::Tree(tree) => {
            for v in 0..tree.len() {
                let node = tree.node(v);
                let loc = format!("node {:?}", tree.path_key(v));
                check_rates(
                    &mut report,
                    &loc,
                    &node.agent_rates,
                    &node.principal_rates,
                    n,
                    spec.strict_margin,
                );
                if node.stage > m {
                    report.push(&loc, format!("node at stage {} beyond horizon {m}", node.stage));
                    continue;
                }
                if node.is_leaf() {
                    if node.stage < m {
                        report.push(&loc, format!("leaf at stage {} before horizon {m}", node.stage));
                    }
                    match node.terminal {
                        Some(x) if x.is_finite() => {}
                        Some(_) => report.push(&loc, "non-finite terminal payoff"),
                        None => report.push(&loc, "leaf lacks terminal payoff `xi`"),
                    }
                } else {
                    if node.child_probs.iter().any(|&p| !(p > 0.0)) {
                        report.push(&loc, "child probabilities must be strictly positive");
                    }
                    let sum: f64 = node.child_probs.iter().sum();
                    if !((sum - 1.0).abs() <= PROB_TOL) {
                        report.push(&loc, format!("child probabilities sum to {sum}, not 1"));
                    }
                }
            }
        }
        Model::Lattice(lat) => validate_lattice(&mut report, lat, m, n, spec.strict_margin),
    }
    report
}

fn validate_lattice(report: &mut ValidationReport, lat: &MarkovLattice, m: usize, n: usize, margin: f64) {
    if lat.states.len() != m + 1 {
        report.push(
            "lattice.states",
            format!("expected {} stages, found {}", m + 1, lat.states.len()),
        );
        return;
    }
    if lat.states.contains(&0) {
        report.push("lattice.states", "every stage needs at least one state");
        return;
    }
    if lat.init.len() != lat.states[0] {
        report.push("lattice.init", "length must equal the number of stage-0 states");
    } else {
        check_distribution(report, "lattice.init", &lat.init);
        if lat.initial_state().is_none() {
            report.push("lattice.init", "initial distribution must be a point mass");
        }
    }
    if lat.transitions.len() != m {
        report.push("lattice.transitions", format!("expected {m} matrices"));
    } else {
        for j in 0..m {
            let mat = &lat.transitions[j];
            if mat.len() != lat.states[j] {
                report.push(format!("lattice.transitions[{j}]"), "row count mismatch");
                continue;
            }
            for (x, row) in mat.iter().enumerate() {
                let loc = format!("lattice.transitions[{j}][{x}]");
                if row.len() != lat.states[j + 1] {
                    report.push(&loc, "column count mismatch");
                    continue;
                }
                check_distribution(report, &loc, row);
            }
        }
    }
    for (name, table) in [("f", &lat.agent_rates), ("g", &lat.principal_rates)] {
        if table.len() != m + 1 || (0..=m).any(|j| table[j].len() != lat.states[j]) {
            report.push(format!("lattice.{name}"), "table shape does not match states");
            return;
        }
    }
    for j in 0..=m {
        for x in 0..lat.states[j] {
            check_rates(
                report,
                &format!("lattice state ({j}, {x})"),
                &lat.agent_rates[j][x],
                &lat.principal_rates[j][x],
                n,
                margin,
            );
        }
    }
    if lat.terminal.len() != lat.states[m] {
        report.push("lattice.xi", "length must equal the number of terminal states");
    } else if lat.terminal.iter().any(|x| !x.is_finite()) {
        report.push("lattice.xi", "non-finite terminal payoff");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_AGENT: &str = r#"{
        "grid": [0, 1], "muA": [0, 1], "muP": [1, 1], "agents": 1,
        "tree": {"f": [0], "g": [1], "children": [{"p": 1, "f": [0], "g": [1], "xi": 0}]}
    }"#;

    #[test]
    fn loads_deterministic_one_agent() {
        let spec = parse_problem(ONE_AGENT).unwrap();
        assert_eq!(spec.grid.stages(), 1);
        assert_eq!(spec.agents, 1);
        let again = parse_problem(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn tied_rates_name_the_node() {
        let text = r#"{
            "grid": [0, 1], "muA": [0, 1], "muP": [1, 1], "agents": 2,
            "tree": {"f": [0, 1], "g": [1, 1], "children": [
                {"p": 0.5, "f": [0, 1], "g": [1, 1], "xi": 0},
                {"p": 0.5, "f": [1, 1], "g": [1, 1], "xi": 0}]}
        }"#;
        match parse_problem(text) {
            Err(Error::Invalid(r)) => {
                assert_eq!(r.violations.len(), 1);
                assert_eq!(r.violations[0].location, "node \"1\"");
                assert!(r.violations[0].message.contains("strictly increasing"));
            }
            other => panic!("expected ordering error, got {other:?}"),
        }
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let text = r#"{
            "grid": [0, 1], "muA": [0, 1], "muP": [1, 1], "agents": 1,
            "tree": {"f": [0], "g": [1], "children": [
                {"p": 0.49, "f": [0], "g": [1], "xi": 0},
                {"p": 0.49, "f": [0], "g": [1], "xi": 0}]}
        }"#;
        let Err(Error::Invalid(r)) = parse_problem(text) else {
            panic!("expected stochasticity error")
        };
        assert!(r.violations[0].message.contains("sum to 0.98"));
    }

    #[test]
    fn zero_atom_after_start_is_reported() {
        let mut spec = parse_problem(ONE_AGENT).unwrap();
        spec.grid = TimeGrid::new(vec![0.0, 1.0, 2.0]);
        spec.mu_a = AtomicMeasure::new(vec![0.0, 1.0, 0.0]);
        spec.mu_p = AtomicMeasure::new(vec![1.0, 1.0, 1.0]);
        let report = validate_problem(&spec);
        assert!(report
            .violations
            .iter()
            .any(|v| v.location == "muA[2]" && v.message.contains("positive")));
        // the tree now stops one stage short of the horizon
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("leaf at stage 1 before horizon 2")));
    }

    #[test]
    fn valid_spec_has_empty_report() {
        let spec = parse_problem(ONE_AGENT).unwrap();
        assert!(validate_problem(&spec).is_empty());
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(parse_problem("{ not json"), Err(Error::Parse(_))));
        assert!(matches!(
            parse_problem(r#"{"grid": [0,1], "muA": [0,1], "muP": [0,1], "agents": 1}"#),
            Err(Error::Parse(_))
        ));
    }

    fn chain_lattice(states: Vec<usize>, p: f64) -> MarkovLattice {
        let m = states.len() - 1;
        MarkovLattice {
            transitions: (0..m)
                .map(|j| vec![vec![p.min(1.0); states[j + 1]]; states[j]])
                .collect(),
            init: {
                let mut v = vec![0.0; states[0]];
                v[0] = 1.0;
                v
            },
            agent_rates: states.iter().map(|&k| vec![vec![0.0]; k]).collect(),
            principal_rates: states.iter().map(|&k| vec![vec![1.0]; k]).collect(),
            terminal: vec![0.0; states[m]],
            states,
        }
    }

    #[test]
    fn single_state_lattice_compiles_to_a_path() {
        let lat = chain_lattice(vec![1, 1, 1], 1.0);
        let tree = compile_lattice_to_tree(&lat, 100).unwrap();
        assert_eq!(tree.len(), 3);
        assert_eq!(tree.path_key(2), "0/0");
    }

    #[test]
    fn iid_lattice_compiles_with_product_probabilities() {
        let mut lat = chain_lattice(vec![1, 2, 2], 0.5);
        lat.transitions[0] = vec![vec![0.5, 0.5]];
        let tree = compile_lattice_to_tree(&lat, 100).unwrap();
        assert_eq!(tree.len(), 7);
        for leaf in tree.leaves() {
            assert_eq!(tree.probability(leaf), 0.25);
        }
        assert!(matches!(
            compile_lattice_to_tree(&lat, 5),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn zero_transition_omits_child() {
        let mut lat = chain_lattice(vec![1, 2], 0.5);
        lat.transitions[0] = vec![vec![1.0, 0.0]];
        let tree = compile_lattice_to_tree(&lat, 100).unwrap();
        assert_eq!(tree.len(), 2);
        assert_eq!(tree.node(1).state, Some(0));
    }

    #[test]
    fn path_keys_round_trip() {
        let mut lat = chain_lattice(vec![1, 2, 2], 0.5);
        lat.transitions[0] = vec![vec![0.5, 0.5]];
        let tree = compile_lattice_to_tree(&lat, 100).unwrap();
        for v in 0..tree.len() {
            assert_eq!(tree.node_by_key(&tree.path_key(v)), Some(v));
        }
        assert_eq!(tree.node_by_key("0/7"), None);
    }
}
