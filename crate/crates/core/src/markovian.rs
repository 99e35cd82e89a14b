//! Level policies restricted to functions of the current lattice state.

use crate::error::{Error, Result};
use crate::maxflow::max_weight_closure;
use crate::model::{MarkovLattice, ProblemSpec};
use crate::principal::reward_at;

pub const DEFAULT_LABELING_CAP: u128 = 1_000_000;
/// Objective weights are multiplied by this and rounded before the min-cut.
pub const DEFAULT_CUT_SCALE: f64 = 1e9;

/// `levels[j][x]`: level at stage `j` in state `x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkovLevelPolicy {
    pub levels: Vec<Vec<usize>>,
}

impl MarkovLevelPolicy {
    pub fn zero(lattice: &MarkovLattice) -> Self {
        MarkovLevelPolicy {
            levels: lattice.states.iter().map(|&k| vec![0; k]).collect(),
        }
    }

    pub fn to_fractional(&self) -> Vec<Vec<f64>> {
        self.levels
            .iter()
            .map(|row| row.iter().map(|&l| l as f64).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovianSolution {
    pub value: f64,
    pub policy: MarkovLevelPolicy,
    /// Number of labelings visited, for the exhaustive search.
    pub labelings: Option<u64>,
}

fn lattice_of(spec: &ProblemSpec) -> Result<&MarkovLattice> {
    spec.lattice().ok_or(Error::NotLattice)
}

fn edges(lattice: &MarkovLattice, j: usize, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    lattice.transitions[j][x]
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, q)| q > 0.0)
}

fn check_levels(spec: &ProblemSpec, lattice: &MarkovLattice, levels: &[Vec<f64>]) -> Result<()> {
    let n = spec.agents as f64;
    let m = lattice.stages();
    let shape_ok = levels.len() == m + 1 && levels.iter().zip(&lattice.states).all(|(r, &k)| r.len() == k);
    if !shape_ok {
        return Err(Error::Parse("level table does not match the lattice shape".into()));
    }
    for j in 0..=m {
        for x in 0..lattice.states[j] {
            let l = levels[j][x];
            if !(0.0..=n).contains(&l) {
                return Err(Error::LevelOutOfRange {
                    node: format!("stage {j} state {x}"),
                    level: l,
                    agents: spec.agents,
                });
            }
            if j < m && edges(lattice, j, x).any(|(y, _)| levels[j + 1][y] < l) {
                return Err(Error::NonMonotoneLevel {
                    node: format!("stage {j} state {x}"),
                });
            }
        }
    }
    Ok(())
}

fn expected_terminal(lattice: &MarkovLattice, marginals: &[Vec<f64>]) -> f64 {
    let m = lattice.stages();
    marginals[m].iter().zip(&lattice.terminal).map(|(p, xi)| p * xi).sum()
}

fn state_reward(spec: &ProblemSpec, lattice: &MarkovLattice, j: usize, x: usize, level: f64) -> f64 {
    reward_at(
        &lattice.agent_rates[j][x],
        &lattice.principal_rates[j][x],
        spec.mu_a.weight(j),
        spec.mu_p.weight(j),
        level,
    )
}

/// Expected reward at stage `j + 1` from state `x` at stage `j` holding
/// `level`, weighted by the probability of being in `x`.
fn step_reward(spec: &ProblemSpec, lattice: &MarkovLattice, px: f64, j: usize, x: usize, level: f64) -> f64 {
    px * edges(lattice, j, x)
        .map(|(y, q)| q * state_reward(spec, lattice, j + 1, y, level))
        .sum::<f64>()
}

/// Principal's objective for a state-dependent level table (fractional
/// levels allowed).
pub fn markovian_objective_fractional(spec: &ProblemSpec, levels: &[Vec<f64>]) -> Result<f64> {
    let lattice = lattice_of(spec)?;
    check_levels(spec, lattice, levels)?;
    let marginals = lattice.marginals();
    let mut total: f64 = (0..lattice.states[0])
        .map(|x| marginals[0][x] * state_reward(spec, lattice, 0, x, 0.0))
        .sum();
    for j in 0..lattice.stages() {
        for x in 0..lattice.states[j] {
            total += step_reward(spec, lattice, marginals[j][x], j, x, levels[j][x]);
        }
    }
    Ok(total - spec.agents as f64 * expected_terminal(lattice, &marginals))
}

pub fn markovian_objective(spec: &ProblemSpec, policy: &MarkovLevelPolicy) -> Result<f64> {
    markovian_objective_fractional(spec, &policy.to_fractional())
}

/// Sets the last-stage levels to the largest level among predecessors; they
/// do not enter the objective.
fn close_last_stage(lattice: &MarkovLattice, levels: &mut [Vec<usize>]) {
    let m = lattice.stages();
    if m == 0 {
        return;
    }
    levels[m].fill(0);
    for x in 0..lattice.states[m - 1] {
        for (y, _) in edges(lattice, m - 1, x) {
            levels[m][y] = levels[m][y].max(levels[m - 1][x]);
        }
    }
}

pub fn solve_markovian_mincut(spec: &ProblemSpec) -> Result<MarkovianSolution> {
    solve_markovian_mincut_scaled(spec, DEFAULT_CUT_SCALE)
}

/// Optimal state-dependent level policy via maximum-weight closure over
/// `z[j][x][i] = 1{l_j(x) >= i}`. Among optimal labelings the pointwise
/// smallest is returned.
pub fn solve_markovian_mincut_scaled(spec: &ProblemSpec, scale: f64) -> Result<MarkovianSolution> {
    let lattice = lattice_of(spec)?;
    let n = spec.agents;
    let m = lattice.stages();
    let marginals = lattice.marginals();

    let mut offset = vec![0usize; m + 1];
    for j in 0..m {
        offset[j + 1] = offset[j] + lattice.states[j] * n;
    }
    let var = |j: usize, x: usize, i: usize| offset[j] + x * n + (i - 1);

    let mut weights = vec![0i64; offset[m]];
    let mut implications = Vec::new();
    for j in 0..m {
        let (ca, cp) = (spec.mu_a.weight(j + 1), spec.mu_p.weight(j + 1));
        for x in 0..lattice.states[j] {
            for i in 1..=n {
                // raising the level from i-1 to i forgoes g_i and pays the
                // telescoped rate increment at the next atom
                let w: f64 = -marginals[j][x]
                    * edges(lattice, j, x)
                        .map(|(y, q)| {
                            let f = &lattice.agent_rates[j + 1][y];
                            let prev = if i > 1 { (i - 1) as f64 * f[i - 2] } else { 0.0 };
                            q * (lattice.principal_rates[j + 1][y][i - 1] * cp + (i as f64 * f[i - 1] - prev) * ca)
                        })
                        .sum::<f64>();
                weights[var(j, x, i)] = (w * scale).round() as i64;
                if i < n {
                    implications.push((var(j, x, i + 1), var(j, x, i)));
                }
                if j + 1 < m {
                    for (y, _) in edges(lattice, j, x) {
                        implications.push((var(j, x, i), var(j + 1, y, i)));
                    }
                }
            }
        }
    }

    let chosen = max_weight_closure(&weights, &implications);
    let mut policy = MarkovLevelPolicy::zero(lattice);
    for j in 0..m {
        for x in 0..lattice.states[j] {
            policy.levels[j][x] = (1..=n).filter(|&i| chosen[var(j, x, i)]).count();
        }
    }
    close_last_stage(lattice, &mut policy.levels);
    let value = markovian_objective(spec, &policy)?;
    Ok(MarkovianSolution {
        value,
        policy,
        labelings: None,
    })
}

/// Exhaustive search over edge-monotone labelings of stages `0..m`, states
/// visited stage by stage. Ties keep the lexicographically first labeling.
pub fn brute_force_markovian(spec: &ProblemSpec, cap: u128) -> Result<MarkovianSolution> {
    let lattice = lattice_of(spec)?;
    let n = spec.agents;
    let m = lattice.stages();
    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|j| (0..lattice.states[j]).map(move |x| (j, x)))
        .collect();
    let size = u32::try_from(cells.len())
        .ok()
        .and_then(|k| ((n + 1) as u128).checked_pow(k))
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::CapExceeded {
            what: "markovian labelings",
            size,
            cap,
        });
    }
    let marginals = lattice.marginals();
    // gain[c][l]: contribution of cell c holding level l
    let gain: Vec<Vec<f64>> = cells
        .iter()
        .map(|&(j, x)| {
            (0..=n)
                .map(|l| step_reward(spec, lattice, marginals[j][x], j, x, l as f64))
                .collect()
        })
        .collect();
    // predecessors of each cell among earlier cells
    let index_of = |j: usize, x: usize| cells.iter().position(|&c| c == (j, x)).unwrap();
    let preds: Vec<Vec<usize>> = cells
        .iter()
        .map(|&(j, y)| {
            if j == 0 {
                return Vec::new();
            }
            (0..lattice.states[j - 1])
                .filter(|&x| lattice.transitions[j - 1][x][y] > 0.0)
                .map(|x| index_of(j - 1, x))
                .collect()
        })
        .collect();

    struct Search<'a> {
        n: usize,
        gain: &'a [Vec<f64>],
        preds: &'a [Vec<usize>],
        current: Vec<usize>,
        best: Vec<usize>,
        best_value: f64,
        visited: u64,
    }
    impl Search<'_> {
        fn go(&mut self, c: usize, acc: f64) {
            if c == self.gain.len() {
                self.visited += 1;
                if acc > self.best_value {
                    self.best_value = acc;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            let lo = self.preds[c].iter().map(|&p| self.current[p]).max().unwrap_or(0);
            for l in lo..=self.n {
                self.current[c] = l;
                self.go(c + 1, acc + self.gain[c][l]);
            }
        }
    }
    let mut search = Search {
        n,
        gain: &gain,
        preds: &preds,
        current: vec![0; cells.len()],
        best: vec![0; cells.len()],
        best_value: f64::NEG_INFINITY,
        visited: 0,
    };
    search.go(0, 0.0);

    let mut policy = MarkovLevelPolicy::zero(lattice);
    for (c, &(j, x)) in cells.iter().enumerate() {
        policy.levels[j][x] = search.best[c];
    }
    close_last_stage(lattice, &mut policy.levels);
    let value = markovian_objective(spec, &policy)?;
    Ok(MarkovianSolution {
        value,
        policy,
        labelings: Some(search.visited),
    })
}

/// State-indexed contract of a Markovian level policy, by backward induction
/// on the transition matrices; `Y(m, x) = xi(x)`.
pub fn build_markovian_contract(spec: &ProblemSpec, policy: &MarkovLevelPolicy) -> Result<Vec<Vec<f64>>> {
    let lattice = lattice_of(spec)?;
    check_levels(spec, lattice, &policy.to_fractional())?;
    let m = lattice.stages();
    let mut y: Vec<Vec<f64>> = lattice.states.iter().map(|&k| vec![0.0; k]).collect();
    y[m].clone_from(&lattice.terminal);
    for j in (0..m).rev() {
        let ca = spec.mu_a.weight(j + 1);
        for x in 0..lattice.states[j] {
            let level = policy.levels[j][x] as f64;
            y[j][x] = edges(lattice, j, x)
                .map(|(z, q)| {
                    q * (ca * crate::representation::interp(&lattice.agent_rates[j + 1][z], level) + y[j + 1][z])
                })
                .sum();
        }
    }
    Ok(y)
}

/// Value of the unrestricted (path-dependent) problem on a lattice, by a
/// dynamic program over `(stage, state, level in force)`. Equals the tree
/// value of the compiled lattice without materializing it.
pub fn solve_lattice_dp(spec: &ProblemSpec) -> Result<f64> {
    let lattice = lattice_of(spec)?;
    let x0 = lattice
        .initial_state()
        .ok_or_else(|| Error::Parse("lattice initial distribution must be a point mass".into()))?;
    let n = spec.agents;
    let m = lattice.stages();
    let int_reward = |j: usize, x: usize, l: usize| state_reward(spec, lattice, j, x, l as f64);
    let mut value: Vec<Vec<f64>> = (0..lattice.states[m])
        .map(|x| {
            (0..=n)
                .map(|l| int_reward(m, x, l) - n as f64 * lattice.terminal[x])
                .collect()
        })
        .collect();
    for j in (0..m).rev() {
        value = (0..lattice.states[j])
            .map(|x| {
                let cont: Vec<f64> = (0..=n)
                    .map(|next| edges(lattice, j, x).map(|(y, q)| q * value[y][next]).sum())
                    .collect();
                let mut best = f64::NEG_INFINITY;
                let mut row = vec![0.0; n + 1];
                for l in (0..=n).rev() {
                    best = best.max(cont[l]);
                    row[l] = int_reward(j, x, l) + best;
                }
                row
            })
            .collect();
    }
    Ok(value[x0][0])
}
