//! Quick randomized self-checks of the solver identities, exposed through
//! the `selftest` command.

use rand::Rng;
use serde::Serialize;

use crate::convergence::coarsen_problem;
use crate::markovian::{
    brute_force_markovian, markovian_objective_fractional, solve_lattice_dp, solve_markovian_mincut,
};
use crate::model::TreeProblem;
use crate::principal::{
    brute_force_principal, count_order_violations, principal_objective, solve_principal_dp, solve_principal_multistop,
    verify_incentive_compatibility, BRUTE_FORCE_NODE_CAP,
};
use crate::random::{
    random_fractional_levels, random_integer_levels, random_lattice_problem, random_markov_levels, random_tree_problem,
    seeded, LatticeConfig, TreeConfig,
};
use crate::representation::{build_contract_from_levels, hitting_rule, represent_contract, verify_representation};
use crate::snell::agent_best_response;
use crate::Result;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest residual seen, where the suite measures one.
    pub worst: f64,
}

impl SuiteOutcome {
    fn new(name: &'static str) -> Self {
        SuiteOutcome {
            name,
            cases: 0,
            failures: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, residual: f64, tol: f64) {
        self.cases += 1;
        self.worst = self.worst.max(residual);
        if !(residual <= tol) {
            self.failures += 1;
        }
    }

    fn check(&mut self, ok: bool) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn tree_suites(problem: &TreeProblem, out: &mut [SuiteOutcome; 6]) -> Result<()> {
    let [agree, ic, exits, certs, _, _] = out;
    let dp = solve_principal_dp(problem)?;
    let ms = solve_principal_multistop(problem)?;
    let mut spread = (dp.value - ms.value).abs();
    if problem.tree.len() <= BRUTE_FORCE_NODE_CAP {
        let bf = brute_force_principal(problem, BRUTE_FORCE_NODE_CAP)?;
        spread = spread.max((dp.value - bf.value).abs());
    }
    agree.record(spread, 1e-9);
    for sol in [&dp, &ms] {
        let report = verify_incentive_compatibility(problem, sol)?;
        ic.check(report.passed());
        exits.record(count_order_violations(&problem.tree, &sol.exit_rules) as f64, 0.0);
        for i in 1..=problem.agents {
            let (res, _) = agent_best_response(problem, i, &sol.contract)?;
            certs.record(res.certificate(&problem.tree).worst(), 1e-12);
        }
    }
    Ok(())
}

fn level_suites<R: Rng>(rng: &mut R, problem: &TreeProblem, out: &mut [SuiteOutcome; 6]) -> Result<()> {
    let [.., round_trip, rounding] = out;
    let tree = &problem.tree;
    let levels = random_integer_levels(rng, problem);
    let y = build_contract_from_levels(problem, &levels)?;
    let back = represent_contract(problem, &y)?;
    let same_exits = (1..=problem.agents).all(|i| hitting_rule(tree, &levels, i) == hitting_rule(tree, &back, i));
    let residual = verify_representation(problem, &y, &back);
    round_trip.record(if same_exits { residual } else { f64::INFINITY }, 1e-9);

    let frac = random_fractional_levels(rng, problem);
    let mut floor = frac.clone();
    for l in floor.0.iter_mut() {
        *l = l.floor();
    }
    let gain = principal_objective(problem, &floor)? - principal_objective(problem, &frac)?;
    rounding.record((-gain).max(0.0), 1e-12);
    Ok(())
}

/// Runs every suite on `cases` random instances drawn from `seed`.
pub fn run_selftest(seed: u64, cases: usize) -> Result<Vec<SuiteOutcome>> {
    let mut rng = seeded(seed);
    let mut tree = [
        SuiteOutcome::new("solver agreement"),
        SuiteOutcome::new("incentive compatibility"),
        SuiteOutcome::new("ordered exits"),
        SuiteOutcome::new("snell certificates"),
        SuiteOutcome::new("representation round trip"),
        SuiteOutcome::new("rounding dominance"),
    ];
    let cfg = TreeConfig::default();
    for _ in 0..cases {
        let problem = random_tree_problem(&mut rng, &cfg);
        tree_suites(&problem, &mut tree)?;
        level_suites(&mut rng, &problem, &mut tree)?;
    }

    let mut cut = SuiteOutcome::new("markovian min-cut vs enumeration");
    let mut restriction = SuiteOutcome::new("markovian restriction");
    let mut markov_rounding = SuiteOutcome::new("markovian rounding");
    let mut identity = SuiteOutcome::new("identity coarsening");
    let lcfg = LatticeConfig::default();
    for _ in 0..cases {
        let spec = random_lattice_problem(&mut rng, &lcfg);
        let mincut = solve_markovian_mincut(&spec)?;
        let brute = brute_force_markovian(&spec, crate::markovian::DEFAULT_LABELING_CAP)?;
        cut.record((mincut.value - brute.value).abs(), 1e-9);
        restriction.record((mincut.value - solve_lattice_dp(&spec)?).max(0.0), 1e-9);

        let lattice = spec.lattice().expect("generated as a lattice");
        let frac = random_markov_levels(&mut rng, lattice, spec.agents);
        let floor: Vec<Vec<f64>> = frac.iter().map(|r| r.iter().map(|l| l.floor()).collect()).collect();
        let gain = markovian_objective_fractional(&spec, &floor)? - markovian_objective_fractional(&spec, &frac)?;
        markov_rounding.record((-gain).max(0.0), 1e-12);

        let all: Vec<usize> = (0..=spec.grid.stages()).collect();
        identity.check(coarsen_problem(&spec, &all)? == spec);
    }

    let mut out: Vec<SuiteOutcome> = tree.into_iter().collect();
    out.extend([cut, restriction, markov_rounding, identity]);
    Ok(out)
}
