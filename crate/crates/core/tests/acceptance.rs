//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use common::*;
use exitcontract::convergence::{run_convergence, RefinementPlan};
use exitcontract::markovian::{brute_force_markovian, solve_markovian_mincut, DEFAULT_LABELING_CAP};
use exitcontract::model::DEFAULT_TREE_CAP;
use exitcontract::principal::BRUTE_FORCE_NODE_CAP;
use exitcontract::random::{
    random_fractional_levels, random_integer_levels, random_lattice_problem, random_tree_problem, seeded,
    LatticeConfig, TreeConfig,
};
use exitcontract::representation::hitting_rule;
use exitcontract::snell::{cumulative, SnellResult};
use exitcontract::{
    agent_best_response, brute_force_principal, build_contract_from_levels, load_problem, principal_objective,
    represent_contract, snell_envelope, solve_principal_dp, solve_principal_multistop, verify_representation,
    AdaptedProcess, PrincipalSolution, TreeProblem,
};

const INSTANCES: usize = 200;
const LATTICES: usize = 100;

struct Line {
    ok: bool,
    text: String,
}

fn line(ok: bool, text: String) -> Line {
    Line { ok, text }
}

/// Running maximum of Snell certificate residuals.
#[derive(Default)]
struct Certificates {
    count: usize,
    worst: f64,
}

impl Certificates {
    fn add(&mut self, problem: &TreeProblem, res: &SnellResult) {
        self.count += 1;
        self.worst = self.worst.max(res.certificate(&problem.tree).worst());
    }
}

fn solutions(problem: &TreeProblem) -> Vec<PrincipalSolution> {
    vec![
        solve_principal_dp(problem).unwrap(),
        solve_principal_multistop(problem).unwrap(),
        brute_force_principal(problem, BRUTE_FORCE_NODE_CAP).unwrap(),
    ]
}

fn main() {
    let mut lines = Vec::new();
    let mut certs = Certificates::default();
    let mut rng = seeded(20_241_016);
    let cfg = TreeConfig::default();

    // 1, 2, 5 share the random instances
    let start = Instant::now();
    let problems: Vec<TreeProblem> = (0..INSTANCES).map(|_| random_tree_problem(&mut rng, &cfg)).collect();
    let mut spread: f64 = 0.0;
    let mut oracle_checked = 0;
    let mut oracle_spread: f64 = 0.0;
    let mut ic_failures = 0;
    let mut ic_gap: f64 = 0.0;
    let mut order_violations = 0;
    let mut solved = 0;
    for problem in &problems {
        let sols = solutions(problem);
        let v = sols[0].value;
        spread = spread.max(sols.iter().map(|s| (s.value - v).abs()).fold(0.0, f64::max));

        let incs = increments(problem);
        if let Some(ms) = multistop_by_enumeration(&problem.tree, &incs, 200_000) {
            oracle_checked += 1;
            oracle_spread = oracle_spread.max((principal_from_multistop(problem, ms) - v).abs());
        }
        // envelopes of the multistop recursion are Snell computations too
        let incs: Vec<AdaptedProcess> = incs.into_iter().map(AdaptedProcess).collect();
        let mut next = AdaptedProcess::constant(&problem.tree, 0.0);
        for d in incs.iter().rev() {
            let mut g = cumulative(&problem.tree, d);
            for u in 0..problem.tree.len() {
                g[u] += next[u];
            }
            let res = snell_envelope(&problem.tree, &g);
            certs.add(problem, &res);
            next = res.envelope;
        }

        for sol in &sols {
            solved += 1;
            let y = build_contract_from_levels(problem, &sol.policy.to_process()).unwrap();
            let mut responses = Vec::new();
            for i in 1..=problem.agents {
                let (res, _) = agent_best_response(problem, i, &y).unwrap();
                certs.add(problem, &res);
                responses.push(res.smallest_stop);
            }
            if responses != sol.exit_rules {
                ic_failures += 1;
            }
            ic_gap = ic_gap.max((realized_payoff(problem, &y, &responses) - sol.value).abs());
            order_violations += pathwise_ordered(&problem.tree, &sol.exit_rules);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    lines.push(line(
        spread <= 1e-9 && oracle_spread <= 1e-9 && elapsed < 60.0,
        format!(
            "1 solver agreement: {INSTANCES} instances, max spread {spread:.2e}, \
             tuple-enumeration check on {oracle_checked} of them (spread {oracle_spread:.2e}), {elapsed:.2}s"
        ),
    ));
    lines.push(line(
        ic_failures == 0 && ic_gap <= 1e-9,
        format!(
            "2 incentive compatibility: {solved} solutions, {ic_failures} exit mismatches, max payoff gap {ic_gap:.2e}"
        ),
    ));

    // 3 and 4: round trips of random integer level processes
    let mut rt_worst: f64 = 0.0;
    let mut rt_exit_mismatch = 0;
    let mut bis_worst: f64 = 0.0;
    let mut bis_nodes = 0;
    for problem in &problems {
        let tree = &problem.tree;
        let levels = random_integer_levels(&mut rng, problem);
        let y = build_contract_from_levels(problem, &levels).unwrap();
        let back = represent_contract(problem, &y).unwrap();
        rt_worst = rt_worst.max(verify_representation(problem, &y, &back));
        for i in 1..=problem.agents {
            let original = hitting_rule(tree, &levels, i);
            if original != hitting_rule(tree, &back, i) {
                rt_exit_mismatch += 1;
            }
            let (res, _) = agent_best_response(problem, i, &y).unwrap();
            certs.add(problem, &res);
            if res.smallest_stop != original {
                rt_exit_mismatch += 1;
            }
        }
        for v in (0..tree.len()).filter(|&v| !tree.is_leaf(v)) {
            bis_nodes += 1;
            bis_worst = bis_worst.max((bisection_level(problem, &y, v) - back[v]).abs());
        }
    }
    lines.push(line(
        rt_worst <= 1e-9 && rt_exit_mismatch == 0,
        format!(
            "3 representation round trip: {INSTANCES} level processes, max residual {rt_worst:.2e}, \
             {rt_exit_mismatch} hitting-rule mismatches"
        ),
    ));
    lines.push(line(
        bis_worst <= 1e-8,
        format!("4 levels vs bisection: {bis_nodes} nodes, max difference {bis_worst:.2e}"),
    ));
    lines.push(line(
        order_violations == 0,
        format!("5 ordered exits: {solved} solutions, {order_violations} violations"),
    ));

    // 6: flooring fractional levels never hurts the principal
    let mut worst_loss = f64::NEG_INFINITY;
    for problem in &problems {
        let frac = random_fractional_levels(&mut rng, problem);
        let floor = AdaptedProcess(frac.values().iter().map(|l| l.floor()).collect());
        let loss = principal_objective(problem, &frac).unwrap() - principal_objective(problem, &floor).unwrap();
        worst_loss = worst_loss.max(loss);
    }
    lines.push(line(
        worst_loss <= 1e-12,
        format!("6 rounding dominance: {INSTANCES} fractional processes, worst loss from flooring {worst_loss:.2e}"),
    ));

    // 7: Markovian restriction
    let mut cut_gap: f64 = 0.0;
    let mut excess: f64 = f64::NEG_INFINITY;
    for _ in 0..LATTICES {
        let spec = random_lattice_problem(&mut rng, &LatticeConfig::default());
        let cut = solve_markovian_mincut(&spec).unwrap();
        let brute = brute_force_markovian(&spec, DEFAULT_LABELING_CAP).unwrap();
        cut_gap = cut_gap.max((cut.value - brute.value).abs());
        let full = solve_principal_dp(&spec.tree_problem(DEFAULT_TREE_CAP).unwrap())
            .unwrap()
            .value;
        excess = excess.max(cut.value - full);
    }
    let witness =
        load_problem(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/markov_gap_witness.json")).unwrap();
    let w_cut = solve_markovian_mincut(&witness).unwrap().value;
    let w_brute = brute_force_markovian(&witness, DEFAULT_LABELING_CAP).unwrap().value;
    let w_full = solve_principal_dp(&witness.tree_problem(DEFAULT_TREE_CAP).unwrap())
        .unwrap()
        .value;
    let w_gap = w_full - w_cut;
    lines.push(line(
        cut_gap <= 1e-9 && excess <= 1e-9 && (w_cut - w_brute).abs() <= 1e-9 && w_gap > 1e-6,
        format!(
            "7 markovian restriction: {LATTICES} lattices, min-cut vs enumeration {cut_gap:.2e}, \
             largest excess over unrestricted {excess:.2e}, witness gap {w_gap:.4e}"
        ),
    ));

    // 8: grid refinement on a 64-step reference
    let start = Instant::now();
    let reference = lipschitz_reference(64);
    let plan = RefinementPlan::subdivisions(&reference.grid, &[2, 4, 8, 16, 32, 64]).unwrap();
    let table = run_convergence(&reference, &plan, DEFAULT_TREE_CAP).unwrap();
    let v_ref = table.reference_value;
    let last_coarse = table.rows[table.rows.len() - 2].abs_error;
    let identity = table.rows[table.rows.len() - 1].abs_error;
    let bound = if v_ref.abs() < 0.1 { 1e-3 } else { 0.01 * v_ref.abs() };
    let errors: Vec<String> = table.rows.iter().map(|r| format!("{:.2e}", r.abs_error)).collect();
    let elapsed = start.elapsed().as_secs_f64();
    lines.push(line(
        last_coarse < bound && identity == 0.0 && elapsed < 300.0,
        format!(
            "8 convergence: reference value {v_ref:.6}, errors [{}], bound {bound:.2e}, {elapsed:.2}s",
            errors.join(", ")
        ),
    ));

    // 9: every Snell computation above
    lines.push(line(
        certs.worst <= 1e-12,
        format!(
            "9 snell certificates: {} envelopes, worst residual {:.2e}",
            certs.count, certs.worst
        ),
    ));

    let mut failed = 0;
    for l in &lines {
        println!("[{}] {}", if l.ok { "PASS" } else { "FAIL" }, l.text);
        if !l.ok {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
