//! Solver for the discrete-time principal/multi-agent exit-contract problem.
//!
//! Agents with ordered reward rates `f_1 < ... < f_n` each pick an exit time
//! against a contract `Y`; the principal chooses `Y` to maximize the reward
//! collected from agents still present minus the exit payments. Contracts are
//! handled through their level-process representation, which turns the
//! principal's problem into a dynamic program over integer levels.

// `!(a <= b)` checks are kept so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod convergence;
pub mod error;
pub mod markovian;
pub mod maxflow;
pub mod model;
pub mod principal;
pub mod pwl;
pub mod random;
pub mod representation;
pub mod selftest;
pub mod snell;

pub use error::{Error, Result};
pub use model::{
    compile_lattice_to_tree, load_problem, parse_problem, validate_problem, AdaptedProcess, AtomicMeasure,
    MarkovLattice, Model, NodeId, ProblemSpec, ScenarioTree, TimeGrid, TreeProblem, ValidationReport,
};
pub use principal::{
    brute_force_principal, principal_objective, solve_principal, solve_principal_dp, solve_principal_multistop,
    verify_incentive_compatibility, LevelPolicy, Method, PrincipalSolution,
};
pub use representation::{build_contract_from_levels, represent_contract, verify_representation};
pub use snell::{agent_best_response, ordered_multistop, snell_envelope, SnellResult, StoppingRule};
