//! Command-line front end. Every command reads a problem file and prints a
//! report as text, JSON (`--json`) or CSV (`--csv`, tables only).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::convergence::{run_convergence, PlanFile, RefinementPlan};
use crate::error::{Error, Result};
use crate::markovian::{
    brute_force_markovian, build_markovian_contract, solve_lattice_dp, solve_markovian_mincut, DEFAULT_LABELING_CAP,
};
use crate::model::{parse_problem, AdaptedProcess, ProblemSpec, ScenarioTree, TreeProblem, DEFAULT_TREE_CAP};
use crate::principal::{
    brute_force_principal, solve_principal, verify_incentive_compatibility, Method, BRUTE_FORCE_MAX_AGENTS,
    BRUTE_FORCE_NODE_CAP, VALUE_TOL,
};
use crate::representation::{build_contract_from_levels, represent_contract, verify_representation};
use crate::selftest::run_selftest;
use crate::snell::{agent_best_response, StoppingRule};

#[derive(Parser, Debug)]
#[command(name = "exitcontract", version, about = "Principal/multi-agent exit contract solver")]
struct Cli {
    /// Print the full report as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Dp,
    Multistop,
    Brute,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dp => Method::Dp,
            MethodArg::Multistop => Method::Multistop,
            MethodArg::Brute => Method::Brute,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a problem file against the model invariants.
    Validate { file: PathBuf },
    /// Agent's optimal exit under a contract.
    Agent {
        file: PathBuf,
        /// Agent index, starting at 1.
        #[arg(long)]
        agent: usize,
        /// JSON map from node path to contract value.
        #[arg(long)]
        contract: PathBuf,
    },
    /// Level process of a contract.
    Represent {
        file: PathBuf,
        #[arg(long)]
        contract: PathBuf,
    },
    /// Contract generated by a level process.
    Contract {
        file: PathBuf,
        /// JSON map from node path to level.
        #[arg(long)]
        levels: PathBuf,
    },
    /// Principal's optimal contract.
    Principal {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "dp")]
        method: MethodArg,
        /// Check incentive compatibility and agreement between solvers.
        #[arg(long)]
        verify: bool,
    },
    /// Best contract depending on the current lattice state only.
    Markovian {
        file: PathBuf,
        /// Use exhaustive enumeration instead of the min-cut solver.
        #[arg(long)]
        oracle: bool,
    },
    /// Values on coarser grids against the reference problem.
    Converge {
        file: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Print only the error table as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Randomized checks of the solver identities.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
}

/// Report shared by all commands. Apart from `wall_clock_seconds`, reruns
/// on the same input are byte-identical.
#[derive(Debug, Default, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub values: BTreeMap<String, f64>,
    pub processes: BTreeMap<String, BTreeMap<String, f64>>,
    pub exit_rules: BTreeMap<String, Vec<String>>,
    pub residuals: BTreeMap<String, f64>,
    pub details: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

struct Outcome {
    report: RunReport,
    code: i32,
    /// Replaces the text rendering when set.
    csv: Option<String>,
}

impl Outcome {
    fn ok(report: RunReport) -> Self {
        Outcome {
            report,
            code: 0,
            csv: None,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_problem(path: &Path, report: &mut RunReport) -> Result<ProblemSpec> {
    let bytes = std::fs::read(path)?;
    report.input_digest = Some(format!("sha256:{}", sha256_hex(&bytes)));
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    parse_problem(&text)
}

fn read_key_map(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn rule_keys(tree: &ScenarioTree, rule: &StoppingRule) -> Vec<String> {
    rule.stop_nodes().map(|v| tree.path_key(v)).collect()
}

fn add_rules(report: &mut RunReport, tree: &ScenarioTree, rules: &[StoppingRule]) {
    for (i, r) in rules.iter().enumerate() {
        report.exit_rules.insert(format!("agent {}", i + 1), rule_keys(tree, r));
    }
}

fn tree_of(spec: &ProblemSpec) -> Result<TreeProblem> {
    spec.tree_problem(DEFAULT_TREE_CAP)
}

fn cmd_validate(file: &Path, report: &mut RunReport) -> Result<i32> {
    match read_problem(file, report) {
        Ok(_) => {
            report.details.insert("valid".into(), json!(true));
            Ok(0)
        }
        Err(Error::Invalid(v)) => {
            let list: Vec<Value> = v
                .violations
                .iter()
                .map(|x| json!({"location": x.location, "message": x.message}))
                .collect();
            report.details.insert("valid".into(), json!(false));
            report.details.insert("violations".into(), Value::Array(list));
            Ok(2)
        }
        Err(e) => Err(e),
    }
}

fn cmd_agent(file: &Path, agent: usize, contract: &Path, report: &mut RunReport) -> Result<i32> {
    let problem = tree_of(&read_problem(file, report)?)?;
    let tree = &problem.tree;
    let y = AdaptedProcess::from_key_map(tree, &read_key_map(contract)?)?;
    let (res, value) = agent_best_response(&problem, agent, &y)?;
    report.values.insert("agent_value".into(), value);
    report.processes.insert("S".into(), res.envelope.to_key_map(tree));
    report.processes.insert("G".into(), res.gains.to_key_map(tree));
    report
        .exit_rules
        .insert(format!("agent {agent}"), rule_keys(tree, &res.smallest_stop));
    let cert = res.certificate(tree);
    report.residuals.insert("supermartingale".into(), cert.supermartingale);
    report.residuals.insert("dominance".into(), cert.dominance);
    report.residuals.insert("martingale".into(), cert.martingale);
    report.residuals.insert("stop_gap".into(), cert.stop_gap);
    Ok(0)
}

fn cmd_represent(file: &Path, contract: &Path, report: &mut RunReport) -> Result<i32> {
    let problem = tree_of(&read_problem(file, report)?)?;
    let tree = &problem.tree;
    let y = AdaptedProcess::from_key_map(tree, &read_key_map(contract)?)?;
    let levels = represent_contract(&problem, &y)?;
    report.processes.insert("L".into(), levels.to_key_map(tree));
    report
        .residuals
        .insert("representation".into(), verify_representation(&problem, &y, &levels));
    Ok(0)
}

fn cmd_contract(file: &Path, levels: &Path, report: &mut RunReport) -> Result<i32> {
    let problem = tree_of(&read_problem(file, report)?)?;
    let tree = &problem.tree;
    let levels = AdaptedProcess::from_key_map(tree, &read_key_map(levels)?)?;
    let y = build_contract_from_levels(&problem, &levels)?;
    report.processes.insert("Y".into(), y.to_key_map(tree));
    report.values.insert("Y0".into(), y[tree.root()]);
    Ok(0)
}

fn cmd_principal(file: &Path, method: Method, verify: bool, report: &mut RunReport) -> Result<i32> {
    let problem = tree_of(&read_problem(file, report)?)?;
    let tree = &problem.tree;
    let sol = solve_principal(&problem, method)?;
    report.method = Some(method.to_string());
    report.values.insert("principal_value".into(), sol.value);
    report.values.insert("Y0".into(), sol.contract[tree.root()]);
    report
        .processes
        .insert("L".into(), sol.policy.to_process().to_key_map(tree));
    report.processes.insert("Y".into(), sol.contract.to_key_map(tree));
    add_rules(report, tree, &sol.exit_rules);
    if let Some(k) = sol.labelings {
        report.details.insert("labelings".into(), json!(k));
    }
    if !verify {
        return Ok(0);
    }
    let ic = verify_incentive_compatibility(&problem, &sol)?;
    report.values.insert("realized_value".into(), ic.realized_value);
    report.residuals.insert("incentive_gap".into(), ic.value_gap);
    let exits_match = ic.agents.iter().all(|a| a.exit_matches);
    report
        .details
        .insert("exit_rules_reproduced".into(), json!(exits_match));

    let mut values = vec![(method, sol.value)];
    for other in [Method::Dp, Method::Multistop] {
        if other != method {
            values.push((other, solve_principal(&problem, other)?.value));
        }
    }
    let brute_ok = tree.len() <= BRUTE_FORCE_NODE_CAP && problem.agents <= BRUTE_FORCE_MAX_AGENTS;
    if method != Method::Brute && brute_ok {
        values.push((
            Method::Brute,
            brute_force_principal(&problem, BRUTE_FORCE_NODE_CAP)?.value,
        ));
    }
    let spread = values.iter().map(|v| (v.1 - sol.value).abs()).fold(0.0, f64::max);
    report.residuals.insert("method_spread".into(), spread);
    let checked: Vec<String> = values.iter().map(|v| v.0.to_string()).collect();
    report.details.insert("methods_compared".into(), json!(checked));
    if ic.passed() && spread <= VALUE_TOL {
        Ok(0)
    } else {
        report.error = Some("verification failed".into());
        Ok(2)
    }
}

fn cmd_markovian(file: &Path, oracle: bool, report: &mut RunReport) -> Result<i32> {
    let spec = read_problem(file, report)?;
    let sol = if oracle {
        brute_force_markovian(&spec, DEFAULT_LABELING_CAP)?
    } else {
        solve_markovian_mincut(&spec)?
    };
    report.method = Some(if oracle { "brute" } else { "mincut" }.into());
    let unrestricted = solve_lattice_dp(&spec)?;
    report.values.insert("markovian_value".into(), sol.value);
    report.values.insert("unrestricted_value".into(), unrestricted);
    report
        .residuals
        .insert("restriction_gap".into(), unrestricted - sol.value);
    let contract = build_markovian_contract(&spec, &sol.policy)?;
    report.details.insert("levels".into(), json!(sol.policy.levels));
    report.details.insert("contract".into(), json!(contract));
    if let Some(k) = sol.labelings {
        report.details.insert("labelings".into(), json!(k));
    }
    Ok(0)
}

fn cmd_converge(file: &Path, plan: &Path, csv: bool, report: &mut RunReport) -> Result<Outcome> {
    let spec = read_problem(file, report)?;
    let plan_file: PlanFile = serde_json::from_str(&std::fs::read_to_string(plan)?)?;
    let plan = RefinementPlan::from_file(&spec.grid, &plan_file)?;
    let table = run_convergence(&spec, &plan, DEFAULT_TREE_CAP)?;
    report.values.insert("reference_value".into(), table.reference_value);
    report.details.insert("table".into(), json!(table.rows));
    report.details.insert("non_monotone".into(), json!(table.any_flagged()));
    let mut text = table.to_csv();
    if !csv {
        text = format!("reference value: {}\n{text}", table.reference_value);
    }
    Ok(Outcome {
        report: std::mem::take(report),
        code: 0,
        csv: Some(text),
    })
}

fn cmd_selftest(seed: u64, cases: usize, report: &mut RunReport) -> Result<Outcome> {
    let suites = run_selftest(seed, cases)?;
    let passed = suites.iter().all(|s| s.passed());
    let mut text = String::new();
    for s in &suites {
        let verdict = if s.passed() { "PASS" } else { "FAIL" };
        text.push_str(&format!(
            "{verdict} {} ({} cases, {} failures, worst residual {:e})\n",
            s.name, s.cases, s.failures, s.worst
        ));
    }
    report.details.insert("suites".into(), json!(suites));
    Ok(Outcome {
        report: std::mem::take(report),
        code: if passed { 0 } else { 2 },
        csv: Some(text),
    })
}

fn dispatch(cli: &Cli, report: &mut RunReport) -> Result<Outcome> {
    let code = match &cli.command {
        Command::Validate { file } => cmd_validate(file, report)?,
        Command::Agent { file, agent, contract } => cmd_agent(file, *agent, contract, report)?,
        Command::Represent { file, contract } => cmd_represent(file, contract, report)?,
        Command::Contract { file, levels } => cmd_contract(file, levels, report)?,
        Command::Principal { file, method, verify } => cmd_principal(file, (*method).into(), *verify, report)?,
        Command::Markovian { file, oracle } => cmd_markovian(file, *oracle, report)?,
        Command::Converge { file, plan, csv } => return cmd_converge(file, plan, *csv, report),
        Command::Selftest { seed, cases } => return cmd_selftest(*seed, *cases, report),
    };
    let mut out = Outcome::ok(std::mem::take(report));
    out.code = code;
    Ok(out)
}

fn shown_key(key: &str) -> &str {
    if key.is_empty() {
        "(root)"
    } else {
        key
    }
}

fn render_text(report: &RunReport) -> String {
    let mut s = String::new();
    if let Some(m) = &report.method {
        s.push_str(&format!("method: {m}\n"));
    }
    for (k, v) in &report.values {
        s.push_str(&format!("{k}: {v}\n"));
    }
    for (k, v) in &report.residuals {
        s.push_str(&format!("residual {k}: {v:e}\n"));
    }
    for (agent, keys) in &report.exit_rules {
        let keys: Vec<&str> = keys.iter().map(|k| shown_key(k)).collect();
        s.push_str(&format!("exit rule {agent}: {}\n", keys.join(", ")));
    }
    for (name, map) in &report.processes {
        s.push_str(&format!("{name}:\n"));
        for (k, v) in map {
            s.push_str(&format!("  {} = {v}\n", shown_key(k)));
        }
    }
    if let Some(Value::Array(list)) = report.details.get("violations") {
        for v in list {
            s.push_str(&format!(
                "{}: {}\n",
                v["location"].as_str().unwrap_or(""),
                v["message"].as_str().unwrap_or("")
            ));
        }
    }
    for (k, v) in &report.details {
        if k != "violations" {
            s.push_str(&format!("{k}: {v}\n"));
        }
    }
    s
}

/// Runs the command line `args` (including the program name), writing the
/// report to `out` and diagnostics to standard error. Returns the process
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, out, &mut std::io::stderr())
}

/// [`run`] with an explicit diagnostics stream.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{e}");
            return 1;
        }
    };
    let start = Instant::now();
    let mut report = RunReport {
        command: args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        ..RunReport::default()
    };
    let mut outcome = match dispatch(&cli, &mut report) {
        Ok(o) => o,
        Err(e) => {
            report.error = Some(e.to_string());
            Outcome {
                report,
                code: e.exit_code(),
                csv: None,
            }
        }
    };
    outcome.report.wall_clock_seconds = start.elapsed().as_secs_f64();
    let text = if cli.json {
        serde_json::to_string_pretty(&outcome.report).unwrap_or_default() + "\n"
    } else if let (Some(csv), None) = (&outcome.csv, &outcome.report.error) {
        csv.clone()
    } else {
        render_text(&outcome.report)
    };
    if outcome.code != 0 {
        if let Some(e) = &outcome.report.error {
            let _ = writeln!(err, "error: {e}");
        }
    }
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
    outcome.code
}
