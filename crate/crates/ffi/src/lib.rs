//! C interface to the exitcontract solver.
//!
//! Problems and solutions are opaque handles owned by the caller and
//! released with the matching `_free` function. Every function returns an
//! [`EcStatus`]; on failure a description is available from
//! [`ec_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use exitcontract::markovian::{brute_force_markovian, solve_markovian_mincut, DEFAULT_LABELING_CAP};
use exitcontract::model::{ProblemFile, DEFAULT_TREE_CAP};
use exitcontract::{solve_principal, validate_problem, Error, Method, ProblemSpec};
use serde_json::json;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcStatus {
    Ok = 0,
    Parse = 1,
    Validation = 2,
    CapExceeded = 3,
    NullPointer = 4,
    InvalidArgument = 5,
    Internal = 6,
}

/// `method` argument of [`ec_solve_principal`].
pub const EC_METHOD_DP: u32 = 0;
pub const EC_METHOD_MULTISTOP: u32 = 1;
pub const EC_METHOD_BRUTE: u32 = 2;

pub struct EcProblem {
    spec: ProblemSpec,
}

pub struct EcSolution {
    value: f64,
    report: serde_json::Value,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> EcStatus {
    match e.exit_code() {
        1 => EcStatus::Parse,
        3 => EcStatus::CapExceeded,
        _ => EcStatus::Validation,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guarded(f: impl FnOnce() -> Result<(), (EcStatus, String)>) -> EcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            EcStatus::Internal
        }
    }
}

fn fail(e: Error) -> (EcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (EcStatus, String) {
    (EcStatus::NullPointer, format!("{what} is null"))
}

fn validated(problem: &EcProblem) -> Result<(), (EcStatus, String)> {
    let report = validate_problem(&problem.spec);
    if report.is_empty() {
        Ok(())
    } else {
        Err(fail(Error::Invalid(report)))
    }
}

/// Parses a problem from NUL-terminated JSON. The problem is not validated;
/// see [`ec_problem_validate`].
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_problem_from_json(json: *const c_char, out: *mut *mut EcProblem) -> EcStatus {
    guarded(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (EcStatus::Parse, e.to_string()))?;
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| fail(e.into()))?;
        let spec = file.into_spec().map_err(fail)?;
        *out = Box::into_raw(Box::new(EcProblem { spec }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`ec_problem_from_json`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ec_problem_free(problem: *mut EcProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// `EcStatus::Ok` if the problem satisfies every model invariant; otherwise
/// `EcStatus::Validation` with the violations in the error message.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ec_problem_validate(problem: *const EcProblem) -> EcStatus {
    guarded(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        validated(p)
    })
}

/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_problem_agents(problem: *const EcProblem, out: *mut usize) -> EcStatus {
    guarded(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = p.spec.agents;
        Ok(())
    })
}

/// Solves the principal's problem with one of the `EC_METHOD_*` methods.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_solve_principal(
    problem: *const EcProblem,
    method: u32,
    out: *mut *mut EcSolution,
) -> EcStatus {
    guarded(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let method = match method {
            EC_METHOD_DP => Method::Dp,
            EC_METHOD_MULTISTOP => Method::Multistop,
            EC_METHOD_BRUTE => Method::Brute,
            other => return Err((EcStatus::InvalidArgument, format!("unknown method {other}"))),
        };
        validated(p)?;
        let tp = p.spec.tree_problem(DEFAULT_TREE_CAP).map_err(fail)?;
        let sol = solve_principal(&tp, method).map_err(fail)?;
        let exits: Vec<Vec<String>> = sol
            .exit_rules
            .iter()
            .map(|r| r.stop_nodes().map(|v| tp.tree.path_key(v)).collect())
            .collect();
        let report = json!({
            "method": method.to_string(),
            "value": sol.value,
            "levels": sol.policy.to_process().to_key_map(&tp.tree),
            "contract": sol.contract.to_key_map(&tp.tree),
            "exit_rules": exits,
        });
        *out = Box::into_raw(Box::new(EcSolution {
            value: sol.value,
            report,
        }));
        Ok(())
    })
}

/// Best state-dependent contract on a lattice problem; `oracle != 0` uses
/// exhaustive enumeration.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_solve_markovian(
    problem: *const EcProblem,
    oracle: i32,
    out: *mut *mut EcSolution,
) -> EcStatus {
    guarded(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        validated(p)?;
        let sol = if oracle != 0 {
            brute_force_markovian(&p.spec, DEFAULT_LABELING_CAP)
        } else {
            solve_markovian_mincut(&p.spec)
        }
        .map_err(fail)?;
        let report = json!({
            "method": if oracle != 0 { "brute" } else { "mincut" },
            "value": sol.value,
            "levels": sol.policy.levels,
        });
        *out = Box::into_raw(Box::new(EcSolution {
            value: sol.value,
            report,
        }));
        Ok(())
    })
}

/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_solution_value(solution: *const EcSolution, out: *mut f64) -> EcStatus {
    guarded(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.value;
        Ok(())
    })
}

/// The solution as a JSON document; release it with [`ec_string_free`].
///
/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_solution_to_json(solution: *const EcSolution, out: *mut *mut c_char) -> EcStatus {
    guarded(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CString::new(s.report.to_string()).map_err(|e| (EcStatus::Internal, e.to_string()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `solution` must come from a solve function and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ec_solution_free(solution: *mut EcSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call into the library.
#[no_mangle]
pub extern "C" fn ec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
