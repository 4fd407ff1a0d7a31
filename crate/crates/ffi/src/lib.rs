//! C interface to `pdk-core`.
//!
//! Every entry point returns a [`PdkStatus`]; on failure the message is kept
//! per thread and read back with [`pdk_last_error_message`]. Problems live
//! behind the opaque [`PdkProblem`] handle, created by one of the
//! `pdk_problem_*` constructors and released with [`pdk_problem_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pdk_core::config::ProblemConfig;
use pdk_core::sim::{simulate_value, SimConfig};
use pdk_core::verify::{default_grid, hjb_check};
use pdk_core::{b_star, JumpTerm, LevyModel, PdkError, ProblemSpec, ScaleFunctions, ValueFunction};

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidModel = 2,
    Domain = 3,
    Config = 4,
    Numerical = 5,
    Panic = 6,
}

/// Opaque problem handle.
pub struct PdkProblem {
    sf: ScaleFunctions,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PdkSolution {
    pub b_star: f64,
    pub b_bar: f64,
    pub phi_q: f64,
    pub phi_qr: f64,
    pub h_at_zero: f64,
    pub smooth_fit_residual: f64,
    /// 1 when `h(0+) > 0`, i.e. `b* > 0`.
    pub positive_criterion: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PdkEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ruin_fraction: f64,
    pub truncation_bound: f64,
    pub n_paths: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PdkCheck {
    pub pass: i32,
    pub max_generator_residual: f64,
    pub max_hjb_slack: f64,
    pub smoothness_jump: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let text = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn fail(err: PdkError) -> PdkStatus {
    let status = match &err {
        PdkError::InvalidModel(_) => PdkStatus::InvalidModel,
        PdkError::Domain(_) => PdkStatus::Domain,
        PdkError::Config(_) => PdkStatus::Config,
        PdkError::Numerical(_) => PdkStatus::Numerical,
    };
    set_error(err.to_string());
    status
}

fn null(what: &str) -> PdkStatus {
    set_error(format!("null pointer: {what}"));
    PdkStatus::NullPointer
}

/// Runs `body`, turning panics into [`PdkStatus::Panic`].
fn guard(body: impl FnOnce() -> PdkStatus) -> PdkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal error: {msg}"));
            PdkStatus::Panic
        }
    }
}

fn install(spec: Result<ProblemSpec, PdkError>, out: *mut *mut PdkProblem) -> PdkStatus {
    if out.is_null() {
        return null("out");
    }
    match spec.and_then(|s| ScaleFunctions::new(&s)) {
        Ok(sf) => {
            // SAFETY: `out` was checked non-null; the caller owns the slot.
            unsafe { *out = Box::into_raw(Box::new(PdkProblem { sf })) };
            PdkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, PdkStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        PdkStatus::Config
    })
}

/// Builds a problem from the drift `c`, Gaussian coefficient `sigma`,
/// `n_jumps` hyperexponential components and the rates `q`, `r`.
///
/// # Safety
/// `rates` and `lambdas` must point to `n_jumps` doubles each (or may be
/// null when `n_jumps` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdk_problem_new(
    c: f64,
    sigma: f64,
    rates: *const f64,
    lambdas: *const f64,
    n_jumps: usize,
    q: f64,
    r: f64,
    out: *mut *mut PdkProblem,
) -> PdkStatus {
    guard(|| {
        if n_jumps > 0 && (rates.is_null() || lambdas.is_null()) {
            return null("rates/lambdas");
        }
        let jumps = (0..n_jumps)
            .map(|i| JumpTerm::new(*rates.add(i), *lambdas.add(i)))
            .collect();
        let spec = LevyModel::new(c, sigma, jumps).and_then(|m| ProblemSpec::new(m, q, r));
        install(spec, out)
    })
}

/// Builds a problem from a JSON document
/// `{"sigma", "c", "jumps": [{"rate", "lambda"}], "q", "r"}`.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdk_problem_from_json(json: *const c_char, out: *mut *mut PdkProblem) -> PdkStatus {
    guard(|| match read_str(json, "json") {
        Ok(text) => install(ProblemConfig::from_json(text).and_then(|c| c.to_spec()), out),
        Err(status) => status,
    })
}

/// Builds one of the named presets (`case1`, `case2`, `case3`, `case1p`,
/// `case2p`, `case3p`).
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdk_problem_preset(name: *const c_char, out: *mut *mut PdkProblem) -> PdkStatus {
    guard(|| match read_str(name, "name") {
        Ok(name) => install(ProblemConfig::preset(name).and_then(|c| c.to_spec()), out),
        Err(status) => status,
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `problem` must come from a `pdk_problem_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn pdk_problem_free(problem: *mut PdkProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

unsafe fn with_problem(problem: *const PdkProblem, body: impl FnOnce(&PdkProblem) -> PdkStatus) -> PdkStatus {
    guard(|| match problem.as_ref() {
        Some(p) => body(p),
        None => null("problem"),
    })
}

/// Optimal barrier and the quantities around it.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdk_solve(problem: *const PdkProblem, out: *mut PdkSolution) -> PdkStatus {
    with_problem(problem, |p| {
        if out.is_null() {
            return null("out");
        }
        match b_star(&p.sf) {
            Ok(s) => {
                *out = PdkSolution {
                    b_star: s.b_star,
                    b_bar: s.b_bar,
                    phi_q: s.phi_q,
                    phi_qr: s.phi_qr,
                    h_at_zero: s.h_at_zero,
                    smooth_fit_residual: s.smooth_fit_residual,
                    positive_criterion: i32::from(s.positive_criterion),
                };
                PdkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// `v_b(x)` at the `n` points `xs`, written to `values`.
///
/// # Safety
/// `xs` and `values` must hold `n` doubles; `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdk_value(
    problem: *const PdkProblem,
    b: f64,
    xs: *const f64,
    n: usize,
    values: *mut f64,
) -> PdkStatus {
    with_problem(problem, |p| {
        if n > 0 && (xs.is_null() || values.is_null()) {
            return null("xs/values");
        }
        match ValueFunction::new(&p.sf, b) {
            Ok(v) => {
                for i in 0..n {
                    *values.add(i) = v.value(*xs.add(i));
                }
                PdkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// `W^{(q)}(x)` when `shifted` is 0, `W^{(q+r)}(x)` otherwise.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdk_scale_w(problem: *const PdkProblem, shifted: i32, x: f64, out: *mut f64) -> PdkStatus {
    with_problem(problem, |p| {
        if out.is_null() {
            return null("out");
        }
        let basis = if shifted == 0 { &p.sf.q_basis } else { &p.sf.qr_basis };
        *out = basis.w(x, 0);
        PdkStatus::Ok
    })
}

/// Verifies the barrier `b` (NaN selects `b*`) on the default grid.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdk_check(problem: *const PdkProblem, b: f64, out: *mut PdkCheck) -> PdkStatus {
    with_problem(problem, |p| {
        if out.is_null() {
            return null("out");
        }
        let report = b_star(&p.sf).and_then(|mut sol| {
            if !b.is_nan() {
                sol.b_star = b;
            }
            hjb_check(&p.sf, &sol, &default_grid(sol.b_bar))
        });
        match report {
            Ok(r) => {
                *out = PdkCheck {
                    pass: i32::from(r.pass),
                    max_generator_residual: r.max_generator_residual(),
                    max_hjb_slack: r.max_hjb_slack(),
                    smoothness_jump: r.smoothness_jump,
                };
                PdkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Monte Carlo estimate of `v_b(x0)` with `n_paths` paths.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdk_simulate(
    problem: *const PdkProblem,
    b: f64,
    x0: f64,
    n_paths: u64,
    seed: u64,
    dt: f64,
    out: *mut PdkEstimate,
) -> PdkStatus {
    with_problem(problem, |p| {
        if out.is_null() {
            return null("out");
        }
        let spec = &p.sf.spec;
        let mut cfg = SimConfig::new(spec, n_paths as usize, seed);
        cfg.dt = dt;
        match simulate_value(spec, b, x0, &cfg) {
            Ok(e) => {
                *out = PdkEstimate {
                    mean: e.mean,
                    std_error: e.std_error,
                    ruin_fraction: e.ruin_fraction,
                    truncation_bound: e.truncation_bound,
                    n_paths: e.n_paths as u64,
                };
                PdkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pdk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pdk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
