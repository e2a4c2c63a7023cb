//! C interface to the rights market solver.
//!
//! Scenarios and solutions cross the boundary as opaque handles; everything
//! else is JSON text. Every fallible call returns an [`RmStatus`] and leaves a
//! message for [`rm_last_error_message`]. Strings handed out by this library
//! must be released with [`rm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rights_market::auction::{replay, Trace};
use rights_market::crisis::{check_crisis, run_crisis};
use rights_market::report::{to_json, CrisisRunReport, MarketReport};
use rights_market::scenario::{generate_scenario, GenParams, Scenario, ScenarioKind};
use rights_market::{solve, Error, MarketSpec, SolveOutput, TraderId};

/// Result of a call. Values match the exit codes of the command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    Io = 1,
    /// Null pointer, bad UTF-8 or an index out of range.
    BadArgument = 2,
    Parse = 3,
    Invalid = 4,
    Solver = 5,
    Replay = 7,
    /// A bug inside the library; the call had no effect.
    Panic = 9,
}

/// A parsed and validated scenario.
pub struct RmScenario {
    inner: Scenario,
}

/// A solved single-round market.
pub struct RmSolution {
    market: MarketSpec,
    mechanism: String,
    seed: u64,
    out: SolveOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(RmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_for(&e), e.to_string())
    }
}

fn status_for(e: &Error) -> RmStatus {
    match e {
        Error::Scenario { .. }
        | Error::Rational(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::UnknownMechanism(_) => RmStatus::Parse,
        Error::NonTermination { .. } => RmStatus::Solver,
        Error::CrisisRound { source, .. } => status_for(source),
        Error::Replay { .. } => RmStatus::Replay,
        Error::Io(_) => RmStatus::Io,
        _ => RmStatus::Invalid,
    }
}

fn bad(msg: &str) -> Fail {
    Fail(RmStatus::BadArgument, msg.to_string())
}

/// Runs `f`, records its error and converts panics into [`RmStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RmStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(bad(&format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| bad(&format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| bad("output contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(bad("output pointer is null"));
    }
    Ok(())
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Fail> {
    h.as_ref().ok_or_else(|| bad(&format!("{what} is null")))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_scenario_from_json(
    json: *const c_char,
    out: *mut *mut RmScenario,
) -> RmStatus {
    guard(|| {
        check_out(out)?;
        let text = read_str(json, "json")?;
        let inner = Scenario::from_json(text, Path::new("<memory>"))?;
        inner.validate()?;
        write_out(out, RmScenario { inner });
        Ok(())
    })
}

/// Generates a random valid market scenario with default epsilon, mode and
/// mechanism.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_scenario_generate(
    seed: u64,
    buyers: usize,
    sellers: usize,
    vmax: u64,
    out: *mut *mut RmScenario,
) -> RmStatus {
    guard(|| {
        check_out(out)?;
        let inner = generate_scenario(seed, &GenParams::new(buyers, sellers, vmax))?;
        write_out(out, RmScenario { inner });
        Ok(())
    })
}

/// Scenario as pretty JSON.
///
/// # Safety
/// `sc` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_scenario_to_json(
    sc: *const RmScenario,
    out: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        check_out(out)?;
        let sc = handle(sc, "scenario")?;
        write_string(out, sc.inner.to_json_pretty())
    })
}

/// # Safety
/// `sc` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_scenario_free(sc: *mut RmScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Solves a market scenario.
///
/// # Safety
/// `sc` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_solve(sc: *const RmScenario, out: *mut *mut RmSolution) -> RmStatus {
    guard(|| {
        check_out(out)?;
        let sc = &handle(sc, "scenario")?.inner;
        if sc.kind != ScenarioKind::Market {
            return Err(Fail(
                RmStatus::Invalid,
                "crisis scenario; use rm_crisis_run".into(),
            ));
        }
        let market = sc.market_spec()?;
        let solved = solve(&market)?;
        write_out(
            out,
            RmSolution {
                market,
                mechanism: sc.mechanism.clone(),
                seed: sc.seed,
                out: solved,
            },
        );
        Ok(())
    })
}

/// Number of Couples held by buyer `buyer` (0-based).
///
/// # Safety
/// `sol` must be a live solution handle; `couples` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_solution_couples(
    sol: *const RmSolution,
    buyer: usize,
    couples: *mut u64,
) -> RmStatus {
    guard(|| {
        if couples.is_null() {
            return Err(bad("output pointer is null"));
        }
        let sol = handle(sol, "solution")?;
        if buyer >= sol.market.buyers.len() {
            return Err(bad(&format!("no buyer {buyer}")));
        }
        let id = TraderId::buyer(buyer);
        *couples = sol
            .out
            .solution
            .baskets
            .get(&id)
            .map_or(0, |b| b.good_count);
        Ok(())
    })
}

/// Solution as JSON: terminal prices and every basket.
///
/// # Safety
/// `sol` must be a live solution handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_solution_json(
    sol: *const RmSolution,
    out: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        check_out(out)?;
        let sol = handle(sol, "solution")?;
        write_string(out, to_json(&sol.out.solution)?)
    })
}

/// Full report: solution, solver counters, verification and frustration.
///
/// # Safety
/// `sol` must be a live solution handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_solution_report_json(
    sol: *const RmSolution,
    out: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        check_out(out)?;
        let sol = handle(sol, "solution")?;
        let report = MarketReport::new(&sol.market, &sol.mechanism, sol.seed, &sol.out)?;
        write_string(out, to_json(&report)?)
    })
}

/// Auction trace, one JSON event per line.
///
/// # Safety
/// `sol` must be a live solution handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_solution_trace_jsonl(
    sol: *const RmSolution,
    out: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        check_out(out)?;
        let sol = handle(sol, "solution")?;
        write_string(out, sol.out.trace.to_jsonl())
    })
}

/// # Safety
/// `sol` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_solution_free(sol: *mut RmSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Runs a crisis scenario and returns the per-round records and checks as JSON.
///
/// # Safety
/// `sc` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_crisis_run(sc: *const RmScenario, out: *mut *mut c_char) -> RmStatus {
    guard(|| {
        check_out(out)?;
        let sc = &handle(sc, "scenario")?.inner;
        let spec = sc.crisis_spec()?;
        let rounds = run_crisis(&spec)?;
        let report = CrisisRunReport {
            epsilon: spec.template.epsilon.clone(),
            mode: spec.mode,
            mechanism: sc.mechanism.clone(),
            seed: sc.seed,
            check: check_crisis(&rounds),
            rounds,
        };
        write_string(out, to_json(&report)?)
    })
}

/// Rebuilds a solution from trace text and returns it as JSON.
///
/// # Safety
/// `trace_jsonl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_replay(trace_jsonl: *const c_char, out: *mut *mut c_char) -> RmStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let text = read_str(trace_jsonl, "trace")?;
        let trace = Trace::read_jsonl(Cursor::new(text))?;
        let solution = replay(&trace)?;
        write_string(out, to_json(&solution)?)
    })
}
