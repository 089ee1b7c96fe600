//! C ABI over `jordan-reduce`.
//!
//! Problems and solutions are opaque handles released with their `_free`
//! functions. Every fallible call returns a [`JrStatus`]; the message of the
//! last failure on the calling thread is available from [`jr_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use jordan_reduce::cli::check_oracle;
use jordan_reduce::probspec::{instantiate_with, load_problem, parse_problem, Instance, Overrides};
use jordan_reduce::reduction::residual_check;
use jordan_reduce::solvers::{self, Solution};
use jordan_reduce::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed problem file, schema violation or bad arguments.
    InputError = 3,
    /// The problem is well formed but not solvable as posed.
    SolveError = 4,
    /// Output buffer too small; the required size is reported.
    BufferTooSmall = 5,
    Panic = 6,
}

/// Opaque problem handle.
pub struct JrProblem {
    inst: Instance,
}

/// Opaque solution handle.
pub struct JrSolution {
    inst: Instance,
    sol: Solution,
    csv: CString,
}

/// Summary of the Jordan structure.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct JrStructure {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub nu: i64,
    /// 1 when every certificate holds.
    pub certified: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(e: &Error) -> JrStatus {
    set_error(e.to_string());
    if e.is_input_error() {
        JrStatus::InputError
    } else {
        JrStatus::SolveError
    }
}

fn guard(f: impl FnOnce() -> JrStatus) -> JrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            JrStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, JrStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(JrStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        JrStatus::InvalidUtf8
    })
}

fn store<T>(out: *mut *mut T, value: T) -> JrStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    JrStatus::Ok
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn jr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a JSON problem file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jr_problem_load(path: *const c_char, out: *mut *mut JrProblem) -> JrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return JrStatus::NullPointer;
        }
        let path = match text(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_problem(Path::new(path)).and_then(|pf| instantiate_with(&pf, &Overrides::default())) {
            Ok(inst) => store(out, JrProblem { inst }),
            Err(e) => fail(&e),
        }
    })
}

/// Parses a problem from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jr_problem_parse(json: *const c_char, out: *mut *mut JrProblem) -> JrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return JrStatus::NullPointer;
        }
        let json = match text(json) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match parse_problem(json).and_then(|pf| instantiate_with(&pf, &Overrides::default())) {
            Ok(inst) => store(out, JrProblem { inst }),
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `problem` must come from `jr_problem_load`/`jr_problem_parse` or be null.
#[no_mangle]
pub unsafe extern "C" fn jr_problem_free(problem: *mut JrProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Jordan structure of `(B, A_1)`.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jr_structure(problem: *const JrProblem, out: *mut JrStructure) -> JrStatus {
    guard(|| {
        if problem.is_null() || out.is_null() {
            set_error("null argument");
            return JrStatus::NullPointer;
        }
        let spec = &(*problem).inst.spec;
        match solvers::prepare(spec) {
            Ok(rp) => {
                let certified = rp.js.link_residual() <= 1e-8
                    && rp.js.biorthogonality_defect() <= 1e-8
                    && rp.ps.idempotence_defect() <= 1e-10
                    && rp.comm.all_certified();
                *out = JrStructure {
                    n: rp.js.n(),
                    m: rp.js.m(),
                    k: rp.js.k(),
                    nu: rp.js.nu(),
                    certified: i32::from(certified),
                };
                JrStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs the full pipeline.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jr_solve(problem: *const JrProblem, out: *mut *mut JrSolution) -> JrStatus {
    guard(|| {
        if problem.is_null() || out.is_null() {
            set_error("null argument");
            return JrStatus::NullPointer;
        }
        let inst = (*problem).inst.clone();
        match solvers::solve(&inst.spec) {
            Ok(sol) => {
                let csv = CString::new(sol.field.to_csv()).unwrap_or_default();
                store(out, JrSolution { inst, sol, csv })
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `solution` must come from `jr_solve` or be null.
#[no_mangle]
pub unsafe extern "C" fn jr_solution_free(solution: *mut JrSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Shape of the exported field: number of grid samples and components per sample.
///
/// # Safety
/// `solution` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn jr_solution_shape(
    solution: *const JrSolution,
    samples: *mut usize,
    components: *mut usize,
) -> JrStatus {
    if solution.is_null() || samples.is_null() || components.is_null() {
        set_error("null argument");
        return JrStatus::NullPointer;
    }
    let f = &(*solution).sol.field;
    *samples = f.values.len();
    *components = f.layout.dim();
    JrStatus::Ok
}

/// Copies the field values, sample-major, into `buf`. `len` is the buffer
/// length in doubles; `needed` receives the required length.
///
/// # Safety
/// `buf` must hold `len` doubles; `solution` and `needed` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jr_solution_values(
    solution: *const JrSolution,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> JrStatus {
    if solution.is_null() || needed.is_null() {
        set_error("null argument");
        return JrStatus::NullPointer;
    }
    let f = &(*solution).sol.field;
    let total = f.values.len() * f.layout.dim();
    *needed = total;
    if buf.is_null() || len < total {
        set_error(format!("buffer of {len} doubles, {total} needed"));
        return JrStatus::BufferTooSmall;
    }
    let out = std::slice::from_raw_parts_mut(buf, total);
    for (chunk, v) in out.chunks_mut(f.layout.dim().max(1)).zip(&f.values) {
        chunk.copy_from_slice(v.as_slice());
    }
    JrStatus::Ok
}

/// The solution as CSV. The string is owned by the handle.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn jr_solution_csv(solution: *const JrSolution) -> *const c_char {
    if solution.is_null() {
        set_error("null argument");
        return ptr::null();
    }
    (*solution).csv.as_ptr()
}

/// Residual and oracle check. `passed` is 1 when the deviation is within the
/// problem's verification tolerance.
///
/// # Safety
/// `solution` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn jr_solution_verify(
    solution: *const JrSolution,
    deviation: *mut f64,
    passed: *mut i32,
) -> JrStatus {
    guard(|| {
        if solution.is_null() || deviation.is_null() || passed.is_null() {
            set_error("null argument");
            return JrStatus::NullPointer;
        }
        let s = &*solution;
        let res = residual_check(&s.inst.spec, &s.sol.u, &s.sol.reduced.bc_plan)
            .and_then(|r| check_oracle(&s.inst, &s.sol, &r));
        match res {
            Ok(c) => {
                *deviation = c.deviation;
                *passed = i32::from(c.passed);
                JrStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
