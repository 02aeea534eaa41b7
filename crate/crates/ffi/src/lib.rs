//! C interface to the simulator.
//!
//! Engines are opaque handles created by [`nbbm_engine_new`] and released
//! with [`nbbm_engine_free`]. Every fallible call returns an
//! [`NbbmStatus`]; the message of the last failure on the calling thread is
//! available through [`nbbm_last_error_message`]. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use nbbm::engine::{build_engine, AnyEngine, Engine, EngineKind};
use nbbm::experiments::{execute, recombine_points, write_outputs, ScenarioConfig};
use nbbm::model::{make_initial, Configuration, InitSpec, Params, ScoreFunction};
use nbbm::{Error, RngStream};

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NbbmStatus {
    Ok = 0,
    Argument = 1,
    Data = 2,
    Query = 3,
    Capacity = 4,
    Consistency = 5,
    Config = 6,
    PartialFailure = 7,
    Io = 8,
    NullPointer = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NbbmScore {
    /// `<lambda, x>`.
    Linear = 0,
    /// `|x|`.
    Euclidean = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NbbmEngineKind {
    Auto = 0,
    Dense = 1,
    Lazy = 2,
}

/// Opaque engine handle.
pub struct NbbmEngine {
    engine: AnyEngine,
    snapshot: Configuration,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> NbbmStatus {
    match e {
        Error::Argument(_) => NbbmStatus::Argument,
        Error::Data(_) => NbbmStatus::Data,
        Error::Query(_) => NbbmStatus::Query,
        Error::Capacity { .. } => NbbmStatus::Capacity,
        Error::Consistency(_) => NbbmStatus::Consistency,
        Error::Config(_) => NbbmStatus::Config,
        Error::PartialFailure { .. } => NbbmStatus::PartialFailure,
        Error::Io { .. } => NbbmStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NbbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NbbmStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is a null pointer"));
            NbbmStatus::NullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            NbbmStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(())
    }
}

unsafe fn handle<'a>(h: *mut NbbmEngine) -> Result<&'a mut NbbmEngine, Fail> {
    non_null(h, "engine")?;
    Ok(&mut *h)
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::Argument(format!("{what} is not valid UTF-8"))))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Fail::Lib(Error::Argument(format!(
            "{what} buffer holds {got} values, expected {want}"
        ))));
    }
    Ok(())
}

/// Creates an engine with `n` particles in dimension `d`.
///
/// `direction` (length `d`) sets the linear score direction and is
/// normalised; null selects the first axis. It is ignored for the
/// Euclidean score. `positions` (length `n * d`, row-major) gives the
/// initial configuration; null starts every particle at the origin.
///
/// # Safety
/// Non-null pointers must be valid for the stated lengths; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nbbm_engine_new(
    n: usize,
    d: usize,
    score: NbbmScore,
    direction: *const f64,
    positions: *const f64,
    branch_rate: f64,
    seed: u64,
    kind: NbbmEngineKind,
    out: *mut *mut NbbmEngine,
) -> NbbmStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        if d == 0 {
            return Err(Error::Argument("d must be at least 1".into()).into());
        }
        let sf = match score {
            NbbmScore::Euclidean => ScoreFunction::Euclidean,
            NbbmScore::Linear if direction.is_null() => {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                ScoreFunction::Linear(e)
            }
            NbbmScore::Linear => ScoreFunction::linear_normalized(slice::from_raw_parts(direction, d))?,
        };
        let mut params = Params::new(n, d, sf)?;
        params.branch_rate = branch_rate;
        params.seed = seed;
        params.validate()?;
        let init = if positions.is_null() {
            make_initial(&InitSpec::AllAtOrigin, &params, &mut RngStream::new(seed, 1))?
        } else {
            let flat = slice::from_raw_parts(positions, n * d);
            let pts: Vec<Vec<f64>> = flat.chunks_exact(d).map(<[f64]>::to_vec).collect();
            make_initial(&InitSpec::ExplicitList { positions: pts }, &params, &mut RngStream::new(seed, 1))?
        };
        let kind = match kind {
            NbbmEngineKind::Auto => EngineKind::Auto,
            NbbmEngineKind::Dense => EngineKind::Dense,
            NbbmEngineKind::Lazy => EngineKind::Lazy,
        };
        let engine = build_engine(&params, &init, RngStream::new(seed, 0), kind)?;
        *out = Box::into_raw(Box::new(NbbmEngine { engine, snapshot: init }));
        Ok(())
    })
}

/// Releases an engine; null is ignored.
///
/// # Safety
/// `h` must come from [`nbbm_engine_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nbbm_engine_free(h: *mut NbbmEngine) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Processes every event up to `t` and stores the configuration at `t`.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nbbm_engine_run_until(h: *mut NbbmEngine, t: f64) -> NbbmStatus {
    guard(|| {
        let e = handle(h)?;
        e.snapshot = e.engine.run_until(t)?;
        Ok(())
    })
}

/// Current time and number of processed events.
///
/// # Safety
/// `h` must be a live handle; `time` and `events` writable or null.
#[no_mangle]
pub unsafe extern "C" fn nbbm_engine_clock(h: *mut NbbmEngine, time: *mut f64, events: *mut u64) -> NbbmStatus {
    guard(|| {
        let e = handle(h)?;
        if !time.is_null() {
            *time = e.engine.time();
        }
        if !events.is_null() {
            *events = e.engine.events();
        }
        Ok(())
    })
}

/// Scores of the stored configuration, fittest first; `len` must be `n`.
///
/// # Safety
/// `h` must be a live handle and `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn nbbm_engine_scores(h: *mut NbbmEngine, out: *mut f64, len: usize) -> NbbmStatus {
    guard(|| {
        let e = handle(h)?;
        non_null(out, "out")?;
        let s = e.snapshot.ranked_scores(&e.engine.params().score);
        check_len(len, s.len(), "score")?;
        slice::from_raw_parts_mut(out, len).copy_from_slice(&s);
        Ok(())
    })
}

/// Positions of the stored configuration, fittest first, row-major;
/// `len` must be `n * d`.
///
/// # Safety
/// `h` must be a live handle and `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn nbbm_engine_positions(h: *mut NbbmEngine, out: *mut f64, len: usize) -> NbbmStatus {
    guard(|| {
        let e = handle(h)?;
        non_null(out, "out")?;
        let c = &e.snapshot;
        check_len(len, c.len() * c.d, "position")?;
        let dst = slice::from_raw_parts_mut(out, len);
        for (rank, &i) in c.order().iter().enumerate() {
            dst[rank * c.d..(rank + 1) * c.d].copy_from_slice(c.position(i));
        }
        Ok(())
    })
}

/// Age at the current time of the most recent common ancestor of the
/// living particles; `NBBM_STATUS_QUERY` while they descend from distinct
/// initial particles.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nbbm_engine_mrca_age(h: *mut NbbmEngine, out: *mut f64) -> NbbmStatus {
    guard(|| {
        let e = handle(h)?;
        non_null(out, "out")?;
        let t = e.engine.time();
        match e.engine.forest().mrca_age(t) {
            Some(a) => {
                *out = a;
                Ok(())
            }
            None => Err(Error::Query("the living particles have no common ancestor yet".into()).into()),
        }
    })
}

/// Runs the scenario described by a JSON config and writes its outputs
/// into `out_dir`. Outputs are written even when some replicas fail, in
/// which case `NBBM_STATUS_PARTIAL_FAILURE` is returned.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn nbbm_run_scenario(config_json: *const c_char, out_dir: *const c_char) -> NbbmStatus {
    guard(|| {
        let cfg = ScenarioConfig::from_json_str(c_str(config_json, "config_json")?)?;
        let dir = c_str(out_dir, "out_dir")?;
        let run = execute(&cfg)?;
        write_outputs(&run, &cfg, Path::new(dir))?;
        run.check()?;
        Ok(())
    })
}

/// Child of `a` and `b` (length `d` each) split after coordinate `k`,
/// written to `out` (length `d`).
///
/// # Safety
/// All pointers must be valid for `d` values.
#[no_mangle]
pub unsafe extern "C" fn nbbm_recombine(
    a: *const f64,
    b: *const f64,
    d: usize,
    k: usize,
    seed: u64,
    out: *mut f64,
) -> NbbmStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        let (pa, pb) = (slice::from_raw_parts(a, d), slice::from_raw_parts(b, d));
        let child = recombine_points(pa, pb, k, &mut RngStream::new(seed, 0))?;
        slice::from_raw_parts_mut(out, d).copy_from_slice(&child);
        Ok(())
    })
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `cap - 1` bytes) and returns its full length
/// in bytes. With a null `buf` only the length is returned.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn nbbm_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nbbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
