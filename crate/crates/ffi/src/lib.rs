//! C ABI over `packing_sim`.
//!
//! Conventions:
//! - every fallible call returns a [`PsStatus`]; on failure the message is
//!   available from [`ps_last_error`] on the same thread;
//! - handles are opaque and released with their `_free` function;
//! - strings returned through `char **` are owned by the caller and
//!   released with [`ps_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use packing_sim::harness::{run_experiment, Experiment, ExperimentSpec};
use packing_sim::optimizer::{check_nsi, objective_f, objective_phi, solve_phistar, solve_xstar};
use packing_sim::simulator::{run_with_reference, Reference, SimConfig, Snapshot, Summary};
use packing_sim::{ConfigSpace, Demand, Error, SpaceSpec};

const SOLVER_TOL: f64 = 1e-10;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    /// Bad space, demand, or simulation parameters.
    InvalidInput = 4,
    Infeasible = 5,
    /// Solver non-convergence or fluid divergence.
    NotConverged = 6,
    /// Sampling window too short for the requested batches.
    ShortWindow = 7,
    Io = 8,
    /// Output buffer too small; the error message gives the required length.
    BufferTooSmall = 9,
    IndexOutOfRange = 10,
    Panic = 11,
}

/// Configuration space handle.
pub struct PsSpace {
    space: Arc<ConfigSpace>,
}

/// Simulation handle: a validated config plus the outcome of the last run.
pub struct PsSimulation {
    config: SimConfig,
    snapshots: Vec<Snapshot>,
    summary: Option<Summary>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(PsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Infeasible(_) => PsStatus::Infeasible,
            Error::NonConvergence { .. } | Error::Divergence { .. } => PsStatus::NotConverged,
            Error::ShortWindow { .. } => PsStatus::ShortWindow,
            Error::Io(_) | Error::Csv(_) => PsStatus::Io,
            Error::Json(_) => PsStatus::InvalidJson,
            _ => PsStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(PsStatus::InvalidJson, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting failures and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            PsStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PsStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    let c = CString::new(text).map_err(|e| Failure(PsStatus::InvalidUtf8, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a configuration space from JSON: `{"B": [...], "b": [[...]]}`
/// and/or `{"configs": [[...]]}`.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_space_from_json(json: *const c_char, out: *mut *mut PsSpace) -> PsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: SpaceSpec = serde_json::from_str(read_str(json, "json")?)?;
        let space = Arc::new(spec.build()?);
        *out = Box::into_raw(Box::new(PsSpace { space }));
        Ok(())
    })
}

/// # Safety
/// `space` must come from [`ps_space_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ps_space_free(space: *mut PsSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of nonempty configurations.
///
/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_space_len(space: *const PsSpace, out: *mut usize) -> PsStatus {
    guard(|| {
        let space = space.as_ref().ok_or_else(|| null("space"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = space.space.len();
        Ok(())
    })
}

/// Number of customer types.
///
/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_space_num_types(space: *const PsSpace, out: *mut usize) -> PsStatus {
    guard(|| {
        let space = space.as_ref().ok_or_else(|| null("space"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = space.space.num_types();
        Ok(())
    })
}

/// Copies configuration `index` into `out` (`cap` entries available).
///
/// # Safety
/// `space` must be a live handle; `out` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn ps_space_config(
    space: *const PsSpace,
    index: usize,
    out: *mut u32,
    cap: usize,
) -> PsStatus {
    guard(|| {
        let space = space.as_ref().ok_or_else(|| null("space"))?;
        if index >= space.space.len() {
            return Err(Failure(PsStatus::IndexOutOfRange, format!("no configuration {index}")));
        }
        let k = space.space.config(index);
        if cap < k.len() {
            return Err(Failure(PsStatus::BufferTooSmall, format!("need {} entries", k.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(k.as_ptr(), out, k.len());
        Ok(())
    })
}

/// Minimizer `x*` of the objective for arrival rates `lambda` and service
/// rates `mu` (`types` entries each). Writes `ps_space_len` values to
/// `out_x` (capacity `cap`) and the optimal value to `out_f` when non-NULL.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ps_solve_xstar(
    space: *const PsSpace,
    lambda: *const f64,
    mu: *const f64,
    types: usize,
    alpha: f64,
    out_x: *mut f64,
    cap: usize,
    out_f: *mut f64,
) -> PsStatus {
    guard(|| {
        let space = space.as_ref().ok_or_else(|| null("space"))?;
        let demand = Demand::new(
            slice(lambda, types, "lambda")?.to_vec(),
            slice(mu, types, "mu")?.to_vec(),
        )?;
        let n = space.space.len();
        if cap < n {
            return Err(Failure(PsStatus::BufferTooSmall, format!("need {n} entries")));
        }
        if out_x.is_null() {
            return Err(null("out_x"));
        }
        let (x, _) = solve_xstar(&space.space, &demand, alpha, SOLVER_TOL)?;
        ptr::copy_nonoverlapping(x.x.as_ptr(), out_x, n);
        if let Some(f) = out_f.as_mut() {
            *f = objective_f(&x);
        }
        Ok(())
    })
}

/// Solves a problem given as JSON `{"space": ..., "demand": ..., "alpha": a}`
/// and returns `{"xstar", "f_star", "eta", "kkt_residual", "phi_star",
/// "phi_of_xstar", "nsi_at_phi_optimum"}` as JSON.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_solve_json(json: *const c_char, out: *mut *mut c_char) -> PsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let value: serde_json::Value = serde_json::from_str(read_str(json, "json")?)?;
        let space: SpaceSpec = serde_json::from_value(value["space"].clone())?;
        let space = space.build()?;
        let demand: Demand = serde_json::from_value::<packing_sim::optimizer::DemandSpec>(
            value["demand"].clone(),
        )?
        .try_into()?;
        let alpha = value.get("alpha").and_then(|a| a.as_f64()).unwrap_or(1.0);
        let (x, cert) = solve_xstar(&space, &demand, alpha, SOLVER_TOL)?;
        let (xphi, phi_star) = solve_phistar(&space, &demand, alpha, SOLVER_TOL)?;
        let result = serde_json::json!({
            "alpha": alpha,
            "configs": space.configs(),
            "xstar": x.x,
            "f_star": objective_f(&x),
            "eta": cert.eta,
            "kkt_residual": cert.residual,
            "phi_star": phi_star,
            "phi_of_xstar": objective_phi(&x, &space),
            "nsi_at_phi_optimum": check_nsi(&space, &xphi, 1e-8).holds,
        });
        write_string(out, result.to_string())
    })
}

/// Validates a simulation config given as JSON.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_sim_from_json(json: *const c_char, out: *mut *mut PsSimulation) -> PsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = SimConfig::from_json(read_str(json, "json")?)?;
        *out = Box::into_raw(Box::new(PsSimulation {
            config,
            snapshots: Vec::new(),
            summary: None,
        }));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`ps_sim_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ps_sim_free(sim: *mut PsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Overrides the seed of the next run.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_sim_set_seed(sim: *mut PsSimulation, seed: u64) -> PsStatus {
    guard(|| {
        sim.as_mut().ok_or_else(|| null("sim"))?.config.params.seed = seed;
        Ok(())
    })
}

/// Runs the simulation; the summary becomes available through
/// [`ps_sim_summary_json`] and the snapshots through
/// [`ps_sim_snapshot_count`] and [`ps_sim_snapshot_x`].
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_sim_run(sim: *mut PsSimulation) -> PsStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        let reference = Reference::for_config(&sim.config, SOLVER_TOL)?;
        let (snapshots, summary) = run_with_reference(&sim.config, &reference)?;
        sim.snapshots = snapshots;
        sim.summary = Some(summary);
        Ok(())
    })
}

/// Summary of the last run as JSON.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_sim_summary_json(sim: *const PsSimulation, out: *mut *mut c_char) -> PsStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let summary = sim
            .summary
            .as_ref()
            .ok_or_else(|| Failure(PsStatus::InvalidInput, "simulation has not been run".into()))?;
        write_string(out, serde_json::to_string(summary)?)
    })
}

/// Number of snapshots recorded by the last run.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_sim_snapshot_count(sim: *const PsSimulation, out: *mut usize) -> PsStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = sim.snapshots.len();
        Ok(())
    })
}

/// Copies the fluid-scaled state of snapshot `index` (dense, `ps_space_len`
/// entries) into `out_x` and its time into `out_t` when non-NULL.
///
/// # Safety
/// `sim` must be a live handle; `out_x` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn ps_sim_snapshot_x(
    sim: *const PsSimulation,
    index: usize,
    out_t: *mut f64,
    out_x: *mut f64,
    cap: usize,
) -> PsStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let snap = sim
            .snapshots
            .get(index)
            .ok_or_else(|| Failure(PsStatus::IndexOutOfRange, format!("no snapshot {index}")))?;
        let n = sim.config.space.len();
        if cap < n {
            return Err(Failure(PsStatus::BufferTooSmall, format!("need {n} entries")));
        }
        if out_x.is_null() {
            return Err(null("out_x"));
        }
        ptr::copy_nonoverlapping(snap.dense_x(n).as_ptr(), out_x, n);
        if let Some(t) = out_t.as_mut() {
            *t = snap.t;
        }
        Ok(())
    })
}

/// Runs an experiment given as JSON and returns the report as JSON.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_experiment_run_json(json: *const c_char, out: *mut *mut c_char) -> PsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: ExperimentSpec = serde_json::from_str(read_str(json, "json")?)?;
        let report = run_experiment(&Experiment::from_spec(spec)?)?;
        write_string(out, report.to_json()?)
    })
}
