//! C ABI for the planner and simulator.
//!
//! Conventions: an opaque `ParoSession` handle carries the cluster, model
//! and network configuration; every call returns a `ParoStatus`; functions
//! producing output write a NUL-terminated JSON string the caller must
//! release with `paro_string_free`. On any non-OK status,
//! `paro_last_error_message` returns a description valid until the next
//! call on the same thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use paro::costmodel::Method;
use paro::report::{self, CollectiveChoice, Topology};
use paro::types::{ClusterSpec, ModelSpec, NetworkSpec, Regime, Strategy};

/// Result of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParoStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Failed = 4,
    Panic = 5,
}

/// Opaque configuration handle.
pub struct ParoSession {
    cluster: ClusterSpec,
    model: ModelSpec,
    net: NetworkSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Description of the most recent failure on this thread, or NULL. The
/// pointer is valid until the next API call on the same thread.
#[no_mangle]
pub extern "C" fn paro_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

fn guard(f: impl FnOnce() -> ParoStatus) -> ParoStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".to_string());
            ParoStatus::Panic
        }
    }
}

fn write_out(out: *mut *mut c_char, text: String) -> ParoStatus {
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            ParoStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL byte".into());
            ParoStatus::Failed
        }
    }
}

/// # Safety
/// `s` must be NULL or a pointer previously returned through an `out`
/// parameter of this API and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn paro_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Create a session. Returns NULL on invalid configuration, with the reason
/// available from `paro_last_error_message`.
///
/// `trainable_params` of 0 means fully trainable; `layers` sets schedule
/// granularity; `peft` marks parameter-efficient fine-tuning.
#[no_mangle]
pub extern "C" fn paro_session_new(
    n_gpus: u64,
    group_size: u64,
    accum_steps: u64,
    total_params: u64,
    trainable_params: u64,
    layers: u64,
    peft: bool,
) -> *mut ParoSession {
    clear_error();
    let built = catch_unwind(|| {
        let cluster = ClusterSpec::new(n_gpus, group_size, accum_steps)?;
        let trainable = if trainable_params == 0 {
            total_params
        } else {
            trainable_params
        };
        let model = ModelSpec::new(total_params, trainable, layers)?.with_peft(peft);
        Ok::<ParoSession, paro::Error>(ParoSession {
            cluster,
            model,
            net: NetworkSpec::default(),
        })
    });
    match built {
        Ok(Ok(session)) => Box::into_raw(Box::new(session)),
        Ok(Err(e)) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic".into());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `session` must be NULL or a pointer from `paro_session_new` that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn paro_session_free(session: *mut ParoSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Override the two-tier network profile.
///
/// # Safety
/// `session` must be a live pointer from `paro_session_new`.
#[no_mangle]
pub unsafe extern "C" fn paro_session_set_network(
    session: *mut ParoSession,
    intra_bw: f64,
    inter_bw: f64,
    intra_latency: f64,
    inter_latency: f64,
) -> ParoStatus {
    guard(|| {
        if session.is_null() {
            set_error("session is NULL".into());
            return ParoStatus::NullArgument;
        }
        match NetworkSpec::new(intra_bw, inter_bw, intra_latency, inter_latency) {
            Ok(net) => {
                (*session).net = net;
                ParoStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                ParoStatus::InvalidArgument
            }
        }
    })
}

/// Override the per-state byte widths (parameter bytes, gradient bytes,
/// optimizer bytes per trainable parameter).
///
/// # Safety
/// `session` must be a live pointer from `paro_session_new`.
#[no_mangle]
pub unsafe extern "C" fn paro_session_set_widths(
    session: *mut ParoSession,
    param_bytes: u64,
    grad_bytes: u64,
    optim_factor: f64,
) -> ParoStatus {
    guard(|| {
        if session.is_null() {
            set_error("session is NULL".into());
            return ParoStatus::NullArgument;
        }
        let model = (*session).model;
        match model
            .with_param_bytes(param_bytes)
            .and_then(|m| m.with_grad_bytes(grad_bytes))
            .and_then(|m| m.with_optim_factor(optim_factor))
        {
            Ok(m) => {
                (*session).model = m;
                ParoStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                ParoStatus::InvalidArgument
            }
        }
    })
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, ParoStatus> {
    if ptr.is_null() {
        set_error("string argument is NULL".into());
        return Err(ParoStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        ParoStatus::InvalidUtf8
    })
}

/// Strategy recommendations for a regime ("full", "partial-large",
/// "partial-small" or "peft"), as JSON.
///
/// # Safety
/// `session` must be live; `regime` must be a NUL-terminated string; `out`
/// must be a valid location to store the result pointer.
#[no_mangle]
pub unsafe extern "C" fn paro_recommend_json(
    session: *const ParoSession,
    regime: *const c_char,
    out: *mut *mut c_char,
) -> ParoStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            set_error("session or out is NULL".into());
            return ParoStatus::NullArgument;
        }
        let regime = match read_str(regime).and_then(|s| {
            Regime::parse(s).map_err(|e| {
                set_error(e.to_string());
                ParoStatus::InvalidArgument
            })
        }) {
            Ok(r) => r,
            Err(status) => return status,
        };
        let s = &*session;
        match report::plan_json(regime, &s.cluster, &s.model, &s.net) {
            Ok(v) => write_out(out, v.to_string()),
            Err(e) => {
                set_error(e.to_string());
                ParoStatus::Failed
            }
        }
    })
}

/// Memory/volume/time report for one method name or strategy code, as JSON.
///
/// # Safety
/// Same contract as `paro_recommend_json`.
#[no_mangle]
pub unsafe extern "C" fn paro_cost_json(
    session: *const ParoSession,
    method: *const c_char,
    out: *mut *mut c_char,
) -> ParoStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            set_error("session or out is NULL".into());
            return ParoStatus::NullArgument;
        }
        let method = match read_str(method).and_then(|s| {
            Method::parse(s).map_err(|e| {
                set_error(e.to_string());
                ParoStatus::InvalidArgument
            })
        }) {
            Ok(m) => m,
            Err(status) => return status,
        };
        let s = &*session;
        match report::cost_json(method, &s.cluster, &s.model, &s.net) {
            Ok(v) => write_out(out, v.to_string()),
            Err(e) => {
                set_error(e.to_string());
                ParoStatus::Failed
            }
        }
    })
}

/// The eight-method volume/memory summary, as JSON.
///
/// # Safety
/// Same contract as `paro_recommend_json`.
#[no_mangle]
pub unsafe extern "C" fn paro_method_summary_json(
    session: *const ParoSession,
    out: *mut *mut c_char,
) -> ParoStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            set_error("session or out is NULL".into());
            return ParoStatus::NullArgument;
        }
        let s = &*session;
        match report::method_summary_json(&s.cluster, &s.model, &s.net) {
            Ok(v) => write_out(out, v.to_string()),
            Err(e) => {
                set_error(e.to_string());
                ParoStatus::Failed
            }
        }
    })
}

/// Per-GPU parameter volume saved by grouped two-step gradient sync.
///
/// # Safety
/// `session` must be live; `out` must be a valid u64 location.
#[no_mangle]
pub unsafe extern "C" fn paro_accumulation_savings(
    session: *const ParoSession,
    out: *mut u64,
) -> ParoStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            set_error("session or out is NULL".into());
            return ParoStatus::NullArgument;
        }
        let s = &*session;
        let v = paro::costmodel::accumulation_savings(&s.cluster, &s.model);
        match u64::try_from(v) {
            Ok(v) => {
                *out = v;
                ParoStatus::Ok
            }
            Err(_) => {
                set_error("savings exceed u64 range".into());
                ParoStatus::Failed
            }
        }
    })
}

/// Run one collective ("ring", "h-ring" or "ho-ring"; "all-gather" or
/// "reduce-scatter") on a simulated cluster and return the byte/round/time
/// report as JSON. `session` may be NULL to use the default network profile.
///
/// # Safety
/// `topology` and `collective` must be NUL-terminated strings; `out` must be
/// a valid location; a non-NULL `session` must be live.
#[no_mangle]
pub unsafe extern "C" fn paro_simulate_json(
    session: *const ParoSession,
    topology: *const c_char,
    collective: *const c_char,
    ranks: u64,
    group_size: u64,
    payload_bytes: u64,
    seed: u64,
    out: *mut *mut c_char,
) -> ParoStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is NULL".into());
            return ParoStatus::NullArgument;
        }
        let topo = match read_str(topology).and_then(|s| {
            Topology::parse(s).map_err(|e| {
                set_error(e.to_string());
                ParoStatus::InvalidArgument
            })
        }) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let coll = match read_str(collective).and_then(|s| {
            CollectiveChoice::parse(s).map_err(|e| {
                set_error(e.to_string());
                ParoStatus::InvalidArgument
            })
        }) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let net = if session.is_null() {
            NetworkSpec::default()
        } else {
            (*session).net
        };
        match report::run_simulation(topo, coll, ranks, group_size, payload_bytes, seed, &net) {
            Ok(rep) => write_out(out, report::simulate_json(&rep, &net).to_string()),
            Err(e) => {
                set_error(e.to_string());
                ParoStatus::Failed
            }
        }
    })
}

/// Train the built-in tiny model under a strategy code on the session's
/// cluster and compare against single-process training; JSON report.
///
/// # Safety
/// Same contract as `paro_recommend_json`.
#[no_mangle]
pub unsafe extern "C" fn paro_verify_json(
    session: *const ParoSession,
    strategy: *const c_char,
    steps: u32,
    seed: u64,
    out: *mut *mut c_char,
) -> ParoStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            set_error("session or out is NULL".into());
            return ParoStatus::NullArgument;
        }
        let strategy = match read_str(strategy).and_then(|s| {
            Strategy::parse(s).map_err(|e| {
                set_error(e.to_string());
                ParoStatus::InvalidArgument
            })
        }) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let s = &*session;
        match report::verify_strategies(
            &[strategy],
            &s.cluster,
            steps as u64,
            seed,
            paro::trainsim::DEFAULT_TOLERANCE,
        ) {
            Ok(results) => {
                let v = report::verify_json(&results, &s.cluster, steps as u64, seed);
                write_out(out, v.to_string())
            }
            Err(e) => {
                set_error(e.to_string());
                ParoStatus::Failed
            }
        }
    })
}
