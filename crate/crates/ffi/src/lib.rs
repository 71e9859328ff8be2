//! C ABI over `dyadic-core`.
//!
//! Every fallible function returns a [`DyadicStatus`]; on failure the message
//! is kept per thread and can be copied out with [`dyadic_last_error`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use dyadic_core::birth_death::{escape_prob_formula, BDRates, Boundary};
use dyadic_core::deterministic::drift_pm;
use dyadic_core::ensemble::{run_ensemble, EnsembleConfig, EnsembleResult};
use dyadic_core::forward::{solve_forward, spectral_quantities, EnergyProfile, ForwardMethod, ForwardOptions};
use dyadic_core::sde::Scheme;
use dyadic_core::{Error, ModelParams, ShellState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DyadicStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    BlowUp = 3,
    NotSummable = 4,
    OutOfRange = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DyadicScheme {
    Ito = 0,
    Stratonovich = 1,
    Linear = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DyadicBoundary {
    Absorbing = 0,
    Reflecting = 1,
}

/// Closed forms and series values; `s_divergent` is 1 when `S` diverges.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DyadicQuantities {
    pub x: f64,
    pub r_1: f64,
    pub r_inf: f64,
    pub explosion_mean: f64,
    pub big_r: f64,
    pub s_divergent: i32,
    pub a: f64,
    pub alpha: f64,
}

/// Opaque model parameters.
pub struct DyadicParams(ModelParams);

/// Opaque ensemble result.
pub struct DyadicEnsemble(EnsembleResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> DyadicStatus {
    match e {
        Error::BlowUp { .. } | Error::EnsembleBlowUp { .. } => DyadicStatus::BlowUp,
        Error::NotSummable { .. } => DyadicStatus::NotSummable,
        _ => DyadicStatus::InvalidParameter,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (DyadicStatus, String)>) -> DyadicStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DyadicStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            DyadicStatus::Internal
        }
    }
}

fn core<T>(r: dyadic_core::Result<T>) -> Result<T, (DyadicStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (DyadicStatus, String) {
    (DyadicStatus::NullPointer, "null pointer argument".into())
}

unsafe fn params<'a>(p: *const DyadicParams) -> Result<&'a ModelParams, (DyadicStatus, String)> {
    p.as_ref().map(|p| &p.0).ok_or_else(null)
}

unsafe fn slice<'a>(ptr: *const f64, n: usize) -> Result<&'a [f64], (DyadicStatus, String)> {
    if ptr.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(ptr, n))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, n: usize) -> Result<&'a mut [f64], (DyadicStatus, String)> {
    if ptr.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts_mut(ptr, n))
}

/// Copy the last error message of this thread into `buf` as a NUL-terminated
/// string. Returns the full message length without the terminator; the copy is
/// truncated when `len` is too small.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dyadic_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Create parameters. `sigma = 0` is accepted for deterministic use only.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn dyadic_params_new(
    lambda: f64,
    theta: f64,
    sigma: f64,
    n_shells: usize,
    out: *mut *mut DyadicParams,
) -> DyadicStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        let p = if sigma == 0.0 {
            core(ModelParams::noiseless(lambda, theta, n_shells))?
        } else {
            core(ModelParams::new(lambda, theta, sigma, n_shells))?
        };
        *out = Box::into_raw(Box::new(DyadicParams(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`dyadic_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dyadic_params_free(p: *mut DyadicParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dyadic_quantities(p: *const DyadicParams, out: *mut DyadicQuantities) -> DyadicStatus {
    guard(|| {
        let p = params(p)?;
        let out = out.as_mut().ok_or_else(null)?;
        let q = core(spectral_quantities(p, 1e-14))?;
        *out = DyadicQuantities {
            x: q.x,
            r_1: q.r[0],
            r_inf: q.r_inf,
            explosion_mean: q.explosion_mean,
            big_r: q.big_r.value().unwrap_or(f64::INFINITY),
            s_divergent: q.big_s.value().is_none() as i32,
            a: q.a,
            alpha: q.alpha,
        };
        Ok(())
    })
}

/// Probability that the chain started at `k ≥ 1` never visits `k − 1`.
///
/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dyadic_escape_probability(p: *const DyadicParams, k: usize, out: *mut f64) -> DyadicStatus {
    guard(|| {
        let p = params(p)?;
        let out = out.as_mut().ok_or_else(null)?;
        if k == 0 {
            return Err((DyadicStatus::OutOfRange, "k must be at least 1".into()));
        }
        *out = core(escape_prob_formula(&BDRates::new(p), k))?;
        Ok(())
    })
}

/// Elsässer drift at `(P, M)`, each of length `n_shells`.
///
/// # Safety
/// All four arrays must hold `n_shells` doubles.
#[no_mangle]
pub unsafe extern "C" fn dyadic_drift(
    p: *const DyadicParams,
    pv: *const f64,
    mv: *const f64,
    out_p: *mut f64,
    out_m: *mut f64,
) -> DyadicStatus {
    guard(|| {
        let p = params(p)?;
        let n = p.n_shells();
        let s = core(ShellState::elsasser(slice(pv, n)?.to_vec(), slice(mv, n)?.to_vec()))?;
        let d = core(drift_pm(&s, p))?;
        slice_mut(out_p, n)?.copy_from_slice(&d.first);
        slice_mut(out_m, n)?.copy_from_slice(&d.second);
        Ok(())
    })
}

/// Solve the forward energy equation by backward Euler from `e0` up to `t_end`.
/// Writes the final profile to `out_e` and the bottom and top leaks to
/// `out_leaks[0..2]`.
///
/// # Safety
/// `e0` and `out_e` must hold `n_shells` doubles; `out_leaks` two.
#[no_mangle]
pub unsafe extern "C" fn dyadic_forward_solve(
    p: *const DyadicParams,
    boundary: DyadicBoundary,
    e0: *const f64,
    dt: f64,
    t_end: f64,
    out_e: *mut f64,
    out_leaks: *mut f64,
) -> DyadicStatus {
    guard(|| {
        let p = params(p)?;
        let n = p.n_shells();
        let start = EnergyProfile::new(slice(e0, n)?.to_vec());
        let boundary = match boundary {
            DyadicBoundary::Absorbing => Boundary::Absorbing,
            DyadicBoundary::Reflecting => Boundary::Reflecting,
        };
        let out = core(solve_forward(
            &start,
            &BDRates::new(p),
            &ForwardOptions {
                method: ForwardMethod::BackwardEuler,
                boundary,
                dt,
                t_end,
                record_stride: usize::MAX,
            },
        ))?;
        let last = out.last().expect("initial profile");
        slice_mut(out_e, n)?.copy_from_slice(&last.e);
        slice_mut(out_leaks, 2)?.copy_from_slice(&[last.leaked_bottom, last.leaked_top]);
        Ok(())
    })
}

/// Run an ensemble from the Elsässer state `(P, M)`.
///
/// # Safety
/// `p` must be a live handle, `pv` and `mv` must hold `n_shells` doubles and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dyadic_ensemble_run(
    p: *const DyadicParams,
    scheme: DyadicScheme,
    pv: *const f64,
    mv: *const f64,
    dt: f64,
    t_end: f64,
    n_paths: usize,
    master_seed: u64,
    record_stride: usize,
    out: *mut *mut DyadicEnsemble,
) -> DyadicStatus {
    guard(|| {
        let p = params(p)?;
        let out = out.as_mut().ok_or_else(null)?;
        let n = p.n_shells();
        let initial = core(ShellState::elsasser(slice(pv, n)?.to_vec(), slice(mv, n)?.to_vec()))?;
        let scheme = match scheme {
            DyadicScheme::Ito => Scheme::ItoEM,
            DyadicScheme::Stratonovich => Scheme::StratHeun,
            DyadicScheme::Linear => Scheme::LinearEM,
        };
        let res = core(run_ensemble(&EnsembleConfig {
            scheme,
            params: p.clone(),
            initial,
            dt,
            t_end,
            n_paths,
            master_seed,
            record_stride,
            keep_paths: false,
            track_weights: scheme == Scheme::LinearEM,
        }))?;
        *out = Box::into_raw(Box::new(DyadicEnsemble(res)));
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or a handle from [`dyadic_ensemble_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dyadic_ensemble_free(e: *mut DyadicEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of recorded times, or 0 for a NULL handle.
///
/// # Safety
/// `e` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dyadic_ensemble_len(e: *const DyadicEnsemble) -> usize {
    e.as_ref().map_or(0, |e| e.0.summaries.len())
}

/// Time, mean energy and its standard error at record `k`.
///
/// # Safety
/// `e` must be a live handle and `out` must hold three doubles.
#[no_mangle]
pub unsafe extern "C" fn dyadic_ensemble_energy(e: *const DyadicEnsemble, k: usize, out: *mut f64) -> DyadicStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(null)?;
        let s = e.0.summaries.get(k).ok_or((DyadicStatus::OutOfRange, format!("record {k} out of range")))?;
        slice_mut(out, 3)?.copy_from_slice(&[s.t, s.energy.mean, s.energy.se]);
        Ok(())
    })
}

/// Mean of `P_j²` at record `k` (shell `j` is 1-based) and its standard error.
///
/// # Safety
/// `e` must be a live handle and `out` must hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn dyadic_ensemble_mean_p2(
    e: *const DyadicEnsemble,
    k: usize,
    shell: usize,
    out: *mut f64,
) -> DyadicStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(null)?;
        let s = e.0.summaries.get(k).ok_or((DyadicStatus::OutOfRange, format!("record {k} out of range")))?;
        let v = shell
            .checked_sub(1)
            .and_then(|j| s.mean_p2.get(j))
            .ok_or((DyadicStatus::OutOfRange, format!("shell {shell} out of range")))?;
        slice_mut(out, 2)?.copy_from_slice(&[v.mean, v.se]);
        Ok(())
    })
}
