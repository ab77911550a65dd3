//! C ABI over `qae-core`.
//!
//! Every fallible function returns a [`QaeStatus`] and writes its result
//! through an out-pointer. On failure a message is kept per thread and can be
//! read with [`qae_last_error_message`]. Reports are opaque handles released
//! with [`qae_report_free`]; strings returned by the library are released with
//! [`qae_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qae_core::baselines::{estimate_classical, estimate_exponential_mle};
use qae_core::bench::{powerlaw_params, qoprime_params, Choice};
use qae_core::error::Error;
use qae_core::numtheory::crt_reconstruct;
use qae_core::oracle::{outcome_probability_with, Basis, ProblemInstance};
use qae_core::powerlaw::estimate_powerlaw;
use qae_core::qoprime::{estimate_qoprime, optimize_params, optimize_params_realized, SampleBudget};
use qae_core::report::EstimateReport;
use qae_core::schedules::select_beta;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QaeStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    FisherDivergence = 3,
    ScheduleTooLarge = 4,
    ObservationMismatch = 5,
    PosteriorUnderflow = 6,
    NotCoprime = 7,
    InfeasibleModuli = 8,
    SampleBudgetExceeded = 9,
    EmptyIntersection = 10,
    DegenerateData = 11,
    Io = 12,
    Format = 13,
    Panic = 14,
}

impl From<&Error> for QaeStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => QaeStatus::InvalidArgument,
            Error::FisherDivergence { .. } => QaeStatus::FisherDivergence,
            Error::ScheduleTooLarge { .. } => QaeStatus::ScheduleTooLarge,
            Error::ObservationMismatch(_) => QaeStatus::ObservationMismatch,
            Error::PosteriorUnderflow => QaeStatus::PosteriorUnderflow,
            Error::NotCoprime { .. } => QaeStatus::NotCoprime,
            Error::InfeasibleModuli { .. } => QaeStatus::InfeasibleModuli,
            Error::SampleBudgetExceeded { .. } => QaeStatus::SampleBudgetExceeded,
            Error::EmptyIntersection => QaeStatus::EmptyIntersection,
            Error::DegenerateData(_) => QaeStatus::DegenerateData,
            Error::Io(_) => QaeStatus::Io,
            Error::Format(_) => QaeStatus::Format,
        }
    }
}

/// Opaque estimate report.
pub struct QaeReport(EstimateReport);

/// Result of a `(k, q)` search.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QaeOptimized {
    pub k: u32,
    pub q: u32,
    /// Predicted oracle calls without the constant prefactor.
    pub predicted_calls: f64,
    pub predicted_depth: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: QaeStatus, msg: impl Into<String>) -> QaeStatus {
    set_last_error(msg.into());
    status
}

/// Run `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), QaeStatus>) -> QaeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QaeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(QaeStatus::Panic, "internal panic"),
    }
}

fn check<T>(r: qae_core::error::Result<T>) -> Result<T, QaeStatus> {
    r.map_err(|e| fail(QaeStatus::from(&e), e.to_string()))
}

fn non_null<T>(p: *mut T, name: &str) -> Result<(), QaeStatus> {
    if p.is_null() {
        Err(fail(QaeStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `out` must be null or valid for a pointer write.
unsafe fn emit_report(out: *mut *mut QaeReport, r: EstimateReport) {
    *out = Box::into_raw(Box::new(QaeReport(r)));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qae_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Probability of outcome "1" for a circuit of `depth` Grover iterations.
/// Returns NaN for `theta` outside `[0, π/2]` or negative `gamma`.
#[no_mangle]
pub extern "C" fn qae_outcome_probability(theta: f64, gamma: f64, depth: u64, hadamard: bool, shifted: bool) -> f64 {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) || !(gamma >= 0.0) {
        return f64::NAN;
    }
    let basis = if hadamard { Basis::Hadamard } else { Basis::Standard };
    outcome_probability_with(theta, gamma, depth, basis, shifted)
}

/// # Safety
/// `out` must be valid for a write of `f64`.
#[no_mangle]
pub unsafe extern "C" fn qae_select_beta(epsilon: f64, gamma: f64, out: *mut f64) -> QaeStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = check(select_beta(epsilon, gamma))?;
        Ok(())
    })
}

/// Unique `M < Π moduli` with `M ≡ residues[i] (mod moduli[i])`.
///
/// # Safety
/// `residues` and `moduli` must point to `len` readable values and `out` must
/// be valid for a write of `u64`.
#[no_mangle]
pub unsafe extern "C" fn qae_crt_reconstruct(
    residues: *const u64,
    moduli: *const u64,
    len: usize,
    out: *mut u64,
) -> QaeStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(residues.cast_mut(), "residues")?;
        non_null(moduli.cast_mut(), "moduli")?;
        let r = std::slice::from_raw_parts(residues, len);
        let m = std::slice::from_raw_parts(moduli, len);
        let pairs: Vec<(u128, u128)> = r.iter().zip(m).map(|(&b, &n)| (b as u128, n as u128)).collect();
        let value = check(crt_reconstruct(&pairs))?;
        *out = u64::try_from(value)
            .map_err(|_| fail(QaeStatus::InvalidArgument, format!("result {value} does not fit in 64 bits")))?;
        Ok(())
    })
}

/// Choose QoPrime's `(k, q)`. With `realized` the actual coprime products
/// are priced instead of the closed form.
///
/// # Safety
/// `out` must be valid for a write of [`QaeOptimized`].
#[no_mangle]
pub unsafe extern "C" fn qae_optimize_params(
    epsilon: f64,
    gamma: f64,
    delta: f64,
    realized: bool,
    out: *mut QaeOptimized,
) -> QaeStatus {
    guard(|| {
        non_null(out, "out")?;
        let o = check(if realized {
            optimize_params_realized(epsilon, gamma, delta)
        } else {
            optimize_params(epsilon, gamma, delta)
        })?;
        *out = QaeOptimized {
            k: o.k as u32,
            q: o.q as u32,
            predicted_calls: o.predicted_calls,
            predicted_depth: o.predicted_depth,
        };
        Ok(())
    })
}

/// Power-law estimate. A negative `beta` selects it from `(epsilon, gamma)`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn qae_estimate_powerlaw(
    theta: f64,
    gamma: f64,
    epsilon: f64,
    beta: f64,
    n_shot: u64,
    noise_aware: bool,
    seed: u64,
    out: *mut *mut QaeReport,
) -> QaeStatus {
    guard(|| {
        non_null(out, "out")?;
        let inst = check(ProblemInstance::new(theta, gamma))?;
        let beta = if beta < 0.0 { Choice::Auto } else { Choice::Fixed(beta) };
        let params = check(powerlaw_params(epsilon, gamma, beta, n_shot))?;
        let r = check(estimate_powerlaw(&inst, &params, noise_aware, seed))?;
        emit_report(out, r.with_truth(theta));
        Ok(())
    })
}

/// QoPrime estimate. `k = 0` or `q = 0` lets the optimizer choose.
/// `exact_budget` selects exact binomial shot counts over the Chernoff ones;
/// a non-positive `sample_cap` keeps the default cap.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn qae_estimate_qoprime(
    theta: f64,
    gamma: f64,
    epsilon: f64,
    delta: f64,
    k: u32,
    q: u32,
    exact_budget: bool,
    sample_cap: f64,
    seed: u64,
    out: *mut *mut QaeReport,
) -> QaeStatus {
    guard(|| {
        non_null(out, "out")?;
        let inst = check(ProblemInstance::new(theta, gamma))?;
        let choice = |v: u32| if v == 0 { Choice::Auto } else { Choice::Fixed(v as usize) };
        let mut params = check(qoprime_params(epsilon, gamma, delta, choice(k), choice(q)))?;
        if exact_budget {
            params = params.with_budget(SampleBudget::ExactBinomial);
        }
        if sample_cap > 0.0 {
            params = params.with_sample_cap(sample_cap);
        }
        let r = check(estimate_qoprime(&inst, &params, seed))?;
        emit_report(out, r.with_truth(theta));
        Ok(())
    })
}

/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn qae_estimate_classical(
    theta: f64,
    gamma: f64,
    epsilon: f64,
    delta: f64,
    seed: u64,
    out: *mut *mut QaeReport,
) -> QaeStatus {
    guard(|| {
        non_null(out, "out")?;
        let inst = check(ProblemInstance::new(theta, gamma))?;
        let r = check(estimate_classical(&inst, epsilon, delta, seed))?;
        emit_report(out, r.with_truth(theta));
        Ok(())
    })
}

/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn qae_estimate_exponential_mle(
    theta: f64,
    gamma: f64,
    epsilon: f64,
    n_shot: u64,
    noise_aware: bool,
    seed: u64,
    out: *mut *mut QaeReport,
) -> QaeStatus {
    guard(|| {
        non_null(out, "out")?;
        let inst = check(ProblemInstance::new(theta, gamma))?;
        let r = check(estimate_exponential_mle(&inst, epsilon, n_shot, noise_aware, seed))?;
        emit_report(out, r.with_truth(theta));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle from this library.
unsafe fn report<'a>(report: *const QaeReport) -> Option<&'a EstimateReport> {
    report.as_ref().map(|r| &r.0)
}

/// Estimated angle, or NaN for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qae_report_theta_hat(r: *const QaeReport) -> f64 {
    report(r).map_or(f64::NAN, |r| r.theta_hat)
}

/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qae_report_oracle_calls(r: *const QaeReport) -> u64 {
    report(r).map_or(0, |r| r.oracle_calls)
}

/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qae_report_max_depth(r: *const QaeReport) -> u64 {
    report(r).map_or(0, |r| r.max_depth)
}

/// `1` if the estimate is within epsilon of the truth, `0` if not, `-1` if
/// unknown.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qae_report_success(r: *const QaeReport) -> i32 {
    report(r).and_then(|r| r.success).map_or(-1, i32::from)
}

/// Report as JSON; release with [`qae_string_free`]. Null for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qae_report_to_json(r: *const QaeReport) -> *mut c_char {
    report(r).map_or(ptr::null_mut(), |r| CString::new(r.to_json()).map_or(ptr::null_mut(), CString::into_raw))
}

/// # Safety
/// `r` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qae_report_free(r: *mut QaeReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qae_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to
/// `len`). Returns the full message length, or 0 if there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` byte writes.
#[no_mangle]
pub unsafe extern "C" fn qae_last_error_copy(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref().map(|c| c.as_bytes()) else { return 0 };
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
