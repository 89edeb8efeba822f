//! C ABI over `bosebox`.
//!
//! Every function returns a [`BbStatus`] and writes results through out
//! pointers. Objects are opaque handles released with their `_free`
//! function. On failure the message is kept per thread and can be copied
//! out with [`bb_last_error_message`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use bosebox::canonical::{build_canonical, CanonicalTable};
use bosebox::grandcanonical::{critical_density, gc_density, mean_occupation, solve_a, solve_mu_with, SolverOptions};
use bosebox::limits::{fluctuation_law, g_function, typeii_ladder_occupation};
use bosebox::spectrum::{
    eigenvalue, enumerate_below, ids, ids_limit, spectrum_for_tolerance, BoxGeometry, FluctuationCase, Mode,
    SpectrumTable,
};
use bosebox::Error;
use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidGeometry = 2,
    Domain = 3,
    CutoffTooLarge = 4,
    CutoffInsufficient = 5,
    NoConvergence = 6,
    PoleProximity = 7,
    DegenerateMode = 8,
    OutOfRange = 9,
    Panic = 10,
}

/// Box geometry handle.
pub struct BbGeometry(BoxGeometry);

/// Sorted one-particle spectrum handle.
pub struct BbSpectrum(Arc<SpectrumTable>);

/// Canonical partition-function table handle.
pub struct BbCanonical(CanonicalTable);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> BbStatus {
    match e {
        Error::InvalidGeometry(_) => BbStatus::InvalidGeometry,
        Error::Domain(_) => BbStatus::Domain,
        Error::CutoffTooLarge { .. } => BbStatus::CutoffTooLarge,
        Error::CutoffInsufficient { .. } => BbStatus::CutoffInsufficient,
        Error::NoConvergence { .. } => BbStatus::NoConvergence,
        Error::PoleProximity { .. } => BbStatus::PoleProximity,
        Error::DegenerateMode(_) => BbStatus::DegenerateMode,
        Error::OutOfRange { .. } => BbStatus::OutOfRange,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> BbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BbStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BbStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BbStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: caller passes a handle from this library or null.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and, per the caller contract, writable.
    unsafe { out.write(v) };
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Length in bytes of the last error message on this thread, without the
/// terminating NUL.
#[no_mangle]
pub extern "C" fn bb_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message (NUL-terminated, truncated to fit) into
/// `buf`. Returns the number of bytes written, excluding the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn bb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let n = e.len().min(len - 1);
        // SAFETY: buf has room for len bytes and n < len.
        unsafe {
            std::ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        n
    })
}

/// # Safety
/// `alphas` points to three doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bb_geometry_new(alphas: *const f64, volume: f64, out: *mut *mut BbGeometry) -> BbStatus {
    guard(|| {
        if alphas.is_null() {
            return Err(Fail::Null("alphas"));
        }
        // SAFETY: three readable doubles per the contract.
        let a = unsafe { [*alphas, *alphas.add(1), *alphas.add(2)] };
        let g = BoxGeometry::new(a, volume)?;
        unsafe { put(out, boxed(BbGeometry(g)), "out") }
    })
}

/// # Safety
/// `g` is null or a live handle from [`bb_geometry_new`].
#[no_mangle]
pub unsafe extern "C" fn bb_geometry_free(g: *mut BbGeometry) {
    if !g.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(g) });
    }
}

/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_geometry_ground_energy(g: *const BbGeometry, out: *mut f64) -> BbStatus {
    guard(|| {
        let g = unsafe { deref(g, "geometry") }?;
        unsafe { put(out, g.0.ground_energy(), "out") }
    })
}

/// Energy of mode (n1, n2, n3), all ≥ 1.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_eigenvalue(g: *const BbGeometry, n1: u32, n2: u32, n3: u32, out: *mut f64) -> BbStatus {
    guard(|| {
        let g = unsafe { deref(g, "geometry") }?;
        let m = Mode::new([n1, n2, n3])?;
        unsafe { put(out, eigenvalue(&g.0, m), "out") }
    })
}

/// Finite-volume integrated density of states at gap `eta`.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_ids(g: *const BbGeometry, eta: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let g = unsafe { deref(g, "geometry") }?;
        if !(eta >= 0.0) {
            return Err(Error::Domain(format!("eta must be nonnegative, got {eta}")).into());
        }
        unsafe { put(out, ids(&g.0, eta), "out") }
    })
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bb_ids_limit(eta: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let v = ids_limit(eta)?;
        unsafe { put(out, v, "out") }
    })
}

/// Spectrum truncated so the neglected Boltzmann weight stays below `tol`.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_spectrum_for_tolerance(
    g: *const BbGeometry,
    beta: f64,
    tol: f64,
    out: *mut *mut BbSpectrum,
) -> BbStatus {
    guard(|| {
        let g = unsafe { deref(g, "geometry") }?;
        let s = spectrum_for_tolerance(&g.0, beta, tol)?;
        unsafe { put(out, boxed(BbSpectrum(Arc::new(s))), "out") }
    })
}

/// Every mode with energy at most `e_max` (possibly none).
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_spectrum_below(g: *const BbGeometry, e_max: f64, out: *mut *mut BbSpectrum) -> BbStatus {
    guard(|| {
        let g = unsafe { deref(g, "geometry") }?;
        let s = enumerate_below(&g.0, e_max)?;
        unsafe { put(out, boxed(BbSpectrum(Arc::new(s))), "out") }
    })
}

/// # Safety
/// `s` is null or a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn bb_spectrum_free(s: *mut BbSpectrum) {
    if !s.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(s) });
    }
}

/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_spectrum_len(s: *const BbSpectrum, out: *mut usize) -> BbStatus {
    guard(|| {
        let s = unsafe { deref(s, "spectrum") }?;
        unsafe { put(out, s.0.len(), "out") }
    })
}

/// Energy of the `i`-th mode in ascending order.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_spectrum_energy(s: *const BbSpectrum, i: usize, out: *mut f64) -> BbStatus {
    guard(|| {
        let s = unsafe { deref(s, "spectrum") }?;
        if i >= s.0.len() {
            return Err(Error::OutOfRange { index: i, limit: s.0.len() }.into());
        }
        unsafe { put(out, s.0.energy(i), "out") }
    })
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bb_critical_density(beta: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let c = critical_density(beta)?;
        unsafe { put(out, c.value, "out") }
    })
}

/// Solves for the shifted chemical potential μ̄ = μ − E₁ at density `rho`.
///
/// # Safety
/// Valid handle and writable `mu_bar`.
#[no_mangle]
pub unsafe extern "C" fn bb_solve_mu(
    s: *const BbSpectrum,
    rho: f64,
    beta: f64,
    tol: f64,
    max_iter: usize,
    mu_bar: *mut f64,
) -> BbStatus {
    guard(|| {
        let s = unsafe { deref(s, "spectrum") }?;
        let sol = solve_mu_with(&s.0, rho, beta, SolverOptions { tol, max_iter })?;
        unsafe { put(mu_bar, sol.mu_bar, "mu_bar") }
    })
}

/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_gc_density(s: *const BbSpectrum, mu_bar: f64, beta: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let s = unsafe { deref(s, "spectrum") }?;
        let v = gc_density(&s.0, mu_bar, beta)?;
        unsafe { put(out, v, "out") }
    })
}

/// Grand-canonical mean occupation of the `k`-th mode.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_gc_mean_occupation(
    s: *const BbSpectrum,
    mu_bar: f64,
    k: usize,
    beta: f64,
    out: *mut f64,
) -> BbStatus {
    guard(|| {
        let s = unsafe { deref(s, "spectrum") }?;
        let v = mean_occupation(&s.0, mu_bar, k, beta)?;
        unsafe { put(out, v, "out") }
    })
}

/// Amplitude A of the borderline regime.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bb_solve_a(rho: f64, beta: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let a = solve_a(rho, beta)?;
        unsafe { put(out, a.value, "out") }
    })
}

/// Canonical table up to `n_max` particles. The spectrum handle stays
/// owned by the caller.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_canonical_new(
    s: *const BbSpectrum,
    beta: f64,
    n_max: usize,
    out: *mut *mut BbCanonical,
) -> BbStatus {
    guard(|| {
        let s = unsafe { deref(s, "spectrum") }?;
        let ct = build_canonical(s.0.clone(), beta, n_max)?;
        unsafe { put(out, boxed(BbCanonical(ct)), "out") }
    })
}

/// # Safety
/// `c` is null or a live canonical handle.
#[no_mangle]
pub unsafe extern "C" fn bb_canonical_free(c: *mut BbCanonical) {
    if !c.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(c) });
    }
}

/// ln Z_n.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_canonical_log_z(c: *const BbCanonical, n: usize, out: *mut f64) -> BbStatus {
    guard(|| {
        let c = unsafe { deref(c, "canonical") }?;
        let v = c.0.log_z(n)?;
        unsafe { put(out, v, "out") }
    })
}

/// Canonical mean occupation of mode `k` with `n` particles.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_canonical_mean_occupation(
    c: *const BbCanonical,
    k: usize,
    n: usize,
    out: *mut f64,
) -> BbStatus {
    guard(|| {
        let c = unsafe { deref(c, "canonical") }?;
        let v = c.0.mean_occupation(k, n)?;
        unsafe { put(out, v, "out") }
    })
}

/// E[exp(−λ N_k)] with `n` particles.
///
/// # Safety
/// Valid handle and writable `out`.
#[no_mangle]
pub unsafe extern "C" fn bb_canonical_laplace(
    c: *const BbCanonical,
    k: usize,
    n: usize,
    lambda: f64,
    out: *mut f64,
) -> BbStatus {
    guard(|| {
        let c = unsafe { deref(c, "canonical") }?;
        let v = c.0.occupation_laplace(k, n, lambda)?;
        unsafe { put(out, v, "out") }
    })
}

/// Limiting scaled occupation of ladder mode (n,1,1) in the borderline
/// regime, with `m_max` gap coefficients.
///
/// # Safety
/// `out` is writable; `truncation` may be null.
#[no_mangle]
pub unsafe extern "C" fn bb_typeii_ladder_occupation(
    n: usize,
    rho: f64,
    beta: f64,
    m_max: usize,
    out: *mut f64,
    truncation: *mut f64,
) -> BbStatus {
    guard(|| {
        let rc = critical_density(beta)?.value;
        let l = typeii_ladder_occupation(n, rho, rc, beta, m_max)?;
        if !truncation.is_null() {
            unsafe { put(truncation, l.truncation, "truncation") }?;
        }
        unsafe { put(out, l.value, "out") }
    })
}

/// g_d(λ) for d in 1..=3.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bb_g_function(d: u32, lambda: f64, beta: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let g = g_function(d as usize, lambda, beta)?;
        unsafe { put(out, g.value, "out") }
    })
}

/// Limiting fluctuation transform. `case`: 0 one longest axis, 1 two equal
/// longest axes, 2 cube.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bb_fluctuation_law(case: u32, lambda: f64, beta: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let c = match case {
            0 => FluctuationCase::Distinct,
            1 => FluctuationCase::TwoEqual,
            2 => FluctuationCase::Isotropic,
            _ => return Err(Error::Domain(format!("unknown fluctuation case {case}")).into()),
        };
        let v = fluctuation_law(c, lambda, beta)?;
        unsafe { put(out, v.value, "out") }
    })
}
