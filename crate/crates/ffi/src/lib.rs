//! C ABI over `copula-proc`.
//!
//! Objects are opaque handles released with their `*_free` function. Every
//! fallible call returns a [`CpStatus`]; on failure the message is available
//! from [`cp_last_error_message`] on the same thread.

use copula_proc::copulas::{CopulaModel, Family};
use copula_proc::empirical::{empirical_copula, Sample};
use copula_proc::grid::{Grid, GridFunction, Region};
use copula_proc::mapping::hadamard_derivative;
use copula_proc::mc::copula_on_grid;
use copula_proc::models::skew_normal::{skew_normal_cdf, skew_normal_quantile};
use copula_proc::stats::rate_slope;
use copula_proc::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    /// Lengths or indices do not match the object.
    InvalidArgument = 2,
    /// Argument outside the mathematical domain.
    Domain = 3,
    InvalidParameter = 4,
    /// Any other library error.
    Failure = 5,
    Panic = 6,
}

/// Copula families; the parameter is ignored for `Independence`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpFamily {
    Independence = 0,
    Clayton = 1,
    Gumbel = 2,
    Frank = 3,
    Gaussian = 4,
    Fgm = 5,
}

/// Opaque copula handle.
pub struct CpCopula(CopulaModel);

/// Opaque lattice function handle.
pub struct CpGridFunction(GridFunction);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CpStatus, msg: impl Into<String>) -> CpStatus {
    set_error(msg.into());
    status
}

fn from_error(err: Error) -> CpStatus {
    let status = match err {
        Error::Domain(_) => CpStatus::Domain,
        Error::Usage(_) => CpStatus::InvalidArgument,
        Error::InvalidParameter(_) => CpStatus::InvalidParameter,
        _ => CpStatus::Failure,
    };
    fail(status, err.to_string())
}

/// Runs `f`, turning panics into [`CpStatus::Panic`].
fn guard(f: impl FnOnce() -> CpStatus) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(CpStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice<'a>(p: *const f64, len: usize) -> Option<&'a [f64]> {
    if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a copula of dimension `d`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_copula_new(family: CpFamily, param: f64, d: usize, out: *mut *mut CpCopula) -> CpStatus {
    guard(|| {
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        let family = match family {
            CpFamily::Independence => Family::Independence,
            CpFamily::Clayton => Family::Clayton { theta: param },
            CpFamily::Gumbel => Family::Gumbel { theta: param },
            CpFamily::Frank => Family::Frank { theta: param },
            CpFamily::Gaussian => Family::Gaussian { rho: param },
            CpFamily::Fgm => Family::Fgm { theta: param },
        };
        match CopulaModel::new(family, d) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(CpCopula(c)));
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `c` must be null or a handle from [`cp_copula_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_copula_free(c: *mut CpCopula) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// `C(u)` for a point of `len == d` coordinates in `[0,1]`.
///
/// # Safety
/// `u` valid for `len` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_copula_cdf(c: *const CpCopula, u: *const f64, len: usize, out: *mut f64) -> CpStatus {
    guard(|| {
        let (Some(c), Some(u)) = (c.as_ref(), slice(u, len)) else {
            return fail(CpStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        match c.0.cdf(u) {
            Ok(v) => {
                *out = v;
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// `∂C/∂u_j` at `u`; `*degenerate` (if non-null) is set when the partial is
/// taken on the boundary where it is not unique.
///
/// # Safety
/// `u` valid for `len` reads, `out` for one write, `degenerate` null or valid.
#[no_mangle]
pub unsafe extern "C" fn cp_copula_partial(
    c: *const CpCopula,
    j: usize,
    u: *const f64,
    len: usize,
    out: *mut f64,
    degenerate: *mut bool,
) -> CpStatus {
    guard(|| {
        let (Some(c), Some(u)) = (c.as_ref(), slice(u, len)) else {
            return fail(CpStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        match c.0.partial(j, u) {
            Ok(p) => {
                *out = p.value;
                if !degenerate.is_null() {
                    *degenerate = p.degenerate;
                }
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Draws `n` points row-major into `out`, which must hold `n * d` values.
///
/// # Safety
/// `out` valid for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn cp_copula_sample(
    c: *const CpCopula,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> CpStatus {
    guard(|| {
        let Some(c) = c.as_ref() else {
            return fail(CpStatus::NullPointer, "copula is null");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        if out_len != n * c.0.dim() {
            return fail(
                CpStatus::InvalidArgument,
                format!("out_len must be n * d = {}", n * c.0.dim()),
            );
        }
        let sample = c.0.sample(n, &mut ChaCha8Rng::seed_from_u64(seed));
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(sample.data());
        CpStatus::Ok
    })
}

/// `C` at every node of the `m^d` lattice.
///
/// # Safety
/// `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_copula_on_grid(c: *const CpCopula, m: usize, out: *mut *mut CpGridFunction) -> CpStatus {
    guard(|| {
        let Some(c) = c.as_ref() else {
            return fail(CpStatus::NullPointer, "copula is null");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        match Grid::new(c.0.dim(), m) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(CpGridFunction(copula_on_grid(&c.0, &g))));
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Empirical copula of an `n x d` row-major sample on the `m^d` lattice.
///
/// # Safety
/// `data` valid for `n * d` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_empirical_copula(
    data: *const f64,
    n: usize,
    d: usize,
    m: usize,
    out: *mut *mut CpGridFunction,
) -> CpStatus {
    guard(|| {
        let Some(values) = slice(data, n * d) else {
            return fail(CpStatus::NullPointer, "data is null");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        let result =
            Sample::new(n, d, values.to_vec()).and_then(|s| Grid::new(d, m).and_then(|g| empirical_copula(&s, &g)));
        match result {
            Ok(f) => {
                *out = Box::into_raw(Box::new(CpGridFunction(f)));
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// A lattice function from `m^d` node values in row-major order.
///
/// # Safety
/// `values` valid for `len` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_function_from_values(
    d: usize,
    m: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut CpGridFunction,
) -> CpStatus {
    guard(|| {
        let Some(values) = slice(values, len) else {
            return fail(CpStatus::NullPointer, "values is null");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        match Grid::new(d, m).and_then(|g| GridFunction::from_values(g, values.to_vec())) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(CpGridFunction(f)));
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `g` null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_function_len(g: *const CpGridFunction) -> usize {
    g.as_ref().map_or(0, |g| g.0.values().len())
}

/// Copies the node values; `len` must equal [`cp_grid_function_len`].
///
/// # Safety
/// `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_function_values(g: *const CpGridFunction, out: *mut f64, len: usize) -> CpStatus {
    guard(|| {
        let Some(g) = g.as_ref() else {
            return fail(CpStatus::NullPointer, "grid function is null");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        let values = g.0.values();
        if len != values.len() {
            return fail(CpStatus::InvalidArgument, format!("len must be {}", values.len()));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(values);
        CpStatus::Ok
    })
}

/// Multilinear interpolation at `u`, exact at nodes.
///
/// # Safety
/// `u` valid for `len` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_function_eval(
    g: *const CpGridFunction,
    u: *const f64,
    len: usize,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let (Some(g), Some(u)) = (g.as_ref(), slice(u, len)) else {
            return fail(CpStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        match g.0.eval(u) {
            Ok(v) => {
                *out = v;
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `g` null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_function_free(g: *mut CpGridFunction) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// `Φ'_C(h)(u) = h(u) - Σ_j C^{(j)}(u) h(u^{(j)})` on the lattice of `h`.
///
/// # Safety
/// Handles live, `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_hadamard_derivative(
    c: *const CpCopula,
    h: *const CpGridFunction,
    out: *mut *mut CpGridFunction,
) -> CpStatus {
    guard(|| {
        let (Some(c), Some(h)) = (c.as_ref(), h.as_ref()) else {
            return fail(CpStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        match hadamard_derivative(&c.0, &h.0) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(CpGridFunction(f)));
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// `sup |a - b|` over all nodes.
///
/// # Safety
/// Handles live, `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_sup_diff(a: *const CpGridFunction, b: *const CpGridFunction, out: *mut f64) -> CpStatus {
    guard(|| {
        let (Some(a), Some(b)) = (a.as_ref(), b.as_ref()) else {
            return fail(CpStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        match a.0.sup_diff(&b.0, Region::full()) {
            Ok(v) => {
                *out = v;
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Skew-normal cdf `Ψ(z; γ)`.
#[no_mangle]
pub extern "C" fn cp_skew_normal_cdf(z: f64, gamma: f64) -> f64 {
    skew_normal_cdf(z, gamma)
}

/// Skew-normal quantile; [`CpStatus::Domain`] unless `0 < u < 1`.
///
/// # Safety
/// `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_skew_normal_quantile(u: f64, gamma: f64, out: *mut f64) -> CpStatus {
    guard(|| {
        if out.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        match skew_normal_quantile(u, gamma) {
            Ok(z) => {
                *out = z;
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Least-squares slope of `log value` on `log n`. `*fitted` is false when a
/// value is not positive, and `*out` is then NaN.
///
/// # Safety
/// `ns` and `values` valid for `len` reads; `out` and `fitted` for one write.
#[no_mangle]
pub unsafe extern "C" fn cp_rate_slope(
    ns: *const f64,
    values: *const f64,
    len: usize,
    out: *mut f64,
    fitted: *mut bool,
) -> CpStatus {
    guard(|| {
        let (Some(ns), Some(values)) = (slice(ns, len), slice(values, len)) else {
            return fail(CpStatus::NullPointer, "null argument");
        };
        if out.is_null() || fitted.is_null() {
            return fail(CpStatus::NullPointer, "out is null");
        }
        let points: Vec<(f64, f64)> = ns.iter().copied().zip(values.iter().copied()).collect();
        match rate_slope(&points) {
            Ok(s) => {
                *out = s.value().unwrap_or(f64::NAN);
                *fitted = s.value().is_some();
                CpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
