//! C interface to `divisio`.
//!
//! Matrices cross the boundary as row-major `double` arrays, with real and
//! imaginary parts in separate buffers. Every entry point returns a
//! [`DivisioStatus`] (or an exit code for [`divisio_run_json`]); the message
//! for the most recent failure on the calling thread is available from
//! [`divisio_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use divisio::cli::{run_text, CommandKind, RunConfig, EXIT_INPUT};
use divisio::division::{find_additive_tps, spectrum_sum_decomposition};
use divisio::random::rng_from_seed;
use divisio::twobody::cm_relative_transform;
use divisio::{
    is_separable, operator_schmidt, CMatrix, CompositeOperator, Error, OperatorSchmidtDecomposition, Tolerances, C64,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivisioStatus {
    Ok = 0,
    NullPointer = 1,
    DimensionMismatch = 2,
    NotHermitian = 3,
    Nonseparable = 4,
    EquivalenceViolation = 5,
    InvalidInput = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

/// A Hermitian operator on a two-factor space.
pub struct DivisioOperator {
    inner: CompositeOperator,
}

/// An operator Schmidt decomposition.
pub struct DivisioSchmidt {
    inner: OperatorSchmidtDecomposition,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(DivisioStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch(_) => DivisioStatus::DimensionMismatch,
            Error::NotHermitian { .. } => DivisioStatus::NotHermitian,
            Error::NonseparableInteraction { .. } | Error::NoSuperselection => DivisioStatus::Nonseparable,
            Error::EquivalenceViolation(_) => DivisioStatus::EquivalenceViolation,
            Error::NotSymplectic { .. } | Error::NotNormalized { .. } | Error::InvalidInput(_) => {
                DivisioStatus::InvalidInput
            }
            Error::EmptyDecomposition | Error::MissingWitnesses => DivisioStatus::Internal,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DivisioStatus::NullPointer, format!("{what} is null"))
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DivisioStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DivisioStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            set_last_error(&panic_message(payload.as_ref()));
            DivisioStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, value: T) {
    if !p.is_null() {
        *p = value;
    }
}

fn order(dim_a: usize, dim_b: usize) -> Result<usize, Fail> {
    dim_a
        .checked_mul(dim_b)
        .and_then(|n| n.checked_mul(n).map(|_| n))
        .ok_or_else(|| {
            Fail(
                DivisioStatus::DimensionMismatch,
                format!("factors {dim_a}*{dim_b} overflow"),
            )
        })
}

fn copy_matrix(m: &CMatrix, re: &mut [f64], im: Option<&mut [f64]>) {
    let n = m.ncols();
    for (k, x) in re.iter_mut().enumerate() {
        *x = m[(k / n, k % n)].re;
    }
    if let Some(im) = im {
        for (k, x) in im.iter_mut().enumerate() {
            *x = m[(k / n, k % n)].im;
        }
    }
}

/// Builds an operator of order `dim_a * dim_b` from row-major parts.
/// `im` may be null for a real matrix. Near-Hermitian input is symmetrized.
///
/// # Safety
/// `re` (and `im` when non-null) must point to `(dim_a*dim_b)^2` doubles;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn divisio_operator_new(
    dim_a: usize,
    dim_b: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut DivisioOperator,
) -> DivisioStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let n = order(dim_a, dim_b)?;
        let re = slice(re, n * n, "re")?;
        let im = if im.is_null() {
            None
        } else {
            Some(slice(im, n * n, "im")?)
        };
        let m = CMatrix::from_fn(n, n, |i, j| C64::new(re[i * n + j], im.map_or(0.0, |im| im[i * n + j])));
        let inner = CompositeOperator::new(dim_a, dim_b, m)?;
        *out = Box::into_raw(Box::new(DivisioOperator { inner }));
        Ok(())
    })
}

/// # Safety
/// `op` must be null or come from [`divisio_operator_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn divisio_operator_free(op: *mut DivisioOperator) {
    if !op.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(op))));
    }
}

/// Order of the operator, 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn divisio_operator_dim(op: *const DivisioOperator) -> usize {
    op.as_ref().map_or(0, |op| op.inner.dim())
}

/// # Safety
/// `op` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn divisio_operator_schmidt(
    op: *const DivisioOperator,
    out: *mut *mut DivisioSchmidt,
) -> DivisioStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let inner = operator_schmidt(&op.inner)?;
        *out = Box::into_raw(Box::new(DivisioSchmidt { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn divisio_schmidt_rank(s: *const DivisioSchmidt) -> usize {
    s.as_ref().map_or(0, |s| s.inner.schmidt_rank())
}

/// Copies the coefficients, in decreasing order, into `out[0..rank]`.
///
/// # Safety
/// `s` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn divisio_schmidt_coefficients(
    s: *const DivisioSchmidt,
    out: *mut f64,
    len: usize,
) -> DivisioStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("s"))?;
        let c = &s.inner.coefficients;
        if len < c.len() {
            return Err(Fail(
                DivisioStatus::BufferTooSmall,
                format!("need {} coefficients", c.len()),
            ));
        }
        slice_mut(out, c.len(), "out")?.copy_from_slice(c);
        Ok(())
    })
}

/// Copies factor `index` of side `side` (0 for the first factor, 1 for the
/// second) as a row-major matrix. `im` may be null.
///
/// # Safety
/// `s` must be a live handle; `re` and `im` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn divisio_schmidt_factor(
    s: *const DivisioSchmidt,
    side: u32,
    index: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> DivisioStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("s"))?;
        let factors = match side {
            0 => &s.inner.factors_a,
            1 => &s.inner.factors_b,
            _ => {
                return Err(Fail(
                    DivisioStatus::InvalidInput,
                    format!("side must be 0 or 1, got {side}"),
                ))
            }
        };
        let m = factors.get(index).ok_or_else(|| {
            Fail(
                DivisioStatus::InvalidInput,
                format!("index {index} beyond rank {}", factors.len()),
            )
        })?;
        let n = m.len();
        if len < n {
            return Err(Fail(DivisioStatus::BufferTooSmall, format!("need {n} entries")));
        }
        let re = slice_mut(re, n, "re")?;
        let im = if im.is_null() {
            None
        } else {
            Some(slice_mut(im, n, "im")?)
        };
        copy_matrix(m, re, im);
        Ok(())
    })
}

/// # Safety
/// `s` must be null or come from [`divisio_operator_schmidt`], freed once.
#[no_mangle]
pub unsafe extern "C" fn divisio_schmidt_free(s: *mut DivisioSchmidt) {
    if !s.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(s))));
    }
}

/// Separability verdict. Non-positive tolerances select the defaults.
/// Disagreement between the equivalent criteria returns
/// `EQUIVALENCE_VIOLATION`.
///
/// # Safety
/// `op` must be a live handle; `separable` and `defect` may be null.
#[no_mangle]
pub unsafe extern "C" fn divisio_is_separable(
    op: *const DivisioOperator,
    seed: u64,
    tol_verdict: f64,
    tol_recon: f64,
    separable: *mut bool,
    defect: *mut f64,
) -> DivisioStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let default = Tolerances::default();
        let pick = |t: f64, d: f64| if t > 0.0 && t.is_finite() { t } else { d };
        let tol = Tolerances {
            verdict: pick(tol_verdict, default.verdict),
            recon: pick(tol_recon, default.recon),
        };
        let verdict = is_separable(&op.inner, &mut rng_from_seed(seed), &tol)?;
        write(separable, verdict.separable);
        write(defect, verdict.commutator_defect);
        Ok(())
    })
}

/// Looks for a tensor-product structure in which the operator has no
/// interaction. On success `*found` is set and, when the buffers are
/// non-null, the global unitary is written row-major (order^2 entries).
///
/// # Safety
/// `op` must be a live handle; non-null buffers must hold order^2 doubles.
#[no_mangle]
pub unsafe extern "C" fn divisio_find_additive_tps(
    op: *const DivisioOperator,
    found: *mut bool,
    residual: *mut f64,
    unitary_re: *mut f64,
    unitary_im: *mut f64,
) -> DivisioStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let inner = &op.inner;
        let division = find_additive_tps(inner.matrix(), inner.dim_a(), inner.dim_b())?;
        write(found, division.is_some());
        let Some(d) = division else {
            return Ok(());
        };
        write(residual, d.residual);
        if !unitary_re.is_null() {
            let u = &d.tps.global_unitary;
            let re = slice_mut(unitary_re, u.len(), "unitary_re")?;
            let im = if unitary_im.is_null() {
                None
            } else {
                Some(slice_mut(unitary_im, u.len(), "unitary_im")?)
            };
            copy_matrix(u, re, im);
        }
        Ok(())
    })
}

/// Splits `da*db` eigenvalues as `a_i + b_k`. On success writes `da` values
/// to `a` and `db` values to `b`.
///
/// # Safety
/// `eigenvalues` must hold `da*db` doubles, `a` and `b` `da` and `db`.
#[no_mangle]
pub unsafe extern "C" fn divisio_spectrum_sum_decomposition(
    eigenvalues: *const f64,
    da: usize,
    db: usize,
    found: *mut bool,
    a: *mut f64,
    b: *mut f64,
) -> DivisioStatus {
    guard(|| {
        let n = da
            .checked_mul(db)
            .ok_or_else(|| Fail(DivisioStatus::DimensionMismatch, "factor product overflows".into()))?;
        let eigs = slice(eigenvalues, n, "eigenvalues")?;
        let split = spectrum_sum_decomposition(eigs, da, db)?;
        write(found, split.is_some());
        if let Some((sa, sb)) = split {
            slice_mut(a, da, "a")?.copy_from_slice(&sa);
            slice_mut(b, db, "b")?.copy_from_slice(&sb);
        }
        Ok(())
    })
}

/// Writes the 4x4 centre-of-mass / relative transform on
/// (x1, x2, p1, p2), row-major, to `out`.
///
/// # Safety
/// `out` must hold 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn divisio_cm_relative_transform(m1: f64, m2: f64, out: *mut f64) -> DivisioStatus {
    guard(|| {
        let t = cm_relative_transform(m1, m2)?;
        let m = &t.matrix;
        let out = slice_mut(out, 16, "out")?;
        for (k, x) in out.iter_mut().enumerate() {
            *x = m[(k / 4, k % 4)];
        }
        Ok(())
    })
}

/// Runs a command-line command on a JSON document and returns its exit code.
/// The report is stored in `*out_json` (free with [`divisio_string_free`]);
/// on input errors (exit code 2) it is null and the message is available
/// from [`divisio_last_error`].
///
/// # Safety
/// `command` and `input_json` must be NUL-terminated; `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn divisio_run_json(
    command: *const c_char,
    input_json: *const c_char,
    seed: u64,
    out_json: *mut *mut c_char,
) -> c_int {
    let mut code = EXIT_INPUT;
    let status = guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        *out_json = ptr::null_mut();
        let text = |p: *const c_char, what: &str| -> Result<String, Fail> {
            if p.is_null() {
                return Err(null(what));
            }
            CStr::from_ptr(p)
                .to_str()
                .map(str::to_owned)
                .map_err(|e| Fail(DivisioStatus::InvalidInput, format!("{what} is not UTF-8: {e}")))
        };
        let kind: CommandKind = text(command, "command")?.parse()?;
        let input = text(input_json, "input_json")?;
        let config = RunConfig {
            seed,
            ..RunConfig::new(kind, "<input>")
        };
        let done = run_text(&config, &input);
        code = done.exit_code;
        if let Some(report) = done.report {
            *out_json = CString::new(report)
                .map_err(|e| Fail(DivisioStatus::Internal, e.to_string()))?
                .into_raw();
        }
        match done.diagnostic {
            Some(msg) if done.exit_code == EXIT_INPUT => Err(Fail(DivisioStatus::InvalidInput, msg)),
            Some(msg) => {
                set_last_error(&msg);
                Ok(())
            }
            None => Ok(()),
        }
    });
    if status == DivisioStatus::Ok {
        code
    } else {
        EXIT_INPUT
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn divisio_string_free(s: *mut c_char) {
    if !s.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(CString::from_raw(s))));
    }
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn divisio_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn divisio_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
