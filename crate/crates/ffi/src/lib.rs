//! C interface to the quasitubal library.
//!
//! Objects live behind opaque handles that the caller frees with the matching
//! `*_free` function. Every fallible call returns a [`QttStatus`]; on failure
//! [`qtt_last_error`] describes the most recent error on the calling thread.
//!
//! Complex matrices cross the boundary as interleaved `(re, im)` doubles in
//! row-major order, so an `m x p` slice occupies `2*m*p` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use quasitubal::decomp::{self, Limit};
use quasitubal::io::{self, QttObject};
use quasitubal::stream::{self, BandSchedule, QtOracle};
use quasitubal::{CMat, ComponentList, Error, HNorm, QSvd, QtTensor, C64};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QttStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// The result has infinite Hilbert-Schmidt norm.
    NotInH = 4,
    Numerical = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

/// Tensor over all of Z, stored as a band of slices plus a constant tail.
pub struct QttTensor(QtTensor);

/// q-SVD factors `U`, `S`, `V`.
pub struct QttQsvd(QSvd);

/// Ordered rank-1 components.
pub struct QttComponents(ComponentList);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(e: &Error) -> QttStatus {
    match e {
        Error::DimensionMismatch(_) | Error::NonSquare { .. } => QttStatus::DimensionMismatch,
        Error::NotInH => QttStatus::NotInH,
        Error::Invalid(_) | Error::RankOutOfRange { .. } | Error::InfiniteCandidates(_) => QttStatus::InvalidArgument,
        Error::Io(_) => QttStatus::Io,
        Error::BadMagic { .. } | Error::Version(_) | Error::Truncated { .. } | Error::Header(_) | Error::Json(_) | Error::Csv(_) => {
            QttStatus::Format
        }
        _ => QttStatus::Numerical,
    }
}

struct Fail(QttStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QttStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(QttStatus::InvalidArgument, msg.into())
}

/// Run `f`, turning errors and panics into a status plus thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QttStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QttStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            QttStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn read_mat(data: *const f64, m: usize, p: usize) -> CMat {
    let raw = std::slice::from_raw_parts(data, 2 * m * p);
    CMat::from_fn(m, p, |i, j| {
        let at = 2 * (i * p + j);
        C64::new(raw[at], raw[at + 1])
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qtt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qtt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a tensor from `n_slices` band slices starting at index `lo` and an
/// optional tail slice (`NULL` for zero).
///
/// # Safety
/// `band` must hold `2*m*p*n_slices` doubles; `tail`, when non-null, `2*m*p`.
#[no_mangle]
pub unsafe extern "C" fn qtt_tensor_new(
    m: usize,
    p: usize,
    lo: i64,
    n_slices: usize,
    band: *const f64,
    tail: *const f64,
    out: *mut *mut QttTensor,
) -> QttStatus {
    guard(|| {
        if m == 0 || p == 0 {
            return Err(invalid("m and p must be positive"));
        }
        if band.is_null() && n_slices > 0 {
            return Err(null("band"));
        }
        let stride = 2 * m * p;
        let slices = (0..n_slices).map(|k| read_mat(band.add(k * stride), m, p)).collect();
        let tail = if tail.is_null() { CMat::zeros(m, p) } else { read_mat(tail, m, p) };
        put(out, QttTensor(QtTensor::new(lo, slices, tail)?))
    })
}

/// # Safety
/// `t` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn qtt_tensor_free(t: *mut QttTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Shape and stored band. `n_slices` is 0 when only the tail is stored.
///
/// # Safety
/// `t` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn qtt_tensor_info(
    t: *const QttTensor,
    m: *mut usize,
    p: *mut usize,
    lo: *mut i64,
    n_slices: *mut usize,
) -> QttStatus {
    guard(|| {
        let x = &get(t, "tensor")?.0;
        let (mm, pp) = x.shape();
        let (l, n) = match x.band() {
            Some((a, b)) => (a, (b - a + 1) as usize),
            None => (x.lo(), 0),
        };
        for (ptr, v) in [(m, mm), (p, pp), (n_slices, n)] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        if !lo.is_null() {
            *lo = l;
        }
        Ok(())
    })
}

/// Copy slice `k` (any integer; outside the band it is the tail) into `buf`.
///
/// # Safety
/// `buf` must have room for `2*m*p` doubles.
#[no_mangle]
pub unsafe extern "C" fn qtt_tensor_slice(t: *const QttTensor, k: i64, buf: *mut f64) -> QttStatus {
    guard(|| {
        let x = &get(t, "tensor")?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let s = x.slice(k);
        let p = s.ncols();
        for i in 0..s.nrows() {
            for j in 0..p {
                *buf.add(2 * (i * p + j)) = s[(i, j)].re;
                *buf.add(2 * (i * p + j) + 1) = s[(i, j)].im;
            }
        }
        Ok(())
    })
}

/// Hilbert-Schmidt norm; returns `NotInH` when the tail is nonzero.
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qtt_tensor_h_norm(t: *const QttTensor, out: *mut f64) -> QttStatus {
    guard(|| {
        let x = &get(t, "tensor")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        match x.h_norm() {
            HNorm::Finite(v) => {
                *out = v;
                Ok(())
            }
            HNorm::NotInH => Err(Fail(QttStatus::NotInH, "tensor has a nonzero tail".into())),
        }
    })
}

/// Operator norm: the largest singular value over all slices.
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qtt_tensor_op_norm(t: *const QttTensor, out: *mut f64) -> QttStatus {
    guard(|| {
        let x = &get(t, "tensor")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = x.op_norm();
        Ok(())
    })
}

/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_tensor_write(t: *const QttTensor, path: *const c_char) -> QttStatus {
    guard(|| {
        let x = get(t, "tensor")?.0.clone();
        io::write_qtt(&path_arg(path)?, &QttObject::Tensor(x))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qtt_tensor_read(path: *const c_char, out: *mut *mut QttTensor) -> QttStatus {
    guard(|| put(out, QttTensor(io::read_tensor(&path_arg(path)?)?)))
}

/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_qsvd(t: *const QttTensor, out: *mut *mut QttQsvd) -> QttStatus {
    guard(|| put(out, QttQsvd(decomp::qsvd(&get(t, "tensor")?.0)?)))
}

/// # Safety
/// `q` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn qtt_qsvd_free(q: *mut QttQsvd) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Number of nonzero singular tubes.
///
/// # Safety
/// `q` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qtt_qsvd_qrank(q: *const QttQsvd, out: *mut usize) -> QttStatus {
    guard(|| {
        let q = &get(q, "qsvd")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = decomp::qrank(q);
        Ok(())
    })
}

/// `U S V^H` as a new tensor.
///
/// # Safety
/// `q` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_qsvd_recompose(q: *const QttQsvd, out: *mut *mut QttTensor) -> QttStatus {
    guard(|| put(out, QttTensor(get(q, "qsvd")?.0.recompose())))
}

/// Keep the `n` largest rank-1 components; needs a zero singular tail.
///
/// # Safety
/// `q` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_truncate_explicit(q: *const QttQsvd, n: usize, out: *mut *mut QttTensor) -> QttStatus {
    guard(|| {
        let (t, _) = decomp::truncate_explicit(&get(q, "qsvd")?.0, n)?;
        put(out, QttTensor(t))
    })
}

/// Keep the first `r` singular tubes.
///
/// # Safety
/// `q` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_truncate_qrank(q: *const QttQsvd, r: usize, out: *mut *mut QttTensor) -> QttStatus {
    guard(|| put(out, QttTensor(decomp::truncate_qrank(&get(q, "qsvd")?.0, r)?)))
}

/// # Safety
/// `q` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_qsvd_write(q: *const QttQsvd, path: *const c_char) -> QttStatus {
    guard(|| {
        let q = get(q, "qsvd")?.0.clone();
        io::write_qtt(&path_arg(path)?, &QttObject::QSvd(q))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qtt_qsvd_read(path: *const c_char, out: *mut *mut QttQsvd) -> QttStatus {
    guard(|| put(out, QttQsvd(io::read_qsvd(&path_arg(path)?)?)))
}

/// Leading `n` components in global order; `n = 0` takes all of them.
///
/// # Safety
/// `q` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_components(q: *const QttQsvd, n: usize, out: *mut *mut QttComponents) -> QttStatus {
    guard(|| {
        let limit = if n == 0 { Limit::AllFinite } else { Limit::Count(n) };
        put(out, QttComponents(decomp::order_components(&get(q, "qsvd")?.0, limit)?))
    })
}

/// Streaming extraction of the `n` leading components of a tail-zero tensor,
/// reading slices only as band certificates require.
///
/// # Safety
/// `t` must be a live handle; `slices_evaluated` may be null.
#[no_mangle]
pub unsafe extern "C" fn qtt_extract(
    t: *const QttTensor,
    n: usize,
    out: *mut *mut QttComponents,
    slices_evaluated: *mut usize,
) -> QttStatus {
    guard(|| {
        let oracle = QtOracle::new(get(t, "tensor")?.0.clone())?;
        let rep = stream::extract_top_q(&oracle, n, BandSchedule::default())?;
        if !slices_evaluated.is_null() {
            *slices_evaluated = rep.slices_evaluated;
        }
        put(out, QttComponents(rep.components))
    })
}

/// # Safety
/// `c` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn qtt_components_free(c: *mut QttComponents) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of components; 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_components_len(c: *const QttComponents) -> usize {
    c.as_ref().map_or(0, |c| c.0.len())
}

/// Singular value, slice index `t` and in-slice index `l` of component `i`.
///
/// # Safety
/// `c` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn qtt_components_get(c: *const QttComponents, i: usize, sigma: *mut f64, t: *mut i64, l: *mut usize) -> QttStatus {
    guard(|| {
        let list = &get(c, "components")?.0;
        let comp = list
            .components
            .get(i)
            .ok_or_else(|| invalid(format!("index {i} out of range {}", list.len())))?;
        if !sigma.is_null() {
            *sigma = comp.sigma;
        }
        if !t.is_null() {
            *t = comp.t;
        }
        if !l.is_null() {
            *l = comp.l;
        }
        Ok(())
    })
}

/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qtt_components_write(c: *const QttComponents, path: *const c_char) -> QttStatus {
    guard(|| {
        let list = get(c, "components")?.0.clone();
        io::write_qtt(&path_arg(path)?, &QttObject::Components(list))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qtt_components_read(path: *const c_char, out: *mut *mut QttComponents) -> QttStatus {
    guard(|| put(out, QttComponents(io::read_components(&path_arg(path)?)?)))
}
