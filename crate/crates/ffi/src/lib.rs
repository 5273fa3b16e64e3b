//! C ABI for `volforms`.
//!
//! Every function returns a [`VfStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! [`vf_last_error_message`]. Objects are opaque handles released with their
//! `*_free` function; strings returned to C are released with
//! [`vf_string_free`]. Panics never cross the boundary: they become
//! `VF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use volforms::chaos::{self, ChaosPoly, ModeVector};
use volforms::expr::Expr;
use volforms::gaussian::{self, GaussianSpec, Param};
use volforms::geometry::{self, Backend};
use volforms::paths::{sample_brownian, DualMeasure, Grid};
use volforms::{wiener, Error, RngStream, Thresholds, VerificationReport};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    /// Not symmetric, not positive definite, singular, ...
    Matrix = 4,
    /// Quadrature, Newton or sampling failed to produce a finite answer.
    Numerical = 5,
    Geometry = 6,
    Unsupported = 7,
    Panic = 8,
}

/// The Gaussian parameter `s`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfParam {
    One = 0,
    I = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfBackend {
    Analytic = 0,
    FiniteDifference = 1,
}

/// Opaque finite Gaussian `(Q, s)`.
pub struct VfGaussianSpec {
    inner: GaussianSpec,
}

/// Opaque polynomial in the Gaussian coordinates `xi_1..xi_K`.
pub struct VfChaosPoly {
    inner: ChaosPoly,
}

/// Opaque verification report.
pub struct VfReport {
    inner: VerificationReport,
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VfStatus {
    match e {
        Error::InvalidArgument(_)
        | Error::GridMismatch { .. }
        | Error::ModeMismatch { .. }
        | Error::OffGrid { .. }
        | Error::GridTooCoarse { .. } => VfStatus::InvalidArgument,
        Error::Parse { .. } => VfStatus::Parse,
        Error::NotSymmetric { .. }
        | Error::NotAntisymmetric { .. }
        | Error::Singular(_)
        | Error::NotPositiveDefinite { .. }
        | Error::DualityViolated { .. } => VfStatus::Matrix,
        Error::NonFiniteSample { .. }
        | Error::NonFiniteDensity { .. }
        | Error::QuadratureNonConvergence { .. }
        | Error::NotConfining(_)
        | Error::NoConvergence { .. } => VfStatus::Numerical,
        Error::Backend(_) | Error::NotClosed { .. } | Error::VanishingDensity { .. } => {
            VfStatus::Geometry
        }
        Error::Unsupported(_) | Error::Io(_) => VfStatus::Unsupported,
    }
}

/// Runs `f`, records any error or panic, and converts to a status.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> VfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VfStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            VfStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_last_error(format!("{what} is not valid UTF-8"));
            VfStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            VfStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("no interior nul")
        .into_raw()
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn vf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn vf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- paths ----

/// Samples Brownian path number `draw` of stream `(seed, stream)` on an
/// `n`-step grid into `out`, which must hold `n + 1` values.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vf_sample_brownian(
    n: usize,
    seed: u64,
    stream: u64,
    draw: u64,
    out: *mut f64,
    out_len: usize,
) -> VfStatus {
    guard(|| {
        let grid = Grid::new(n)?;
        if out_len != n + 1 {
            return Err(Error::InvalidArgument(format!(
                "buffer holds {out_len} values, path has {}",
                n + 1
            ))
            .into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let w = sample_brownian(grid, &mut RngStream::new(seed, stream).draw_rng(draw));
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(w.values());
        Ok(())
    })
}

/// Monte Carlo check of the characteristic functional of the dual measure
/// with atoms `(times[i], weights[i])`.
///
/// # Safety
/// `times` and `weights` must hold `n_atoms` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_verify_characteristic_functional(
    times: *const f64,
    weights: *const f64,
    n_atoms: usize,
    grid_n: usize,
    n_samples: u64,
    seed: u64,
    out: *mut *mut VfReport,
) -> VfStatus {
    guard(|| {
        let t = slice(times, n_atoms, "times")?;
        let w = slice(weights, n_atoms, "weights")?;
        let measure = DualMeasure::new(t.iter().copied().zip(w.iter().copied()).collect())?;
        let r = wiener::verify_characteristic_functional(
            &measure,
            Grid::new(grid_n)?,
            n_samples,
            &RngStream::new(seed, 0),
            &Thresholds::default(),
        )?;
        put(out, Box::into_raw(Box::new(VfReport { inner: r })), "out")
    })
}

// ---- gaussian ----

/// Builds the Gaussian `(Q, s)` from a row-major `dim x dim` matrix.
///
/// # Safety
/// `q` must hold `dim * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_gaussian_spec_new(
    q: *const f64,
    dim: usize,
    s: VfParam,
    out: *mut *mut VfGaussianSpec,
) -> VfStatus {
    guard(|| {
        let q = slice(q, dim * dim, "q")?;
        let m = DMatrix::from_row_slice(dim, dim, q);
        let s = match s {
            VfParam::One => Param::One,
            VfParam::I => Param::I,
        };
        let spec = gaussian::make_spec(m, s)?;
        put(
            out,
            Box::into_raw(Box::new(VfGaussianSpec { inner: spec })),
            "out",
        )
    })
}

/// # Safety
/// `spec` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn vf_gaussian_spec_free(spec: *mut VfGaussianSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// The dual Gaussian `(W, s)`, `W = Q^{-1}`, as a new handle.
///
/// # Safety
/// `spec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_gaussian_dual(
    spec: *const VfGaussianSpec,
    out: *mut *mut VfGaussianSpec,
) -> VfStatus {
    guard(|| {
        let dual = handle(spec, "spec")?.inner.dual()?;
        put(
            out,
            Box::into_raw(Box::new(VfGaussianSpec { inner: dual })),
            "out",
        )
    })
}

/// Normalization `nu` of the volume element, as real and imaginary parts.
///
/// # Safety
/// `spec` must be a live handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_gaussian_normalization(
    spec: *const VfGaussianSpec,
    re: *mut f64,
    im: *mut f64,
) -> VfStatus {
    guard(|| {
        let nu = gaussian::dx_normalization(&handle(spec, "spec")?.inner);
        put(re, nu.re, "re")?;
        put(im, nu.im, "im")
    })
}

/// Fourier transform of the volume element at `xprime` by the closed form
/// (`quad_tol <= 0`) or by quadrature to `quad_tol`.
///
/// # Safety
/// `spec` must be a live handle; `xprime` must hold `len` doubles; `re` and
/// `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_gaussian_fourier(
    spec: *const VfGaussianSpec,
    xprime: *const f64,
    len: usize,
    quad_tol: f64,
    re: *mut f64,
    im: *mut f64,
) -> VfStatus {
    guard(|| {
        let spec = &handle(spec, "spec")?.inner;
        let x = slice(xprime, len, "xprime")?;
        let v = if quad_tol > 0.0 {
            gaussian::fourier_quadrature(spec, x, quad_tol)?.0
        } else {
            gaussian::fourier_closed_form(spec, x)?
        };
        put(re, v.re, "re")?;
        put(im, v.im, "im")
    })
}

/// Right-hand side `exp(-pi s x'^T W x')` of the Fourier identity.
///
/// # Safety
/// As [`vf_gaussian_fourier`].
#[no_mangle]
pub unsafe extern "C" fn vf_gaussian_fourier_rhs(
    spec: *const VfGaussianSpec,
    xprime: *const f64,
    len: usize,
    re: *mut f64,
    im: *mut f64,
) -> VfStatus {
    guard(|| {
        let v = handle(spec, "spec")?
            .inner
            .fourier_rhs(slice(xprime, len, "xprime")?)?;
        put(re, v.re, "re")?;
        put(im, v.im, "im")
    })
}

// ---- chaos ----

/// Parses a polynomial in `xi1..xiK` with `K = n_modes`.
///
/// # Safety
/// `src` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_chaos_poly_parse(
    src: *const c_char,
    n_modes: usize,
    out: *mut *mut VfChaosPoly,
) -> VfStatus {
    guard(|| {
        let p = ChaosPoly::from_poly(Expr::parse(string(src, "src")?, "xi")?.to_poly(n_modes)?)?;
        put(
            out,
            Box::into_raw(Box::new(VfChaosPoly { inner: p })),
            "out",
        )
    })
}

/// # Safety
/// `p` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn vf_chaos_poly_free(p: *mut VfChaosPoly) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn ladder(
    phi: *const f64,
    len: usize,
    p: *const VfChaosPoly,
    out: *mut *mut VfChaosPoly,
    create: bool,
) -> VfStatus {
    guard(|| {
        let phi = ModeVector::new(slice(phi, len, "phi")?.to_vec())?;
        let p = &handle(p, "p")?.inner;
        let q = if create {
            chaos::creation(&phi, p)?
        } else {
            chaos::annihilation(&phi, p)?
        };
        put(
            out,
            Box::into_raw(Box::new(VfChaosPoly { inner: q })),
            "out",
        )
    })
}

/// `a^+(phi) p` as a new handle; `phi` holds the `len` mode coefficients.
///
/// # Safety
/// `phi` must hold `len` doubles; `p` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_chaos_creation(
    phi: *const f64,
    len: usize,
    p: *const VfChaosPoly,
    out: *mut *mut VfChaosPoly,
) -> VfStatus {
    ladder(phi, len, p, out, true)
}

/// `a(phi) p` as a new handle.
///
/// # Safety
/// As [`vf_chaos_creation`].
#[no_mangle]
pub unsafe extern "C" fn vf_chaos_annihilation(
    phi: *const f64,
    len: usize,
    p: *const VfChaosPoly,
    out: *mut *mut VfChaosPoly,
) -> VfStatus {
    ladder(phi, len, p, out, false)
}

/// Exact `E[p(xi)]` for i.i.d. standard normal `xi`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_chaos_expectation(p: *const VfChaosPoly, out: *mut f64) -> VfStatus {
    guard(|| {
        put(
            out,
            chaos::gaussian_expectation(&handle(p, "p")?.inner),
            "out",
        )
    })
}

/// Coefficient of the monomial with the given exponents (`len` = K).
///
/// # Safety
/// `p` must be a live handle; `exponents` must hold `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_chaos_coeff(
    p: *const VfChaosPoly,
    exponents: *const u32,
    len: usize,
    out: *mut f64,
) -> VfStatus {
    guard(|| {
        let p = &handle(p, "p")?.inner;
        if len != p.n_modes() {
            return Err(Error::ModeMismatch {
                expected: p.n_modes(),
                found: len,
            }
            .into());
        }
        if exponents.is_null() {
            return Err(Failure::Null("exponents"));
        }
        let e = std::slice::from_raw_parts(exponents, len).to_vec();
        put(out, p.poly().coeff(&e), "out")
    })
}

/// Text form of the polynomial; free with [`vf_string_free`].
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_chaos_poly_to_string(
    p: *const VfChaosPoly,
    out: *mut *mut c_char,
) -> VfStatus {
    guard(|| {
        put(
            out,
            into_c_string(handle(p, "p")?.inner.poly().to_string()),
            "out",
        )
    })
}

/// Exact commutator checks on `n_cases` random cases.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_verify_commutators(
    n_modes: usize,
    degree_cap: u32,
    n_cases: usize,
    seed: u64,
    out: *mut *mut VfReport,
) -> VfStatus {
    guard(|| {
        let r = chaos::verify_commutators(n_modes, degree_cap, n_cases, &RngStream::new(seed, 0))?;
        put(out, Box::into_raw(Box::new(VfReport { inner: r })), "out")
    })
}

// ---- geometry ----

/// Pfaffian of a row-major antisymmetric `n x n` matrix (`n` even, `<= 8`).
///
/// # Safety
/// `a` must hold `n * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_pfaffian(a: *const f64, n: usize, out: *mut f64) -> VfStatus {
    guard(|| {
        let m = DMatrix::from_row_slice(n, n, slice(a, n * n, "a")?);
        put(out, geometry::pfaffian(&m)?, "out")
    })
}

/// Divergence identity for a random polynomial field of the given degree on
/// a built-in manifold (`flat2`, `sphere2`, ...).
///
/// # Safety
/// `manifold` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_verify_divergence(
    manifold: *const c_char,
    degree: u32,
    n_points: usize,
    seed: u64,
    backend: VfBackend,
    out: *mut *mut VfReport,
) -> VfStatus {
    guard(|| {
        let m = geometry::builtin(string(manifold, "manifold")?)?;
        let stream = RngStream::new(seed, 0);
        let v = geometry::random_poly_field(m.dim(), degree, &mut stream.child(0).draw_rng(0));
        let backend = match backend {
            VfBackend::Analytic => Backend::Analytic,
            VfBackend::FiniteDifference => Backend::FiniteDifference,
        };
        let r = geometry::verify_divergence_identity(&m, &v, n_points, &stream, backend)?;
        put(out, Box::into_raw(Box::new(VfReport { inner: r })), "out")
    })
}

// ---- reports ----

/// # Safety
/// `r` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn vf_report_free(r: *mut VfReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Whether every check passed (1) or not (0).
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_report_pass(r: *const VfReport, out: *mut i32) -> VfStatus {
    guard(|| put(out, i32::from(handle(r, "report")?.inner.pass), "out"))
}

/// Headline `|lhs - rhs|` of the report.
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_report_discrepancy(r: *const VfReport, out: *mut f64) -> VfStatus {
    guard(|| put(out, handle(r, "report")?.inner.discrepancy, "out"))
}

/// The report as JSON; free with [`vf_string_free`].
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_report_to_json(r: *const VfReport, out: *mut *mut c_char) -> VfStatus {
    guard(|| {
        put(
            out,
            into_c_string(handle(r, "report")?.inner.to_json()),
            "out",
        )
    })
}
