//! C interface to `graphon_sde`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_*`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`GsStatus`]; on failure [`gs_last_error`] describes it. Results
//! are written through out-pointers, which are left untouched on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use graphon_sde::graphon::{discretize, lp_norm, Graphon, GridSpec, Quadrature, SingularPolicy, StepGraphon};
use graphon_sde::graphs::{deterministic_graph, sample_w_random, GraphMode, InteractionGraph};
use graphon_sde::harness::{emit_report, run_experiment, ExperimentConfig};
use graphon_sde::measures::{dbl_estimate, dbl_exact, Dictionary, DiscreteMeasure};
use graphon_sde::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    /// Mismatched dimensions, masses, shapes or time grids.
    Shape = 4,
    /// The kernel is infinite on the grid; pick another singular policy.
    Singular = 5,
    /// Input exceeds the exact solver's support cap.
    SupportTooLarge = 6,
    /// A numerical abort: non-finite state, divergent norm, degenerate fit.
    Numerical = 7,
    /// Malformed JSON, text or configuration.
    Parse = 8,
    Io = 9,
    Panic = 10,
}

impl From<&Error> for GsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::KeyCollision(_) | Error::WeightExceedsOne { .. } => {
                GsStatus::InvalidParameter
            }
            Error::SingularGrid { .. } => GsStatus::Singular,
            Error::SupportTooLarge { .. } => GsStatus::SupportTooLarge,
            Error::DivergentNorm { .. } | Error::NonFiniteState { .. } | Error::DegenerateFit(_) => {
                GsStatus::Numerical
            }
            Error::NonSymmetric { .. }
            | Error::NonZeroDiagonal(_)
            | Error::DimensionMismatch { .. }
            | Error::MassMismatch(..)
            | Error::WrongDimension { .. }
            | Error::GridMismatch
            | Error::ShapeMismatch(_) => GsStatus::Shape,
            Error::Config(_) | Error::Parse(_) | Error::Json(_) => GsStatus::Parse,
            Error::Io { .. } => GsStatus::Io,
        }
    }
}

/// How kernels that are infinite on the grid are discretized.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GsSingularPolicy {
    Reject = 0,
    MidpointShift = 1,
    Clamp = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GsGraphMode {
    Directed = 0,
    Symmetric = 1,
}

/// A graphon `g: [0,1]^2 -> [0, inf]`.
pub struct GsGraphon(Graphon);

/// A step graphon on a partition of `[0, 1]`.
pub struct GsStepGraphon(StepGraphon);

/// A weighted interaction graph on `N` vertices.
pub struct GsGraph(InteractionGraph);

/// A finite nonnegative measure on `R^d`.
pub struct GsMeasure(DiscreteMeasure);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(GsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(GsStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(GsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn href<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(GsStatus::Parse, "string contains a NUL byte".into()))
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn gs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a graphon descriptor such as `{"kind": "power_law", "a": 0.2}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_graphon_from_json(json: *const c_char, out_graphon: *mut *mut GsGraphon) -> GsStatus {
    guard(|| {
        let g = Graphon::from_json(text(json, "json")?)?;
        *out(out_graphon, "out_graphon")? = boxed(GsGraphon(g));
        Ok(())
    })
}

/// Kernel value at `(x, y)`; NaN for a null handle.
///
/// # Safety
/// `g` must be null or a live graphon handle.
#[no_mangle]
pub unsafe extern "C" fn gs_graphon_eval(g: *const GsGraphon, x: f64, y: f64) -> f64 {
    g.as_ref().map_or(f64::NAN, |g| g.0.eval(x, y))
}

/// `||g||_p`. Closed forms are used when known unless `numeric` is set.
///
/// # Safety
/// `g` must be a live graphon handle and `out_norm` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_graphon_lp_norm(g: *const GsGraphon, p: f64, numeric: bool, out_norm: *mut f64) -> GsStatus {
    guard(|| {
        let g = href(g, "graphon")?;
        let quad = if numeric { Quadrature::numeric() } else { Quadrature::default() };
        *out(out_norm, "out_norm")? = lp_norm(&g.0, p, &quad)?;
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_graphon_free(g: *mut GsGraphon) {
    free(g)
}

/// Discretizes `g` on the regular `N`-point grid. `cap` is only read for
/// the clamp policy.
///
/// # Safety
/// `g` must be a live graphon handle and `out_step` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_graphon_discretize(
    g: *const GsGraphon,
    n: usize,
    policy: GsSingularPolicy,
    cap: f64,
    out_step: *mut *mut GsStepGraphon,
) -> GsStatus {
    guard(|| {
        let g = href(g, "graphon")?;
        let policy = match policy {
            GsSingularPolicy::Reject => SingularPolicy::Reject,
            GsSingularPolicy::MidpointShift => SingularPolicy::MidpointShift,
            GsSingularPolicy::Clamp => SingularPolicy::Clamp { cap },
        };
        let step = discretize(&g.0, &GridSpec::new(n)?, policy)?;
        *out(out_step, "out_step")? = boxed(GsStepGraphon(step));
        Ok(())
    })
}

/// Number of blocks; 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live step graphon handle.
#[no_mangle]
pub unsafe extern "C" fn gs_step_graphon_blocks(s: *const GsStepGraphon) -> usize {
    s.as_ref().map_or(0, |s| s.0.blocks())
}

/// Block value `(i, j)`.
///
/// # Safety
/// `s` must be a live step graphon handle and `out_value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_step_graphon_value(
    s: *const GsStepGraphon,
    i: usize,
    j: usize,
    out_value: *mut f64,
) -> GsStatus {
    guard(|| {
        let s = href(s, "step graphon")?;
        let k = s.0.blocks();
        if i >= k || j >= k {
            return Err(Failure(GsStatus::InvalidParameter, format!("block ({i}, {j}) out of range for {k} blocks")));
        }
        *out(out_value, "out_value")? = s.0.value(i, j);
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_step_graphon_free(s: *mut GsStepGraphon) {
    free(s)
}

/// W-random graph on the regular grid with edge probabilities
/// `min(beta g(x_i, x_j), 1)`.
///
/// # Safety
/// `g` must be a live graphon handle and `out_graph` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_sample(
    g: *const GsGraphon,
    n: usize,
    beta: f64,
    mode: GsGraphMode,
    seed: u64,
    out_graph: *mut *mut GsGraph,
) -> GsStatus {
    guard(|| {
        let g = href(g, "graphon")?;
        let mode = match mode {
            GsGraphMode::Directed => GraphMode::DirectedIndependent,
            GsGraphMode::Symmetric => GraphMode::SymmetricSimple,
        };
        *out(out_graph, "out_graph")? = boxed(GsGraph(sample_w_random(&g.0, n, beta, mode, seed)?));
        Ok(())
    })
}

/// Weighted graph `zeta_ij = beta g_N(x_i, x_j)`.
///
/// # Safety
/// `s` must be a live step graphon handle and `out_graph` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_deterministic(
    s: *const GsStepGraphon,
    n: usize,
    beta: f64,
    out_graph: *mut *mut GsGraph,
) -> GsStatus {
    guard(|| {
        let s = href(s, "step graphon")?;
        *out(out_graph, "out_graph")? = boxed(GsGraph(deterministic_graph(&s.0, n, beta)?));
        Ok(())
    })
}

/// Vertex count; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_vertices(g: *const GsGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n())
}

/// Number of nonzero weights; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_nnz(g: *const GsGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.nnz())
}

/// Weight of `(i, j)`.
///
/// # Safety
/// `g` must be a live graph handle and `out_weight` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_weight(g: *const GsGraph, i: usize, j: usize, out_weight: *mut f64) -> GsStatus {
    guard(|| {
        let g = href(g, "graph")?;
        let n = g.0.n();
        if i >= n || j >= n {
            return Err(Failure(GsStatus::InvalidParameter, format!("vertex pair ({i}, {j}) out of range for N = {n}")));
        }
        *out(out_weight, "out_weight")? = g.0.weight(i, j);
        Ok(())
    })
}

/// Text form (`N beta mode` header, then `i j w` lines). Free the result
/// with [`gs_string_free`].
///
/// # Safety
/// `g` must be a live graph handle and `out_text` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_to_text(g: *const GsGraph, out_text: *mut *mut c_char) -> GsStatus {
    guard(|| {
        let g = href(g, "graph")?;
        *out(out_text, "out_text")? = owned_string(g.0.to_text())?;
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_graph_free(g: *mut GsGraph) {
    free(g)
}

/// Measure with `len` atoms in `R^dim`. `atoms` holds `len * dim` values,
/// row-major; `weights` holds `len` nonnegative masses.
///
/// # Safety
/// `atoms` and `weights` must point to arrays of the stated lengths (they
/// may be null when `len` is 0) and `out_measure` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gs_measure_new(
    dim: usize,
    atoms: *const f64,
    weights: *const f64,
    len: usize,
    out_measure: *mut *mut GsMeasure,
) -> GsStatus {
    guard(|| {
        let (a, w) = if len == 0 {
            (Vec::new(), Vec::new())
        } else {
            if atoms.is_null() {
                return Err(null("atoms"));
            }
            if weights.is_null() {
                return Err(null("weights"));
            }
            let total = len
                .checked_mul(dim)
                .ok_or_else(|| Failure(GsStatus::InvalidParameter, "len * dim overflows".into()))?;
            (
                std::slice::from_raw_parts(atoms, total).to_vec(),
                std::slice::from_raw_parts(weights, len).to_vec(),
            )
        };
        *out(out_measure, "out_measure")? = boxed(GsMeasure(DiscreteMeasure::from_flat(dim, a, w)?));
        Ok(())
    })
}

/// Atom count; 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live measure handle.
#[no_mangle]
pub unsafe extern "C" fn gs_measure_len(m: *const GsMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// Ambient dimension; 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live measure handle.
#[no_mangle]
pub unsafe extern "C" fn gs_measure_dim(m: *const GsMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_measure_free(m: *mut GsMeasure) {
    free(m)
}

/// Exact bounded-Lipschitz distance.
///
/// # Safety
/// `mu` and `nu` must be live measure handles and `out_distance` valid.
#[no_mangle]
pub unsafe extern "C" fn gs_dbl_exact(mu: *const GsMeasure, nu: *const GsMeasure, out_distance: *mut f64) -> GsStatus {
    guard(|| {
        let (mu, nu) = (href(mu, "mu")?, href(nu, "nu")?);
        *out(out_distance, "out_distance")? = dbl_exact(&mu.0, &nu.0)?;
        Ok(())
    })
}

/// Lower estimate of the bounded-Lipschitz distance over a seeded
/// dictionary of test functions, for supports too large to solve exactly.
///
/// # Safety
/// `mu` and `nu` must be live measure handles and `out_distance` valid.
#[no_mangle]
pub unsafe extern "C" fn gs_dbl_estimate(
    mu: *const GsMeasure,
    nu: *const GsMeasure,
    seed: u64,
    out_distance: *mut f64,
) -> GsStatus {
    guard(|| {
        let (mu, nu) = (href(mu, "mu")?, href(nu, "nu")?);
        let dict = Dictionary::standard(&mu.0, &nu.0, 16, 32, seed);
        *out(out_distance, "out_distance")? = dbl_estimate(&mu.0, &nu.0, &dict)?;
        Ok(())
    })
}

/// Runs the experiment described by `config_json` and writes report.csv,
/// meta.json, summary.json and plot.svg into `out_dir`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gs_experiment_run(config_json: *const c_char, out_dir: *const c_char) -> GsStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(text(config_json, "config_json")?)?;
        let dir = text(out_dir, "out_dir")?;
        let report = run_experiment(&cfg)?;
        emit_report(&report, &cfg, Path::new(dir))?;
        Ok(())
    })
}
