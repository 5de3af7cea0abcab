//! C ABI for homotomo.
//!
//! Every fallible function returns a status code (`HOMOTOMO_OK` on success)
//! and writes results through out-pointers. After a failure,
//! [`homotomo_last_error`] returns a description of the most recent error on
//! the calling thread. Handles are opaque and must be released with their
//! `_free` function; passing NULL to a `_free` function is a no-op.
//!
//! Angles are in radians. Complex values are split into `re`/`im` arrays.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use homotomo::cli::{read_dataset, read_json, write_json};
use homotomo::error::Error;
use homotomo::fsmatrix::{DensityMatrixFS, OutputGrid};
use homotomo::measurement::{DetectorModel, SumFieldDataset};
use homotomo::quadrature::{compare_matrices, oracle_grid, oracle_matrix_element, FSMatrixPoint};
use homotomo::reconstruction::{
    reconstruct_grid, CharFnSource, EmpiricalCharFn, ReconstructOptions, RegularizationFilter,
};
use homotomo::state::{build_state, characteristic_function, DensityOperatorFock, FieldScale, StateSpec};
use num_complex::Complex64;

/// Status codes; the first three match the command-line exit codes.
pub const HOMOTOMO_OK: i32 = 0;
/// Numerical or coverage failure during a computation.
pub const HOMOTOMO_ERR_RUNTIME: i32 = 1;
/// Invalid arguments, configuration, or file contents.
pub const HOMOTOMO_ERR_INVALID: i32 = 2;
/// A required pointer argument was NULL.
pub const HOMOTOMO_ERR_NULL: i32 = 4;
/// An internal panic was caught at the boundary.
pub const HOMOTOMO_ERR_PANIC: i32 = 5;

/// Truncated N-mode density operator in the Fock basis.
pub struct HomotomoState {
    inner: DensityOperatorFock,
}

/// Sum-field dataset loaded from disk.
pub struct HomotomoDataset {
    inner: SumFieldDataset,
}

/// Density matrix in the field-strength basis on an output grid.
pub struct HomotomoMatrix {
    inner: DensityMatrixFS,
}

/// Invariant residuals of a matrix; NaN when the grid has no zero offset.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct HomotomoResiduals {
    pub hermiticity: f64,
    pub diagonal_imag_max: f64,
    pub diagonal_negativity: f64,
    pub diagonal_normalization: f64,
}

/// Reconstruction settings. Zero or negative fields select defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct HomotomoReconstructOptions {
    /// Efficiency to compensate for; defaults to the data's.
    pub eta: f64,
    /// Radial filter cutoff; no filter when <= 0.
    pub y_cut: f64,
    /// Outer quadrature nodes per axis.
    pub nodes: usize,
    /// Half-width of the outer quadrature box.
    pub y_max: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HOMOTOMO_OK,
        Ok(Err(Failure::Lib(e))) => {
            let code = e.exit_code();
            set_error(e.to_string());
            code
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} must not be NULL"));
            HOMOTOMO_ERR_NULL
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            HOMOTOMO_ERR_PANIC
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::invalid(format!("{what} is not valid UTF-8"))))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, Error> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        key: format!("{what}.{}", e.path()),
        message: e.inner().to_string(),
    })
}

/// Description of the last error on this thread, or NULL if none occurred.
/// The string stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn homotomo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn homotomo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a state from a JSON state spec, e.g.
/// `{"n_modes":2,"truncation_dim":8,"kind":{"type":"vacuum"}}`.
#[no_mangle]
pub unsafe extern "C" fn homotomo_state_from_json(json: *const c_char, out: *mut *mut HomotomoState) -> i32 {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let spec: StateSpec = parse_json(str_arg(json, "json")?, "state")?;
        spec.validate()?;
        let inner = build_state(&spec)?;
        *out = Box::into_raw(Box::new(HomotomoState { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_state_free(state: *mut HomotomoState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_state_n_modes(state: *const HomotomoState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.n_modes())
}

/// Ψ(z, ψ) = Tr[ρ̂ Π_k D_k(i z_k |F| e^{iψ_k})] for `n` modes.
#[no_mangle]
pub unsafe extern "C" fn homotomo_characteristic_function(
    state: *const HomotomoState,
    z: *const f64,
    psi: *const f64,
    n: usize,
    field_scale: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> i32 {
    guard(|| {
        let s = nonnull(state, "state")?;
        let z = slice_arg(z, n, "z")?;
        let psi = slice_arg(psi, n, "psi")?;
        let (re, im) = (out_ptr(out_re, "out_re")?, out_ptr(out_im, "out_im")?);
        let v = characteristic_function(&s.inner, z, psi, FieldScale::new(field_scale)?)?;
        (*re, *im) = (v.re, v.im);
        Ok(())
    })
}

/// Exact ⟨ℱ−ℱ′, φ|ρ̂|ℱ+ℱ′, φ⟩ for one point with `n` modes.
#[no_mangle]
pub unsafe extern "C" fn homotomo_oracle_element(
    state: *const HomotomoState,
    center: *const f64,
    offset: *const f64,
    phases: *const f64,
    n: usize,
    field_scale: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> i32 {
    guard(|| {
        let s = nonnull(state, "state")?;
        let pt = FSMatrixPoint::new(
            slice_arg(center, n, "center")?.to_vec(),
            slice_arg(offset, n, "offset")?.to_vec(),
            slice_arg(phases, n, "phases")?.to_vec(),
        );
        let (re, im) = (out_ptr(out_re, "out_re")?, out_ptr(out_im, "out_im")?);
        let v = oracle_matrix_element(&s.inner, &pt, FieldScale::new(field_scale)?)?;
        (*re, *im) = (v.re, v.im);
        Ok(())
    })
}

unsafe fn grid_and_phases(
    grid_json: *const c_char,
    phases: *const f64,
    n: usize,
    scale: FieldScale,
) -> Result<(OutputGrid, Vec<f64>), Failure> {
    let grid = if grid_json.is_null() {
        OutputGrid::default_for(n, scale)
    } else {
        let g: OutputGrid = parse_json(str_arg(grid_json, "grid_json")?, "grid")?;
        g.validate()?;
        g
    };
    let phases = if phases.is_null() {
        vec![0.0; n]
    } else {
        std::slice::from_raw_parts(phases, n).to_vec()
    };
    Ok((grid, phases))
}

fn boxed_matrix(out: &mut *mut HomotomoMatrix, m: DensityMatrixFS) {
    *out = Box::into_raw(Box::new(HomotomoMatrix { inner: m }));
}

/// Exact matrix on an output grid. `grid_json` is an object with `centers`
/// and `offsets` (one axis per mode) or NULL for the default grid;
/// `phases` has one entry per mode or is NULL for zeros.
#[no_mangle]
pub unsafe extern "C" fn homotomo_oracle_grid(
    state: *const HomotomoState,
    grid_json: *const c_char,
    phases: *const f64,
    field_scale: f64,
    out: *mut *mut HomotomoMatrix,
) -> i32 {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = nonnull(state, "state")?;
        let scale = FieldScale::new(field_scale)?;
        let (grid, phases) = grid_and_phases(grid_json, phases, s.inner.n_modes(), scale)?;
        boxed_matrix(out, oracle_grid(&s.inner, &grid, &phases, scale)?);
        Ok(())
    })
}

fn options(
    o: Option<&HomotomoReconstructOptions>,
    n: usize,
    scale: FieldScale,
    data_eta: f64,
) -> Result<ReconstructOptions, Error> {
    let mut r = ReconstructOptions::default_for(n, scale);
    let o = o.copied().unwrap_or_default();
    r.detector = DetectorModel::new(if o.eta > 0.0 { o.eta } else { data_eta })?;
    if o.y_cut > 0.0 {
        r.filter = Some(RegularizationFilter::hard(o.y_cut)?);
    }
    if o.nodes > 0 {
        r.quadrature.nodes = o.nodes;
    }
    if o.y_max > 0.0 {
        r.quadrature.y_max = o.y_max;
    }
    Ok(r)
}

/// Reconstruction from the exact characteristic function of a state. With
/// `opts->eta` < 1 the data are degraded by that efficiency and compensated.
/// `opts` may be NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn homotomo_reconstruct_analytic(
    state: *const HomotomoState,
    grid_json: *const c_char,
    phases: *const f64,
    field_scale: f64,
    opts: *const HomotomoReconstructOptions,
    out: *mut *mut HomotomoMatrix,
) -> i32 {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = nonnull(state, "state")?;
        let n = s.inner.n_modes();
        let scale = FieldScale::new(field_scale)?;
        let (grid, phases) = grid_and_phases(grid_json, phases, n, scale)?;
        let o = options(opts.as_ref(), n, scale, 1.0)?;
        let source = CharFnSource::Analytic {
            state: &s.inner,
            detector: (o.detector.eta() < 1.0).then_some(o.detector),
        };
        boxed_matrix(out, reconstruct_grid(&source, &grid, &phases, &o, scale)?);
        Ok(())
    })
}

/// Loads a dataset directory written by `homotomo simulate`.
#[no_mangle]
pub unsafe extern "C" fn homotomo_dataset_read(dir: *const c_char, out: *mut *mut HomotomoDataset) -> i32 {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let (inner, _) = read_dataset(Path::new(str_arg(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(HomotomoDataset { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_dataset_free(ds: *mut HomotomoDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_dataset_n_settings(ds: *const HomotomoDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.records.len())
}

/// Reconstruction from measured sum-field data. `grid_json` and `phases`
/// follow [`homotomo_oracle_grid`]; `opts` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn homotomo_reconstruct_dataset(
    ds: *const HomotomoDataset,
    grid_json: *const c_char,
    phases: *const f64,
    opts: *const HomotomoReconstructOptions,
    out: *mut *mut HomotomoMatrix,
) -> i32 {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let d = &nonnull(ds, "ds")?.inner;
        let scale = d.field_scale;
        let (grid, phases) = grid_and_phases(grid_json, phases, d.n_modes, scale)?;
        let o = options(opts.as_ref(), d.n_modes, scale, d.detector.eta())?;
        let emp = EmpiricalCharFn::from_dataset(d, None)?;
        boxed_matrix(
            out,
            reconstruct_grid(&CharFnSource::Empirical(&emp), &grid, &phases, &o, scale)?,
        );
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_matrix_read(path: *const c_char, out: *mut *mut HomotomoMatrix) -> i32 {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let m: DensityMatrixFS = read_json(Path::new(str_arg(path, "path")?))?;
        boxed_matrix(out, m);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_matrix_write(m: *const HomotomoMatrix, path: *const c_char) -> i32 {
    guard(|| {
        let m = nonnull(m, "m")?;
        write_json(Path::new(str_arg(path, "path")?), &m.inner)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_matrix_free(m: *mut HomotomoMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_matrix_n_centers(m: *const HomotomoMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.grid.n_centers())
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_matrix_n_offsets(m: *const HomotomoMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.grid.n_offsets())
}

/// Copies all elements, `re[c * n_offsets + o]`, into caller arrays of
/// length `len` (which must equal n_centers * n_offsets).
#[no_mangle]
pub unsafe extern "C" fn homotomo_matrix_elements(
    m: *const HomotomoMatrix,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let m = nonnull(m, "m")?;
        let els: &[Complex64] = &m.inner.elements;
        if len != els.len() {
            return Err(Error::invalid(format!("len is {len}, the matrix has {} elements", els.len())).into());
        }
        if re.is_null() || im.is_null() {
            return Err(Failure::Null("re/im"));
        }
        let re = std::slice::from_raw_parts_mut(re, len);
        let im = std::slice::from_raw_parts_mut(im, len);
        for (i, v) in els.iter().enumerate() {
            re[i] = v.re;
            im[i] = v.im;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn homotomo_matrix_residuals(m: *const HomotomoMatrix, out: *mut HomotomoResiduals) -> i32 {
    guard(|| {
        let r = &nonnull(m, "m")?.inner.residuals;
        *out_ptr(out, "out")? = HomotomoResiduals {
            hermiticity: r.hermiticity,
            diagonal_imag_max: r.diagonal_imag_max.unwrap_or(f64::NAN),
            diagonal_negativity: r.diagonal_negativity.unwrap_or(f64::NAN),
            diagonal_normalization: r.diagonal_normalization.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Largest elementwise |a − b|; `HOMOTOMO_ERR_INVALID` if the grids differ.
#[no_mangle]
pub unsafe extern "C" fn homotomo_matrix_compare(
    a: *const HomotomoMatrix,
    b: *const HomotomoMatrix,
    out_linf: *mut f64,
) -> i32 {
    guard(|| {
        let c = compare_matrices(&nonnull(a, "a")?.inner, &nonnull(b, "b")?.inner)?;
        *out_ptr(out_linf, "out_linf")? = c.linf;
        Ok(())
    })
}
