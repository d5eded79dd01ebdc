//! C ABI over the flood pipeline.
//!
//! Handles are opaque and owned by the caller: everything returned through an
//! `out` pointer must be released with the matching `fc_*_free`. Every entry
//! point returns an [`FcStatus`]; on failure [`fc_last_error`] describes why.
//! Grids are row-major `f64` with an explicit nodata value.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use floodcast::net::{load_checkpoint, Checkpoint, Network};
use floodcast::pipeline::{default_grid, predict_raster};
use floodcast::postprocess::AggregationMethod;
use floodcast::rainfall::{Hyetograph, N_BINS};
use floodcast::raster::{load_grid, save_grid, Geometry, Grid};
use floodcast::simulator::{self, SimConfig};
use floodcast::terrain::build_terrain_image_with;
use floodcast::Error;

/// Number of 5-minute intensity bins in a hyetograph.
pub const FC_RAIN_BINS: usize = 12;
const _: () = assert!(FC_RAIN_BINS == N_BINS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Geometry = 4,
    Shape = 5,
    Checkpoint = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcAggregation {
    None = 0,
    Mean = 1,
    Median = 2,
    Max = 3,
}

impl From<FcAggregation> for AggregationMethod {
    fn from(a: FcAggregation) -> Self {
        match a {
            FcAggregation::None => AggregationMethod::NoOverlap,
            FcAggregation::Mean => AggregationMethod::Mean,
            FcAggregation::Median => AggregationMethod::Median,
            FcAggregation::Max => AggregationMethod::Max,
        }
    }
}

/// Simulator settings; start from [`fc_sim_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FcSimConfig {
    pub dt: f64,
    pub drain_time: f64,
    pub alpha: f64,
    pub min_depth: f64,
}

impl From<FcSimConfig> for SimConfig {
    fn from(c: FcSimConfig) -> Self {
        SimConfig { dt: c.dt, drain_time: c.drain_time, alpha: c.alpha, min_depth: c.min_depth }
    }
}

/// Opaque raster.
pub struct FcGrid(Grid);

/// Opaque trained surrogate.
pub struct FcModel {
    checkpoint: Checkpoint,
    net: Network<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FcStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => FcStatus::Parse,
        Error::Bounds { .. } | Error::Geometry(_) => FcStatus::Geometry,
        Error::Shape(_) => FcStatus::Shape,
        Error::Checkpoint(_) => FcStatus::Checkpoint,
        Error::Io(_) => FcStatus::Io,
        Error::EmptyMask | Error::Invalid(_) => FcStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            FcStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            FcStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
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
            FcStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn rain_arg(p: *const f64) -> Result<Hyetograph, Fail> {
    if p.is_null() {
        return Err(Fail::Null("intensities"));
    }
    let mut bins = [0.0; N_BINS];
    bins.copy_from_slice(std::slice::from_raw_parts(p, N_BINS));
    Ok(Hyetograph::new("ffi", 0.0, false, bins)?)
}

unsafe fn put<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn fc_sim_config_default() -> FcSimConfig {
    let d = SimConfig::default();
    FcSimConfig { dt: d.dt, drain_time: d.drain_time, alpha: d.alpha, min_depth: d.min_depth }
}

/// Copies `rows * cols` values into a new grid.
///
/// # Safety
/// `values` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_new(
    rows: usize,
    cols: usize,
    cellsize: f64,
    nodata: f64,
    values: *const f64,
    out: *mut *mut FcGrid,
) -> FcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        let n = rows.checked_mul(cols).ok_or_else(|| Fail::Arg("rows * cols overflows".into()))?;
        let v = std::slice::from_raw_parts(values, n).to_vec();
        let g = Grid::new(Geometry::new(rows, cols, cellsize), nodata, v)?;
        put(out, FcGrid(g));
        Ok(())
    })
}

/// Reads an ESRI ASCII grid.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_load(path: *const c_char, out: *mut *mut FcGrid) -> FcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let g = load_grid(path_arg(path, "path")?)?;
        put(out, FcGrid(g));
        Ok(())
    })
}

/// Writes an ESRI ASCII grid.
///
/// # Safety
/// `grid` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_save(grid: *const FcGrid, path: *const c_char) -> FcStatus {
    guard(|| {
        let g = as_ref(grid, "grid")?;
        save_grid(path_arg(path, "path")?, &g.0)?;
        Ok(())
    })
}

/// Writes rows, columns, cell size and nodata; any output pointer may be null.
///
/// # Safety
/// `grid` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_shape(
    grid: *const FcGrid,
    rows: *mut usize,
    cols: *mut usize,
    cellsize: *mut f64,
    nodata: *mut f64,
) -> FcStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        if !rows.is_null() {
            *rows = g.rows();
        }
        if !cols.is_null() {
            *cols = g.cols();
        }
        if !cellsize.is_null() {
            *cellsize = g.cellsize();
        }
        if !nodata.is_null() {
            *nodata = g.nodata();
        }
        Ok(())
    })
}

/// Copies the values into `buf`, which must hold exactly `rows * cols`.
///
/// # Safety
/// `grid` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_values(grid: *const FcGrid, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        if len != g.values().len() {
            return Err(Fail::Arg(format!("buffer holds {len} values, grid has {}", g.values().len())));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(g.values());
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_free(grid: *mut FcGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Runs the flood simulation and returns the maximum-depth grid.
/// `mass_error` (optional) receives the relative volume discrepancy.
///
/// # Safety
/// `dem` must be a live handle, `intensities` must point to
/// [`FC_RAIN_BINS`] doubles (mm/h), `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulate(
    dem: *const FcGrid,
    intensities: *const f64,
    config: FcSimConfig,
    out: *mut *mut FcGrid,
    mass_error: *mut f64,
) -> FcStatus {
    guard(|| {
        let dem = &as_ref(dem, "dem")?.0;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let h = rain_arg(intensities)?;
        let r = simulator::run(dem, &h, &config.into())?;
        if !mass_error.is_null() {
            *mass_error = simulator::mass_balance(&r);
        }
        put(out, FcGrid(r.max_depth));
        Ok(())
    })
}

/// Loads a checkpoint written by `floodcast train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_model_load(path: *const c_char, out: *mut *mut FcModel) -> FcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let checkpoint = load_checkpoint(path_arg(path, "path")?)?;
        let net = checkpoint.network()?;
        put(out, FcModel { checkpoint, net });
        Ok(())
    })
}

/// Patch size the model was trained on (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_model_patch_size(model: *const FcModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.config().patch_size)
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_model_free(model: *mut FcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicts the maximum-depth grid for `dem` under one storm. `grid` is the
/// window spacing in cells; 0 selects half the patch size.
///
/// # Safety
/// `model` and `dem` must be live handles, `intensities` must point to
/// [`FC_RAIN_BINS`] doubles (mm/h), `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_predict(
    model: *const FcModel,
    dem: *const FcGrid,
    intensities: *const f64,
    grid: usize,
    method: FcAggregation,
    out: *mut *mut FcGrid,
) -> FcStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let dem = &as_ref(dem, "dem")?.0;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let h = rain_arg(intensities)?;
        let terrain = build_terrain_image_with(dem, Some(&m.checkpoint.norm_stats))?;
        let grid = if grid == 0 { default_grid(m.net.config().patch_size) } else { grid };
        let g = predict_raster(&m.net, &m.checkpoint, &terrain, &h, grid, method.into())?;
        put(out, FcGrid(g));
        Ok(())
    })
}
