//! C ABI over the toasel core.
//!
//! Every entry point returns a [`ToaselStatus`]. On failure a description is
//! kept per thread and can be read with [`toasel_last_error_message`].
//! Scenes and tables are opaque heap handles released with their `_free`
//! functions. Strings returned by the library are released with
//! [`toasel_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use toasel::measure::MeasurementSet;
use toasel::{
    build_table, estimate_position, load_scene, measure_all, min_delay_toa, select, ApId, Error,
    MeasureConfig, NeighborhoodTable, Point3, RayConfig, Scene, SolverConfig, Strategy,
    ToaMeasurement,
};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToaselStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Invalid = 4,
    NoPath = 5,
    InsufficientMeasurements = 6,
    Disconnected = 7,
    Io = 8,
    /// A panic was caught at the boundary.
    Internal = 9,
}

/// Opaque scene handle.
pub struct ToaselScene(Scene);

/// Opaque neighborhood table handle.
pub struct ToaselTable(NeighborhoodTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ToaselStatus {
    match e {
        Error::Parse { .. } | Error::Csv(_) => ToaselStatus::Parse,
        Error::InsufficientMeasurements { .. } => ToaselStatus::InsufficientMeasurements,
        Error::DisconnectedPair(..) => ToaselStatus::Disconnected,
        Error::Io { .. } => ToaselStatus::Io,
        _ => ToaselStatus::Invalid,
    }
}

struct Fail(ToaselStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ToaselStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ToaselStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal error: panic in toasel".into());
            ToaselStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ToaselStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Fail(
            ToaselStatus::InvalidUtf8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn point_arg(p: *const f64, what: &str) -> Result<Point3, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let v = std::slice::from_raw_parts(p, 3);
    Ok(Point3::new(v[0], v[1], v[2]))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn ray_config(max_order: u32) -> Result<RayConfig, Fail> {
    Ok(RayConfig::new(max_order as usize)?)
}

/// Message for the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn toasel_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a scene JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn toasel_scene_load(
    json: *const c_char,
    out: *mut *mut ToaselScene,
) -> ToaselStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let scene = load_scene(text)?;
        write_out(out, Box::into_raw(Box::new(ToaselScene(scene))), "out")
    })
}

/// Reads and parses a scene file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn toasel_scene_load_file(
    path: *const c_char,
    out: *mut *mut ToaselScene,
) -> ToaselStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let scene = toasel::geom::load_scene_file(path.as_ref())?;
        write_out(out, Box::into_raw(Box::new(ToaselScene(scene))), "out")
    })
}

/// # Safety
/// `scene` must come from a scene loader and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn toasel_scene_free(scene: *mut ToaselScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// `scene` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn toasel_scene_ap_count(
    scene: *const ToaselScene,
    out: *mut usize,
) -> ToaselStatus {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        write_out(out, scene.0.ap_count(), "out")
    })
}

/// Minimum-delay ToA between two points. `tx` and `rx` point to `[x, y, z]`.
/// Returns `NoPath` when nothing connects them within `max_order`.
///
/// # Safety
/// Pointers must be valid; `out_interactions` may be null.
#[no_mangle]
pub unsafe extern "C" fn toasel_min_delay_toa(
    scene: *const ToaselScene,
    tx: *const f64,
    rx: *const f64,
    max_order: u32,
    out_toa_s: *mut f64,
    out_interactions: *mut usize,
) -> ToaselStatus {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        let (tx, rx) = (point_arg(tx, "tx")?, point_arg(rx, "rx")?);
        let cfg = ray_config(max_order)?;
        let (toa, n) = min_delay_toa(tx, rx, &scene.0, &cfg).ok_or_else(|| {
            Fail(
                ToaselStatus::NoPath,
                format!("no path within max order {max_order}"),
            )
        })?;
        write_out(out_toa_s, toa, "out_toa_s")?;
        if !out_interactions.is_null() {
            out_interactions.write(n);
        }
        Ok(())
    })
}

/// Builds the neighborhood table for a scene.
///
/// # Safety
/// `scene` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn toasel_table_build(
    scene: *const ToaselScene,
    max_order: u32,
    out: *mut *mut ToaselTable,
) -> ToaselStatus {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        let cfg = MeasureConfig {
            ray: ray_config(max_order)?,
            ..MeasureConfig::default()
        };
        let table = build_table(&scene.0, &cfg)?;
        write_out(out, Box::into_raw(Box::new(ToaselTable(table))), "out")
    })
}

/// Parses a table JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn toasel_table_load(
    json: *const c_char,
    out: *mut *mut ToaselTable,
) -> ToaselStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let table = NeighborhoodTable::load(text)?;
        write_out(out, Box::into_raw(Box::new(ToaselTable(table))), "out")
    })
}

/// Serializes a table to JSON. Release the string with [`toasel_string_free`].
///
/// # Safety
/// `table` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn toasel_table_save(
    table: *const ToaselTable,
    out: *mut *mut c_char,
) -> ToaselStatus {
    guard(|| {
        let table = ref_arg(table, "table")?;
        let s = CString::new(table.0.save())
            .map_err(|_| Fail(ToaselStatus::Internal, "table JSON contains NUL".into()))?;
        write_out(out, s.into_raw(), "out")
    })
}

/// Number of neighbors `k` kept for `ap_id`.
///
/// # Safety
/// `table` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn toasel_table_k(
    table: *const ToaselTable,
    ap_id: u32,
    out: *mut usize,
) -> ToaselStatus {
    guard(|| {
        let table = ref_arg(table, "table")?;
        let k = table
            .0
            .k(ApId(ap_id))
            .ok_or_else(|| Fail(ToaselStatus::Invalid, format!("unknown AP {ap_id}")))?;
        write_out(out, k, "out")
    })
}

/// # Safety
/// `table` must come from a table constructor and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn toasel_table_free(table: *mut ToaselTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn toasel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulates one ToA set at `ue` (`[x, y, z]`). `len` must equal the AP
/// count. Entry `i` of `out_toas_s` / `out_valid` belongs to AP `i`;
/// unreachable APs get NaN and 0.
///
/// # Safety
/// Output arrays must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn toasel_measure(
    scene: *const ToaselScene,
    ue: *const f64,
    max_order: u32,
    noise_sigma_s: f64,
    seed: u64,
    out_toas_s: *mut f64,
    out_valid: *mut u8,
    len: usize,
) -> ToaselStatus {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        let ue = point_arg(ue, "ue")?;
        if out_toas_s.is_null() || out_valid.is_null() {
            return Err(null("output array"));
        }
        if len != scene.0.ap_count() {
            return Err(Fail(
                ToaselStatus::Invalid,
                format!("len {len} does not match AP count {}", scene.0.ap_count()),
            ));
        }
        let cfg = MeasureConfig {
            ray: ray_config(max_order)?,
            noise_sigma_s,
            rng_seed: seed,
        };
        let ms = measure_all(ue, &scene.0, &cfg)?;
        let toas = std::slice::from_raw_parts_mut(out_toas_s, len);
        let valid = std::slice::from_raw_parts_mut(out_valid, len);
        for (i, e) in ms.entries.iter().enumerate() {
            toas[i] = e.toa_s;
            valid[i] = u8::from(e.valid);
        }
        Ok(())
    })
}

/// Selects measurements with `strategy` (e.g. `"union"`, `"fixed:5"`) and
/// estimates the position into `out_xyz`. `table` may be null for
/// strategies that do not consult it. `out_n_selected` may be null.
///
/// # Safety
/// Input arrays must hold `len` elements; `out_xyz` must hold 3.
#[no_mangle]
pub unsafe extern "C" fn toasel_estimate(
    scene: *const ToaselScene,
    table: *const ToaselTable,
    strategy: *const c_char,
    toas_s: *const f64,
    valid: *const u8,
    len: usize,
    out_xyz: *mut f64,
    out_n_selected: *mut usize,
) -> ToaselStatus {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        let strategy: Strategy = str_arg(strategy, "strategy")?.parse()?;
        if toas_s.is_null() || valid.is_null() {
            return Err(null("input array"));
        }
        if out_xyz.is_null() {
            return Err(null("out_xyz"));
        }
        let m = scene.0.ap_count();
        if len != m {
            return Err(Fail(
                ToaselStatus::Invalid,
                format!("len {len} does not match AP count {m}"),
            ));
        }
        let empty;
        let table = match table.as_ref() {
            Some(t) => &t.0,
            None if strategy.uses_table() => return Err(null("table")),
            None => {
                empty = NeighborhoodTable::from_rows(Vec::new())?;
                &empty
            }
        };
        let toas = std::slice::from_raw_parts(toas_s, len);
        let flags = std::slice::from_raw_parts(valid, len);
        let entries = (0..len)
            .map(|i| {
                let id = ApId(i as u32);
                if flags[i] != 0 {
                    ToaMeasurement::valid(id, toas[i], 0)
                } else {
                    ToaMeasurement::missing(id)
                }
            })
            .collect();
        let probe = Point3::new(f64::NAN, f64::NAN, f64::NAN);
        let ms = MeasurementSet::new(probe, entries, 0.0)?;
        let sel = select(strategy, &ms, table)?;
        let est = estimate_position(&sel, &scene.0, &SolverConfig::default())?;
        let out = std::slice::from_raw_parts_mut(out_xyz, 3);
        out.copy_from_slice(&[est.p_hat.x, est.p_hat.y, est.p_hat.z]);
        if !out_n_selected.is_null() {
            out_n_selected.write(sel.len());
        }
        Ok(())
    })
}
