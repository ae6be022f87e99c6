//! C ABI over `factorclust`.
//!
//! Objects are opaque heap handles released with the matching `*_free`
//! function. Every fallible call returns an [`FcStatus`]; on failure the
//! message is available from [`fc_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use factorclust::clustering::{cluster_pipeline, ClusteringResult, KMeansConfig, OmegaChoice, PipelineConfig};
use factorclust::factor_count::{cumulative_ratio_sequence, default_j0, FactorCountReport, Ratio, DEFAULT_K0};
use factorclust::panel::{load_panel, Orientation, TimeSeriesPanel};
use factorclust::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Parse = 3,
    PanelSize = 4,
    DuplicateId = 5,
    Dimension = 6,
    Lag = 7,
    Orthonormal = 8,
    Param = 9,
    LocalMaxima = 10,
    Rank = 11,
    Eigen = 12,
    ZeroRow = 13,
    Index = 14,
    Config = 15,
    Panic = 16,
    BufferTooSmall = 17,
}

impl From<&Error> for FcStatus {
    fn from(e: &Error) -> Self {
        match e.code() {
            "E_IO" => FcStatus::Io,
            "E_PARSE" => FcStatus::Parse,
            "E_PANEL_SIZE" => FcStatus::PanelSize,
            "E_DUPLICATE_ID" => FcStatus::DuplicateId,
            "E_DIMENSION" => FcStatus::Dimension,
            "E_LAG" => FcStatus::Lag,
            "E_ORTHONORMAL" => FcStatus::Orthonormal,
            "E_LOCAL_MAXIMA" => FcStatus::LocalMaxima,
            "E_RANK" => FcStatus::Rank,
            "E_EIGEN" => FcStatus::Eigen,
            "E_ZERO_ROW" => FcStatus::ZeroRow,
            "E_INDEX" => FcStatus::Index,
            "E_CONFIG" => FcStatus::Config,
            _ => FcStatus::Param,
        }
    }
}

/// A loaded panel of `p` series by `n` time points.
pub struct FcPanel(TimeSeriesPanel);

/// Ratio sequence and selected factor counts.
pub struct FcFactorCounts(FactorCountReport);

/// Output of the full clustering pipeline.
pub struct FcClustering(ClusteringResult);

/// Tuning for [`fc_cluster`]. Start from [`fc_cluster_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FcClusterOptions {
    pub k0: usize,
    /// 0 selects the default `max(p/4, 8)` capped at `p`.
    pub j0: usize,
    /// Negative values estimate `r0` and `r` from the ratio sequence.
    pub r0: i64,
    pub r: i64,
    /// 1, 2 or 3 for the named threshold rules; 0 uses `omega_value`.
    pub omega_rule: c_int,
    pub omega_value: f64,
    /// 0 chooses the number of clusters by the elbow rule.
    pub d: usize,
    pub seed: u64,
    pub restarts: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(e: &Error) -> FcStatus {
    set_error(format!("{}: {e}", e.code()));
    FcStatus::from(e)
}

fn null_arg(name: &str) -> FcStatus {
    set_error(format!("E_NULL: argument {name} is null"));
    FcStatus::NullPointer
}

fn guard(f: impl FnOnce() -> FcStatus) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("E_PANIC: internal panic".into());
            FcStatus::Panic
        }
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a panel from `p * n` values, one row of `n` per series.
///
/// # Safety
/// `data` must point to `p * n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_panel_new(data: *const f64, p: usize, n: usize, out: *mut *mut FcPanel) -> FcStatus {
    guard(|| {
        if data.is_null() {
            return null_arg("data");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let Some(len) = p.checked_mul(n) else {
            return fail(&Error::PanelTooSmall { p, n });
        };
        let slice = std::slice::from_raw_parts(data, len);
        match TimeSeriesPanel::from_series_rows(p, n, slice) {
            Ok(panel) => {
                put(out, FcPanel(panel));
                FcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Load a panel from a CSV file. With `rows_are_series` zero, each line is a
/// time point and the header names the series.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_panel_load_csv(path: *const c_char, rows_are_series: c_int, out: *mut *mut FcPanel) -> FcStatus {
    guard(|| {
        if path.is_null() {
            return null_arg("path");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let path = CStr::from_ptr(path).to_string_lossy().into_owned();
        let orientation = if rows_are_series != 0 {
            Orientation::RowsAreSeries
        } else {
            Orientation::RowsAreTime
        };
        let loaded = File::open(&path)
            .map_err(|source| Error::Io { path: path.clone(), source })
            .and_then(|f| load_panel(f, orientation));
        match loaded {
            Ok(panel) => {
                put(out, FcPanel(panel));
                FcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of series, or 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_panel_p(panel: *const FcPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.p())
}

/// Number of time points, or 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_panel_n(panel: *const FcPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.n())
}

/// # Safety
/// `panel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_panel_free(panel: *mut FcPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Cumulative eigenvalue-ratio sequence with selected counts.
/// `j0 = 0` uses the default; a failed selection still returns the handle
/// together with [`FcStatus::LocalMaxima`].
///
/// # Safety
/// `panel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_factor_count(panel: *const FcPanel, k0: usize, j0: usize, out: *mut *mut FcFactorCounts) -> FcStatus {
    guard(|| {
        let Some(panel) = panel.as_ref() else { return null_arg("panel") };
        if out.is_null() {
            return null_arg("out");
        }
        let j0 = if j0 == 0 { default_j0(panel.0.p()) } else { j0 };
        match cumulative_ratio_sequence(&panel.0, k0, j0) {
            Ok(mut report) => {
                let selected = report.select();
                put(out, FcFactorCounts(report));
                match selected {
                    Ok(_) => FcStatus::Ok,
                    Err(e) => fail(&e),
                }
            }
            Err(e) => fail(&e),
        }
    })
}

/// Selected `(r0, r)`; [`FcStatus::LocalMaxima`] when no selection exists.
///
/// # Safety
/// `counts` must be a live handle; `r0` and `r` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_factor_counts_selected(counts: *const FcFactorCounts, r0: *mut usize, r: *mut usize) -> FcStatus {
    guard(|| {
        let Some(counts) = counts.as_ref() else { return null_arg("counts") };
        if r0.is_null() || r.is_null() {
            return null_arg("r0/r");
        }
        match counts.0.selected {
            Some(c) => {
                *r0 = c.r0;
                *r = c.r;
                FcStatus::Ok
            }
            None => fail(&Error::TooFewLocalMaxima {
                found: counts.0.local_max_indices.len(),
            }),
        }
    })
}

/// Length of the ratio sequence (`J0 − 1`).
///
/// # Safety
/// `counts` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_factor_counts_len(counts: *const FcFactorCounts) -> usize {
    counts.as_ref().map_or(0, |c| c.0.ratios.len())
}

/// Copy the ratios into `buf`; entry `i` is `R_{i+1}`. A zero denominator
/// is written as +infinity and an undefined `0/0` ratio as NaN.
///
/// # Safety
/// `counts` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_factor_counts_ratios(counts: *const FcFactorCounts, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| {
        let Some(counts) = counts.as_ref() else { return null_arg("counts") };
        if buf.is_null() {
            return null_arg("buf");
        }
        let ratios = &counts.0.ratios;
        if len < ratios.len() {
            set_error(format!("E_BUFFER: need {} doubles, got {len}", ratios.len()));
            return FcStatus::BufferTooSmall;
        }
        let out = std::slice::from_raw_parts_mut(buf, ratios.len());
        for (slot, r) in out.iter_mut().zip(ratios) {
            *slot = match r {
                Ratio::Value(v) => *v,
                Ratio::RankEdge => f64::INFINITY,
                Ratio::Truncated => f64::NAN,
            };
        }
        FcStatus::Ok
    })
}

/// # Safety
/// `counts` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_factor_counts_free(counts: *mut FcFactorCounts) {
    if !counts.is_null() {
        drop(Box::from_raw(counts));
    }
}

/// Defaults: k0 = 5, default J0, estimated counts, rule p2, elbow, 20 restarts.
#[no_mangle]
pub extern "C" fn fc_cluster_options_default() -> FcClusterOptions {
    FcClusterOptions {
        k0: DEFAULT_K0,
        j0: 0,
        r0: -1,
        r: -1,
        omega_rule: 2,
        omega_value: 0.0,
        d: 0,
        seed: 0,
        restarts: KMeansConfig::default().restarts,
    }
}

fn pipeline_config(o: &FcClusterOptions) -> Result<PipelineConfig, Error> {
    let omega = match o.omega_rule {
        1 => OmegaChoice::P1,
        2 => OmegaChoice::P2,
        3 => OmegaChoice::P3,
        0 => OmegaChoice::Value(o.omega_value),
        other => return Err(Error::InvalidParameter(format!("omega_rule must be 0..=3, got {other}"))),
    };
    let counts = match (o.r0, o.r) {
        (r0, r) if r0 >= 0 && r >= 0 => Some((r0 as usize, r as usize)),
        (r0, r) if r0 < 0 && r < 0 => None,
        _ => return Err(Error::InvalidParameter("r0 and r must both be set or both be negative".into())),
    };
    Ok(PipelineConfig {
        k0: o.k0,
        j0: (o.j0 > 0).then_some(o.j0),
        counts,
        omega,
        d: (o.d > 0).then_some(o.d),
        kmeans: KMeansConfig {
            restarts: o.restarts.max(1),
            seed: o.seed,
            ..Default::default()
        },
        ..Default::default()
    })
}

/// Run the full pipeline. A null `options` uses the defaults.
///
/// # Safety
/// `panel` must be a live handle; `options` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_cluster(panel: *const FcPanel, options: *const FcClusterOptions, out: *mut *mut FcClustering) -> FcStatus {
    guard(|| {
        let Some(panel) = panel.as_ref() else { return null_arg("panel") };
        if out.is_null() {
            return null_arg("out");
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| fc_cluster_options_default());
        match pipeline_config(&opts).and_then(|cfg| cluster_pipeline(&panel.0, &cfg)) {
            Ok(result) => {
                put(out, FcClustering(result));
                FcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_r0(c: *const FcClustering) -> usize {
    c.as_ref().map_or(0, |c| c.0.provenance.r0)
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_r(c: *const FcClustering) -> usize {
    c.as_ref().map_or(0, |c| c.0.provenance.r)
}

/// Number of clusters used for the final assignment.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_d(c: *const FcClustering) -> usize {
    c.as_ref().map_or(0, |c| c.0.d_used)
}

/// Upper bound on the number of clusters from the loading eigenvalues.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_d_hat(c: *const FcClustering) -> usize {
    c.as_ref().map_or(0, |c| c.0.d_hat)
}

/// Threshold used for the no-cluster test.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_omega(c: *const FcClustering) -> f64 {
    c.as_ref().map_or(f64::NAN, |c| c.0.provenance.omega)
}

/// Cluster of every series (0-based), −1 for series in no cluster.
///
/// # Safety
/// `c` must be a live handle; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_assignments(c: *const FcClustering, buf: *mut i64, len: usize) -> FcStatus {
    guard(|| {
        let Some(c) = c.as_ref() else { return null_arg("clustering") };
        if buf.is_null() {
            return null_arg("buf");
        }
        let p = c.0.weak.p();
        if len < p {
            set_error(format!("E_BUFFER: need {p} values, got {len}"));
            return FcStatus::BufferTooSmall;
        }
        let out = std::slice::from_raw_parts_mut(buf, p);
        for (slot, a) in out.iter_mut().zip(c.0.full_assignments(p)) {
            *slot = a.map_or(-1, |v| v as i64);
        }
        FcStatus::Ok
    })
}

unsafe fn copy_loading(m: &factorclust::loadings::LoadingMatrix, buf: *mut f64, len: usize) -> FcStatus {
    if buf.is_null() {
        return null_arg("buf");
    }
    let (p, r) = m.matrix().shape();
    if len < p * r {
        set_error(format!("E_BUFFER: need {} doubles, got {len}", p * r));
        return FcStatus::BufferTooSmall;
    }
    let out = std::slice::from_raw_parts_mut(buf, p * r);
    for i in 0..p {
        for j in 0..r {
            out[i * r + j] = m.matrix()[(i, j)];
        }
    }
    FcStatus::Ok
}

/// Strong loadings, row-major `p × r0`.
///
/// # Safety
/// `c` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_strong_loadings(c: *const FcClustering, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| match c.as_ref() {
        Some(c) => copy_loading(&c.0.strong, buf, len),
        None => null_arg("clustering"),
    })
}

/// Weak loadings, row-major `p × r`.
///
/// # Safety
/// `c` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_weak_loadings(c: *const FcClustering, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| match c.as_ref() {
        Some(c) => copy_loading(&c.0.weak, buf, len),
        None => null_arg("clustering"),
    })
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_clustering_free(c: *mut FcClustering) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
