//! C interface to the doublet optimizer.
//!
//! Objects cross the boundary as opaque handles created by `dt_*_read` or
//! `dt_run` and released with the matching `dt_*_free`. Every fallible
//! function returns a [`DtStatus`]; on failure a message is available from
//! [`dt_last_error_message`] on the same thread. Rates are in l/s, lengths
//! in metres, unless a name says otherwise.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::time::Duration;

use doubletopt::error::{Error, IoError};
use doubletopt::geom::PrepConfig;
use doubletopt::hydro::{self, HydroSample};
use doubletopt::io::{self, GeometrySet, GroundwaterField};
use doubletopt::model::ScenarioConfig;
use doubletopt::scenario::{self, BlockOutcome, Prepared, ScenarioRun};
use doubletopt::solver::Budget;
use doubletopt::units::Rate;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// A value is out of its domain, e.g. a negative thickness.
    InvalidArgument = 2,
    /// Reading or writing a file failed.
    Io = 3,
    /// An input file is malformed.
    Parse = 4,
    /// An input record breaks a value rule.
    Validation = 5,
    /// Coordinates look geographic rather than projected.
    Crs = 6,
    /// The run itself failed; per-block failures do not count.
    Run = 7,
    /// An index is past the end.
    OutOfRange = 8,
    /// An internal error; the library state is unchanged.
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: DtStatus, msg: impl Into<String>) -> DtStatus {
    set_error(msg);
    status
}

fn io_status(e: &IoError) -> DtStatus {
    match e {
        IoError::Io { .. } => DtStatus::Io,
        IoError::Parse { .. } => DtStatus::Parse,
        IoError::Crs { .. } => DtStatus::Crs,
        IoError::Validation { .. } => DtStatus::Validation,
    }
}

fn guard(f: impl FnOnce() -> DtStatus) -> DtStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(DtStatus::Panic, "internal error"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, DtStatus> {
    if p.is_null() {
        return Err(fail(DtStatus::NullArgument, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(DtStatus::InvalidArgument, "path is not valid UTF-8"))
}

/// Message of the last failed call on this thread, empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn dt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Groundwater parameters at one location.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DtHydroSample {
    /// Hydraulic conductivity, m/s.
    pub conductivity: f64,
    /// Saturated thickness, m.
    pub thickness: f64,
    pub natural_level: f64,
    pub max_level: f64,
    pub gradient: f64,
    /// Darcy velocity, m/s; negative or NaN derives it from K and gradient.
    pub darcy_velocity: f64,
    /// Flow direction, degrees clockwise from grid north.
    pub flow_azimuth_deg: f64,
}

impl DtHydroSample {
    fn to_sample(self) -> HydroSample {
        HydroSample {
            conductivity: self.conductivity,
            thickness: self.thickness,
            natural_level: self.natural_level,
            max_level: self.max_level,
            gradient: self.gradient,
            darcy_velocity: (self.darcy_velocity >= 0.0).then_some(self.darcy_velocity),
            flow_dir: io::field::azimuth_to_dir(self.flow_azimuth_deg),
        }
    }
}

/// Threshold rates of one location, m³/s, and breakthrough parameter, m²/s.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DtTapLimits {
    pub q_d_m3_s: f64,
    pub q_f_m3_s: f64,
    pub alpha_m2_s: f64,
}

/// Evaluate the analytical pumping limits of a sample.
///
/// # Safety
/// `sample` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn dt_tap_limits(sample: *const DtHydroSample, out: *mut DtTapLimits) -> DtStatus {
    guard(|| {
        if sample.is_null() || out.is_null() {
            return fail(DtStatus::NullArgument, "sample and out must not be null");
        }
        let s = (*sample).to_sample();
        if let Err(e) = s.validate() {
            return fail(DtStatus::InvalidArgument, e.to_string());
        }
        let l = hydro::TapLimits::evaluate(&s);
        *out = DtTapLimits {
            q_d_m3_s: l.q_d,
            q_f_m3_s: l.q_f,
            alpha_m2_s: l.alpha,
        };
        DtStatus::Ok
    })
}

fn scalar(out: *mut f64, inputs: &[f64], f: impl FnOnce() -> f64) -> DtStatus {
    if out.is_null() {
        return fail(DtStatus::NullArgument, "out is null");
    }
    if inputs.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return fail(
            DtStatus::InvalidArgument,
            "inputs must be finite and non-negative",
        );
    }
    // SAFETY: checked for null above; the caller guarantees validity
    unsafe { *out = f() };
    DtStatus::Ok
}

fn sample_of(
    conductivity: f64,
    thickness: f64,
    headroom: f64,
    gradient: f64,
    darcy: Option<f64>,
) -> HydroSample {
    HydroSample {
        conductivity,
        thickness,
        natural_level: 0.0,
        max_level: headroom,
        gradient,
        darcy_velocity: darcy,
        flow_dir: [1.0, 0.0],
    }
}

/// Drawdown threshold rate `0.195 K B²`, m³/s.
///
/// # Safety
/// `out` must be a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn dt_drawdown_limit(conductivity: f64, thickness: f64, out: *mut f64) -> DtStatus {
    guard(|| {
        scalar(out, &[conductivity, thickness], || {
            hydro::drawdown_limit(&sample_of(conductivity, thickness, 0.0, 0.0, None))
        })
    })
}

/// Upconing threshold rate for `headroom = h_max - h_n`, m³/s.
///
/// # Safety
/// `out` must be a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn dt_upconing_limit(
    headroom: f64,
    conductivity: f64,
    thickness: f64,
    gradient: f64,
    out: *mut f64,
) -> DtStatus {
    guard(|| {
        scalar(out, &[headroom, conductivity, thickness, gradient], || {
            hydro::upconing_limit(&sample_of(conductivity, thickness, headroom, gradient, None))
        })
    })
}

/// Breakthrough parameter `(pi / 1.96) v_D B`, m²/s.
///
/// # Safety
/// `out` must be a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn dt_breakthrough_param(
    darcy_velocity: f64,
    thickness: f64,
    out: *mut f64,
) -> DtStatus {
    guard(|| {
        scalar(out, &[darcy_velocity, thickness], || {
            hydro::breakthrough_param(&sample_of(0.0, thickness, 0.0, 0.0, Some(darcy_velocity)))
        })
    })
}

/// Opaque groundwater field.
pub struct DtField {
    inner: GroundwaterField,
}

/// Read a field table.
///
/// # Safety
/// `path` must be a NUL-terminated string or null; `out` a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn dt_field_read(path: *const c_char, out: *mut *mut DtField) -> DtStatus {
    guard(|| {
        if out.is_null() {
            return fail(DtStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::read_field(&path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DtField { inner }));
                DtStatus::Ok
            }
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// A field with the same sample everywhere.
///
/// # Safety
/// `sample` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn dt_field_uniform(sample: *const DtHydroSample, out: *mut *mut DtField) -> DtStatus {
    guard(|| {
        if sample.is_null() || out.is_null() {
            return fail(DtStatus::NullArgument, "sample and out must not be null");
        }
        *out = ptr::null_mut();
        let s = (*sample).to_sample();
        match GroundwaterField::new(vec![(doubletopt::geom::Point::new(0.0, 0.0), s)]) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DtField { inner }));
                DtStatus::Ok
            }
            Err(e) => fail(DtStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of samples in a field, 0 for null.
///
/// # Safety
/// `field` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dt_field_len(field: *const DtField) -> usize {
    field.as_ref().map_or(0, |f| f.inner.len())
}

/// # Safety
/// `field` must come from this library and not be used afterwards, or be null.
#[no_mangle]
pub unsafe extern "C" fn dt_field_free(field: *mut DtField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Opaque set of block geometries.
pub struct DtGeometry {
    inner: GeometrySet,
}

/// Read blocks and buildings from a GeoJSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string or null; `out` a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn dt_geometry_read(path: *const c_char, out: *mut *mut DtGeometry) -> DtStatus {
    guard(|| {
        if out.is_null() {
            return fail(DtStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::read_geometry(&path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DtGeometry { inner }));
                DtStatus::Ok
            }
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// Number of blocks read, including rejected ones; 0 for null.
///
/// # Safety
/// `geometry` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dt_geometry_block_count(geometry: *const DtGeometry) -> usize {
    geometry
        .as_ref()
        .map_or(0, |g| g.inner.blocks.len() + g.inner.rejected.len())
}

/// # Safety
/// `geometry` must come from this library and not be used afterwards, or be null.
#[no_mangle]
pub unsafe extern "C" fn dt_geometry_free(geometry: *mut DtGeometry) {
    if !geometry.is_null() {
        drop(Box::from_raw(geometry));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DtScenario {
    pub q_min_l_s: f64,
    pub r_delta: f64,
    pub delta_min_m: f64,
}

/// Preparation and solver settings of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DtOptions {
    pub buffer_m: f64,
    pub initial_spacing_m: f64,
    pub spacing_step_m: f64,
    pub max_wells: usize,
    pub min_well_rate_l_s: f64,
    pub max_nodes: u64,
    pub max_time_s: f64,
    /// 0 uses every core.
    pub workers: usize,
}

/// Fill `out` with the default settings.
///
/// # Safety
/// `out` must be a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn dt_options_default(out: *mut DtOptions) -> DtStatus {
    if out.is_null() {
        return fail(DtStatus::NullArgument, "out is null");
    }
    let p = PrepConfig::default();
    let b = Budget::default();
    *out = DtOptions {
        buffer_m: p.buffer_m,
        initial_spacing_m: p.initial_spacing,
        spacing_step_m: p.spacing_step,
        max_wells: p.max_wells,
        min_well_rate_l_s: p.min_well_rate.l_per_s(),
        max_nodes: b.max_nodes,
        max_time_s: b.max_time.as_secs_f64(),
        workers: 0,
    };
    DtStatus::Ok
}

/// Opaque result of a run over all blocks and scenarios.
pub struct DtRun {
    prepared: Prepared,
    runs: Vec<ScenarioRun>,
    /// Block ids in block order, kept alive for borrowed pointers.
    ids: Vec<CString>,
    messages: Vec<Vec<CString>>,
}

/// Prepare, solve and audit every block under each scenario.
///
/// Blocks that fail are recorded in the result, not reported as an error.
///
/// # Safety
/// Handles must come from this library; `scenarios` must point to `n`
/// values; `options` may be null for defaults; `out` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn dt_run(
    geometry: *const DtGeometry,
    field: *const DtField,
    scenarios: *const DtScenario,
    n_scenarios: usize,
    options: *const DtOptions,
    out: *mut *mut DtRun,
) -> DtStatus {
    guard(|| {
        if out.is_null() || geometry.is_null() || field.is_null() || (scenarios.is_null() && n_scenarios > 0)
        {
            return fail(
                DtStatus::NullArgument,
                "geometry, field, scenarios and out must not be null",
            );
        }
        *out = ptr::null_mut();
        let opts = match options.as_ref() {
            Some(o) => *o,
            None => {
                let mut o = std::mem::zeroed();
                dt_options_default(&mut o);
                o
            }
        };
        let prep = PrepConfig {
            buffer_m: opts.buffer_m,
            initial_spacing: opts.initial_spacing_m,
            spacing_step: opts.spacing_step_m,
            max_wells: opts.max_wells,
            min_well_rate: Rate::from_l_per_s(opts.min_well_rate_l_s),
        };
        if !(opts.max_time_s > 0.0 && opts.max_time_s.is_finite()) || opts.max_nodes == 0 {
            return fail(
                DtStatus::InvalidArgument,
                "max_time_s and max_nodes must be positive",
            );
        }
        let budget = Budget {
            max_nodes: opts.max_nodes,
            max_time: Duration::from_secs_f64(opts.max_time_s),
        };
        let raw = if n_scenarios == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(scenarios, n_scenarios)
        };
        let mut configs = Vec::with_capacity(raw.len());
        for s in raw {
            match ScenarioConfig::new(Rate::from_l_per_s(s.q_min_l_s), s.r_delta, s.delta_min_m) {
                Ok(c) => configs.push(c),
                Err(e) => return fail(DtStatus::InvalidArgument, e.to_string()),
            }
        }
        let prepared = match (*geometry).inner.prepare(&(*field).inner, &prep, opts.workers) {
            Ok(p) => p,
            Err(e) => return fail(error_status(&e), e.to_string()),
        };
        let runs = match scenario::solve_prepared(&prepared, &configs, &budget, opts.workers) {
            Ok(r) => r,
            Err(e) => return fail(error_status(&e), e.to_string()),
        };
        let cstr = |s: &str| CString::new(s.replace('\0', " ")).unwrap_or_default();
        let ids = prepared.iter().map(|p| cstr(scenario::prepared_id(p))).collect();
        let messages = runs
            .iter()
            .map(|r| {
                r.outcomes
                    .iter()
                    .map(|o| match o {
                        BlockOutcome::Failed(f) => cstr(&format!("{}: {}", f.stage, f.message)),
                        BlockOutcome::Solved(_) => CString::default(),
                    })
                    .collect()
            })
            .collect();
        *out = Box::into_raw(Box::new(DtRun {
            prepared,
            runs,
            ids,
            messages,
        }));
        DtStatus::Ok
    })
}

fn error_status(e: &Error) -> DtStatus {
    match e {
        Error::Io(io) => io_status(io),
        Error::Prep(_) | Error::Model(_) | Error::Validation(_) => DtStatus::InvalidArgument,
        Error::Solve(_) | Error::Pool(_) => DtStatus::Run,
    }
}

/// Number of scenarios in a run, 0 for null.
///
/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dt_run_scenario_count(run: *const DtRun) -> usize {
    run.as_ref().map_or(0, |r| r.runs.len())
}

/// Number of blocks in a run, failed ones included; 0 for null.
///
/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dt_run_block_count(run: *const DtRun) -> usize {
    run.as_ref().map_or(0, |r| r.ids.len())
}

/// Aggregate figures of one scenario.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DtReport {
    pub q_min_l_s: f64,
    pub r_delta: f64,
    pub total_doublets: usize,
    pub max_doublets_per_block: usize,
    pub mean_doublets_per_block: f64,
    pub avg_max_doublet_rate_l_s: f64,
    pub mean_doublet_rate_l_s: f64,
    pub blocks_with: usize,
    pub blocks_without: usize,
    pub total_rate_l_s: f64,
    pub max_block_rate_l_s: f64,
    pub mean_block_rate_l_s: f64,
    /// Blocks that failed and are not part of the figures above.
    pub blocks_failed: usize,
}

/// # Safety
/// `run` must come from this library or be null; `out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn dt_run_report(run: *const DtRun, scenario: usize, out: *mut DtReport) -> DtStatus {
    guard(|| {
        let (Some(run), false) = (run.as_ref(), out.is_null()) else {
            return fail(DtStatus::NullArgument, "run and out must not be null");
        };
        let Some(s) = run.runs.get(scenario) else {
            return fail(
                DtStatus::OutOfRange,
                format!("scenario {scenario} of {}", run.runs.len()),
            );
        };
        let r = &s.report;
        *out = DtReport {
            q_min_l_s: r.q_min.l_per_s(),
            r_delta: r.r_delta,
            total_doublets: r.total_doublets,
            max_doublets_per_block: r.max_doublets_per_block,
            mean_doublets_per_block: r.mean_doublets_per_block,
            avg_max_doublet_rate_l_s: r.avg_max_doublet_rate.l_per_s(),
            mean_doublet_rate_l_s: r.mean_doublet_rate.l_per_s(),
            blocks_with: r.blocks_with,
            blocks_without: r.blocks_without,
            total_rate_l_s: r.total_rate.l_per_s(),
            max_block_rate_l_s: r.max_block_rate.l_per_s(),
            mean_block_rate_l_s: r.mean_block_rate.l_per_s(),
            blocks_failed: s.failures().count(),
        };
        DtStatus::Ok
    })
}

/// Outcome of one block under one scenario. Strings are owned by the run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DtBlockResult {
    pub block_id: *const c_char,
    /// 1 if solved, 0 if the block failed.
    pub solved: i32,
    pub n_doublet: usize,
    pub q_block_l_s: f64,
    pub max_doublet_l_s: f64,
    /// 1 if optimality was proven within the budget.
    pub proven_optimal: i32,
    pub gap: f64,
    pub node_count: u64,
    /// Failure reason, empty for solved blocks.
    pub message: *const c_char,
}

/// # Safety
/// `run` must come from this library or be null; `out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn dt_run_block(
    run: *const DtRun,
    scenario: usize,
    block: usize,
    out: *mut DtBlockResult,
) -> DtStatus {
    guard(|| {
        let (Some(run), false) = (run.as_ref(), out.is_null()) else {
            return fail(DtStatus::NullArgument, "run and out must not be null");
        };
        let Some(s) = run.runs.get(scenario) else {
            return fail(
                DtStatus::OutOfRange,
                format!("scenario {scenario} of {}", run.runs.len()),
            );
        };
        let Some(o) = s.outcomes.get(block) else {
            return fail(
                DtStatus::OutOfRange,
                format!("block {block} of {}", s.outcomes.len()),
            );
        };
        let mut r = DtBlockResult {
            block_id: run.ids[block].as_ptr(),
            solved: 0,
            n_doublet: 0,
            q_block_l_s: 0.0,
            max_doublet_l_s: 0.0,
            proven_optimal: 0,
            gap: 0.0,
            node_count: 0,
            message: run.messages[scenario][block].as_ptr(),
        };
        if let BlockOutcome::Solved(sol) = o {
            r.solved = 1;
            r.n_doublet = sol.n_doublet;
            r.q_block_l_s = sol.q_block.l_per_s();
            r.max_doublet_l_s = sol.max_doublet_rate().l_per_s();
            r.proven_optimal = sol.certificate.proven_optimal as i32;
            r.gap = sol.certificate.gap;
            r.node_count = sol.node_count;
        }
        *out = r;
        DtStatus::Ok
    })
}

/// Write all result files of a run into `dir`.
///
/// # Safety
/// `run` must come from this library or be null; `dir` NUL-terminated or null.
#[no_mangle]
pub unsafe extern "C" fn dt_run_write(run: *const DtRun, dir: *const c_char, timings: bool) -> DtStatus {
    guard(|| {
        let Some(run) = run.as_ref() else {
            return fail(DtStatus::NullArgument, "run is null");
        };
        let dir = match path_arg(dir) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::results::write_results(&dir, &run.prepared, &run.runs, timings) {
            Ok(_) => DtStatus::Ok,
            Err(e) => fail(io_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `run` must come from this library and not be used afterwards, or be null.
#[no_mangle]
pub unsafe extern "C" fn dt_run_free(run: *mut DtRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
