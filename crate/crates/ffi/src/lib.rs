//! C ABI over the relmap simulator.
//!
//! Every fallible call returns a [`RelmapStatus`]. On failure the message is
//! kept per thread and can be read with [`relmap_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use relmap::clustering::pack_bins;
use relmap::harness::output::{decisions_csv, write_file};
use relmap::harness::{compare, run_mapper, ComparisonReport, Environment, EpisodeResult, SimConfig};
use relmap::mapper::MapperKind;
use relmap::reliability::{cycles_to_failure, Mechanism, TcParams, ThermalCycle};
use relmap::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelmapStatus {
    Ok = 0,
    InvalidArgument = 1,
    ModelDomain = 2,
    Parse = 3,
    Io = 4,
    Config = 5,
    NullPointer = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelmapMapper {
    Rl = 0,
    Random = 1,
    TcGreedy = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelmapMechanism {
    Tc = 0,
    Nbti = 1,
    Hci = 2,
    Em = 3,
    Combined = 4,
}

/// Coffin-Manson constants.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RelmapTcParams {
    pub a_tc: f64,
    pub b: f64,
    pub t_th: f64,
    pub ea_tc: f64,
    pub k: f64,
}

/// Lifetimes of one core in years. Infinite values are `INFINITY`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RelmapCoreMttf {
    pub tc: f64,
    pub nbti: f64,
    pub hci: f64,
    pub em: f64,
    pub combined: f64,
    pub combined_finite: f64,
    pub infinite_dominated: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RelmapSystemMttf {
    pub tc: f64,
    pub nbti: f64,
    pub hci: f64,
    pub em: f64,
    pub combined: f64,
    pub tc_infinite_cores: usize,
}

/// Simulation configuration.
pub struct RelmapConfig {
    inner: SimConfig,
}

/// Outcome of one evaluated episode.
pub struct RelmapReport {
    inner: EpisodeResult,
}

/// Seed-averaged comparison of several mappers.
pub struct RelmapComparison {
    inner: ComparisonReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RelmapStatus, msg: impl Into<String>) -> RelmapStatus {
    set_error(msg.into());
    status
}

fn from_error(err: Error) -> RelmapStatus {
    let status = match &err {
        Error::InvalidArgument(_) => RelmapStatus::InvalidArgument,
        Error::ModelDomain(_) => RelmapStatus::ModelDomain,
        Error::Parse { .. } => RelmapStatus::Parse,
        Error::Config { .. } => RelmapStatus::Config,
        Error::Io(_) => RelmapStatus::Io,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), RelmapStatus>) -> RelmapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RelmapStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(RelmapStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, RelmapStatus> {
    if p.is_null() {
        return Err(fail(RelmapStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RelmapStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, RelmapStatus> {
    p.as_ref().ok_or_else(|| fail(RelmapStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, RelmapStatus> {
    p.as_mut().ok_or_else(|| fail(RelmapStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], RelmapStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(RelmapStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn mapper_kind(m: RelmapMapper) -> MapperKind {
    match m {
        RelmapMapper::Rl => MapperKind::Rl,
        RelmapMapper::Random => MapperKind::Random,
        RelmapMapper::TcGreedy => MapperKind::TcGreedy,
    }
}

fn mechanism(m: RelmapMechanism) -> Mechanism {
    match m {
        RelmapMechanism::Tc => Mechanism::Tc,
        RelmapMechanism::Nbti => Mechanism::Nbti,
        RelmapMechanism::Hci => Mechanism::Hci,
        RelmapMechanism::Em => Mechanism::Em,
        RelmapMechanism::Combined => Mechanism::Combined,
    }
}

/// Copies `s` plus a terminating NUL into `buf` when it fits. `needed`
/// receives the required size including the NUL either way.
unsafe fn copy_string(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), RelmapStatus> {
    let n = s.len() + 1;
    if let Some(out) = needed.as_mut() {
        *out = n;
    }
    if buf.is_null() || len < n {
        return Err(fail(RelmapStatus::InvalidArgument, format!("buffer holds {len} bytes, {n} needed")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn relmap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn relmap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub extern "C" fn relmap_tc_params_tabulated() -> RelmapTcParams {
    let p = TcParams::tabulated();
    RelmapTcParams { a_tc: p.a_tc, b: p.b, t_th: p.t_th, ea_tc: p.ea_tc, k: p.k }
}

/// Cycles to failure for one thermal cycle. A cycle at or below the damage
/// threshold yields `INFINITY` and sets `*damaging` to false.
///
/// # Safety
/// `params` must point to a valid struct and `out` be writable; `damaging`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn relmap_cycles_to_failure(
    amplitude: f64,
    t_max: f64,
    params: *const RelmapTcParams,
    out: *mut f64,
    damaging: *mut bool,
) -> RelmapStatus {
    guard(|| {
        let p = ref_arg(params, "params")?;
        let out = out_arg(out, "out")?;
        let tc = TcParams { a_tc: p.a_tc, b: p.b, t_th: p.t_th, ea_tc: p.ea_tc, k: p.k };
        tc.validate().map_err(from_error)?;
        if !(amplitude.is_finite() && amplitude >= 0.0 && t_max.is_finite() && t_max > 0.0) {
            return Err(fail(RelmapStatus::InvalidArgument, format!("bad cycle amplitude {amplitude} / t_max {t_max}")));
        }
        let cycle = ThermalCycle { amplitude, t_max, duration: 0.0, weight: 1.0 };
        let n = cycles_to_failure(&cycle, &tc);
        *out = n.unwrap_or(f64::INFINITY);
        if let Some(d) = damaging.as_mut() {
            *d = n.is_some();
        }
        Ok(())
    })
}

/// Density-based binning of `n` core temperatures. `labels` receives one bin
/// index per core, or -1 for noise cores; `bins` the number of dense bins.
///
/// # Safety
/// `temps` must hold `n` values and `labels` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn relmap_pack_bins(
    temps: *const f64,
    n: usize,
    epsilon: f64,
    min_pts: usize,
    labels: *mut i64,
    bins: *mut usize,
) -> RelmapStatus {
    guard(|| {
        let temps = slice_arg(temps, n, "temps")?;
        if n > 0 && labels.is_null() {
            return Err(fail(RelmapStatus::NullPointer, "labels is null"));
        }
        let part = pack_bins(temps, epsilon, min_pts).map_err(from_error)?;
        let out = if n == 0 { &mut [][..] } else { std::slice::from_raw_parts_mut(labels, n) };
        out.fill(-1);
        for (b, members) in part.bins.iter().enumerate() {
            for &c in members {
                out[c] = b as i64;
            }
        }
        if let Some(b) = bins.as_mut() {
            *b = part.bins.len();
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_config_default(out: *mut *mut RelmapConfig) -> RelmapStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(RelmapConfig { inner: SimConfig::default() }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_config_load(path: *const c_char, out: *mut *mut RelmapConfig) -> RelmapStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let cfg = SimConfig::load(Path::new(path)).map_err(from_error)?;
        cfg.validate().map_err(from_error)?;
        *out = Box::into_raw(Box::new(RelmapConfig { inner: cfg }));
        Ok(())
    })
}

/// Parses TOML text into a configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_config_parse(text: *const c_char, out: *mut *mut RelmapConfig) -> RelmapStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let cfg = SimConfig::from_toml_str(text, Path::new("<string>")).map_err(from_error)?;
        cfg.validate().map_err(from_error)?;
        *out = Box::into_raw(Box::new(RelmapConfig { inner: cfg }));
        Ok(())
    })
}

/// Sets one dotted key such as `clustering.epsilon`. The configuration is
/// left unchanged on failure.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn relmap_config_set(cfg: *mut RelmapConfig, key: *const c_char, value: *const c_char) -> RelmapStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        cfg.inner = cfg.inner.with_override(key, value).map_err(from_error)?;
        Ok(())
    })
}

/// Writes the configuration as TOML. See [`relmap_report_decisions_csv`] for
/// the buffer protocol.
///
/// # Safety
/// `cfg` must come from this library; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn relmap_config_to_toml(cfg: *const RelmapConfig, buf: *mut c_char, len: usize, needed: *mut usize) -> RelmapStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        copy_string(&cfg.inner.to_toml(), buf, len, needed)
    })
}

/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn relmap_config_free(cfg: *mut RelmapConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds the environment for `seed` and runs one episode of `mapper`. The
/// RL mapper trains for `episodes` episodes first and is then evaluated with
/// frozen tables.
///
/// # Safety
/// `cfg` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_simulate(
    cfg: *const RelmapConfig,
    seed: u64,
    mapper: RelmapMapper,
    episodes: usize,
    out: *mut *mut RelmapReport,
) -> RelmapStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let out = out_arg(out, "out")?;
        let env = Environment::build(&cfg.inner, seed).map_err(from_error)?;
        let r = run_mapper(&env, mapper_kind(mapper), episodes).map_err(from_error)?;
        *out = Box::into_raw(Box::new(RelmapReport { inner: r }));
        Ok(())
    })
}

/// Number of cores, or 0 for a null handle.
///
/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_core_count(report: *const RelmapReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.report.cores.len())
}

/// # Safety
/// `report` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_core_mttf(report: *const RelmapReport, core: usize, out: *mut RelmapCoreMttf) -> RelmapStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let out = out_arg(out, "out")?;
        let cores = &r.inner.report.cores;
        let c =
            cores.get(core).ok_or_else(|| fail(RelmapStatus::InvalidArgument, format!("core {core} out of range 0..{}", cores.len())))?;
        *out = RelmapCoreMttf {
            tc: c.tc,
            nbti: c.nbti,
            hci: c.hci,
            em: c.em,
            combined: c.combined.mean,
            combined_finite: c.combined.finite_mean,
            infinite_dominated: c.combined.infinite_dominated,
        };
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_system_mttf(report: *const RelmapReport, out: *mut RelmapSystemMttf) -> RelmapStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let out = out_arg(out, "out")?;
        let s = &r.inner.report.system;
        *out =
            RelmapSystemMttf { tc: s.tc, nbti: s.nbti, hci: s.hci, em: s.em, combined: s.combined, tc_infinite_cores: s.tc_infinite_cores };
        Ok(())
    })
}

/// Max minus min core temperature at the end of the episode, kelvin. NaN
/// for a null handle.
///
/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_final_spread(report: *const RelmapReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.final_state.spread())
}

/// Copies the final core temperatures (kelvin, row-major) into `buf`.
///
/// # Safety
/// `report` must come from this library; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_final_temps(report: *const RelmapReport, buf: *mut f64, len: usize) -> RelmapStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let temps = &r.inner.final_state.temps;
        if len < temps.len() {
            return Err(fail(RelmapStatus::InvalidArgument, format!("buffer holds {len} values, {} needed", temps.len())));
        }
        if buf.is_null() {
            return Err(fail(RelmapStatus::NullPointer, "buf is null"));
        }
        ptr::copy_nonoverlapping(temps.as_ptr(), buf, temps.len());
        Ok(())
    })
}

/// Tasks dispatched and completed during the episode.
///
/// # Safety
/// `report` must come from this library; the outputs must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_task_counts(
    report: *const RelmapReport,
    dispatched: *mut usize,
    completed: *mut usize,
) -> RelmapStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        if let Some(d) = dispatched.as_mut() {
            *d = r.inner.dispatched;
        }
        if let Some(c) = completed.as_mut() {
            *c = r.inner.completed;
        }
        Ok(())
    })
}

/// Writes the mapping decisions as CSV text. When `buf` is null or shorter
/// than the text, returns `InvalidArgument` and stores the required size
/// (including the NUL) in `needed`.
///
/// # Safety
/// `report` must come from this library; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_decisions_csv(
    report: *const RelmapReport,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> RelmapStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        copy_string(&decisions_csv(&r.inner.decisions), buf, len, needed)
    })
}

/// Writes `mttf_report.csv`, `decisions.csv` and `temperatures.csv` into
/// `dir`, creating it if needed.
///
/// # Safety
/// `report` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_write(report: *const RelmapReport, dir: *const c_char) -> RelmapStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let dir = Path::new(str_arg(dir, "dir")?);
        write_file(dir, "mttf_report.csv", &r.inner.report.to_csv()).map_err(from_error)?;
        write_file(dir, "decisions.csv", &decisions_csv(&r.inner.decisions)).map_err(from_error)?;
        write_file(dir, "temperatures.csv", &r.inner.temperatures.to_csv()).map_err(from_error)?;
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn relmap_report_free(report: *mut RelmapReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Runs every mapper on every seed with the configured episode count.
///
/// # Safety
/// `mappers` must hold `n_mappers` values, `seeds` `n_seeds` values, and
/// `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_compare(
    cfg: *const RelmapConfig,
    mappers: *const RelmapMapper,
    n_mappers: usize,
    seeds: *const u64,
    n_seeds: usize,
    out: *mut *mut RelmapComparison,
) -> RelmapStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let mappers: Vec<MapperKind> = slice_arg(mappers, n_mappers, "mappers")?.iter().map(|&m| mapper_kind(m)).collect();
        let seeds = slice_arg(seeds, n_seeds, "seeds")?;
        let out = out_arg(out, "out")?;
        let report = compare(&cfg.inner, &mappers, seeds).map_err(from_error)?;
        *out = Box::into_raw(Box::new(RelmapComparison { inner: report }));
        Ok(())
    })
}

/// Seed-averaged system MTTF in years of the mapper at `index`, in the order
/// passed to [`relmap_compare`].
///
/// # Safety
/// `cmp` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_comparison_mttf(
    cmp: *const RelmapComparison,
    index: usize,
    mechanism_: RelmapMechanism,
    out: *mut f64,
) -> RelmapStatus {
    guard(|| {
        let cmp = ref_arg(cmp, "cmp")?;
        let out = out_arg(out, "out")?;
        let m = cmp
            .inner
            .mappers
            .get(index)
            .ok_or_else(|| fail(RelmapStatus::InvalidArgument, format!("mapper index {index} out of range")))?;
        *out = m.mttf_years.get(&mechanism(mechanism_)).copied().unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Seed-averaged final temperature spread of the mapper at `index`, kelvin.
///
/// # Safety
/// `cmp` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn relmap_comparison_final_spread(cmp: *const RelmapComparison, index: usize, out: *mut f64) -> RelmapStatus {
    guard(|| {
        let cmp = ref_arg(cmp, "cmp")?;
        let out = out_arg(out, "out")?;
        let m = cmp
            .inner
            .mappers
            .get(index)
            .ok_or_else(|| fail(RelmapStatus::InvalidArgument, format!("mapper index {index} out of range")))?;
        *out = m.mean_final_spread;
        Ok(())
    })
}

/// The full comparison as JSON. Same buffer protocol as
/// [`relmap_report_decisions_csv`].
///
/// # Safety
/// `cmp` must come from this library; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn relmap_comparison_to_json(
    cmp: *const RelmapComparison,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> RelmapStatus {
    guard(|| {
        let cmp = ref_arg(cmp, "cmp")?;
        copy_string(&cmp.inner.to_json(), buf, len, needed)
    })
}

/// # Safety
/// `cmp` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn relmap_comparison_free(cmp: *mut RelmapComparison) {
    if !cmp.is_null() {
        drop(Box::from_raw(cmp));
    }
}
