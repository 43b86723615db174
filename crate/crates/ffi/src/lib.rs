//! C ABI for `qarrival`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `qa_*_new`/`qa_*_from_*` call and released with the matching `qa_*_free`.
//! Fallible calls return a [`QaStatus`]; on failure a message is kept per
//! thread and can be copied out with [`qa_last_error`]. Panics never unwind
//! into C: they are caught and reported as [`QaStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qarrival::arrival::{auto_distribution, mean_arrival, moment_report, ArrivalOptions, WindowPolicy};
use qarrival::config::OutputFormat;
use qarrival::output::write_bundle;
use qarrival::pipeline::{self, RunOptions};
use qarrival::scattering::{barrier_arrival_auto, Segment};
use qarrival::{
    build_gaussian, solve_coefficients, transmitted_packet, ArrivalDistribution, Error, ExperimentConfig,
    GaussianSpec, MomentumGrid, PotentialSpec, ResultBundle, RunError, UnitSystem, WavePacket,
};

/// Result of every fallible call. `Ok` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    /// Packet is not confined to one half-line of momentum.
    NotDirected = 5,
    /// Time window or grid could not capture the distribution.
    Window = 6,
    /// Detector sits inside the interaction region.
    NotAsymptotic = 7,
    Numerical = 8,
    Io = 9,
    /// Caller's buffer is shorter than the data; nothing was written.
    BufferTooSmall = 10,
    Panic = 11,
}

/// Free-evolving momentum-space packet.
pub struct QaPacket(WavePacket);

/// Sampled arrival-time density at one detector.
pub struct QaDistribution(ArrivalDistribution);

/// Parsed experiment config.
pub struct QaConfig(ExperimentConfig);

/// Output of a batch pipeline run.
pub struct QaBundle(ResultBundle);

/// Batch pipeline selector for [`qa_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QaCommand {
    Free = 0,
    Barrier = 1,
    Compare = 2,
    Uncertainty = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QaFormat {
    Csv = 0,
    Json = 1,
}

/// Arrival-time and energy moments of a distribution.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QaMoments {
    pub mean: f64,
    pub spread: f64,
    pub energy_mean: f64,
    pub energy_spread: f64,
    /// `ΔE·Δt`.
    pub product: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn core_status(e: &Error) -> QaStatus {
    match e {
        Error::InvalidParameter { .. } | Error::NonFiniteSupport => QaStatus::InvalidArgument,
        Error::DirectionalityViolation { .. } => QaStatus::NotDirected,
        Error::WindowTooNarrow { .. } | Error::EmptyGrid { .. } | Error::GridMismatch => QaStatus::Window,
        Error::NotAsymptotic { .. } => QaStatus::NotAsymptotic,
        _ => QaStatus::Numerical,
    }
}

struct Failure(QaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(core_status(&e), e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let status = match &e {
            RunError::Config(_) => QaStatus::Config,
            RunError::Numerical { source, .. } => core_status(source),
            RunError::Io { .. } => QaStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            QaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(QaStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(QaStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// always NUL-terminated when `len > 0`). Returns the full message length in
/// bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qa_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Gaussian packet centred at `x0` with mean momentum `p0` and width
/// `sigma_p`, sampled on `points` momenta spanning `p0 ± 8 sigma_p`.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a packet to be
/// released with [`qa_packet_free`].
#[no_mangle]
pub unsafe extern "C" fn qa_packet_gaussian(
    p0: f64,
    sigma_p: f64,
    x0: f64,
    hbar: f64,
    mass: f64,
    points: usize,
    out: *mut *mut QaPacket,
) -> QaStatus {
    guard(|| {
        let spec = GaussianSpec::new(p0, sigma_p, x0).with_units(UnitSystem::new(hbar, mass)?);
        spec.validate()?;
        let grid = MomentumGrid::covering(p0, 8.0 * sigma_p, points, spec.direction()?)?;
        put(out, QaPacket(build_gaussian(&spec, &grid)?))
    })
}

/// Probability carried by the packet, `Σ w |ψ̃|²`.
///
/// # Safety
/// `packet` must be null or a live packet handle.
#[no_mangle]
pub unsafe extern "C" fn qa_packet_norm(packet: *const QaPacket) -> f64 {
    packet.as_ref().map_or(f64::NAN, |p| p.0.total_probability())
}

/// # Safety
/// `packet` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qa_packet_free(packet: *mut QaPacket) {
    release(packet)
}

fn segments(lefts: &[f64], rights: &[f64], heights: &[f64]) -> PotentialSpec {
    let segments = lefts
        .iter()
        .zip(rights)
        .zip(heights)
        .map(|((&left, &right), &height)| Segment { left, right, height })
        .collect();
    PotentialSpec::PiecewiseConstant { segments }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Transmitted part of a right-moving `packet` behind a piecewise-constant
/// potential: segment `i` has height `heights[i]` on `[lefts[i], rights[i])`.
/// The result is unnormalized; its norm is the transmittance.
///
/// # Safety
/// The three arrays must each hold `n` values; `out` as in
/// [`qa_packet_gaussian`].
#[no_mangle]
pub unsafe extern "C" fn qa_packet_transmit(
    packet: *const QaPacket,
    lefts: *const f64,
    rights: *const f64,
    heights: *const f64,
    n: usize,
    out: *mut *mut QaPacket,
) -> QaStatus {
    guard(|| {
        let packet = &get(packet, "packet")?.0;
        let v = segments(slice(lefts, n, "lefts")?, slice(rights, n, "rights")?, slice(heights, n, "heights")?);
        let coeffs = solve_coefficients(&v, packet.grid(), packet.units())?;
        put(out, QaPacket(transmitted_packet(packet, &coeffs)?))
    })
}

/// Arrival-time density of a free `packet` at `detector` on an automatically
/// sized window of at least `samples` points.
///
/// # Safety
/// `packet` must be a live handle; `out` as in [`qa_packet_gaussian`].
#[no_mangle]
pub unsafe extern "C" fn qa_distribution_from_packet(
    packet: *const QaPacket,
    detector: f64,
    samples: usize,
    out: *mut *mut QaDistribution,
) -> QaStatus {
    guard(|| {
        let packet = &get(packet, "packet")?.0;
        let policy = WindowPolicy { samples, ..WindowPolicy::default() };
        let (dist, _) = auto_distribution(packet, detector, &policy, &ArrivalOptions::default())?;
        put(out, QaDistribution(dist))
    })
}

/// Transmitted arrival-time density of the incoming `packet` at `detector`
/// behind a piecewise-constant potential (segments as in
/// [`qa_packet_transmit`]). Its total is the transmittance.
///
/// # Safety
/// As for [`qa_packet_transmit`].
#[no_mangle]
pub unsafe extern "C" fn qa_distribution_barrier(
    packet: *const QaPacket,
    lefts: *const f64,
    rights: *const f64,
    heights: *const f64,
    n: usize,
    detector: f64,
    samples: usize,
    out: *mut *mut QaDistribution,
) -> QaStatus {
    guard(|| {
        let packet = &get(packet, "packet")?.0;
        let v = segments(slice(lefts, n, "lefts")?, slice(rights, n, "rights")?, slice(heights, n, "heights")?);
        let coeffs = solve_coefficients(&v, packet.grid(), packet.units())?;
        let policy = WindowPolicy { samples, ..WindowPolicy::default() };
        let (dist, _) = barrier_arrival_auto(packet, &coeffs, detector, &policy, &ArrivalOptions::default())?;
        put(out, QaDistribution(dist))
    })
}

/// Number of time samples.
///
/// # Safety
/// `dist` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qa_distribution_len(dist: *const QaDistribution) -> usize {
    dist.as_ref().map_or(0, |d| d.0.values.len())
}

/// `Σ w Π`, the captured probability.
///
/// # Safety
/// `dist` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qa_distribution_total(dist: *const QaDistribution) -> f64 {
    dist.as_ref().map_or(f64::NAN, |d| d.0.total)
}

/// Copies physical arrival times and densities into `times` and `values`,
/// each of capacity `len`. Either pointer may be null to skip it.
///
/// # Safety
/// Non-null buffers must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qa_distribution_copy(
    dist: *const QaDistribution,
    times: *mut f64,
    values: *mut f64,
    len: usize,
) -> QaStatus {
    guard(|| {
        let d = &get(dist, "dist")?.0;
        let n = d.values.len();
        if len < n {
            return Err(Failure(QaStatus::BufferTooSmall, format!("need {n} slots, got {len}")));
        }
        if !times.is_null() {
            for (j, &tau) in d.time_grid.samples().iter().enumerate() {
                *times.add(j) = d.physical_time(tau);
            }
        }
        if !values.is_null() {
            ptr::copy_nonoverlapping(d.values.as_ptr(), values, n);
        }
        Ok(())
    })
}

/// Mean physical arrival time of the conditional distribution.
///
/// # Safety
/// `dist` must be a live handle and `mean` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qa_distribution_mean(dist: *const QaDistribution, mean: *mut f64) -> QaStatus {
    guard(|| {
        let d = &get(dist, "dist")?.0;
        let m = mean_arrival(d)?;
        *mean.as_mut().ok_or_else(|| null("mean"))? = m;
        Ok(())
    })
}

/// Arrival and energy moments; `packet` must be the packet `dist` was
/// computed from (the transmitted one behind a barrier).
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qa_distribution_moments(
    packet: *const QaPacket,
    dist: *const QaDistribution,
    out: *mut QaMoments,
) -> QaStatus {
    guard(|| {
        let r = moment_report(&get(packet, "packet")?.0, &get(dist, "dist")?.0)?;
        *out.as_mut().ok_or_else(|| null("out"))? = QaMoments {
            mean: r.mean,
            spread: r.spread,
            energy_mean: r.energy_mean,
            energy_spread: r.energy_spread,
            product: r.product,
        };
        Ok(())
    })
}

/// # Safety
/// `dist` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qa_distribution_free(dist: *mut QaDistribution) {
    release(dist)
}

/// Parses a TOML experiment config.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` as in [`qa_packet_gaussian`].
#[no_mangle]
pub unsafe extern "C" fn qa_config_from_toml(toml: *const c_char, out: *mut *mut QaConfig) -> QaStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml_str(text(toml, "toml")?).map_err(RunError::from)?;
        put(out, QaConfig(cfg))
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qa_config_free(cfg: *mut QaConfig) {
    release(cfg)
}

/// Runs a batch pipeline. `seed` overrides the ensemble seed when
/// `use_seed` is nonzero.
///
/// # Safety
/// `cfg` must be a live handle; `out` as in [`qa_packet_gaussian`].
#[no_mangle]
pub unsafe extern "C" fn qa_run(
    cfg: *const QaConfig,
    command: QaCommand,
    use_seed: i32,
    seed: u64,
    out: *mut *mut QaBundle,
) -> QaStatus {
    guard(|| {
        let cfg = &get(cfg, "cfg")?.0;
        let bundle = match command {
            QaCommand::Free => pipeline::run_free(cfg),
            QaCommand::Barrier => pipeline::run_barrier(cfg),
            QaCommand::Compare => pipeline::run_compare(cfg),
            QaCommand::Uncertainty => {
                pipeline::run_uncertainty(cfg, RunOptions { seed: (use_seed != 0).then_some(seed) })
            }
        }?;
        put(out, QaBundle(bundle))
    })
}

/// 1 when every verdict passed, 0 otherwise (also for a null handle).
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qa_bundle_passed(bundle: *const QaBundle) -> i32 {
    bundle.as_ref().map_or(0, |b| b.0.passed() as i32)
}

/// Number of verdicts in the bundle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qa_bundle_verdict_count(bundle: *const QaBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.0.verdicts.len())
}

/// Value and outcome of verdict `index`.
///
/// # Safety
/// `bundle` must be a live handle; `value` and `pass` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn qa_bundle_verdict(
    bundle: *const QaBundle,
    index: usize,
    value: *mut f64,
    pass: *mut i32,
) -> QaStatus {
    guard(|| {
        let b = &get(bundle, "bundle")?.0;
        let v = b.verdicts.get(index).ok_or_else(|| {
            Failure(QaStatus::InvalidArgument, format!("verdict {index} of {}", b.verdicts.len()))
        })?;
        *value.as_mut().ok_or_else(|| null("value"))? = v.value;
        *pass.as_mut().ok_or_else(|| null("pass"))? = v.pass as i32;
        Ok(())
    })
}

/// Writes the bundle's tables into directory `dir`, creating it if needed.
///
/// # Safety
/// `bundle` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn qa_bundle_write(bundle: *const QaBundle, dir: *const c_char, format: QaFormat) -> QaStatus {
    guard(|| {
        let b = &get(bundle, "bundle")?.0;
        let dir = Path::new(text(dir, "dir")?);
        let format = match format {
            QaFormat::Csv => OutputFormat::Csv,
            QaFormat::Json => OutputFormat::Json,
        };
        write_bundle(b, dir, format)?;
        Ok(())
    })
}

/// # Safety
/// `bundle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qa_bundle_free(bundle: *mut QaBundle) {
    release(bundle)
}
