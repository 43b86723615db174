//! The batch pipelines behind the `qarrival` subcommands.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arrival::{
    arrival_distribution_with, auto_distribution, free_evolve, moment_report, ArrivalDistribution,
    MomentReport, TimeGrid,
};
use crate::config::{ConfigError, EnsembleConfig, ExperimentConfig, TimeGridMode, Tolerances};
use crate::error::Error;
use crate::evolve::{flux_mean_arrival, oracle_setup, to_position, FluxRecord};
use crate::grid::MomentumGrid;
use crate::packet::{build_gaussian, build_superposition, GaussianSpec, WavePacket};
use crate::scattering::{
    asymptotic_threshold, solve_coefficients, transmittance, transmitted_packet, PotentialSpec,
    ScatteringCoefficients, UNITARITY_TOL,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Numerical { context: String, source: Error },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl RunError {
    /// 2 for configuration problems, 3 for everything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical { .. } | RunError::Io { .. } => 3,
        }
    }
}

fn numerical(context: impl Into<String>) -> impl FnOnce(Error) -> RunError {
    let context = context.into();
    move |source| match source {
        Error::WindowTooNarrow { .. } => RunError::Config(ConfigError::new("time_grid", source.to_string())),
        Error::NotAsymptotic { .. } => RunError::Config(ConfigError::new("detectors.positions", source.to_string())),
        source => RunError::Numerical { context, source },
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// A named pass/fail check with the number it was decided on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    /// Human-readable rule, e.g. `|value| <= 1e-6`.
    pub criterion: String,
    pub pass: bool,
}

impl Verdict {
    fn within(name: String, deviation: f64, tolerance: f64) -> Self {
        Self { name, value: deviation, criterion: format!("|value| <= {tolerance:e}"), pass: deviation.abs() <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorResult {
    pub detector: f64,
    pub distribution: ArrivalDistribution,
    /// Moments of the conditional distribution.
    pub moments: MomentReport,
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmittanceSummary {
    /// `Σ w |T|² |ψ̃_in|²`.
    pub quadrature: f64,
    pub unitarity_defect: f64,
    /// `(X, ∫Π_tr dτ)` per detector.
    pub integrated: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxComparison {
    pub detector: f64,
    pub analytic_mean: f64,
    pub flux_mean: f64,
    pub relative_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub throughput: f64,
    pub expected_throughput: f64,
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleGrid {
    pub points: usize,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub t_start: f64,
    pub max_norm_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackflowReport {
    pub detector: f64,
    pub min_current: f64,
    pub min_current_time: f64,
    pub min_density: f64,
    pub flux: FluxRecord,
    pub distribution: ArrivalDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyRow {
    pub p0: f64,
    pub sigma_p: f64,
    pub x0: f64,
    pub energy_spread: f64,
    pub time_spread: f64,
    /// `ΔE Δt / ħ`.
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyReport {
    pub detector: f64,
    pub transmitted: bool,
    pub rows: Vec<UncertaintyRow>,
    pub minimum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub config_echo: String,
    pub momentum_points: usize,
    pub time_points: Vec<usize>,
    pub oracle: Option<OracleGrid>,
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
}

/// Everything a pipeline produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultBundle {
    pub detectors: Vec<DetectorResult>,
    pub coefficients: Option<ScatteringCoefficients>,
    pub transmittance: Option<TransmittanceSummary>,
    pub comparisons: Vec<FluxComparison>,
    pub backflow: Option<BackflowReport>,
    pub uncertainty: Option<UncertaintyReport>,
    pub verdicts: Vec<Verdict>,
    pub provenance: Provenance,
}

impl ResultBundle {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Per-run knobs that are not part of the experiment itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Overrides `ensemble.seed`.
    pub seed: Option<u64>,
}

fn build_packet(spec: &GaussianSpec, points: usize, span: f64) -> RunResult<WavePacket> {
    let dir = spec.direction().map_err(ConfigError::from)?;
    let grid = MomentumGrid::covering(spec.p0, span * spec.sigma_p, points, dir).map_err(ConfigError::from)?;
    build_gaussian(spec, &grid).map_err(|e| match e {
        Error::DirectionalityViolation { .. } | Error::InvalidParameter { .. } => ConfigError::from(e).into(),
        other => numerical("building the packet")(other),
    })
}

fn config_packet(cfg: &ExperimentConfig) -> RunResult<WavePacket> {
    build_packet(&cfg.gaussian()?, cfg.packet.grid_points, cfg.packet.grid_span)
}

fn distribution(cfg: &ExperimentConfig, packet: &WavePacket, detector: f64) -> RunResult<ArrivalDistribution> {
    let context = format!("arrival distribution at X = {detector}");
    let opts = cfg.arrival_options();
    let dist = match cfg.time_grid.mode {
        TimeGridMode::Auto => auto_distribution(packet, detector, &cfg.window_policy(), &opts).map(|(d, _)| d),
        TimeGridMode::Explicit => {
            let t = &cfg.time_grid;
            let grid = TimeGrid::uniform(t.start.unwrap_or(0.0), t.end.unwrap_or(0.0), t.n).map_err(ConfigError::from)?;
            arrival_distribution_with(packet, detector, &grid, &opts)
        }
    };
    dist.map_err(numerical(context))
}

fn analyze(cfg: &ExperimentConfig, packet: &WavePacket) -> RunResult<Vec<DetectorResult>> {
    cfg.detectors
        .positions
        .par_iter()
        .map(|&x| {
            let dist = distribution(cfg, packet, x)?;
            let moments = moment_report(packet, &dist).map_err(numerical(format!("moments at X = {x}")))?;
            Ok(DetectorResult { detector: x, truncation_bound: dist.truncation_bound(), moments, distribution: dist })
        })
        .collect()
}

fn provenance(cfg: &ExperimentConfig, command: &str, packet: &WavePacket, detectors: &[DetectorResult]) -> Provenance {
    Provenance {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_echo: cfg.to_toml_string(),
        momentum_points: packet.grid().len(),
        time_points: detectors.iter().map(|d| d.distribution.time_grid.len()).collect(),
        oracle: None,
        tolerances: cfg.tolerances,
        seed: None,
    }
}

fn empty_bundle(prov: Provenance, detectors: Vec<DetectorResult>) -> ResultBundle {
    ResultBundle {
        detectors,
        coefficients: None,
        transmittance: None,
        comparisons: Vec::new(),
        backflow: None,
        uncertainty: None,
        verdicts: Vec::new(),
        provenance: prov,
    }
}

fn normalization_verdicts(detectors: &[DetectorResult], tol: f64) -> Vec<Verdict> {
    detectors
        .iter()
        .map(|d| {
            let dist = &d.distribution;
            Verdict::within(format!("normalization@X={}", d.detector), dist.total - dist.expected_total, tol)
        })
        .collect()
}

/// Free distributions, moments and (optionally) the oracle comparison.
pub fn run_free(cfg: &ExperimentConfig) -> RunResult<ResultBundle> {
    cfg.validate()?;
    if cfg.potential.is_some() {
        return Err(ConfigError::new("potential", "the free pipeline takes no potential; use `barrier`").into());
    }
    let packet = config_packet(cfg)?;
    let detectors = analyze(cfg, &packet)?;
    let mut bundle = empty_bundle(provenance(cfg, "free", &packet, &detectors), Vec::new());
    bundle.verdicts = normalization_verdicts(&detectors, cfg.tolerances.normalization);
    if cfg.oracle.enabled {
        attach_oracle(cfg, &packet, &PotentialSpec::Zero, 1.0, &detectors, &mut bundle)?;
    }
    bundle.detectors = detectors;
    Ok(bundle)
}

struct Barrier {
    coefficients: ScatteringCoefficients,
    transmitted: WavePacket,
    quadrature: f64,
}

fn barrier_setup(cfg: &ExperimentConfig, packet: &WavePacket, potential: &PotentialSpec) -> RunResult<Barrier> {
    if packet.grid().min() <= 0.0 {
        return Err(ConfigError::new("packet.p0", "the barrier pipeline needs a right-moving packet").into());
    }
    let coefficients =
        solve_coefficients(potential, packet.grid(), packet.units()).map_err(numerical("scattering coefficients"))?;
    if let Some(min_allowed) = asymptotic_threshold(packet, coefficients.support) {
        if let Some(&x) = cfg.detectors.positions.iter().find(|&&x| x < min_allowed) {
            return Err(numerical("detectors")(Error::NotAsymptotic { detector: x, min_allowed }));
        }
    }
    let transmitted = transmitted_packet(packet, &coefficients).map_err(numerical("transmitted packet"))?;
    let quadrature = transmittance(packet, &coefficients).map_err(numerical("transmittance"))?;
    Ok(Barrier { coefficients, transmitted, quadrature })
}

/// Transmitted distributions behind the configured potential.
pub fn run_barrier(cfg: &ExperimentConfig) -> RunResult<ResultBundle> {
    cfg.validate()?;
    let potential = cfg
        .potential_spec()?
        .ok_or_else(|| ConfigError::new("potential", "the barrier pipeline needs a potential section"))?;
    let packet = config_packet(cfg)?;
    let barrier = barrier_setup(cfg, &packet, &potential)?;
    let detectors = analyze(cfg, &barrier.transmitted)?;
    let mut bundle = empty_bundle(provenance(cfg, "barrier", &packet, &detectors), Vec::new());
    let defect = barrier.coefficients.unitarity_defect();
    bundle.verdicts.push(Verdict::within("unitarity".into(), defect, UNITARITY_TOL));
    for d in &detectors {
        bundle.verdicts.push(Verdict::within(
            format!("transmittance@X={}", d.detector),
            d.distribution.total - barrier.quadrature,
            cfg.tolerances.transmittance,
        ));
    }
    bundle.transmittance = Some(TransmittanceSummary {
        quadrature: barrier.quadrature,
        unitarity_defect: defect,
        integrated: detectors.iter().map(|d| (d.detector, d.distribution.total)).collect(),
    });
    if cfg.oracle.enabled {
        attach_oracle(cfg, &packet, &potential, barrier.quadrature, &detectors, &mut bundle)?;
    }
    bundle.coefficients = Some(barrier.coefficients);
    bundle.detectors = detectors;
    Ok(bundle)
}

/// Analytic against flux means for every detector, plus the backflow case when
/// `backflow.enabled`.
pub fn run_compare(cfg: &ExperimentConfig) -> RunResult<ResultBundle> {
    cfg.validate()?;
    if !cfg.oracle.enabled {
        return Err(ConfigError::new("oracle.enabled", "compare needs the time-domain oracle").into());
    }
    let mut bundle = match cfg.potential_spec()? {
        Some(_) => run_barrier(cfg)?,
        None => run_free(cfg)?,
    };
    bundle.provenance.command = "compare".into();
    if let Some(b) = cfg.backflow.as_ref().filter(|b| b.enabled) {
        let report = backflow(cfg, b)?;
        bundle.verdicts.push(Verdict {
            name: "backflow_min_density".into(),
            value: report.min_density,
            criterion: "value >= 0".into(),
            pass: report.min_density >= 0.0,
        });
        bundle.verdicts.push(Verdict {
            name: "backflow_min_current".into(),
            value: report.min_current,
            criterion: "value < 0".into(),
            pass: report.min_current < 0.0,
        });
        bundle.backflow = Some(report);
    }
    Ok(bundle)
}

/// Runs the split-operator oracle from the incoming packet and compares flux
/// means with the analytic ones in `detectors`.
fn attach_oracle(
    cfg: &ExperimentConfig,
    packet: &WavePacket,
    potential: &PotentialSpec,
    expected_throughput: f64,
    detectors: &[DetectorResult],
    bundle: &mut ResultBundle,
) -> RunResult<()> {
    let sign = packet.direction().sign();
    let window = |d: &DetectorResult| {
        let g = &d.distribution.time_grid;
        let (a, b) = (sign * g.start(), sign * g.end());
        (a.min(b), a.max(b))
    };
    // start early enough that no detector has seen the packet yet
    let t_start = detectors.iter().map(|d| window(d).0).fold(0.0_f64, f64::min);
    let t_end = cfg.oracle.t_end.unwrap_or_else(|| detectors.iter().map(|d| window(d).1).fold(f64::MIN, f64::max));
    if t_end <= t_start {
        return Err(ConfigError::new("oracle.t_end", "run must end after it starts").into());
    }
    let start = free_evolve(packet, t_start);
    if let Some((left, right)) = potential.support() {
        let (x, sx) = start.position_moments();
        let clear = if sign > 0.0 { x + 6.0 * sx < left } else { x - 6.0 * sx > right };
        if !clear {
            return Err(ConfigError::new("packet.x0", "the packet must start clear of the potential").into());
        }
    }
    let positions = &cfg.detectors.positions;
    let (ev, steps) = oracle_setup(&start, potential, positions, t_end - t_start).map_err(numerical("oracle setup"))?;
    let psi0 = to_position(&start, &ev.grid, 0.0).map_err(numerical("oracle initial state"))?;
    let run = ev.flux(psi0, positions, steps, cfg.oracle.derivative).map_err(numerical("oracle run"))?;
    bundle.provenance.oracle = Some(OracleGrid {
        points: ev.grid.len(),
        dx: ev.grid.dx(),
        dt: ev.dt,
        steps,
        t_start,
        max_norm_drift: run.max_norm_drift,
    });
    let tol = cfg.tolerances;
    for (rec, d) in run.records.iter().zip(detectors) {
        let oriented = FluxRecord {
            detector: rec.detector,
            times: rec.times.iter().map(|t| t + t_start).collect(),
            current: rec.current.iter().map(|j| sign * j).collect(),
        };
        let context = format!("flux mean at X = {}", d.detector);
        let flux_mean = flux_mean_arrival(&oriented).map_err(numerical(context))?;
        let analytic = d.moments.mean;
        let gap = ((flux_mean - analytic) / analytic).abs();
        let throughput = oriented.throughput();
        bundle.verdicts.push(Verdict::within(format!("flux_gap@X={}", d.detector), gap, tol.flux_gap));
        bundle.verdicts.push(Verdict::within(
            format!("flux_throughput@X={}", d.detector),
            throughput - expected_throughput,
            tol.flux_throughput,
        ));
        bundle.comparisons.push(FluxComparison {
            detector: d.detector,
            analytic_mean: analytic,
            flux_mean,
            relative_gap: gap,
            tolerance: tol.flux_gap,
            pass: gap <= tol.flux_gap,
            throughput,
            expected_throughput,
            truncation_bound: d.truncation_bound,
        });
    }
    Ok(())
}

/// Two-mode positive-momentum packet: analytic density and oracle current at
/// the detector.
pub fn backflow(cfg: &ExperimentConfig, b: &crate::config::BackflowConfig) -> RunResult<BackflowReport> {
    let units = cfg.units()?;
    let component = |p: f64| {
        GaussianSpec::new(p, b.sigma_p, b.detector - p * b.crossing_time / units.mass).with_units(units)
    };
    let (lo, hi) = (b.p1.min(b.p2), b.p1.max(b.p2));
    let grid = MomentumGrid::uniform((lo - 10.0 * b.sigma_p).max(1e-3), hi + 10.0 * b.sigma_p, b.grid_points)
        .map_err(ConfigError::from)?;
    let packet = build_superposition(
        &[(Complex64::new(1.0, 0.0), component(b.p1)), (Complex64::new(b.ratio, 0.0), component(b.p2))],
        &grid,
    )
    .map_err(|e| RunError::from(ConfigError::from(e)))?;
    let (dist, _) = auto_distribution(&packet, b.detector, &cfg.window_policy(), &cfg.arrival_options())
        .map_err(numerical("backflow distribution"))?;
    let min_density = dist.values.iter().copied().fold(f64::INFINITY, f64::min);
    let (ev, steps) = oracle_setup(&packet, &PotentialSpec::Zero, &[b.detector], 2.0 * b.crossing_time)
        .map_err(numerical("backflow oracle setup"))?;
    let psi0 = to_position(&packet, &ev.grid, 0.0).map_err(numerical("backflow initial state"))?;
    let run = ev.flux(psi0, &[b.detector], steps, cfg.oracle.derivative).map_err(numerical("backflow oracle run"))?;
    let flux = run.records.into_iter().next().expect("one detector");
    let (min_current, min_current_time) = flux.min_current();
    Ok(BackflowReport { detector: b.detector, min_current, min_current_time, min_density, flux, distribution: dist })
}

/// Random Gaussians drawn from `ensemble`, in draw order.
pub fn ensemble_members(ensemble: &EnsembleConfig, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.gen_range(r[0]..r[1]) };
    (0..ensemble.members).map(|_| (draw(ensemble.p0), draw(ensemble.sigma_p), draw(ensemble.x0))).collect()
}

/// `ΔE Δt_X` over a random Gaussian ensemble, transmitted through the
/// configured potential when there is one.
pub fn run_uncertainty(cfg: &ExperimentConfig, opts: RunOptions) -> RunResult<ResultBundle> {
    cfg.validate()?;
    let ensemble = cfg.ensemble.clone().unwrap_or_default();
    let seed = opts.seed.unwrap_or(ensemble.seed);
    let members = ensemble_members(&ensemble, seed);
    let units = cfg.units()?;
    let potential = cfg.potential_spec()?;
    let detector = cfg.detectors.positions[0];
    let rows: Vec<UncertaintyRow> = members
        .par_iter()
        .map(|&(p0, sigma_p, x0)| {
            let spec = GaussianSpec::new(p0, sigma_p, x0).with_units(units);
            let packet = build_packet(&spec, cfg.packet.grid_points, cfg.packet.grid_span).map_err(|e| match e {
                RunError::Config(c) => ConfigError::new(
                    "ensemble",
                    format!("member p0 = {p0}, sigma_p = {sigma_p}, x0 = {x0}: {}", c.reason),
                )
                .into(),
                other => other,
            })?;
            let state = match &potential {
                Some(v) => barrier_setup(cfg, &packet, v)?.transmitted,
                None => packet,
            };
            let dist = distribution(cfg, &state, detector)?;
            let m = moment_report(&state, &dist).map_err(numerical(format!("moments for p0 = {p0}")))?;
            Ok(UncertaintyRow {
                p0,
                sigma_p,
                x0,
                energy_spread: m.energy_spread,
                time_spread: m.spread,
                product: m.product / units.hbar,
            })
        })
        .collect::<RunResult<_>>()?;
    let minimum = rows.iter().map(|r| r.product).fold(f64::INFINITY, f64::min);
    let bound = 0.5 - cfg.tolerances.uncertainty / units.hbar;
    let reference = config_packet(cfg)?;
    let mut prov = provenance(cfg, "uncertainty", &reference, &[]);
    prov.seed = Some(seed);
    let mut bundle = empty_bundle(prov, Vec::new());
    bundle.verdicts.push(Verdict {
        name: "uncertainty_min_product".into(),
        value: minimum,
        criterion: format!("value >= {bound}"),
        pass: minimum >= bound,
    });
    bundle.uncertainty = Some(UncertaintyReport { detector, transmitted: potential.is_some(), rows, minimum });
    Ok(bundle)
}

/// Config check only: parses, validates and builds the packet and potential.
pub fn validate(cfg: &ExperimentConfig) -> RunResult<()> {
    cfg.validate()?;
    config_packet(cfg)?;
    Ok(())
}
