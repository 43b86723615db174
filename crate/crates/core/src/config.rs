//! Experiment configuration.
//!
//! Configs are TOML documents written as dotted keys (`packet.p0 = 5.0`) or
//! the equivalent `[section]` tables. Every section except `packet` has
//! defaults; unknown keys are rejected. See `docs/config.md` for the full key
//! reference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrival::{ArrivalOptions, Evaluator, WindowPolicy};
use crate::evolve::Derivative;
use crate::packet::GaussianSpec;
use crate::scattering::{PotentialSpec, Segment};
use crate::units::{Direction, UnitSystem};

/// A config that cannot be run, with the offending key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }
}

impl From<crate::Error> for ConfigError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidParameter { field, reason } => ConfigError::new(field, reason),
            crate::Error::NonFiniteSupport => ConfigError::new("potential", e.to_string()),
            crate::Error::DirectionalityViolation { .. } => ConfigError::new("packet.sigma_p", e.to_string()),
            other => ConfigError::new("config", other.to_string()),
        }
    }
}

type Checked<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub units: UnitsConfig,
    pub packet: PacketConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialConfig>,
    #[serde(default)]
    pub detectors: DetectorConfig,
    #[serde(default)]
    pub time_grid: TimeGridConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backflow: Option<BackflowConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitsConfig {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for UnitsConfig {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub p0: f64,
    pub sigma_p: f64,
    pub x0: f64,
    /// `"+"` or `"-"`; must agree with the sign of `p0` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Momentum grid half-width in units of `sigma_p`.
    #[serde(default = "default_grid_span")]
    pub grid_span: f64,
    #[serde(default = "default_directionality")]
    pub directionality_threshold: f64,
}

fn default_grid_points() -> usize {
    4096
}
fn default_grid_span() -> f64 {
    8.0
}
fn default_directionality() -> f64 {
    5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Rectangular,
    DoubleRectangular,
    GaussianBump,
    Segments,
    Sampled,
}

/// Flat potential description; which keys are required depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// `[[left, right, height], ...]` for `kind = "segments"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub positions: Vec<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { positions: vec![0.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGridMode {
    Auto,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorChoice {
    Direct,
    Chirp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeGridConfig {
    pub mode: TimeGridMode,
    /// τ bounds for `mode = "explicit"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    pub n: usize,
    /// Initial half-width of the auto window in arrival-spread units.
    pub half_width: f64,
    pub window_tolerance: f64,
    pub max_refinements: usize,
    pub evaluator: EvaluatorChoice,
}

impl Default for TimeGridConfig {
    fn default() -> Self {
        let p = WindowPolicy::default();
        Self {
            mode: TimeGridMode::Auto,
            start: None,
            end: None,
            n: p.samples,
            half_width: p.half_width,
            window_tolerance: p.tolerance,
            max_refinements: p.max_refinements,
            evaluator: EvaluatorChoice::Direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub enabled: bool,
    pub derivative: Derivative,
    /// Run length; defaults to the end of the latest arrival window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { enabled: false, derivative: Derivative::Spectral, t_end: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// `|∫Π dτ - ‖ψ‖²|` for free distributions.
    pub normalization: f64,
    /// `|∫Π_tr dτ - Σ w|T|²|ψ̃|²|` behind a barrier.
    pub transmittance: f64,
    /// `|∫J dt - transmittance|` for the oracle behind a barrier.
    pub flux_throughput: f64,
    /// Relative gap between analytic and flux means.
    pub flux_gap: f64,
    /// Slack below `ħ/2` for the time–energy product.
    pub uncertainty: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { normalization: 1e-6, transmittance: 1e-6, flux_throughput: 1e-3, flux_gap: 0.01, uncertainty: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, format: OutputFormat::Csv }
    }
}

/// Random Gaussian family for the uncertainty scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub seed: u64,
    pub p0: [f64; 2],
    pub sigma_p: [f64; 2],
    pub x0: [f64; 2],
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { members: 100, seed: 0, p0: [4.0, 8.0], sigma_p: [0.2, 0.4], x0: [-30.0, -10.0] }
    }
}

/// Two positive-momentum Gaussians, `ψ = g(p1) + ratio · g(p2)`, both centered
/// to cross `detector` at `crossing_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackflowConfig {
    pub enabled: bool,
    pub p1: f64,
    pub p2: f64,
    pub sigma_p: f64,
    pub ratio: f64,
    pub crossing_time: f64,
    pub detector: f64,
    pub grid_points: usize,
}

impl Default for BackflowConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            p1: 3.0,
            p2: 12.0,
            sigma_p: 0.3,
            ratio: 0.5,
            crossing_time: 4.0,
            detector: 0.0,
            grid_points: 4096,
        }
    }
}

fn require(value: Option<f64>, field: &str) -> Checked<f64> {
    match value {
        Some(v) if v.is_finite() => Ok(v),
        Some(_) => Err(ConfigError::new(field, "must be finite")),
        None => Err(ConfigError::new(field, "required for this potential kind")),
    }
}

fn positive(value: f64, field: &str) -> Checked<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ConfigError::new(field, format!("must be positive, got {value}")))
    }
}

impl PotentialConfig {
    pub fn to_spec(&self) -> Checked<PotentialSpec> {
        let spec = match self.kind {
            PotentialKind::Zero => PotentialSpec::Zero,
            PotentialKind::Rectangular => PotentialSpec::rectangular(
                require(self.height, "potential.height")?,
                require(self.left, "potential.left")?,
                positive(require(self.width, "potential.width")?, "potential.width")?,
            ),
            PotentialKind::DoubleRectangular => {
                let gap = require(self.gap, "potential.gap")?;
                if gap < 0.0 {
                    return Err(ConfigError::new("potential.gap", "must be non-negative"));
                }
                PotentialSpec::double_rectangular(
                    require(self.height, "potential.height")?,
                    require(self.left, "potential.left")?,
                    positive(require(self.width, "potential.width")?, "potential.width")?,
                    gap,
                )
            }
            PotentialKind::GaussianBump => PotentialSpec::gaussian_bump(
                require(self.height, "potential.height")?,
                require(self.center, "potential.center")?,
                positive(require(self.width, "potential.width")?, "potential.width")?,
                self.samples.unwrap_or(801),
            ),
            PotentialKind::Segments => {
                let raw = self
                    .segments
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("potential.segments", "required for kind = \"segments\""))?;
                PotentialSpec::PiecewiseConstant {
                    segments: raw.iter().map(|s| Segment { left: s[0], right: s[1], height: s[2] }).collect(),
                }
            }
            PotentialKind::Sampled => PotentialSpec::Sampled {
                xs: self.xs.clone().ok_or_else(|| ConfigError::new("potential.xs", "required for kind = \"sampled\""))?,
                values: self
                    .values
                    .clone()
                    .ok_or_else(|| ConfigError::new("potential.values", "required for kind = \"sampled\""))?,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Checked<Self> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            // toml reports unknown keys and type errors with the key in the message
            let field = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field"))
                .unwrap_or("config")
                .to_string();
            ConfigError::new(field, message)
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn units(&self) -> Checked<UnitSystem> {
        let u = UnitSystem::new(self.units.hbar, self.units.mass)?;
        Ok(u)
    }

    pub fn gaussian(&self) -> Checked<GaussianSpec> {
        let p = &self.packet;
        let mut spec = GaussianSpec::new(p.p0, p.sigma_p, p.x0).with_units(self.units()?);
        spec.directionality_threshold = p.directionality_threshold;
        spec.validate()?;
        let dir = spec.direction()?;
        if let Some(d) = &p.direction {
            let wanted = match d.as_str() {
                "+" => Direction::Plus,
                "-" => Direction::Minus,
                other => return Err(ConfigError::new("packet.direction", format!("expected \"+\" or \"-\", got {other:?}"))),
            };
            if wanted != dir {
                return Err(ConfigError::new("packet.direction", "disagrees with the sign of packet.p0"));
            }
        }
        if p.grid_points < 16 {
            return Err(ConfigError::new("packet.grid_points", "need at least 16 momentum nodes"));
        }
        positive(p.grid_span, "packet.grid_span")?;
        Ok(spec)
    }

    pub fn potential_spec(&self) -> Checked<Option<PotentialSpec>> {
        self.potential.as_ref().map(|p| p.to_spec()).transpose()
    }

    pub fn window_policy(&self) -> WindowPolicy {
        let t = &self.time_grid;
        WindowPolicy {
            samples: t.n,
            half_width: t.half_width,
            tolerance: t.window_tolerance,
            max_refinements: t.max_refinements,
        }
    }

    pub fn arrival_options(&self) -> ArrivalOptions {
        ArrivalOptions {
            evaluator: match self.time_grid.evaluator {
                EvaluatorChoice::Direct => Evaluator::Direct,
                EvaluatorChoice::Chirp => Evaluator::Chirp,
            },
            ..ArrivalOptions::default()
        }
    }

    /// Checks everything that can be checked without running a pipeline.
    pub fn validate(&self) -> Checked<()> {
        self.gaussian()?;
        self.potential_spec()?;
        if self.detectors.positions.is_empty() {
            return Err(ConfigError::new("detectors.positions", "need at least one detector"));
        }
        if self.detectors.positions.iter().any(|x| !x.is_finite()) {
            return Err(ConfigError::new("detectors.positions", "positions must be finite"));
        }
        let t = &self.time_grid;
        if t.n < 16 {
            return Err(ConfigError::new("time_grid.n", "need at least 16 samples"));
        }
        if t.mode == TimeGridMode::Explicit {
            let start = t.start.ok_or_else(|| ConfigError::new("time_grid.start", "required for mode = \"explicit\""))?;
            let end = t.end.ok_or_else(|| ConfigError::new("time_grid.end", "required for mode = \"explicit\""))?;
            if !(start.is_finite() && end.is_finite() && end > start) {
                return Err(ConfigError::new("time_grid.end", "need finite start < end"));
            }
        } else {
            positive(t.half_width, "time_grid.half_width")?;
            positive(t.window_tolerance, "time_grid.window_tolerance")?;
        }
        if let Some(t_end) = self.oracle.t_end {
            positive(t_end, "oracle.t_end")?;
        }
        let tol = &self.tolerances;
        for (v, name) in [
            (tol.normalization, "tolerances.normalization"),
            (tol.transmittance, "tolerances.transmittance"),
            (tol.flux_throughput, "tolerances.flux_throughput"),
            (tol.flux_gap, "tolerances.flux_gap"),
            (tol.uncertainty, "tolerances.uncertainty"),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::new(name, "must be a non-negative number"));
            }
        }
        if let Some(e) = &self.ensemble {
            if e.members == 0 {
                return Err(ConfigError::new("ensemble.members", "ensemble is empty"));
            }
            for (r, name) in [(e.p0, "ensemble.p0"), (e.sigma_p, "ensemble.sigma_p"), (e.x0, "ensemble.x0")] {
                if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                    return Err(ConfigError::new(name, "need a finite range [lo, hi] with lo ≤ hi"));
                }
            }
            if e.sigma_p[0] <= 0.0 {
                return Err(ConfigError::new("ensemble.sigma_p", "widths must be positive"));
            }
            if e.p0[0] * e.p0[1] <= 0.0 {
                return Err(ConfigError::new("ensemble.p0", "range must not contain zero"));
            }
        }
        if let Some(b) = &self.backflow {
            positive(b.p1, "backflow.p1")?;
            positive(b.p2, "backflow.p2")?;
            positive(b.sigma_p, "backflow.sigma_p")?;
            positive(b.crossing_time, "backflow.crossing_time")?;
            if !b.ratio.is_finite() {
                return Err(ConfigError::new("backflow.ratio", "must be finite"));
            }
        }
        Ok(())
    }
}
