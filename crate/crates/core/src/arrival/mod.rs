//! Arrival-time amplitudes `⟨t,±;X|ψ⟩`, the distribution `Π(τ;X)` and its
//! moments.
//!
//! The amplitude is evaluated in the momentum variable,
//!
//! ```text
//! ⟨t,±;X|ψ⟩ = h^{-1/2} ∫ dp √(|p|/m) exp(-i(E_p t - pX)/ħ) ψ̃(p),
//! ```
//!
//! which removes the `E^{-1/4}` endpoint singularity of the energy form. For a
//! packet moving to the right the distribution is `Π(τ) = |⟨t=+τ,+;X|ψ⟩|²`,
//! for one moving to the left `Π(τ) = |⟨t=-τ,-;X|ψ⟩|²`; physical arrival
//! times are `±τ` respectively.

mod chirp;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{cubic_interpolate, trapezoid_weights, validate_nodes};
use crate::packet::WavePacket;
use crate::units::{Direction, UnitSystem};

pub(crate) use chirp::chirp_z;

/// Ordered times with quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    samples: Vec<f64>,
    weights: Vec<f64>,
    spacing: Option<f64>,
}

impl TimeGrid {
    pub fn uniform(start: f64, end: f64, n: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(invalid("time_grid", format!("bad window [{start}, {end}]")));
        }
        if n < 2 {
            return Err(invalid("time_grid", "need at least two samples"));
        }
        let h = (end - start) / (n - 1) as f64;
        let samples = (0..n).map(|j| start + h * j as f64).collect();
        Ok(Self { samples, weights: trapezoid_weights(n, h), spacing: Some(h) })
    }

    pub fn from_parts(samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_nodes("time_grid", &samples, &weights)?;
        Ok(Self { samples, weights, spacing: None })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    pub fn start(&self) -> f64 {
        self.samples[0]
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    /// Same nodes moved by `s`.
    pub fn shifted(&self, s: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|t| t + s).collect(),
            weights: self.weights.clone(),
            spacing: self.spacing,
        }
    }

    /// `τ -> -τ`, keeping ascending order.
    pub fn mirrored(&self) -> Self {
        Self {
            samples: self.samples.iter().rev().map(|t| -t).collect(),
            weights: self.weights.iter().rev().copied().collect(),
            spacing: self.spacing,
        }
    }
}

/// Sampled `Π(τ_j; X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalDistribution {
    pub time_grid: TimeGrid,
    pub values: Vec<f64>,
    pub detector: f64,
    pub direction: Direction,
    /// `Σ_j w_j Π_j`.
    pub total: f64,
    /// `‖ψ‖²`, what `total` converges to on an unbounded window.
    pub expected_total: f64,
    pub units: UnitSystem,
}

impl ArrivalDistribution {
    /// Probability missed by the finite window.
    pub fn truncation_bound(&self) -> f64 {
        (self.expected_total - self.total).abs()
    }

    /// Physical arrival time of the node `τ`.
    pub fn physical_time(&self, tau: f64) -> f64 {
        self.direction.sign() * tau
    }

    /// Density `Π` rescaled to unit total (the conditional distribution).
    pub fn conditional(&self) -> Result<Self> {
        if !(self.total > 0.0) {
            return Err(Error::EmptyDistribution);
        }
        let s = self.total.recip();
        Ok(Self {
            values: self.values.iter().map(|v| v * s).collect(),
            total: 1.0,
            expected_total: self.expected_total * s,
            ..self.clone()
        })
    }

    /// Cubic interpolation of `Π` at an arbitrary `τ` inside the grid.
    pub fn density_at(&self, tau: f64) -> Option<f64> {
        cubic_interpolate(self.time_grid.samples(), &self.values, tau)
    }
}

/// Energy and arrival-time moments and their product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean: f64,
    pub spread: f64,
    pub energy_mean: f64,
    pub energy_spread: f64,
    pub product: f64,
}

/// How the oscillatory momentum integral is evaluated on a time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluator {
    /// Trapezoid sum on the packet's own momentum nodes, one time at a time.
    #[default]
    Direct,
    /// Resample onto a uniform energy grid and evaluate all times with one
    /// chirp-z transform. Needs a uniform time grid.
    Chirp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalOptions {
    pub evaluator: Evaluator,
    /// `WindowTooNarrow` when the window captures less than `(1 - ε)‖ψ‖²`.
    pub window_tolerance: f64,
    /// Reject times at which the integrand phase jumps more than π between nodes.
    pub check_resolution: bool,
    /// Energy nodes per momentum node for [`Evaluator::Chirp`].
    pub chirp_oversampling: usize,
}

impl Default for ArrivalOptions {
    fn default() -> Self {
        Self {
            evaluator: Evaluator::Direct,
            window_tolerance: 1e-4,
            check_resolution: true,
            chirp_oversampling: 4,
        }
    }
}

/// Per-node factors `w_i √(|p_i|/m) e^{i p_i X/ħ} ψ̃_i / √h`.
fn kernel_coefficients(packet: &WavePacket, detector: f64) -> Vec<Complex64> {
    let u = packet.units();
    let pre = u.planck().sqrt().recip();
    let grid = packet.grid();
    grid.samples()
        .iter()
        .zip(grid.weights())
        .zip(packet.amplitudes())
        .map(|((&p, &w), &a)| {
            let phase = Complex64::from_polar(1.0, p * detector / u.hbar);
            a * phase * (pre * w * (p.abs() / u.mass).sqrt())
        })
        .collect()
}

/// Largest integrand phase step between neighbouring nodes at time `t`.
fn max_phase_step(packet: &WavePacket, detector: f64, t: f64) -> f64 {
    let u = packet.units();
    let ps = packet.grid().samples();
    let amps = packet.amplitudes();
    let floor = amps.iter().map(|a| a.norm()).fold(0.0, f64::max) * 1e-8;
    let mut worst: f64 = 0.0;
    for i in 0..ps.len() - 1 {
        if amps[i].norm() < floor && amps[i + 1].norm() < floor {
            continue;
        }
        let dp = ps[i + 1] - ps[i];
        let pm = 0.5 * (ps[i + 1] + ps[i]);
        let kernel = dp * (detector - pm * t / u.mass) / u.hbar;
        let own = if amps[i].norm() > 0.0 && amps[i + 1].norm() > 0.0 {
            (amps[i + 1] * amps[i].conj()).arg()
        } else {
            0.0
        };
        worst = worst.max((kernel + own).abs());
    }
    worst
}

fn check_resolved(packet: &WavePacket, detector: f64, t: f64) -> Result<()> {
    let step = max_phase_step(packet, detector, t);
    if step > std::f64::consts::PI {
        return Err(Error::QuadratureUnresolved { phase_step: step, time: t });
    }
    Ok(())
}

fn direct_sum(coeffs: &[Complex64], energies: &[f64], hbar: f64, t: f64) -> Complex64 {
    coeffs
        .iter()
        .zip(energies)
        .map(|(c, e)| c * Complex64::from_polar(1.0, -e * t / hbar))
        .sum()
}

/// `⟨t,±;X|ψ⟩` for the packet's direction.
pub fn arrival_amplitude(packet: &WavePacket, detector: f64, t: f64) -> Result<Complex64> {
    if !(detector.is_finite() && t.is_finite()) {
        return Err(invalid("arrival", "detector and time must be finite"));
    }
    check_resolved(packet, detector, t)?;
    let u = packet.units();
    let energies: Vec<f64> = packet.grid().samples().iter().map(|&p| u.energy(p)).collect();
    Ok(direct_sum(&kernel_coefficients(packet, detector), &energies, u.hbar, t))
}

/// `⟨t_j,±;X|ψ⟩` over many physical times.
pub fn arrival_amplitudes(
    packet: &WavePacket,
    detector: f64,
    times: &[f64],
    options: &ArrivalOptions,
) -> Result<Vec<Complex64>> {
    if !detector.is_finite() || times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("arrival", "detector and times must be finite"));
    }
    if options.check_resolution {
        // the phase step is monotone in t between the extremes, so the ends suffice
        if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
            let (lo, hi) = times.iter().fold((first, last), |(a, b), &t| (a.min(t), b.max(t)));
            check_resolved(packet, detector, lo)?;
            check_resolved(packet, detector, hi)?;
        }
    }
    match options.evaluator {
        Evaluator::Direct => Ok(direct_amplitudes(packet, detector, times)),
        Evaluator::Chirp => {
            let n = times.len();
            let uniform = n >= 2 && {
                let h = (times[n - 1] - times[0]) / (n - 1) as f64;
                h > 0.0
                    && times
                        .iter()
                        .enumerate()
                        .all(|(j, t)| (t - (times[0] + h * j as f64)).abs() <= 1e-9 * h.max(t.abs()))
            };
            if !uniform {
                return Ok(direct_amplitudes(packet, detector, times));
            }
            let h = (times[n - 1] - times[0]) / (n - 1) as f64;
            chirp_amplitudes(packet, detector, times[0], h, n, options.chirp_oversampling.max(1))
        }
    }
}

fn direct_amplitudes(packet: &WavePacket, detector: f64, times: &[f64]) -> Vec<Complex64> {
    let u = packet.units();
    let coeffs = kernel_coefficients(packet, detector);
    let energies: Vec<f64> = packet.grid().samples().iter().map(|&p| u.energy(p)).collect();
    times.par_iter().map(|&t| direct_sum(&coeffs, &energies, u.hbar, t)).collect()
}

/// Amplitudes on `t_j = t0 + j·dt` from a uniform energy resampling and a
/// chirp-z transform.
fn chirp_amplitudes(
    packet: &WavePacket,
    detector: f64,
    t0: f64,
    dt: f64,
    n_out: usize,
    oversampling: usize,
) -> Result<Vec<Complex64>> {
    let u = packet.units();
    let grid = packet.grid();
    let ps = grid.samples();
    // ψ̃(p) e^{ipX/ħ} on the momentum nodes, interpolated in p
    let shifted: Vec<Complex64> = ps
        .iter()
        .zip(packet.amplitudes())
        .map(|(&p, &a)| a * Complex64::from_polar(1.0, p * detector / u.hbar))
        .collect();
    let (e_lo, e_hi) = {
        let a = u.energy(grid.min());
        let b = u.energy(grid.max());
        (a.min(b), a.max(b))
    };
    let n_e = grid.len() * oversampling;
    let de = (e_hi - e_lo) / (n_e - 1) as f64;
    let sign = packet.direction().sign();
    let weights = trapezoid_weights(n_e, de);
    let mut input = Vec::with_capacity(n_e);
    for (k, w) in weights.iter().enumerate() {
        let e = if k == n_e - 1 { e_hi } else { e_lo + de * k as f64 };
        let p = (sign * u.momentum(e)).clamp(grid.min(), grid.max());
        let v = cubic_interpolate(ps, &shifted, p).ok_or(Error::OutOfSupport {
            momentum: p,
            min: grid.min(),
            max: grid.max(),
        })?;
        // (m/2E)^{1/4}, the energy-normalization factor
        let g = v * (u.mass / (2.0 * e)).powf(0.25);
        let phase = Complex64::from_polar(1.0, -(k as f64) * de * t0 / u.hbar);
        input.push(g * w * phase);
    }
    let alpha = de * dt / u.hbar;
    let pre = u.planck().sqrt().recip();
    let out = chirp_z(&input, alpha, n_out);
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(j, b)| {
            let t = t0 + dt * j as f64;
            b * Complex64::from_polar(pre, -e_lo * t / u.hbar)
        })
        .collect())
}

/// `Π(τ_j; X)` on the given τ grid.
pub fn arrival_distribution(
    packet: &WavePacket,
    detector: f64,
    grid: &TimeGrid,
) -> Result<ArrivalDistribution> {
    arrival_distribution_with(packet, detector, grid, &ArrivalOptions::default())
}

pub fn arrival_distribution_with(
    packet: &WavePacket,
    detector: f64,
    grid: &TimeGrid,
    options: &ArrivalOptions,
) -> Result<ArrivalDistribution> {
    let dist = sample_distribution(packet, detector, grid, options)?;
    let floor = dist.expected_total * (1.0 - options.window_tolerance);
    if dist.total < floor {
        return Err(Error::WindowTooNarrow { total: dist.total, expected: dist.expected_total });
    }
    Ok(dist)
}

fn sample_distribution(
    packet: &WavePacket,
    detector: f64,
    grid: &TimeGrid,
    options: &ArrivalOptions,
) -> Result<ArrivalDistribution> {
    let direction = packet.direction();
    let sign = direction.sign();
    // physical times t = ±τ; for the minus branch the τ grid is walked backwards
    let times: Vec<f64> = match direction {
        Direction::Plus => grid.samples().to_vec(),
        Direction::Minus => grid.samples().iter().rev().map(|tau| sign * tau).collect(),
    };
    let amps = arrival_amplitudes(packet, detector, &times, options)?;
    let mut values: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
    if direction == Direction::Minus {
        values.reverse();
    }
    let total = grid.weights().iter().zip(&values).map(|(w, v)| w * v).sum();
    Ok(ArrivalDistribution {
        time_grid: grid.clone(),
        values,
        detector,
        direction,
        total,
        expected_total: packet.total_probability(),
        units: packet.units(),
    })
}

/// Rules for choosing the τ window automatically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub samples: usize,
    /// Initial half-width in units of the estimated arrival spread.
    pub half_width: f64,
    /// Stop growing once `|total - ‖ψ‖²| ≤ tolerance·‖ψ‖²`.
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self { samples: 4096, half_width: 12.0, tolerance: 1e-9, max_refinements: 8 }
    }
}

/// Classical crossing time and arrival-spread estimate for `packet` at `detector`.
pub fn classical_estimate(packet: &WavePacket, detector: f64) -> (f64, f64) {
    let u = packet.units();
    let (p_mean, sigma_p) = packet.momentum_moments();
    let (x_mean, sigma_x) = packet.position_moments();
    let v = p_mean / u.mass;
    let t_c = (detector - x_mean) / v;
    let travel = (detector - x_mean).abs();
    let spread = (sigma_x.powi(2) + (travel * sigma_p / p_mean).powi(2)).sqrt() / v.abs();
    let (_, de) = packet.energy_moments();
    let floor = if de > 0.0 { u.hbar / (2.0 * de) } else { 0.0 };
    (t_c, spread.max(floor))
}

/// τ grid centered on the classical crossing, grown until the captured
/// probability converges.
pub fn auto_time_grid(packet: &WavePacket, detector: f64, policy: &WindowPolicy) -> Result<TimeGrid> {
    let (_, grid) = auto_distribution(packet, detector, policy, &ArrivalOptions::default())?;
    Ok(grid)
}

/// Distribution on an automatically chosen window.
pub fn auto_distribution(
    packet: &WavePacket,
    detector: f64,
    policy: &WindowPolicy,
    options: &ArrivalOptions,
) -> Result<(ArrivalDistribution, TimeGrid)> {
    if policy.samples < 16 {
        return Err(invalid("time_grid.n", "need at least 16 samples"));
    }
    let norm = packet.total_probability();
    let sign = packet.direction().sign();
    let (t_c, spread) = classical_estimate(packet, detector);
    if !(t_c.is_finite() && spread.is_finite() && spread > 0.0) {
        return Err(invalid("packet", "cannot estimate the crossing time"));
    }
    let mut half = policy.half_width * spread;
    let mut samples = policy.samples;
    let mut last = None;
    for _ in 0..=policy.max_refinements {
        let center = sign * t_c;
        let grid = TimeGrid::uniform(center - half, center + half, samples)?;
        let dist = sample_distribution(packet, detector, &grid, options)?;
        if norm == 0.0 || (dist.total - norm).abs() <= policy.tolerance * norm {
            return Ok((dist, grid));
        }
        last = Some((dist, grid));
        half *= 1.5;
        if samples < 4 * policy.samples {
            samples = samples * 3 / 2;
        }
    }
    let (dist, grid) = last.expect("at least one window evaluated");
    if dist.total < norm * (1.0 - options.window_tolerance) {
        return Err(Error::WindowTooNarrow { total: dist.total, expected: norm });
    }
    Ok((dist, grid))
}

/// Mean physical arrival time, `Σ w_j (±τ_j) Π_j / Σ w_j Π_j`.
pub fn mean_arrival(dist: &ArrivalDistribution) -> Result<f64> {
    if !(dist.total > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    let s = dist.direction.sign();
    let num: f64 = dist
        .time_grid
        .samples()
        .iter()
        .zip(dist.time_grid.weights())
        .zip(&dist.values)
        .map(|((tau, w), v)| s * tau * w * v)
        .sum();
    Ok(num / dist.total)
}

/// Standard deviation of the physical arrival time.
pub fn arrival_spread(dist: &ArrivalDistribution) -> Result<f64> {
    let mean = mean_arrival(dist)?;
    let s = dist.direction.sign();
    let var: f64 = dist
        .time_grid
        .samples()
        .iter()
        .zip(dist.time_grid.weights())
        .zip(&dist.values)
        .map(|((tau, w), v)| (s * tau - mean).powi(2) * w * v)
        .sum::<f64>()
        / dist.total;
    Ok(var.max(0.0).sqrt())
}

/// Energy spread of `packet` against the arrival-time spread of `dist`.
pub fn moment_report(packet: &WavePacket, dist: &ArrivalDistribution) -> Result<MomentReport> {
    if packet.total_probability() <= 0.0 {
        return Err(Error::EmptyDistribution);
    }
    let mean = mean_arrival(dist)?;
    let spread = arrival_spread(dist)?;
    let (energy_mean, energy_spread) = packet.energy_moments();
    Ok(MomentReport { mean, spread, energy_mean, energy_spread, product: energy_spread * spread })
}

/// Free evolution by `t`: `ψ̃(p) -> e^{-iE_p t/ħ} ψ̃(p)`.
pub fn free_evolve(packet: &WavePacket, t: f64) -> WavePacket {
    let u = packet.units();
    packet.map_amplitudes(|p| Complex64::from_polar(1.0, -u.energy(p) * t / u.hbar))
}

/// Delays every arrival by `s`: the result's arrival density at physical time
/// `t` equals the original's at `t - s`. This is free evolution by `-s`.
pub fn time_shift(packet: &WavePacket, s: f64) -> WavePacket {
    free_evolve(packet, -s)
}

/// Spatial translation by `a`: `ψ̃(p) -> e^{-ipa/ħ} ψ̃(p)`. The arrival
/// amplitude at `X` of the translated packet equals the original's at `X - a`.
pub fn translate(packet: &WavePacket, a: f64) -> WavePacket {
    let hbar = packet.units().hbar;
    packet.map_amplitudes(|p| Complex64::from_polar(1.0, -p * a / hbar))
}

/// Time reversal `ψ̃(p) -> conj ψ̃(-p)`; the direction flips.
pub fn time_reverse(packet: &WavePacket) -> WavePacket {
    let grid = packet.grid().mirrored();
    let amps = packet.amplitudes().iter().rev().map(|a| a.conj()).collect();
    WavePacket::from_raw(
        grid,
        amps,
        packet.direction().flipped(),
        packet.units(),
        packet.discarded_mass(),
    )
}
