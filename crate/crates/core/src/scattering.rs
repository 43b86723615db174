//! Stationary scattering off finite-range real potentials.
//!
//! `T(p)` and `R(p)` are defined by the asymptotics of the stationary state
//! with incoming momentum `p > 0`:
//!
//! ```text
//! x left of the support:  e^{ipx/ħ} + R(p) e^{-ipx/ħ}
//! x right of the support: T(p) e^{ipx/ħ}
//! ```
//!
//! Both solvers integrate `ψ'' = q(x) ψ`, `q = 2m(V - E)/ħ²`, from right to
//! left with real, unimodular 2×2 steps, so the Wronskian and hence
//! `|T|² + |R|² = 1` survive to rounding. The state vector is renormalized
//! after every step and the dropped scale is kept as a logarithm, so wide or
//! high barriers cannot overflow.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrival::{
    arrival_distribution_with, auto_distribution, ArrivalDistribution, ArrivalOptions, TimeGrid,
    WindowPolicy,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{cubic_interpolate, MomentumGrid};
use crate::packet::WavePacket;
use crate::units::{Direction, UnitSystem};

/// Largest `|q| h²` handled by one matrix step in an evanescent region.
const MAX_STEP_EXPONENT: f64 = 30.0;
/// Magnus substep bound, `h √|q| ≤ MAGNUS_RESOLUTION`.
const MAGNUS_RESOLUTION: f64 = 0.05;
pub const UNITARITY_TOL: f64 = 1e-10;

/// A constant-height slab `[left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub left: f64,
    pub right: f64,
    pub height: f64,
}

/// Real potential vanishing outside a finite interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `V ≡ 0`.
    Zero,
    /// Ordered, non-overlapping constant slabs.
    PiecewiseConstant { segments: Vec<Segment> },
    /// Piecewise-linear through `(x_i, V_i)`; zero outside `[x_0, x_last]`.
    /// Repeated abscissae encode jumps.
    Sampled { xs: Vec<f64>, values: Vec<f64> },
}

impl PotentialSpec {
    pub fn rectangular(height: f64, left: f64, width: f64) -> Self {
        PotentialSpec::PiecewiseConstant {
            segments: vec![Segment { left, right: left + width, height }],
        }
    }

    /// Two equal slabs of width `width` separated by `gap`.
    pub fn double_rectangular(height: f64, left: f64, width: f64, gap: f64) -> Self {
        let second = left + width + gap;
        PotentialSpec::PiecewiseConstant {
            segments: vec![
                Segment { left, right: left + width, height },
                Segment { left: second, right: second + width, height },
            ],
        }
    }

    /// `V0 exp(-(x-c)²/2w²)` sampled on `c ± 6w` with `n` points.
    pub fn gaussian_bump(height: f64, center: f64, width: f64, n: usize) -> Self {
        let n = n.max(2);
        let (a, b) = (center - 6.0 * width, center + 6.0 * width);
        let xs: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let values = xs.iter().map(|x| height * (-(x - center).powi(2) / (2.0 * width * width)).exp()).collect();
        PotentialSpec::Sampled { xs, values }
    }

    /// Same potential as dense piecewise-linear samples, `per_unit` points per
    /// unit length inside each slab. Slab edges become repeated abscissae.
    pub fn to_sampled(&self, per_unit: f64) -> Self {
        match self {
            PotentialSpec::PiecewiseConstant { segments } => {
                let mut xs = Vec::new();
                let mut values = Vec::new();
                for s in segments {
                    if !xs.is_empty() {
                        // zero-height gap between slabs
                        xs.push(*xs.last().unwrap());
                        values.push(0.0);
                        xs.push(s.left);
                        values.push(0.0);
                    }
                    let n = ((s.right - s.left) * per_unit).ceil().max(1.0) as usize;
                    xs.push(s.left);
                    values.push(0.0);
                    for i in 0..=n {
                        xs.push(s.left + (s.right - s.left) * i as f64 / n as f64);
                        values.push(s.height);
                    }
                    xs.push(s.right);
                    values.push(0.0);
                }
                PotentialSpec::Sampled { xs, values }
            }
            other => other.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::PiecewiseConstant { segments } => {
                for s in segments {
                    if !(s.left.is_finite() && s.right.is_finite()) {
                        return Err(Error::NonFiniteSupport);
                    }
                    if !s.height.is_finite() {
                        return Err(invalid("potential.segments", "height must be finite"));
                    }
                    if s.right <= s.left {
                        return Err(invalid("potential.segments", "segment must have positive width"));
                    }
                }
                if segments.windows(2).any(|w| w[1].left < w[0].right) {
                    return Err(invalid("potential.segments", "segments must be ordered and disjoint"));
                }
                Ok(())
            }
            PotentialSpec::Sampled { xs, values } => {
                if xs.len() != values.len() || xs.len() < 2 {
                    return Err(invalid("potential.samples", "need matching x and V arrays of length ≥ 2"));
                }
                if xs.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteSupport);
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("potential.samples", "V must be finite"));
                }
                if xs.windows(2).any(|w| w[1] < w[0]) || xs[xs.len() - 1] <= xs[0] {
                    return Err(invalid("potential.samples", "abscissae must be non-decreasing"));
                }
                Ok(())
            }
        }
    }

    /// `[x_min, x_max]` outside which `V = 0`; `None` when `V ≡ 0`.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            PotentialSpec::Zero => None,
            PotentialSpec::PiecewiseConstant { segments } => {
                let live: Vec<&Segment> = segments.iter().filter(|s| s.height != 0.0).collect();
                Some((live.first()?.left, live.last()?.right))
            }
            PotentialSpec::Sampled { xs, values } => {
                if values.iter().all(|v| *v == 0.0) {
                    None
                } else {
                    Some((xs[0], xs[xs.len() - 1]))
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.support().is_none()
    }

    /// Point value; at a jump the right-hand limit.
    pub fn value_at(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::PiecewiseConstant { segments } => segments
                .iter()
                .find(|s| x >= s.left && x < s.right)
                .map_or(0.0, |s| s.height),
            PotentialSpec::Sampled { xs, values } => {
                let n = xs.len();
                if x < xs[0] || x > xs[n - 1] {
                    return 0.0;
                }
                let j = xs.partition_point(|&v| v <= x);
                if j == 0 {
                    return values[0];
                }
                if j >= n {
                    return values[n - 1];
                }
                let (x0, x1) = (xs[j - 1], xs[j]);
                let t = (x - x0) / (x1 - x0);
                values[j - 1] * (1.0 - t) + values[j] * t
            }
        }
    }

    fn max_height(&self) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::PiecewiseConstant { segments } => {
                segments.iter().map(|s| s.height.abs()).fold(0.0, f64::max)
            }
            PotentialSpec::Sampled { values, .. } => values.iter().map(|v| v.abs()).fold(0.0, f64::max),
        }
    }
}

/// `T(p)` and `R(p)` on a positive momentum grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringCoefficients {
    pub grid: MomentumGrid,
    pub transmission: Vec<Complex64>,
    pub reflection: Vec<Complex64>,
    /// Support of the potential these were computed for.
    pub support: Option<(f64, f64)>,
    pub units: UnitSystem,
}

impl ScatteringCoefficients {
    /// Largest `||T|² + |R|² - 1|` over the grid.
    pub fn unitarity_defect(&self) -> f64 {
        self.transmission
            .iter()
            .zip(&self.reflection)
            .map(|(t, r)| (t.norm_sqr() + r.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Free motion: `T ≡ 1`, `R ≡ 0`.
    pub fn free(grid: MomentumGrid, units: UnitSystem) -> Self {
        let n = grid.len();
        Self {
            grid,
            transmission: vec![Complex64::new(1.0, 0.0); n],
            reflection: vec![Complex64::new(0.0, 0.0); n],
            support: None,
            units,
        }
    }
}

/// State `(ψ, ψ')` with a separate log-scale, `true state = e^{log_scale}·(ψ, ψ')`.
#[derive(Clone, Copy)]
struct Scaled {
    psi: Complex64,
    dpsi: Complex64,
    log_scale: f64,
}

impl Scaled {
    /// Applies the real matrix `[[a, b], [c, d]]`.
    fn apply(&mut self, m: [f64; 4]) {
        let psi = self.psi * m[0] + self.dpsi * m[1];
        let dpsi = self.psi * m[2] + self.dpsi * m[3];
        self.psi = psi;
        self.dpsi = dpsi;
    }

    fn renormalize(&mut self, k: f64) {
        let s = self.psi.norm().max(self.dpsi.norm() / k);
        if s > 0.0 && s.is_finite() {
            self.psi /= s;
            self.dpsi /= s;
            self.log_scale += s.ln();
        }
    }
}

/// `exp(Ω)` for traceless real `Ω = [[α, β], [γ, -α]]`.
fn exp_traceless(alpha: f64, beta: f64, gamma: f64) -> [f64; 4] {
    let s2 = alpha * alpha + beta * gamma;
    let (c, sinc) = if s2 > 1e-12 {
        let s = s2.sqrt();
        (s.cosh(), s.sinh() / s)
    } else if s2 < -1e-12 {
        let s = (-s2).sqrt();
        (s.cos(), s.sin() / s)
    } else {
        // series through s⁴
        (1.0 + s2 / 2.0 + s2 * s2 / 24.0, 1.0 + s2 / 6.0 + s2 * s2 / 120.0)
    };
    [c + sinc * alpha, sinc * beta, sinc * gamma, c - sinc * alpha]
}

/// Step from `x` to `x - h` across a region of constant `q`.
fn constant_step_back(q: f64, h: f64) -> [f64; 4] {
    exp_traceless(0.0, -h, -h * q)
}

/// Fourth-order Magnus step from `b` back to `b - h` for `q` linear on the step.
fn magnus_step_back(q: impl Fn(f64) -> f64, b: f64, h: f64) -> [f64; 4] {
    let a = b - h;
    let r = 3f64.sqrt() / 6.0;
    let q1 = q(a + h * (0.5 - r));
    let q2 = q(a + h * (0.5 + r));
    // forward Ω = [[α, h], [h q̄, -α]], α = √3 h² (q1 - q2)/12; backward is -Ω
    let alpha = 3f64.sqrt() * h * h * (q1 - q2) / 12.0;
    let qbar = 0.5 * (q1 + q2);
    exp_traceless(-alpha, -h, -h * qbar)
}

fn propagate_constant(state: &mut Scaled, q: f64, length: f64, k: f64) {
    let pieces = if q > 0.0 {
        ((q.sqrt() * length) / MAX_STEP_EXPONENT.sqrt()).ceil().max(1.0) as usize
    } else {
        1
    };
    let h = length / pieces as f64;
    let m = constant_step_back(q, h);
    for _ in 0..pieces {
        state.apply(m);
        state.renormalize(k);
    }
}

/// Decomposes the state at `x` into `A e^{ikx} + B e^{-ikx}` and returns `(T, R)`.
fn match_left(state: &Scaled, x: f64, k: f64, p: f64) -> Result<(Complex64, Complex64)> {
    let ik = Complex64::new(0.0, k);
    let a = (state.psi + state.dpsi / ik) * 0.5 * Complex64::from_polar(1.0, -k * x);
    let b = (state.psi - state.dpsi / ik) * 0.5 * Complex64::from_polar(1.0, k * x);
    let t = Complex64::from_polar((-state.log_scale).exp(), 0.0) / a;
    let r = b / a;
    if !(t.re.is_finite() && t.im.is_finite() && r.re.is_finite() && r.im.is_finite()) {
        return Err(Error::EvanescentOverflow { momentum: p });
    }
    Ok((t, r))
}

fn solve_one(potential: &PotentialSpec, units: UnitSystem, p: f64, support: (f64, f64)) -> Result<(Complex64, Complex64)> {
    let k = p / units.hbar;
    let e = units.energy(p);
    let q_of = |v: f64| 2.0 * units.mass * (v - e) / (units.hbar * units.hbar);
    let (x_left, x_right) = support;
    let mut state = Scaled {
        psi: Complex64::from_polar(1.0, k * x_right),
        dpsi: Complex64::new(0.0, k) * Complex64::from_polar(1.0, k * x_right),
        log_scale: 0.0,
    };
    match potential {
        PotentialSpec::Zero => {}
        PotentialSpec::PiecewiseConstant { segments } => {
            let mut x = x_right;
            for s in segments.iter().rev().filter(|s| s.left < x_right && s.right > x_left) {
                if x > s.right {
                    propagate_constant(&mut state, q_of(0.0), x - s.right, k);
                    x = s.right;
                }
                propagate_constant(&mut state, q_of(s.height), x - s.left, k);
                x = s.left;
            }
            if x > x_left {
                propagate_constant(&mut state, q_of(0.0), x - x_left, k);
            }
        }
        PotentialSpec::Sampled { xs, values } => {
            let qmax = q_of(potential.max_height()).abs().max(k * k);
            let h_max = MAGNUS_RESOLUTION / qmax.sqrt();
            for j in (1..xs.len()).rev() {
                let (a, b) = (xs[j - 1], xs[j]);
                if b <= a {
                    continue;
                }
                let (va, vb) = (values[j - 1], values[j]);
                let q_lin = |x: f64| q_of(va + (vb - va) * (x - a) / (b - a));
                let steps = ((b - a) / h_max).ceil().max(1.0) as usize;
                let h = (b - a) / steps as f64;
                for i in 0..steps {
                    let top = b - h * i as f64;
                    state.apply(magnus_step_back(q_lin, top, h));
                    state.renormalize(k);
                }
            }
        }
    }
    match_left(&state, x_left, k, p)
}

/// `T(p)` and `R(p)` at every grid momentum.
pub fn solve_coefficients(
    potential: &PotentialSpec,
    grid: &MomentumGrid,
    units: UnitSystem,
) -> Result<ScatteringCoefficients> {
    potential.validate()?;
    units.validate()?;
    if grid.direction() != Some(Direction::Plus) {
        return Err(invalid("grid", "scattering momenta must all be positive"));
    }
    let support = match potential.support() {
        // identically zero: exact free coefficients
        None => return Ok(ScatteringCoefficients::free(grid.clone(), units)),
        Some(s) => s,
    };
    let pairs: Vec<(Complex64, Complex64)> = grid
        .samples()
        .par_iter()
        .map(|&p| solve_one(potential, units, p, support))
        .collect::<Result<_>>()?;
    let (transmission, reflection): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let coeffs = ScatteringCoefficients {
        grid: grid.clone(),
        transmission,
        reflection,
        support: Some(support),
        units,
    };
    let defect = coeffs.unitarity_defect();
    assert!(defect <= UNITARITY_TOL, "flux conservation violated: ||T|²+|R|²-1| = {defect:e}");
    Ok(coeffs)
}

/// `T` sampled at the packet's nodes. Identical grids are used as is; otherwise
/// modulus and unwrapped phase are interpolated separately.
fn coefficients_on(packet_grid: &MomentumGrid, values: &[Complex64], grid: &MomentumGrid) -> Result<Vec<Complex64>> {
    if packet_grid.samples() == grid.samples() {
        return Ok(values.to_vec());
    }
    if packet_grid.min() < grid.min() || packet_grid.max() > grid.max() {
        return Err(Error::GridMismatch);
    }
    let modulus: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let mut phase: Vec<f64> = values.iter().map(|v| v.arg()).collect();
    for i in 1..phase.len() {
        let d = phase[i] - phase[i - 1];
        phase[i] -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
    }
    packet_grid
        .samples()
        .iter()
        .map(|&p| {
            let m = cubic_interpolate(grid.samples(), &modulus, p).ok_or(Error::GridMismatch)?;
            let ph = cubic_interpolate(grid.samples(), &phase, p).ok_or(Error::GridMismatch)?;
            Ok(Complex64::from_polar(m, ph))
        })
        .collect()
}

/// Freely evolving transmitted state, `ψ̃_tr(p) = T(p) ψ̃_in(p)`. Unnormalized;
/// its norm is the transmittance.
pub fn transmitted_packet(packet_in: &WavePacket, coeffs: &ScatteringCoefficients) -> Result<WavePacket> {
    if packet_in.direction() != Direction::Plus {
        return Err(invalid("packet", "incoming packet must move to the right"));
    }
    let t = coefficients_on(packet_in.grid(), &coeffs.transmission, &coeffs.grid)?;
    Ok(packet_in.with_amplitudes(packet_in.amplitudes().iter().zip(&t).map(|(a, t)| a * t).collect()))
}

/// Outgoing asymptote split into the transmitted part on `+p` and the reflected
/// part `R(p) ψ̃_in(p)` attached to `-p`.
pub fn outgoing_asymptote(
    packet_in: &WavePacket,
    coeffs: &ScatteringCoefficients,
) -> Result<(WavePacket, WavePacket)> {
    let transmitted = transmitted_packet(packet_in, coeffs)?;
    let r = coefficients_on(packet_in.grid(), &coeffs.reflection, &coeffs.grid)?;
    let amps: Vec<Complex64> =
        packet_in.amplitudes().iter().zip(&r).map(|(a, r)| a * r).rev().collect();
    let reflected = WavePacket::from_raw(
        packet_in.grid().mirrored(),
        amps,
        Direction::Minus,
        packet_in.units(),
        packet_in.discarded_mass(),
    );
    Ok((transmitted, reflected))
}

/// `Σ w |T|² |ψ̃_in|²`.
pub fn transmittance(packet_in: &WavePacket, coeffs: &ScatteringCoefficients) -> Result<f64> {
    Ok(transmitted_packet(packet_in, coeffs)?.total_probability())
}

/// Smallest detector position counted as asymptotic for `packet_in`:
/// right edge plus `max(10 ħ/σp, 10 σx)`.
pub fn asymptotic_threshold(packet_in: &WavePacket, support: Option<(f64, f64)>) -> Option<f64> {
    let (_, right) = support?;
    let (_, sigma_p) = packet_in.momentum_moments();
    let (_, sigma_x) = packet_in.position_moments();
    let hbar = packet_in.units().hbar;
    Some(right + (10.0 * hbar / sigma_p).max(10.0 * sigma_x))
}

fn check_asymptotic(packet_in: &WavePacket, coeffs: &ScatteringCoefficients, detector: f64) -> Result<()> {
    if let Some(min_allowed) = asymptotic_threshold(packet_in, coeffs.support) {
        if detector < min_allowed {
            return Err(Error::NotAsymptotic { detector, min_allowed });
        }
    }
    Ok(())
}

/// Unnormalized `Π_tr(τ;X)` behind the barrier on an explicit τ grid. Its total
/// is the transmittance.
pub fn barrier_arrival_distribution(
    packet_in: &WavePacket,
    coeffs: &ScatteringCoefficients,
    detector: f64,
    grid: &TimeGrid,
) -> Result<ArrivalDistribution> {
    check_asymptotic(packet_in, coeffs, detector)?;
    let tr = transmitted_packet(packet_in, coeffs)?;
    arrival_distribution_with(&tr, detector, grid, &ArrivalOptions::default())
}

/// As [`barrier_arrival_distribution`] on an automatically chosen window.
pub fn barrier_arrival_auto(
    packet_in: &WavePacket,
    coeffs: &ScatteringCoefficients,
    detector: f64,
    policy: &WindowPolicy,
    options: &ArrivalOptions,
) -> Result<(ArrivalDistribution, TimeGrid)> {
    check_asymptotic(packet_in, coeffs, detector)?;
    let tr = transmitted_packet(packet_in, coeffs)?;
    if tr.total_probability() == 0.0 {
        return Err(Error::EmptyDistribution);
    }
    auto_distribution(&tr, detector, policy, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::mean_arrival;
    use crate::packet::{build_gaussian, GaussianSpec};

    /// Closed-form rectangular-barrier transmission probability.
    fn rectangular_oracle(v0: f64, a: f64, e: f64) -> f64 {
        let (m, hbar) = (1.0, 1.0);
        if e > v0 {
            let k = (2.0 * m * (e - v0)).sqrt() / hbar;
            1.0 / (1.0 + v0 * v0 * (k * a).sin().powi(2) / (4.0 * e * (e - v0)))
        } else if e < v0 {
            let kappa = (2.0 * m * (v0 - e)).sqrt() / hbar;
            1.0 / (1.0 + v0 * v0 * (kappa * a).sinh().powi(2) / (4.0 * e * (v0 - e)))
        } else {
            1.0 / (1.0 + m * a * a * v0 / (2.0 * hbar * hbar))
        }
    }

    fn packet() -> WavePacket {
        let spec = GaussianSpec::new(5.0, 0.5, -20.0);
        build_gaussian(&spec, &spec.default_grid(2048).unwrap()).unwrap()
    }

    #[test]
    fn zero_potential_is_transparent() {
        let grid = MomentumGrid::uniform(0.5, 10.0, 64).unwrap();
        let c = solve_coefficients(&PotentialSpec::Zero, &grid, UnitSystem::default()).unwrap();
        assert!(c.transmission.iter().all(|t| *t == Complex64::new(1.0, 0.0)));
        assert!(c.reflection.iter().all(|r| *r == Complex64::new(0.0, 0.0)));
        // a slab of zero height is the same potential
        let flat = PotentialSpec::rectangular(0.0, 0.0, 1.0);
        let c2 = solve_coefficients(&flat, &grid, UnitSystem::default()).unwrap();
        assert_eq!(c, c2);
    }

    #[test]
    fn rectangular_barrier_matches_closed_form() {
        let pot = PotentialSpec::rectangular(1.0, 0.0, 1.0);
        let grid = MomentumGrid::from_parts(vec![2.0, 2.5], vec![1.0, 1.0]).unwrap();
        let c = solve_coefficients(&pot, &grid, UnitSystem::default()).unwrap();
        let t2 = c.transmission[0].norm_sqr();
        assert!((t2 - rectangular_oracle(1.0, 1.0, 2.0)).abs() < 1e-8);
        // tunneling and at-threshold energies
        let grid = MomentumGrid::uniform(0.2, 3.0, 57).unwrap();
        let pot = PotentialSpec::rectangular(2.0, -0.3, 1.3);
        let c = solve_coefficients(&pot, &grid, UnitSystem::default()).unwrap();
        for (p, t) in grid.samples().iter().zip(&c.transmission) {
            let expected = rectangular_oracle(2.0, 1.3, 0.5 * p * p);
            assert!((t.norm_sqr() - expected).abs() < 1e-8, "p={p}");
        }
    }

    #[test]
    fn flux_is_conserved_for_real_potentials() {
        let grid = MomentumGrid::uniform(0.1, 12.0, 200).unwrap();
        let u = UnitSystem::default();
        for pot in [
            PotentialSpec::rectangular(50.0, 0.0, 1.0),
            PotentialSpec::double_rectangular(3.0, 0.0, 0.5, 1.0),
            PotentialSpec::gaussian_bump(4.0, 0.0, 0.7, 200),
            PotentialSpec::rectangular(-5.0, 0.0, 2.0),
        ] {
            let c = solve_coefficients(&pot, &grid, u).unwrap();
            assert!(c.unitarity_defect() < 1e-10, "{pot:?}");
        }
    }

    #[test]
    fn very_wide_barrier_does_not_overflow() {
        let grid = MomentumGrid::uniform(1.0, 2.0, 8).unwrap();
        let pot = PotentialSpec::rectangular(100.0, 0.0, 200.0);
        let c = solve_coefficients(&pot, &grid, UnitSystem::default()).unwrap();
        assert!(c.transmission.iter().all(|t| t.norm() < 1e-300));
        assert!(c.unitarity_defect() < 1e-10);
    }

    #[test]
    fn sampled_solver_agrees_with_transfer_matrix() {
        let grid = MomentumGrid::uniform(0.5, 9.0, 64).unwrap();
        let u = UnitSystem::default();
        for pot in [
            PotentialSpec::rectangular(10.0, 0.0, 0.5),
            PotentialSpec::double_rectangular(6.0, -1.0, 0.4, 0.9),
        ] {
            let exact = solve_coefficients(&pot, &grid, u).unwrap();
            let dense = solve_coefficients(&pot.to_sampled(200.0), &grid, u).unwrap();
            for i in 0..grid.len() {
                assert!((exact.transmission[i] - dense.transmission[i]).norm() < 1e-6);
                assert!((exact.reflection[i] - dense.reflection[i]).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn sampled_smooth_bump_converges_at_second_order() {
        let grid = MomentumGrid::uniform(1.0, 4.0, 16).unwrap();
        let u = UnitSystem::default();
        let solve = |n| solve_coefficients(&PotentialSpec::gaussian_bump(3.0, 0.0, 0.5, n), &grid, u).unwrap();
        let (coarse, mid, fine) = (solve(401), solve(1601), solve(6401));
        let err = |c: &ScatteringCoefficients| {
            c.transmission.iter().zip(&fine.transmission).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
        };
        let ratio = err(&coarse) / err(&mid);
        assert!(ratio > 12.0 && ratio < 22.0, "ratio {ratio}");
        assert!(err(&mid) < 1e-5);
    }

    #[test]
    fn invalid_potentials_are_rejected() {
        let bad = PotentialSpec::PiecewiseConstant {
            segments: vec![
                Segment { left: 0.0, right: 2.0, height: 1.0 },
                Segment { left: 1.0, right: 3.0, height: 1.0 },
            ],
        };
        assert!(bad.validate().is_err());
        let unbounded = PotentialSpec::rectangular(1.0, 0.0, f64::INFINITY);
        assert_eq!(unbounded.validate(), Err(Error::NonFiniteSupport));
        let grid = MomentumGrid::uniform(-1.0, 1.0, 8).unwrap();
        assert!(solve_coefficients(&PotentialSpec::Zero, &grid, UnitSystem::default()).is_err());
    }

    #[test]
    fn transmitted_packet_limits() {
        let p = packet();
        let free = ScatteringCoefficients::free(p.grid().clone(), p.units());
        assert_eq!(transmitted_packet(&p, &free).unwrap(), p);
        let opaque = ScatteringCoefficients {
            transmission: vec![Complex64::new(0.0, 0.0); p.grid().len()],
            ..free.clone()
        };
        let tr = transmitted_packet(&p, &opaque).unwrap();
        assert_eq!(tr.total_probability(), 0.0);
    }

    #[test]
    fn transmittance_is_weighted_transmission_probability() {
        let p = packet();
        let pot = PotentialSpec::rectangular(10.0, 0.0, 0.5);
        let c = solve_coefficients(&pot, p.grid(), p.units()).unwrap();
        let oracle: f64 = p
            .grid()
            .samples()
            .iter()
            .zip(p.grid().weights())
            .zip(p.amplitudes())
            .map(|((&q, w), a)| w * rectangular_oracle(10.0, 0.5, 0.5 * q * q) * a.norm_sqr())
            .sum();
        let t = transmittance(&p, &c).unwrap();
        assert!((t - oracle).abs() < 1e-10);
    }

    #[test]
    fn outgoing_parts_share_probability() {
        let p = packet();
        for pot in [PotentialSpec::rectangular(10.0, 0.0, 0.5), PotentialSpec::Zero] {
            let c = solve_coefficients(&pot, p.grid(), p.units()).unwrap();
            let (tr, re) = outgoing_asymptote(&p, &c).unwrap();
            assert_eq!(re.direction(), Direction::Minus);
            assert!((tr.total_probability() + re.total_probability() - 1.0).abs() < 1e-8);
            if pot.is_zero() {
                assert!(re.amplitudes().iter().all(|a| a.norm() == 0.0));
            }
        }
    }

    #[test]
    fn deep_barrier_suppresses_transmission() {
        let p = packet();
        let pot = PotentialSpec::rectangular(50.0, 0.0, 1.0);
        let c = solve_coefficients(&pot, p.grid(), p.units()).unwrap();
        let oracle: f64 = p
            .grid()
            .samples()
            .iter()
            .zip(p.grid().weights())
            .zip(p.amplitudes())
            .map(|((&q, w), a)| w * rectangular_oracle(50.0, 1.0, 0.5 * q * q) * a.norm_sqr())
            .sum();
        let t = transmittance(&p, &c).unwrap();
        assert!(oracle < 1e-4);
        assert!((t - oracle).abs() < 1e-12 + 1e-8 * oracle);
    }

    #[test]
    fn interpolated_coefficients_on_foreign_grid() {
        let p = packet();
        let pot = PotentialSpec::rectangular(10.0, 0.0, 0.5);
        let fine = MomentumGrid::uniform(0.5, 9.5, 4001).unwrap();
        let c_fine = solve_coefficients(&pot, &fine, p.units()).unwrap();
        let c_own = solve_coefficients(&pot, p.grid(), p.units()).unwrap();
        let a = transmitted_packet(&p, &c_fine).unwrap();
        let b = transmitted_packet(&p, &c_own).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-8);
        }
        let narrow = MomentumGrid::uniform(3.0, 7.0, 100).unwrap();
        let c_narrow = solve_coefficients(&pot, &narrow, p.units()).unwrap();
        assert_eq!(transmitted_packet(&p, &c_narrow), Err(Error::GridMismatch));
    }

    #[test]
    fn detector_must_be_asymptotic() {
        let p = packet();
        let pot = PotentialSpec::rectangular(10.0, 0.0, 0.5);
        let c = solve_coefficients(&pot, p.grid(), p.units()).unwrap();
        let grid = TimeGrid::uniform(0.0, 10.0, 64).unwrap();
        match barrier_arrival_distribution(&p, &c, 5.0, &grid) {
            Err(Error::NotAsymptotic { min_allowed, .. }) => assert!((min_allowed - 20.5).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn barrier_distribution_integrates_to_transmittance() {
        let p = packet();
        let pot = PotentialSpec::rectangular(10.0, 0.0, 0.5);
        let c = solve_coefficients(&pot, p.grid(), p.units()).unwrap();
        let (dist, _) =
            barrier_arrival_auto(&p, &c, 21.0, &WindowPolicy::default(), &ArrivalOptions::default()).unwrap();
        let t = transmittance(&p, &c).unwrap();
        assert!((dist.total - t).abs() < 1e-8);
        let cond = dist.conditional().unwrap();
        assert!(mean_arrival(&cond).unwrap() > 0.0);
    }

    #[test]
    fn free_limit_reproduces_free_pipeline() {
        let p = packet();
        let c = solve_coefficients(&PotentialSpec::Zero, p.grid(), p.units()).unwrap();
        let policy = WindowPolicy::default();
        let opts = ArrivalOptions::default();
        let (barrier, _) = barrier_arrival_auto(&p, &c, 0.0, &policy, &opts).unwrap();
        let (free, _) = auto_distribution(&p, 0.0, &policy, &opts).unwrap();
        assert_eq!(barrier, free);
    }
}
