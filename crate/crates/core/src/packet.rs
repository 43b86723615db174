//! Momentum-space wave packets on the directed half-lines.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::MomentumGrid;
use crate::units::{Direction, UnitSystem};

/// Tolerance on `Σ w|ψ̃|² = 1` for packets that claim to be normalized.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Largest probability allowed on the wrong half-line before truncation.
pub const MAX_TRUNCATED_MASS: f64 = 1e-8;

/// Complex momentum amplitudes `ψ̃(p_i)` of a directed state.
///
/// Every node lies on the half-line given by `direction`. Packets produced by
/// [`build_gaussian`] are normalized; packets derived from them by scattering
/// (e.g. a transmitted part) are not, and carry their weight in
/// [`WavePacket::total_probability`].
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket {
    grid: MomentumGrid,
    amplitudes: Vec<Complex64>,
    direction: Direction,
    units: UnitSystem,
    discarded_mass: f64,
}

impl WavePacket {
    pub fn new(
        grid: MomentumGrid,
        amplitudes: Vec<Complex64>,
        direction: Direction,
        units: UnitSystem,
    ) -> Result<Self> {
        units.validate()?;
        if amplitudes.len() != grid.len() {
            return Err(invalid("amplitudes", "length differs from the momentum grid"));
        }
        if amplitudes.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(invalid("amplitudes", "non-finite amplitude"));
        }
        if grid.direction() != Some(direction) {
            return Err(invalid(
                "grid",
                format!("every node must lie on the {direction} momentum half-line"),
            ));
        }
        Ok(Self { grid, amplitudes, direction, units, discarded_mass: 0.0 })
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn units(&self) -> UnitSystem {
        self.units
    }

    /// Probability dropped when the packet was truncated to its half-line.
    pub fn discarded_mass(&self) -> f64 {
        self.discarded_mass
    }

    /// Same grid and metadata, new amplitudes.
    pub(crate) fn with_amplitudes(&self, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), self.amplitudes.len());
        Self { amplitudes, ..self.clone() }
    }

    pub(crate) fn from_raw(
        grid: MomentumGrid,
        amplitudes: Vec<Complex64>,
        direction: Direction,
        units: UnitSystem,
        discarded_mass: f64,
    ) -> Self {
        Self { grid, amplitudes, direction, units, discarded_mass }
    }

    /// Multiplies every amplitude by `factor(p)`.
    pub fn map_amplitudes(&self, factor: impl Fn(f64) -> Complex64) -> Self {
        let amps = self
            .grid
            .samples()
            .iter()
            .zip(&self.amplitudes)
            .map(|(&p, &a)| a * factor(p))
            .collect();
        self.with_amplitudes(amps)
    }

    /// `Σ w_i |ψ̃(p_i)|²`.
    pub fn total_probability(&self) -> f64 {
        self.grid.weights().iter().zip(&self.amplitudes).map(|(w, a)| w * a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_probability() - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// Rescales to unit norm. Fails on a zero packet.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.total_probability();
        if !(n > 0.0) {
            return Err(Error::EmptyDistribution);
        }
        let s = n.sqrt().recip();
        Ok(self.with_amplitudes(self.amplitudes.iter().map(|a| a * s).collect()))
    }

    /// Energy-representation amplitude `⟨E,±|ψ⟩ = (m/2E)^{1/4} ψ̃(±√(2mE))`.
    pub fn energy_amplitude(&self, energy: f64) -> Result<Complex64> {
        if !(energy.is_finite() && energy > 0.0) {
            return Err(invalid("energy", format!("must be positive, got {energy}")));
        }
        let p = self.direction.sign() * self.units.momentum(energy);
        let psi = self.grid.interpolate(&self.amplitudes, p).ok_or(Error::OutOfSupport {
            momentum: p,
            min: self.grid.min(),
            max: self.grid.max(),
        })?;
        Ok(psi * (self.units.mass / (2.0 * energy)).powf(0.25))
    }

    /// Enforces the low-momentum falloff `|ψ̃(p)|/|p| → 0`, checked at the
    /// node nearest zero momentum.
    pub fn check_low_momentum_falloff(&self, threshold: f64) -> Result<()> {
        let (p, a) = match self.direction {
            Direction::Plus => (self.grid.min(), self.amplitudes[0]),
            Direction::Minus => (self.grid.max(), self.amplitudes[self.amplitudes.len() - 1]),
        };
        let ratio = a.norm() / p.abs();
        if ratio > threshold {
            return Err(invalid(
                "packet",
                format!(
                    "amplitude does not vanish fast enough at low momentum: |ψ̃(p)|/|p| = {ratio:.3e} at p = {p}"
                ),
            ));
        }
        Ok(())
    }

    /// Normalized expectation of `f(p)` under `|ψ̃|²`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&p, &w), a) in self.grid.samples().iter().zip(self.grid.weights()).zip(&self.amplitudes) {
            let d = w * a.norm_sqr();
            num += d * f(p);
            den += d;
        }
        num / den
    }

    /// Mean and standard deviation of the momentum.
    pub fn momentum_moments(&self) -> (f64, f64) {
        let mean = self.expectation(|p| p);
        let var = self.expectation(|p| (p - mean).powi(2));
        (mean, var.max(0.0).sqrt())
    }

    /// Mean and standard deviation of the kinetic energy `p²/2m`.
    pub fn energy_moments(&self) -> (f64, f64) {
        let u = self.units;
        let mean = self.expectation(|p| u.energy(p));
        let var = self.expectation(|p| (u.energy(p) - mean).powi(2));
        (mean, var.max(0.0).sqrt())
    }

    /// Mean and spread of the position, from `x = iħ ∂/∂p` in the momentum
    /// representation. Derivatives are finite differences on the grid, so
    /// this is an estimate used for windowing.
    pub fn position_moments(&self) -> (f64, f64) {
        let xs = self.grid.samples();
        let ys = &self.amplitudes;
        let n = xs.len();
        let hbar = self.units.hbar;
        let mut deriv = vec![Complex64::new(0.0, 0.0); n];
        let uniform = self.grid.spacing();
        for i in 0..n {
            deriv[i] = match uniform {
                Some(h) if i >= 2 && i + 2 < n => {
                    (ys[i - 2] - ys[i - 1] * 8.0 + ys[i + 1] * 8.0 - ys[i + 2]) / (12.0 * h)
                }
                _ => {
                    let (a, b) = match i {
                        0 => (0, 1),
                        i if i == n - 1 => (n - 2, n - 1),
                        i => (i - 1, i + 1),
                    };
                    (ys[b] - ys[a]) / (xs[b] - xs[a])
                }
            };
        }
        let mut norm = 0.0;
        let mut x1 = 0.0;
        let mut x2 = 0.0;
        for i in 0..n {
            let w = self.grid.weights()[i];
            norm += w * ys[i].norm_sqr();
            x1 += w * (ys[i].conj() * Complex64::i() * hbar * deriv[i]).re;
            x2 += w * hbar * hbar * deriv[i].norm_sqr();
        }
        let mean = x1 / norm;
        let var = x2 / norm - mean * mean;
        (mean, var.max(0.0).sqrt())
    }
}

/// Parameters of a Gaussian packet
/// `ψ̃(p) = (2πσ²)^{-1/4} exp(-(p-p0)²/4σ²) exp(-i p x0/ħ)`,
/// centered at `x0` in space with momentum spread `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    /// Central momentum; its sign fixes the direction.
    pub p0: f64,
    pub sigma_p: f64,
    pub x0: f64,
    pub units: UnitSystem,
    /// Minimum `|p0|/σ`.
    pub directionality_threshold: f64,
    /// Bound on `|ψ̃(p_min)|/|p_min|` at the low-momentum edge of the grid.
    pub falloff_threshold: f64,
}

impl GaussianSpec {
    pub fn new(p0: f64, sigma_p: f64, x0: f64) -> Self {
        Self {
            p0,
            sigma_p,
            x0,
            units: UnitSystem::default(),
            directionality_threshold: 5.0,
            falloff_threshold: 1e-2,
        }
    }

    pub fn with_units(mut self, units: UnitSystem) -> Self {
        self.units = units;
        self
    }

    pub fn direction(&self) -> Result<Direction> {
        Direction::of(self.p0).ok_or_else(|| invalid("packet.p0", "must be nonzero"))
    }

    /// Spatial spread `ħ/2σ` of the initial packet.
    pub fn sigma_x(&self) -> f64 {
        self.units.hbar / (2.0 * self.sigma_p)
    }

    /// Analytic amplitude before truncation.
    pub fn amplitude(&self, p: f64) -> Complex64 {
        let s2 = self.sigma_p * self.sigma_p;
        let norm = (2.0 * std::f64::consts::PI * s2).powf(-0.25);
        let env = norm * (-(p - self.p0).powi(2) / (4.0 * s2)).exp();
        Complex64::from_polar(env, -p * self.x0 / self.units.hbar)
    }

    /// Uniform grid over `p0 ± 8σ` on the packet's half-line.
    pub fn default_grid(&self, n: usize) -> Result<MomentumGrid> {
        MomentumGrid::covering(self.p0, 8.0 * self.sigma_p, n, self.direction()?)
    }

    pub fn validate(&self) -> Result<()> {
        self.units.validate()?;
        if !(self.sigma_p.is_finite() && self.sigma_p > 0.0) {
            return Err(invalid("packet.sigma_p", format!("must be positive, got {}", self.sigma_p)));
        }
        if !self.p0.is_finite() || self.p0 == 0.0 {
            return Err(invalid("packet.p0", "must be finite and nonzero"));
        }
        if !self.x0.is_finite() {
            return Err(invalid("packet.x0", "must be finite"));
        }
        Ok(())
    }
}

/// Gaussian packet sampled on `grid`, truncated to its half-line and
/// renormalized. The discarded probability is recorded on the packet.
pub fn build_gaussian(spec: &GaussianSpec, grid: &MomentumGrid) -> Result<WavePacket> {
    spec.validate()?;
    let direction = spec.direction()?;
    let (grid, _) = grid.restricted_to(direction)?;

    let s = spec.sigma_p;
    let (lo, hi) = (spec.p0 - 8.0 * s, spec.p0 + 8.0 * s);
    let (need_lo, need_hi) = match direction {
        Direction::Plus => (lo.max(0.0), hi),
        Direction::Minus => (lo, hi.min(0.0)),
    };
    // a directed grid can never reach p = 0 itself
    let slack = |edge: f64| if edge == 0.0 { 0.5 * s } else { 1e-9 * s };
    if grid.min() > need_lo + slack(need_lo) || grid.max() < need_hi - slack(need_hi) {
        return Err(Error::EmptyGrid { needed: (need_lo, need_hi) });
    }

    let amps: Vec<Complex64> = grid.samples().iter().map(|&p| spec.amplitude(p)).collect();
    let kept: f64 = grid.weights().iter().zip(&amps).map(|(w, a)| w * a.norm_sqr()).sum();
    let discarded = (1.0 - kept).max(0.0);
    if spec.p0.abs() / s < spec.directionality_threshold || discarded > MAX_TRUNCATED_MASS {
        return Err(Error::DirectionalityViolation { mass: discarded });
    }
    let scale = kept.sqrt().recip();
    let amps = amps.into_iter().map(|a| a * scale).collect();
    let packet = WavePacket::from_raw(grid, amps, direction, spec.units, discarded);
    packet.check_low_momentum_falloff(spec.falloff_threshold)?;
    Ok(packet)
}

/// Sum of Gaussian components sharing one grid, normalized as a whole.
/// Components must all point the same way.
pub fn build_superposition(
    components: &[(Complex64, GaussianSpec)],
    grid: &MomentumGrid,
) -> Result<WavePacket> {
    let (_, first) = components.first().ok_or_else(|| invalid("packet", "no components"))?;
    let direction = first.direction()?;
    let mut parts = Vec::with_capacity(components.len());
    for (c, spec) in components {
        if spec.direction()? != direction || spec.units != first.units {
            return Err(invalid("packet", "components must share direction and units"));
        }
        parts.push((c, build_gaussian(spec, grid)?));
    }
    let base = &parts[0].1;
    let mut amps = vec![Complex64::new(0.0, 0.0); base.grid().len()];
    for (c, part) in &parts {
        for (acc, a) in amps.iter_mut().zip(part.amplitudes()) {
            *acc += **c * a;
        }
    }
    base.with_amplitudes(amps).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> (GaussianSpec, WavePacket) {
        let spec = GaussianSpec::new(5.0, 0.5, -20.0);
        let grid = spec.default_grid(2048).unwrap();
        let packet = build_gaussian(&spec, &grid).unwrap();
        (spec, packet)
    }

    #[test]
    fn gaussian_is_normalized() {
        let (_, packet) = reference();
        assert!((packet.total_probability() - 1.0).abs() < 1e-10);
        assert!(packet.discarded_mass() < 1e-12);
    }

    #[test]
    fn gaussian_mode_sits_at_p0() {
        let spec = GaussianSpec::new(5.0, 0.5, -20.0);
        let packet = build_gaussian(&spec, &spec.default_grid(2049).unwrap()).unwrap();
        let (imax, _) = packet
            .amplitudes()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        let nearest = packet
            .grid()
            .samples()
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 5.0).abs().total_cmp(&(b.1 - 5.0).abs()))
            .unwrap()
            .0;
        assert_eq!(imax, nearest);
    }

    #[test]
    fn analytic_gaussian_quadrature_is_exact_enough() {
        let spec = GaussianSpec::new(5.0, 0.5, 3.0);
        let grid = MomentumGrid::uniform(1.0, 9.0, 1024).unwrap();
        let raw: f64 = grid
            .samples()
            .iter()
            .zip(grid.weights())
            .map(|(&p, w)| w * spec.amplitude(p).norm_sqr())
            .sum();
        assert!((raw - 1.0).abs() < 1e-8);
    }

    #[test]
    fn total_probability_scales_quadratically() {
        let (_, packet) = reference();
        let doubled = packet.map_amplitudes(|_| Complex64::new(2.0, 0.0));
        assert!((doubled.total_probability() - 4.0).abs() < 1e-9);
        let zero = packet.map_amplitudes(|_| Complex64::new(0.0, 0.0));
        assert_eq!(zero.total_probability(), 0.0);
    }

    #[test]
    fn broad_packet_is_not_directed() {
        // tail mass below p = 0 by Simpson quadrature of |ψ̃|² over [-12, 0]
        let spec = GaussianSpec::new(1.0, 1.0, 0.0);
        let n = 2000;
        let h = 12.0 / n as f64;
        let f = |p: f64| spec.amplitude(p).norm_sqr();
        let mut tail = f(-12.0) + f(0.0);
        for i in 1..n {
            tail += f(-12.0 + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        tail *= h / 3.0;
        assert!(tail > 1e-8);
        assert!((tail - 0.158_655_253_931_457).abs() < 1e-9);

        let grid = spec.default_grid(1024).unwrap();
        match build_gaussian(&spec, &grid) {
            Err(Error::DirectionalityViolation { mass }) => assert!(mass > 1e-8),
            other => panic!("expected directionality violation, got {other:?}"),
        }
    }

    #[test]
    fn grid_must_cover_packet() {
        let spec = GaussianSpec::new(5.0, 0.5, 0.0);
        let grid = MomentumGrid::uniform(3.0, 9.0, 512).unwrap();
        assert!(matches!(build_gaussian(&spec, &grid), Err(Error::EmptyGrid { .. })));
    }

    #[test]
    fn rejects_nonpositive_width() {
        let spec = GaussianSpec::new(5.0, 0.0, 0.0);
        let grid = MomentumGrid::uniform(1.0, 9.0, 64).unwrap();
        match build_gaussian(&spec, &grid) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "packet.sigma_p"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_direction_packet() {
        let spec = GaussianSpec::new(-5.0, 0.5, 20.0);
        let grid = spec.default_grid(4096).unwrap();
        let packet = build_gaussian(&spec, &grid).unwrap();
        assert_eq!(packet.direction(), Direction::Minus);
        assert!(packet.grid().samples().iter().all(|&p| p < 0.0));
        let (xm, sx) = packet.position_moments();
        assert!((xm - 20.0).abs() < 1e-4);
        assert!((sx - 1.0).abs() < 1e-3);
    }

    #[test]
    fn energy_amplitude_of_constant_packet() {
        let grid = MomentumGrid::uniform(0.5, 4.0, 64).unwrap();
        let c = Complex64::new(0.3, -0.7);
        let packet =
            WavePacket::new(grid, vec![c; 64], Direction::Plus, UnitSystem::default()).unwrap();
        let a = packet.energy_amplitude(2.0).unwrap();
        assert!((a - c * 2f64.powf(-0.5)).norm() < 1e-14);
    }

    #[test]
    fn energy_amplitude_out_of_support() {
        let (_, packet) = reference();
        assert!(matches!(packet.energy_amplitude(100.0), Err(Error::OutOfSupport { .. })));
        assert!(matches!(packet.energy_amplitude(0.1), Err(Error::OutOfSupport { .. })));
        assert!(packet.energy_amplitude(-1.0).is_err());
    }

    #[test]
    fn energy_amplitude_reproduces_nodes() {
        let (_, packet) = reference();
        let u = packet.units();
        for (i, &p) in packet.grid().samples().iter().enumerate().step_by(97) {
            let e = u.energy(p);
            let expected = packet.amplitudes()[i] * (u.mass / (2.0 * e)).powf(0.25);
            let got = packet.energy_amplitude(e).unwrap();
            assert!((got - expected).norm() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn energy_amplitude_peaks_at_central_energy() {
        let spec = GaussianSpec::new(5.0, 0.1, 0.0);
        let grid = spec.default_grid(1024).unwrap();
        let packet = build_gaussian(&spec, &grid).unwrap();
        let peak = packet.energy_amplitude(12.5).unwrap().norm();
        for e in [11.0, 12.0, 12.4, 12.6, 13.0, 14.0] {
            assert!(packet.energy_amplitude(e).unwrap().norm() < peak);
        }
    }

    #[test]
    fn wrong_half_line_is_rejected() {
        let grid = MomentumGrid::uniform(-1.0, 1.0, 8).unwrap();
        let r = WavePacket::new(grid, vec![Complex64::default(); 8], Direction::Plus, UnitSystem::default());
        assert!(r.is_err());
    }

    #[test]
    fn position_moments_of_gaussian() {
        let (spec, packet) = reference();
        let (x, sx) = packet.position_moments();
        assert!((x - spec.x0).abs() < 1e-4);
        assert!((sx - spec.sigma_x()).abs() < 1e-3);
    }
}
