//! Quadrature grids and node interpolation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::units::Direction;

/// Trapezoid weights for a uniform grid of `n` points spaced by `h`.
pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 1 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Checks the ordering and weight invariants shared by momentum and time grids.
pub(crate) fn validate_nodes(field: &'static str, samples: &[f64], weights: &[f64]) -> Result<()> {
    if samples.len() != weights.len() {
        return Err(invalid(field, "samples and weights differ in length"));
    }
    if samples.len() < 2 {
        return Err(invalid(field, "need at least two nodes"));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(invalid(field, "non-finite node"));
    }
    if samples.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(field, "nodes must be strictly increasing"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(invalid(field, "weights must be positive"));
    }
    Ok(())
}

/// Discretization of a momentum integral: ordered nodes `p_i` with weights `w_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    samples: Vec<f64>,
    weights: Vec<f64>,
    /// Spacing when the grid is uniform with trapezoid weights.
    spacing: Option<f64>,
}

impl MomentumGrid {
    /// Uniform grid on `[min, max]` with `n` nodes and trapezoid weights.
    pub fn uniform(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(invalid("grid", format!("bad momentum range [{min}, {max}]")));
        }
        if n < 2 {
            return Err(invalid("grid", "need at least two nodes"));
        }
        let h = (max - min) / (n - 1) as f64;
        let samples: Vec<f64> = (0..n).map(|i| min + h * i as f64).collect();
        Ok(Self { weights: trapezoid_weights(n, h), samples, spacing: Some(h) })
    }

    /// Uniform grid over `center ± half_width`, clipped to the half-line of
    /// `direction`. Used to build grids that cover a packet's momentum band.
    pub fn covering(center: f64, half_width: f64, n: usize, direction: Direction) -> Result<Self> {
        let (mut lo, mut hi) = (center - half_width, center + half_width);
        match direction {
            Direction::Plus => {
                if hi <= 0.0 {
                    return Err(Error::EmptyGrid { needed: (lo, hi) });
                }
                if lo <= 0.0 {
                    lo = hi / (n as f64);
                }
            }
            Direction::Minus => {
                if lo >= 0.0 {
                    return Err(Error::EmptyGrid { needed: (lo, hi) });
                }
                if hi >= 0.0 {
                    hi = lo / (n as f64);
                }
            }
        }
        Self::uniform(lo, hi, n)
    }

    /// Arbitrary nodes and weights.
    pub fn from_parts(samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_nodes("grid", &samples, &weights)?;
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

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    /// Largest gap between neighbouring nodes.
    pub fn max_step(&self) -> f64 {
        self.samples.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// The single direction all nodes share, if any.
    pub fn direction(&self) -> Option<Direction> {
        let d = Direction::of(self.min())?;
        self.samples.iter().all(|&p| d.contains(p)).then_some(d)
    }

    /// Mirror image `p -> -p`, keeping ascending order.
    pub fn mirrored(&self) -> Self {
        Self {
            samples: self.samples.iter().rev().map(|p| -p).collect(),
            weights: self.weights.iter().rev().copied().collect(),
            spacing: self.spacing,
        }
    }

    /// Nodes strictly on the half-line of `direction`. Uniform grids get fresh
    /// trapezoid end weights.
    pub fn restricted_to(&self, direction: Direction) -> Result<(Self, Vec<usize>)> {
        let keep: Vec<usize> =
            (0..self.len()).filter(|&i| direction.contains(self.samples[i])).collect();
        if keep.len() < 2 {
            return Err(Error::EmptyGrid { needed: (self.min(), self.max()) });
        }
        let samples: Vec<f64> = keep.iter().map(|&i| self.samples[i]).collect();
        let grid = match self.spacing {
            Some(h) => Self { weights: trapezoid_weights(samples.len(), h), samples, spacing: Some(h) },
            None => Self { weights: keep.iter().map(|&i| self.weights[i]).collect(), samples, spacing: None },
        };
        Ok((grid, keep))
    }

    /// Cubic Lagrange interpolation of nodal values at `p`. Exact at nodes.
    pub fn interpolate(&self, values: &[Complex64], p: f64) -> Option<Complex64> {
        cubic_interpolate(&self.samples, values, p)
    }
}

/// Four-point Lagrange interpolation on an ordered, possibly nonuniform grid.
/// Returns `None` outside `[xs[0], xs[n-1]]`.
pub(crate) fn cubic_interpolate<T>(xs: &[f64], ys: &[T], x: f64) -> Option<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let n = xs.len();
    if n == 0 || !(x >= xs[0] && x <= xs[n - 1]) {
        return None;
    }
    if n < 4 {
        // linear fallback
        let j = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        if n == 1 {
            return Some(ys[0]);
        }
        let t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
        return Some(ys[j - 1] * (1.0 - t) + ys[j] * t);
    }
    // index of the first node strictly above x, so xs[j-1] <= x < xs[j]
    let j = xs.partition_point(|&v| v <= x);
    if j > 0 && xs[j - 1] == x {
        return Some(ys[j - 1]);
    }
    let start = j.saturating_sub(2).min(n - 4);
    let nodes = &xs[start..start + 4];
    let mut acc: Option<T> = None;
    for (a, &xa) in nodes.iter().enumerate() {
        let mut l = 1.0;
        for (b, &xb) in nodes.iter().enumerate() {
            if a != b {
                l *= (x - xb) / (xa - xb);
            }
        }
        let term = ys[start + a] * l;
        acc = Some(match acc {
            Some(s) => s + term,
            None => term,
        });
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_has_trapezoid_weights() {
        let g = MomentumGrid::uniform(1.0, 3.0, 5).unwrap();
        assert_eq!(g.samples(), &[1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(g.weights(), &[0.25, 0.5, 0.5, 0.5, 0.25]);
        assert_eq!(g.direction(), Some(Direction::Plus));
    }

    #[test]
    fn rejects_unordered_or_nonpositive_weights() {
        assert!(MomentumGrid::from_parts(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(MomentumGrid::from_parts(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(MomentumGrid::from_parts(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn covering_clips_to_half_line() {
        let g = MomentumGrid::covering(2.0, 4.0, 100, Direction::Plus).unwrap();
        assert!(g.min() > 0.0);
        assert_eq!(g.max(), 6.0);
        let g = MomentumGrid::covering(-2.0, 4.0, 100, Direction::Minus).unwrap();
        assert!(g.max() < 0.0);
        assert!(MomentumGrid::covering(-5.0, 1.0, 10, Direction::Plus).is_err());
    }

    #[test]
    fn cubic_is_exact_on_cubics_and_nodes() {
        let xs: Vec<f64> = (0..9).map(|i| 0.3 * i as f64 + 0.01 * (i * i) as f64).collect();
        let f = |x: f64| 2.0 - x + 0.5 * x * x - 0.25 * x * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for &x in &[0.0, 0.17, 1.111, 2.0, xs[8]] {
            let v = cubic_interpolate(&xs, &ys, x).unwrap();
            assert!((v - f(x)).abs() < 1e-12, "x={x}");
        }
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(cubic_interpolate(&xs, &ys, *x).unwrap(), *y);
        }
        assert!(cubic_interpolate(&xs, &ys, -0.1).is_none());
        assert!(cubic_interpolate(&xs, &ys, 10.0).is_none());
    }

    #[test]
    fn mirrored_grid_is_ascending() {
        let g = MomentumGrid::uniform(1.0, 2.0, 3).unwrap().mirrored();
        assert_eq!(g.samples(), &[-2.0, -1.5, -1.0]);
        assert_eq!(g.direction(), Some(Direction::Minus));
    }
}
