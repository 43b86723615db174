//! Chirp-z evaluation of `b_j = Σ_k a_k exp(-i α k j)` for arbitrary `α`,
//! via Bluestein's identity `kj = (k² + j² - (k-j)²)/2` and one FFT convolution.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn chirp_z(input: &[Complex64], alpha: f64, n_out: usize) -> Vec<Complex64> {
    let n_in = input.len();
    if n_in == 0 || n_out == 0 {
        return vec![Complex64::new(0.0, 0.0); n_out];
    }
    let len = (n_in + n_out - 1).next_power_of_two();
    let chirp = |m: i64| {
        // m² exactly in integers before scaling keeps the phase accurate
        let m2 = (m * m) as f64;
        Complex64::from_polar(1.0, 0.5 * alpha * m2)
    };

    let mut a = vec![Complex64::new(0.0, 0.0); len];
    for (k, &x) in input.iter().enumerate() {
        a[k] = x * chirp(k as i64).conj();
    }
    // even kernel c_m = exp(+iα m²/2) at lags j - k in [-(n_in-1), n_out-1], stored circularly
    let mut c = vec![Complex64::new(0.0, 0.0); len];
    for (m, slot) in c.iter_mut().enumerate().take(n_out) {
        *slot = chirp(m as i64);
    }
    for m in 1..n_in {
        c[len - m] = chirp(m as i64);
    }

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut a);
    fwd.process(&mut c);
    for (x, y) in a.iter_mut().zip(&c) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / len as f64;

    (0..n_out).map(|j| a[j] * scale * chirp(j as i64).conj())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(input: &[Complex64], alpha: f64, n_out: usize) -> Vec<Complex64> {
        (0..n_out)
            .map(|j| {
                input
                    .iter()
                    .enumerate()
                    .map(|(k, &a)| a * Complex64::from_polar(1.0, -alpha * (k * j) as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_sum() {
        let input: Vec<Complex64> =
            (0..37).map(|k| Complex64::new((k as f64 * 0.3).sin(), (k as f64 * 0.11).cos())).collect();
        for &alpha in &[0.013, 0.5, 2.0 * std::f64::consts::PI / 37.0, 3.3] {
            for &n_out in &[1usize, 20, 64] {
                let fast = chirp_z(&input, alpha, n_out);
                let slow = naive(&input, alpha, n_out);
                for (f, s) in fast.iter().zip(&slow) {
                    assert!((f - s).norm() < 1e-10, "alpha={alpha} n_out={n_out}");
                }
            }
        }
    }
}
