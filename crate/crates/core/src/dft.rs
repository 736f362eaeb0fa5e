//! Unnormalized DFT with centered bin ordering.
//!
//! A length-`n` spectrum is stored over the centered bins
//! `-floor(n/2) ..= ceil(n/2) - 1`; position `p` holds bin `p - floor(n/2)`.
//! For even `n` the Nyquist bin appears once, as `-n/2`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Lowest centered bin index for a length-`n` transform.
pub fn min_bin(n: usize) -> i64 {
    -((n / 2) as i64)
}

/// Centered bin at vector position `pos`.
pub fn bin_at(n: usize, pos: usize) -> i64 {
    pos as i64 + min_bin(n)
}

/// Vector position of centered bin `bin`, or `None` if out of range.
pub fn position_of(n: usize, bin: i64) -> Option<usize> {
    let pos = bin - min_bin(n);
    (pos >= 0 && (pos as usize) < n).then_some(pos as usize)
}

/// Folds any integer frequency index onto the centered range of length `n`.
pub fn fold(n: usize, index: i64) -> i64 {
    let n = n as i64;
    let lo = -(n / 2);
    (index - lo).rem_euclid(n) + lo
}

/// Forward DFT `X[h] = sum_m x[m] exp(-j 2 pi m h / n)`, returned in centered order.
pub fn centered_dft(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..n)
        .map(|pos| buf[bin_at(n, pos).rem_euclid(n as i64) as usize])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(samples: &[f64]) -> Vec<Complex64> {
        let n = samples.len();
        (0..n)
            .map(|pos| {
                let h = bin_at(n, pos) as f64;
                samples
                    .iter()
                    .enumerate()
                    .map(|(m, &x)| {
                        let ang = -2.0 * std::f64::consts::PI * m as f64 * h / n as f64;
                        Complex64::new(x * ang.cos(), x * ang.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_sum() {
        for n in [1usize, 2, 5, 8, 13] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 4.0).collect();
            let fast = centered_dft(&x);
            let slow = naive(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn centered_indexing() {
        assert_eq!(min_bin(8), -4);
        assert_eq!(min_bin(5), -2);
        assert_eq!(bin_at(8, 7), 3);
        assert_eq!(position_of(5, -2), Some(0));
        assert_eq!(position_of(5, 3), None);
        assert_eq!(fold(8, 4), -4);
        assert_eq!(fold(5, 6), 1);
        assert_eq!(fold(5, -7), -2);
    }
}
