//! Energy detection on the recovered spectrum.

use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{MassError, Result};
use crate::recovery::RecoveredSpectrum;

/// A frequency interval `[low_hz, high_hz]` on the centered Nyquist grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub fn new(low_hz: f64, high_hz: f64) -> Result<Self> {
        if !(low_hz < high_hz) {
            return Err(MassError::Config(format!("band needs low < high, got [{low_hz}, {high_hz}]")));
        }
        Ok(BandSpec { low_hz, high_hz })
    }

    /// The band reflected about 0 Hz.
    pub fn mirrored(&self) -> Self {
        BandSpec { low_hz: -self.high_hz, high_hz: -self.low_hz }
    }

    /// Vector positions of the bins `n` with `low ≤ n/T ≤ high`, for an
    /// `n_bins`-point centered spectrum.
    pub fn positions(&self, n_bins: usize, observation_s: f64) -> Result<std::ops::Range<usize>> {
        let lo = (self.low_hz * observation_s - 1e-9).ceil() as i64;
        let hi = (self.high_hz * observation_s + 1e-9).floor() as i64;
        let min = dft::min_bin(n_bins);
        let max = min + n_bins as i64 - 1;
        let (lo, hi) = (lo.max(min), hi.min(max));
        if lo > hi {
            return Err(MassError::EmptyBand { low_hz: self.low_hz, high_hz: self.high_hz });
        }
        let start = dft::position_of(n_bins, lo).expect("clamped");
        let end = dft::position_of(n_bins, hi).expect("clamped") + 1;
        Ok(start..end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Band vacant.
    H0,
    /// Band occupied.
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionDecision {
    pub energy: f64,
    pub threshold: f64,
    pub hypothesis: Hypothesis,
}

/// Strict threshold test: `H1` iff `energy > threshold`.
pub fn decide(energy: f64, threshold: f64) -> DetectionDecision {
    let hypothesis = if energy > threshold { Hypothesis::H1 } else { Hypothesis::H0 };
    DetectionDecision { energy, threshold, hypothesis }
}

/// Sum of `|X̂|²` over the bins of `band`.
pub fn band_energy(spectrum: &RecoveredSpectrum, band: &BandSpec, observation_s: f64) -> Result<f64> {
    band_energy_of(&spectrum.magnitude, band, observation_s)
}

pub fn band_energy_of(magnitude: &[f64], band: &BandSpec, observation_s: f64) -> Result<f64> {
    let range = band.positions(magnitude.len(), observation_s)?;
    Ok(magnitude[range].iter().map(|m| m * m).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub value: f64,
    /// All calibration energies were equal.
    pub degenerate: bool,
}

/// Empirical `p`-quantile with linear interpolation between order statistics
/// (position `p·(n-1)` in the sorted sample).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Threshold at the `(1 - target_pfa)` quantile of H0 band energies.
pub fn calibrate_threshold(h0_energies: &[f64], target_pfa: f64) -> Result<Threshold> {
    if h0_energies.is_empty() {
        return Err(MassError::Config("threshold calibration needs H0 samples".into()));
    }
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(MassError::Config(format!("target pfa must lie in (0, 1), got {target_pfa}")));
    }
    let mut sorted = h0_energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let degenerate = sorted[0] == sorted[sorted.len() - 1];
    Ok(Threshold { value: quantile(&sorted, 1.0 - target_pfa), degenerate })
}

/// One operating point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub pfa: f64,
    pub pd: f64,
    pub threshold: f64,
    pub trials: usize,
    pub false_alarms: usize,
    pub detections: usize,
}

/// Applies each threshold to paired H0/H1 energies drawn with common random numbers.
pub fn roc_points(h0: &[f64], h1: &[f64], thresholds: &[f64]) -> Vec<RocPoint> {
    thresholds
        .iter()
        .map(|&t| {
            let fa = h0.iter().filter(|&&e| decide(e, t).hypothesis == Hypothesis::H1).count();
            let d = h1.iter().filter(|&&e| decide(e, t).hypothesis == Hypothesis::H1).count();
            RocPoint {
                pfa: fa as f64 / h0.len().max(1) as f64,
                pd: d as f64 / h1.len().max(1) as f64,
                threshold: t,
                trials: h0.len().min(h1.len()),
                false_alarms: fa,
                detections: d,
            }
        })
        .collect()
}

/// Detection probability at a false-alarm target, thresholding at the H0 quantile.
pub fn pd_at_pfa(h0: &[f64], h1: &[f64], target_pfa: f64) -> Result<RocPoint> {
    let t = calibrate_threshold(h0, target_pfa)?;
    Ok(roc_points(h0, h1, &[t.value])[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(mag: Vec<f64>) -> RecoveredSpectrum {
        RecoveredSpectrum { magnitude: mag, ..RecoveredSpectrum::zeros(0) }
    }

    #[test]
    fn band_energy_examples() {
        let band = BandSpec::new(1.0, 2.0).unwrap();
        assert_eq!(band_energy(&spectrum(vec![0.0; 8]), &band, 1.0).unwrap(), 0.0);
        // N = 8: positions 0..8 hold bins -4..3; bin 1 at position 5
        let mut m = vec![0.0; 8];
        m[5] = 3.0;
        m[7] = 5.0; // bin 3, out of band
        assert_eq!(band_energy(&spectrum(m), &BandSpec::new(0.5, 1.5).unwrap(), 1.0).unwrap(), 9.0);
    }

    #[test]
    fn band_energy_matches_loop() {
        let mag: Vec<f64> = (0..64).map(|i| ((i * 37 % 17) as f64).sqrt() * 0.3).collect();
        let band = BandSpec::new(-3.2, 9.7).unwrap();
        let mut oracle = 0.0;
        for (pos, m) in mag.iter().enumerate() {
            let f = (pos as i64 - 32) as f64 / 2.0;
            if f >= -3.2 && f <= 9.7 {
                oracle += m * m;
            }
        }
        let e = band_energy_of(&mag, &band, 2.0).unwrap();
        assert!((e - oracle).abs() < 1e-12);
    }

    #[test]
    fn band_errors() {
        assert!(BandSpec::new(2.0, 1.0).is_err());
        let narrow = BandSpec::new(0.2, 0.4).unwrap();
        assert!(matches!(band_energy_of(&[1.0; 8], &narrow, 1.0), Err(MassError::EmptyBand { .. })));
        let outside = BandSpec::new(100.0, 200.0).unwrap();
        assert!(band_energy_of(&[1.0; 8], &outside, 1.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        let h0: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = calibrate_threshold(&h0, 0.10).unwrap();
        assert!((t.value - 90.1).abs() < 1e-9);
        assert!(!t.degenerate);
        let t = calibrate_threshold(&h0, 1.0 - 1e-12).unwrap();
        assert!((t.value - 1.0).abs() < 1e-6);
        let t = calibrate_threshold(&[4.5; 10], 0.2).unwrap();
        assert_eq!(t.value, 4.5);
        assert!(t.degenerate);
        assert!(calibrate_threshold(&[], 0.1).is_err());
        assert!(calibrate_threshold(&h0, 0.0).is_err());
        assert!(calibrate_threshold(&h0, 1.0).is_err());
    }

    #[test]
    fn decide_boundaries() {
        assert_eq!(decide(0.0, 1.0).hypothesis, Hypothesis::H0);
        assert_eq!(decide(2.0, 1.0).hypothesis, Hypothesis::H1);
        assert_eq!(decide(1.0, 1.0).hypothesis, Hypothesis::H0);
    }

    #[test]
    fn roc_is_monotone_in_threshold() {
        let h0: Vec<f64> = (0..200).map(|i| ((i * 7919) % 101) as f64).collect();
        let h1: Vec<f64> = h0.iter().map(|e| e + 30.0).collect();
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 4.0).collect();
        let pts = roc_points(&h0, &h1, &ts);
        for w in pts.windows(2) {
            assert!(w[1].pfa <= w[0].pfa && w[1].pd <= w[0].pd);
        }
    }
}
