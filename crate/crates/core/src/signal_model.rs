//! Multiband test signal, channel fading and branch sampling.
//!
//! The received signal is a sum of `N_b` subbands plus white Gaussian noise:
//!
//! ```text
//! x(t) = sum_l sqrt(E_l) B_l sinc(B_l (t - c)) cos(2 pi f_l (t - c)) + z(t)
//! ```
//!
//! where `c` is the pulse centre (zero unless configured). A branch with
//! time offset `delta` samples `x(m / f_i + delta)`. In [`Waveform::BinTone`]
//! mode every subband is replaced by a pure cosine `sqrt(E_l) cos(2 pi f_l (t - c))`
//! whose frequency sits exactly on a Nyquist DFT bin, which makes the spectrum
//! exactly sparse.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{MassError, Result};

const INTEGER_TOL: f64 = 1e-6;

/// One primary-user subband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubbandSpec {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Linear received power before fading.
    pub power: f64,
}

impl SubbandSpec {
    pub fn low_hz(&self) -> f64 {
        self.carrier_hz - self.bandwidth_hz / 2.0
    }

    pub fn high_hz(&self) -> f64 {
        self.carrier_hz + self.bandwidth_hz / 2.0
    }

    fn overlaps(&self, other: &SubbandSpec) -> bool {
        self.low_hz() < other.high_hz() && other.low_hz() < self.high_hz()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    /// Sinc-shaped subbands with rectangular spectra.
    #[default]
    Sinc,
    /// Pure cosines at Nyquist bin frequencies.
    BinTone,
}

/// Ground-truth wideband signal. Construct with [`WidebandSignalSpec::new`]
/// or deserialize; both paths validate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignalSpec")]
pub struct WidebandSignalSpec {
    pub bandwidth_hz: f64,
    pub observation_s: f64,
    pub subbands: Vec<SubbandSpec>,
    pub noise_power: f64,
    pub rng_seed: u64,
    pub waveform: Waveform,
    pub pulse_center_s: f64,
}

#[derive(Deserialize)]
struct RawSignalSpec {
    bandwidth_hz: f64,
    observation_s: f64,
    #[serde(default)]
    subbands: Vec<SubbandSpec>,
    #[serde(default = "unit")]
    noise_power: f64,
    #[serde(default)]
    rng_seed: u64,
    #[serde(default)]
    waveform: Waveform,
    #[serde(default)]
    pulse_center_s: f64,
}

fn unit() -> f64 {
    1.0
}

impl TryFrom<RawSignalSpec> for WidebandSignalSpec {
    type Error = MassError;

    fn try_from(raw: RawSignalSpec) -> Result<Self> {
        let spec = WidebandSignalSpec {
            bandwidth_hz: raw.bandwidth_hz,
            observation_s: raw.observation_s,
            subbands: raw.subbands,
            noise_power: raw.noise_power,
            rng_seed: raw.rng_seed,
            waveform: raw.waveform,
            pulse_center_s: raw.pulse_center_s,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl WidebandSignalSpec {
    pub fn new(
        bandwidth_hz: f64,
        observation_s: f64,
        subbands: Vec<SubbandSpec>,
        noise_power: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        let spec = WidebandSignalSpec {
            bandwidth_hz,
            observation_s,
            subbands,
            noise_power,
            rng_seed,
            waveform: Waveform::Sinc,
            pulse_center_s: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_waveform(mut self, waveform: Waveform) -> Result<Self> {
        self.waveform = waveform;
        self.validate()?;
        Ok(self)
    }

    pub fn with_pulse_center(mut self, center_s: f64) -> Self {
        self.pulse_center_s = center_s;
        self
    }

    pub fn with_subbands(mut self, subbands: Vec<SubbandSpec>) -> Result<Self> {
        self.subbands = subbands;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(MassError::Config(msg));
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return cfg(format!("bandwidth_hz must be positive, got {}", self.bandwidth_hz));
        }
        if !(self.observation_s > 0.0 && self.observation_s.is_finite()) {
            return cfg(format!("observation_s must be positive, got {}", self.observation_s));
        }
        if !(self.noise_power >= 0.0) {
            return cfg(format!("noise_power must be >= 0, got {}", self.noise_power));
        }
        let n = 2.0 * self.bandwidth_hz * self.observation_s;
        if n < 1.0 || (n - n.round()).abs() > INTEGER_TOL * n.max(1.0) {
            return cfg(format!("2·W·T = {n} is not a positive integer"));
        }
        for (i, sb) in self.subbands.iter().enumerate() {
            if !(sb.bandwidth_hz > 0.0) {
                return cfg(format!("subband {i}: bandwidth must be positive"));
            }
            if !(sb.power >= 0.0) {
                return cfg(format!("subband {i}: power must be >= 0"));
            }
            if sb.carrier_hz < 0.0 || sb.high_hz() > self.bandwidth_hz * (1.0 + 1e-12) {
                return cfg(format!(
                    "subband {i}: [{}, {}] Hz leaves the filter band [0, {}]",
                    sb.low_hz(),
                    sb.high_hz(),
                    self.bandwidth_hz
                ));
            }
            if self.waveform == Waveform::BinTone {
                let bin = sb.carrier_hz * self.observation_s;
                if (bin - bin.round()).abs() > INTEGER_TOL {
                    return cfg(format!(
                        "subband {i}: tone at {} Hz is not on a DFT bin",
                        sb.carrier_hz
                    ));
                }
            }
        }
        for i in 0..self.subbands.len() {
            for j in i + 1..self.subbands.len() {
                let overlap = match self.waveform {
                    Waveform::Sinc => self.subbands[i].overlaps(&self.subbands[j]),
                    Waveform::BinTone => {
                        self.tone_bin(i) == self.tone_bin(j)
                    }
                };
                if overlap {
                    return cfg(format!("subbands {i} and {j} overlap"));
                }
            }
        }
        Ok(())
    }

    /// Number of Nyquist samples `N = 2WT`.
    pub fn nyquist_n(&self) -> usize {
        (2.0 * self.bandwidth_hz * self.observation_s).round() as usize
    }

    pub fn nyquist_rate_hz(&self) -> f64 {
        self.nyquist_n() as f64 / self.observation_s
    }

    /// Frequency spacing of Nyquist DFT bins, `1/T`.
    pub fn bin_spacing_hz(&self) -> f64 {
        1.0 / self.observation_s
    }

    pub fn powers(&self) -> Vec<f64> {
        self.subbands.iter().map(|s| s.power).collect()
    }

    fn tone_bin(&self, index: usize) -> i64 {
        (self.subbands[index].carrier_hz * self.observation_s).round() as i64
    }

    /// Centered Nyquist bins occupied by subband `index`, positive and mirrored
    /// negative side, deduplicated and sorted.
    pub fn occupied_bins_of(&self, index: usize) -> Vec<i64> {
        let n = self.nyquist_n();
        let mut bins = match self.waveform {
            Waveform::BinTone => {
                let b = self.tone_bin(index);
                vec![dft::fold(n, b), dft::fold(n, -b)]
            }
            Waveform::Sinc => {
                let sb = &self.subbands[index];
                let t = self.observation_s;
                let lo = (sb.low_hz() * t).ceil() as i64;
                let hi = (sb.high_hz() * t).floor() as i64;
                (lo..=hi)
                    .flat_map(|b| [dft::fold(n, b), dft::fold(n, -b)])
                    .collect()
            }
        };
        bins.sort_unstable();
        bins.dedup();
        bins
    }

    /// All occupied Nyquist bins over every subband.
    pub fn occupied_bins(&self) -> Vec<i64> {
        let mut bins: Vec<i64> = (0..self.subbands.len())
            .flat_map(|i| self.occupied_bins_of(i))
            .collect();
        bins.sort_unstable();
        bins.dedup();
        bins
    }

    /// Average SNR in linear units: expected Nyquist-DFT signal energy per
    /// occupied bin over the expected per-bin noise energy `N·σ²`.
    ///
    /// Sinc subbands have spectral height `sqrt(E)/2` over `B·T` bins per side,
    /// giving `N·ΣE_l·B_l / (4·T²·σ²·ΣB_l)`. Tones contribute `N·E/(4σ²)` each.
    pub fn average_snr(&self) -> f64 {
        if self.subbands.is_empty() {
            return 0.0;
        }
        let n = self.nyquist_n() as f64;
        let t = self.observation_s;
        match self.waveform {
            Waveform::Sinc => {
                let weighted: f64 = self.subbands.iter().map(|s| s.power * s.bandwidth_hz).sum();
                let total_bw: f64 = self.subbands.iter().map(|s| s.bandwidth_hz).sum();
                n * weighted / (4.0 * t * t * self.noise_power * total_bw)
            }
            Waveform::BinTone => {
                let mean: f64 =
                    self.subbands.iter().map(|s| s.power).sum::<f64>() / self.subbands.len() as f64;
                n * mean / (4.0 * self.noise_power)
            }
        }
    }

    /// Per-subband power that yields the requested average SNR when all
    /// subbands share it.
    pub fn power_for_snr_db(&self, snr_db: f64) -> f64 {
        let snr = 10f64.powf(snr_db / 10.0);
        let n = self.nyquist_n() as f64;
        let t = self.observation_s;
        match self.waveform {
            Waveform::Sinc => snr * 4.0 * t * t * self.noise_power / n,
            Waveform::BinTone => snr * 4.0 * self.noise_power / n,
        }
    }

    /// Copy with all subband powers set for the requested average SNR.
    pub fn at_snr_db(&self, snr_db: f64) -> Self {
        let p = self.power_for_snr_db(snr_db);
        let mut out = self.clone();
        for sb in &mut out.subbands {
            sb.power = p;
        }
        out
    }

    /// Copy with subband `index` switched off (zero power).
    pub fn without_subband(&self, index: usize) -> Self {
        let mut out = self.clone();
        if let Some(sb) = out.subbands.get_mut(index) {
            sb.power = 0.0;
        }
        out
    }
}

/// Draws `count` non-overlapping subbands with bandwidths uniform in
/// `[min_bw, max_bw]` and carriers uniform over the admissible range of `[0, W]`.
///
/// Rejection-samples each subband against the ones already placed.
pub fn draw_layout<R: Rng>(
    count: usize,
    min_bw: f64,
    max_bw: f64,
    bandwidth_hz: f64,
    rng: &mut R,
) -> Result<Vec<SubbandSpec>> {
    if !(min_bw > 0.0 && max_bw >= min_bw && max_bw < bandwidth_hz) {
        return Err(MassError::Config(format!(
            "bad subband bandwidth range [{min_bw}, {max_bw}] for W = {bandwidth_hz}"
        )));
    }
    let mut placed: Vec<SubbandSpec> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ok = false;
        for _ in 0..10_000 {
            let bw = if max_bw > min_bw { rng.random_range(min_bw..=max_bw) } else { min_bw };
            let carrier = rng.random_range(bw / 2.0..=bandwidth_hz - bw / 2.0);
            let cand = SubbandSpec { carrier_hz: carrier, bandwidth_hz: bw, power: 1.0 };
            if placed.iter().all(|p| !p.overlaps(&cand)) {
                placed.push(cand);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(MassError::Config(format!(
                "could not place {count} non-overlapping subbands in {bandwidth_hz} Hz"
            )));
        }
    }
    Ok(placed)
}

/// Draws `count` distinct tone bins in `1 ..= floor(N/2) - 1`, avoiding DC and
/// Nyquist so every tone occupies exactly two bins.
pub fn draw_tone_layout<R: Rng>(
    count: usize,
    observation_s: f64,
    nyquist_n: usize,
    rng: &mut R,
) -> Result<Vec<SubbandSpec>> {
    let top = (nyquist_n / 2).saturating_sub(1);
    if count > top {
        return Err(MassError::Config(format!("cannot place {count} tones below bin {top}")));
    }
    let bins = rand::seq::index::sample(rng, top, count);
    Ok(bins
        .into_iter()
        .map(|b| SubbandSpec {
            carrier_hz: (b + 1) as f64 / observation_s,
            bandwidth_hz: 1.0 / observation_s,
            power: 1.0,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    #[default]
    Awgn,
    Rayleigh,
    #[serde(alias = "shadow")]
    LogNormalShadow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    #[serde(default)]
    pub shadow_sigma_db: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::awgn()
    }
}

impl ChannelModel {
    pub fn awgn() -> Self {
        ChannelModel { kind: ChannelKind::Awgn, shadow_sigma_db: 0.0 }
    }

    pub fn rayleigh() -> Self {
        ChannelModel { kind: ChannelKind::Rayleigh, shadow_sigma_db: 0.0 }
    }

    pub fn shadow(sigma_db: f64) -> Result<Self> {
        let m = ChannelModel { kind: ChannelKind::LogNormalShadow, shadow_sigma_db: sigma_db };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ChannelKind::LogNormalShadow && !(self.shadow_sigma_db > 0.0) {
            return Err(MassError::Config(format!(
                "shadow fading needs shadow_sigma_db > 0, got {}",
                self.shadow_sigma_db
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::LogNormalShadow => "shadow",
        }
    }

    /// One linear power gain with unit mean.
    pub fn draw_gain<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.kind {
            ChannelKind::Awgn => 1.0,
            ChannelKind::Rayleigh => Exp1.sample(rng),
            ChannelKind::LogNormalShadow => {
                // gain = 10^(G/10), G ~ N(mu, sigma^2) in dB, with E[gain] = 1
                let ln10 = std::f64::consts::LN_10;
                let sigma = self.shadow_sigma_db;
                let mu = -sigma * sigma * ln10 / 20.0;
                let g: f64 = Normal::new(mu, sigma).expect("sigma > 0").sample(rng);
                10f64.powf(g / 10.0)
            }
        }
    }
}

/// Constant time offset of one sampling branch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchOffset {
    pub delta_s: f64,
}

impl BranchOffset {
    pub fn new(delta_s: f64, observation_s: f64) -> Result<Self> {
        if !(delta_s >= 0.0 && delta_s < observation_s) {
            return Err(MassError::Config(format!(
                "branch offset {delta_s} s outside [0, {observation_s})"
            )));
        }
        Ok(BranchOffset { delta_s })
    }

    pub fn zero() -> Self {
        BranchOffset { delta_s: 0.0 }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

fn check_powers(spec: &WidebandSignalSpec, powers: &[f64]) -> Result<()> {
    if powers.len() != spec.subbands.len() {
        return Err(MassError::Shape(format!(
            "{} powers for {} subbands",
            powers.len(),
            spec.subbands.len()
        )));
    }
    Ok(())
}

fn eval_unchecked(spec: &WidebandSignalSpec, powers: &[f64], t: f64) -> f64 {
    let tau = t - spec.pulse_center_s;
    spec.subbands
        .iter()
        .zip(powers)
        .filter(|(_, &p)| p > 0.0)
        .map(|(sb, &p)| {
            let carrier = (2.0 * PI * sb.carrier_hz * tau).cos();
            match spec.waveform {
                Waveform::Sinc => p.sqrt() * sb.bandwidth_hz * sinc(sb.bandwidth_hz * tau) * carrier,
                Waveform::BinTone => p.sqrt() * carrier,
            }
        })
        .sum()
}

/// Noise-free signal value at time `t` (branch offset already folded into `t`).
pub fn evaluate_signal(spec: &WidebandSignalSpec, powers: &[f64], t: f64) -> Result<f64> {
    check_powers(spec, powers)?;
    Ok(eval_unchecked(spec, powers, t))
}

/// Per-subband received powers after one fading draw.
pub fn draw_fading<R: Rng>(spec: &WidebandSignalSpec, channel: &ChannelModel, rng: &mut R) -> Vec<f64> {
    spec.subbands
        .iter()
        .map(|sb| sb.power * channel.draw_gain(rng))
        .collect()
}

/// Samples one branch: `y[m] = x(m / rate + delta) + noise`, `m = 0..count`.
pub fn sample_branch<R: Rng>(
    spec: &WidebandSignalSpec,
    powers: &[f64],
    rate_hz: f64,
    offset: BranchOffset,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_powers(spec, powers)?;
    if !(rate_hz > 0.0) {
        return Err(MassError::Config(format!("sampling rate must be positive, got {rate_hz}")));
    }
    let expected = rate_hz * spec.observation_s;
    if (expected - count as f64).abs() > INTEGER_TOL * expected.max(1.0) {
        return Err(MassError::Config(format!(
            "sample count {count} inconsistent with rate {rate_hz} Hz over {} s",
            spec.observation_s
        )));
    }
    let sigma = spec.noise_power.sqrt();
    Ok((0..count)
        .map(|m| {
            let t = m as f64 / rate_hz + offset.delta_s;
            let mut v = eval_unchecked(spec, powers, t);
            if sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                v += sigma * z;
            }
            v
        })
        .collect())
}

/// Nyquist-rate samples (`f_s = N/T`, zero offset).
pub fn nyquist_samples<R: Rng>(
    spec: &WidebandSignalSpec,
    powers: &[f64],
    include_noise: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_powers(spec, powers)?;
    let n = spec.nyquist_n();
    let rate = spec.nyquist_rate_hz();
    let sigma = if include_noise { spec.noise_power.sqrt() } else { 0.0 };
    Ok((0..n)
        .map(|i| {
            let mut v = eval_unchecked(spec, powers, i as f64 / rate);
            if sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                v += sigma * z;
            }
            v
        })
        .collect())
}

/// Ground-truth `|X|` over the `N` centered Nyquist bins.
pub fn nyquist_reference_spectrum<R: Rng>(
    spec: &WidebandSignalSpec,
    powers: &[f64],
    include_noise: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let x = nyquist_samples(spec, powers, include_noise, rng)?;
    Ok(dft::centered_dft(&x).iter().map(|c| c.norm()).collect())
}
