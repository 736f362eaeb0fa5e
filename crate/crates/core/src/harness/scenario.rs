//! JSON scenario files and their resolution into concrete pipeline inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::BandSpec;
use crate::error::{MassError, Result};
use crate::recovery::SparseRecoveryConfig;
use crate::rng::{stream, Purpose};
use crate::sampler::{select_primes, SamplingPlan};
use crate::signal_model::{
    draw_layout, draw_tone_layout, ChannelModel, SubbandSpec, Waveform, WidebandSignalSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub signal: SignalConfig,
    pub plan: PlanConfig,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub offsets: OffsetConfig,
    pub recovery: RecoveryConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "OutputConfig::is_empty")]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub bandwidth_hz: f64,
    pub observation_s: f64,
    #[serde(default = "unit")]
    pub noise_power: f64,
    #[serde(default)]
    pub waveform: Waveform,
    /// Pulse centre as a fraction of the observation window.
    #[serde(default)]
    pub pulse_center_fraction: f64,
    pub subbands: SubbandLayout,
    /// When set, every subband gets the power giving this average SNR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubbandLayout {
    Explicit(Vec<SubbandSpec>),
    /// Drawn once per scenario from the `Layout` stream of the seed.
    Random {
        count: usize,
        #[serde(default)]
        min_bandwidth_hz: f64,
        #[serde(default)]
        max_bandwidth_hz: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanConfig {
    Primes { primes: Vec<usize> },
    Select { branches: usize, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetConfig {
    /// Branch offsets are uniform in `[0, max_fraction·T)`; zero means synchronous.
    #[serde(default)]
    pub max_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityMode {
    /// Number of Nyquist bins covered by the subbands.
    Occupied,
    /// Residual-elbow estimate (heuristic).
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sparsity {
    Fixed(usize),
    Mode(SparsityMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub sparsity: Sparsity,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub residual_tolerance: f64,
}

fn default_iterations() -> usize {
    50
}

fn default_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(default)]
    pub target_band: usize,
    #[serde(default = "default_pfa")]
    pub target_pfa: f64,
    /// Fixed threshold; calibrated from H0 energies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Add the mirrored negative-frequency band to each band's energy.
    #[serde(default = "yes")]
    pub mirror: bool,
    #[serde(default = "default_roc_pfas")]
    pub roc_pfas: Vec<f64>,
}

fn default_pfa() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

fn default_roc_pfas() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9]
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            target_band: 0,
            target_pfa: default_pfa(),
            threshold: None,
            mirror: true,
            roc_pfas: default_roc_pfas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

impl OutputConfig {
    fn is_empty(&self) -> bool {
        self.dir.is_none()
    }
}

/// A scenario with its random layout drawn, powers set and plan built.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub signal: WidebandSignalSpec,
    pub plan: SamplingPlan,
    pub channel: ChannelModel,
    pub recovery: SparseRecoveryConfig,
    pub auto_sparsity: bool,
    /// Detection band of each subband (positive-frequency side).
    pub bands: Vec<BandSpec>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            MassError::Config(format!("cannot read scenario {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Validates every section and builds the concrete inputs. Fails before
    /// any trial runs.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        let sig = &self.signal;
        let base = WidebandSignalSpec::new(sig.bandwidth_hz, sig.observation_s, vec![], sig.noise_power, self.seed)?
            .with_waveform(sig.waveform)?
            .with_pulse_center(sig.pulse_center_fraction * sig.observation_s);
        let n = base.nyquist_n();

        let subbands = match &sig.subbands {
            SubbandLayout::Explicit(list) => list.clone(),
            SubbandLayout::Random { count, min_bandwidth_hz, max_bandwidth_hz } => {
                let mut rng = stream(self.seed, Purpose::Layout, 0, 0);
                match sig.waveform {
                    Waveform::Sinc => {
                        draw_layout(*count, *min_bandwidth_hz, *max_bandwidth_hz, sig.bandwidth_hz, &mut rng)?
                    }
                    Waveform::BinTone => draw_tone_layout(*count, sig.observation_s, n, &mut rng)?,
                }
            }
        };
        let mut signal = base.with_subbands(subbands)?;
        if let Some(snr_db) = sig.snr_db {
            signal = signal.at_snr_db(snr_db);
        }

        let plan = match &self.plan {
            PlanConfig::Primes { primes } => SamplingPlan::new(n, sig.observation_s, primes.clone())?,
            PlanConfig::Select { branches, scale } => {
                select_primes(n, *branches, *scale)?.with_observation(sig.observation_s)
            }
        };

        self.channel.validate()?;
        let off = self.offsets.max_fraction;
        if !(0.0..1.0).contains(&off) {
            return Err(MassError::Config(format!("offsets.max_fraction must lie in [0, 1), got {off}")));
        }

        let (k, auto) = match self.recovery.sparsity {
            Sparsity::Fixed(k) => (k, false),
            Sparsity::Mode(SparsityMode::Occupied) => (signal.occupied_bins().len().max(1), false),
            Sparsity::Mode(SparsityMode::Auto) => (plan.total_samples() / 2, true),
        };
        let recovery = SparseRecoveryConfig {
            sparsity: k,
            max_iterations: self.recovery.max_iterations,
            residual_tolerance: self.recovery.residual_tolerance,
        };
        recovery.validate()?;
        if k > plan.total_samples() {
            return Err(MassError::Config(format!(
                "sparsity {k} exceeds the {} measurements of the plan",
                plan.total_samples()
            )));
        }

        let det = &self.detection;
        if !signal.subbands.is_empty() && det.target_band >= signal.subbands.len() {
            return Err(MassError::Config(format!(
                "target_band {} but only {} subbands",
                det.target_band,
                signal.subbands.len()
            )));
        }
        if !(det.target_pfa > 0.0 && det.target_pfa < 1.0) {
            return Err(MassError::Config("detection.target_pfa must lie in (0, 1)".into()));
        }
        if det.roc_pfas.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(MassError::Config("detection.roc_pfas must lie in (0, 1)".into()));
        }
        let bands = signal
            .subbands
            .iter()
            .map(|sb| BandSpec::new(sb.low_hz(), sb.high_hz()))
            .collect::<Result<Vec<_>>>()?;
        for b in &bands {
            b.positions(n, sig.observation_s)?;
        }
        if self.trials == 0 {
            return Err(MassError::Config("trials must be >= 1".into()));
        }

        Ok(ResolvedScenario {
            scenario: self.clone(),
            signal,
            plan,
            channel: self.channel,
            recovery,
            auto_sparsity: auto,
            bands,
        })
    }
}

impl ResolvedScenario {
    pub fn id(&self) -> &str {
        &self.scenario.id
    }

    pub fn seed(&self) -> u64 {
        self.scenario.seed
    }

    pub fn trials(&self) -> usize {
        self.scenario.trials
    }

    pub fn snr_db(&self) -> f64 {
        self.scenario
            .signal
            .snr_db
            .unwrap_or_else(|| 10.0 * self.signal.average_snr().log10())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.scenario.trials = trials;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "id": "demo",
        "signal": {
            "bandwidth_hz": 2.048e9,
            "observation_s": 2e-6,
            "pulse_center_fraction": 0.5,
            "subbands": {"random": {"count": 3, "min_bandwidth_hz": 0.5e6, "max_bandwidth_hz": 5e6}},
            "snr_db": 5.0
        },
        "plan": {"branches": 22, "scale": 1.5},
        "channel": {"kind": "log_normal_shadow", "shadow_sigma_db": 5.0},
        "offsets": {"max_fraction": 0.4},
        "recovery": {"sparsity": "occupied"},
        "trials": 10,
        "seed": 42
    }"#;

    #[test]
    fn parses_and_resolves() {
        let s = Scenario::from_json(EXAMPLE).unwrap();
        let r = s.resolve().unwrap();
        assert_eq!(r.signal.nyquist_n(), 8192);
        assert_eq!(r.plan.branches(), 22);
        assert_eq!(r.plan.branch_lengths()[0], 137);
        assert_eq!(r.bands.len(), 3);
        assert!((r.snr_db() - 5.0).abs() < 1e-12);
        assert!((10.0 * r.signal.average_snr().log10() - 5.0).abs() < 1e-9);
        assert_eq!(r.recovery.sparsity, r.signal.occupied_bins().len());
    }

    #[test]
    fn round_trip() {
        let s = Scenario::from_json(EXAMPLE).unwrap();
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
        let explicit = Scenario {
            plan: PlanConfig::Primes { primes: vec![137, 139] },
            recovery: RecoveryConfig { sparsity: Sparsity::Fixed(4), ..s.recovery },
            ..s
        };
        let back = Scenario::from_json(&explicit.to_json().unwrap()).unwrap();
        assert_eq!(explicit, back);
    }

    #[test]
    fn validation_failures() {
        let mut s = Scenario::from_json(EXAMPLE).unwrap();
        s.plan = PlanConfig::Primes { primes: vec![3, 5] };
        assert!(matches!(s.resolve(), Err(MassError::Plan(_))));

        let mut s = Scenario::from_json(EXAMPLE).unwrap();
        s.channel.shadow_sigma_db = 0.0;
        assert!(s.resolve().unwrap_err().is_validation());

        let mut s = Scenario::from_json(EXAMPLE).unwrap();
        s.detection.target_band = 9;
        assert!(s.resolve().is_err());

        assert!(Scenario::from_json(r#"{"id": "x"}"#).is_err());
        let unknown = EXAMPLE.replace("\"seed\": 42", "\"seed\": 42, \"bogus\": 1");
        assert!(Scenario::from_json(&unknown).is_err());
    }
}
