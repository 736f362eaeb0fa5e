//! Trial execution: fading draw → branch sampling → recovery → band energy.
//!
//! Trial `t`, branch `i` draws its fading gains, time offset and noise from the
//! streams `(seed, Fading|Offset|Noise, i, t)`. Hypotheses of the same trial
//! reuse those streams, so H0 and H1 differ only in the removed subband.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::detection::{calibrate_threshold, decide, roc_points, Hypothesis, RocPoint};
use crate::error::{MassError, Result};
use crate::recovery::{cosamp, estimate_sparsity, recovery_mse, RecoveredSpectrum, SparseRecoveryConfig};
use crate::rng::{stream, Purpose};
use crate::sampler::{branch_dft, stack_measurements, StackedSystem};
use crate::signal_model::{draw_fading, nyquist_reference_spectrum, sample_branch, BranchOffset, WidebandSignalSpec};

use super::scenario::ResolvedScenario;

/// Thread-count cap read from `MASS_THREADS`; defaults to all cores.
pub fn configured_threads() -> usize {
    std::env::var("MASS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f` inside a rayon pool sized by [`configured_threads`].
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(configured_threads())
        .build()
        .map_err(|e| MassError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Random draws shared by every hypothesis of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialDraws {
    pub offsets_s: Vec<f64>,
    /// Mean linear fading gain over branches and subbands.
    pub mean_gain: f64,
}

/// Branch samples of trial `trial` for the signal `spec` (H1 or a variant of it).
pub fn sample_trial(
    ctx: &ResolvedScenario,
    spec: &WidebandSignalSpec,
    trial: usize,
) -> Result<(Vec<Vec<f64>>, TrialDraws)> {
    let seed = ctx.seed();
    let t_obs = spec.observation_s;
    let max_off = ctx.scenario.offsets.max_fraction * t_obs;
    let mut samples = Vec::with_capacity(ctx.plan.branches());
    let mut offsets = Vec::with_capacity(ctx.plan.branches());
    let mut gain_sum = 0.0;
    let mut gain_count = 0usize;
    for (i, (&m, rate)) in ctx.plan.branch_lengths().iter().zip(ctx.plan.rates_hz()).enumerate() {
        let mut fading_rng = stream(seed, Purpose::Fading, i, trial);
        let powers = draw_fading(spec, &ctx.channel, &mut fading_rng);
        for (p, sb) in powers.iter().zip(&spec.subbands) {
            if sb.power > 0.0 {
                gain_sum += p / sb.power;
                gain_count += 1;
            }
        }
        let delta = if max_off > 0.0 {
            stream(seed, Purpose::Offset, i, trial).random_range(0.0..max_off)
        } else {
            0.0
        };
        offsets.push(delta);
        let offset = BranchOffset::new(delta, t_obs)?;
        let mut noise_rng = stream(seed, Purpose::Noise, i, trial);
        samples.push(sample_branch(spec, &powers, rate, offset, m, &mut noise_rng)?);
    }
    let mean_gain = if gain_count > 0 { gain_sum / gain_count as f64 } else { 1.0 };
    Ok((samples, TrialDraws { offsets_s: offsets, mean_gain }))
}

/// Stacked system of one trial.
pub fn measure_trial(ctx: &ResolvedScenario, spec: &WidebandSignalSpec, trial: usize) -> Result<(StackedSystem, TrialDraws)> {
    let (samples, draws) = sample_trial(ctx, spec, trial)?;
    let branches = samples.iter().map(|s| branch_dft(s)).collect::<Result<Vec<_>>>()?;
    Ok((stack_measurements(&ctx.plan, &branches)?, draws))
}

fn recovery_config(ctx: &ResolvedScenario, system: &StackedSystem) -> Result<SparseRecoveryConfig> {
    if ctx.auto_sparsity {
        let k = estimate_sparsity(system, ctx.recovery.sparsity, &ctx.recovery)?;
        Ok(SparseRecoveryConfig { sparsity: k, ..ctx.recovery })
    } else {
        Ok(ctx.recovery)
    }
}

/// Recovered spectrum of one trial.
pub fn recover_trial(ctx: &ResolvedScenario, spec: &WidebandSignalSpec, trial: usize) -> Result<(RecoveredSpectrum, TrialDraws)> {
    let (system, draws) = measure_trial(ctx, spec, trial)?;
    let config = recovery_config(ctx, &system)?;
    Ok((cosamp(&system, &config)?, draws))
}

/// Energy of subband `band` in a recovered magnitude, including the mirrored
/// side when configured.
pub fn target_energy(ctx: &ResolvedScenario, magnitude: &[f64], band: usize) -> Result<f64> {
    let t = ctx.signal.observation_s;
    let b = ctx.bands[band];
    let mut e = crate::detection::band_energy_of(magnitude, &b, t)?;
    if ctx.scenario.detection.mirror {
        e += crate::detection::band_energy_of(magnitude, &b.mirrored(), t)?;
    }
    Ok(e)
}

/// One trial of [`run_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub mean_gain: f64,
    pub max_offset_s: f64,
    pub mse: f64,
    /// Fraction of the reference's largest-`k` bins found in the recovered support.
    pub support_recall: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Band energies with all subbands present.
    pub energy_h1: Vec<f64>,
    /// Energy of band `l` with subband `l` removed.
    pub energy_h0: Vec<f64>,
    pub decision_h1: Vec<Hypothesis>,
    pub decision_h0: Vec<Hypothesis>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutput {
    pub scenario_id: String,
    pub thresholds: Vec<f64>,
    pub records: Vec<TrialRecord>,
}

fn largest_support(reference: &[f64], k: usize) -> Vec<usize> {
    let max = reference.iter().cloned().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..reference.len()).filter(|&i| reference[i] > 1e-9 * max && max > 0.0).collect();
    idx.sort_by(|&a, &b| reference[b].total_cmp(&reference[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn recall(found: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return if found.is_empty() { 1.0 } else { 0.0 };
    }
    let hits = truth.iter().filter(|t| found.binary_search(t).is_ok()).count();
    hits as f64 / truth.len() as f64
}

/// Noise-free, unfaded `|X|` used as ground truth for MSE and support scoring.
pub fn reference_spectrum(ctx: &ResolvedScenario) -> Result<Vec<f64>> {
    let mut rng = stream(ctx.seed(), Purpose::Reference, 0, 0);
    nyquist_reference_spectrum(&ctx.signal, &ctx.signal.powers(), false, &mut rng)
}

/// Runs every trial with all subbands present (H1) and, for each band, with
/// that band's subband removed (its H0). Thresholds are the configured fixed
/// value or are calibrated per band from the H0 energies at `target_pfa`.
pub fn run_pipeline(ctx: &ResolvedScenario) -> Result<PipelineOutput> {
    let reference = reference_spectrum(ctx)?;
    let truth = largest_support(&reference, ctx.recovery.sparsity);
    let nb = ctx.signal.subbands.len();
    let h0_specs: Vec<WidebandSignalSpec> = (0..nb).map(|l| ctx.signal.without_subband(l)).collect();

    let partial: Vec<Result<TrialRecord>> = with_pool(|| {
        (0..ctx.trials())
            .into_par_iter()
            .map(|trial| {
                let (rec, draws) = recover_trial(ctx, &ctx.signal, trial)?;
                let energy_h1 = (0..nb)
                    .map(|l| target_energy(ctx, &rec.magnitude, l))
                    .collect::<Result<Vec<_>>>()?;
                let energy_h0 = (0..nb)
                    .map(|l| {
                        let (r0, _) = recover_trial(ctx, &h0_specs[l], trial)?;
                        target_energy(ctx, &r0.magnitude, l)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TrialRecord {
                    trial,
                    mean_gain: draws.mean_gain,
                    max_offset_s: draws.offsets_s.iter().cloned().fold(0.0, f64::max),
                    mse: recovery_mse(&rec, &reference)?,
                    support_recall: recall(&rec.support, &truth),
                    residual_norm: rec.residual_norm,
                    iterations: rec.iterations,
                    energy_h1,
                    energy_h0,
                    decision_h1: Vec::new(),
                    decision_h0: Vec::new(),
                })
            })
            .collect()
    })?;
    let mut records = partial.into_iter().collect::<Result<Vec<_>>>()?;

    let det = &ctx.scenario.detection;
    let thresholds = (0..nb)
        .map(|l| match det.threshold {
            Some(t) => Ok(t),
            None => {
                let h0: Vec<f64> = records.iter().map(|r| r.energy_h0[l]).collect();
                calibrate_threshold(&h0, det.target_pfa).map(|t| t.value)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    for r in &mut records {
        r.decision_h1 = r.energy_h1.iter().zip(&thresholds).map(|(&e, &t)| decide(e, t).hypothesis).collect();
        r.decision_h0 = r.energy_h0.iter().zip(&thresholds).map(|(&e, &t)| decide(e, t).hypothesis).collect();
    }
    Ok(PipelineOutput { scenario_id: ctx.id().to_string(), thresholds, records })
}

/// Target-band energies under H1 and H0 for every trial, in trial order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySamples {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
}

pub fn target_energies(ctx: &ResolvedScenario) -> Result<EnergySamples> {
    if ctx.signal.subbands.is_empty() {
        return Err(MassError::Config("detection needs at least one subband".into()));
    }
    let band = ctx.scenario.detection.target_band;
    let h0_spec = ctx.signal.without_subband(band);
    let pairs: Vec<Result<(f64, f64)>> = with_pool(|| {
        (0..ctx.trials())
            .into_par_iter()
            .map(|trial| {
                let (r1, _) = recover_trial(ctx, &ctx.signal, trial)?;
                let (r0, _) = recover_trial(ctx, &h0_spec, trial)?;
                Ok((target_energy(ctx, &r0.magnitude, band)?, target_energy(ctx, &r1.magnitude, band)?))
            })
            .collect()
    })?;
    let mut out = EnergySamples { h0: Vec::with_capacity(pairs.len()), h1: Vec::with_capacity(pairs.len()) };
    for p in pairs {
        let (e0, e1) = p?;
        out.h0.push(e0);
        out.h1.push(e1);
    }
    Ok(out)
}

/// Where to put ROC operating points.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatingPoints {
    Thresholds(Vec<f64>),
    /// Thresholds calibrated on the same H0 energies at each target.
    TargetPfas(Vec<f64>),
}

/// ROC of the target band. All operating points share one set of trials.
pub fn roc_sweep(ctx: &ResolvedScenario, points: &OperatingPoints) -> Result<Vec<RocPoint>> {
    let energies = target_energies(ctx)?;
    roc_from_energies(&energies, points)
}

pub fn roc_from_energies(energies: &EnergySamples, points: &OperatingPoints) -> Result<Vec<RocPoint>> {
    let thresholds = match points {
        OperatingPoints::Thresholds(t) => t.clone(),
        OperatingPoints::TargetPfas(p) => p
            .iter()
            .map(|&pfa| calibrate_threshold(&energies.h0, pfa).map(|t| t.value))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(roc_points(&energies.h0, &energies.h1, &thresholds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_and_support_helpers() {
        assert_eq!(recall(&[], &[]), 1.0);
        assert_eq!(recall(&[1], &[]), 0.0);
        assert_eq!(recall(&[1, 4], &[1, 2]), 0.5);
        assert_eq!(largest_support(&[0.0, 3.0, 1.0, 3.0], 2), vec![1, 3]);
        assert_eq!(largest_support(&[0.0; 4], 2), Vec::<usize>::new());
    }
}
