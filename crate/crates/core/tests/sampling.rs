use mass_core::rng::{stream, Purpose};
use mass_core::sampler::{branch_dft, stack_measurements, SamplingPlan, StackedSystem};
use mass_core::signal_model::{
    nyquist_reference_spectrum, nyquist_samples, sample_branch, BranchOffset, SubbandSpec, Waveform,
    WidebandSignalSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tones(n: usize, bins: &[usize], powers: &[f64]) -> WidebandSignalSpec {
    let subbands = bins
        .iter()
        .zip(powers)
        .map(|(&b, &p)| SubbandSpec { carrier_hz: b as f64, bandwidth_hz: 1.0, power: p })
        .collect();
    WidebandSignalSpec::new(n as f64 / 2.0, 1.0, subbands, 0.0, 0)
        .unwrap()
        .with_waveform(Waveform::BinTone)
        .unwrap()
}

fn branch_magnitudes(spec: &WidebandSignalSpec, plan: &SamplingPlan, offsets: &[f64]) -> StackedSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let powers = spec.powers();
    let branches: Vec<_> = plan
        .branch_lengths()
        .iter()
        .zip(plan.rates_hz())
        .zip(offsets)
        .map(|((&m, rate), &d)| {
            let off = BranchOffset::new(d, spec.observation_s).unwrap();
            branch_dft(&sample_branch(spec, &powers, rate, off, m, &mut rng).unwrap()).unwrap()
        })
        .collect();
    stack_measurements(plan, &branches).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

#[test]
fn aliasing_identity_for_bin_tones() {
    let n = 210;
    let plan = SamplingPlan::new(n, 1.0, vec![17, 19, 23, 29, 31]).unwrap();
    let spec = tones(n, &[11, 40, 77], &[1.0, 2.5, 0.7]);
    let sys = branch_magnitudes(&spec, &plan, &[0.0; 5]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = nyquist_reference_spectrum(&spec, &spec.powers(), false, &mut rng).unwrap();
    let expected = sys.apply(&x).unwrap();
    assert!(rel_err(sys.y(), &expected) < 1e-9);
}

#[test]
fn tone_spectrum_has_two_bins_of_height_half_n() {
    let n = 64;
    let spec = tones(n, &[5], &[1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = nyquist_reference_spectrum(&spec, &[1.0], false, &mut rng).unwrap();
    let big: Vec<usize> = (0..n).filter(|&p| x[p] > 1e-9).collect();
    assert_eq!(big, vec![32 - 5, 32 + 5]);
    for p in big {
        assert!((x[p] - 32.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn time_shift_leaves_tone_magnitudes(bin in 1usize..104, shifts in proptest::collection::vec(0.0f64..0.99, 5)) {
        let n = 210;
        let primes = [17usize, 19, 23, 29, 31];
        prop_assume!(primes.iter().all(|&m| bin % m != 0));
        let plan = SamplingPlan::new(n, 1.0, primes.to_vec()).unwrap();
        let spec = tones(n, &[bin], &[1.0]);
        let still = branch_magnitudes(&spec, &plan, &[0.0; 5]);
        let moved = branch_magnitudes(&spec, &plan, &shifts);
        prop_assert!(rel_err(moved.y(), still.y()) < 1e-6);
    }

    #[test]
    fn parseval_holds(seed in any::<u64>(), bw in 1.0f64..6.0, carrier in 8.0f64..40.0) {
        let spec = WidebandSignalSpec::new(
            64.0,
            1.0,
            vec![SubbandSpec { carrier_hz: carrier, bandwidth_hz: bw, power: 3.0 }],
            0.5,
            seed,
        )
        .unwrap()
        .with_pulse_center(0.5);
        let mut rng = stream(seed, Purpose::Reference, 0, 0);
        let x = nyquist_samples(&spec, &[3.0], true, &mut rng).unwrap();
        let mut rng = stream(seed, Purpose::Reference, 0, 0);
        let mag = nyquist_reference_spectrum(&spec, &[3.0], true, &mut rng).unwrap();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = mag.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        prop_assert!((time - freq).abs() <= 1e-10 * time);
    }
}

#[test]
fn identical_streams_give_identical_samples() {
    let spec = WidebandSignalSpec::new(
        64.0,
        1.0,
        vec![SubbandSpec { carrier_hz: 20.0, bandwidth_hz: 4.0, power: 2.0 }],
        1.0,
        5,
    )
    .unwrap();
    let draw = || {
        let mut rng = stream(5, Purpose::Noise, 3, 17);
        sample_branch(&spec, &[2.0], 31.0, BranchOffset::new(0.1, 1.0).unwrap(), 31, &mut rng).unwrap()
    };
    let (a, b) = (draw(), draw());
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let mut other = stream(5, Purpose::Noise, 3, 18);
    let c = sample_branch(&spec, &[2.0], 31.0, BranchOffset::new(0.1, 1.0).unwrap(), 31, &mut other).unwrap();
    assert_ne!(a, c);
}
