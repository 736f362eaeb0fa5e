//! Scenario-driven experiment runner.

pub mod pipeline;
pub mod report;
pub mod scenario;

pub use pipeline::{
    configured_threads, measure_trial, recover_trial, reference_spectrum, roc_from_energies, roc_sweep,
    run_pipeline, sample_trial, target_energies, with_pool, EnergySamples, OperatingPoints, PipelineOutput,
    TrialDraws, TrialRecord,
};
pub use report::{band_summaries, roc_rows, write_records_csv, write_roc_csv, BandSummary, RocRow};
pub use scenario::{
    DetectionConfig, OffsetConfig, PlanConfig, RecoveryConfig, ResolvedScenario, Scenario, SignalConfig,
    Sparsity, SparsityMode, SubbandLayout,
};
