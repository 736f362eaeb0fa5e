//! CSV writers for pipeline and ROC output.

use std::io::Write;

use serde::Serialize;

use crate::detection::{Hypothesis, RocPoint};
use crate::error::Result;

use super::pipeline::PipelineOutput;
use super::scenario::ResolvedScenario;

/// One line of the ROC CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocRow {
    pub scenario_id: String,
    pub channel: String,
    pub snr_db: f64,
    pub compression_ratio: f64,
    pub threshold: f64,
    pub pfa: f64,
    pub pd: f64,
    pub trials: usize,
}

pub fn roc_rows(ctx: &ResolvedScenario, points: &[RocPoint]) -> Vec<RocRow> {
    points
        .iter()
        .map(|p| RocRow {
            scenario_id: ctx.id().to_string(),
            channel: ctx.channel.label().to_string(),
            snr_db: ctx.snr_db(),
            compression_ratio: ctx.plan.sum_ratio(),
            threshold: p.threshold,
            pfa: p.pfa,
            pd: p.pd,
            trials: p.trials,
        })
        .collect()
}

pub fn write_roc_csv<W: Write>(rows: &[RocRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn label(h: Hypothesis) -> &'static str {
    match h {
        Hypothesis::H0 => "H0",
        Hypothesis::H1 => "H1",
    }
}

/// One row per trial; per-band columns are suffixed with the band index.
pub fn write_records_csv<W: Write>(output: &PipelineOutput, out: W) -> Result<()> {
    let nb = output.thresholds.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "scenario_id", "trial", "mean_gain", "max_offset_s", "mse", "support_recall", "residual_norm", "iterations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for l in 0..nb {
        header.extend([
            format!("threshold_{l}"),
            format!("energy_h1_{l}"),
            format!("decision_h1_{l}"),
            format!("energy_h0_{l}"),
            format!("decision_h0_{l}"),
        ]);
    }
    w.write_record(&header)?;
    for r in &output.records {
        let mut row = vec![
            output.scenario_id.clone(),
            r.trial.to_string(),
            r.mean_gain.to_string(),
            r.max_offset_s.to_string(),
            r.mse.to_string(),
            r.support_recall.to_string(),
            r.residual_norm.to_string(),
            r.iterations.to_string(),
        ];
        for l in 0..nb {
            row.extend([
                output.thresholds[l].to_string(),
                r.energy_h1[l].to_string(),
                label(r.decision_h1[l]).to_string(),
                r.energy_h0[l].to_string(),
                label(r.decision_h0[l]).to_string(),
            ]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-band occupancy summary: detection and false-alarm rates at the
/// pipeline thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSummary {
    pub band: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub threshold: f64,
    pub pd: f64,
    pub pfa: f64,
    pub trials: usize,
}

pub fn band_summaries(ctx: &ResolvedScenario, output: &PipelineOutput) -> Vec<BandSummary> {
    let n = output.records.len().max(1) as f64;
    ctx.bands
        .iter()
        .enumerate()
        .map(|(l, b)| BandSummary {
            band: l,
            low_hz: b.low_hz,
            high_hz: b.high_hz,
            threshold: output.thresholds[l],
            pd: output.records.iter().filter(|r| r.decision_h1[l] == Hypothesis::H1).count() as f64 / n,
            pfa: output.records.iter().filter(|r| r.decision_h0[l] == Hypothesis::H1).count() as f64 / n,
            trials: output.records.len(),
        })
        .collect()
}

pub fn write_serialized_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
