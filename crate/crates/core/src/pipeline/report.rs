//! Run reports and multi-run aggregation.

use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::RunMode;
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::vicreg::LossBreakdown;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Mean training loss over the epoch's steps.
    pub loss: f64,
    /// Mean VICReg components (pretraining only).
    pub components: Option<LossBreakdown>,
    /// Validation metrics after the epoch (downstream only).
    pub validation: Option<Metrics>,
}

/// Wall-clock information, kept apart so reproducibility checks can drop it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
}

impl Timing {
    pub(crate) fn start() -> (Instant, f64) {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        (Instant::now(), unix)
    }

    pub(crate) fn finish(start: (Instant, f64)) -> Self {
        Timing { started_unix_s: start.1, wall_clock_s: start.0.elapsed().as_secs_f64() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub seed: u64,
    pub config_digest: String,
    pub total_steps: usize,
    pub epochs: Vec<EpochRecord>,
    /// Test-split metrics after the last epoch (downstream only).
    pub test: Option<Metrics>,
    pub timing: Timing,
}

impl RunReport {
    /// The report as JSON without the timing field.
    pub fn reproducible_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        v.as_object_mut().expect("object").remove("timing");
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation, `1/(k-1)` normalization.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: RunMode,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MeanStd>,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    MeanStd { mean, std: if values.len() > 1 { (ss / (k - 1.0)).sqrt() } else { 0.0 } }
}

/// Mean and sample standard deviation of each test metric across runs that
/// share a configuration and differ only in seed.
pub fn aggregate_runs(reports: &[RunReport]) -> Result<Aggregate> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument(format!("aggregation needs at least 2 reports, got {}", reports.len())));
    }
    let first = &reports[0];
    if let Some(r) = reports.iter().find(|r| r.config_digest != first.config_digest || r.mode != first.mode) {
        return Err(Error::InvalidArgument(format!(
            "report for seed {} has config digest {} but seed {} has {}",
            r.seed, r.config_digest, first.seed, first.config_digest
        )));
    }
    let tests = reports
        .iter()
        .map(|r| r.test.as_ref().ok_or_else(|| Error::InvalidArgument(format!("report for seed {} has no test metrics", r.seed))))
        .collect::<Result<Vec<_>>>()?;
    let fields: [(&str, fn(&Metrics) -> f64); 5] = [
        ("accuracy", |m| m.accuracy),
        ("top3_accuracy", |m| m.top3_accuracy),
        ("f1_macro", |m| m.f1_macro),
        ("precision_macro", |m| m.precision_macro),
        ("recall_macro", |m| m.recall_macro),
    ];
    let metrics = fields
        .iter()
        .map(|(name, get)| (name.to_string(), mean_std(&tests.iter().map(|m| get(m)).collect::<Vec<_>>())))
        .collect();
    Ok(Aggregate {
        mode: first.mode,
        config_digest: first.config_digest.clone(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        metrics,
    })
}
