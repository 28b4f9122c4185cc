//! Per-mission rows recounted from persisted logs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use radarnav::sim::{read_log, LogRecord, PlannerMode};

use crate::experiment::{ExperimentKind, Manifest, ManifestEntry};

/// One line of `missions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionRow {
    pub id: String,
    pub experiment: ExperimentKind,
    pub label: String,
    pub seed: u64,
    pub mode: PlannerMode,
    pub n_l: usize,
    pub alpha_e: f64,
    pub alpha_u: f64,
    pub alpha_s: f64,
    pub epsilon: f64,
    pub found: bool,
    pub t_found: Option<f64>,
    pub attempts: usize,
    pub intercepts: usize,
    pub truth_max_pd: Option<f64>,
    pub layout_draws: usize,
}

/// Row for `entry` from its log records.
pub fn row_from_log(entry: &ManifestEntry, records: &[LogRecord]) -> Result<MissionRow> {
    let mut row = MissionRow {
        id: entry.id.clone(),
        experiment: entry.experiment,
        label: entry.label.clone(),
        seed: entry.seed,
        mode: entry.mode,
        n_l: entry.n_l,
        alpha_e: entry.weights.alpha_e,
        alpha_u: entry.weights.alpha_u,
        alpha_s: entry.weights.alpha_s,
        epsilon: entry.epsilon,
        found: false,
        t_found: None,
        attempts: 0,
        intercepts: 0,
        truth_max_pd: None,
        layout_draws: 0,
    };
    let mut ended = false;
    for r in records {
        match r {
            LogRecord::Start { layout_draws, .. } => row.layout_draws = *layout_draws,
            LogRecord::Tick { intercepts, .. } => row.intercepts += intercepts,
            LogRecord::HpAttempt { .. } => row.attempts += 1,
            LogRecord::End { found, t_found, truth_max_pd, .. } => {
                row.found = *found;
                row.t_found = *t_found;
                row.truth_max_pd = *truth_max_pd;
                ended = true;
            }
            _ => {}
        }
    }
    anyhow::ensure!(ended, "log of {} has no end record", entry.id);
    Ok(row)
}

/// Rows of every mission in the manifest that ran, read back from disk.
pub fn load_rows(dir: &Path, manifest: &Manifest) -> Result<Vec<MissionRow>> {
    manifest
        .entries
        .iter()
        .filter(|e| e.error.is_none())
        .map(|e| {
            let p = dir.join(&e.log);
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            row_from_log(e, &read_log(&text)?)
        })
        .collect()
}

/// Rows of every mission recorded in `dir`.
pub fn recount(dir: &Path) -> Result<Vec<MissionRow>> {
    load_rows(dir, &Manifest::load(dir)?)
}
