//! Mission batches: the weight sweep, the lawnmower comparison, the
//! scout-count sweep, chance-constraint calibration and single runs.
//!
//! Every mission writes its log under `<out>/logs/` and an entry in
//! `<out>/manifest.json`; all tables are computed from those files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use radarnav::config::{Config, PlannerWeights};
use radarnav::sim::{run_mission, write_log, MissionOutcome, MissionSetup, PlannerMode};

use crate::records::{load_rows, MissionRow};

/// Which batch an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Ternary,
    Baseline,
    AgentSweep,
    Calibration,
    Single,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ternary => "ternary",
            Self::Baseline => "baseline",
            Self::AgentSweep => "agent_sweep",
            Self::Calibration => "calibration",
            Self::Single => "single",
        }
    }
}

/// Batch description shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Base configuration; seeds, weights, mode and scout count are
    /// overridden per mission.
    pub config: Config,
    /// Scenario seeds, one mission per seed and variant.
    pub seeds: Vec<u64>,
    /// Weight triples for the sweep.
    pub weights: Vec<PlannerWeights>,
    /// Scout counts for the agent sweep.
    pub agent_counts: Vec<usize>,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    /// `count` consecutive seeds starting at `first`.
    pub fn new(kind: ExperimentKind, config: Config, first: u64, count: usize, out_dir: impl Into<PathBuf>) -> Result<Self> {
        anyhow::ensure!(count >= 1, "scenario count must be at least 1");
        Ok(Self {
            kind,
            weights: vec![config.weights],
            agent_counts: vec![config.scenario.n_l],
            config,
            seeds: (first..first + count as u64).collect(),
            out_dir: out_dir.into(),
        })
    }
}

/// One mission to run: everything needed to rerun it by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub experiment: ExperimentKind,
    /// Variant within the experiment, for example a weight triple.
    pub label: String,
    pub seed: u64,
    pub mode: PlannerMode,
    pub n_l: usize,
    pub weights: PlannerWeights,
    pub epsilon: f64,
    /// Log path relative to the output directory.
    pub log: String,
    /// Error message when the mission could not run.
    pub error: Option<String>,
}

/// Missions of a batch and any errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Config,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = Self::path(dir);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Appends to an existing manifest in `dir`, or starts one.
    fn merge_into(dir: &Path, config: &Config, entries: &[ManifestEntry]) -> Result<Self> {
        let mut m = Self::load(dir).unwrap_or(Self { config: config.clone(), entries: Vec::new() });
        m.entries.retain(|e| !entries.iter().any(|n| n.id == e.id));
        m.entries.extend_from_slice(entries);
        fs::write(Self::path(dir), serde_json::to_string_pretty(&m)?)?;
        Ok(m)
    }

    pub fn errors(&self) -> usize {
        self.entries.iter().filter(|e| e.error.is_some()).count()
    }

    /// Configuration that reproduces `entry`.
    pub fn config_for(&self, entry: &ManifestEntry) -> Config {
        mission_config(&self.config, entry.seed, entry.weights, entry.n_l, entry.epsilon)
    }
}

fn mission_config(base: &Config, seed: u64, weights: PlannerWeights, n_l: usize, epsilon: f64) -> Config {
    let mut cfg = base.clone();
    cfg.scenario.seed = seed;
    cfg.weights = weights;
    cfg.scenario.n_l = n_l;
    cfg.mission.epsilon = epsilon;
    cfg
}

fn mode_name(mode: PlannerMode) -> &'static str {
    match mode {
        PlannerMode::Ours => "ours",
        PlannerMode::Lawnmower => "lawnmower",
    }
}

/// Label of a weight triple, stable across runs.
pub fn weight_label(w: &PlannerWeights) -> String {
    format!("w{:.3}-{:.3}-{:.3}", w.alpha_e, w.alpha_u, w.alpha_s)
}

/// A mission about to run.
#[derive(Debug, Clone)]
struct Job {
    entry: ManifestEntry,
    config: Config,
}

fn job(kind: ExperimentKind, base: &Config, label: String, seed: u64, mode: PlannerMode, weights: PlannerWeights, n_l: usize) -> Job {
    let epsilon = base.mission.epsilon;
    let id = format!("{}-{}-{}-s{}", kind.name(), label, mode_name(mode), seed);
    let log = format!("logs/{id}.jsonl");
    Job {
        config: mission_config(base, seed, weights, n_l, epsilon),
        entry: ManifestEntry { id, experiment: kind, label, seed, mode, n_l, weights, epsilon, log, error: None },
    }
}

/// Runs one mission and writes its log to `dir`.
pub fn run_and_log(dir: &Path, entry: &ManifestEntry, config: Config) -> Result<MissionOutcome> {
    let outcome = run_mission(MissionSetup::new(config, entry.mode))?;
    let path = dir.join(&entry.log);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    write_log(&outcome.logs, &mut buf)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(outcome)
}

/// Runs every job in parallel; results keep job order. Errors are recorded
/// in the manifest instead of aborting the batch.
fn run_jobs(dir: &Path, base: &Config, jobs: Vec<Job>) -> Result<Manifest> {
    fs::create_dir_all(dir.join("logs"))?;
    let entries: Vec<ManifestEntry> = jobs
        .into_par_iter()
        .map(|j| {
            let mut entry = j.entry;
            if let Err(e) = run_and_log(dir, &entry, j.config) {
                log::error!("mission {} failed: {e:#}", entry.id);
                entry.error = Some(format!("{e:#}"));
            }
            entry
        })
        .collect();
    Manifest::merge_into(dir, base, &entries)
}

/// Summary of one weight triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TernaryRow {
    pub alpha_e: f64,
    pub alpha_u: f64,
    pub alpha_s: f64,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean time to path over successful runs, seconds.
    pub mean_t_found: Option<f64>,
}

/// Paired outcome of both scout strategies on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub seed: u64,
    pub ours_found: bool,
    pub ours_t_found: Option<f64>,
    pub lawnmower_found: bool,
    pub lawnmower_t_found: Option<f64>,
}

/// Time-to-path statistics for one scout count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRow {
    pub n_l: usize,
    pub runs: usize,
    pub successes: usize,
    pub mean_t_found: Option<f64>,
    pub std_t_found: Option<f64>,
}

/// Ground-truth safety of dispatched trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub epsilon: f64,
    pub p_dt: f64,
    pub runs: usize,
    pub dispatched: usize,
    /// Dispatched runs whose dense-sampled ground-truth maximum PD stays at
    /// or below the threshold.
    pub within_threshold: usize,
    pub fraction_within: Option<f64>,
    pub mean_max_pd: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample standard deviation; `None` below two values.
fn std_dev(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    (v.len() >= 2).then(|| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Median of the values; `None` when empty.
pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

fn times(rows: &[&MissionRow]) -> Vec<f64> {
    rows.iter().filter_map(|r| r.t_found).collect()
}

/// Per-triple success rate and mean time, from mission rows.
pub fn summarize_ternary(rows: &[MissionRow]) -> Vec<TernaryRow> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| r.experiment == ExperimentKind::Ternary) {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&MissionRow> = rows.iter().filter(|r| r.experiment == ExperimentKind::Ternary && r.label == label).collect();
            let successes = group.iter().filter(|r| r.found).count();
            TernaryRow {
                alpha_e: group[0].alpha_e,
                alpha_u: group[0].alpha_u,
                alpha_s: group[0].alpha_s,
                runs: group.len(),
                successes,
                success_rate: successes as f64 / group.len() as f64,
                mean_t_found: mean(&times(&group)),
            }
        })
        .collect()
}

/// Pairs both strategies by seed.
pub fn summarize_baseline(rows: &[MissionRow]) -> Vec<BaselineRow> {
    let of = |mode: PlannerMode, seed: u64| {
        rows.iter().find(|r| r.experiment == ExperimentKind::Baseline && r.mode == mode && r.seed == seed)
    };
    let mut seeds: Vec<u64> = rows.iter().filter(|r| r.experiment == ExperimentKind::Baseline).map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .into_iter()
        .filter_map(|seed| {
            let (o, l) = (of(PlannerMode::Ours, seed)?, of(PlannerMode::Lawnmower, seed)?);
            Some(BaselineRow {
                seed,
                ours_found: o.found,
                ours_t_found: o.t_found,
                lawnmower_found: l.found,
                lawnmower_t_found: l.t_found,
            })
        })
        .collect()
}

/// Time-to-path mean and spread per scout count.
pub fn summarize_agents(rows: &[MissionRow]) -> Vec<AgentRow> {
    let mut counts: Vec<usize> = rows.iter().filter(|r| r.experiment == ExperimentKind::AgentSweep).map(|r| r.n_l).collect();
    counts.sort_unstable();
    counts.dedup();
    counts
        .into_iter()
        .map(|n_l| {
            let group: Vec<&MissionRow> = rows.iter().filter(|r| r.experiment == ExperimentKind::AgentSweep && r.n_l == n_l).collect();
            let t = times(&group);
            AgentRow { n_l, runs: group.len(), successes: t.len(), mean_t_found: mean(&t), std_t_found: std_dev(&t) }
        })
        .collect()
}

/// Safety of dispatched trajectories against the threshold `p_dt`.
pub fn summarize_calibration(rows: &[MissionRow], p_dt: f64) -> CalibrationReport {
    let group: Vec<&MissionRow> = rows.iter().filter(|r| r.experiment == ExperimentKind::Calibration).collect();
    let pds: Vec<f64> = group.iter().filter(|r| r.found).filter_map(|r| r.truth_max_pd).collect();
    let within = pds.iter().filter(|&&p| p <= p_dt).count();
    CalibrationReport {
        epsilon: group.first().map_or(f64::NAN, |r| r.epsilon),
        p_dt,
        runs: group.len(),
        dispatched: pds.len(),
        within_threshold: within,
        fraction_within: (!pds.is_empty()).then(|| within as f64 / pds.len() as f64),
        mean_max_pd: mean(&pds),
    }
}

/// Simplex grid with `divisions` steps per side, plus the best-performing
/// triple when it is not on the grid.
pub fn simplex_grid(divisions: usize) -> Vec<PlannerWeights> {
    let d = divisions.max(1);
    let mut out = Vec::new();
    for i in 0..=d {
        for j in 0..=d - i {
            let k = d - i - j;
            out.push(PlannerWeights { alpha_e: i as f64 / d as f64, alpha_u: j as f64 / d as f64, alpha_s: k as f64 / d as f64 });
        }
    }
    let best = PlannerWeights::BEST;
    if !out.iter().any(|w| weight_label(w) == weight_label(&best)) {
        out.push(best);
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Result of a batch: the manifest and the per-mission rows recounted from
/// the logs on disk.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub manifest: Manifest,
    pub rows: Vec<MissionRow>,
}

impl BatchResult {
    pub fn errors(&self) -> usize {
        self.manifest.errors()
    }
}

fn finish(dir: &Path, manifest: Manifest) -> Result<BatchResult> {
    let rows = load_rows(dir, &manifest)?;
    write_csv(&dir.join("missions.csv"), &rows)?;
    Ok(BatchResult { manifest, rows })
}

/// Weight sweep: every triple on every seed with the objective-driven
/// scouts. Writes `ternary.csv`.
pub fn run_ternary(spec: &ExperimentSpec) -> Result<(BatchResult, Vec<TernaryRow>)> {
    let jobs = spec
        .weights
        .iter()
        .flat_map(|w| {
            spec.seeds.iter().map(move |&s| {
                job(ExperimentKind::Ternary, &spec.config, weight_label(w), s, PlannerMode::Ours, *w, spec.config.scenario.n_l)
            })
        })
        .collect();
    let batch = finish(&spec.out_dir, run_jobs(&spec.out_dir, &spec.config, jobs)?)?;
    let table = summarize_ternary(&batch.rows);
    write_csv(&spec.out_dir.join("ternary.csv"), &table)?;
    Ok((batch, table))
}

/// Both strategies on the same seeds. Writes `baseline.csv`.
pub fn run_baseline(spec: &ExperimentSpec) -> Result<(BatchResult, Vec<BaselineRow>)> {
    let c = &spec.config;
    let jobs = spec
        .seeds
        .iter()
        .flat_map(|&s| {
            [PlannerMode::Ours, PlannerMode::Lawnmower]
                .map(|m| job(ExperimentKind::Baseline, c, weight_label(&c.weights), s, m, c.weights, c.scenario.n_l))
        })
        .collect();
    let batch = finish(&spec.out_dir, run_jobs(&spec.out_dir, c, jobs)?)?;
    let table = summarize_baseline(&batch.rows);
    write_csv(&spec.out_dir.join("baseline.csv"), &table)?;
    Ok((batch, table))
}

/// Every scout count on every seed. Writes `agents.csv`.
pub fn run_agent_sweep(spec: &ExperimentSpec) -> Result<(BatchResult, Vec<AgentRow>)> {
    let c = &spec.config;
    let jobs = spec
        .agent_counts
        .iter()
        .flat_map(|&n| {
            spec.seeds
                .iter()
                .map(move |&s| job(ExperimentKind::AgentSweep, c, format!("n{n}"), s, PlannerMode::Ours, c.weights, n))
        })
        .collect();
    let batch = finish(&spec.out_dir, run_jobs(&spec.out_dir, c, jobs)?)?;
    let table = summarize_agents(&batch.rows);
    write_csv(&spec.out_dir.join("agents.csv"), &table)?;
    Ok((batch, table))
}

/// Objective-driven missions with the configured chance level. Writes
/// `calibration.csv`.
pub fn run_calibration(spec: &ExperimentSpec) -> Result<(BatchResult, CalibrationReport)> {
    let c = &spec.config;
    let jobs = spec
        .seeds
        .iter()
        .map(|&s| job(ExperimentKind::Calibration, c, format!("eps{}", c.mission.epsilon), s, PlannerMode::Ours, c.weights, c.scenario.n_l))
        .collect();
    let batch = finish(&spec.out_dir, run_jobs(&spec.out_dir, c, jobs)?)?;
    let report = summarize_calibration(&batch.rows, c.mission.p_dt);
    write_csv(&spec.out_dir.join("calibration.csv"), std::slice::from_ref(&report))?;
    Ok((batch, report))
}

/// One mission per seed with the given strategy.
pub fn run_single(spec: &ExperimentSpec, mode: PlannerMode) -> Result<BatchResult> {
    let c = &spec.config;
    let jobs = spec
        .seeds
        .iter()
        .map(|&s| job(ExperimentKind::Single, c, weight_label(&c.weights), s, mode, c.weights, c.scenario.n_l))
        .collect();
    finish(&spec.out_dir, run_jobs(&spec.out_dir, c, jobs)?)
}

/// Reruns a manifest entry and checks that its log is reproduced exactly.
pub fn rerun_matches(dir: &Path, id: &str) -> Result<bool> {
    let manifest = Manifest::load(dir)?;
    let entry = manifest.entries.iter().find(|e| e.id == id).with_context(|| format!("no mission {id}"))?;
    let outcome = run_mission(MissionSetup::new(manifest.config_for(entry), entry.mode))?;
    let mut buf = Vec::new();
    write_log(&outcome.logs, &mut buf)?;
    Ok(fs::read(dir.join(&entry.log))? == buf)
}
