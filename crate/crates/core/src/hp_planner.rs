//! High-priority planning pipelines.
//!
//! Both pipelines build a roadmap, drop unsafe edges, search it, fit a
//! B-spline to the route, stretch it to respect the speed limit and hand it
//! to the trajectory optimizer. The result is re-checked on a dense grid
//! before it may be dispatched. The uncertain pipeline also requires the
//! posterior probability of an undiscovered radar along the path to stay
//! at or below `P_s`.

use serde::{Deserialize, Serialize};

use crate::bspline::{fit_to_path, BSplineTrajectory};
use crate::config::{HpConfig, KinematicLimits, MissionSpec};
use crate::error::{Error, Result};
use crate::estimator::RadarEstimate;
use crate::geometry::{resample_polyline, Position2, Region};
use crate::lp_planner::{gamma_e, ExplorationModel};
use crate::pd_uncertainty::{KnownParamBelief, UnknownPrior};
use crate::radar::{DetectionParams, RadarTruth};
use crate::roadmap::trim::{trim, ChanceSafety, DeterministicSafety, SafetyCheck};
use crate::roadmap::{build_generalized_diagram, build_weighted_diagram, shortest_path, EdgeGeometry, EdgeKind, RoadmapGraph, WeightedSite};
use crate::trajopt::{dense_check, enforce_velocity_heuristic, solve, OptimizerConfig, SafetyModel, SolveReport, TrajectoryProblem};

/// Settings shared by both pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpSettings {
    pub region: Region,
    pub limits: KinematicLimits,
    pub hp: HpConfig,
    pub optimizer: OptimizerConfig,
}

impl HpSettings {
    pub fn new(region: Region, limits: KinematicLimits, hp: HpConfig) -> Self {
        let optimizer = OptimizerConfig { n_s: hp.n_s, ..OptimizerConfig::default() };
        Self { region, limits, hp, optimizer }
    }
}

/// Why a plan was not dispatched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    /// No admissible roadmap route between start and goal.
    Disconnected,
    /// The optimizer found no feasible trajectory.
    Infeasible,
    /// The optimized trajectory failed the dense re-check on every retry.
    DenseCheckFailed,
    /// An undiscovered radar is too likely somewhere along the path.
    ExplorationGate,
}

/// Per-stage figures of one planning attempt.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub roadmap_vertices: usize,
    pub roadmap_edges: usize,
    /// Edges removed by trimming.
    pub trimmed_edges: usize,
    /// Whether the direct start-goal segment was admissible and used.
    pub direct_route: bool,
    /// Length of the roadmap route, meters.
    pub route_length: Option<f64>,
    /// Dense-grid maximum PD (deterministic) or minimum chance (uncertain).
    pub worst_safety: Option<f64>,
    /// Dense-grid largest scaled constraint residual.
    pub max_violation: Option<f64>,
    /// Largest undiscovered-radar posterior along the path.
    pub p_max: Option<f64>,
    /// Constraint back-off of the accepted solve.
    pub margin: Option<f64>,
    pub solves: usize,
    pub solve: Option<SolveReport>,
    pub rejection: Option<Rejection>,
}

/// Outcome of a planning attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    /// Optimized trajectory, absent when no route was found.
    pub trajectory: Option<BSplineTrajectory>,
    /// Final time, zero without a trajectory.
    pub tf: f64,
    pub dispatchable: bool,
    pub diagnostics: PlanDiagnostics,
}

impl PlanResult {
    fn rejected(mut diagnostics: PlanDiagnostics, reason: Rejection, trajectory: Option<BSplineTrajectory>) -> Self {
        diagnostics.rejection = Some(reason);
        let tf = trajectory.as_ref().map_or(0.0, |t| t.duration());
        Self { trajectory, tf, dispatchable: false, diagnostics }
    }
}

/// Route from `start` to `goal`: the straight segment when it passes
/// `check`, otherwise the A* route on `trimmed`.
fn route(
    trimmed: &RoadmapGraph,
    mission: &MissionSpec,
    check: &dyn SafetyCheck,
    hp: &HpConfig,
    diag: &mut PlanDiagnostics,
) -> Result<Option<Vec<Position2>>> {
    let direct = EdgeGeometry::Segment { a: mission.start, b: mission.goal };
    if check.assess(&direct, EdgeKind::Link).0 {
        diag.direct_route = true;
        diag.route_length = Some(direct.length());
        return Ok(Some(vec![mission.start, mission.goal]));
    }
    match shortest_path(trimmed, mission.start, mission.goal, check, hp.attach_k) {
        Ok(path) => {
            diag.route_length = Some(path.cost);
            Ok(Some(path.polyline(hp.samples_per_edge)))
        }
        Err(Error::Disconnected) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Spline seed through `route`, retimed to the speed heuristic.
fn seed_trajectory(route: &[Position2], hp: &HpConfig, limits: &KinematicLimits) -> Result<BSplineTrajectory> {
    let length: f64 = route.windows(2).map(|w| w[0].distance(w[1])).sum();
    // Enough points for the least-squares fit even on short routes.
    let spacing = hp.dx.min(length / (2 * hp.n_c) as f64);
    let pts = resample_polyline(route, spacing);
    let fit = fit_to_path(&pts, hp.n_c, hp.degree)?;
    enforce_velocity_heuristic(&fit.trajectory, limits)
}

/// Optimizes `seed`, re-checks it at `10 · N_s` samples, and retries with a
/// doubled back-off while the check fails.
fn optimize_and_verify(
    seed: BSplineTrajectory,
    mission: &MissionSpec,
    settings: &HpSettings,
    safety: SafetyModel,
    diag: &mut PlanDiagnostics,
) -> Result<std::result::Result<BSplineTrajectory, (Rejection, Option<BSplineTrajectory>)>> {
    let problem = TrajectoryProblem::new(seed, settings.limits, settings.region, mission, safety);
    let mut config = settings.optimizer;
    let dense_n = 10 * config.n_s;
    let mut last = None;
    for _ in 0..=settings.hp.verify_retries {
        diag.solves += 1;
        let (traj, _, report) = match solve(&problem, &config) {
            Ok(r) => r,
            Err(Error::Infeasible(_)) => return Ok(Err((Rejection::Infeasible, last))),
            Err(e) => return Err(e),
        };
        let check = dense_check(&problem, &traj, dense_n, config.feasibility_tol)?;
        diag.worst_safety = check.worst_safety;
        diag.max_violation = Some(check.max_violation);
        diag.margin = Some(config.margin);
        diag.solve = Some(report);
        if check.feasible {
            return Ok(Ok(traj));
        }
        last = Some(traj);
        config.margin *= 2.0;
    }
    Ok(Err((Rejection::DenseCheckFailed, last)))
}

/// Plans with exactly known radars.
pub fn plan_deterministic(radars: &[RadarTruth], sigma: f64, mission: &MissionSpec, settings: &HpSettings) -> Result<PlanResult> {
    let detections: Vec<DetectionParams> = radars.iter().map(RadarTruth::detection).collect();
    let sites: Vec<WeightedSite> = detections.iter().map(|d| WeightedSite::from_detection(d, sigma)).collect();
    let graph = build_weighted_diagram(&sites, &settings.region)?;
    let check = DeterministicSafety { radars: &detections, sigma, p_dt: mission.p_dt, samples: settings.hp.samples_per_edge };
    let trimmed = trim(&graph, &check);
    let mut diag = PlanDiagnostics {
        roadmap_vertices: graph.vertices.len(),
        roadmap_edges: graph.edges.len(),
        trimmed_edges: graph.edges.len() - trimmed.edges.len(),
        ..PlanDiagnostics::default()
    };
    let Some(route) = route(&trimmed, mission, &check, &settings.hp, &mut diag)? else {
        return Ok(PlanResult::rejected(diag, Rejection::Disconnected, None));
    };
    let seed = seed_trajectory(&route, &settings.hp, &settings.limits)?;
    let safety = SafetyModel::Deterministic { radars: detections.clone(), sigma };
    Ok(match optimize_and_verify(seed, mission, settings, safety, &mut diag)? {
        Ok(traj) => PlanResult { tf: traj.duration(), trajectory: Some(traj), dispatchable: true, diagnostics: diag },
        Err((reason, traj)) => PlanResult::rejected(diag, reason, traj),
    })
}

/// Largest undiscovered-radar posterior over `n + 1` uniform time samples.
pub fn exploration_risk(traj: &BSplineTrajectory, n: usize, history: &[Position2], model: &ExplorationModel) -> f64 {
    traj.sample_polyline(n).into_iter().map(|p| gamma_e(p, history, model)).fold(0.0, f64::max)
}

/// Inputs of the uncertain pipeline that describe the current belief.
#[derive(Debug, Clone, Copy)]
pub struct UncertainInputs<'a> {
    pub estimates: &'a [RadarEstimate],
    pub prior: &'a UnknownPrior,
    pub known: &'a KnownParamBelief,
    pub history: &'a [Position2],
    pub exploration: &'a ExplorationModel,
}

/// Plans against estimated radars under the chance constraint, then applies
/// the exploration gate.
pub fn plan_uncertain(inputs: UncertainInputs, mission: &MissionSpec, settings: &HpSettings) -> Result<PlanResult> {
    let UncertainInputs { estimates, prior, known, history, exploration } = inputs;
    let graph = build_generalized_diagram(&settings.region, settings.hp.grid_n, known, prior, estimates, mission.p_dt)?;
    let check = ChanceSafety {
        known: *known,
        prior,
        estimates,
        p_dt: mission.p_dt,
        epsilon: mission.epsilon,
        samples: settings.hp.samples_per_edge,
    };
    let trimmed = trim(&graph, &check);
    let mut diag = PlanDiagnostics {
        roadmap_vertices: graph.vertices.len(),
        roadmap_edges: graph.edges.len(),
        trimmed_edges: graph.edges.len() - trimmed.edges.len(),
        ..PlanDiagnostics::default()
    };
    let Some(route) = route(&trimmed, mission, &check, &settings.hp, &mut diag)? else {
        return Ok(PlanResult::rejected(diag, Rejection::Disconnected, None));
    };
    let seed = seed_trajectory(&route, &settings.hp, &settings.limits)?;
    let safety = SafetyModel::Uncertain { estimates: estimates.to_vec(), prior: *prior, known: *known };
    let traj = match optimize_and_verify(seed, mission, settings, safety, &mut diag)? {
        Ok(traj) => traj,
        Err((reason, traj)) => return Ok(PlanResult::rejected(diag, reason, traj)),
    };
    let p_max = exploration_risk(&traj, settings.optimizer.n_s, history, exploration);
    diag.p_max = Some(p_max);
    if p_max > mission.p_s {
        return Ok(PlanResult::rejected(diag, Rejection::ExplorationGate, Some(traj)));
    }
    Ok(PlanResult { tf: traj.duration(), trajectory: Some(traj), dispatchable: true, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MissionConfig, ScenarioConfig};

    fn settings() -> HpSettings {
        let cfg = ScenarioConfig::default();
        HpSettings::new(cfg.region, KinematicLimits::default(), HpConfig::default())
    }

    #[test]
    fn empty_field_flies_straight() {
        let s = settings();
        let mission = MissionSpec::new(&s.region, MissionConfig::default()).unwrap();
        let plan = plan_deterministic(&[], 0.1, &mission, &s).unwrap();
        assert!(plan.dispatchable, "{:?}", plan.diagnostics);
        assert!(plan.diagnostics.direct_route);
        let bound = s.region.diagonal() / s.limits.v_ub;
        assert!(plan.tf >= bound * (1.0 - 1e-9) && plan.tf <= bound * 1.02, "tf {} vs {}", plan.tf, bound);
    }
}
