//! High-priority planning pipelines with known and estimated radars.

use nalgebra::{Matrix3, Vector3};
use radarnav::config::*;
use radarnav::estimator::RadarEstimate;
use radarnav::geometry::Position2;
use radarnav::hp_planner::*;
use radarnav::lp_planner::ExplorationModel;
use radarnav::pd_uncertainty::*;
use radarnav::radar::*;
use radarnav::sim::mission_layout;

fn settings(cfg: &Config) -> HpSettings {
    HpSettings::new(cfg.scenario.region, cfg.limits, cfg.hp)
}

fn radar(x: f64, y: f64, p_t: f64) -> RadarTruth {
    let r = RadarRanges::default();
    RadarTruth {
        position: Position2::new(x, y),
        p_t,
        g_t: 10.0,
        g_r: db_to_linear(r.g_r_db),
        lambda: r.lambda,
        tau_p: r.tau_p,
        t_s: r.t_s,
        loss: db_to_linear(r.l_db),
        p_fa: r.p_fa,
    }
}

fn truth_pd(p: Position2, radars: &[RadarTruth], sigma: f64) -> f64 {
    pd_overall(&KnownAgentParams { sigma, position: p, g_i: 1.0 }, radars).unwrap_or(1.0)
}

/// Re-samples a plan at ten times the optimizer density and checks safety
/// and the kinematic envelope.
fn assert_dense_feasible(plan: &PlanResult, radars: &[RadarTruth], cfg: &Config) {
    let traj = plan.trajectory.as_ref().unwrap();
    let l = cfg.limits;
    let tol = 1e-6;
    for t in traj.sample_times(10 * cfg.hp.n_s) {
        let p = traj.eval(t, 0).unwrap();
        let pd = truth_pd(p, radars, cfg.scenario.sigma);
        assert!(pd <= cfg.mission.p_dt + tol, "PD {pd} at t={t}");
        let f = traj.flat_outputs(t).unwrap();
        assert!(f.v >= l.v_lb - tol && f.v <= l.v_ub + tol, "v {} at t={t}", f.v);
        assert!(f.kappa.abs() <= l.kappa_ub + tol, "kappa {} at t={t}", f.kappa);
        assert!(f.u >= l.u_lb - tol && f.u <= l.u_ub + tol, "u {} at t={t}", f.u);
    }
    assert!(traj.eval(traj.t0, 0).unwrap().distance(cfg.mission.start) < 1e-6);
    assert!(traj.eval(traj.tf, 0).unwrap().distance(cfg.mission.goal) < 1e-6);
}

/// Transmit power at which a pair of radars gives exactly `target` PD at
/// the region center.
fn power_for_center_pd(a: Position2, b: Position2, center: Position2, target: f64) -> f64 {
    let (mut lo, mut hi) = (1.0, 1e9);
    for _ in 0..200 {
        let mid = (lo * hi as f64).sqrt();
        if truth_pd(center, &[radar(a.x, a.y, mid), radar(b.x, b.y, mid)], 0.1) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn symmetric_pair_is_threaded_symmetrically() {
    let cfg = Config::default();
    let c = cfg.scenario.region.center();
    let off = Position2::new(2500.0, -2500.0);
    let p_t = power_for_center_pd(c + off, c - off, c, 0.10);
    let radars = [radar(c.x + off.x, c.y + off.y, p_t), radar(c.x - off.x, c.y - off.y, p_t)];
    let mission = cfg.mission_spec().unwrap();
    let plan = plan_deterministic(&radars, cfg.scenario.sigma, &mission, &settings(&cfg)).unwrap();
    assert!(plan.dispatchable, "{:?}", plan.diagnostics);
    assert_dense_feasible(&plan, &radars, &cfg);
    let pts = plan.trajectory.as_ref().unwrap().sample_polyline(400);
    let length = radarnav::geometry::polyline_length(&pts);
    let mirrored: Vec<Position2> = pts.iter().map(|p| Position2::new(p.y, p.x)).collect();
    let diagonal = cfg.scenario.region.diagonal();
    assert!((length - radarnav::geometry::polyline_length(&mirrored)).abs() <= 0.02 * length);
    assert!(length <= 1.02 * diagonal, "{length} vs {diagonal}");
    let spread = pts.iter().zip(&mirrored).map(|(a, b)| a.distance(*b)).fold(0.0, f64::max);
    assert!(spread <= 0.02 * diagonal, "asymmetry {spread}");
}

#[test]
fn random_layout_is_safe_at_dense_samples() {
    let cfg = Config::default();
    let (radars, _) = mission_layout(&cfg).unwrap();
    let mission = cfg.mission_spec().unwrap();
    let plan = plan_deterministic(&radars, cfg.scenario.sigma, &mission, &settings(&cfg)).unwrap();
    assert!(plan.dispatchable, "{:?}", plan.diagnostics);
    assert_dense_feasible(&plan, &radars, &cfg);
}

#[test]
fn blocked_corridor_is_reported_disconnected() {
    let cfg = Config::default();
    let mission = cfg.mission_spec().unwrap();
    // A wall of strong radars across the whole region.
    let radars: Vec<RadarTruth> = (0..12).map(|k| radar(1000.0 + 2000.0 * k as f64, 11_000.0, 20_000.0)).collect();
    let plan = plan_deterministic(&radars, cfg.scenario.sigma, &mission, &settings(&cfg)).unwrap();
    assert!(!plan.dispatchable);
    assert_eq!(plan.diagnostics.rejection, Some(Rejection::Disconnected));
    assert!(plan.trajectory.is_none());
}

struct Belief {
    estimates: Vec<RadarEstimate>,
    prior: UnknownPrior,
    known: KnownParamBelief,
    history: Vec<Position2>,
    exploration: ExplorationModel,
}

impl Belief {
    fn inputs(&self) -> UncertainInputs<'_> {
        UncertainInputs {
            estimates: &self.estimates,
            prior: &self.prior,
            known: &self.known,
            history: &self.history,
            exploration: &self.exploration,
        }
    }
}

/// Belief centred on the truth with relative spread `scale` and a 1 km grid
/// of silent history points, minus those inside `hole`.
fn belief(cfg: &Config, radars: &[RadarTruth], scale: f64, hole: Option<(Position2, f64)>) -> Belief {
    let estimates = radars
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let s = Vector3::new(100.0 * scale, 100.0 * scale, 0.1 * scale * r.erp());
            RadarEstimate {
                radar_id: j,
                mean: Vector3::new(r.position.x, r.position.y, r.erp()),
                cov: Matrix3::from_diagonal(&s.component_mul(&s)),
            }
        })
        .collect();
    let mut prior = UnknownPrior::from_ranges(&cfg.scenario.radar);
    prior.cov *= scale * scale;
    let known = KnownParamBelief::new(cfg.scenario.sigma, Position2::ORIGIN, 0.01 * scale, 10.0 * scale);
    let region = cfg.scenario.region;
    let mut history = Vec::new();
    for i in 0..=22 {
        for j in 0..=22 {
            let p = Position2::new(region.lower.x + 1000.0 * i as f64, region.lower.y + 1000.0 * j as f64);
            if hole.is_none_or(|(c, r)| p.distance(c) > r) {
                history.push(p);
            }
        }
    }
    Belief { estimates, prior, known, history, exploration: ExplorationModel::from_config(&cfg.scenario) }
}

#[test]
fn tight_beliefs_match_the_deterministic_plan() {
    let cfg = Config::default();
    let (radars, _) = mission_layout(&cfg).unwrap();
    let mission = cfg.mission_spec().unwrap();
    let s = settings(&cfg);
    let det = plan_deterministic(&radars, cfg.scenario.sigma, &mission, &s).unwrap();
    let b = belief(&cfg, &radars, 1e-3, None);
    let unc = plan_uncertain(b.inputs(), &mission, &s).unwrap();
    assert!(det.dispatchable && unc.dispatchable, "{:?}", unc.diagnostics);
    assert!((unc.tf - det.tf).abs() <= 0.05 * det.tf, "{} vs {}", unc.tf, det.tf);
}

#[test]
fn empty_history_never_dispatches() {
    let cfg = Config::default();
    let radars = [radar(5000.0, 15_000.0, 1000.0)];
    let mut b = belief(&cfg, &radars, 0.1, None);
    b.history.clear();
    let plan = plan_uncertain(b.inputs(), &cfg.mission_spec().unwrap(), &settings(&cfg)).unwrap();
    assert!(!plan.dispatchable);
    assert_eq!(plan.diagnostics.rejection, Some(Rejection::ExplorationGate));
    assert_eq!(plan.diagnostics.p_max, Some(0.5));
}

#[test]
fn unexplored_gap_on_the_route_blocks_dispatch() {
    let cfg = Config::default();
    let radars = [radar(5000.0, 15_000.0, 1000.0)];
    let mission = cfg.mission_spec().unwrap();
    let s = settings(&cfg);
    // With a wider discount a silent point only clears its surroundings.
    let mut explored = belief(&cfg, &radars, 0.1, None);
    explored.exploration.intercept.delta = 2.6e10;
    let ok = plan_uncertain(explored.inputs(), &mission, &s).unwrap();
    assert!(ok.dispatchable, "{:?}", ok.diagnostics);
    let mut gap = belief(&cfg, &radars, 0.1, Some((Position2::new(11_000.0, 11_000.0), 4500.0)));
    gap.exploration.intercept.delta = 2.6e10;
    let blocked = plan_uncertain(gap.inputs(), &mission, &s).unwrap();
    assert!(!blocked.dispatchable);
    assert_eq!(blocked.diagnostics.rejection, Some(Rejection::ExplorationGate));
    assert!(blocked.diagnostics.p_max.unwrap() > mission.p_s);
}

#[test]
fn uncertain_plans_hold_the_chance_constraint_and_the_gate() {
    let cfg = Config::default();
    let (radars, _) = mission_layout(&cfg).unwrap();
    let s = settings(&cfg);
    let mut was_dispatchable = true;
    let mut dispatched = 0;
    for eps in [0.5, 0.7, 0.9, 0.95, 0.99, 0.999] {
        let mission = MissionSpec::new(&cfg.scenario.region, MissionConfig { epsilon: eps, ..cfg.mission }).unwrap();
        let b = belief(&cfg, &radars, 1.0, None);
        let plan = plan_uncertain(b.inputs(), &mission, &s).unwrap();
        assert!(was_dispatchable || !plan.dispatchable, "ε={eps} became dispatchable");
        was_dispatchable = plan.dispatchable;
        if !plan.dispatchable {
            continue;
        }
        dispatched += 1;
        let traj = plan.trajectory.as_ref().unwrap();
        for p in traj.sample_polyline(10 * cfg.hp.n_s) {
            let chance = chance_at(&b.known.at(p), &b.prior, &b.estimates, mission.p_dt).unwrap();
            assert!(chance >= eps - 1e-6, "ε={eps}: chance {chance}");
        }
        assert!(plan.diagnostics.p_max.unwrap() <= mission.p_s);
    }
    assert!(dispatched > 0);
}

#[test]
fn planning_is_deterministic() {
    let cfg = Config::default();
    let (radars, _) = mission_layout(&cfg).unwrap();
    let b = belief(&cfg, &radars, 1.0, None);
    let mission = cfg.mission_spec().unwrap();
    let s = settings(&cfg);
    assert_eq!(plan_uncertain(b.inputs(), &mission, &s).unwrap(), plan_uncertain(b.inputs(), &mission, &s).unwrap());
    assert_eq!(
        plan_deterministic(&radars, 0.1, &mission, &s).unwrap(),
        plan_deterministic(&radars, 0.1, &mission, &s).unwrap()
    );
}
