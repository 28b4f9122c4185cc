//! Time-stepped mission engine.
//!
//! Scouts fly straight lines toward their waypoints, intercept radar
//! emissions, and feed one shared track store. At every planning round the
//! high-priority planner is tried against the current estimates; the
//! mission ends at the first dispatchable plan or at the time cap.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bspline::BSplineTrajectory;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimator::{IngestOutcome, MeasurementModel, RadarEstimate, TrackStore};
use crate::geometry::Position2;
use crate::hp_planner::{plan_deterministic, plan_uncertain, HpSettings, PlanResult, Rejection, UncertainInputs};
use crate::lp_planner::{gamma_e, lawnmower_plan, plan_waypoints, replan_due, rung_spacing, LpContext, PathHistory};
use crate::pd_uncertainty::{KnownParamBelief, UnknownPrior};
use crate::radar::{pd_overall_params, sample_measurement, DetectionParams, InterceptModel, KnownAgentParams, NoiseModel, RadarTruth};
use crate::scenario::{generate_scenario, indexed_stream, splitmix64, Stream};
use rand::Rng;

/// How the scouts choose where to fly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    /// Weighted objective with sequential deconfliction.
    Ours,
    /// Boustrophedon sweep of one strip per scout.
    Lawnmower,
}

/// Everything that defines a mission run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSetup {
    pub config: Config,
    pub mode: PlannerMode,
    /// Share projected paths and covariances between scouts within a round.
    pub deconflict: bool,
    /// Record every measurement in the log, not only per-tick counts.
    pub log_measurements: bool,
}

impl MissionSetup {
    pub fn new(config: Config, mode: PlannerMode) -> Self {
        Self { config, mode, deconflict: true, log_measurements: false }
    }
}

/// One line of the mission log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogRecord {
    Start { seed: u64, mode: PlannerMode, layout_draws: usize, radars: Vec<RadarTruth> },
    Tick { t: f64, positions: Vec<Position2>, intercepts: usize },
    Measurement { t: f64, agent: usize, radar: usize, s_e: f64, phi: f64, location: Position2 },
    TrackInit { t: f64, radar: usize, mean: [f64; 3], cov_det: f64 },
    Waypoints { t: f64, order: Vec<usize>, waypoints: Vec<Position2> },
    HpAttempt {
        t: f64,
        estimates: usize,
        dispatchable: bool,
        rejection: Option<Rejection>,
        tf: f64,
        p_max: Option<f64>,
        worst_safety: Option<f64>,
    },
    /// The dispatched trajectory and the estimates it was planned against.
    Dispatch { t: f64, trajectory: BSplineTrajectory, estimates: Vec<RadarEstimate> },
    End { t: f64, found: bool, t_found: Option<f64>, truth_max_pd: Option<f64> },
}

/// Writes records as line-delimited JSON.
pub fn write_log<W: Write>(records: &[LogRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses line-delimited JSON records.
pub fn read_log(text: &str) -> Result<Vec<LogRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

/// A scout: position, current waypoint and any queued sweep waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scout {
    pub position: Position2,
    pub waypoint: Option<Position2>,
    pub route: VecDeque<Position2>,
    /// Whether reaching the waypoint should trigger a planning round. A
    /// waypoint assigned within the arrival radius does not.
    pub armed: bool,
}

/// Mutable mission state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub clock: f64,
    pub steps: u64,
    pub scouts: Vec<Scout>,
    pub tracks: TrackStore,
    pub history: PathHistory,
    next_measurement: u64,
    next_history: u64,
    last_round: Option<f64>,
    pub plan: Option<PlanResult>,
    pub found: bool,
    pub t_found: Option<f64>,
    pub attempts: usize,
    pub total_intercepts: usize,
    pub log: Vec<LogRecord>,
}

/// Result of [`run_mission`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionOutcome {
    pub seed: u64,
    pub mode: PlannerMode,
    pub found: bool,
    pub t_found: Option<f64>,
    /// The dispatched plan, or the last attempt when none was dispatched.
    pub plan: Option<PlanResult>,
    pub attempts: usize,
    /// Ground-truth maximum PD along the dispatched trajectory.
    pub truth_max_pd: Option<f64>,
    pub radars: Vec<RadarTruth>,
    pub layout_draws: usize,
    pub logs: Vec<LogRecord>,
}

/// Seed of the `k`-th layout draw.
pub fn layout_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        seed
    } else {
        splitmix64(seed ^ splitmix64(k as u64 ^ 0xA5A5_A5A5))
    }
}

/// Radar layout for `config`: the first draw, or with `require_passable`
/// the first draw that admits a dispatchable plan with known radars.
/// Returns the layout and the number of draws used.
pub fn mission_layout(config: &Config) -> Result<(Vec<RadarTruth>, usize)> {
    let mission = config.mission_spec()?;
    let settings = HpSettings::new(config.scenario.region, config.limits, config.hp);
    let draws = if config.sim.require_passable { config.sim.max_layout_draws.max(1) } else { 1 };
    for k in 0..draws {
        let mut sc = config.scenario.clone();
        sc.seed = layout_seed(config.scenario.seed, k);
        let radars = generate_scenario(&sc)?;
        if !config.sim.require_passable || plan_deterministic(&radars, sc.sigma, &mission, &settings)?.dispatchable {
            return Ok((radars, k + 1));
        }
    }
    Err(Error::Infeasible("no passable radar layout"))
}

/// Ground-truth maximum PD over `n + 1` uniform samples of a trajectory.
pub fn truth_max_pd(plan: &PlanResult, radars: &[RadarTruth], sigma: f64, n: usize) -> Option<f64> {
    let traj = plan.trajectory.as_ref()?;
    let det: Vec<DetectionParams> = radars.iter().map(RadarTruth::detection).collect();
    Some(traj.sample_polyline(n).into_iter().map(|p| pd_overall_params(sigma, p, &det).unwrap_or(1.0)).fold(0.0, f64::max))
}

/// Fixed data of one mission.
#[derive(Debug, Clone)]
pub struct Mission {
    pub setup: MissionSetup,
    pub radars: Vec<RadarTruth>,
    pub layout_draws: usize,
    pub ctx: LpContext,
    pub settings: HpSettings,
    prior: UnknownPrior,
    intercepts: Vec<InterceptModel>,
    noise: NoiseModel,
    sweeps: Vec<Vec<Position2>>,
}

const EPS_T: f64 = 1e-9;

impl Mission {
    /// Draws the layout (see [`mission_layout`]) and prepares the mission.
    pub fn new(setup: MissionSetup) -> Result<Self> {
        setup.config.validate()?;
        let (radars, draws) = mission_layout(&setup.config)?;
        Self::with_radars(setup, radars, draws)
    }

    /// Mission over a given radar layout.
    pub fn with_radars(setup: MissionSetup, radars: Vec<RadarTruth>, layout_draws: usize) -> Result<Self> {
        let cfg = &setup.config;
        cfg.validate()?;
        let sc = &cfg.scenario;
        let ctx = LpContext::from_config(sc, cfg.mission_spec()?, cfg.weights);
        let settings = HpSettings::new(sc.region, cfg.limits, cfg.hp);
        let intercepts = radars.iter().map(|r| InterceptModel::for_radar(r, sc.g_i(), sc.delta_l)).collect();
        let sweeps = match setup.mode {
            PlannerMode::Ours => Vec::new(),
            PlannerMode::Lawnmower => {
                let strip = sc.region.width() / sc.n_l.max(1) as f64;
                let spacing = rung_spacing(
                    strip,
                    sc.region.height(),
                    sc.dt_e * sc.v_l,
                    &ctx.exploration,
                    cfg.sim.lawnmower_threshold,
                );
                lawnmower_plan(&sc.region, sc.n_l, spacing, cfg.sim.lawnmower_min_spacing)
            }
        };
        Ok(Self {
            prior: UnknownPrior::from_ranges(&sc.radar),
            noise: NoiseModel::from_config(sc),
            intercepts,
            sweeps,
            radars,
            layout_draws,
            ctx,
            settings,
            setup,
        })
    }

    fn config(&self) -> &Config {
        &self.setup.config
    }

    /// State at time zero with every scout at its start point.
    pub fn initial_state(&self) -> SimState {
        let cfg = self.config();
        let scouts = (0..cfg.scenario.n_l)
            .map(|i| Scout {
                position: scout_start(cfg, &self.ctx, i),
                waypoint: None,
                route: self.sweeps.get(i).map(|s| s.iter().copied().collect()).unwrap_or_default(),
                armed: false,
            })
            .collect();
        let model = MeasurementModel { g_i: cfg.scenario.g_i(), lambda: cfg.scenario.radar.lambda, noise: self.noise };
        SimState {
            clock: 0.0,
            steps: 0,
            scouts,
            tracks: TrackStore::new(model, cfg.scenario.region.center()),
            history: PathHistory::new(),
            next_measurement: 0,
            next_history: 0,
            last_round: None,
            plan: None,
            found: false,
            t_found: None,
            attempts: 0,
            total_intercepts: 0,
            log: vec![LogRecord::Start {
                seed: cfg.scenario.seed,
                mode: self.setup.mode,
                layout_draws: self.layout_draws,
                radars: self.radars.clone(),
            }],
        }
    }

    /// Moves every scout `v_l · dt` along its route, then handles the
    /// measurement, history and planning events due at the new time.
    pub fn step(&self, st: &mut SimState, dt: f64) -> Result<()> {
        let v = self.config().scenario.v_l;
        for s in st.scouts.iter_mut() {
            advance(s, v * dt);
        }
        st.steps += 1;
        st.clock = st.steps as f64 * dt;
        self.process_events(st)
    }

    /// Handles all events due at or before the current clock.
    pub fn process_events(&self, st: &mut SimState) -> Result<()> {
        let cfg = self.config();
        while st.next_measurement as f64 * cfg.sim.measurement_period <= st.clock + EPS_T {
            self.measure(st, st.next_measurement);
            st.next_measurement += 1;
        }
        while st.next_history as f64 * cfg.scenario.dt_e <= st.clock + EPS_T {
            let t = st.next_history as f64 * cfg.scenario.dt_e;
            for (i, s) in st.scouts.iter().enumerate() {
                st.history.push(i, t, s.position)?;
            }
            st.next_history += 1;
        }
        if !st.found {
            self.planning_round(st)?;
        }
        Ok(())
    }

    fn measure(&self, st: &mut SimState, tick: u64) {
        let cfg = self.config();
        let t = tick as f64 * cfg.sim.measurement_period;
        let seed = cfg.scenario.seed;
        let mut draw = indexed_stream(seed, Stream::Intercepts, tick);
        let mut noise = indexed_stream(seed, Stream::Noise, tick);
        let mut count = 0;
        for (i, s) in st.scouts.iter().enumerate() {
            let agent = KnownAgentParams { sigma: cfg.scenario.sigma, position: s.position, g_i: cfg.scenario.g_i() };
            for (j, (radar, im)) in self.radars.iter().zip(&self.intercepts).enumerate() {
                let u: f64 = draw.random();
                if u >= im.probability_d2(s.position.distance_sq(radar.position)) {
                    continue;
                }
                let Ok(mut m) = sample_measurement(&agent, radar, &self.noise, &mut noise) else { continue };
                m.agent_id = i;
                m.radar_id = j;
                m.time = t;
                count += 1;
                if self.setup.log_measurements {
                    st.log.push(LogRecord::Measurement { t, agent: i, radar: j, s_e: m.s_e, phi: m.phi, location: m.location });
                }
                if st.tracks.ingest(m, cfg.sim.n_z_min) == IngestOutcome::Initialized {
                    if let Some(e) = st.tracks.estimate(j) {
                        st.log.push(LogRecord::TrackInit {
                            t,
                            radar: j,
                            mean: [e.mean[0], e.mean[1], e.mean[2]],
                            cov_det: e.cov.determinant(),
                        });
                    }
                }
            }
        }
        st.total_intercepts += count;
        st.log.push(LogRecord::Tick { t, positions: st.scouts.iter().map(|s| s.position).collect(), intercepts: count });
    }

    fn round_due(&self, st: &SimState) -> bool {
        let cfg = self.config();
        let Some(last) = st.last_round else { return true };
        let since = st.clock - last;
        let arrived = match self.setup.mode {
            PlannerMode::Ours => st
                .scouts
                .iter()
                .any(|s| s.armed && s.waypoint.is_some_and(|w| s.position.distance(w) <= cfg.sim.arrival_radius)),
            PlannerMode::Lawnmower => false,
        };
        replan_due(since + EPS_T, cfg.scenario.t_h, arrived)
    }

    fn planning_round(&self, st: &mut SimState) -> Result<()> {
        if !self.round_due(st) {
            return Ok(());
        }
        st.last_round = Some(st.clock);
        let estimates = st.tracks.estimates();
        if self.setup.mode == PlannerMode::Ours {
            let agents: Vec<Position2> = st.scouts.iter().map(|s| s.position).collect();
            let a = plan_waypoints(&agents, &estimates, st.history.positions(), &self.ctx, self.setup.deconflict);
            let radius = self.config().sim.arrival_radius;
            for (s, w) in st.scouts.iter_mut().zip(&a.waypoints) {
                s.waypoint = Some(*w);
                s.armed = s.position.distance(*w) > radius;
            }
            st.log.push(LogRecord::Waypoints { t: st.clock, order: a.order, waypoints: a.waypoints });
        }
        if self.attempt_allowed(st, estimates.is_empty()) {
            self.attempt(st, &estimates)?;
        }
        Ok(())
    }

    /// High-priority attempts wait until every intercepted radar has an
    /// estimate, and until either one estimate exists or enough of the
    /// region has been explored.
    fn attempt_allowed(&self, st: &SimState, no_estimates: bool) -> bool {
        if !st.tracks.pending().is_empty() {
            return false;
        }
        !no_estimates || coverage(st.history.positions(), &self.ctx) >= self.config().sim.coverage_to_attempt
    }

    fn attempt(&self, st: &mut SimState, estimates: &[RadarEstimate]) -> Result<()> {
        let cfg = self.config();
        let known = KnownParamBelief::new(cfg.scenario.sigma, self.ctx.mission.start, cfg.sim.rcs_std, cfg.sim.position_std);
        let inputs = UncertainInputs {
            estimates,
            prior: &self.prior,
            known: &known,
            history: st.history.positions(),
            exploration: &self.ctx.exploration,
        };
        let plan = plan_uncertain(inputs, &self.ctx.mission, &self.settings)?;
        st.attempts += 1;
        st.log.push(LogRecord::HpAttempt {
            t: st.clock,
            estimates: estimates.len(),
            dispatchable: plan.dispatchable,
            rejection: plan.diagnostics.rejection,
            tf: plan.tf,
            p_max: plan.diagnostics.p_max,
            worst_safety: plan.diagnostics.worst_safety,
        });
        if plan.dispatchable {
            st.found = true;
            st.t_found = Some(st.clock);
            if let Some(trajectory) = plan.trajectory.clone() {
                st.log.push(LogRecord::Dispatch { t: st.clock, trajectory, estimates: estimates.to_vec() });
            }
        }
        st.plan = Some(plan);
        Ok(())
    }

    /// Runs from `state` until dispatch or the time cap.
    pub fn run_from(&self, mut st: SimState) -> Result<MissionOutcome> {
        let cfg = self.config();
        let t_max = cfg.sim.t_max;
        let dt = cfg.sim.dt;
        if t_max > 0.0 {
            if st.steps == 0 {
                self.process_events(&mut st)?;
            }
            while !st.found && (st.steps + 1) as f64 * dt <= t_max + EPS_T {
                self.step(&mut st, dt)?;
            }
        }
        let n_dense = 10 * cfg.hp.n_s;
        let truth = if st.found {
            st.plan.as_ref().and_then(|p| truth_max_pd(p, &self.radars, cfg.scenario.sigma, n_dense))
        } else {
            None
        };
        st.log.push(LogRecord::End { t: st.clock, found: st.found, t_found: st.t_found, truth_max_pd: truth });
        Ok(MissionOutcome {
            seed: cfg.scenario.seed,
            mode: self.setup.mode,
            found: st.found,
            t_found: st.t_found,
            plan: st.plan,
            attempts: st.attempts,
            truth_max_pd: truth,
            radars: self.radars.clone(),
            layout_draws: self.layout_draws,
            logs: st.log,
        })
    }

    pub fn run(&self) -> Result<MissionOutcome> {
        self.run_from(self.initial_state())
    }
}

/// Starting point of scout `i`.
pub fn scout_start(cfg: &Config, ctx: &LpContext, i: usize) -> Position2 {
    if !cfg.sim.spread_start {
        return ctx.mission.start;
    }
    let r = &cfg.scenario.region;
    let w = r.width() / cfg.scenario.n_l.max(1) as f64;
    Position2::new(r.lower.x + (i as f64 + 0.5) * w, r.lower.y)
}

/// Moves a scout `dist` meters along its waypoint and queued route. A scout
/// with no route left waits at its last waypoint.
fn advance(s: &mut Scout, mut dist: f64) {
    loop {
        let target = match s.waypoint {
            Some(w) if s.position != w => w,
            _ => match s.route.pop_front() {
                Some(w) => {
                    s.waypoint = Some(w);
                    continue;
                }
                None => return,
            },
        };
        let d = s.position.distance(target);
        if d > dist {
            s.position = s.position + (target - s.position) * (dist / d);
            return;
        }
        s.position = target;
        dist -= d;
        if s.route.is_empty() {
            return;
        }
    }
}

/// Fraction of a 1 km grid over the region where the undiscovered-radar
/// posterior has dropped below half the prior.
pub fn coverage(history: &[Position2], ctx: &LpContext) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let r = &ctx.region;
    let nx = (r.width() / 1000.0).ceil().max(1.0) as usize;
    let ny = (r.height() / 1000.0).ceil().max(1.0) as usize;
    let limit = 0.5 * ctx.exploration.prior_phi;
    let mut hit = 0;
    for iy in 0..ny {
        for ix in 0..nx {
            let p = Position2::new(
                r.lower.x + (ix as f64 + 0.5) * r.width() / nx as f64,
                r.lower.y + (iy as f64 + 0.5) * r.height() / ny as f64,
            );
            if gamma_e(p, history, &ctx.exploration) < limit {
                hit += 1;
            }
        }
    }
    hit as f64 / (nx * ny) as f64
}

/// Draws the layout and runs one mission.
pub fn run_mission(setup: MissionSetup) -> Result<MissionOutcome> {
    Mission::new(setup)?.run()
}
