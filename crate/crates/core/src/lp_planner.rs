//! Waypoint planning for the low-priority scouts.
//!
//! Each scout minimizes `-α_e Γ_e + α_u Γ_u + α_s Γ_s` over the region:
//! `Γ_e` is the posterior probability that an undiscovered radar sits at a
//! point given that nothing was intercepted along the shared path history,
//! `Γ_u` is the mean normalized determinant of the radar covariances after a
//! hypothetical measurement there, and `Γ_s` is the normalized distance to
//! the high-priority goal. Scouts plan in turn and pass on their projected
//! paths and covariances so later scouts avoid duplicating them.

use serde::{Deserialize, Serialize};

use crate::config::{MissionSpec, PlannerWeights, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimator::{ekf_covariance_update, measurement_jacobian, MeasurementModel, RadarEstimate};
use crate::geometry::{Position2, Region};
use crate::radar::{InterceptModel, NoiseModel};

/// One stored point of an agent's path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub agent: usize,
    pub time: f64,
    pub position: Position2,
}

/// Positions visited by all scouts, stored every `Δt_e`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathHistory {
    points: Vec<HistoryPoint>,
    positions: Vec<Position2>,
}

impl PathHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a point; times must increase strictly for each agent.
    pub fn push(&mut self, agent: usize, time: f64, position: Position2) -> Result<()> {
        if let Some(last) = self.points.iter().rev().find(|p| p.agent == agent) {
            if !(time > last.time) {
                return Err(Error::InvalidConfig(format!(
                    "history time {time} for agent {agent} not after {}",
                    last.time
                )));
            }
        }
        self.points.push(HistoryPoint { agent, time, position });
        self.positions.push(position);
        Ok(())
    }

    pub fn points(&self) -> &[HistoryPoint] {
        &self.points
    }

    pub fn positions(&self) -> &[Position2] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Intercept model and prior used by the exploration term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationModel {
    pub intercept: InterceptModel,
    /// Prior probability that a radar is present at a point.
    pub prior_phi: f64,
}

impl ExplorationModel {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self { intercept: InterceptModel::from_config(cfg), prior_phi: cfg.prior_phi }
    }
}

/// Log-odds `ln(Γ_e / (1 - Γ_e))` of a radar at `x` given no intercepts at
/// any of `history`.
pub fn gamma_e_log_odds(x: Position2, history: &[Position2], model: &ExplorationModel) -> f64 {
    let im = &model.intercept;
    let k = im.snr_d2();
    let ln_pfa = im.p_fa.ln();
    // Denominator branch: no radar, every silence is a non-false-alarm.
    let other = (1.0 - model.prior_phi).ln() + history.len() as f64 * (-im.p_fa).ln_1p();
    let mut log_num = model.prior_phi.ln();
    for p in history {
        let d2 = x.distance_sq(*p);
        if d2 == 0.0 {
            return f64::NEG_INFINITY;
        }
        log_num += (-(ln_pfa / (k / d2 + 1.0)).exp_m1()).ln();
        // Every further term is non-positive; below this the posterior is
        // zero in double precision.
        if log_num - other < -800.0 {
            return f64::NEG_INFINITY;
        }
    }
    log_num - other
}

/// Posterior probability that an undiscovered radar sits at `x`.
pub fn gamma_e(x: Position2, history: &[Position2], model: &ExplorationModel) -> f64 {
    let l = gamma_e_log_odds(x, history, model);
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// Determinant of the covariance after a measurement at `x`, via
/// `det Σ⁺ = det Σ · det Σ_z / det(J Σ Jᵀ + Σ_z)`.
fn updated_det(model: &MeasurementModel, est: &RadarEstimate, det_prior: f64, x: Position2) -> Result<f64> {
    let j = measurement_jacobian(model, x, &est.mean)?;
    let sz = model.noise.sigma_z();
    let s = j * est.cov * j.transpose() + sz;
    let det_s = s.determinant();
    if !(det_s > 0.0) {
        return Err(Error::Singular("innovation covariance"));
    }
    Ok(det_prior * sz.determinant() / det_s)
}

/// Mean over radars of `det(cov⁺(x)) / d_cov`; zero without estimates.
pub fn gamma_u(x: Position2, estimates: &[RadarEstimate], model: &MeasurementModel, d_cov: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for e in estimates {
        sum += updated_det(model, e, e.cov.determinant(), x)?;
    }
    Ok(sum / (estimates.len() as f64 * d_cov))
}

/// Distance to the goal normalized by the largest distance in the region.
pub fn gamma_s(x: Position2, mission: &MissionSpec) -> f64 {
    x.distance(mission.goal) / mission.d_max
}

/// Fixed inputs of the scout objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpContext {
    pub region: Region,
    pub mission: MissionSpec,
    pub weights: PlannerWeights,
    pub exploration: ExplorationModel,
    pub measurement: MeasurementModel,
    pub d_cov: f64,
    /// Scout speed, m/s.
    pub v_l: f64,
    /// History period, seconds.
    pub dt_e: f64,
}

impl LpContext {
    pub fn from_config(cfg: &ScenarioConfig, mission: MissionSpec, weights: PlannerWeights) -> Self {
        Self {
            region: cfg.region,
            mission,
            weights,
            exploration: ExplorationModel::from_config(cfg),
            measurement: MeasurementModel { g_i: cfg.g_i(), lambda: cfg.radar.lambda, noise: NoiseModel::from_config(cfg) },
            d_cov: cfg.d_cov,
            v_l: cfg.v_l,
            dt_e: cfg.dt_e,
        }
    }
}

/// Objective with prior covariance determinants cached.
struct Objective<'a> {
    ctx: &'a LpContext,
    history: &'a [Position2],
    estimates: &'a [RadarEstimate],
    dets: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(ctx: &'a LpContext, history: &'a [Position2], estimates: &'a [RadarEstimate]) -> Self {
        Self { ctx, history, estimates, dets: estimates.iter().map(|e| e.cov.determinant()).collect() }
    }

    fn eval(&self, x: Position2) -> f64 {
        let w = &self.ctx.weights;
        let mut f = 0.0;
        if w.alpha_e > 0.0 {
            f -= w.alpha_e * gamma_e(x, self.history, &self.ctx.exploration);
        }
        if w.alpha_u > 0.0 && !self.estimates.is_empty() {
            let mut sum = 0.0;
            for (e, d) in self.estimates.iter().zip(&self.dets) {
                match updated_det(&self.ctx.measurement, e, *d, x) {
                    Ok(v) => sum += v,
                    Err(_) => return f64::INFINITY,
                }
            }
            f += w.alpha_u * sum / (self.estimates.len() as f64 * self.ctx.d_cov);
        }
        if w.alpha_s > 0.0 {
            f += w.alpha_s * gamma_s(x, &self.ctx.mission);
        }
        f
    }
}

/// `-α_e Γ_e + α_u Γ_u + α_s Γ_s` at `x`. Degenerate points (a measurement
/// taken on top of an estimate) evaluate to `+∞`.
pub fn total_objective(x: Position2, history: &[Position2], estimates: &[RadarEstimate], ctx: &LpContext) -> f64 {
    Objective::new(ctx, history, estimates).eval(x)
}

/// Multi-start minimization over the region: the best point of each block
/// of a 4 × 4 partition seeds a projected descent with normalized steps.
fn minimize_objective(obj: &Objective, region: &Region) -> Position2 {
    const BLOCKS: usize = 4;
    const PER_BLOCK: usize = 4;
    let n = BLOCKS * PER_BLOCK;
    let (w, h) = (region.width(), region.height());
    let mut starts = Vec::with_capacity(BLOCKS * BLOCKS);
    for by in 0..BLOCKS {
        for bx in 0..BLOCKS {
            let mut best = (f64::INFINITY, region.center());
            for iy in 0..PER_BLOCK {
                for ix in 0..PER_BLOCK {
                    let gx = bx * PER_BLOCK + ix;
                    let gy = by * PER_BLOCK + iy;
                    let p = Position2::new(
                        region.lower.x + (gx as f64 + 0.5) * w / n as f64,
                        region.lower.y + (gy as f64 + 0.5) * h / n as f64,
                    );
                    let f = obj.eval(p);
                    if f < best.0 {
                        best = (f, p);
                    }
                }
            }
            starts.push(best);
        }
    }
    let mut best = (f64::INFINITY, region.center());
    let fd = 1.0;
    for (f0, p0) in starts {
        let (mut f, mut p) = (f0, p0);
        let mut step = 0.25 * w.min(h) / BLOCKS as f64;
        for _ in 0..40 {
            if step < 2.0 {
                break;
            }
            let gx = obj.eval(region.clamp(p + Position2::new(fd, 0.0))) - f;
            let gy = obj.eval(region.clamp(p + Position2::new(0.0, fd))) - f;
            let g = Position2::new(gx, gy);
            let gn = g.norm();
            if !gn.is_finite() || gn == 0.0 {
                break;
            }
            let dir = g * (-1.0 / gn);
            let mut moved = false;
            while step >= 2.0 {
                let q = region.clamp(p + dir * step);
                let fq = obj.eval(q);
                if fq < f {
                    p = q;
                    f = fq;
                    moved = true;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if f < best.0 {
            best = (f, p);
        }
    }
    best.1
}

/// Waypoint that minimizes [`total_objective`].
pub fn optimize_waypoint(history: &[Position2], estimates: &[RadarEstimate], ctx: &LpContext) -> Position2 {
    minimize_objective(&Objective::new(ctx, history, estimates), &ctx.region)
}

/// Result of one planning round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointAssignment {
    /// Waypoint of each agent, indexed by agent.
    pub waypoints: Vec<Position2>,
    /// Agents in the order they planned.
    pub order: Vec<usize>,
    /// Estimates with covariances updated at every chosen waypoint.
    pub covariances: Vec<RadarEstimate>,
    /// Path history extended with every agent's projected path.
    pub future_history: Vec<Position2>,
}

/// Planning order: ascending distance to the estimate with the largest
/// covariance determinant, agent id order without estimates.
pub fn planning_order(agents: &[Position2], estimates: &[RadarEstimate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..agents.len()).collect();
    let Some(target) = estimates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cov.determinant().total_cmp(&b.1.cov.determinant()).then(b.0.cmp(&a.0)))
        .map(|(_, e)| e.position())
    else {
        return order;
    };
    order.sort_by(|&a, &b| agents[a].distance_sq(target).total_cmp(&agents[b].distance_sq(target)).then(a.cmp(&b)));
    order
}

/// Straight-line points from `from` towards `to` every `spacing` meters,
/// excluding `from`.
pub fn future_path(from: Position2, to: Position2, spacing: f64) -> Vec<Position2> {
    let d = from.distance(to);
    if d == 0.0 || spacing <= 0.0 {
        return Vec::new();
    }
    let n = (d / spacing) as usize;
    let dir = (to - from) * (1.0 / d);
    (1..=n).map(|q| from + dir * (q as f64 * spacing)).collect()
}

/// Sequential waypoint selection for all agents. With `deconflict` off every
/// agent optimizes against the unmodified history and covariances.
pub fn plan_waypoints(
    agents: &[Position2],
    estimates: &[RadarEstimate],
    history: &[Position2],
    ctx: &LpContext,
    deconflict: bool,
) -> WaypointAssignment {
    let order = planning_order(agents, estimates);
    let mut r_plus = estimates.to_vec();
    let mut x_plus = history.to_vec();
    let mut waypoints = agents.to_vec();
    for &i in &order {
        let (h, r) = if deconflict { (&x_plus, &r_plus) } else { (&history.to_vec(), &estimates.to_vec()) };
        let wp = optimize_waypoint(h, r, ctx);
        waypoints[i] = wp;
        if deconflict {
            x_plus.extend(future_path(agents[i], wp, ctx.dt_e * ctx.v_l));
            for e in r_plus.iter_mut() {
                if let Ok(c) = ekf_covariance_update(&ctx.measurement, e, wp) {
                    e.cov = c;
                }
            }
        }
    }
    WaypointAssignment { waypoints, order, covariances: r_plus, future_history: x_plus }
}

/// Whether a planning round is due.
pub fn replan_due(since_last_plan: f64, t_h: f64, any_arrived: bool) -> bool {
    any_arrived || since_last_plan >= t_h
}

/// Γ_e at the midpoint between two rungs `spacing` apart in a strip
/// `[x0, x1]`, after flying the lower rung, the side leg and the upper rung.
fn rung_midpoint_gamma(x0: f64, x1: f64, spacing: f64, step: f64, model: &ExplorationModel) -> f64 {
    let mut pts = Vec::new();
    let a = Position2::new(x0, 0.0);
    let b = Position2::new(x1, 0.0);
    let c = Position2::new(x1, spacing);
    let d = Position2::new(x0, spacing);
    pts.push(a);
    for (from, to) in [(a, b), (b, c), (c, d)] {
        pts.extend(future_path(from, to, step));
        pts.push(to);
    }
    gamma_e(Position2::new(0.5 * (x0 + x1), 0.5 * spacing), &pts, model)
}

/// Largest rung spacing, up to `max`, for which Γ_e midway between two
/// flown rungs stays at or below `threshold`.
pub fn rung_spacing(strip_width: f64, max: f64, step: f64, model: &ExplorationModel, threshold: f64) -> f64 {
    let f = |d: f64| rung_midpoint_gamma(0.0, strip_width, d, step, model);
    if f(max) <= threshold {
        return max;
    }
    let (mut lo, mut hi) = (0.0, max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.max(step.min(max))
}

/// Boustrophedon sweep plan: one vertical strip per agent, a first pass at
/// the bisected rung spacing and further passes at half the previous
/// spacing, each starting where the last ended.
pub fn lawnmower_plan(region: &Region, n_l: usize, spacing: f64, min_spacing: f64) -> Vec<Vec<Position2>> {
    let n = n_l.max(1);
    let width = region.width() / n as f64;
    let (y0, y1) = (region.lower.y, region.upper.y);
    (0..n)
        .map(|i| {
            let x0 = region.lower.x + i as f64 * width;
            let x1 = if i + 1 == n { region.upper.x } else { x0 + width };
            let mut wps = vec![Position2::new(x0, y0)];
            let mut d = spacing.min(y1 - y0).max(min_spacing);
            let mut upward = true;
            let mut at_left = true;
            loop {
                let rungs = ((y1 - y0) / d).round().max(1.0) as usize;
                for k in 0..=rungs {
                    let f = k as f64 / rungs as f64;
                    let y = if upward { y0 + f * (y1 - y0) } else { y1 - f * (y1 - y0) };
                    let (first, second) = if at_left { (x0, x1) } else { (x1, x0) };
                    wps.push(Position2::new(first, y));
                    wps.push(Position2::new(second, y));
                    at_left = !at_left;
                }
                upward = !upward;
                if d / 2.0 < min_spacing {
                    break;
                }
                d /= 2.0;
            }
            wps.dedup();
            wps
        })
        .collect()
}
