//! Minimum-time refinement of B-spline trajectories.
//!
//! The decision variables are the control points and the final time. The
//! start and goal equalities are satisfied exactly by solving for the
//! dominant control point at each end; every other constraint is sampled at
//! `N_s + 1` evenly spaced times and handled by an augmented Lagrangian
//! with L-BFGS inner solves. Kinematic and safety bounds are tightened by a
//! small relative back-off so that the sampled solution keeps some slack
//! between samples.

use serde::{Deserialize, Serialize};

use crate::bspline::{BSplineTrajectory, SampledBasis};
use crate::config::{KinematicLimits, MissionSpec};
use crate::error::{Error, Result};
use crate::estimator::RadarEstimate;
use crate::geometry::{Position2, Region};
use crate::pd_uncertainty::{chance_at, KnownParamBelief, UnknownPrior};
use crate::radar::{pd_single, DetectionParams};

pub mod lbfgs;

use lbfgs::{minimize, LbfgsOptions};

/// Length unit of the scaled decision vector, meters.
const LENGTH_SCALE: f64 = 1000.0;
/// Sampled inequalities per time sample.
pub const CONSTRAINTS_PER_SAMPLE: usize = 11;

/// Names of the per-sample inequalities, in residual order.
pub const CONSTRAINT_NAMES: [&str; CONSTRAINTS_PER_SAMPLE] =
    ["x_min", "x_max", "y_min", "y_max", "v_min", "v_max", "u_min", "u_max", "kappa_min", "kappa_max", "safety"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Constraint samples `N_s`; constraints are checked at `N_s + 1` times.
    pub n_s: usize,
    /// Largest accepted scaled constraint violation.
    pub feasibility_tol: f64,
    /// Inner gradient tolerance and outer relative objective change.
    pub optimality_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// Relative tightening of the kinematic and safety bounds.
    pub margin: f64,
    /// Finite-difference step for the chance-constraint gradient, meters.
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_s: 100,
            feasibility_tol: 1e-6,
            optimality_tol: 1e-4,
            max_outer: 20,
            max_inner: 150,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            margin: 0.01,
            fd_step: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s < 10 {
            return Err(Error::InvalidConfig(format!("n_s must be at least 10, got {}", self.n_s)));
        }
        if !(self.feasibility_tol > 0.0 && self.optimality_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.penalty_growth > 1.0 && self.initial_penalty > 0.0) {
            return Err(Error::InvalidConfig("penalty must be positive and growing".into()));
        }
        if !(0.0..0.5).contains(&self.margin) || !(self.fd_step > 0.0) {
            return Err(Error::InvalidConfig("margin must lie in [0, 0.5) and fd_step be positive".into()));
        }
        Ok(())
    }
}

/// Detection constraint applied along the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum SafetyModel {
    /// No radar constraint.
    None,
    /// `P_D(p) ≤ P_Dt` with exactly known radars.
    Deterministic { radars: Vec<DetectionParams>, sigma: f64 },
    /// `P(P_D(p) ≤ P_Dt) ≥ ε` under the linearized PD belief.
    Uncertain { estimates: Vec<RadarEstimate>, prior: UnknownPrior, known: KnownParamBelief },
}

/// Overall PD and its gradient with respect to the agent position.
pub fn pd_with_gradient(radars: &[DetectionParams], sigma: f64, p: Position2) -> (f64, Position2) {
    // Running product of miss probabilities and the gradient of 1 - product.
    let mut miss = 1.0;
    let mut grad = Position2::ORIGIN;
    for r in radars {
        let d = p - r.position;
        let r2 = d.norm_sq();
        if r2 == 0.0 {
            return (1.0, Position2::ORIGIN);
        }
        let s = r.snr_r4(sigma) / (r2 * r2);
        let Ok(pd) = pd_single(s, r.p_fa) else { return (1.0, Position2::ORIGIN) };
        let dpd_ds = pd * (-r.p_fa.ln()) / ((s + 1.0) * (s + 1.0));
        let dpd = d * (dpd_ds * -4.0 * s / r2);
        grad = grad * (1.0 - pd) + dpd * miss;
        miss *= 1.0 - pd;
    }
    (1.0 - miss, grad)
}

impl SafetyModel {
    /// PD (deterministic) or chance of staying below the threshold
    /// (uncertain) at `p`; `None` without a constraint.
    pub fn value(&self, p: Position2, p_dt: f64) -> Option<f64> {
        match self {
            SafetyModel::None => None,
            SafetyModel::Deterministic { radars, sigma } => Some(pd_with_gradient(radars, *sigma, p).0),
            SafetyModel::Uncertain { estimates, prior, known } => {
                Some(chance_at(&known.at(p), prior, estimates, p_dt).unwrap_or(0.0))
            }
        }
    }

    /// Scaled residual (`≤ 0` when safe) and its position gradient.
    fn residual(&self, p: Position2, p_dt: f64, epsilon: f64, margin: f64, h: f64, grad: bool) -> (f64, Position2) {
        match self {
            SafetyModel::None => (-1.0, Position2::ORIGIN),
            SafetyModel::Deterministic { radars, sigma } => {
                let (pd, g) = pd_with_gradient(radars, *sigma, p);
                ((pd - p_dt * (1.0 - margin)) / p_dt, g * (1.0 / p_dt))
            }
            SafetyModel::Uncertain { .. } => {
                let target = epsilon + margin * (1.0 - epsilon);
                let c = |q: Position2| self.value(q, p_dt).unwrap_or(0.0);
                let r = target - c(p);
                if !grad {
                    return (r, Position2::ORIGIN);
                }
                let gx = (c(p + Position2::new(h, 0.0)) - c(p - Position2::new(h, 0.0))) / (2.0 * h);
                let gy = (c(p + Position2::new(0.0, h)) - c(p - Position2::new(0.0, h))) / (2.0 * h);
                (r, Position2::new(-gx, -gy))
            }
        }
    }
}

/// A minimum-time problem around a seed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProblem {
    pub seed: BSplineTrajectory,
    pub limits: KinematicLimits,
    pub region: Region,
    pub start: Position2,
    pub goal: Position2,
    pub p_dt: f64,
    pub epsilon: f64,
    pub safety: SafetyModel,
}

impl TrajectoryProblem {
    pub fn new(
        seed: BSplineTrajectory,
        limits: KinematicLimits,
        region: Region,
        mission: &MissionSpec,
        safety: SafetyModel,
    ) -> Self {
        Self { seed, limits, region, start: mission.start, goal: mission.goal, p_dt: mission.p_dt, epsilon: mission.epsilon, safety }
    }
}

/// Objective and scaled residuals for a decision `(control points, t_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    /// Final time, seconds.
    pub objective: f64,
    /// `(p(0) - x_h0, p(t_f) - x_hf)` in kilometers.
    pub equalities: [f64; 4],
    /// `CONSTRAINTS_PER_SAMPLE` residuals per sample, sample-major; feasible
    /// when `≤ 0`.
    pub inequalities: Vec<f64>,
}

struct SampleDerivs {
    g: [f64; CONSTRAINTS_PER_SAMPLE],
    d0: [Position2; CONSTRAINTS_PER_SAMPLE],
    d1: [Position2; CONSTRAINTS_PER_SAMPLE],
    d2: [Position2; CONSTRAINTS_PER_SAMPLE],
    dtf: [f64; CONSTRAINTS_PER_SAMPLE],
}

/// Sampled constraint evaluation for one problem, sample count and margin.
struct Evaluator<'a> {
    problem: &'a TrajectoryProblem,
    basis: SampledBasis,
    degree: usize,
    n_c: usize,
    margin: f64,
    fd_step: f64,
    /// Eliminated control point and end-span weights at `t = 0` and `t = t_f`.
    ends: [(usize, usize, Vec<f64>); 2],
    free: Vec<usize>,
    tf_scale: f64,
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a TrajectoryProblem, n_s: usize, margin: f64, fd_step: f64) -> Result<Self> {
        let degree = problem.seed.degree;
        let n_c = problem.seed.n_c();
        if n_c < 2 * degree + 2 {
            return Err(Error::Underdetermined { points: n_c, controls: 2 * degree + 2 });
        }
        let basis = SampledBasis::uniform(n_c, degree, n_s);
        let eb = SampledBasis::new(n_c, degree, &[0.0, 1.0]);
        let end = |s: usize| {
            let w = eb.weights[0][s].clone();
            let k = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a))).unwrap();
            (eb.first[s], eb.first[s] + k, w)
        };
        let ends = [end(0), end(1)];
        let free = (0..n_c).filter(|&i| i != ends[0].1 && i != ends[1].1).collect();
        Ok(Self { problem, basis, degree, n_c, margin, fd_step, ends, free, tf_scale: problem.seed.duration() })
    }

    fn spans(&self) -> f64 {
        (self.n_c - self.degree) as f64
    }

    fn dim(&self) -> usize {
        2 * self.free.len() + 1
    }

    /// Fills the eliminated control points so the curve starts and ends
    /// exactly at the mission endpoints.
    fn pin_ends(&self, cps: &mut [Position2]) {
        for (k, target) in [(0, self.problem.start), (1, self.problem.goal)] {
            let (first, e, ref w) = self.ends[k];
            let mut acc = target;
            for (a, wa) in w.iter().enumerate() {
                if first + a != e {
                    acc = acc - cps[first + a] * *wa;
                }
            }
            cps[e] = acc * (1.0 / w[e - first]);
        }
    }

    fn decode(&self, z: &[f64]) -> (Vec<Position2>, f64) {
        let mut cps = vec![Position2::ORIGIN; self.n_c];
        for (k, &i) in self.free.iter().enumerate() {
            cps[i] = Position2::new(z[2 * k], z[2 * k + 1]) * LENGTH_SCALE;
        }
        self.pin_ends(&mut cps);
        (cps, z[z.len() - 1] * self.tf_scale)
    }

    fn encode(&self, cps: &[Position2], tf: f64) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for &i in &self.free {
            z.push(cps[i].x / LENGTH_SCALE);
            z.push(cps[i].y / LENGTH_SCALE);
        }
        z.push(tf / self.tf_scale);
        z
    }

    /// Maps a gradient over all control points to the free variables.
    fn reduce(&self, gc: &mut [Position2], g_tf: f64, out: &mut [f64]) {
        for &(first, e, ref w) in &self.ends {
            let ge = gc[e];
            for (a, wa) in w.iter().enumerate() {
                if first + a != e {
                    gc[first + a] = gc[first + a] - ge * (*wa / w[e - first]);
                }
            }
        }
        for (k, &i) in self.free.iter().enumerate() {
            out[2 * k] = gc[i].x * LENGTH_SCALE;
            out[2 * k + 1] = gc[i].y * LENGTH_SCALE;
        }
        out[out.len() - 1] = g_tf * self.tf_scale;
    }

    fn sample(&self, cps: &[Position2], tf: f64, s: usize, grad: bool) -> SampleDerivs {
        let p = self.problem;
        let lim = &p.limits;
        let m = self.margin;
        let delta = tf / self.spans();
        let d0 = self.basis.eval(cps, s, 0);
        let d1 = self.basis.eval(cps, s, 1);
        let d2 = self.basis.eval(cps, s, 2);
        let z = Position2::ORIGIN;
        let mut out = SampleDerivs {
            g: [0.0; CONSTRAINTS_PER_SAMPLE],
            d0: [z; CONSTRAINTS_PER_SAMPLE],
            d1: [z; CONSTRAINTS_PER_SAMPLE],
            d2: [z; CONSTRAINTS_PER_SAMPLE],
            dtf: [0.0; CONSTRAINTS_PER_SAMPLE],
        };
        let r = &p.region;
        let inv_l = 1.0 / LENGTH_SCALE;
        out.g[0] = (r.lower.x - d0.x) * inv_l;
        out.d0[0] = Position2::new(-inv_l, 0.0);
        out.g[1] = (d0.x - r.upper.x) * inv_l;
        out.d0[1] = Position2::new(inv_l, 0.0);
        out.g[2] = (r.lower.y - d0.y) * inv_l;
        out.d0[2] = Position2::new(0.0, -inv_l);
        out.g[3] = (d0.y - r.upper.y) * inv_l;
        out.d0[3] = Position2::new(0.0, inv_l);

        let n = d1.norm();
        let v = n / delta;
        let v_lb = lim.v_lb * (1.0 + m);
        let v_ub = lim.v_ub * (1.0 - m);
        out.g[4] = (v_lb - v) / lim.v_ub;
        out.g[5] = (v - v_ub) / lim.v_ub;
        let (u, kappa) = if n > 1e-12 {
            let c = d1.cross(d2);
            let n2 = n * n;
            (c / (n2 * delta), c / (n2 * n))
        } else {
            (0.0, 0.0)
        };
        let u_lb = lim.u_lb * (1.0 - m);
        let u_ub = lim.u_ub * (1.0 - m);
        let k_ub = lim.kappa_ub * (1.0 - m);
        out.g[6] = (u_lb - u) / lim.u_ub;
        out.g[7] = (u - u_ub) / lim.u_ub;
        out.g[8] = (-kappa - k_ub) / lim.kappa_ub;
        out.g[9] = (kappa - k_ub) / lim.kappa_ub;
        let (gs, gp) = p.safety.residual(d0, p.p_dt, p.epsilon, m, self.fd_step, grad);
        out.g[10] = gs;
        if !grad {
            return out;
        }
        out.d0[10] = gp;
        if n > 1e-12 {
            let dv = d1 * (1.0 / (n * delta));
            out.d1[4] = dv * (-1.0 / lim.v_ub);
            out.dtf[4] = v / (tf * lim.v_ub);
            out.d1[5] = dv * (1.0 / lim.v_ub);
            out.dtf[5] = -v / (tf * lim.v_ub);
            let c = d1.cross(d2);
            let n2 = n * n;
            let dc_d1 = Position2::new(d2.y, -d2.x);
            let dc_d2 = Position2::new(-d1.y, d1.x);
            let du_d1 = (dc_d1 * (1.0 / n2) - d1 * (2.0 * c / (n2 * n2))) * (1.0 / delta);
            let du_d2 = dc_d2 * (1.0 / (n2 * delta));
            let du_dtf = -u / tf;
            out.d1[6] = du_d1 * (-1.0 / lim.u_ub);
            out.d2[6] = du_d2 * (-1.0 / lim.u_ub);
            out.dtf[6] = -du_dtf / lim.u_ub;
            out.d1[7] = du_d1 * (1.0 / lim.u_ub);
            out.d2[7] = du_d2 * (1.0 / lim.u_ub);
            out.dtf[7] = du_dtf / lim.u_ub;
            let n3 = n2 * n;
            let dk_d1 = dc_d1 * (1.0 / n3) - d1 * (3.0 * c / (n3 * n2));
            let dk_d2 = dc_d2 * (1.0 / n3);
            out.d1[8] = dk_d1 * (-1.0 / lim.kappa_ub);
            out.d2[8] = dk_d2 * (-1.0 / lim.kappa_ub);
            out.d1[9] = dk_d1 * (1.0 / lim.kappa_ub);
            out.d2[9] = dk_d2 * (1.0 / lim.kappa_ub);
        }
        out
    }

    /// Adds `coef · ∇g_k` of sample `s` to the control-point gradient and
    /// returns the `t_f` component.
    fn scatter(&self, sd: &SampleDerivs, s: usize, coef: &[f64; CONSTRAINTS_PER_SAMPLE], gc: &mut [Position2]) -> f64 {
        let mut a0 = Position2::ORIGIN;
        let mut a1 = Position2::ORIGIN;
        let mut a2 = Position2::ORIGIN;
        let mut atf = 0.0;
        for k in 0..CONSTRAINTS_PER_SAMPLE {
            if coef[k] == 0.0 {
                continue;
            }
            a0 += sd.d0[k] * coef[k];
            a1 += sd.d1[k] * coef[k];
            a2 += sd.d2[k] * coef[k];
            atf += sd.dtf[k] * coef[k];
        }
        let i0 = self.basis.first[s];
        for a in 0..=self.degree {
            gc[i0 + a] = gc[i0 + a]
                + a0 * self.basis.weights[0][s][a]
                + a1 * self.basis.weights[1][s][a]
                + a2 * self.basis.weights[2][s][a];
        }
        atf
    }

    fn inequalities(&self, cps: &[Position2], tf: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.basis.len() * CONSTRAINTS_PER_SAMPLE);
        for s in 0..self.basis.len() {
            out.extend_from_slice(&self.sample(cps, tf, s, false).g);
        }
        out
    }

    fn max_violation(&self, cps: &[Position2], tf: f64) -> f64 {
        self.inequalities(cps, tf).into_iter().fold(0.0, f64::max)
    }

    /// Augmented Lagrangian value and gradient in scaled variables.
    fn lagrangian(&self, z: &[f64], grad: &mut [f64], nu: &[f64], mu: f64) -> f64 {
        if !(z[z.len() - 1] > 1e-3) {
            return f64::INFINITY;
        }
        let (cps, tf) = self.decode(z);
        let mut value = z[z.len() - 1];
        let mut gc = vec![Position2::ORIGIN; self.n_c];
        let mut g_tf = 1.0 / self.tf_scale;
        for s in 0..self.basis.len() {
            let sd = self.sample(&cps, tf, s, true);
            let mut coef = [0.0; CONSTRAINTS_PER_SAMPLE];
            for k in 0..CONSTRAINTS_PER_SAMPLE {
                let l = nu[s * CONSTRAINTS_PER_SAMPLE + k];
                let a = (l + mu * sd.g[k]).max(0.0);
                value += (a * a - l * l) / (2.0 * mu);
                coef[k] = a;
            }
            g_tf += self.scatter(&sd, s, &coef, &mut gc);
        }
        if !value.is_finite() {
            return f64::INFINITY;
        }
        self.reduce(&mut gc, g_tf, grad);
        value
    }
}

/// Objective and sampled residuals of the raw (untightened) constraints at
/// `N_s + 1` samples.
pub fn assemble_constraints(problem: &TrajectoryProblem, control_points: &[Position2], tf: f64, n_s: usize) -> Result<Assembled> {
    let ev = Evaluator::new(problem, n_s, 0.0, OptimizerConfig::default().fd_step)?;
    if control_points.len() != ev.n_c || !(tf > 0.0) {
        return Err(Error::InvalidConfig("decision does not match the problem".into()));
    }
    let traj = BSplineTrajectory::new(control_points.to_vec(), ev.degree, 0.0, tf)?;
    let p0 = traj.eval(0.0, 0)?;
    let pf = traj.eval(tf, 0)?;
    let inv = 1.0 / LENGTH_SCALE;
    Ok(Assembled {
        objective: tf,
        equalities: [
            (p0.x - problem.start.x) * inv,
            (p0.y - problem.start.y) * inv,
            (pf.x - problem.goal.x) * inv,
            (pf.y - problem.goal.y) * inv,
        ],
        inequalities: ev.inequalities(control_points, tf),
    })
}

/// Jacobian of the sampled inequalities with respect to
/// `(c_1.x, c_1.y, …, c_Nc.x, c_Nc.y, t_f)`, one row per residual.
pub fn constraint_jacobian(problem: &TrajectoryProblem, control_points: &[Position2], tf: f64, n_s: usize) -> Result<Vec<Vec<f64>>> {
    let ev = Evaluator::new(problem, n_s, 0.0, OptimizerConfig::default().fd_step)?;
    let mut rows = Vec::new();
    for s in 0..ev.basis.len() {
        let sd = ev.sample(control_points, tf, s, true);
        for k in 0..CONSTRAINTS_PER_SAMPLE {
            let mut coef = [0.0; CONSTRAINTS_PER_SAMPLE];
            coef[k] = 1.0;
            let mut gc = vec![Position2::ORIGIN; ev.n_c];
            let gtf = ev.scatter(&sd, s, &coef, &mut gc);
            let mut row: Vec<f64> = gc.iter().flat_map(|c| [c.x, c.y]).collect();
            row.push(gtf);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Outcome details of [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Largest raw sampled residual of the returned trajectory.
    pub max_violation: f64,
    /// Final times of successive accepted (feasible, improving) iterates.
    pub objective_history: Vec<f64>,
    pub seed_feasible: bool,
    pub converged: bool,
    /// The outer loop ended without meeting the tolerances; the best
    /// feasible iterate was returned.
    pub stalled: bool,
}

/// Minimizes the final time subject to the sampled constraints.
///
/// Returns the best feasible iterate found, never an infeasible one. The
/// seed may violate the lower speed bound; if neither it nor any iterate is
/// feasible the call fails with [`Error::Infeasible`].
pub fn solve(problem: &TrajectoryProblem, config: &OptimizerConfig) -> Result<(BSplineTrajectory, f64, SolveReport)> {
    config.validate()?;
    problem.limits.validate()?;
    let ev = Evaluator::new(problem, config.n_s, config.margin, config.fd_step)?;
    let raw = Evaluator::new(problem, config.n_s, 0.0, config.fd_step)?;
    let mut z = ev.encode(&problem.seed.control_points, problem.seed.duration());
    let (seed_cps, seed_tf) = ev.decode(&z);
    let seed_violation = raw.max_violation(&seed_cps, seed_tf);
    let seed_feasible = seed_violation <= config.feasibility_tol;
    let mut best: Option<(Vec<Position2>, f64, f64)> = seed_feasible.then(|| (seed_cps.clone(), seed_tf, seed_violation));
    let mut history = if seed_feasible { vec![seed_tf] } else { Vec::new() };

    let m = ev.basis.len() * CONSTRAINTS_PER_SAMPLE;
    let mut nu = vec![0.0; m];
    let mut mu = config.initial_penalty;
    let mut prev_violation = f64::INFINITY;
    let mut prev_tf = seed_tf;
    let mut inner_total = 0;
    let mut converged = false;
    let mut outer = 0;
    let opts = LbfgsOptions { max_iters: config.max_inner, grad_tol: config.optimality_tol, f_tol: 1e-12, memory: 10 };
    while outer < config.max_outer {
        outer += 1;
        let res = minimize(|x, g| ev.lagrangian(x, g, &nu, mu), &mut z, opts);
        inner_total += res.iterations;
        let (cps, tf) = ev.decode(&z);
        let g = ev.inequalities(&cps, tf);
        let violation = g.iter().copied().fold(0.0, f64::max);
        let raw_violation = raw.max_violation(&cps, tf);
        if raw_violation <= config.feasibility_tol && best.as_ref().is_none_or(|b| tf < b.1) {
            history.push(tf);
            best = Some((cps.clone(), tf, raw_violation));
        }
        for (l, gk) in nu.iter_mut().zip(&g) {
            *l = (*l + mu * gk).max(0.0);
        }
        let settled = ((prev_tf - tf) / tf).abs() <= config.optimality_tol;
        if violation <= config.feasibility_tol && settled {
            converged = true;
            break;
        }
        if violation > 0.25 * prev_violation {
            mu = (mu * config.penalty_growth).min(1e9);
        }
        prev_violation = violation;
        prev_tf = tf;
    }
    let Some((cps, tf, max_violation)) = best else {
        return Err(Error::Infeasible("trajectory optimization"));
    };
    let report = SolveReport {
        outer_iterations: outer,
        inner_iterations: inner_total,
        max_violation,
        objective_history: history,
        seed_feasible,
        converged,
        stalled: !converged,
    };
    Ok((BSplineTrajectory::new(cps, problem.seed.degree, 0.0, tf)?, tf, report))
}

/// Re-check of a trajectory at `factor · N_s + 1` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseCheck {
    /// Largest raw scaled residual over all sampled constraints.
    pub max_violation: f64,
    /// Worst safety value: max PD, or min chance for the uncertain model.
    pub worst_safety: Option<f64>,
    pub feasible: bool,
}

/// Evaluates the raw constraints of `problem` on `traj` at a denser grid.
pub fn dense_check(problem: &TrajectoryProblem, traj: &BSplineTrajectory, n_samples: usize, tol: f64) -> Result<DenseCheck> {
    let mut p = problem.clone();
    p.seed = traj.clone();
    let ev = Evaluator::new(&p, n_samples, 0.0, OptimizerConfig::default().fd_step)?;
    let g = ev.inequalities(&traj.control_points, traj.duration());
    let max_violation = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst_safety = match &problem.safety {
        SafetyModel::None => None,
        SafetyModel::Deterministic { .. } => {
            Some(g.chunks(CONSTRAINTS_PER_SAMPLE).map(|c| c[10] * problem.p_dt + problem.p_dt).fold(0.0, f64::max))
        }
        SafetyModel::Uncertain { .. } => {
            Some(g.chunks(CONSTRAINTS_PER_SAMPLE).map(|c| problem.epsilon - c[10]).fold(1.0, f64::min))
        }
    };
    Ok(DenseCheck { max_violation, worst_safety, feasible: max_violation <= tol })
}

/// Stretches the final time until the peak speed is at most `0.95 v_ub`.
pub fn enforce_velocity_heuristic(traj: &BSplineTrajectory, limits: &KinematicLimits) -> Result<BSplineTrajectory> {
    let target = 0.95 * limits.v_ub;
    let mut out = traj.clone();
    for _ in 0..50 {
        let (v_max, _) = out.max_speed(1000);
        if v_max <= target * (1.0 + 1e-12) {
            break;
        }
        out = out.retime(out.duration() * v_max / target)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MissionConfig;

    fn problem(safety: SafetyModel) -> TrajectoryProblem {
        let region = Region::new(Position2::ORIGIN, Position2::new(22_000.0, 22_000.0)).unwrap();
        let mission = MissionSpec::new(&region, MissionConfig::default()).unwrap();
        let cps: Vec<Position2> = (0..12)
            .map(|i| {
                let f = (i as f64 - 1.0) / 9.0;
                Position2::new(22_000.0 * f, 22_000.0 * f + 3000.0 * (f * std::f64::consts::PI).sin())
            })
            .collect();
        let seed = BSplineTrajectory::new(cps, 3, 0.0, 300.0).unwrap();
        TrajectoryProblem::new(seed, KinematicLimits::default(), region, &mission, safety)
    }

    #[test]
    fn lagrangian_gradient_matches_central_differences() {
        let radars = vec![DetectionParams {
            position: Position2::new(9_000.0, 12_000.0),
            erp: 2e5,
            g_r: 10.0,
            lambda: 0.0999,
            tau_p: 1.1e-5,
            t_s: 745.0,
            loss: 1.0,
            p_fa: 1e-4,
        }];
        let p = problem(SafetyModel::Deterministic { radars, sigma: 0.1 });
        let ev = Evaluator::new(&p, 40, 0.01, 0.5).unwrap();
        let z = ev.encode(&p.seed.control_points, 300.0);
        let nu: Vec<f64> = (0..41 * CONSTRAINTS_PER_SAMPLE).map(|k| (k % 7) as f64 * 0.1).collect();
        let mut g = vec![0.0; z.len()];
        ev.lagrangian(&z, &mut g, &nu, 50.0);
        let mut scratch = vec![0.0; z.len()];
        for i in 0..z.len() {
            let h = 1e-6;
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let fd = (ev.lagrangian(&zp, &mut scratch, &nu, 50.0) - ev.lagrangian(&zm, &mut scratch, &nu, 50.0)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1.0), "component {i}: analytic {} fd {fd}", g[i]);
        }
    }

    #[test]
    fn pinned_ends_hit_start_and_goal() {
        let p = problem(SafetyModel::None);
        let ev = Evaluator::new(&p, 20, 0.0, 0.5).unwrap();
        let z = ev.encode(&p.seed.control_points, 300.0);
        let (cps, tf) = ev.decode(&z);
        let t = BSplineTrajectory::new(cps, 3, 0.0, tf).unwrap();
        assert!(t.eval(0.0, 0).unwrap().distance(p.start) < 1e-9);
        assert!(t.eval(tf, 0).unwrap().distance(p.goal) < 1e-9);
    }
}
