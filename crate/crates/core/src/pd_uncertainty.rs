//! First-order propagation of parameter uncertainty through the overall
//! probability-of-detection map.
//!
//! Three independent Gaussian parameter groups enter the detection equation:
//! the agent's own parameters `(σ, x, y)`, the unobservable radar parameters
//! `(P_fa, G_R, λ, τ_p, T_s)` described by a prior, and the estimated
//! `(x_r, y_r, P_E)` of every discovered radar. The PD is linearized about the
//! means, giving a Gaussian belief over the true PD.

use std::f64::consts::{LN_10, PI};

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::config::{db_to_linear, RadarRanges};
use crate::error::{Error, Result};
use crate::estimator::RadarEstimate;
use crate::geometry::Position2;
use crate::radar::BOLTZMANN;

pub type Vector5 = nalgebra::SVector<f64, 5>;
pub type Matrix5 = SMatrix<f64, 5, 5>;

const FOUR_PI_CUBE: f64 = 64.0 * PI * PI * PI;

/// Prior over the unobservable radar parameters `(P_fa, G_R, λ, τ_p, T_s)`,
/// shared by every radar. The path loss is a fixed, known scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnknownPrior {
    pub mean: Vector5,
    pub cov: Matrix5,
    pub loss: f64,
}

impl UnknownPrior {
    /// Prior centred on the nominal radar values with 10 % standard
    /// deviations, except `P_fa` which gets half a decade in log space,
    /// linearized to `0.5 ln(10) μ`.
    pub fn from_ranges(r: &RadarRanges) -> Self {
        let mean = Vector5::new(r.p_fa, db_to_linear(r.g_r_db), r.lambda, r.tau_p, r.t_s);
        let mut std = mean * 0.1;
        std[0] = 0.5 * LN_10 * r.p_fa;
        Self { mean, cov: Matrix5::from_diagonal(&std.component_mul(&std)), loss: db_to_linear(r.l_db) }
    }

    pub fn with_zero_covariance(mut self) -> Self {
        self.cov = Matrix5::zeros();
        self
    }
}

/// Gaussian belief over the agent's own parameters `(σ, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownParamBelief {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl KnownParamBelief {
    /// Independent RCS and position uncertainty.
    pub fn new(sigma: f64, position: Position2, sigma_std: f64, position_std: f64) -> Self {
        Self {
            mean: Vector3::new(sigma, position.x, position.y),
            cov: Matrix3::from_diagonal(&Vector3::new(
                sigma_std * sigma_std,
                position_std * position_std,
                position_std * position_std,
            )),
        }
    }

    pub fn position(&self) -> Position2 {
        Position2::new(self.mean[1], self.mean[2])
    }

    pub fn sigma(&self) -> f64 {
        self.mean[0]
    }

    pub fn at(&self, p: Position2) -> Self {
        let mut out = *self;
        out.mean[1] = p.x;
        out.mean[2] = p.y;
        out
    }
}

/// Gaussian approximation of the true PD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdBelief {
    pub mean: f64,
    pub variance: f64,
}

/// Row Jacobians of the overall PD at the stacked means.
#[derive(Debug, Clone, PartialEq)]
pub struct PdJacobians {
    pub pd: f64,
    /// With respect to `(σ, x, y)`.
    pub j_k: Vector3<f64>,
    /// With respect to `(P_fa, G_R, λ, τ_p, T_s)` of each radar.
    pub j_u: Vec<Vector5>,
    /// With respect to `(x_r, y_r, P_E)` of each radar.
    pub j_e: Vec<Vector3<f64>>,
}

impl PdJacobians {
    pub fn j_u_stacked(&self) -> Vec<f64> {
        self.j_u.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn j_e_stacked(&self) -> Vec<f64> {
        self.j_e.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

/// Single-radar PD and its gradients.
#[derive(Debug, Clone, Copy)]
pub struct RadarPdGrad {
    pub pd: f64,
    pub d_known: Vector3<f64>,
    pub d_unknown: Vector5,
    pub d_estimated: Vector3<f64>,
}

/// PD of one radar at the given parameters, with analytic gradients.
pub fn radar_pd_grad(known: &Vector3<f64>, unknown: &Vector5, estimated: &Vector3<f64>, loss: f64) -> Result<RadarPdGrad> {
    let (sigma, xa, ya) = (known[0], known[1], known[2]);
    let (p_fa, g_r, lambda, tau_p, t_s) = (unknown[0], unknown[1], unknown[2], unknown[3], unknown[4]);
    let (xr, yr, p_e) = (estimated[0], estimated[1], estimated[2]);
    let (dx, dy) = (xa - xr, ya - yr);
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        return Err(Error::ZeroRange);
    }
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p_fa));
    }
    let s = p_e * g_r * lambda * lambda * sigma * tau_p / (FOUR_PI_CUBE * r2 * r2 * BOLTZMANN * t_s * loss);
    let ln_pfa = p_fa.ln();
    let pd = (ln_pfa / (s + 1.0)).exp();
    let dp_ds = pd * (-ln_pfa) / ((s + 1.0) * (s + 1.0));
    let dp_dpfa = pd / (p_fa * (s + 1.0));
    let ds_dxa = -4.0 * s * dx / r2;
    let ds_dya = -4.0 * s * dy / r2;
    let d_known = Vector3::new(dp_ds * s / sigma, dp_ds * ds_dxa, dp_ds * ds_dya);
    let d_unknown = Vector5::new(
        dp_dpfa,
        dp_ds * s / g_r,
        dp_ds * 2.0 * s / lambda,
        dp_ds * s / tau_p,
        -dp_ds * s / t_s,
    );
    let d_estimated = Vector3::new(-dp_ds * ds_dxa, -dp_ds * ds_dya, dp_ds * s / p_e);
    Ok(RadarPdGrad { pd, d_known, d_unknown, d_estimated })
}

/// Overall PD `1 - Π(1 - p_j)` evaluated at the stacked means.
pub fn pd_mean(known: &KnownParamBelief, prior: &UnknownPrior, estimates: &[RadarEstimate]) -> Result<f64> {
    let mut miss = 1.0;
    for e in estimates {
        miss *= 1.0 - radar_pd_grad(&known.mean, &prior.mean, &e.mean, prior.loss)?.pd;
    }
    Ok(1.0 - miss)
}

/// Row Jacobians of the overall PD with respect to the known, unknown and
/// estimated parameter groups.
pub fn pd_jacobians(known: &KnownParamBelief, prior: &UnknownPrior, estimates: &[RadarEstimate]) -> Result<PdJacobians> {
    if estimates.is_empty() {
        return Err(Error::Empty("radar estimates"));
    }
    let grads = estimates
        .iter()
        .map(|e| radar_pd_grad(&known.mean, &prior.mean, &e.mean, prior.loss))
        .collect::<Result<Vec<_>>>()?;
    let n = grads.len();
    // Products of (1 - p_k) over all k except j, via prefix and suffix products.
    let mut prefix = vec![1.0; n + 1];
    for j in 0..n {
        prefix[j + 1] = prefix[j] * (1.0 - grads[j].pd);
    }
    let mut suffix = vec![1.0; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] * (1.0 - grads[j].pd);
    }
    let mut j_k = Vector3::zeros();
    let mut j_u = Vec::with_capacity(n);
    let mut j_e = Vec::with_capacity(n);
    for (j, g) in grads.iter().enumerate() {
        let w = prefix[j] * suffix[j + 1];
        j_k += g.d_known * w;
        j_u.push(g.d_unknown * w);
        j_e.push(g.d_estimated * w);
    }
    Ok(PdJacobians { pd: 1.0 - prefix[n], j_k, j_u, j_e })
}

/// Mean and linearized variance of the overall PD.
pub fn pd_belief(known: &KnownParamBelief, prior: &UnknownPrior, estimates: &[RadarEstimate]) -> Result<PdBelief> {
    if estimates.is_empty() {
        return Ok(PdBelief { mean: 0.0, variance: 0.0 });
    }
    let jac = pd_jacobians(known, prior, estimates)?;
    let mut variance = (jac.j_k.transpose() * known.cov * jac.j_k)[0];
    for (ju, (je, e)) in jac.j_u.iter().zip(jac.j_e.iter().zip(estimates)) {
        variance += (ju.transpose() * prior.cov * ju)[0];
        variance += (je.transpose() * e.cov * je)[0];
    }
    Ok(PdBelief { mean: jac.pd, variance: variance.max(0.0) })
}

/// Belief over the PD of a single radar, as used to label generalized
/// Voronoi cells.
pub fn single_radar_belief(known: &KnownParamBelief, prior: &UnknownPrior, estimate: &RadarEstimate) -> Result<PdBelief> {
    pd_belief(known, prior, std::slice::from_ref(estimate))
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability that the true PD is at most `threshold` under `belief`.
pub fn prob_pd_below(belief: &PdBelief, threshold: f64) -> f64 {
    if belief.variance <= 0.0 {
        return if belief.mean <= threshold { 1.0 } else { 0.0 };
    }
    std_normal_cdf((threshold - belief.mean) / belief.variance.sqrt())
}

/// Standardized margin `(threshold - mean) / std`; infinite for a
/// degenerate belief. Monotone in [`prob_pd_below`] but does not saturate.
pub fn pd_margin_z(belief: &PdBelief, threshold: f64) -> f64 {
    if belief.variance <= 0.0 {
        let d = threshold - belief.mean;
        return if d >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    (threshold - belief.mean) / belief.variance.sqrt()
}

/// `P(P_D ≤ threshold)` at a point for all estimated radars.
pub fn chance_at(
    known: &KnownParamBelief,
    prior: &UnknownPrior,
    estimates: &[RadarEstimate],
    threshold: f64,
) -> Result<f64> {
    Ok(prob_pd_below(&pd_belief(known, prior, estimates)?, threshold))
}
