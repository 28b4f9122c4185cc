//! Radar physics: intercepted power, detection SNR, probability of detection,
//! noisy measurements and the intercept model.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Position2};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;

const FOUR_PI_SQ: f64 = 16.0 * PI * PI;
const FOUR_PI_CUBE: f64 = 64.0 * PI * PI * PI;

/// Ground-truth radar. Gains and loss are linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarTruth {
    pub position: Position2,
    pub p_t: f64,
    pub g_t: f64,
    pub g_r: f64,
    pub lambda: f64,
    pub tau_p: f64,
    pub t_s: f64,
    pub loss: f64,
    pub p_fa: f64,
}

impl RadarTruth {
    /// Effective radiated power `P_T G_T / L`.
    pub fn erp(&self) -> f64 {
        erp(self)
    }

    /// Parameters that enter the detection equation.
    pub fn detection(&self) -> DetectionParams {
        DetectionParams {
            position: self.position,
            erp: self.erp(),
            g_r: self.g_r,
            lambda: self.lambda,
            tau_p: self.tau_p,
            t_s: self.t_s,
            loss: self.loss,
            p_fa: self.p_fa,
        }
    }
}

/// Effective radiated power `P_T G_T / L`.
pub fn erp(radar: &RadarTruth) -> f64 {
    radar.p_t * radar.g_t / radar.loss
}

/// Radar parameters as seen by the detection equation, with transmit power
/// and gain folded into the ERP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub position: Position2,
    pub erp: f64,
    pub g_r: f64,
    pub lambda: f64,
    pub tau_p: f64,
    pub t_s: f64,
    pub loss: f64,
    pub p_fa: f64,
}

impl DetectionParams {
    /// SNR times `R⁴`: the range-independent part of the detection SNR.
    pub fn snr_r4(&self, sigma: f64) -> f64 {
        self.erp * self.g_r * self.lambda * self.lambda * sigma * self.tau_p
            / (FOUR_PI_CUBE * BOLTZMANN * self.t_s * self.loss)
    }

    pub fn snr_at(&self, sigma: f64, at: Position2) -> Result<f64> {
        let r2 = at.distance_sq(self.position);
        if r2 == 0.0 {
            return Err(Error::ZeroRange);
        }
        Ok(self.snr_r4(sigma) / (r2 * r2))
    }

    pub fn pd_at(&self, sigma: f64, at: Position2) -> Result<f64> {
        pd_single(self.snr_at(sigma, at)?, self.p_fa)
    }
}

/// Agent parameters that are known to the planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownAgentParams {
    /// Radar cross section, m².
    pub sigma: f64,
    pub position: Position2,
    /// Linear intercept antenna gain.
    pub g_i: f64,
}

impl KnownAgentParams {
    pub fn at(&self, position: Position2) -> Self {
        Self { position, ..*self }
    }
}

/// Gaussian measurement noise on received power and angle of arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_se: f64,
    pub sigma_phi: f64,
}

impl NoiseModel {
    pub fn new(sigma_se: f64, sigma_phi: f64) -> Self {
        Self { sigma_se, sigma_phi }
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self::new(cfg.sigma_se, cfg.sigma_phi())
    }

    /// Diagonal measurement covariance `diag(σ_SE², σ_φ²)`.
    pub fn sigma_z(&self) -> nalgebra::Matrix2<f64> {
        nalgebra::Matrix2::new(self.sigma_se * self.sigma_se, 0.0, 0.0, self.sigma_phi * self.sigma_phi)
    }
}

/// One received-power and angle-of-arrival observation of a radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Received power, watts.
    pub s_e: f64,
    /// Angle of arrival in `(-π, π]`.
    pub phi: f64,
    pub location: Position2,
    pub agent_id: usize,
    pub radar_id: usize,
    pub time: f64,
}

/// Power received by the agent's intercept antenna from `radar`.
pub fn intercept_power(agent: &KnownAgentParams, radar: &RadarTruth) -> Result<f64> {
    let r2 = agent.position.distance_sq(radar.position);
    if r2 == 0.0 {
        return Err(Error::ZeroRange);
    }
    Ok(received_power(radar.erp(), agent.g_i, radar.lambda, r2))
}

/// `P_E G_I λ² / ((4π)² R²)`.
pub fn received_power(erp: f64, g_i: f64, lambda: f64, range_sq: f64) -> f64 {
    erp * g_i * lambda * lambda / (FOUR_PI_SQ * range_sq)
}

/// Signal-to-noise ratio of the agent's skin return at `radar`.
pub fn detection_snr(agent: &KnownAgentParams, radar: &RadarTruth) -> Result<f64> {
    radar.detection().snr_at(agent.sigma, agent.position)
}

/// Single-look detection probability `exp(ln P_fa / (SNR + 1))`.
pub fn pd_single(snr: f64, p_fa: f64) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p_fa));
    }
    Ok((p_fa.ln() / (snr + 1.0)).exp())
}

/// Probability that at least one radar detects the agent.
pub fn pd_overall(agent: &KnownAgentParams, radars: &[RadarTruth]) -> Result<f64> {
    let mut miss = 1.0;
    for r in radars {
        miss *= 1.0 - pd_single(detection_snr(agent, r)?, r.p_fa)?;
    }
    Ok(1.0 - miss)
}

/// Same as [`pd_overall`] for pre-extracted detection parameters.
pub fn pd_overall_params(sigma: f64, at: Position2, radars: &[DetectionParams]) -> Result<f64> {
    let mut miss = 1.0;
    for r in radars {
        miss *= 1.0 - r.pd_at(sigma, at)?;
    }
    Ok(1.0 - miss)
}

/// Noise-free measurement `(S_E, φ)` of `radar` from the agent's position.
pub fn measurement_mean(agent: &KnownAgentParams, radar: &RadarTruth) -> Result<(f64, f64)> {
    let s = intercept_power(agent, radar)?;
    Ok((s, agent.position.bearing_to(radar.position)))
}

/// Draws a noisy measurement of `radar`.
pub fn sample_measurement<R: Rng + ?Sized>(
    agent: &KnownAgentParams,
    radar: &RadarTruth,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Measurement> {
    let (s, phi) = measurement_mean(agent, radar)?;
    let ds = gaussian(rng, noise.sigma_se);
    let dphi = gaussian(rng, noise.sigma_phi);
    Ok(Measurement {
        s_e: s + ds,
        phi: wrap_angle(phi + dphi),
        location: agent.position,
        agent_id: 0,
        radar_id: 0,
        time: 0.0,
    })
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    } else {
        0.0
    }
}

/// Parameters of the intercept model: what an agent assumes about a radar
/// it might pick up, plus the intercept discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterceptModel {
    pub erp: f64,
    pub g_i: f64,
    pub lambda: f64,
    pub tau_p: f64,
    pub t_s: f64,
    pub p_fa: f64,
    pub delta: f64,
}

impl InterceptModel {
    /// Model for an undiscovered radar with the configured default parameters.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let r = &cfg.radar;
        Self {
            erp: cfg.intercept_p_t * crate::config::db_to_linear(cfg.intercept_g_t_db)
                / crate::config::db_to_linear(r.l_db),
            g_i: cfg.g_i(),
            lambda: r.lambda,
            tau_p: r.tau_p,
            t_s: r.t_s,
            p_fa: r.p_fa,
            delta: cfg.delta_l,
        }
    }

    /// Model for a known radar, used to trigger intercepts in simulation.
    pub fn for_radar(radar: &RadarTruth, g_i: f64, delta: f64) -> Self {
        Self {
            erp: radar.erp(),
            g_i,
            lambda: radar.lambda,
            tau_p: radar.tau_p,
            t_s: radar.t_s,
            p_fa: radar.p_fa,
            delta,
        }
    }

    /// Intercept SNR times squared range.
    pub fn snr_d2(&self) -> f64 {
        self.erp * self.g_i * self.lambda * self.lambda * self.tau_p
            / (FOUR_PI_SQ * BOLTZMANN * self.t_s * self.delta)
    }

    /// Intercept probability at squared range `d2`; 1 at zero range.
    pub fn probability_d2(&self, d2: f64) -> f64 {
        if d2 == 0.0 {
            return 1.0;
        }
        (self.p_fa.ln() / (self.snr_d2() / d2 + 1.0)).exp()
    }

    /// `ln(1 - P_intercept)` at squared range `d2`, accurate when the
    /// intercept probability is close to one.
    pub fn ln_miss_d2(&self, d2: f64) -> f64 {
        if d2 == 0.0 {
            return f64::NEG_INFINITY;
        }
        let x = self.p_fa.ln() / (self.snr_d2() / d2 + 1.0);
        (-x.exp_m1()).ln()
    }
}

/// Probability that an agent at `agent_pos` would intercept a radar at
/// `candidate_radar_pos` with the configured default radar parameters.
pub fn intercept_probability(agent_pos: Position2, candidate_radar_pos: Position2, config: &ScenarioConfig) -> f64 {
    InterceptModel::from_config(config).probability_d2(agent_pos.distance_sq(candidate_radar_pos))
}
