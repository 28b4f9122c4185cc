//! Scenario, mission and planner configuration.
//!
//! Every struct here has defaults matching the nominal simulation parameters
//! (22 km square region, 13 radars, 15 % detection threshold, ...). The
//! aggregate [`Config`] round-trips through TOML; key names follow the usual
//! radar-equation symbols (`p_t`, `g_t`, `tau_p`, `t_s`, `p_fa`, ...).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Position2, Region};

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Sampling ranges and fixed values for ground-truth radar parameters.
///
/// Gains and losses are given in dB here and converted once when radars are
/// generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarRanges {
    /// Transmit power bounds, watts.
    pub p_t_l: f64,
    pub p_t_u: f64,
    /// Transmit gain bounds, dB.
    pub g_t_l_db: f64,
    pub g_t_u_db: f64,
    /// Receive gain, dB.
    pub g_r_db: f64,
    /// Path loss, dB.
    pub l_db: f64,
    /// Wavelength, meters.
    pub lambda: f64,
    /// Pulse width, seconds.
    pub tau_p: f64,
    /// System temperature, kelvin.
    pub t_s: f64,
    /// Probability of false alarm.
    pub p_fa: f64,
}

impl Default for RadarRanges {
    fn default() -> Self {
        Self {
            p_t_l: 0.0,
            p_t_u: 20_000.0,
            g_t_l_db: 0.0,
            g_t_u_db: 20.0,
            g_r_db: 10.0,
            l_db: 0.0,
            lambda: 0.0999,
            tau_p: 1.1e-5,
            t_s: 745.0,
            p_fa: 1e-4,
        }
    }
}

impl RadarRanges {
    pub fn validate(&self) -> Result<()> {
        if self.p_t_l > self.p_t_u {
            return Err(Error::DegenerateRange { name: "p_t", lower: self.p_t_l, upper: self.p_t_u });
        }
        if self.g_t_l_db > self.g_t_u_db {
            return Err(Error::DegenerateRange {
                name: "g_t_db",
                lower: self.g_t_l_db,
                upper: self.g_t_u_db,
            });
        }
        if self.p_t_l < 0.0 {
            return Err(Error::InvalidConfig("p_t_l must be non-negative".into()));
        }
        for (name, v) in [("lambda", self.lambda), ("tau_p", self.tau_p), ("t_s", self.t_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(Error::ProbabilityOutOfRange(self.p_fa));
        }
        Ok(())
    }
}

/// Everything needed to generate and simulate one random scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub region: Region,
    pub radar_count: usize,
    pub radar: RadarRanges,
    /// Number of low-priority agents.
    pub n_l: usize,
    /// Low-priority agent speed, m/s.
    pub v_l: f64,
    /// Agent intercept antenna gain, dB.
    pub g_i_db: f64,
    /// Agent radar cross section, m².
    pub sigma: f64,
    /// Received-power measurement noise standard deviation, watts.
    pub sigma_se: f64,
    /// Angle-of-arrival noise standard deviation, degrees.
    pub sigma_phi_deg: f64,
    /// Path history period, seconds.
    pub dt_e: f64,
    /// Re-plan horizon, seconds.
    pub t_h: f64,
    /// Intercept loss discount.
    pub delta_l: f64,
    /// Covariance objective normalizer.
    pub d_cov: f64,
    /// Prior probability that a radar sits at any given location.
    pub prior_phi: f64,
    /// Transmit power assumed for undiscovered radars, watts.
    pub intercept_p_t: f64,
    /// Transmit gain assumed for undiscovered radars, dB.
    pub intercept_g_t_db: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            region: Region { lower: Position2::new(0.0, 0.0), upper: Position2::new(22_000.0, 22_000.0) },
            radar_count: 13,
            radar: RadarRanges::default(),
            n_l: 10,
            v_l: 50.0,
            g_i_db: 1.0,
            sigma: 0.1,
            sigma_se: 1e-6,
            sigma_phi_deg: 2.0,
            dt_e: 5.0,
            t_h: 20.0,
            delta_l: 1000.0,
            d_cov: 1e14,
            prior_phi: 0.5,
            intercept_p_t: 10_000.0,
            intercept_g_t_db: 10.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        self.radar.validate()?;
        let positive = [
            ("v_l", self.v_l),
            ("sigma", self.sigma),
            ("sigma_se", self.sigma_se),
            ("sigma_phi_deg", self.sigma_phi_deg),
            ("dt_e", self.dt_e),
            ("t_h", self.t_h),
            ("delta_l", self.delta_l),
            ("d_cov", self.d_cov),
            ("intercept_p_t", self.intercept_p_t),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.prior_phi > 0.0 && self.prior_phi < 1.0) {
            return Err(Error::ProbabilityOutOfRange(self.prior_phi));
        }
        Ok(())
    }

    /// Angle-of-arrival noise standard deviation in radians.
    pub fn sigma_phi(&self) -> f64 {
        self.sigma_phi_deg.to_radians()
    }

    /// Linear intercept antenna gain.
    pub fn g_i(&self) -> f64 {
        db_to_linear(self.g_i_db)
    }
}

/// Velocity, turn-rate and curvature limits of the high-priority agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicLimits {
    pub v_lb: f64,
    pub v_ub: f64,
    pub u_lb: f64,
    pub u_ub: f64,
    pub kappa_ub: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self { v_lb: 100.0, v_ub: 134.0, u_lb: -5.0, u_ub: 5.0, kappa_ub: 0.1 }
    }
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.v_lb && self.v_lb < self.v_ub) {
            return Err(Error::InvalidConfig("need 0 < v_lb < v_ub".into()));
        }
        if !(self.u_lb < 0.0 && 0.0 < self.u_ub) {
            return Err(Error::InvalidConfig("need u_lb < 0 < u_ub".into()));
        }
        if !(self.kappa_ub > 0.0) {
            return Err(Error::InvalidConfig("kappa_ub must be positive".into()));
        }
        Ok(())
    }
}

/// Serialized form of a [`MissionSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub start: Position2,
    pub goal: Position2,
    pub p_dt: f64,
    pub epsilon: f64,
    pub p_s: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            start: Position2::new(0.0, 0.0),
            goal: Position2::new(22_000.0, 22_000.0),
            p_dt: 0.15,
            epsilon: 0.9,
            // Just below the uninformative prior: unexplored stretches block
            // dispatch, any silent pass nearby clears them.
            p_s: 0.5 - 1e-3,
        }
    }
}

/// High-priority mission: endpoints and safety thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionSpec {
    pub start: Position2,
    pub goal: Position2,
    /// Detection-probability threshold.
    pub p_dt: f64,
    /// Chance-constraint confidence.
    pub epsilon: f64,
    /// Undiscovered-radar dispatch gate.
    pub p_s: f64,
    /// Largest distance from the goal to any point of the region.
    pub d_max: f64,
}

impl MissionSpec {
    pub fn new(region: &Region, cfg: MissionConfig) -> Result<Self> {
        for p in [cfg.p_dt, cfg.epsilon] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::ProbabilityOutOfRange(p));
            }
        }
        if !(cfg.p_s > 0.0 && cfg.p_s <= 1.0) {
            return Err(Error::ProbabilityOutOfRange(cfg.p_s));
        }
        if !region.contains(cfg.start) || !region.contains(cfg.goal) {
            return Err(Error::InvalidConfig("start and goal must lie inside the region".into()));
        }
        Ok(Self {
            start: cfg.start,
            goal: cfg.goal,
            p_dt: cfg.p_dt,
            epsilon: cfg.epsilon,
            p_s: cfg.p_s,
            d_max: region.max_distance_from(cfg.goal),
        })
    }

    pub fn to_config(&self) -> MissionConfig {
        MissionConfig {
            start: self.start,
            goal: self.goal,
            p_dt: self.p_dt,
            epsilon: self.epsilon,
            p_s: self.p_s,
        }
    }
}

/// Weights of the low-priority objective (exploration, uncertainty, goal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerWeights {
    pub alpha_e: f64,
    pub alpha_u: f64,
    pub alpha_s: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self::BEST
    }
}

impl PlannerWeights {
    /// Best-performing triple of the weight sweep.
    pub const BEST: PlannerWeights = PlannerWeights { alpha_e: 0.25, alpha_u: 0.667, alpha_s: 0.083 };

    pub fn new(alpha_e: f64, alpha_u: f64, alpha_s: f64) -> Result<Self> {
        let w = Self { alpha_e, alpha_u, alpha_s };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.alpha_e, self.alpha_u, self.alpha_s].iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidConfig("planner weights must be non-negative".into()));
        }
        if self.alpha_e + self.alpha_u + self.alpha_s <= 0.0 {
            return Err(Error::InvalidConfig("planner weights must not all be zero".into()));
        }
        Ok(())
    }

    /// Rescales so the weights sum to one.
    pub fn normalized(&self) -> Self {
        let s = self.alpha_e + self.alpha_u + self.alpha_s;
        Self { alpha_e: self.alpha_e / s, alpha_u: self.alpha_u / s, alpha_s: self.alpha_s / s }
    }

    /// Evenly spaced grid on the simplex with `divisions` steps per side.
    pub fn simplex_grid(divisions: usize) -> Vec<PlannerWeights> {
        let n = divisions.max(1);
        let mut out = Vec::new();
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = n - i - j;
                out.push(PlannerWeights {
                    alpha_e: i as f64 / n as f64,
                    alpha_u: j as f64 / n as f64,
                    alpha_s: k as f64 / n as f64,
                });
            }
        }
        out
    }
}

/// Numerical settings of the high-priority planners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpConfig {
    /// Number of B-spline control points.
    pub n_c: usize,
    /// B-spline degree.
    pub degree: usize,
    /// Number of constraint sample intervals.
    pub n_s: usize,
    /// Spatial sampling step of the roadmap path before fitting, meters.
    pub dx: f64,
    /// Grid resolution (points per side) of the generalized diagram.
    pub grid_n: usize,
    /// Sample intervals per edge when trimming.
    pub samples_per_edge: usize,
    /// Nearest-vertex candidates when attaching start and goal.
    pub attach_k: usize,
    /// Re-solves with larger constraint back-off when dense verification fails.
    pub verify_retries: usize,
}

impl Default for HpConfig {
    fn default() -> Self {
        Self {
            n_c: 40,
            degree: 3,
            n_s: 100,
            dx: 100.0,
            grid_n: 201,
            samples_per_edge: 32,
            attach_k: 5,
            verify_retries: 3,
        }
    }
}

/// Mission-engine settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Mission time cap, seconds.
    pub t_max: f64,
    /// Integration step, seconds.
    pub dt: f64,
    /// Measurement tick period, seconds.
    pub measurement_period: f64,
    /// Minimum measurement count before a track is initialized.
    pub n_z_min: usize,
    /// Waypoint arrival radius, meters.
    pub arrival_radius: f64,
    /// Region coverage fraction that enables high-priority attempts without
    /// any radar estimate.
    pub coverage_to_attempt: f64,
    /// Standard deviation of the agent's radar cross section belief, m².
    pub rcs_std: f64,
    /// Standard deviation of the agent's position belief, meters.
    pub position_std: f64,
    /// Largest undiscovered-radar posterior allowed between lawnmower rungs.
    pub lawnmower_threshold: f64,
    /// Smallest rung spacing of the lawnmower passes, meters.
    pub lawnmower_min_spacing: f64,
    /// Redraw radar layouts until a safe route exists with known radars.
    pub require_passable: bool,
    /// Layout draws before giving up on a passable layout.
    pub max_layout_draws: usize,
    /// Start scouts at the bottom-edge centers of their strips instead of
    /// all at the high-priority start.
    pub spread_start: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_max: 1200.0,
            dt: 1.0,
            measurement_period: 1.0,
            n_z_min: 5,
            arrival_radius: 100.0,
            coverage_to_attempt: 0.1,
            rcs_std: 0.01,
            position_std: 10.0,
            lawnmower_threshold: 0.05,
            lawnmower_min_spacing: 250.0,
            require_passable: true,
            max_layout_draws: 200,
            spread_start: true,
        }
    }
}

/// Aggregate configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub mission: MissionConfig,
    pub limits: KinematicLimits,
    pub weights: PlannerWeights,
    pub hp: HpConfig,
    pub sim: SimConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.limits.validate()?;
        self.weights.validate()?;
        self.mission_spec()?;
        if self.hp.n_c < self.hp.degree + 1 {
            return Err(Error::InvalidConfig("n_c must exceed the spline degree".into()));
        }
        if self.hp.n_s < 10 {
            return Err(Error::InvalidConfig("n_s must be at least 10".into()));
        }
        if self.hp.grid_n < 32 {
            return Err(Error::InvalidConfig("grid_n must be at least 32".into()));
        }
        if !(self.sim.dt > 0.0 && self.sim.measurement_period > 0.0) {
            return Err(Error::InvalidConfig("sim time steps must be positive".into()));
        }
        Ok(())
    }

    pub fn mission_spec(&self) -> Result<MissionSpec> {
        MissionSpec::new(&self.scenario.region, self.mission)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut cfg = Config::default();
        cfg.scenario.seed = 42;
        cfg.scenario.radar.lambda = 0.1 + 1e-17;
        cfg.weights = PlannerWeights::new(0.1, 0.2, 0.7).unwrap();
        let text = cfg.to_toml();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = Config::from_toml("[scenario]\nradar_count = 3\n").unwrap();
        assert_eq!(cfg.scenario.radar_count, 3);
        assert_eq!(cfg.scenario.n_l, 10);
    }

    #[test]
    fn degenerate_range_rejected() {
        let mut cfg = Config::default();
        cfg.scenario.radar.p_t_l = 5.0;
        cfg.scenario.radar.p_t_u = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::DegenerateRange { .. })));
    }

    #[test]
    fn d_max_is_farthest_corner() {
        let cfg = Config::default();
        let m = cfg.mission_spec().unwrap();
        assert!((m.d_max - 22_000.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn simplex_grid_sums_to_one() {
        let g = PlannerWeights::simplex_grid(6);
        assert_eq!(g.len(), 28);
        for w in g {
            assert!((w.alpha_e + w.alpha_u + w.alpha_s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn db_conversion() {
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
        assert!((db_to_linear(0.0) - 1.0).abs() < 1e-15);
        assert!((linear_to_db(10.0) - 10.0).abs() < 1e-12);
    }
}
