//! Unicycle agent state and integrator.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Position2};

/// Pose and forward speed of a unicycle agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Position2,
    /// Heading in `(-π, π]`, measured counter-clockwise from east.
    pub heading: f64,
    pub speed: f64,
}

impl AgentState {
    pub fn new(position: Position2, heading: f64, speed: f64) -> Self {
        Self { position, heading: wrap_angle(heading), speed }
    }
}

/// Advances a unicycle with constant turn rate `turn_rate` over `dt` seconds
/// using a classical fourth-order Runge-Kutta step. Speed is unchanged and
/// the heading is integrated exactly.
pub fn unicycle_step(state: AgentState, turn_rate: f64, dt: f64) -> AgentState {
    let v = state.speed;
    let h0 = state.heading;
    let f = |h: f64| Position2::new(v * h.cos(), v * h.sin());
    let k1 = f(h0);
    let k2 = f(h0 + 0.5 * dt * turn_rate);
    let k3 = k2;
    let k4 = f(h0 + dt * turn_rate);
    let dp = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    AgentState {
        position: state.position + dp,
        heading: wrap_angle(h0 + turn_rate * dt),
        speed: v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn straight_motion() {
        let s = unicycle_step(AgentState::new(Position2::ORIGIN, 0.0, 10.0), 0.0, 1.0);
        assert!((s.position.x - 10.0).abs() < 1e-12);
        assert!(s.position.y.abs() < 1e-12);
    }

    #[test]
    fn zero_speed_rotates_in_place() {
        let s = unicycle_step(AgentState::new(Position2::new(3.0, 4.0), 0.2, 0.0), 0.5, 1.0);
        assert_eq!(s.position, Position2::new(3.0, 4.0));
        assert!((s.heading - 0.7).abs() < 1e-12);
    }

    /// Distance from the closed-form arc position after `duration` seconds
    /// at turn rate π/2 starting east from the origin.
    fn arc_error(duration: f64, dt: f64) -> f64 {
        let v = 25.0;
        let w = PI / 2.0;
        let r = v / w;
        let mut s = AgentState::new(Position2::ORIGIN, 0.0, v);
        let steps = (duration / dt).round() as usize;
        for _ in 0..steps {
            s = unicycle_step(s, w, dt);
        }
        let exact = Position2::new(r * (w * duration).sin(), r * (1.0 - (w * duration).cos()));
        s.position.distance(exact)
    }

    #[test]
    fn full_circle_returns_to_start() {
        assert!(arc_error(4.0, 0.1) < 1e-9);
        assert!(arc_error(4.0, 0.01) < 1e-9);
    }

    #[test]
    fn arc_converges_to_closed_form() {
        let e1 = arc_error(1.0, 0.25);
        let e2 = arc_error(1.0, 0.125);
        assert!(e1 < 1e-3, "{e1}");
        // Fourth-order convergence.
        assert!(e2 < e1 / 12.0, "{e1} {e2}");
    }

    #[test]
    fn midpoint_of_circle_matches_closed_form() {
        // After half a turn the agent sits at the far side of a circle of
        // radius v / u centred at (0, v / u).
        let v = 25.0;
        let r = v / (PI / 2.0);
        let mut s = AgentState::new(Position2::ORIGIN, 0.0, v);
        for _ in 0..2000 {
            s = unicycle_step(s, PI / 2.0, 0.001);
        }
        assert!(s.position.x.abs() < 1e-9);
        assert!((s.position.y - 2.0 * r).abs() < 1e-9);
    }
}
