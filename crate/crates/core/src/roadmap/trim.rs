//! Removing roadmap edges that violate the detection constraint.

use super::weighted::arc_closest_point;
use super::{EdgeGeometry, EdgeKind, RoadmapGraph};
use crate::geometry::Position2;
use crate::pd_uncertainty::{chance_at, KnownParamBelief, UnknownPrior};
use crate::estimator::RadarEstimate;
use crate::radar::{pd_overall_params, DetectionParams};

/// Decides whether an edge is safe to fly, returning the verdict and the
/// worst value found.
pub trait SafetyCheck {
    fn assess(&self, geometry: &EdgeGeometry, kind: EdgeKind) -> (bool, f64);
}

/// Overall PD with radar parameters taken as exact: an edge is kept when
/// its maximum PD does not exceed `p_dt`.
#[derive(Debug, Clone)]
pub struct DeterministicSafety<'a> {
    pub radars: &'a [DetectionParams],
    pub sigma: f64,
    pub p_dt: f64,
    /// Uniform samples per edge (`samples + 1` points including both ends).
    pub samples: usize,
}

impl DeterministicSafety<'_> {
    pub fn pd(&self, p: Position2) -> f64 {
        // Sitting on a radar is as detectable as it gets.
        pd_overall_params(self.sigma, p, self.radars).unwrap_or(1.0)
    }

    /// Points examined on an edge: the uniform samples plus, for arcs, the
    /// points nearest each generator, where the PD of that pair peaks.
    pub fn candidates(&self, geometry: &EdgeGeometry, kind: EdgeKind) -> Vec<Position2> {
        let mut pts = geometry.sample(self.samples);
        if let (EdgeGeometry::Arc(arc), EdgeKind::Voronoi { i, j }) = (geometry, kind) {
            for g in [i, j] {
                if let Some(r) = self.radars.get(g) {
                    pts.push(arc_closest_point(arc, r.position).0);
                }
            }
        }
        if let (EdgeGeometry::Segment { a, b }, EdgeKind::Voronoi { i, j }) = (geometry, kind) {
            for g in [i, j] {
                if let Some(r) = self.radars.get(g) {
                    pts.push(closest_on_segment(*a, *b, r.position));
                }
            }
        }
        pts
    }
}

fn closest_on_segment(a: Position2, b: Position2, q: Position2) -> Position2 {
    let d = b - a;
    let l2 = d.norm_sq();
    if l2 == 0.0 {
        return a;
    }
    a.lerp(b, ((q - a).dot(d) / l2).clamp(0.0, 1.0))
}

impl SafetyCheck for DeterministicSafety<'_> {
    fn assess(&self, geometry: &EdgeGeometry, kind: EdgeKind) -> (bool, f64) {
        let worst = self.candidates(geometry, kind).into_iter().map(|p| self.pd(p)).fold(0.0, f64::max);
        (worst <= self.p_dt, worst)
    }
}

/// Chance constraint `P(P_D ≤ p_dt) ≥ epsilon` under the linearized PD
/// belief, checked at uniform samples.
#[derive(Debug, Clone)]
pub struct ChanceSafety<'a> {
    pub known: KnownParamBelief,
    pub prior: &'a UnknownPrior,
    pub estimates: &'a [RadarEstimate],
    pub p_dt: f64,
    pub epsilon: f64,
    pub samples: usize,
}

impl ChanceSafety<'_> {
    pub fn chance(&self, p: Position2) -> f64 {
        chance_at(&self.known.at(p), self.prior, self.estimates, self.p_dt).unwrap_or(0.0)
    }
}

impl SafetyCheck for ChanceSafety<'_> {
    fn assess(&self, geometry: &EdgeGeometry, _kind: EdgeKind) -> (bool, f64) {
        let worst = geometry.sample(self.samples).into_iter().map(|p| self.chance(p)).fold(1.0, f64::min);
        (worst >= self.epsilon, worst)
    }
}

/// Copy of `graph` keeping only the edges `check` admits. Vertices are kept
/// so indices stay valid; each kept edge records its worst value.
pub fn trim(graph: &RoadmapGraph, check: &dyn SafetyCheck) -> RoadmapGraph {
    let edges = graph
        .edges
        .iter()
        .filter_map(|e| {
            let (ok, worst) = check.assess(&e.geometry, e.kind);
            ok.then(|| {
                let mut e = e.clone();
                e.risk = Some(worst);
                e
            })
        })
        .collect();
    RoadmapGraph { vertices: graph.vertices.clone(), edges }
}

/// Removes edges whose maximum PD exceeds `p_dt`, treating radar
/// parameters as exact.
pub fn trim_deterministic(
    graph: &RoadmapGraph,
    radars: &[DetectionParams],
    sigma: f64,
    p_dt: f64,
    samples: usize,
) -> RoadmapGraph {
    trim(graph, &DeterministicSafety { radars, sigma, p_dt, samples })
}

/// Removes edges with a sample where `P(P_D ≤ p_dt) < epsilon`.
pub fn trim_uncertain(
    graph: &RoadmapGraph,
    known: &KnownParamBelief,
    prior: &UnknownPrior,
    estimates: &[RadarEstimate],
    p_dt: f64,
    epsilon: f64,
    samples: usize,
) -> RoadmapGraph {
    trim(graph, &ChanceSafety { known: *known, prior, estimates, p_dt, epsilon, samples })
}
