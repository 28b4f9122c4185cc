//! Voronoi-based roadmaps for the high-priority agent.
//!
//! A [`RoadmapGraph`] holds vertices and curved edges. Deterministic
//! roadmaps come from multiplicatively weighted Voronoi diagrams whose edges
//! are Apollonius arcs ([`weighted`]); uncertain roadmaps come from a
//! grid-labelled generalized Voronoi diagram with spline edges
//! ([`generalized`]). Both are clipped to the region and closed with boundary
//! segments, trimmed by a safety predicate ([`trim`]) and searched with A*
//! ([`search`]).

use serde::{Deserialize, Serialize};

use crate::bspline::BSplineTrajectory;
use crate::geometry::{polyline_length, wrap_positive, Position2};

pub mod generalized;
pub mod search;
pub mod trim;
pub mod weighted;

pub use generalized::{build_generalized_diagram, label_grid, LabelGrid};
pub use search::{shortest_path, PathResult};
pub use trim::{trim_deterministic, trim_uncertain};
pub use weighted::{apollonius_circle, arc_closest_point, build_weighted_diagram, Apollonius, WeightedSite};

/// Counter-clockwise circular arc from `theta0` to `thetaf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcEdge {
    pub center: Position2,
    pub radius: f64,
    /// Start angle in `(-π, π]`.
    pub theta0: f64,
    /// End angle, `theta0 < thetaf ≤ theta0 + 2π`.
    pub thetaf: f64,
}

impl ArcEdge {
    pub fn sweep(&self) -> f64 {
        self.thetaf - self.theta0
    }

    pub fn point_at_angle(&self, theta: f64) -> Position2 {
        self.center + Position2::from_polar(self.radius, theta)
    }

    /// Whether angle `theta` lies within the swept range.
    pub fn contains_angle(&self, theta: f64) -> bool {
        wrap_positive(theta - self.theta0) <= self.sweep()
    }
}

/// Geometry of a roadmap edge, parameterized by `s ∈ [0, 1]` from its first
/// vertex to its second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EdgeGeometry {
    Arc(ArcEdge),
    Segment { a: Position2, b: Position2 },
    /// Fitted boundary curve on `[0, 1]`.
    Spline(BSplineTrajectory),
    /// Piecewise-linear curve parameterized by arc length.
    Polyline(Vec<Position2>),
}

impl EdgeGeometry {
    pub fn point_at(&self, s: f64) -> Position2 {
        match self {
            EdgeGeometry::Arc(arc) => arc.point_at_angle(arc.theta0 + s * arc.sweep()),
            EdgeGeometry::Segment { a, b } => a.lerp(*b, s),
            EdgeGeometry::Spline(t) => t.eval(s.clamp(0.0, 1.0), 0).expect("spline parameter in domain"),
            EdgeGeometry::Polyline(pts) => polyline_point(pts, s),
        }
    }

    /// `n + 1` points at `s = k / n`.
    pub fn sample(&self, n: usize) -> Vec<Position2> {
        let n = n.max(1);
        (0..=n).map(|k| self.point_at(k as f64 / n as f64)).collect()
    }

    pub fn length(&self) -> f64 {
        match self {
            EdgeGeometry::Arc(arc) => arc.radius * arc.sweep(),
            EdgeGeometry::Segment { a, b } => a.distance(*b),
            EdgeGeometry::Spline(_) => polyline_length(&self.sample(128)),
            EdgeGeometry::Polyline(pts) => polyline_length(pts),
        }
    }
}

fn polyline_point(pts: &[Position2], s: f64) -> Position2 {
    let target = s.clamp(0.0, 1.0) * polyline_length(pts);
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let len = w[0].distance(w[1]);
        if acc + len >= target && len > 0.0 {
            return w[0].lerp(w[1], (target - acc) / len);
        }
        acc += len;
    }
    *pts.last().expect("non-empty polyline")
}

/// What an edge separates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Boundary between the cells of two generators.
    Voronoi { i: usize, j: usize },
    /// Piece of the region boundary.
    Boundary,
    /// Link from an external point (start or goal) to the roadmap.
    Link,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub a: usize,
    pub b: usize,
    pub geometry: EdgeGeometry,
    pub length: f64,
    pub kind: EdgeKind,
    /// Worst sampled safety value found when trimming (max PD, or min
    /// chance of staying below the threshold); `None` until trimmed.
    pub risk: Option<f64>,
}

/// Roadmap vertices and edges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadmapGraph {
    pub vertices: Vec<Position2>,
    pub edges: Vec<RoadEdge>,
}

impl RoadmapGraph {
    pub fn add_vertex(&mut self, p: Position2) -> usize {
        self.vertices.push(p);
        self.vertices.len() - 1
    }

    /// Index of an existing vertex within `tol` of `p`, or a new one.
    pub fn vertex_near(&mut self, p: Position2, tol: f64) -> usize {
        let tol2 = tol * tol;
        if let Some(i) = self.vertices.iter().position(|v| v.distance_sq(p) <= tol2) {
            return i;
        }
        self.add_vertex(p)
    }

    pub fn add_edge(&mut self, a: usize, b: usize, geometry: EdgeGeometry, kind: EdgeKind) {
        let length = geometry.length();
        if a == b && length <= 0.0 {
            return;
        }
        self.edges.push(RoadEdge { a, b, geometry, length, kind, risk: None });
    }

    /// Adjacency list: for each vertex, `(edge index, other vertex)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.a].push((k, e.b));
            if e.a != e.b {
                adj[e.b].push((k, e.a));
            }
        }
        adj
    }

    pub fn voronoi_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| matches!(e.kind, EdgeKind::Voronoi { .. })).count()
    }

    /// Checks that every edge references existing vertices and has positive
    /// length.
    pub fn is_well_formed(&self) -> bool {
        self.edges
            .iter()
            .all(|e| e.a < self.vertices.len() && e.b < self.vertices.len() && e.length > 0.0)
    }
}

/// Adds region-boundary segments between consecutive boundary vertices
/// (including the corners), walking the perimeter counter-clockwise.
pub(crate) fn close_with_boundary(graph: &mut RoadmapGraph, region: &crate::geometry::Region, on_boundary: &[usize], tol: f64) {
    let mut ids: Vec<usize> = on_boundary.to_vec();
    for c in region.corners() {
        ids.push(graph.vertex_near(c, tol));
    }
    ids.sort_by(|&a, &b| {
        region
            .perimeter_coordinate(graph.vertices[a])
            .total_cmp(&region.perimeter_coordinate(graph.vertices[b]))
    });
    ids.dedup();
    let n = ids.len();
    for k in 0..n {
        let a = ids[k];
        let b = ids[(k + 1) % n];
        let pa = graph.vertices[a];
        let pb = graph.vertices[b];
        if pa.distance(pb) > tol {
            graph.add_edge(a, b, EdgeGeometry::Segment { a: pa, b: pb }, EdgeKind::Boundary);
        }
    }
}
