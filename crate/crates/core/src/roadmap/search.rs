//! A* search over a roadmap with start and goal attached by straight links.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::trim::SafetyCheck;
use super::{EdgeGeometry, EdgeKind, RoadEdge, RoadmapGraph};
use crate::error::{Error, Result};
use crate::geometry::Position2;

/// A path through a roadmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    /// The roadmap with start and goal links added; vertex and edge indices
    /// below refer to it.
    pub graph: RoadmapGraph,
    pub vertices: Vec<usize>,
    /// Traversed edges and whether each is walked from `b` to `a`.
    pub edges: Vec<(usize, bool)>,
    pub cost: f64,
}

impl PathResult {
    /// Polyline through the path with `per_edge` segments on every edge.
    pub fn polyline(&self, per_edge: usize) -> Vec<Position2> {
        let mut pts = vec![self.graph.vertices[self.vertices[0]]];
        for &(k, reversed) in &self.edges {
            let mut s = self.graph.edges[k].geometry.sample(per_edge);
            if reversed {
                s.reverse();
            }
            pts.extend(s.into_iter().skip(1));
        }
        pts
    }
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed so the max-heap pops the smallest f, then the lowest index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Links `p` to the roadmap: reuses a vertex within `tol`, or adds a vertex
/// joined by a straight link to each of the `k` nearest vertices whose link
/// passes `check`.
fn attach(graph: &mut RoadmapGraph, p: Position2, k: usize, check: &dyn SafetyCheck, tol: f64) -> usize {
    if let Some(i) = graph.vertices.iter().position(|v| v.distance(p) <= tol) {
        return i;
    }
    let mut order: Vec<usize> = (0..graph.vertices.len()).collect();
    order.sort_by(|&a, &b| graph.vertices[a].distance_sq(p).total_cmp(&graph.vertices[b].distance_sq(p)));
    let id = graph.add_vertex(p);
    for v in order.into_iter().take(k.max(1)) {
        let geometry = EdgeGeometry::Segment { a: p, b: graph.vertices[v] };
        let (ok, worst) = check.assess(&geometry, EdgeKind::Link);
        if ok {
            let length = geometry.length();
            graph.edges.push(RoadEdge { a: id, b: v, geometry, length, kind: EdgeKind::Link, risk: Some(worst) });
        }
    }
    id
}

/// Shortest path from `start` to `goal` by A* with the Euclidean heuristic.
///
/// Fails with [`Error::Disconnected`] when no admissible route exists.
pub fn shortest_path(
    graph: &RoadmapGraph,
    start: Position2,
    goal: Position2,
    check: &dyn SafetyCheck,
    attach_k: usize,
) -> Result<PathResult> {
    let mut g = graph.clone();
    let tol = 1e-3;
    let s = attach(&mut g, start, attach_k, check, tol);
    let t = attach(&mut g, goal, attach_k, check, tol);
    let adj = g.adjacency();
    let n = g.vertices.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut closed = vec![false; n];
    let h = |v: usize| g.vertices[v].distance(goal);
    dist[s] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry { f: h(s), node: s });
    while let Some(Entry { node, .. }) = heap.pop() {
        if closed[node] {
            continue;
        }
        closed[node] = true;
        if node == t {
            break;
        }
        for &(e, other) in &adj[node] {
            let nd = dist[node] + g.edges[e].length;
            if nd < dist[other] {
                dist[other] = nd;
                prev[other] = Some((node, e));
                heap.push(Entry { f: nd + h(other), node: other });
            }
        }
    }
    if !dist[t].is_finite() {
        return Err(Error::Disconnected);
    }
    let mut vertices = vec![t];
    let mut edges = Vec::new();
    let mut cur = t;
    while let Some((p, e)) = prev[cur] {
        edges.push((e, g.edges[e].a != p));
        vertices.push(p);
        cur = p;
    }
    vertices.reverse();
    edges.reverse();
    Ok(PathResult { cost: dist[t], graph: g, vertices, edges })
}
