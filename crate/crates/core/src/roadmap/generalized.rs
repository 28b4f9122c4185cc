//! Generalized Voronoi diagrams from a labelled grid.
//!
//! Every grid node is labelled with the radar it is most exposed to: the one
//! with the smallest standardized margin `(P_Dt - μ_j) / σ_j` of its own PD
//! belief. This ordering agrees with `P(P_D,j ≤ P_Dt)` but keeps separating
//! radars where that probability rounds to one. Cell boundaries are traced
//! with marching squares, contracted into chains between junctions and
//! smoothed with cubic splines.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{close_with_boundary, EdgeGeometry, EdgeKind, RoadmapGraph};
use crate::bspline::fit_to_path;
use crate::error::{Error, Result};
use crate::estimator::RadarEstimate;
use crate::geometry::{Position2, Region};
use crate::pd_uncertainty::{radar_pd_grad, KnownParamBelief, UnknownPrior};

const Z_CLAMP: f64 = 1e12;

/// Per-node margins and labels on an `n × n` grid spanning the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGrid {
    pub region: Region,
    pub n: usize,
    pub radars: usize,
    /// `z[node * radars + j]`, node index `ix + iy·n`.
    pub z: Vec<f64>,
    pub labels: Vec<usize>,
}

impl LabelGrid {
    pub fn node_position(&self, ix: usize, iy: usize) -> Position2 {
        let fx = ix as f64 / (self.n - 1) as f64;
        let fy = iy as f64 / (self.n - 1) as f64;
        Position2::new(
            self.region.lower.x + fx * self.region.width(),
            self.region.lower.y + fy * self.region.height(),
        )
    }

    pub fn label(&self, ix: usize, iy: usize) -> usize {
        self.labels[ix + iy * self.n]
    }

    fn z_at(&self, node: usize, j: usize) -> f64 {
        self.z[node * self.radars + j]
    }

    /// Grid spacing along x.
    pub fn spacing(&self) -> f64 {
        self.region.width() / (self.n - 1) as f64
    }
}

/// Standardized PD margin of a single radar at `known`.
pub fn radar_margin(known: &KnownParamBelief, prior: &UnknownPrior, estimate: &RadarEstimate, p_dt: f64) -> f64 {
    let Ok(g) = radar_pd_grad(&known.mean, &prior.mean, &estimate.mean, prior.loss) else {
        return -Z_CLAMP;
    };
    let var = (g.d_known.transpose() * known.cov * g.d_known)[0]
        + (g.d_unknown.transpose() * prior.cov * g.d_unknown)[0]
        + (g.d_estimated.transpose() * estimate.cov * g.d_estimated)[0];
    let diff = p_dt - g.pd;
    let z = if var > 0.0 { diff / var.sqrt() } else { diff.signum() * Z_CLAMP };
    z.clamp(-Z_CLAMP, Z_CLAMP)
}

/// Labels an `n × n` grid over `region`.
pub fn label_grid(
    region: &Region,
    n: usize,
    known: &KnownParamBelief,
    prior: &UnknownPrior,
    estimates: &[RadarEstimate],
    p_dt: f64,
) -> Result<LabelGrid> {
    region.validate()?;
    if n < 2 {
        return Err(Error::InvalidConfig(format!("grid needs at least 2 nodes per side, got {n}")));
    }
    let m = estimates.len();
    let mut grid = LabelGrid { region: *region, n, radars: m, z: Vec::with_capacity(n * n * m), labels: Vec::with_capacity(n * n) };
    for iy in 0..n {
        for ix in 0..n {
            let k = known.at(grid.node_position(ix, iy));
            let mut best = (f64::INFINITY, 0);
            for (j, e) in estimates.iter().enumerate() {
                let z = radar_margin(&k, prior, e, p_dt);
                grid.z.push(z);
                if z < best.0 {
                    best = (z, j);
                }
            }
            grid.labels.push(best.1);
        }
    }
    Ok(grid)
}

/// Fine boundary graph produced by marching squares.
#[derive(Default)]
struct FineGraph {
    points: Vec<Position2>,
    /// Pair label of the side a crossing lies on; junctions use `None`.
    pair: Vec<Option<(usize, usize)>>,
    boundary: Vec<bool>,
    junction: Vec<bool>,
    adj: Vec<Vec<usize>>,
}

impl FineGraph {
    fn add(&mut self, p: Position2, pair: Option<(usize, usize)>, boundary: bool, junction: bool) -> usize {
        self.points.push(p);
        self.pair.push(pair);
        self.boundary.push(boundary);
        self.junction.push(junction);
        self.adj.push(Vec::new());
        self.points.len() - 1
    }

    fn link(&mut self, a: usize, b: usize) {
        self.adj[a].push(b);
        self.adj[b].push(a);
    }

    fn is_vertex(&self, v: usize) -> bool {
        self.junction[v] || self.boundary[v] || self.adj[v].len() != 2
    }
}

fn trace(grid: &LabelGrid) -> FineGraph {
    let n = grid.n;
    let mut fine = FineGraph::default();
    // Side keys: (ix, iy, vertical).
    let mut sides: HashMap<(usize, usize, bool), usize> = HashMap::new();
    let mut crossing = |fine: &mut FineGraph, ix: usize, iy: usize, vertical: bool| -> Option<usize> {
        let (jx, jy) = if vertical { (ix, iy + 1) } else { (ix + 1, iy) };
        let (p, q) = (ix + iy * n, jx + jy * n);
        let (a, b) = (grid.labels[p], grid.labels[q]);
        if a == b {
            return None;
        }
        if let Some(&id) = sides.get(&(ix, iy, vertical)) {
            return Some(id);
        }
        // Zero of z_a - z_b along the side, linearly interpolated.
        let fp = grid.z_at(p, a) - grid.z_at(p, b);
        let fq = grid.z_at(q, a) - grid.z_at(q, b);
        let s = if fp != fq { (fp / (fp - fq)).clamp(0.0, 1.0) } else { 0.5 };
        let pos = grid.node_position(ix, iy).lerp(grid.node_position(jx, jy), s);
        let on_edge = if vertical { ix == 0 || ix == n - 1 } else { iy == 0 || iy == n - 1 };
        let id = fine.add(pos, Some((a.min(b), a.max(b))), on_edge, false);
        sides.insert((ix, iy, vertical), id);
        Some(id)
    };
    for iy in 0..n - 1 {
        for ix in 0..n - 1 {
            let found: Vec<usize> = [(ix, iy, false), (ix + 1, iy, true), (ix, iy + 1, false), (ix, iy, true)]
                .into_iter()
                .filter_map(|(x, y, v)| crossing(&mut fine, x, y, v))
                .collect();
            match found.len() {
                0 => {}
                2 => fine.link(found[0], found[1]),
                _ => {
                    let c = grid.node_position(ix, iy).lerp(grid.node_position(ix + 1, iy + 1), 0.5);
                    let center = fine.add(c, None, false, true);
                    for f in found {
                        fine.link(center, f);
                    }
                }
            }
        }
    }
    fine
}

/// Walks from `from` through `next` until a vertex node, marking the
/// traversed fine edges.
fn walk(fine: &FineGraph, from: usize, next: usize, used: &mut HashMap<(usize, usize), bool>) -> Vec<usize> {
    let mut chain = vec![from, next];
    used.insert((from.min(next), from.max(next)), true);
    let (mut prev, mut cur) = (from, next);
    while !fine.is_vertex(cur) {
        let Some(&nxt) = fine.adj[cur].iter().find(|&&w| w != prev && !used.contains_key(&(cur.min(w), cur.max(w))))
        else {
            break;
        };
        used.insert((cur.min(nxt), cur.max(nxt)), true);
        chain.push(nxt);
        prev = cur;
        cur = nxt;
    }
    chain
}

fn chain_geometry(points: Vec<Position2>, cell: f64) -> EdgeGeometry {
    if points.len() >= 8 {
        let n_c = (points.len() / 3).clamp(4, 12);
        if let Ok(fit) = fit_to_path(&points, n_c, 3) {
            if fit.max_residual <= cell {
                return EdgeGeometry::Spline(fit.trajectory);
            }
        }
    }
    if points.len() == 2 {
        EdgeGeometry::Segment { a: points[0], b: points[1] }
    } else {
        EdgeGeometry::Polyline(points)
    }
}

/// Converts a label grid into a roadmap of cell boundaries plus the region
/// boundary.
pub fn boundaries_from_grid(grid: &LabelGrid) -> RoadmapGraph {
    let fine = trace(grid);
    let cell = grid.spacing();
    let tol = 1e-9 * grid.region.diagonal();
    let mut graph = RoadmapGraph::default();
    let mut vertex_of: HashMap<usize, usize> = HashMap::new();
    let mut on_boundary = Vec::new();
    let mut vid = |graph: &mut RoadmapGraph, v: usize| -> usize {
        *vertex_of.entry(v).or_insert_with(|| graph.add_vertex(fine.points[v]))
    };
    let mut used = HashMap::new();
    let add_chain = |graph: &mut RoadmapGraph, chain: Vec<usize>, a: usize, b: usize| {
        let pair = chain.iter().find_map(|&c| fine.pair[c]).unwrap_or((0, 0));
        let pts = chain.iter().map(|&c| fine.points[c]).collect();
        graph.add_edge(a, b, chain_geometry(pts, cell), EdgeKind::Voronoi { i: pair.0, j: pair.1 });
    };
    for v in 0..fine.points.len() {
        if !fine.is_vertex(v) {
            continue;
        }
        for &w in &fine.adj[v] {
            if used.contains_key(&(v.min(w), v.max(w))) {
                continue;
            }
            let chain = walk(&fine, v, w, &mut used);
            let a = vid(&mut graph, v);
            let b = vid(&mut graph, *chain.last().unwrap());
            add_chain(&mut graph, chain, a, b);
        }
        if fine.boundary[v] {
            on_boundary.push(vid(&mut graph, v));
        }
    }
    // Closed loops with no vertex on them, split in two halves.
    for v in 0..fine.points.len() {
        let Some(&w) = fine.adj[v].iter().find(|&&w| !used.contains_key(&(v.min(w), v.max(w)))) else {
            continue;
        };
        let mut chain = walk(&fine, v, w, &mut used);
        // The walk stops when it runs out of unused edges, back next to v.
        if chain.last() != Some(&v) {
            chain.push(v);
        }
        let mid = chain.len() / 2;
        let a = vid(&mut graph, v);
        let b = vid(&mut graph, chain[mid]);
        let second = chain[mid..].to_vec();
        chain.truncate(mid + 1);
        add_chain(&mut graph, chain, a, b);
        add_chain(&mut graph, second, b, a);
    }
    close_with_boundary(&mut graph, &grid.region, &on_boundary, tol);
    graph
}

/// Generalized Voronoi roadmap for uncertain radar estimates.
pub fn build_generalized_diagram(
    region: &Region,
    grid_n: usize,
    known: &KnownParamBelief,
    prior: &UnknownPrior,
    estimates: &[RadarEstimate],
    p_dt: f64,
) -> Result<RoadmapGraph> {
    let grid = label_grid(region, grid_n, known, prior, estimates, p_dt)?;
    Ok(boundaries_from_grid(&grid))
}
