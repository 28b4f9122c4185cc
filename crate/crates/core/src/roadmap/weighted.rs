//! Multiplicatively weighted Voronoi diagrams.
//!
//! Site `i` owns the points where `|x - x_i| / w_i` is smallest. The boundary
//! between two sites is an Apollonius circle, or the perpendicular bisector
//! when the weights are equal. With `w_i = (SNR_i · R⁴)^{1/4}` the weighted
//! distance is `SNR_i^{-1/4}`, so every boundary point sees the same SNR, and
//! hence the same PD, from both of its generators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{close_with_boundary, ArcEdge, EdgeGeometry, EdgeKind, RoadmapGraph};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, wrap_positive, Position2, Region};
use crate::radar::DetectionParams;

/// Relative slack used when comparing weighted distances.
const DOMINANCE_TOL: f64 = 1e-9;
/// Weight ratios closer to one than this are treated as equal.
const EQUAL_WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSite {
    pub position: Position2,
    pub weight: f64,
}

impl WeightedSite {
    pub fn new(position: Position2, weight: f64) -> Self {
        Self { position, weight }
    }

    /// Site whose weighted distance is `SNR^{-1/4}` for a target of
    /// cross-section `sigma`.
    pub fn from_detection(radar: &DetectionParams, sigma: f64) -> Self {
        Self { position: radar.position, weight: radar.snr_r4(sigma).powf(0.25) }
    }

    pub fn weighted_distance(&self, p: Position2) -> f64 {
        p.distance(self.position) / self.weight
    }
}

/// Locus of equal weighted distance to two sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Apollonius {
    Circle { center: Position2, radius: f64 },
    /// Perpendicular bisector through `point` with unit `direction`.
    Line { point: Position2, direction: Position2 },
}

/// Boundary between `i` and `j`: the set `|x - x_i| / w_i = |x - x_j| / w_j`.
pub fn apollonius_circle(i: &WeightedSite, j: &WeightedSite) -> Result<Apollonius> {
    let d = j.position - i.position;
    let dist = d.norm();
    if dist == 0.0 {
        return Err(Error::CoincidentGenerators);
    }
    if !(i.weight > 0.0 && j.weight > 0.0) {
        return Err(Error::InvalidConfig("site weights must be positive".into()));
    }
    let k = i.weight / j.weight;
    if (k - 1.0).abs() < EQUAL_WEIGHT_TOL {
        return Ok(Apollonius::Line { point: i.position.lerp(j.position, 0.5), direction: d.perp() * (1.0 / dist) });
    }
    let k2 = k * k;
    let center = (i.position - j.position * k2) * (1.0 / (1.0 - k2));
    let radius = k * dist / (1.0 - k2).abs();
    Ok(Apollonius::Circle { center, radius })
}

impl Apollonius {
    /// Position at locus parameter `t` (angle for circles, arc length for
    /// lines).
    pub fn point(&self, t: f64) -> Position2 {
        match *self {
            Apollonius::Circle { center, radius } => center + Position2::from_polar(radius, t),
            Apollonius::Line { point, direction } => point + direction * t,
        }
    }

    /// Parameter of the locus point nearest `p`.
    pub fn param_of(&self, p: Position2) -> f64 {
        match *self {
            Apollonius::Circle { center, .. } => angle_of(p - center),
            Apollonius::Line { point, direction } => (p - point).dot(direction),
        }
    }

    /// Intersection points with another locus.
    pub fn intersect(&self, other: &Apollonius) -> Vec<Position2> {
        match (*self, *other) {
            (Apollonius::Circle { center: c0, radius: r0 }, Apollonius::Circle { center: c1, radius: r1 }) => {
                circle_circle(c0, r0, c1, r1)
            }
            (Apollonius::Circle { center, radius }, Apollonius::Line { point, direction })
            | (Apollonius::Line { point, direction }, Apollonius::Circle { center, radius }) => {
                circle_line(center, radius, point, direction).into_iter().map(|t| point + direction * t).collect()
            }
            (Apollonius::Line { point: p0, direction: d0 }, Apollonius::Line { point: p1, direction: d1 }) => {
                let den = d0.cross(d1);
                if den.abs() < 1e-12 {
                    return Vec::new();
                }
                let t = (p1 - p0).cross(d1) / den;
                vec![p0 + d0 * t]
            }
        }
    }
}

fn angle_of(v: Position2) -> f64 {
    v.y.atan2(v.x)
}

fn circle_circle(c0: Position2, r0: f64, c1: Position2, r1: f64) -> Vec<Position2> {
    let d = c1 - c0;
    let dist = d.norm();
    if dist == 0.0 {
        return Vec::new();
    }
    let a = (r0 * r0 - r1 * r1 + dist * dist) / (2.0 * dist);
    let h2 = r0 * r0 - a * a;
    // Grazing contact lost to rounding still counts as one point.
    let graze = 1e-9 * (r0 + r1);
    if h2 < -graze * graze {
        return Vec::new();
    }
    let u = d * (1.0 / dist);
    let base = c0 + u * a;
    let h = h2.max(0.0).sqrt();
    if h == 0.0 {
        return vec![base];
    }
    vec![base + u.perp() * h, base - u.perp() * h]
}

/// Line parameters where `point + t·direction` meets the circle.
fn circle_line(center: Position2, radius: f64, point: Position2, direction: Position2) -> Vec<f64> {
    let f = point - center;
    let b = f.dot(direction);
    let c = f.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    if s == 0.0 {
        vec![-b]
    } else {
        vec![-b - s, -b + s]
    }
}

/// Parameters where the locus crosses the region boundary.
fn boundary_params(locus: &Apollonius, region: &Region) -> Vec<f64> {
    let corners = region.corners();
    let mut out = Vec::new();
    for k in 0..4 {
        let a = corners[k];
        let b = corners[(k + 1) % 4];
        let len = a.distance(b);
        let dir = (b - a) * (1.0 / len);
        let side = Apollonius::Line { point: a, direction: dir };
        for p in locus.intersect(&side) {
            let s = (p - a).dot(dir);
            if s >= -1e-9 * len && s <= len * (1.0 + 1e-9) {
                out.push(locus.param_of(p));
            }
        }
    }
    out
}

fn dominated_by(sites: &[WeightedSite], p: Position2, i: usize, j: usize) -> bool {
    let di = sites[i].weighted_distance(p);
    let dj = sites[j].weighted_distance(p);
    let d = di.max(dj);
    sites
        .iter()
        .enumerate()
        .all(|(m, s)| m == i || m == j || s.weighted_distance(p) >= d * (1.0 - DOMINANCE_TOL))
}

fn inside(region: &Region, p: Position2, tol: f64) -> bool {
    p.x >= region.lower.x - tol && p.x <= region.upper.x + tol && p.y >= region.lower.y - tol && p.y <= region.upper.y + tol
}

/// Weighted Voronoi roadmap of `sites` clipped to `region`.
///
/// Vertices are triple points and boundary crossings; edges are the
/// Apollonius arcs (or bisector segments) separating neighbouring cells,
/// plus the region boundary split at every crossing.
pub fn build_weighted_diagram(sites: &[WeightedSite], region: &Region) -> Result<RoadmapGraph> {
    region.validate()?;
    for (a, sa) in sites.iter().enumerate() {
        for sb in &sites[a + 1..] {
            if sa.position == sb.position {
                return Err(Error::CoincidentGenerators);
            }
        }
    }
    let n = sites.len();
    let tol = 1e-7 * region.diagonal();
    let mut loci = Vec::new();
    let mut index = vec![vec![usize::MAX; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            index[i][j] = loci.len();
            index[j][i] = loci.len();
            loci.push((i, j, apollonius_circle(&sites[i], &sites[j])?, Vec::<f64>::new()));
        }
    }
    // Triple points.
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let lij = loci[index[i][j]].2;
                let lik = loci[index[i][k]].2;
                for p in lij.intersect(&lik) {
                    if !inside(region, p, tol) || !dominated_by(sites, p, i, j) || !dominated_by(sites, p, i, k) {
                        continue;
                    }
                    for (a, b) in [(i, j), (i, k), (j, k)] {
                        let l = &mut loci[index[a][b]];
                        let t = l.2.param_of(p);
                        l.3.push(t);
                    }
                }
            }
        }
    }
    let mut graph = RoadmapGraph::default();
    let mut on_boundary = Vec::new();
    for (i, j, locus, mut params) in loci {
        let crossings = boundary_params(&locus, region);
        match locus {
            Apollonius::Circle { center, radius } => {
                params.extend(crossings.iter().copied());
                let mut angles: Vec<f64> = params.into_iter().map(wrap_angle).collect();
                angles.sort_by(f64::total_cmp);
                angles.dedup_by(|a, b| (*a - *b).abs() * radius <= tol);
                if angles.len() > 1 && (angles[0] + 2.0 * PI - angles[angles.len() - 1]) * radius <= tol {
                    angles.pop();
                }
                if angles.is_empty() {
                    angles.push(0.0);
                }
                if angles.len() == 1 {
                    angles.push(angles[0] + PI);
                }
                let a0 = angles[0];
                let mut unwrapped: Vec<f64> = angles.iter().map(|&a| a0 + wrap_positive(a - a0)).collect();
                unwrapped.push(a0 + 2.0 * PI);
                for w in unwrapped.windows(2) {
                    let (t0, t1) = (w[0], w[1]);
                    let mid = locus.point(0.5 * (t0 + t1));
                    if !inside(region, mid, tol) || !dominated_by(sites, mid, i, j) {
                        continue;
                    }
                    let pa = region.clamp(locus.point(t0));
                    let pb = region.clamp(locus.point(t1));
                    let va = graph.vertex_near(pa, tol * 10.0);
                    let vb = graph.vertex_near(pb, tol * 10.0);
                    for (v, t) in [(va, t0), (vb, t1)] {
                        if crossings.iter().any(|&c| wrap_positive(c - t).min(wrap_positive(t - c)) * radius <= tol) {
                            on_boundary.push(v);
                        }
                    }
                    let arc = ArcEdge { center, radius, theta0: wrap_angle(t0), thetaf: wrap_angle(t0) + (t1 - t0) };
                    graph.add_edge(va, vb, EdgeGeometry::Arc(arc), EdgeKind::Voronoi { i, j });
                }
            }
            Apollonius::Line { .. } => {
                if crossings.len() < 2 {
                    continue;
                }
                let lo = crossings.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = crossings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut ts: Vec<f64> = params.into_iter().filter(|t| *t > lo && *t < hi).collect();
                ts.push(lo);
                ts.push(hi);
                ts.sort_by(f64::total_cmp);
                ts.dedup_by(|a, b| (*a - *b).abs() <= tol);
                for w in ts.windows(2) {
                    let (t0, t1) = (w[0], w[1]);
                    let mid = locus.point(0.5 * (t0 + t1));
                    if !inside(region, mid, tol) || !dominated_by(sites, mid, i, j) {
                        continue;
                    }
                    let pa = region.clamp(locus.point(t0));
                    let pb = region.clamp(locus.point(t1));
                    let va = graph.vertex_near(pa, tol * 10.0);
                    let vb = graph.vertex_near(pb, tol * 10.0);
                    if (t0 - lo).abs() <= tol {
                        on_boundary.push(va);
                    }
                    if (t1 - hi).abs() <= tol {
                        on_boundary.push(vb);
                    }
                    graph.add_edge(va, vb, EdgeGeometry::Segment { a: pa, b: pb }, EdgeKind::Voronoi { i, j });
                }
            }
        }
    }
    close_with_boundary(&mut graph, region, &on_boundary, tol * 10.0);
    Ok(graph)
}

/// Point of `arc` closest to `q`, and its parameter `s ∈ [0, 1]`.
pub fn arc_closest_point(arc: &ArcEdge, q: Position2) -> (Position2, f64) {
    let sweep = arc.sweep();
    if q == arc.center {
        return (arc.point_at_angle(arc.theta0), 0.0);
    }
    let theta_q = angle_of(q - arc.center);
    let delta = wrap_positive(theta_q - arc.theta0);
    if delta <= sweep {
        return (arc.point_at_angle(arc.theta0 + delta), delta / sweep);
    }
    // Outside the swept range: the nearer endpoint in angle is also nearer
    // in distance.
    if delta - sweep < 2.0 * PI - delta {
        (arc.point_at_angle(arc.thetaf), 1.0)
    } else {
        (arc.point_at_angle(arc.theta0), 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(x: f64, y: f64, w: f64) -> WeightedSite {
        WeightedSite::new(Position2::new(x, y), w)
    }

    #[test]
    fn apollonius_examples() {
        match apollonius_circle(&site(0.0, 0.0, 1.0), &site(3.0, 0.0, 2.0)).unwrap() {
            Apollonius::Circle { center, radius } => {
                assert!(center.distance(Position2::new(-1.0, 0.0)) < 1e-12);
                assert!((radius - 2.0).abs() < 1e-12);
            }
            other => panic!("expected a circle, got {other:?}"),
        }
        match apollonius_circle(&site(3.0, 0.0, 1.0), &site(0.0, 0.0, 2.0)).unwrap() {
            Apollonius::Circle { center, radius } => {
                assert!(center.distance(Position2::new(4.0, 0.0)) < 1e-12);
                assert!((radius - 2.0).abs() < 1e-12);
            }
            other => panic!("expected a circle, got {other:?}"),
        }
        match apollonius_circle(&site(0.0, 0.0, 1.0), &site(2.0, 0.0, 1.0)).unwrap() {
            Apollonius::Line { point, direction } => {
                assert!(point.distance(Position2::new(1.0, 0.0)) < 1e-12);
                assert!(direction.x.abs() < 1e-12);
            }
            other => panic!("expected a line, got {other:?}"),
        }
        assert!(matches!(
            apollonius_circle(&site(1.0, 1.0, 1.0), &site(1.0, 1.0, 2.0)),
            Err(Error::CoincidentGenerators)
        ));
    }

    #[test]
    fn single_site_gives_boundary_only() {
        let region = Region::new(Position2::ORIGIN, Position2::new(10.0, 10.0)).unwrap();
        let g = build_weighted_diagram(&[site(5.0, 5.0, 1.0)], &region).unwrap();
        assert_eq!(g.voronoi_edge_count(), 0);
        assert_eq!(g.edges.len(), 4);
        assert_eq!(g.vertices.len(), 4);
    }

    #[test]
    fn equal_weights_give_bisector() {
        let region = Region::new(Position2::ORIGIN, Position2::new(10.0, 10.0)).unwrap();
        let g = build_weighted_diagram(&[site(3.0, 5.0, 1.0), site(7.0, 5.0, 1.0)], &region).unwrap();
        assert_eq!(g.voronoi_edge_count(), 1);
        let e = g.edges.iter().find(|e| matches!(e.kind, EdgeKind::Voronoi { .. })).unwrap();
        assert!((e.length - 10.0).abs() < 1e-6);
        for p in e.geometry.sample(10) {
            assert!((p.x - 5.0).abs() < 1e-9);
        }
        // Two boundary crossings split the square into six boundary pieces.
        assert_eq!(g.edges.len(), 7);
    }

    #[test]
    fn closest_point_on_arc() {
        let arc = ArcEdge { center: Position2::ORIGIN, radius: 1.0, theta0: 0.0, thetaf: PI / 2.0 };
        let (p, s) = arc_closest_point(&arc, Position2::new(2.0, 2.0));
        assert!(p.distance(Position2::new(0.5f64.sqrt(), 0.5f64.sqrt())) < 1e-12);
        assert!((s - 0.5).abs() < 1e-12);
        let (p, s) = arc_closest_point(&arc, Position2::new(1.0, -0.1));
        assert!(p.distance(Position2::new(1.0, 0.0)) < 1e-12);
        assert_eq!(s, 0.0);
        let (p, _) = arc_closest_point(&arc, Position2::new(-1.0, 0.1));
        assert!(p.distance(Position2::new(0.0, 1.0)) < 1e-12);
    }
}
