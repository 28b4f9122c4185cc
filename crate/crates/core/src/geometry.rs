//! Planar geometry primitives.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plane: `x` meters east and `y` meters north of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position2 {
    pub x: f64,
    pub y: f64,
}

impl Position2 {
    pub const ORIGIN: Position2 = Position2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Position2) -> f64 {
        (self - other).norm()
    }

    pub fn distance_sq(self, other: Position2) -> f64 {
        (self - other).norm_sq()
    }

    pub fn dot(self, other: Position2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Scalar (z-component) cross product.
    pub fn cross(self, other: Position2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Angle of the vector from `self` to `other`, in `(-π, π]`.
    pub fn bearing_to(self, other: Position2) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    pub fn lerp(self, other: Position2, s: f64) -> Position2 {
        self + (other - self) * s
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Position2 {
        Position2::new(-self.y, self.x)
    }
}

impl Add for Position2 {
    type Output = Position2;
    fn add(self, rhs: Position2) -> Position2 {
        Position2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Position2 {
    fn add_assign(&mut self, rhs: Position2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Position2 {
    type Output = Position2;
    fn sub(self, rhs: Position2) -> Position2 {
        Position2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Position2 {
    type Output = Position2;
    fn mul(self, rhs: f64) -> Position2 {
        Position2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Position2 {
    type Output = Position2;
    fn neg(self) -> Position2 {
        Position2::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangular operating region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Position2,
    pub upper: Position2,
}

impl Region {
    pub fn new(lower: Position2, upper: Position2) -> Result<Self> {
        let region = Self { lower, upper };
        region.validate()?;
        Ok(region)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite()) {
            return Err(Error::InvalidConfig("region bounds must be finite".into()));
        }
        if self.lower.x >= self.upper.x || self.lower.y >= self.upper.y {
            return Err(Error::InvalidConfig(format!(
                "region lower {:?} must be strictly below upper {:?}",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.upper.x - self.lower.x
    }

    pub fn height(&self) -> f64 {
        self.upper.y - self.lower.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Position2 {
        self.lower.lerp(self.upper, 0.5)
    }

    pub fn contains(&self, p: Position2) -> bool {
        p.x >= self.lower.x && p.x <= self.upper.x && p.y >= self.lower.y && p.y <= self.upper.y
    }

    pub fn clamp(&self, p: Position2) -> Position2 {
        Position2::new(
            p.x.clamp(self.lower.x, self.upper.x),
            p.y.clamp(self.lower.y, self.upper.y),
        )
    }

    /// Corners in counter-clockwise order starting from `lower`.
    pub fn corners(&self) -> [Position2; 4] {
        [
            self.lower,
            Position2::new(self.upper.x, self.lower.y),
            self.upper,
            Position2::new(self.lower.x, self.upper.y),
        ]
    }

    /// Largest distance from `p` to any point of the region.
    pub fn max_distance_from(&self, p: Position2) -> f64 {
        self.corners()
            .iter()
            .map(|c| c.distance(p))
            .fold(0.0, f64::max)
    }

    /// Position along the perimeter, measured counter-clockwise from `lower`.
    /// Only meaningful for points on the boundary.
    pub fn perimeter_coordinate(&self, p: Position2) -> f64 {
        let (w, h) = (self.width(), self.height());
        let dx0 = (p.y - self.lower.y).abs();
        let dx1 = (p.x - self.upper.x).abs();
        let dy1 = (p.y - self.upper.y).abs();
        let dy0 = (p.x - self.lower.x).abs();
        let m = dx0.min(dx1).min(dy1).min(dy0);
        if m == dx0 {
            (p.x - self.lower.x).clamp(0.0, w)
        } else if m == dx1 {
            w + (p.y - self.lower.y).clamp(0.0, h)
        } else if m == dy1 {
            w + h + (self.upper.x - p.x).clamp(0.0, w)
        } else {
            2.0 * w + h + (self.upper.y - p.y).clamp(0.0, h)
        }
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width() + self.height())
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_positive(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Total length of a polyline.
pub fn polyline_length(points: &[Position2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Resamples a polyline at (approximately) uniform arc-length spacing,
/// always keeping both endpoints.
pub fn resample_polyline(points: &[Position2], spacing: f64) -> Vec<Position2> {
    if points.len() < 2 || spacing <= 0.0 {
        return points.to_vec();
    }
    let total = polyline_length(points);
    let n = ((total / spacing).ceil() as usize).max(1);
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    out.push(points[0]);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 1..n {
        let target = k as f64 * step;
        while seg + 1 < points.len() - 1
            && seg_start + points[seg].distance(points[seg + 1]) < target
        {
            seg_start += points[seg].distance(points[seg + 1]);
            seg += 1;
        }
        let len = points[seg].distance(points[seg + 1]);
        let s = if len > 0.0 { ((target - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg].lerp(points[seg + 1], s));
    }
    out.push(*points.last().unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_angle(-0.5 - 2.0 * PI) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn region_rejects_inverted_bounds() {
        assert!(Region::new(Position2::new(1.0, 0.0), Position2::new(0.0, 1.0)).is_err());
        assert!(Region::new(Position2::new(0.0, 0.0), Position2::new(1.0, 1.0)).is_ok());
    }

    #[test]
    fn perimeter_coordinate_walks_ccw() {
        let r = Region::new(Position2::ORIGIN, Position2::new(2.0, 1.0)).unwrap();
        assert_eq!(r.perimeter_coordinate(Position2::new(1.0, 0.0)), 1.0);
        assert_eq!(r.perimeter_coordinate(Position2::new(2.0, 0.5)), 2.5);
        assert_eq!(r.perimeter_coordinate(Position2::new(1.5, 1.0)), 3.5);
        assert_eq!(r.perimeter_coordinate(Position2::new(0.0, 0.25)), 5.75);
    }

    #[test]
    fn resample_keeps_endpoints() {
        let pts = [Position2::new(0.0, 0.0), Position2::new(10.0, 0.0), Position2::new(10.0, 5.0)];
        let r = resample_polyline(&pts, 1.0);
        assert_eq!(r.len(), 16);
        assert_eq!(r[0], pts[0]);
        assert_eq!(*r.last().unwrap(), pts[2]);
        for w in r.windows(2) {
            assert!((w[0].distance(w[1]) - 1.0).abs() < 1e-9);
        }
    }
}
