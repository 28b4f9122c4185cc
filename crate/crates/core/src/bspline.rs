//! Unclamped uniform B-spline trajectories.
//!
//! A trajectory with `N_c` control points and degree `p` on `[t0, tf]` uses
//! the uniform knot vector `t_i = t0 + (i - p) Δ`, `i = 0..=N_c + p`, with
//! `Δ = (tf - t0) / (N_c - p)`. The curve is defined exactly on
//! `[t_p, t_{N_c}] = [t0, tf]`. Endpoints are not interpolated by
//! construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polyline_length, Position2};

/// Velocity, turn rate and curvature of a planar trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatOutputs {
    pub v: f64,
    pub u: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineTrajectory {
    pub control_points: Vec<Position2>,
    pub degree: usize,
    pub t0: f64,
    pub tf: f64,
}

/// Cox-de Boor recursion for `N_{i,p}(t)` on an arbitrary knot vector, with
/// half-open knot spans.
pub fn cox_de_boor(i: usize, p: usize, t: f64, knots: &[f64]) -> f64 {
    if p == 0 {
        return if knots[i] <= t && t < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut out = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        out += (t - knots[i]) / d1 * cox_de_boor(i, p - 1, t, knots);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        out += (knots[i + p + 1] - t) / d2 * cox_de_boor(i + 1, p - 1, t, knots);
    }
    out
}

/// Nonzero uniform basis functions of degree `p` and their first `n_ders`
/// derivatives at local coordinate `u ∈ [0, 1]` within a knot span of unit
/// length. Row `k` holds the `k`-th derivative of the `p + 1` active
/// functions, in control-point order.
pub fn uniform_basis_ders(p: usize, u: f64, n_ders: usize) -> Vec<Vec<f64>> {
    // Integer knots around the span [p, p + 1].
    let knot = |j: isize| j as f64;
    let span = p as isize;
    let x = p as f64 + u;
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - knot(span + 1 - j as isize);
        right[j] = knot(span + j as isize) - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![0.0; p + 1]; n_ders + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n_ders.min(p) {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r as isize <= pk as isize {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut fact = p as f64;
    for k in 1..=n_ders.min(p) {
        for v in ders[k].iter_mut() {
            *v *= fact;
        }
        fact *= (p - k) as f64;
    }
    ders
}

/// Basis weights at a fixed set of normalized curve positions, reusable for
/// any final time. Derivatives are with respect to the normalized parameter
/// and must be divided by `Δᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBasis {
    pub degree: usize,
    pub n_c: usize,
    /// Normalized positions in `[0, 1]`.
    pub fractions: Vec<f64>,
    /// Index of the first active control point at each sample.
    pub first: Vec<usize>,
    /// `weights[k][s]` holds the `p + 1` weights of derivative order `k` at sample `s`.
    pub weights: [Vec<Vec<f64>>; 3],
}

impl SampledBasis {
    pub fn new(n_c: usize, degree: usize, fractions: &[f64]) -> Self {
        let spans = (n_c - degree) as f64;
        let mut first = Vec::with_capacity(fractions.len());
        let mut weights: [Vec<Vec<f64>>; 3] = Default::default();
        for &f in fractions {
            let (span, u) = locate(f * spans, n_c - degree);
            let d = uniform_basis_ders(degree, u, 2);
            first.push(span);
            for (k, row) in d.into_iter().enumerate() {
                weights[k].push(row);
            }
        }
        Self { degree, n_c, fractions: fractions.to_vec(), first, weights }
    }

    /// Uniform samples `k / n`, `k = 0..=n`.
    pub fn uniform(n_c: usize, degree: usize, n: usize) -> Self {
        let fr: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        Self::new(n_c, degree, &fr)
    }

    /// Derivative of order `order` (normalized parameter) at sample `s`.
    pub fn eval(&self, cps: &[Position2], s: usize, order: usize) -> Position2 {
        let w = &self.weights[order][s];
        let i0 = self.first[s];
        let mut out = Position2::ORIGIN;
        for (j, wj) in w.iter().enumerate() {
            out += cps[i0 + j] * *wj;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }
}

/// Splits a normalized parameter `x ∈ [0, spans]` into span index and local
/// coordinate; the right end belongs to the last span.
fn locate(x: f64, spans: usize) -> (usize, f64) {
    let k = (x.floor() as isize).clamp(0, spans as isize - 1) as usize;
    (k, x - k as f64)
}

impl BSplineTrajectory {
    pub fn new(control_points: Vec<Position2>, degree: usize, t0: f64, tf: f64) -> Result<Self> {
        if control_points.len() < degree + 1 {
            return Err(Error::Underdetermined { points: control_points.len(), controls: degree + 1 });
        }
        if !(tf > t0) {
            return Err(Error::InvalidConfig(format!("empty time interval [{t0}, {tf}]")));
        }
        Ok(Self { control_points, degree, t0, tf })
    }

    pub fn n_c(&self) -> usize {
        self.control_points.len()
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    /// Knot spacing `Δ`.
    pub fn knot_spacing(&self) -> f64 {
        self.duration() / (self.n_c() - self.degree) as f64
    }

    /// Full knot vector of `N_c + p + 1` uniformly spaced knots.
    pub fn knots(&self) -> Vec<f64> {
        let d = self.knot_spacing();
        (0..(self.n_c() + self.degree + 1))
            .map(|i| self.t0 + (i as f64 - self.degree as f64) * d)
            .collect()
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let tol = 1e-12 * self.duration().max(1.0);
        if t < self.t0 - tol || t > self.tf + tol || t.is_nan() {
            return Err(Error::OutOfDomain { param: "t", t, lo: self.t0, hi: self.tf });
        }
        Ok(())
    }

    fn local(&self, t: f64) -> (usize, f64) {
        let x = ((t - self.t0) / self.knot_spacing()).clamp(0.0, (self.n_c() - self.degree) as f64);
        locate(x, self.n_c() - self.degree)
    }

    /// Value of basis function `i` at `t`; the right end of the domain is
    /// included in the last span.
    pub fn basis(&self, i: usize, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let (span, u) = self.local(t);
        if i < span || i > span + self.degree {
            return Ok(0.0);
        }
        Ok(uniform_basis_ders(self.degree, u, 0)[0][i - span])
    }

    /// Curve position (`order = 0`) or its first or second time derivative.
    pub fn eval(&self, t: f64, order: usize) -> Result<Position2> {
        self.check_domain(t)?;
        if order > 2 {
            return Err(Error::InvalidConfig("derivative order must be 0, 1 or 2".into()));
        }
        let (span, u) = self.local(t);
        let d = uniform_basis_ders(self.degree, u, order);
        let scale = self.knot_spacing().powi(order as i32);
        let mut out = Position2::ORIGIN;
        for (j, w) in d[order].iter().enumerate() {
            out += self.control_points[span + j] * *w;
        }
        Ok(out * (1.0 / scale))
    }

    /// Velocity, turn rate and curvature at `t`.
    pub fn flat_outputs(&self, t: f64) -> Result<FlatOutputs> {
        let d1 = self.eval(t, 1)?;
        let d2 = self.eval(t, 2)?;
        flat_from_derivatives(d1, d2)
    }

    /// Same control points on `[0, tf_new]`.
    pub fn retime(&self, tf_new: f64) -> Result<Self> {
        Self::new(self.control_points.clone(), self.degree, 0.0, tf_new)
    }

    /// Evenly spaced times covering the domain, `n + 1` of them.
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|k| self.t0 + self.duration() * k as f64 / n as f64).collect()
    }

    /// Polyline of `n + 1` curve points, for plotting and export.
    pub fn sample_polyline(&self, n: usize) -> Vec<Position2> {
        self.sample_times(n).into_iter().map(|t| self.eval(t, 0).expect("in domain")).collect()
    }

    /// Maximum speed by dense sampling plus golden-section refinement around
    /// the best sample. Returns `(v_max, t_at_max)`.
    pub fn max_speed(&self, n: usize) -> (f64, f64) {
        let times = self.sample_times(n.max(2));
        let speed = |t: f64| self.eval(t, 1).map(|d| d.norm()).unwrap_or(0.0);
        let (mut best_t, mut best_v) = (times[0], speed(times[0]));
        for &t in &times[1..] {
            let v = speed(t);
            if v > best_v {
                best_v = v;
                best_t = t;
            }
        }
        let h = self.duration() / n.max(2) as f64;
        let (mut a, mut b) = ((best_t - h).max(self.t0), (best_t + h).min(self.tf));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (speed(c), speed(d));
        for _ in 0..60 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = speed(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = speed(d);
            }
        }
        let tm = 0.5 * (a + b);
        let vm = speed(tm);
        if vm > best_v {
            (vm, tm)
        } else {
            (best_v, best_t)
        }
    }
}

/// Flat outputs from first and second time derivatives of the path.
pub fn flat_from_derivatives(d1: Position2, d2: Position2) -> Result<FlatOutputs> {
    let v2 = d1.norm_sq();
    let v = v2.sqrt();
    if v < 1e-12 {
        return Err(Error::Stationary);
    }
    let u = d1.cross(d2) / v2;
    Ok(FlatOutputs { v, u, kappa: u / v })
}

/// Result of fitting a spline to a point sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub trajectory: BSplineTrajectory,
    /// Largest distance between a data point and the curve at its parameter.
    pub max_residual: f64,
}

/// Chord-length parameters in `[0, 1]` for a point sequence.
pub fn chord_length_params(points: &[Position2]) -> Vec<f64> {
    let total = polyline_length(points);
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(points.len());
    out.push(0.0);
    for w in points.windows(2) {
        acc += w[0].distance(w[1]);
        out.push(if total > 0.0 { acc / total } else { 0.0 });
    }
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Least-squares fit on `[0, 1]` with chord-length parameters. The curve is
/// constrained to pass exactly through the first and last points.
pub fn fit_to_path(points: &[Position2], n_c: usize, degree: usize) -> Result<SplineFit> {
    fit_with_params(points, &chord_length_params(points), n_c, degree)
}

/// Least-squares fit on `[0, 1]` with given parameters, pinning both
/// endpoints of the curve to the first and last points.
pub fn fit_with_params(points: &[Position2], params: &[f64], n_c: usize, degree: usize) -> Result<SplineFit> {
    if n_c < degree + 1 || points.len() < n_c || params.len() != points.len() {
        return Err(Error::Underdetermined { points: points.len(), controls: n_c });
    }
    let m = points.len();
    let basis = SampledBasis::new(n_c, degree, params);
    let ends = SampledBasis::new(n_c, degree, &[0.0, 1.0]);
    let mut ata = DMatrix::<f64>::zeros(n_c + 2, n_c + 2);
    let mut rhs = DMatrix::<f64>::zeros(n_c + 2, 2);
    for s in 0..m {
        let i0 = basis.first[s];
        let w = &basis.weights[0][s];
        for a in 0..=degree {
            rhs[(i0 + a, 0)] += 2.0 * w[a] * points[s].x;
            rhs[(i0 + a, 1)] += 2.0 * w[a] * points[s].y;
            for b in 0..=degree {
                ata[(i0 + a, i0 + b)] += 2.0 * w[a] * w[b];
            }
        }
    }
    for (row, (s, target)) in [(0usize, points[0]), (1usize, points[m - 1])].into_iter().enumerate() {
        let i0 = ends.first[s];
        for (a, w) in ends.weights[0][s].iter().enumerate() {
            ata[(n_c + row, i0 + a)] = *w;
            ata[(i0 + a, n_c + row)] = *w;
        }
        rhs[(n_c + row, 0)] = target.x;
        rhs[(n_c + row, 1)] = target.y;
    }
    let sol = ata.lu().solve(&rhs).ok_or(Error::Singular("spline fit"))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("spline fit"));
    }
    let cps: Vec<Position2> = (0..n_c).map(|i| Position2::new(sol[(i, 0)], sol[(i, 1)])).collect();
    let max_residual = (0..m)
        .map(|s| basis.eval(&cps, s, 0).distance(points[s]))
        .fold(0.0, f64::max);
    Ok(SplineFit { trajectory: BSplineTrajectory::new(cps, degree, 0.0, 1.0)?, max_residual })
}

/// Dense column vector of x or y coordinates, for linear algebra helpers.
pub fn coords(cps: &[Position2], y: bool) -> DVector<f64> {
    DVector::from_iterator(cps.len(), cps.iter().map(|p| if y { p.y } else { p.x }))
}
