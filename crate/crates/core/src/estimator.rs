//! Radar localization: nonlinear least-squares track initialization with a
//! Fisher-information covariance, followed by extended Kalman filter updates.
//!
//! The estimated state of a radar is `θ = (x_r, y_r, P_E)`. A measurement
//! `(S_E, φ)` taken at `x` has mean `h(x, θ) = (P_E G_I λ² / ((4π)² R²),
//! atan2(y_r - y, x_r - x))`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Position2};
use crate::radar::{Measurement, NoiseModel};

/// Smallest ERP an estimate may carry, watts.
pub const MIN_ERP: f64 = 1e-3;

/// Mean and covariance of one radar's `(x_r, y_r, P_E)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarEstimate {
    pub radar_id: usize,
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl RadarEstimate {
    pub fn position(&self) -> Position2 {
        Position2::new(self.mean[0], self.mean[1])
    }

    pub fn erp(&self) -> f64 {
        self.mean[2]
    }
}

/// Known constants of the measurement model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub g_i: f64,
    pub lambda: f64,
    pub noise: NoiseModel,
}

impl MeasurementModel {
    /// `G_I λ² / (4π)²`: received power per watt of ERP at unit range.
    pub fn gain(&self) -> f64 {
        self.g_i * self.lambda * self.lambda / (16.0 * PI * PI)
    }

    /// Noise-free `(S_E, φ)`.
    pub fn predict(&self, location: Position2, mean: &Vector3<f64>) -> Result<Vector2<f64>> {
        let dx = mean[0] - location.x;
        let dy = mean[1] - location.y;
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            return Err(Error::ZeroRange);
        }
        Ok(Vector2::new(self.gain() * mean[2] / r2, dy.atan2(dx)))
    }

    /// Innovation `z - h`, angle wrapped to `(-π, π]`.
    pub fn residual(&self, m: &Measurement, mean: &Vector3<f64>) -> Result<Vector2<f64>> {
        let h = self.predict(m.location, mean)?;
        Ok(Vector2::new(m.s_e - h[0], wrap_angle(m.phi - h[1])))
    }
}

/// Jacobian of the measurement mean with respect to `(x_r, y_r, P_E)`.
pub fn measurement_jacobian(model: &MeasurementModel, location: Position2, mean: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
    let dx = mean[0] - location.x;
    let dy = mean[1] - location.y;
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        return Err(Error::ZeroRange);
    }
    let per_watt = model.gain() / r2;
    let s = per_watt * mean[2];
    Ok(Matrix2x3::new(
        -2.0 * s * dx / r2,
        -2.0 * s * dy / r2,
        per_watt,
        -dy / r2,
        dx / r2,
        0.0,
    ))
}

fn whitened_residuals(model: &MeasurementModel, ms: &[Measurement], mean: &Vector3<f64>) -> Result<(f64, Vec<f64>)> {
    let mut r = Vec::with_capacity(2 * ms.len());
    let mut cost = 0.0;
    for m in ms {
        let e = model.residual(m, mean)?;
        let a = e[0] / model.noise.sigma_se;
        let b = e[1] / model.noise.sigma_phi;
        cost += a * a + b * b;
        r.push(a);
        r.push(b);
    }
    Ok((cost, r))
}

/// Fisher information `Jᵀ Σ⁻¹ J` of the stacked measurements at `mean`.
pub fn fisher_information(model: &MeasurementModel, locations: &[Position2], mean: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let w = Matrix2::new(
        1.0 / (model.noise.sigma_se * model.noise.sigma_se),
        0.0,
        0.0,
        1.0 / (model.noise.sigma_phi * model.noise.sigma_phi),
    );
    let mut f = Matrix3::zeros();
    for &x in locations {
        let j = measurement_jacobian(model, x, mean)?;
        f += j.transpose() * w * j;
    }
    Ok(f)
}

/// Inverts a Fisher information matrix, rejecting numerically rank-deficient
/// geometry (judged on the diagonally scaled matrix).
pub fn invert_fim(f: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let d = Vector3::new(f[(0, 0)], f[(1, 1)], f[(2, 2)]);
    if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::RankDeficient);
    }
    let s = d.map(|v| 1.0 / v.sqrt());
    let scaled = Matrix3::from_fn(|i, j| f[(i, j)] * s[i] * s[j]);
    let eig = SymmetricEigen::new(scaled);
    let min = eig.eigenvalues.min();
    if min < 1e-9 * eig.eigenvalues.max() {
        return Err(Error::RankDeficient);
    }
    let inv_scaled = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();
    let cov = Matrix3::from_fn(|i, j| inv_scaled[(i, j)] * s[i] * s[j]);
    Ok(symmetrize(&cov))
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes and clamps negative eigenvalues to zero.
pub fn make_psd(m: &Matrix3<f64>) -> Matrix3<f64> {
    let s = symmetrize(m);
    let eig = SymmetricEigen::new(s);
    if eig.eigenvalues.min() >= 0.0 {
        return s;
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    symmetrize(&(eig.eigenvectors * Matrix3::from_diagonal(&clamped) * eig.eigenvectors.transpose()))
}

/// Closed-form least-squares ERP for a fixed radar position.
fn best_erp(model: &MeasurementModel, ms: &[Measurement], at: Position2) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for m in ms {
        let r2 = m.location.distance_sq(at).max(1.0);
        let g = model.gain() / r2;
        num += g * m.s_e;
        den += g * g;
    }
    if den > 0.0 {
        (num / den).max(MIN_ERP)
    } else {
        MIN_ERP
    }
}

/// Centroid of the forward intersections of pairs of bearing lines.
fn bearing_intersection_centroid(ms: &[Measurement]) -> Option<Position2> {
    let step = (ms.len() / 40).max(1);
    let sub: Vec<&Measurement> = ms.iter().step_by(step).collect();
    let mut sum = Position2::ORIGIN;
    let mut count = 0usize;
    for i in 0..sub.len() {
        for j in (i + 1)..sub.len() {
            let (a, b) = (sub[i], sub[j]);
            let da = Position2::from_polar(1.0, a.phi);
            let db = Position2::from_polar(1.0, b.phi);
            let den = da.cross(db);
            if den.abs() < 0.05 {
                continue;
            }
            let w = b.location - a.location;
            let ta = w.cross(db) / den;
            let tb = w.cross(da) / den;
            if ta > 0.0 && tb > 0.0 {
                sum += a.location + da * ta;
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum * (1.0 / count as f64))
}

/// Levenberg-Marquardt refinement of `(x_r, y_r, P_E)`.
fn levenberg_marquardt(model: &MeasurementModel, ms: &[Measurement], start: Vector3<f64>) -> Result<(Vector3<f64>, f64)> {
    let mut theta = start;
    let (mut cost, _) = whitened_residuals(model, ms, &theta)?;
    let mut mu = 1e-3;
    for _ in 0..100 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for m in ms {
            let j = measurement_jacobian(model, m.location, &theta)?;
            let e = model.residual(m, &theta)?;
            let jw = Matrix2x3::from_rows(&[
                j.row(0) / model.noise.sigma_se,
                j.row(1) / model.noise.sigma_phi,
            ]);
            let ew = Vector2::new(e[0] / model.noise.sigma_se, e[1] / model.noise.sigma_phi);
            jtj += jw.transpose() * jw;
            jtr += jw.transpose() * ew;
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let mut cand = theta + step;
            cand[2] = cand[2].max(MIN_ERP);
            match whitened_residuals(model, ms, &cand) {
                Ok((c, _)) if c < cost => {
                    let rel = (cost - c) / cost.max(1e-300);
                    theta = cand;
                    cost = c;
                    mu = (mu * 0.3).max(1e-12);
                    improved = true;
                    if rel < 1e-12 {
                        return Ok((theta, cost));
                    }
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }
    Ok((theta, cost))
}

/// Initializes a radar track from a batch of measurements by multi-start
/// nonlinear least squares. The covariance is the inverse Fisher
/// information at the solution. `fallback` seeds one of the starts (the
/// centre of the operating region).
pub fn nls_initialize(model: &MeasurementModel, ms: &[Measurement], fallback: Position2) -> Result<RadarEstimate> {
    if ms.len() < 2 {
        return Err(Error::RankDeficient);
    }
    let first = ms[0].location;
    if ms.iter().all(|m| m.location.distance_sq(first) < 1e-6) {
        return Err(Error::RankDeficient);
    }
    let mut seeds = Vec::with_capacity(3);
    if let Some(c) = bearing_intersection_centroid(ms) {
        seeds.push(c);
    }
    // Strongest measurement: place the radar along its bearing at the range
    // implied by the nominal ERP of the batch.
    let strongest = ms.iter().max_by(|a, b| a.s_e.total_cmp(&b.s_e)).unwrap();
    let nominal_erp = 1e5;
    let range = if strongest.s_e > 0.0 { (model.gain() * nominal_erp / strongest.s_e).sqrt() } else { 5000.0 };
    seeds.push(strongest.location + Position2::from_polar(range.min(50_000.0), strongest.phi));
    seeds.push(fallback);

    let mut best: Option<(Vector3<f64>, f64)> = None;
    for s in seeds {
        if ms.iter().any(|m| m.location.distance_sq(s) == 0.0) {
            continue;
        }
        let start = Vector3::new(s.x, s.y, best_erp(model, ms, s));
        if let Ok((theta, cost)) = levenberg_marquardt(model, ms, start) {
            if best.map_or(true, |(_, c)| cost < c) {
                best = Some((theta, cost));
            }
        }
    }
    let (mean, _) = best.ok_or(Error::RankDeficient)?;
    let locations: Vec<Position2> = ms.iter().map(|m| m.location).collect();
    let cov = invert_fim(&fisher_information(model, &locations, &mean)?)?;
    Ok(RadarEstimate { radar_id: ms[0].radar_id, mean, cov })
}

/// Covariance after a hypothetical measurement at `location`; the update does
/// not depend on the measured value.
pub fn ekf_covariance_update(model: &MeasurementModel, est: &RadarEstimate, location: Position2) -> Result<Matrix3<f64>> {
    let j = measurement_jacobian(model, location, &est.mean)?;
    let (_, cov) = kalman_gain_and_cov(model, &est.cov, &j)?;
    Ok(cov)
}

fn kalman_gain_and_cov(model: &MeasurementModel, cov: &Matrix3<f64>, j: &Matrix2x3<f64>) -> Result<(nalgebra::Matrix3x2<f64>, Matrix3<f64>)> {
    let sz = model.noise.sigma_z();
    let s = j * cov * j.transpose() + sz;
    let s_inv = s.try_inverse().ok_or(Error::Singular("innovation covariance"))?;
    let k = cov * j.transpose() * s_inv;
    let ikj = Matrix3::identity() - k * j;
    let joseph = ikj * cov * ikj.transpose() + k * sz * k.transpose();
    Ok((k, make_psd(&joseph)))
}

/// One EKF correction with measurement `m`.
pub fn ekf_update(model: &MeasurementModel, est: &RadarEstimate, m: &Measurement) -> Result<RadarEstimate> {
    let j = measurement_jacobian(model, m.location, &est.mean)?;
    let innovation = model.residual(m, &est.mean)?;
    let (k, cov) = kalman_gain_and_cov(model, &est.cov, &j)?;
    let mut mean = est.mean + k * innovation;
    mean[2] = mean[2].max(MIN_ERP);
    Ok(RadarEstimate { radar_id: est.radar_id, mean, cov })
}

/// What [`TrackStore::ingest`] did with a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IngestOutcome {
    /// Stored; not enough data to initialize yet.
    Stored,
    /// Track initialized from the stored batch.
    Initialized,
    /// Initialization attempted and deferred (degenerate geometry).
    Deferred,
    /// EKF correction applied.
    Updated,
    /// EKF correction skipped (singular innovation or zero range).
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Track {
    measurements: Vec<Measurement>,
    estimate: Option<RadarEstimate>,
    next_attempt: usize,
}

/// Per-radar measurement lists and estimates, with known data association.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackStore {
    model: MeasurementModel,
    fallback: Position2,
    tracks: BTreeMap<usize, Track>,
}

/// Exported per-radar track state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub radar_id: usize,
    pub measurements: usize,
    pub estimate: Option<RadarEstimate>,
}

impl TrackStore {
    pub fn new(model: MeasurementModel, fallback: Position2) -> Self {
        Self { model, fallback, tracks: BTreeMap::new() }
    }

    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    /// Adds a measurement; initializes the track once `n_z_min` measurements
    /// are stored, then applies EKF corrections. While initialization keeps
    /// failing it is retried as the batch grows by a quarter.
    pub fn ingest(&mut self, m: Measurement, n_z_min: usize) -> IngestOutcome {
        let model = self.model;
        let fallback = self.fallback;
        let track = self.tracks.entry(m.radar_id).or_insert_with(|| Track {
            measurements: Vec::new(),
            estimate: None,
            next_attempt: n_z_min.max(1),
        });
        track.measurements.push(m);
        if let Some(est) = &track.estimate {
            return match ekf_update(&model, est, &m) {
                Ok(e) => {
                    track.estimate = Some(e);
                    IngestOutcome::Updated
                }
                Err(_) => IngestOutcome::Skipped,
            };
        }
        let n = track.measurements.len();
        if n < track.next_attempt {
            return IngestOutcome::Stored;
        }
        let batch = subsample(&track.measurements, 400);
        match nls_initialize(&model, &batch, fallback) {
            Ok(mut e) => {
                e.radar_id = m.radar_id;
                track.estimate = Some(e);
                IngestOutcome::Initialized
            }
            Err(_) => {
                track.next_attempt = n + (n / 4).max(1);
                IngestOutcome::Deferred
            }
        }
    }

    /// Initialized estimates, ordered by radar id.
    pub fn estimates(&self) -> Vec<RadarEstimate> {
        self.tracks.values().filter_map(|t| t.estimate).collect()
    }

    pub fn estimate(&self, radar_id: usize) -> Option<&RadarEstimate> {
        self.tracks.get(&radar_id).and_then(|t| t.estimate.as_ref())
    }

    pub fn measurements(&self, radar_id: usize) -> &[Measurement] {
        self.tracks.get(&radar_id).map_or(&[], |t| t.measurements.as_slice())
    }

    pub fn summary(&self) -> Vec<TrackSummary> {
        self.tracks
            .iter()
            .map(|(&id, t)| TrackSummary { radar_id: id, measurements: t.measurements.len(), estimate: t.estimate })
            .collect()
    }

    /// Radars with stored measurements but no estimate yet.
    pub fn pending(&self) -> Vec<usize> {
        self.tracks.iter().filter(|(_, t)| t.estimate.is_none()).map(|(&id, _)| id).collect()
    }

    pub fn total_measurements(&self) -> usize {
        self.tracks.values().map(|t| t.measurements.len()).sum()
    }
}

/// Evenly thins `ms` to at most `max` elements, always keeping the last.
fn subsample(ms: &[Measurement], max: usize) -> Vec<Measurement> {
    if ms.len() <= max {
        return ms.to_vec();
    }
    let n = ms.len();
    (0..max).map(|k| ms[(k * (n - 1)) / (max - 1)]).collect()
}
