//! Affinity between a tracklet and a candidate detection:
//! `App × Mot × Shp`, each factor in `[0, 1]`.
//!
//! Appearance compares a discounted average of the tracklet's histograms with
//! the candidate's histogram through the Bhattacharyya coefficient. Motion and
//! shape map the distance between a constant-velocity Kalman prediction and
//! the candidate box through an unnormalised Gaussian, so a perfect match
//! scores exactly 1.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, pow, sqrt};
use thiserror::Error;

use crate::graph::{ACGraph, StateId};
use crate::types::{check_histogram, BBox, Observation, ObservationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AffinityError {
    #[error("histograms have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Histogram(#[from] ObservationError),
    #[error("no histograms to average")]
    NoMembers,
    #[error("frame {frame} is not after the last filtered frame {last}")]
    StaleFrame { frame: u32, last: u32 },
    #[error("box sizes must be positive")]
    InvalidSize,
    #[error("invalid affinity configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("parent must lie in an earlier frame than the child")]
    FrameOrder,
    #[error("unknown or merged state {0}")]
    UnknownState(StateId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityConfig {
    /// Motion variance in pixels squared.
    pub var_mot: f64,
    /// Shape variance in pixels squared.
    pub var_shp: f64,
    /// Per-frame discount of older appearance histograms.
    pub discount: f64,
    /// Per-frame process noise on velocity.
    pub process_noise: f64,
    /// Measurement noise on the box center.
    pub measurement_noise: f64,
    /// Velocity variance before a second measurement is seen.
    pub init_velocity_var: f64,
    /// Weight kept by the smoothed shape at each update.
    pub shape_smoothing: f64,
    pub c_thre: f64,
    pub a_thre: f64,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            var_mot: 20.0 * 20.0,
            var_shp: 50.0 * 50.0,
            discount: 0.9,
            process_noise: 1.0,
            measurement_noise: 10.0,
            init_velocity_var: 1e4,
            shape_smoothing: 0.5,
            c_thre: 0.5,
            a_thre: 0.1,
        }
    }
}

impl AffinityConfig {
    pub fn validate(&self) -> Result<(), AffinityError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.var_mot) || !positive(self.var_shp) {
            return Err(AffinityError::InvalidConfig("variances must be positive"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(AffinityError::InvalidConfig("discount must lie in (0, 1]"));
        }
        if !(self.a_thre >= 0.0 && self.a_thre < self.c_thre && self.c_thre <= 1.0) {
            return Err(AffinityError::InvalidConfig("thresholds must satisfy 0 <= a_thre < c_thre <= 1"));
        }
        if !(self.process_noise >= 0.0 && positive(self.measurement_noise) && positive(self.init_velocity_var)) {
            return Err(AffinityError::InvalidConfig("filter noises must be positive"));
        }
        if !(0.0..1.0).contains(&self.shape_smoothing) {
            return Err(AffinityError::InvalidConfig("shape smoothing must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityScore {
    pub app: f64,
    pub mot: f64,
    pub shp: f64,
    pub total: f64,
}

impl AffinityScore {
    pub fn new(app: f64, mot: f64, shp: f64) -> Self {
        Self { app, mot, shp, total: app * mot * shp }
    }
}

pub fn bhattacharyya_coefficient(p: &[f64], q: &[f64]) -> Result<f64, AffinityError> {
    if p.len() != q.len() {
        return Err(AffinityError::LengthMismatch(p.len(), q.len()));
    }
    check_histogram(p)?;
    check_histogram(q)?;
    let bc: f64 = p.iter().zip(q).map(|(a, b)| sqrt(a * b)).sum();
    Ok(bc.clamp(0.0, 1.0))
}

/// Discounted average of `(frame, histogram)` members, newest last.
pub fn tracklet_appearance(members: &[(u32, &[f64])], discount: f64) -> Result<Vec<f64>, AffinityError> {
    let mut acc: Option<AppearanceAccumulator> = None;
    for &(frame, h) in members {
        match acc.as_mut() {
            None => acc = Some(AppearanceAccumulator::new(frame, h)?),
            Some(a) => a.push(frame, h, discount)?,
        }
    }
    Ok(acc.ok_or(AffinityError::NoMembers)?.histogram())
}

/// Running `Σ γ^age · h` that can be extended one member at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceAccumulator {
    sum: Vec<f64>,
    last_frame: u32,
}

impl AppearanceAccumulator {
    pub fn new(frame: u32, h: &[f64]) -> Result<Self, AffinityError> {
        check_histogram(h)?;
        Ok(Self { sum: h.to_vec(), last_frame: frame })
    }

    pub fn push(&mut self, frame: u32, h: &[f64], discount: f64) -> Result<(), AffinityError> {
        if h.len() != self.sum.len() {
            return Err(AffinityError::LengthMismatch(self.sum.len(), h.len()));
        }
        check_histogram(h)?;
        let age = frame.saturating_sub(self.last_frame);
        let w = pow(discount, f64::from(age));
        for (s, v) in self.sum.iter_mut().zip(h) {
            *s = *s * w + v;
        }
        self.last_frame = self.last_frame.max(frame);
        Ok(())
    }

    pub fn histogram(&self) -> Vec<f64> {
        let mass: f64 = self.sum.iter().sum();
        self.sum.iter().map(|v| v / mass).collect()
    }
}

/// Joint colour histogram with `bins` levels per channel, normalised.
/// An empty patch yields the uniform histogram.
pub fn rgb_joint_histogram<I>(pixels: I, bins: usize) -> Vec<f64>
where
    I: IntoIterator<Item = [u8; 3]>,
{
    let bins = bins.clamp(1, 256);
    let mut h = vec![0.0; bins * bins * bins];
    let mut n = 0usize;
    for [r, g, b] in pixels {
        let q = |c: u8| usize::from(c) * bins / 256;
        h[(q(r) * bins + q(g)) * bins + q(b)] += 1.0;
        n += 1;
    }
    if n == 0 {
        let u = 1.0 / h.len() as f64;
        h.iter_mut().for_each(|v| *v = u);
    } else {
        h.iter_mut().for_each(|v| *v /= n as f64);
    }
    h
}

pub fn motion_affinity(predicted: [f64; 2], observed: [f64; 2], var_mot: f64) -> f64 {
    let dx = predicted[0] - observed[0];
    let dy = predicted[1] - observed[1];
    exp(-(dx * dx + dy * dy) / (2.0 * var_mot))
}

pub fn shape_affinity(predicted: [f64; 2], observed: [f64; 2], var_shp: f64) -> Result<f64, AffinityError> {
    if predicted.iter().chain(observed.iter()).any(|v| v.partial_cmp(&0.0) != Some(core::cmp::Ordering::Greater)) {
        return Err(AffinityError::InvalidSize);
    }
    let dw = predicted[0] - observed[0];
    let dh = predicted[1] - observed[1];
    Ok(exp(-(dw * dw + dh * dh) / (2.0 * var_shp)))
}

/// Predicted center, shape and covariance of a track at a later frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub center: [f64; 2],
    pub shape: [f64; 2],
    pub covariance: [[f64; 4]; 4],
}

/// Constant-velocity filter on the box center plus a smoothed box size.
///
/// The first measurement fixes the position with zero velocity and a wide
/// velocity prior. The second one initialises velocity from the two points,
/// with the matching covariance, so noiseless constant-velocity input is
/// tracked exactly from then on.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    /// `(x, y, vx, vy)`.
    pub mean: [f64; 4],
    pub covariance: [[f64; 4]; 4],
    pub shape_mean: [f64; 2],
    pub last_frame: u32,
    updates: u32,
    process_noise: f64,
    measurement_noise: f64,
    shape_smoothing: f64,
}

impl KalmanTrack {
    pub fn new(frame: u32, bbox: &BBox, cfg: &AffinityConfig) -> Self {
        let [x, y] = bbox.center();
        let r = cfg.measurement_noise;
        let v = cfg.init_velocity_var;
        Self {
            mean: [x, y, 0.0, 0.0],
            covariance: diag([r, r, v, v]),
            shape_mean: bbox.size(),
            last_frame: frame,
            updates: 1,
            process_noise: cfg.process_noise,
            measurement_noise: r,
            shape_smoothing: cfg.shape_smoothing,
        }
    }

    pub fn from_observation(obs: &Observation, cfg: &AffinityConfig) -> Self {
        Self::new(obs.frame, &obs.bbox, cfg)
    }

    pub fn predict(&self, to_frame: u32) -> Result<Prediction, AffinityError> {
        if to_frame <= self.last_frame {
            return Err(AffinityError::StaleFrame { frame: to_frame, last: self.last_frame });
        }
        let (mean, cov) = self.propagate(to_frame - self.last_frame);
        Ok(Prediction { center: [mean[0], mean[1]], shape: self.shape_mean, covariance: cov })
    }

    pub fn update(&mut self, frame: u32, bbox: &BBox) -> Result<(), AffinityError> {
        if frame <= self.last_frame {
            return Err(AffinityError::StaleFrame { frame, last: self.last_frame });
        }
        if !bbox.is_valid() {
            return Err(AffinityError::InvalidSize);
        }
        let dt = f64::from(frame - self.last_frame);
        let z = bbox.center();
        let r = self.measurement_noise;
        if self.updates == 1 {
            let vx = (z[0] - self.mean[0]) / dt;
            let vy = (z[1] - self.mean[1]) / dt;
            self.mean = [z[0], z[1], vx, vy];
            let mut p = [[0.0; 4]; 4];
            for i in 0..2 {
                p[i][i] = r;
                p[i][i + 2] = r / dt;
                p[i + 2][i] = r / dt;
                p[i + 2][i + 2] = 2.0 * r / (dt * dt);
            }
            self.covariance = p;
        } else {
            let (mean, p) = self.propagate(frame - self.last_frame);
            // Innovation covariance S = P[0..2, 0..2] + rI, inverted in closed form.
            let s = [[p[0][0] + r, p[0][1]], [p[1][0], p[1][1] + r]];
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
            let mut k = [[0.0; 2]; 4];
            for (i, row) in k.iter_mut().enumerate() {
                for (j, kij) in row.iter_mut().enumerate() {
                    *kij = p[i][0] * inv[0][j] + p[i][1] * inv[1][j];
                }
            }
            let innov = [z[0] - mean[0], z[1] - mean[1]];
            let mut m = mean;
            for (i, mi) in m.iter_mut().enumerate() {
                *mi += k[i][0] * innov[0] + k[i][1] * innov[1];
            }
            let mut post = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    post[i][j] = p[i][j] - (k[i][0] * p[0][j] + k[i][1] * p[1][j]);
                }
            }
            self.mean = m;
            self.covariance = symmetrize(post);
        }
        let a = self.shape_smoothing;
        let size = bbox.size();
        self.shape_mean = [a * self.shape_mean[0] + (1.0 - a) * size[0], a * self.shape_mean[1] + (1.0 - a) * size[1]];
        self.last_frame = frame;
        self.updates += 1;
        Ok(())
    }

    fn propagate(&self, steps: u32) -> ([f64; 4], [[f64; 4]; 4]) {
        let mut mean = self.mean;
        let mut p = self.covariance;
        for _ in 0..steps {
            mean[0] += mean[2];
            mean[1] += mean[3];
            // P <- F P F^T with F = [I I; 0 I], then add velocity noise.
            let mut fp = p;
            for j in 0..4 {
                fp[0][j] = p[0][j] + p[2][j];
                fp[1][j] = p[1][j] + p[3][j];
            }
            let mut fpf = fp;
            for row in fpf.iter_mut() {
                row[0] += row[2];
                row[1] += row[3];
            }
            fpf[2][2] += self.process_noise;
            fpf[3][3] += self.process_noise;
            p = symmetrize(fpf);
        }
        (mean, p)
    }
}

fn diag(d: [f64; 4]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        m[i][i] = d[i];
    }
    m
}

#[allow(clippy::needless_range_loop)]
fn symmetrize(mut m: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
    for i in 0..4 {
        for j in i + 1..4 {
            let v = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

pub fn trace(m: &[[f64; 4]; 4]) -> f64 {
    (0..4).map(|i| m[i][i]).sum()
}

/// Motion, shape and appearance summary of a tracklet up to some state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackletFeatures {
    pub kalman: KalmanTrack,
    pub appearance: Option<AppearanceAccumulator>,
}

impl TrackletFeatures {
    pub fn new(obs: &Observation, cfg: &AffinityConfig) -> Result<Self, AffinityError> {
        let appearance = match &obs.appearance {
            Some(h) => Some(AppearanceAccumulator::new(obs.frame, h)?),
            None => None,
        };
        Ok(Self { kalman: KalmanTrack::from_observation(obs, cfg), appearance })
    }

    /// Extend with the next member of the tracklet.
    pub fn extend(&mut self, obs: &Observation, cfg: &AffinityConfig) -> Result<(), AffinityError> {
        self.kalman.update(obs.frame, &obs.bbox)?;
        if let Some(h) = &obs.appearance {
            match self.appearance.as_mut() {
                Some(acc) => acc.push(obs.frame, h, cfg.discount)?,
                None => self.appearance = Some(AppearanceAccumulator::new(obs.frame, h)?),
            }
        }
        Ok(())
    }

    pub fn score(&self, child: &Observation, cfg: &AffinityConfig) -> Result<AffinityScore, AffinityError> {
        let pred = self.kalman.predict(child.frame)?;
        let mot = motion_affinity(pred.center, child.bbox.center(), cfg.var_mot);
        let shp = shape_affinity(pred.shape, child.bbox.size(), cfg.var_shp)?;
        let app = match (&self.appearance, &child.appearance) {
            (Some(acc), Some(h)) => bhattacharyya_coefficient(&acc.histogram(), h)?,
            _ => 1.0,
        };
        Ok(AffinityScore::new(app, mot, shp))
    }
}

/// Features of the clear lineage ending at `id`, oldest member first.
pub fn lineage_features(graph: &ACGraph, id: StateId, cfg: &AffinityConfig) -> Result<TrackletFeatures, AffinityError> {
    let lineage = graph.clear_lineage(id);
    let mut it = lineage.iter().map(|&s| &graph.node(s).expect("lineage ids exist").obs);
    let first = it.next().ok_or(AffinityError::UnknownState(id))?;
    let mut f = TrackletFeatures::new(first, cfg)?;
    for obs in it {
        f.extend(obs, cfg)?;
    }
    Ok(f)
}

/// Affinity of `child` to the tracklet ending at `parent`.
pub fn combined_affinity(
    graph: &ACGraph,
    child: StateId,
    parent: StateId,
    cfg: &AffinityConfig,
) -> Result<AffinityScore, AffinityError> {
    let c = graph.node(child).filter(|n| !n.is_merged()).ok_or(AffinityError::UnknownState(child))?;
    let p = graph.node(parent).filter(|n| !n.is_merged()).ok_or(AffinityError::UnknownState(parent))?;
    if p.frame >= c.frame {
        return Err(AffinityError::FrameOrder);
    }
    lineage_features(graph, parent, cfg)?.score(&c.obs, cfg)
}
