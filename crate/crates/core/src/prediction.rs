//! Quadratic least-squares trajectory prediction and the three
//! representation forms derived from it (point vector, uncertainty ellipse,
//! inscribed polygon).

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexPolygon, Cov2, GeometryError, Point2, UncertaintyEllipse, CHI2_2D_95};

/// Default history capacity, the length of an ETSI past-path container.
pub const DEFAULT_HISTORY_LEN: usize = 23;
pub const MAX_HISTORY_SPAN_S: f64 = 60.0;
pub const MAX_PREDICTION_POINTS: usize = 40;
pub const MAX_HORIZON_S: f64 = 10.0;
/// Lower bound applied to residual standard deviations before building an ellipse (m).
pub const SIGMA_FLOOR: f64 = 0.1;
pub const DEFAULT_DT: f64 = 0.25;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictionError {
    #[error("need at least 3 samples to fit a quadratic, got {0}")]
    TooFewSamples(usize),
    #[error("underdetermined fit: normal matrix is rank deficient")]
    Underdetermined,
    #[error("sample time {t} does not follow the previous sample at {prev}")]
    NonMonotonicTime { t: f64, prev: f64 },
    #[error("non-finite sample at t={0}")]
    NonFiniteSample(f64),
    #[error("prediction horizon {horizon} s exceeds {MAX_HORIZON_S} s")]
    HorizonExceeded { horizon: f64 },
    #[error("point count {0} outside 1..={MAX_PREDICTION_POINTS}")]
    InvalidPointCount(usize),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("polygon vertex count {0} outside 3..=255")]
    InvalidVertexCount(usize),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub t: f64,
    pub pos: Point2,
}

impl MotionSample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, pos: Point2::new(x, y) }
    }
}

/// Bounded window of the most recent samples of one road user.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionHistory {
    samples: VecDeque<MotionSample>,
    capacity: usize,
}

impl MotionHistory {
    pub fn new(capacity: usize) -> Self {
        Self { samples: VecDeque::with_capacity(capacity), capacity: capacity.max(1) }
    }

    /// Builds a history from samples in time order, keeping the newest `capacity`.
    pub fn from_samples(samples: impl IntoIterator<Item = MotionSample>, capacity: usize) -> Result<Self, PredictionError> {
        let mut h = Self::new(capacity);
        for s in samples {
            h.push(s)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, sample: MotionSample) -> Result<(), PredictionError> {
        if !(sample.t.is_finite() && sample.pos.x.is_finite() && sample.pos.y.is_finite()) {
            return Err(PredictionError::NonFiniteSample(sample.t));
        }
        if let Some(last) = self.samples.back() {
            if sample.t <= last.t {
                return Err(PredictionError::NonMonotonicTime { t: sample.t, prev: last.t });
            }
        }
        self.samples.push_back(sample);
        while self.samples.len() > self.capacity
            || self.samples.back().unwrap().t - self.samples.front().unwrap().t > MAX_HISTORY_SPAN_S
        {
            self.samples.pop_front();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn samples(&self) -> impl DoubleEndedIterator<Item = &MotionSample> + ExactSizeIterator {
        self.samples.iter()
    }

    pub fn last(&self) -> Option<&MotionSample> {
        self.samples.back()
    }

    /// The newest `n` samples as a new history of capacity `n`.
    pub fn truncated(&self, n: usize) -> MotionHistory {
        let skip = self.samples.len().saturating_sub(n);
        MotionHistory { samples: self.samples.iter().skip(skip).copied().collect(), capacity: n.max(1) }
    }

    pub fn translated(&self, by: Point2) -> MotionHistory {
        MotionHistory {
            samples: self.samples.iter().map(|s| MotionSample { t: s.t, pos: s.pos + by }).collect(),
            capacity: self.capacity,
        }
    }
}

/// Per-axis quadratic x(τ) = ax·τ² + bx·τ + cx with τ = t − t0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub ax: f64,
    pub bx: f64,
    pub cx: f64,
    pub ay: f64,
    pub by: f64,
    pub cy: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Time origin, the timestamp of the newest sample.
    pub t0: f64,
}

impl QuadraticFit {
    pub fn position(&self, tau: f64) -> Point2 {
        Point2::new(
            (self.ax * tau + self.bx) * tau + self.cx,
            (self.ay * tau + self.by) * tau + self.cy,
        )
    }

    pub fn velocity(&self, tau: f64) -> Point2 {
        Point2::new(2.0 * self.ax * tau + self.bx, 2.0 * self.ay * tau + self.by)
    }
}

/// Solves the 3×3 system by Gaussian elimination with partial pivoting.
/// Pivots below `tol` mean the matrix is numerically rank deficient.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [[f64; 2]; 3], tol: f64) -> Option<[[f64; 2]; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() <= tol {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            for k in 0..2 {
                rhs[row][k] -= f * rhs[col][k];
            }
        }
    }
    let mut out = [[0.0; 2]; 3];
    for row in (0..3).rev() {
        for k in 0..2 {
            let tail: f64 = ((row + 1)..3).map(|j| m[row][j] * out[j][k]).sum();
            out[row][k] = (rhs[row][k] - tail) / m[row][row];
        }
    }
    Some(out)
}

/// Independent least-squares quadratic per axis, via the normal equations.
pub fn fit_quadratic(h: &MotionHistory) -> Result<QuadraticFit, PredictionError> {
    let n = h.len();
    if n < 3 {
        return Err(PredictionError::TooFewSamples(n));
    }
    let t0 = h.last().unwrap().t;
    // normalise τ to [-1, 0] so the pivot tolerance is scale-free
    let span = h.samples().map(|s| (s.t - t0).abs()).fold(0.0, f64::max);
    if !(span > 0.0) {
        return Err(PredictionError::Underdetermined);
    }

    let mut m = [[0.0; 3]; 3];
    let mut rhs = [[0.0; 2]; 3];
    for s in h.samples() {
        let u = (s.t - t0) / span;
        let basis = [u * u, u, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            rhs[i][0] += basis[i] * s.pos.x;
            rhs[i][1] += basis[i] * s.pos.y;
        }
    }
    let sol = solve3(m, rhs, 1e-10 * n as f64).ok_or(PredictionError::Underdetermined)?;
    let span2 = span * span;
    let mut fit = QuadraticFit {
        ax: sol[0][0] / span2,
        bx: sol[1][0] / span,
        cx: sol[2][0],
        ay: sol[0][1] / span2,
        by: sol[1][1] / span,
        cy: sol[2][1],
        sigma_x: 0.0,
        sigma_y: 0.0,
        t0,
    };

    if n > 3 {
        let (ssr_x, ssr_y) = h.samples().fold((0.0, 0.0), |(sx, sy), s| {
            let p = fit.position(s.t - t0);
            (sx + (s.pos.x - p.x).powi(2), sy + (s.pos.y - p.y).powi(2))
        });
        let dof = (n - 3) as f64;
        fit.sigma_x = (ssr_x / dof).sqrt();
        fit.sigma_y = (ssr_y / dof).sqrt();
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint {
    pub t: f64,
    pub pos: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrajectory {
    pub t0: f64,
    /// Fitted position at `t0`, the start of the predicted path.
    pub origin: Point2,
    pub points: Vec<TimedPoint>,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl PredictedTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.t - self.t0)
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.points.iter().map(|p| p.pos).collect()
    }

    /// Current position followed by the predicted points: T segments.
    pub fn anchored_polyline(&self) -> Vec<Point2> {
        std::iter::once(self.origin).chain(self.points.iter().map(|p| p.pos)).collect()
    }

    /// Direction of travel over the final step, radians from east.
    /// Falls back to east when the final step has zero length.
    pub fn final_heading(&self) -> f64 {
        let n = self.points.len();
        let from = if n >= 2 { self.points[n - 2].pos } else { self.origin };
        let Some(to) = self.points.last().map(|p| p.pos) else {
            return 0.0;
        };
        let d = to - from;
        if d.norm() > 0.0 {
            d.y.atan2(d.x)
        } else {
            0.0
        }
    }
}

pub fn predict(fit: &QuadraticFit, dt: f64, count: usize) -> Result<PredictedTrajectory, PredictionError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PredictionError::InvalidStep(dt));
    }
    if !(1..=MAX_PREDICTION_POINTS).contains(&count) {
        return Err(PredictionError::InvalidPointCount(count));
    }
    let horizon = dt * count as f64;
    if horizon > MAX_HORIZON_S + TIME_EPS {
        return Err(PredictionError::HorizonExceeded { horizon });
    }
    let points = (1..=count)
        .map(|k| {
            let tau = k as f64 * dt;
            TimedPoint { t: fit.t0 + tau, pos: fit.position(tau) }
        })
        .collect();
    Ok(PredictedTrajectory {
        t0: fit.t0,
        origin: fit.position(0.0),
        points,
        sigma_x: fit.sigma_x,
        sigma_y: fit.sigma_y,
    })
}

/// Final-step footprint: centre, heading and floored along/across-track sigmas.
struct Footprint {
    center: Point2,
    heading: f64,
    sigma_along: f64,
    sigma_across: f64,
}

impl Footprint {
    fn of(pt: &PredictedTrajectory) -> Result<Self, PredictionError> {
        let last = pt.points.last().ok_or(PredictionError::EmptyTrajectory)?;
        Ok(Self {
            center: last.pos,
            heading: pt.final_heading(),
            sigma_along: pt.sigma_x.max(SIGMA_FLOOR),
            sigma_across: pt.sigma_y.max(SIGMA_FLOOR),
        })
    }
}

/// 95% ellipse at the last predicted step, oriented along the final heading.
pub fn to_ellipse(pt: &PredictedTrajectory) -> Result<UncertaintyEllipse, PredictionError> {
    let f = Footprint::of(pt)?;
    let cov = Cov2::rotated_diagonal(f.sigma_along.powi(2), f.sigma_across.powi(2), f.heading);
    Ok(UncertaintyEllipse::new(f.center, cov, CHI2_2D_95)?)
}

/// Polygon inscribed in [`to_ellipse`]'s boundary, vertices at uniform
/// parametric angles starting on the heading axis, counterclockwise.
pub fn to_polygon(pt: &PredictedTrajectory, vertices: usize) -> Result<ConvexPolygon, PredictionError> {
    if !(3..=crate::geometry::MAX_POLYGON_VERTICES).contains(&vertices) {
        return Err(PredictionError::InvalidVertexCount(vertices));
    }
    let f = Footprint::of(pt)?;
    let k = CHI2_2D_95.sqrt();
    let (a, b) = (k * f.sigma_along, k * f.sigma_across);
    let (s, c) = f.heading.sin_cos();
    let pts = (0..vertices)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / vertices as f64;
            let (u, v) = (a * phi.cos(), b * phi.sin());
            f.center + Point2::new(u * c - v * s, u * s + v * c)
        })
        .collect();
    Ok(ConvexPolygon::new(pts)?)
}
