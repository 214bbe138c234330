//! Planar primitives and the collision predicates used by both the
//! intention-sharing and intention-detection pipelines.
//!
//! All coordinates are meters in a local east/north frame. Every predicate
//! treats shapes as closed sets, so boundary contact counts as a hit.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 95% quantile of the chi-squared distribution with two degrees of freedom.
pub const CHI2_2D_95: f64 = 5.991464547107979;

/// Determinants below this (m⁴) are treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// Largest accepted coordinate magnitude in meters.
pub const MAX_COORD: f64 = 1e7;

pub const MAX_POLYGON_VERTICES: usize = 255;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate covariance: determinant {det:e} below {SINGULAR_DET:e}")]
    DegenerateCovariance { det: f64 },
    #[error("covariance is not positive semidefinite (sxx={sxx}, sxy={sxy}, syy={syy})")]
    NotPositiveSemidefinite { sxx: f64, sxy: f64, syy: f64 },
    #[error("ellipse scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("malformed polygon: {0}")]
    MalformedPolygon(String),
    #[error("degenerate segment: both endpoints at ({x}, {y})")]
    DegenerateSegment { x: f64, y: f64 },
    #[error("polyline needs at least 2 points, got {0}")]
    PolylineTooShort(usize),
    #[error("coordinate out of range: ({x}, {y})")]
    CoordinateOutOfRange { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3-D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn is_valid(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.x.abs() < MAX_COORD && self.y.abs() < MAX_COORD
    }

    pub fn validate(self) -> Result<Self, GeometryError> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(GeometryError::CoordinateOutOfRange { x: self.x, y: self.y })
        }
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Symmetric 2×2 covariance in m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl Cov2 {
    pub fn new(sxx: f64, sxy: f64, syy: f64) -> Result<Self, GeometryError> {
        let c = Self { sxx, sxy, syy };
        if !c.is_positive_semidefinite() {
            return Err(GeometryError::NotPositiveSemidefinite { sxx, sxy, syy });
        }
        Ok(c)
    }

    pub const fn identity() -> Self {
        Self { sxx: 1.0, sxy: 0.0, syy: 1.0 }
    }

    pub fn diagonal(sxx: f64, syy: f64) -> Self {
        Self { sxx, sxy: 0.0, syy }
    }

    pub fn det(&self) -> f64 {
        self.sxx * self.syy - self.sxy * self.sxy
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        self.sxx.is_finite()
            && self.sxy.is_finite()
            && self.syy.is_finite()
            && self.sxx >= 0.0
            && self.syy >= 0.0
            && self.det() >= 0.0
    }

    pub fn scaled(&self, k: f64) -> Cov2 {
        Cov2 { sxx: self.sxx * k, sxy: self.sxy * k, syy: self.syy * k }
    }

    pub fn sum(&self, other: &Cov2) -> Cov2 {
        Cov2 {
            sxx: self.sxx + other.sxx,
            sxy: self.sxy + other.sxy,
            syy: self.syy + other.syy,
        }
    }

    /// Closed-form 2×2 inverse; the result is again symmetric.
    pub fn inverse(&self) -> Result<Cov2, GeometryError> {
        let det = self.det();
        if !(det >= SINGULAR_DET) {
            return Err(GeometryError::DegenerateCovariance { det });
        }
        Ok(Cov2 {
            sxx: self.syy / det,
            sxy: -self.sxy / det,
            syy: self.sxx / det,
        })
    }

    /// Quadratic form dᵀ Σ⁻¹ d.
    pub fn inverse_quadratic(&self, d: Point2) -> Result<f64, GeometryError> {
        let inv = self.inverse()?;
        Ok(inv.sxx * d.x * d.x + 2.0 * inv.sxy * d.x * d.y + inv.syy * d.y * d.y)
    }

    /// R · diag(along, across) · Rᵀ for a frame whose first axis points at `angle` (radians from east).
    pub fn rotated_diagonal(along: f64, across: f64, angle: f64) -> Cov2 {
        let (s, c) = angle.sin_cos();
        Cov2 {
            sxx: along * c * c + across * s * s,
            sxy: (along - across) * c * s,
            syy: along * s * s + across * c * c,
        }
    }

    /// Eigenvalues (largest first) and the angle of the major eigenvector.
    pub fn principal_axes(&self) -> (f64, f64, f64) {
        let mean = 0.5 * (self.sxx + self.syy);
        let half_diff = 0.5 * (self.sxx - self.syy);
        let r = half_diff.hypot(self.sxy);
        let angle = 0.5 * (2.0 * self.sxy).atan2(self.sxx - self.syy);
        (mean + r, (mean - r).max(0.0), angle)
    }
}

/// Selects which of the two ellipse overlap tests is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapMode {
    /// Mahalanobis distance between centers under the summed, scaled covariances.
    #[default]
    CombinedCovariance,
    /// Either center lies inside the other ellipse.
    CenterInclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEllipse {
    pub center: Point2,
    pub cov: Cov2,
    /// Chi-squared quantile applied to `cov`.
    pub scale: f64,
}

impl UncertaintyEllipse {
    pub fn new(center: Point2, cov: Cov2, scale: f64) -> Result<Self, GeometryError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GeometryError::InvalidScale(scale));
        }
        let det = cov.det();
        if !cov.is_positive_semidefinite() {
            return Err(GeometryError::NotPositiveSemidefinite { sxx: cov.sxx, sxy: cov.sxy, syy: cov.syy });
        }
        if det < SINGULAR_DET {
            return Err(GeometryError::DegenerateCovariance { det });
        }
        Ok(Self { center: center.validate()?, cov, scale })
    }

    /// 95% region of a Gaussian with covariance `cov`.
    pub fn confidence_95(center: Point2, cov: Cov2) -> Result<Self, GeometryError> {
        Self::new(center, cov, CHI2_2D_95)
    }

    /// Semi-major, semi-minor and major-axis angle (radians from east).
    pub fn semi_axes(&self) -> (f64, f64, f64) {
        let (l1, l2, angle) = self.cov.principal_axes();
        ((l1 * self.scale).sqrt(), (l2 * self.scale).sqrt(), angle)
    }

    pub fn area(&self) -> f64 {
        PI * self.scale * self.cov.det().sqrt()
    }

    pub fn contains(&self, p: Point2) -> Result<bool, GeometryError> {
        Ok(mahalanobis_sq(p, self)? <= self.scale)
    }
}

pub fn mahalanobis_sq(p: Point2, e: &UncertaintyEllipse) -> Result<f64, GeometryError> {
    e.cov.inverse_quadratic(p - e.center)
}

pub fn ellipse_overlap(e1: &UncertaintyEllipse, e2: &UncertaintyEllipse) -> Result<bool, GeometryError> {
    ellipse_overlap_with(e1, e2, OverlapMode::CombinedCovariance)
}

pub fn ellipse_overlap_with(
    e1: &UncertaintyEllipse,
    e2: &UncertaintyEllipse,
    mode: OverlapMode,
) -> Result<bool, GeometryError> {
    match mode {
        OverlapMode::CombinedCovariance => {
            let combined = e1.cov.scaled(e1.scale).sum(&e2.cov.scaled(e2.scale));
            // evaluated on e1 - e2 and e2 - e1 alike, the quadratic form is even
            Ok(combined.inverse_quadratic(e1.center - e2.center)? <= 1.0)
        }
        OverlapMode::CenterInclusion => {
            let a = e1.contains(e2.center)?;
            let b = e2.contains(e1.center)?;
            Ok(a || b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Result<Self, GeometryError> {
        if a == b {
            return Err(GeometryError::DegenerateSegment { x: a.x, y: a.y });
        }
        Ok(Self { a: a.validate()?, b: b.validate()? })
    }
}

pub fn segments_intersect(s1: &Segment, s2: &Segment) -> bool {
    points_segments_intersect(s1.a, s1.b, s2.a, s2.b)
}

fn orientation(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// `p` collinear with `a`-`b` is inside their bounding box.
fn within_box(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Orientation test on raw endpoints; zero-length segments behave as points.
pub(crate) fn points_segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orientation(c, d, a);
    let d2 = orientation(c, d, b);
    let d3 = orientation(a, b, c);
    let d4 = orientation(a, b, d);

    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && within_box(c, d, a))
        || (d2 == 0.0 && within_box(c, d, b))
        || (d3 == 0.0 && within_box(a, b, c))
        || (d4 == 0.0 && within_box(a, b, d))
}

/// All-pairs polyline test. Returns the verdict and the number of segment
/// tests run, which is always `(|t1|-1)·(|t2|-1)`.
pub fn trajectories_collide_counted(t1: &[Point2], t2: &[Point2]) -> Result<(bool, u64), GeometryError> {
    if t1.len() < 2 {
        return Err(GeometryError::PolylineTooShort(t1.len()));
    }
    if t2.len() < 2 {
        return Err(GeometryError::PolylineTooShort(t2.len()));
    }
    let mut hit = false;
    let mut tests = 0u64;
    for s1 in t1.windows(2) {
        for s2 in t2.windows(2) {
            tests += 1;
            hit |= points_segments_intersect(s1[0], s1[1], s2[0], s2[1]);
        }
    }
    Ok((hit, tests))
}

pub fn trajectories_collide(t1: &[Point2], t2: &[Point2]) -> Result<bool, GeometryError> {
    trajectories_collide_counted(t1, t2).map(|(hit, _)| hit)
}

/// Strictly convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if !(3..=MAX_POLYGON_VERTICES).contains(&n) {
            return Err(GeometryError::MalformedPolygon(format!(
                "vertex count {n} outside 3..={MAX_POLYGON_VERTICES}"
            )));
        }
        for v in &vertices {
            v.validate()?;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if vertices[i] == vertices[j] {
                    return Err(GeometryError::MalformedPolygon(format!("vertices {i} and {j} coincide")));
                }
            }
        }
        let mut turning = 0.0;
        for i in 0..n {
            let e1 = vertices[(i + 1) % n] - vertices[i];
            let e2 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
            let cross = e1.cross(e2);
            if !(cross > 0.0) {
                return Err(GeometryError::MalformedPolygon(format!(
                    "not strictly convex counterclockwise at vertex {}",
                    (i + 1) % n
                )));
            }
            turning += cross.atan2(e1.dot(e2));
        }
        // all left turns but wound more than once
        if (turning - 2.0 * PI).abs() > 1e-6 {
            return Err(GeometryError::MalformedPolygon(format!(
                "self-intersecting: total turning {turning:.6} rad"
            )));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn translated(&self, by: Point2) -> ConvexPolygon {
        ConvexPolygon { vertices: self.vertices.iter().map(|&v| v + by).collect() }
    }

    fn project(&self, axis: Point2) -> (f64, f64) {
        self.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let p = v.dot(axis);
            (lo.min(p), hi.max(p))
        })
    }
}

/// Separating Axis Theorem over the edge normals of both polygons. Returns
/// the verdict and the number of axes projected before it was reached.
pub fn sat_overlap_counted(p1: &ConvexPolygon, p2: &ConvexPolygon) -> (bool, u64) {
    let mut axes = 0u64;
    for poly in [p1, p2] {
        for (a, b) in poly.edges() {
            axes += 1;
            let axis = (b - a).perp();
            let (min1, max1) = p1.project(axis);
            let (min2, max2) = p2.project(axis);
            if max1 < min2 || max2 < min1 {
                return (false, axes);
            }
        }
    }
    (true, axes)
}

pub fn sat_overlap(p1: &ConvexPolygon, p2: &ConvexPolygon) -> bool {
    sat_overlap_counted(p1, p2).0
}
