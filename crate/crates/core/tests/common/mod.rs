//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use vam_intent::codec::{
    BasicHfContainer, Container, EllipseContainer, PathContainer, PathPoint, PolygonContainer, PolygonVertex,
    StationType, VamHeader, VamMessage, PROTOCOL_VERSION,
};
use vam_intent::{ConvexPolygon, Cov2, Point2, UncertaintyEllipse};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cramer's rule on a 3×3 system.
pub fn cramer3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> [f64; 3] {
    let d = det3(m);
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mi = m;
        for row in 0..3 {
            mi[row][col] = rhs[row];
        }
        *o = det3(mi) / d;
    }
    out
}

/// Least-squares (a, b, c) of y ≈ a·τ² + b·τ + c with τ = t − t0, from the
/// raw normal equations.
pub fn normal_equations_fit(ts: &[f64], ys: &[f64], t0: f64) -> [f64; 3] {
    let mut s = [0.0; 5];
    let mut r = [0.0; 3];
    for (&t, &y) in ts.iter().zip(ys) {
        let tau = t - t0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += tau.powi(k as i32);
        }
        for (k, rk) in r.iter_mut().enumerate() {
            *rk += y * tau.powi(2 - k as i32);
        }
    }
    let m = [[s[4], s[3], s[2]], [s[3], s[2], s[1]], [s[2], s[1], s[0]]];
    cramer3(m, r)
}

/// dᵀ Σ⁻¹ d with the 2×2 inverse written out by Cramer's rule.
pub fn cramer2_quadratic(cov: &Cov2, d: Point2) -> f64 {
    let det = cov.sxx * cov.syy - cov.sxy * cov.sxy;
    // Σ u = d
    let u0 = (d.x * cov.syy - cov.sxy * d.y) / det;
    let u1 = (cov.sxx * d.y - cov.sxy * d.x) / det;
    d.x * u0 + d.y * u1
}

/// Intersection of a parametric pair of segments; `None` when the
/// direction cross product is within the degeneracy band.
pub fn parametric_segments(a: Point2, b: Point2, c: Point2, d: Point2) -> Option<bool> {
    let r = b - a;
    let s = d - c;
    let denom = r.x * s.y - r.y * s.x;
    if denom.abs() < 1e-12 {
        return None;
    }
    let q = c - a;
    let t = (q.x * s.y - q.y * s.x) / denom;
    let u = (q.x * r.y - q.y * r.x) / denom;
    Some((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u))
}

/// Brute-force polyline crossing test over every segment pair.
pub fn polylines_cross(p: &[Point2], q: &[Point2]) -> bool {
    p.windows(2).any(|s| q.windows(2).any(|t| parametric_segments(s[0], s[1], t[0], t[1]) == Some(true)))
}

/// Closed x-interval of a convex polygon on the horizontal line at `y`.
fn polygon_row(poly: &[Point2], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        if (p.y - y) * (q.y - y) > 0.0 {
            continue;
        }
        if p.y == q.y {
            lo = lo.min(p.x.min(q.x));
            hi = hi.max(p.x.max(q.x));
        } else {
            let x = p.x + (y - p.y) / (q.y - p.y) * (q.x - p.x);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn y_range(poly: &[Point2]) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)))
}

/// Scans rows `step` apart and reports whether any row is covered by both polygons.
pub fn raster_polygons_overlap(p: &[Point2], q: &[Point2], step: f64) -> bool {
    let (p0, p1) = y_range(p);
    let (q0, q1) = y_range(q);
    let (lo, hi) = (p0.max(q0), p1.min(q1));
    if lo > hi {
        return false;
    }
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).any(|k| {
        let y = k as f64 * step;
        match (polygon_row(p, y), polygon_row(q, y)) {
            (Some(a), Some(b)) => a.0 <= b.1 && b.0 <= a.1,
            _ => false,
        }
    })
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Smallest boundary-to-boundary distance of two polygons.
pub fn boundary_distance(p: &[Point2], q: &[Point2]) -> f64 {
    let edges = |v: &[Point2]| (0..v.len()).map(|i| (v[i], v[(i + 1) % v.len()])).collect::<Vec<_>>();
    let mut best = f64::INFINITY;
    for (a, b) in edges(p) {
        for &v in q {
            best = best.min(point_segment_distance(v, a, b));
        }
    }
    for (a, b) in edges(q) {
        for &v in p {
            best = best.min(point_segment_distance(v, a, b));
        }
    }
    best
}

/// Sutherland–Hodgman clip of `subject` by the convex counterclockwise `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let inside = |p: Point2| (b - a).cross(p - a) >= 0.0;
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let cross_at = |p: Point2, q: Point2| p + (q - p) * ((b - a).cross(a - p) / (b - a).cross(q - p));
            match (inside(p), inside(q)) {
                (true, true) => out.push(q),
                (true, false) => out.push(cross_at(p, q)),
                (false, true) => {
                    out.push(cross_at(p, q));
                    out.push(q);
                }
                (false, false) => {}
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

pub fn shoelace(v: &[Point2]) -> f64 {
    0.5 * (0..v.len()).map(|i| v[i].cross(v[(i + 1) % v.len()])).sum::<f64>()
}

fn perimeter(v: &[Point2]) -> f64 {
    (0..v.len()).map(|i| v[i].distance(v[(i + 1) % v.len()])).sum()
}

/// Pairs whose overlap or separation is thinner than the raster resolution.
pub fn is_margin_case(p: &[Point2], q: &[Point2], raster_says: bool) -> bool {
    if raster_says {
        let inter = clip_convex(p, q);
        inter.len() < 3 || shoelace(&inter) / perimeter(&inter) < 1e-3
    } else {
        boundary_distance(p, q) < 2e-3
    }
}

/// Random convex polygon: center in [−7, 7]², radius 0.5–3, 3–10 sorted angles.
pub fn random_polygon(r: &mut impl Rng) -> ConvexPolygon {
    loop {
        let c = Point2::new(r.random_range(-7.0..7.0), r.random_range(-7.0..7.0));
        let radius = r.random_range(0.5..3.0);
        let n = r.random_range(3..=10);
        let mut angles: Vec<f64> = (0..n).map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let pts = angles.iter().map(|&a| c + Point2::from_polar(radius, a)).collect();
        if let Ok(p) = ConvexPolygon::new(pts) {
            return p;
        }
    }
}

/// Closed x-interval where `(p − c)ᵀ (sΣ)⁻¹ (p − c) ≤ 1` on the row at `y`.
fn ellipse_row(e: &UncertaintyEllipse, y: f64) -> Option<(f64, f64)> {
    let (a, b, c) = (e.cov.sxx * e.scale, e.cov.sxy * e.scale, e.cov.syy * e.scale);
    let det = a * c - b * b;
    // inverse = [[c, -b], [-b, a]] / det
    let dy = y - e.center.y;
    // c·dx² − 2b·dx·dy + a·dy² ≤ det
    let qa = c;
    let qb = -2.0 * b * dy;
    let qc = a * dy * dy - det;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((e.center.x + (-qb - s) / (2.0 * qa), e.center.x + (-qb + s) / (2.0 * qa)))
}

/// Row scan at `step` spacing: whether any row is inside both ellipses.
pub fn raster_ellipses_overlap(e1: &UncertaintyEllipse, e2: &UncertaintyEllipse, step: f64) -> bool {
    let half = |e: &UncertaintyEllipse| (e.cov.syy * e.scale).sqrt();
    let lo = (e1.center.y - half(e1)).max(e2.center.y - half(e2));
    let hi = (e1.center.y + half(e1)).min(e2.center.y + half(e2));
    if lo > hi {
        return false;
    }
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).any(|k| {
        let y = k as f64 * step;
        match (ellipse_row(e1, y), ellipse_row(e2, y)) {
            (Some(a), Some(b)) => a.0 <= b.1 && b.0 <= a.1,
            _ => false,
        }
    })
}

/// Random valid message of any container kind.
pub fn random_message(r: &mut impl Rng) -> VamMessage {
    let header = VamHeader { protocol_version: PROTOCOL_VERSION, station_id: r.random(), generation_time: r.random() };
    let basic_hf = BasicHfContainer {
        station_type: if r.random() { StationType::Pedestrian } else { StationType::Cyclist },
        ref_lat: r.random_range(-900_000_000..=900_000_000),
        ref_lon: r.random_range(-1_800_000_000..=1_800_000_000),
        heading: r.random_range(0..3600),
        speed: r.random_range(0..u16::MAX),
    };
    let container = match r.random_range(0..4) {
        0 => Container::None,
        1 => {
            let mut path = |max: usize| PathContainer {
                points: (0..r.random_range(0..=max)).map(|_| PathPoint { dx_cm: r.random(), dy_cm: r.random() }).collect(),
            };
            Container::Path { past: path(23), predicted: path(40) }
        }
        2 => {
            let sxx: f32 = r.random_range(0.0..100.0);
            let syy: f32 = r.random_range(0.0..100.0);
            let bound = (sxx * syy).sqrt() * 0.99;
            let sxy = if bound > 0.0 { r.random_range(-bound..=bound) } else { 0.0 };
            Container::Ellipse(EllipseContainer {
                dx: r.random_range(-1e4..1e4),
                dy: r.random_range(-1e4..1e4),
                sxx,
                sxy,
                syy,
            })
        }
        _ => Container::Polygon(PolygonContainer {
            vertices: (0..r.random_range(3..=255))
                .map(|_| PolygonVertex { dx_cm: r.random_range(-32767..=32767), dy_cm: r.random_range(-32767..=32767) })
                .collect(),
        }),
    };
    VamMessage { header, basic_hf, container }
}
