//! Binary wire format for VAM messages.
//!
//! Little-endian, no padding, fields in the order listed below.
//!
//! ```text
//! offset size field
//!   0     1   protocol_version
//!   1     4   station_id            u32
//!   5     2   generation_time       u16, ms mod 65536
//!   7     1   station_type          1 = pedestrian, 2 = cyclist/EPAC
//!   8     4   ref_lat               i32, 1e-7 deg
//!  12     4   ref_lon               i32, 1e-7 deg
//!  16     2   heading               u16, 0.1 deg, < 3600
//!  18     2   speed                 u16, cm/s, < 65535
//!  20     1   container_tag         0 none, 1 path, 2 ellipse, 3 polygon
//!  21     .   container payload
//! ```
//!
//! Payloads:
//! - path: past then predicted, each `count: u8` followed by `count × (dx, dy: i32 cm)`
//! - ellipse: `dx, dy` (f32 m) then `sxx, sxy, syy` (f32 m²), 20 bytes
//! - polygon: `count: u8` followed by `count × (dx, dy: i16 cm)`
//!
//! All offsets are relative to the reference position.

use thiserror::Error;

use crate::geometry::{ConvexPolygon, Cov2, GeometryError, Point2, UncertaintyEllipse};

pub const HEADER_LEN: usize = 7;
pub const BASIC_HF_LEN: usize = 13;
/// Header, basic/HF container and the container tag.
pub const PREFIX_LEN: usize = HEADER_LEN + BASIC_HF_LEN + 1;
pub const ELLIPSE_PAYLOAD_LEN: usize = 20;
pub const ELLIPSE_MESSAGE_LEN: usize = PREFIX_LEN + ELLIPSE_PAYLOAD_LEN;
pub const MAX_PAST_POINTS: usize = 23;
pub const MAX_PREDICTED_POINTS: usize = 40;
pub const PROTOCOL_VERSION: u8 = 3;
/// Largest polygon vertex offset in centimeters.
pub const MAX_POLYGON_OFFSET_CM: i16 = 32767;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("truncated buffer: need {needed} bytes at offset {offset}, have {available}")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("unknown container tag {0}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> CodecError {
    CodecError::Invalid { field, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VamHeader {
    pub protocol_version: u8,
    pub station_id: u32,
    pub generation_time: u16,
}

impl VamHeader {
    pub fn new(station_id: u32, clock_s: f64) -> Self {
        let ms = (clock_s * 1000.0).round().max(0.0) as u64;
        Self { protocol_version: PROTOCOL_VERSION, station_id, generation_time: (ms % 65536) as u16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationType {
    Pedestrian = 1,
    Cyclist = 2,
}

impl TryFrom<u8> for StationType {
    type Error = CodecError;
    fn try_from(v: u8) -> Result<Self, CodecError> {
        match v {
            1 => Ok(StationType::Pedestrian),
            2 => Ok(StationType::Cyclist),
            other => Err(invalid("station_type", format!("unknown station type {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasicHfContainer {
    pub station_type: StationType,
    /// 1e-7 degree units.
    pub ref_lat: i32,
    pub ref_lon: i32,
    /// 0.1 degree units, clockwise from north.
    pub heading: u16,
    /// cm/s.
    pub speed: u16,
}

impl BasicHfContainer {
    fn validate(&self) -> Result<(), CodecError> {
        if self.ref_lat.unsigned_abs() > 900_000_000 {
            return Err(invalid("ref_lat", format!("{} beyond ±90°", self.ref_lat)));
        }
        if self.ref_lon.unsigned_abs() > 1_800_000_000 {
            return Err(invalid("ref_lon", format!("{} beyond ±180°", self.ref_lon)));
        }
        if self.heading >= 3600 {
            return Err(invalid("heading", format!("{} not below 3600", self.heading)));
        }
        if self.speed == u16::MAX {
            return Err(invalid("speed", "65535 is reserved"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathPoint {
    pub dx_cm: i32,
    pub dy_cm: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathContainer {
    pub points: Vec<PathPoint>,
}

impl PathContainer {
    pub fn from_points(points: &[Point2], reference: Point2) -> Result<Self, CodecError> {
        let points = points
            .iter()
            .map(|&p| {
                let d = p - reference;
                Ok(PathPoint { dx_cm: to_cm_i32(d.x, "path.dx")?, dy_cm: to_cm_i32(d.y, "path.dy")? })
            })
            .collect::<Result<_, CodecError>>()?;
        Ok(Self { points })
    }

    pub fn encoded_len(&self) -> usize {
        1 + 8 * self.points.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseContainer {
    pub dx: f32,
    pub dy: f32,
    pub sxx: f32,
    pub sxy: f32,
    pub syy: f32,
}

impl EllipseContainer {
    /// Carries the unscaled covariance; receivers apply the 95% quantile.
    pub fn from_ellipse(e: &UncertaintyEllipse, reference: Point2) -> Self {
        let d = e.center - reference;
        let c = e.cov;
        Self { dx: d.x as f32, dy: d.y as f32, sxx: c.sxx as f32, sxy: c.sxy as f32, syy: c.syy as f32 }
    }

    pub fn to_ellipse(&self, reference: Point2) -> Result<UncertaintyEllipse, GeometryError> {
        let center = reference + Point2::new(f64::from(self.dx), f64::from(self.dy));
        let cov = Cov2::new(f64::from(self.sxx), f64::from(self.sxy), f64::from(self.syy))?;
        UncertaintyEllipse::confidence_95(center, cov)
    }

    fn validate(&self) -> Result<(), CodecError> {
        for (field, v) in [("ellipse.dx", self.dx), ("ellipse.dy", self.dy), ("ellipse.sxx", self.sxx), ("ellipse.sxy", self.sxy), ("ellipse.syy", self.syy)] {
            if !v.is_finite() {
                return Err(invalid(field, format!("non-finite value {v}")));
            }
        }
        if self.sxx < 0.0 {
            return Err(invalid("ellipse.sxx", format!("negative variance {}", self.sxx)));
        }
        if self.syy < 0.0 {
            return Err(invalid("ellipse.syy", format!("negative variance {}", self.syy)));
        }
        let det = f64::from(self.sxx) * f64::from(self.syy) - f64::from(self.sxy).powi(2);
        if det < 0.0 {
            return Err(invalid("ellipse.sxy", format!("covariance not positive semidefinite (det {det:e})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolygonVertex {
    pub dx_cm: i16,
    pub dy_cm: i16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolygonContainer {
    pub vertices: Vec<PolygonVertex>,
}

impl PolygonContainer {
    pub fn from_polygon(poly: &ConvexPolygon, reference: Point2) -> Result<Self, CodecError> {
        let vertices = poly
            .vertices()
            .iter()
            .map(|&v| {
                let d = v - reference;
                Ok(PolygonVertex { dx_cm: to_cm_i16(d.x, "polygon.dx")?, dy_cm: to_cm_i16(d.y, "polygon.dy")? })
            })
            .collect::<Result<_, CodecError>>()?;
        Ok(Self { vertices })
    }

    pub fn encoded_len(&self) -> usize {
        1 + 4 * self.vertices.len()
    }

    fn validate(&self) -> Result<(), CodecError> {
        let n = self.vertices.len();
        if !(3..=255).contains(&n) {
            return Err(invalid("polygon.vertex_count", format!("{n} outside 3..=255")));
        }
        for v in &self.vertices {
            if v.dx_cm == i16::MIN {
                return Err(invalid("polygon.dx", "offset beyond ±327.67 m"));
            }
            if v.dy_cm == i16::MIN {
                return Err(invalid("polygon.dy", "offset beyond ±327.67 m"));
            }
        }
        Ok(())
    }
}

fn to_cm_i32(m: f64, field: &'static str) -> Result<i32, CodecError> {
    let cm = (m * 100.0).round();
    if cm.is_finite() && cm.abs() <= f64::from(i32::MAX) {
        Ok(cm as i32)
    } else {
        Err(invalid(field, format!("{m} m does not fit a 32-bit cm offset")))
    }
}

fn to_cm_i16(m: f64, field: &'static str) -> Result<i16, CodecError> {
    let cm = (m * 100.0).round();
    if cm.is_finite() && cm.abs() <= f64::from(MAX_POLYGON_OFFSET_CM) {
        Ok(cm as i16)
    } else {
        Err(invalid(field, format!("{m} m beyond ±327.67 m")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContainerTag {
    None = 0,
    Path = 1,
    Ellipse = 2,
    Polygon = 3,
}

impl ContainerTag {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::None),
            1 => Some(Self::Path),
            2 => Some(Self::Ellipse),
            3 => Some(Self::Polygon),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Path => "path",
            Self::Ellipse => "ellipse",
            Self::Polygon => "polygon",
        }
    }
}

/// At most one optional container rides along with the basic/HF part.
#[derive(Debug, Clone, PartialEq)]
pub enum Container {
    None,
    Path { past: PathContainer, predicted: PathContainer },
    Ellipse(EllipseContainer),
    Polygon(PolygonContainer),
}

impl Container {
    pub fn tag(&self) -> ContainerTag {
        match self {
            Container::None => ContainerTag::None,
            Container::Path { .. } => ContainerTag::Path,
            Container::Ellipse(_) => ContainerTag::Ellipse,
            Container::Polygon(_) => ContainerTag::Polygon,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Container::None => 0,
            Container::Path { past, predicted } => past.encoded_len() + predicted.encoded_len(),
            Container::Ellipse(_) => ELLIPSE_PAYLOAD_LEN,
            Container::Polygon(p) => p.encoded_len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VamMessage {
    pub header: VamHeader,
    pub basic_hf: BasicHfContainer,
    pub container: Container,
}

impl VamMessage {
    pub fn encoded_len(&self) -> usize {
        PREFIX_LEN + self.container.encoded_len()
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        self.basic_hf.validate()?;
        match &self.container {
            Container::None => Ok(()),
            Container::Path { past, predicted } => {
                if past.points.len() > MAX_PAST_POINTS {
                    return Err(invalid("path.past.point_count", format!("{} > {MAX_PAST_POINTS}", past.points.len())));
                }
                if predicted.points.len() > MAX_PREDICTED_POINTS {
                    return Err(invalid(
                        "path.predicted.point_count",
                        format!("{} > {MAX_PREDICTED_POINTS}", predicted.points.len()),
                    ));
                }
                Ok(())
            }
            Container::Ellipse(e) => e.validate(),
            Container::Polygon(p) => p.validate(),
        }
    }
}

pub fn encode(m: &VamMessage) -> Result<Vec<u8>, CodecError> {
    m.validate()?;
    let mut out = Vec::with_capacity(m.encoded_len());
    out.push(m.header.protocol_version);
    out.extend_from_slice(&m.header.station_id.to_le_bytes());
    out.extend_from_slice(&m.header.generation_time.to_le_bytes());
    let b = &m.basic_hf;
    out.push(b.station_type as u8);
    out.extend_from_slice(&b.ref_lat.to_le_bytes());
    out.extend_from_slice(&b.ref_lon.to_le_bytes());
    out.extend_from_slice(&b.heading.to_le_bytes());
    out.extend_from_slice(&b.speed.to_le_bytes());
    out.push(m.container.tag() as u8);
    match &m.container {
        Container::None => {}
        Container::Path { past, predicted } => {
            for path in [past, predicted] {
                out.push(path.points.len() as u8);
                for p in &path.points {
                    out.extend_from_slice(&p.dx_cm.to_le_bytes());
                    out.extend_from_slice(&p.dy_cm.to_le_bytes());
                }
            }
        }
        Container::Ellipse(e) => {
            for v in [e.dx, e.dy, e.sxx, e.sxy, e.syy] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Container::Polygon(p) => {
            out.push(p.vertices.len() as u8);
            for v in &p.vertices {
                out.extend_from_slice(&v.dx_cm.to_le_bytes());
                out.extend_from_slice(&v.dy_cm.to_le_bytes());
            }
        }
    }
    debug_assert_eq!(out.len(), m.encoded_len());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let end = self.pos + N;
        if end > self.buf.len() {
            return Err(CodecError::Truncated { offset: self.pos, needed: N, available: self.buf.len() - self.pos });
        }
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        self.take().map(u16::from_le_bytes)
    }
    fn i16(&mut self) -> Result<i16, CodecError> {
        self.take().map(i16::from_le_bytes)
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        self.take().map(u32::from_le_bytes)
    }
    fn i32(&mut self) -> Result<i32, CodecError> {
        self.take().map(i32::from_le_bytes)
    }
    fn f32(&mut self) -> Result<f32, CodecError> {
        self.take().map(f32::from_le_bytes)
    }

    fn path(&mut self) -> Result<PathContainer, CodecError> {
        let n = self.u8()? as usize;
        let points = (0..n)
            .map(|_| Ok(PathPoint { dx_cm: self.i32()?, dy_cm: self.i32()? }))
            .collect::<Result<_, CodecError>>()?;
        Ok(PathContainer { points })
    }
}

pub fn decode(bytes: &[u8]) -> Result<VamMessage, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = VamHeader { protocol_version: r.u8()?, station_id: r.u32()?, generation_time: r.u16()? };
    let basic_hf = BasicHfContainer {
        station_type: StationType::try_from(r.u8()?)?,
        ref_lat: r.i32()?,
        ref_lon: r.i32()?,
        heading: r.u16()?,
        speed: r.u16()?,
    };
    let tag = r.u8()?;
    let container = match ContainerTag::from_u8(tag).ok_or(CodecError::UnknownTag(tag))? {
        ContainerTag::None => Container::None,
        ContainerTag::Path => {
            let past = r.path()?;
            let predicted = r.path()?;
            Container::Path { past, predicted }
        }
        ContainerTag::Ellipse => Container::Ellipse(EllipseContainer {
            dx: r.f32()?,
            dy: r.f32()?,
            sxx: r.f32()?,
            sxy: r.f32()?,
            syy: r.f32()?,
        }),
        ContainerTag::Polygon => {
            let n = r.u8()? as usize;
            let vertices = (0..n)
                .map(|_| Ok(PolygonVertex { dx_cm: r.i16()?, dy_cm: r.i16()? }))
                .collect::<Result<_, CodecError>>()?;
            Container::Polygon(PolygonContainer { vertices })
        }
    };
    if r.pos != bytes.len() {
        return Err(CodecError::TrailingBytes(bytes.len() - r.pos));
    }
    let m = VamMessage { header, basic_hf, container };
    m.validate()?;
    Ok(m)
}

/// Representation forms whose payload cost is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadForm {
    /// T predicted points; `with_sigmas` adds per-point x/y standard deviations.
    Vector { points: usize, with_sigmas: bool },
    Ellipse,
    Polygon { vertices: usize },
}

/// Payload bytes of a representation, excluding container framing.
pub fn payload_size(form: PayloadForm) -> usize {
    match form {
        PayloadForm::Vector { points, with_sigmas: false } => 8 * points,
        PayloadForm::Vector { points, with_sigmas: true } => 16 * points,
        PayloadForm::Ellipse => ELLIPSE_PAYLOAD_LEN,
        PayloadForm::Polygon { vertices } => 4 * vertices,
    }
}

/// Container framing bytes on top of [`payload_size`].
pub fn framing_size(form: PayloadForm) -> usize {
    match form {
        PayloadForm::Vector { .. } | PayloadForm::Polygon { .. } => 1,
        PayloadForm::Ellipse => 0,
    }
}

/// One canonical message of each container kind, the source of the golden vectors.
pub fn golden_messages() -> Vec<(&'static str, VamMessage)> {
    let header = VamHeader { protocol_version: PROTOCOL_VERSION, station_id: 0x0102_0304, generation_time: 48_250 };
    let basic_hf = BasicHfContainer {
        station_type: StationType::Cyclist,
        ref_lat: 566_745_000,
        ref_lon: 128_578_000,
        heading: 905,
        speed: 512,
    };
    let msg = |container| VamMessage { header, basic_hf, container };
    let past = PathContainer {
        points: (0..23).map(|k| PathPoint { dx_cm: -50 * (23 - k), dy_cm: 3 * k - 30 }).collect(),
    };
    let predicted = PathContainer {
        points: (1..=40).map(|k| PathPoint { dx_cm: 128 * k, dy_cm: k * k - 7 }).collect(),
    };
    vec![
        ("hf_only", msg(Container::None)),
        ("path", msg(Container::Path { past, predicted })),
        (
            "ellipse",
            msg(Container::Ellipse(EllipseContainer { dx: 51.25, dy: -0.5, sxx: 4.0, sxy: 0.125, syy: 0.01 })),
        ),
        (
            "polygon",
            msg(Container::Polygon(PolygonContainer {
                vertices: vec![
                    PolygonVertex { dx_cm: 5614, dy_cm: -50 },
                    PolygonVertex { dx_cm: 5125, dy_cm: 24 },
                    PolygonVertex { dx_cm: 4636, dy_cm: -50 },
                    PolygonVertex { dx_cm: 5125, dy_cm: -124 },
                ],
            })),
        ),
    ]
}
