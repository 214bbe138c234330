//! WGS-84 fixes, the local east/north frame and GNSS trace files.
//!
//! Traces are plain CSV with a `t,lat,lon` header. `t` is UTC seconds; a
//! backwards jump of more than half a day is read as a midnight rollover.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

/// Mean Earth radius (m).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;
const DAY_S: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite() && self.lon.is_finite() && self.lat.abs() <= 90.0 && self.lon.abs() <= 180.0
    }
}

impl Default for GeoPoint {
    /// Halmstad, Sweden.
    fn default() -> Self {
        Self::new(56.6745, 12.8578)
    }
}

/// Equirectangular projection about a fixed origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: GeoPoint,
    cos_lat0: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin, cos_lat0: origin.lat.to_radians().cos() }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn to_local(&self, p: GeoPoint) -> Point2 {
        Point2::new(
            (p.lon - self.origin.lon).to_radians() * EARTH_RADIUS_M * self.cos_lat0,
            (p.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M,
        )
    }

    pub fn to_geo(&self, p: Point2) -> GeoPoint {
        GeoPoint::new(
            self.origin.lat + (p.y / EARTH_RADIUS_M).to_degrees(),
            self.origin.lon + (p.x / (EARTH_RADIUS_M * self.cos_lat0)).to_degrees(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssTraceRecord {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
}

impl GnssTraceRecord {
    pub fn geo(&self) -> GeoPoint {
        GeoPoint::new(self.lat, self.lon)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: duplicate timestamp {t}")]
    DuplicateTimestamp { line: u64, t: f64 },
    #[error("line {line}: timestamp {t} goes back from {prev}")]
    NonMonotonic { line: u64, t: f64, prev: f64 },
    #[error("line {line}: coordinate out of range (lat {lat}, lon {lon})")]
    OutOfRange { line: u64, lat: f64, lon: f64 },
    #[error("trace has {0} records, need at least 3")]
    TooFew(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parses a `t,lat,lon` trace, unwrapping midnight rollovers.
pub fn parse_trace(reader: impl Read) -> Result<Vec<GnssTraceRecord>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<GnssTraceRecord> = Vec::new();
    let mut day_offset = 0.0;
    let mut raw_prev: Option<f64> = None;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(TraceError::Malformed { line, reason: format!("expected 3 fields, got {}", row.len()) });
        }
        let field = |i: usize, name: &str| -> Result<f64, TraceError> {
            let v: f64 = row[i]
                .parse()
                .map_err(|_| TraceError::Malformed { line, reason: format!("{name}: cannot parse {:?}", &row[i]) })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(TraceError::Malformed { line, reason: format!("{name}: non-finite value") })
            }
        };
        let (t_raw, lat, lon) = (field(0, "t")?, field(1, "lat")?, field(2, "lon")?);
        if !GeoPoint::new(lat, lon).is_valid() {
            return Err(TraceError::OutOfRange { line, lat, lon });
        }
        if let Some(prev) = raw_prev {
            if t_raw < prev - DAY_S / 2.0 {
                day_offset += DAY_S;
            }
        }
        raw_prev = Some(t_raw);
        let t = t_raw + day_offset;
        if let Some(last) = out.last() {
            if t == last.t {
                return Err(TraceError::DuplicateTimestamp { line, t: t_raw });
            }
            if t < last.t {
                return Err(TraceError::NonMonotonic { line, t: t_raw, prev: last.t });
            }
        }
        out.push(GnssTraceRecord { t, lat, lon });
    }
    Ok(out)
}
