//! Per-station VAM generation: trigger rules and container scheduling.
//!
//! Two families of schemes are supported. `EtsiPath` sends HF-only messages
//! and attaches past and predicted path containers at most once per
//! `lf_period`. The shape schemes attach an ellipse (or polygon) container to
//! every message, so every message has the same length.

use std::fmt;
use std::str::FromStr;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{
    BasicHfContainer, Container, EllipseContainer, PathContainer, PolygonContainer, StationType, VamHeader, VamMessage,
    MAX_PAST_POINTS,
};
use crate::geometry::Point2;
use crate::gnss::LocalFrame;
use crate::prediction::{self, MotionHistory, MotionSample, PredictedTrajectory, PredictionError};

const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid rule `{field}`: {reason}")]
    InvalidRules { field: &'static str, reason: String },
    #[error("unknown scheme {0:?} (expected etsi, ellipse or polygon:V)")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    #[default]
    EtsiPath,
    ShapeEllipse,
    ShapePolygon(usize),
}

impl FromStr for Scheme {
    type Err = EngineError;
    fn from_str(s: &str) -> Result<Self, EngineError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "etsi" | "etsi-path" => Ok(Scheme::EtsiPath),
            "ellipse" | "shape-ellipse" => Ok(Scheme::ShapeEllipse),
            other => {
                let v = other
                    .strip_prefix("polygon:")
                    .or_else(|| other.strip_prefix("shape-polygon:"))
                    .and_then(|v| v.parse::<usize>().ok())
                    .filter(|v| (3..=255).contains(v));
                v.map(Scheme::ShapePolygon).ok_or_else(|| EngineError::UnknownScheme(s.to_string()))
            }
        }
    }
}

impl TryFrom<String> for Scheme {
    type Error = EngineError;
    fn try_from(s: String) -> Result<Self, EngineError> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::EtsiPath => f.write_str("etsi"),
            Scheme::ShapeEllipse => f.write_str("ellipse"),
            Scheme::ShapePolygon(v) => write!(f, "polygon:{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationRules {
    pub t_gen_min: f64,
    pub t_gen_max: f64,
    /// Position change trigger (m).
    pub d_pos: f64,
    /// Speed change trigger (m/s).
    pub d_speed: f64,
    /// Heading change trigger (deg).
    pub d_heading: f64,
    /// Minimum spacing of path containers in the ETSI scheme (s).
    pub lf_period: f64,
    pub scheme: Scheme,
    pub history_len: usize,
    pub history_rate_hz: f64,
    pub horizon_dt: f64,
    pub horizon_points: usize,
}

impl Default for GenerationRules {
    fn default() -> Self {
        Self {
            t_gen_min: 0.1,
            t_gen_max: 5.0,
            d_pos: 4.0,
            d_speed: 0.5,
            d_heading: 4.0,
            lf_period: 2.0,
            scheme: Scheme::EtsiPath,
            history_len: prediction::DEFAULT_HISTORY_LEN,
            history_rate_hz: 10.0,
            horizon_dt: prediction::DEFAULT_DT,
            horizon_points: prediction::MAX_PREDICTION_POINTS,
        }
    }
}

impl GenerationRules {
    pub fn with_scheme(scheme: Scheme) -> Self {
        Self { scheme, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |field, reason: String| Err(EngineError::InvalidRules { field, reason });
        if !(self.t_gen_min > 0.0 && self.t_gen_min <= self.t_gen_max && self.t_gen_max.is_finite()) {
            return bad("t_gen_min", format!("need 0 < t_gen_min ({}) <= t_gen_max ({})", self.t_gen_min, self.t_gen_max));
        }
        for (field, v) in [
            ("d_pos", self.d_pos),
            ("d_speed", self.d_speed),
            ("d_heading", self.d_heading),
            ("lf_period", self.lf_period),
            ("history_rate_hz", self.history_rate_hz),
            ("horizon_dt", self.horizon_dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        if self.history_len < 3 {
            return bad("history_len", format!("need at least 3 samples, got {}", self.history_len));
        }
        if !(1..=prediction::MAX_PREDICTION_POINTS).contains(&self.horizon_points) {
            return bad("horizon_points", format!("{} outside 1..=40", self.horizon_points));
        }
        let horizon = self.horizon_dt * self.horizon_points as f64;
        if horizon > prediction::MAX_HORIZON_S + EPS {
            return bad("horizon_dt", format!("horizon {horizon} s exceeds 10 s"));
        }
        if let Scheme::ShapePolygon(v) = self.scheme {
            if !(3..=255).contains(&v) {
                return bad("scheme", format!("polygon vertex count {v} outside 3..=255"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationState {
    pub id: u32,
    pub kind: StationType,
    pub clock: f64,
    pub history: MotionHistory,
    /// `None` until the first message has been sent.
    pub last_tx_time: Option<f64>,
    pub last_tx_pos: Point2,
    pub last_tx_speed: f64,
    pub last_tx_heading: f64,
    pub last_lf_time: Option<f64>,
    /// Messages emitted so far.
    pub sequence: u64,
}

impl StationState {
    pub fn new(id: u32, kind: StationType, history_len: usize) -> Self {
        Self {
            id,
            kind,
            clock: 0.0,
            history: MotionHistory::new(history_len),
            last_tx_time: None,
            last_tx_pos: Point2::ORIGIN,
            last_tx_speed: 0.0,
            last_tx_heading: 0.0,
            last_lf_time: None,
            sequence: 0,
        }
    }

    /// Advances the clock and records a position fix.
    pub fn observe(&mut self, t: f64, pos: Point2) -> Result<(), PredictionError> {
        self.history.push(MotionSample { t, pos })?;
        self.clock = t;
        Ok(())
    }

    /// Advances the clock without a new fix.
    pub fn advance_clock(&mut self, t: f64) {
        self.clock = self.clock.max(t);
    }

    pub fn position(&self) -> Option<Point2> {
        self.history.last().map(|s| s.pos)
    }

    /// Speed (m/s) and compass heading (deg, clockwise from north) from the
    /// last two history samples.
    pub fn kinematics(&self) -> (f64, f64) {
        let mut it = self.history.samples().rev();
        match (it.next(), it.next()) {
            (Some(b), Some(a)) => {
                let d = b.pos - a.pos;
                let speed = d.norm() / (b.t - a.t);
                let heading = if d.norm() > 0.0 { d.x.atan2(d.y).to_degrees().rem_euclid(360.0) } else { 0.0 };
                (speed, heading)
            }
            _ => (0.0, 0.0),
        }
    }
}

fn heading_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

pub fn should_generate(s: &StationState, rules: &GenerationRules) -> bool {
    let Some(pos) = s.position() else {
        return false;
    };
    let Some(last) = s.last_tx_time else {
        return true;
    };
    let elapsed = s.clock - last;
    if elapsed + EPS < rules.t_gen_min {
        return false;
    }
    let (speed, heading) = s.kinematics();
    pos.distance(s.last_tx_pos) + EPS >= rules.d_pos
        || (speed - s.last_tx_speed).abs() + EPS >= rules.d_speed
        || heading_delta(heading, s.last_tx_heading) + EPS >= rules.d_heading
        || elapsed + EPS >= rules.t_gen_max
}

fn predict_from(history: &MotionHistory, rules: &GenerationRules) -> Result<PredictedTrajectory, PredictionError> {
    let fit = prediction::fit_quadratic(history)?;
    prediction::predict(&fit, rules.horizon_dt, rules.horizon_points)
}

/// Binds generation rules to the projection used for reference positions.
#[derive(Debug, Clone)]
pub struct VamEngine {
    pub rules: GenerationRules,
    pub frame: LocalFrame,
}

impl VamEngine {
    pub fn new(rules: GenerationRules, frame: LocalFrame) -> Result<Self, EngineError> {
        rules.validate()?;
        Ok(Self { rules, frame })
    }

    pub fn should_generate(&self, s: &StationState) -> bool {
        should_generate(s, &self.rules)
    }

    /// Builds the next message and records it as sent.
    pub fn build_vam(&self, s: &mut StationState) -> VamMessage {
        let pos = s.position().unwrap_or(Point2::ORIGIN);
        let (speed, heading) = s.kinematics();
        let geo = self.frame.to_geo(pos);
        let basic_hf = BasicHfContainer {
            station_type: s.kind,
            ref_lat: (geo.lat * 1e7).round() as i32,
            ref_lon: (geo.lon * 1e7).round() as i32,
            heading: ((heading * 10.0).round() as u32 % 3600) as u16,
            speed: (speed * 100.0).round().min(65_534.0) as u16,
        };

        let container = match self.rules.scheme {
            Scheme::EtsiPath => {
                let lf_due = s.last_lf_time.is_none_or(|t| s.clock - t + EPS >= self.rules.lf_period);
                if lf_due {
                    self.path_container(s, pos)
                } else {
                    Container::None
                }
            }
            Scheme::ShapeEllipse => self.ellipse_container(s, pos),
            Scheme::ShapePolygon(v) => self.polygon_container(s, pos, v),
        };
        if container.tag() == crate::codec::ContainerTag::Path {
            s.last_lf_time = Some(s.clock);
        }

        s.last_tx_time = Some(s.clock);
        s.last_tx_pos = pos;
        s.last_tx_speed = speed;
        s.last_tx_heading = heading;
        s.sequence += 1;

        VamMessage { header: VamHeader::new(s.id, s.clock), basic_hf, container }
    }

    /// Polls the trigger rules and builds a message when they fire.
    pub fn step(&self, s: &mut StationState) -> Option<VamMessage> {
        self.should_generate(s).then(|| self.build_vam(s))
    }

    fn path_container(&self, s: &StationState, pos: Point2) -> Container {
        let predicted = match predict_from(&s.history, &self.rules) {
            Ok(p) => p,
            Err(e) => {
                debug!("station {}: HF-only message, prediction unavailable: {e}", s.id);
                return Container::None;
            }
        };
        let past: Vec<Point2> = s.history.samples().rev().take(MAX_PAST_POINTS).rev().map(|h| h.pos).collect();
        match (PathContainer::from_points(&past, pos), PathContainer::from_points(&predicted.positions(), pos)) {
            (Ok(past), Ok(predicted)) => Container::Path { past, predicted },
            (Err(e), _) | (_, Err(e)) => {
                debug!("station {}: path container dropped: {e}", s.id);
                Container::None
            }
        }
    }

    fn ellipse_container(&self, s: &StationState, pos: Point2) -> Container {
        match predict_from(&s.history, &self.rules).and_then(|p| prediction::to_ellipse(&p)) {
            Ok(e) => Container::Ellipse(EllipseContainer::from_ellipse(&e, pos)),
            Err(e) => {
                debug!("station {}: HF-only message, prediction unavailable: {e}", s.id);
                Container::None
            }
        }
    }

    fn polygon_container(&self, s: &StationState, pos: Point2, vertices: usize) -> Container {
        let poly = match predict_from(&s.history, &self.rules).and_then(|p| prediction::to_polygon(&p, vertices)) {
            Ok(p) => p,
            Err(e) => {
                debug!("station {}: HF-only message, prediction unavailable: {e}", s.id);
                return Container::None;
            }
        };
        match PolygonContainer::from_polygon(&poly, pos) {
            Ok(c) => Container::Polygon(c),
            Err(e) => {
                debug!("station {}: polygon container dropped: {e}", s.id);
                Container::None
            }
        }
    }
}
