//! Deterministic discrete-event simulation of VRUs broadcasting VAMs over a
//! shared lossy channel, and the inter-packet / inter-generation gap metrics
//! computed from its message log.
//!
//! Each transmission reaches each other station independently with
//! probability `p_dist(d) · p_load`, where
//!
//! - `p_dist(d) = 1 / (1 + (d / d50)^steepness)`
//! - `p_load = exp(-airtime_others / busy_window)`, with `airtime_others` the
//!   summed airtime of the other stations' transmissions within
//!   `±busy_window / 2` of this one.
//!
//! Mobility, generation and reception draws come from separate random
//! sub-streams, so two runs that differ only in the scheme see the same
//! trajectories and the same per-message reception draws.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, ContainerTag, StationType};
use crate::geometry::Point2;
use crate::gnss::{GeoPoint, LocalFrame};
use crate::rng;
use crate::vam_engine::{GenerationRules, StationState, VamEngine};

pub const BIN_WIDTH_M: f64 = 50.0;
pub const NUM_BINS: usize = 10;
const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario field `{field}`: {reason}")]
    InvalidScenario { field: String, reason: String },
    #[error("encoding failed for station {station}: {source}")]
    Encode { station: u32, source: codec::CodecError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SimError {
    SimError::InvalidScenario { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// bit/s.
    pub data_rate: f64,
    /// Distance of 50% reception (m).
    pub d50: f64,
    pub steepness: f64,
    /// Load window width and coupling constant (s).
    pub busy_window: f64,
    /// Replaces the channel model with a constant reception probability.
    pub fixed_reception: Option<f64>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self { data_rate: 6e6, d50: 350.0, steepness: 8.0, busy_window: 1.0, fixed_reception: None }
    }
}

impl ChannelParams {
    pub fn distance_factor(&self, d: f64) -> f64 {
        1.0 / (1.0 + (d / self.d50).powf(self.steepness))
    }

    pub fn load_factor(&self, airtime_others: f64) -> f64 {
        (-airtime_others / self.busy_window).exp()
    }

    pub fn reception_probability(&self, d: f64, airtime_others: f64) -> f64 {
        match self.fixed_reception {
            Some(p) => p,
            None => self.distance_factor(d) * self.load_factor(airtime_others),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        for (field, v) in [
            ("channel.data_rate", self.data_rate),
            ("channel.d50", self.d50),
            ("channel.steepness", self.steepness),
            ("channel.busy_window", self.busy_window),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        if let Some(p) = self.fixed_reception {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("channel.fixed_reception", format!("{p} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Channel occupancy of one message (s).
pub fn airtime(message_bytes: usize, data_rate: f64) -> f64 {
    8.0 * message_bytes as f64 / data_rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub kind: StationType,
    /// Local east/north coordinates (m); the station walks them back and forth.
    pub waypoints: Vec<[f64; 2]>,
    /// m/s.
    pub speed: f64,
    /// Time already spent on the path at t = 0 (s).
    #[serde(default)]
    pub start_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration: f64,
    #[serde(default = "default_tick")]
    pub tick: f64,
    pub stations: Vec<StationSpec>,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub rules: GenerationRules,
    #[serde(default)]
    pub seed: u64,
    /// WGS-84 anchor of the local frame.
    #[serde(default)]
    pub origin: GeoPoint,
    /// Standard deviation of the position fixes fed to the stations (m).
    #[serde(default)]
    pub position_noise_m: f64,
}

fn default_tick() -> f64 {
    0.1
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration", format!("must be positive, got {}", self.duration)));
        }
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return Err(invalid("tick", format!("must be positive, got {}", self.tick)));
        }
        if self.stations.len() < 2 {
            return Err(invalid("stations", format!("need at least 2, got {}", self.stations.len())));
        }
        self.rules.validate().map_err(|e| invalid("rules", e.to_string()))?;
        if self.tick > self.rules.t_gen_min + EPS {
            return Err(invalid("tick", format!("{} exceeds rules.t_gen_min {}", self.tick, self.rules.t_gen_min)));
        }
        self.channel.validate()?;
        if !self.origin.is_valid() {
            return Err(invalid("origin", "latitude/longitude out of range"));
        }
        if !(self.position_noise_m >= 0.0 && self.position_noise_m.is_finite()) {
            return Err(invalid("position_noise_m", format!("must be non-negative, got {}", self.position_noise_m)));
        }
        for (i, st) in self.stations.iter().enumerate() {
            if st.waypoints.is_empty() {
                return Err(invalid(format!("stations[{i}].waypoints"), "empty"));
            }
            if let Some(j) = st.waypoints.iter().position(|w| !Point2::new(w[0], w[1]).is_valid()) {
                return Err(invalid(format!("stations[{i}].waypoints[{j}]"), "not a finite coordinate"));
            }
            if !(st.speed >= 0.0 && st.speed.is_finite()) {
                return Err(invalid(format!("stations[{i}].speed"), format!("must be non-negative, got {}", st.speed)));
            }
            if !st.start_offset.is_finite() {
                return Err(invalid(format!("stations[{i}].start_offset"), "not finite"));
            }
        }
        Ok(())
    }
}

/// Back-and-forth traversal of a waypoint polyline.
#[derive(Debug, Clone)]
struct PathWalker {
    points: Vec<Point2>,
    cumulative: Vec<f64>,
}

impl PathWalker {
    fn new(waypoints: &[[f64; 2]]) -> Self {
        let points: Vec<Point2> = waypoints.iter().map(|w| Point2::new(w[0], w[1])).collect();
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            cumulative.push(cumulative.last().unwrap() + w[0].distance(w[1]));
        }
        Self { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn at(&self, travelled: f64) -> Point2 {
        let len = self.length();
        if len == 0.0 {
            return self.points[0];
        }
        let mut s = travelled.rem_euclid(2.0 * len);
        if s > len {
            s = 2.0 * len - s;
        }
        let i = self.cumulative.partition_point(|&c| c <= s).clamp(1, self.points.len() - 1);
        let seg = self.cumulative[i] - self.cumulative[i - 1];
        if seg == 0.0 {
            return self.points[i];
        }
        let f = (s - self.cumulative[i - 1]) / seg;
        self.points[i - 1] + (self.points[i] - self.points[i - 1]) * f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub tx_id: u32,
    /// `None` marks the generation event itself.
    pub rx_id: Option<u32>,
    pub bytes: usize,
    pub container_tag: ContainerTag,
    pub distance_m: f64,
    pub delivered: bool,
}

/// Generation and reception events in time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageLog {
    pub records: Vec<LogRecord>,
}

impl MessageLog {
    pub fn generations(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(|r| r.rx_id.is_none())
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t,tx_id,rx_id,bytes,container_tag,distance_m,delivered")?;
        for r in &self.records {
            let rx = r.rx_id.map_or(-1, i64::from);
            writeln!(
                w,
                "{:.3},{},{},{},{},{:.3},{}",
                r.t, r.tx_id, rx, r.bytes, r.container_tag as u8, r.distance_m, r.delivered as u8
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Transmission {
    t: f64,
    tx: u32,
    seq: u64,
    bytes: usize,
    tag: ContainerTag,
    positions: Vec<Point2>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: MessageLog,
    pub metrics: GapMetrics,
}

pub fn run(scenario: &Scenario) -> Result<SimOutput, SimError> {
    scenario.validate()?;
    let transmissions = generate(scenario)?;
    let log = deliver(scenario, &transmissions);
    let metrics = collect_gaps(&log);
    Ok(SimOutput { log, metrics })
}

/// Mobility and message generation; independent of the channel.
fn generate(sc: &Scenario) -> Result<Vec<Transmission>, SimError> {
    let engine = VamEngine::new(sc.rules.clone(), LocalFrame::new(sc.origin)).map_err(|e| invalid("rules", e.to_string()))?;
    let walkers: Vec<PathWalker> = sc.stations.iter().map(|s| PathWalker::new(&s.waypoints)).collect();
    let mut states: Vec<StationState> = sc
        .stations
        .iter()
        .enumerate()
        .map(|(i, s)| StationState::new(i as u32, s.kind, sc.rules.history_len))
        .collect();
    let mut noise: Vec<_> = (0..sc.stations.len()).map(|i| rng::substream(sc.seed, "mobility", &[i as u64])).collect();
    let gauss = Normal::new(0.0, sc.position_noise_m).expect("validated noise");
    let sample_period = 1.0 / sc.rules.history_rate_hz;
    let mut last_sample: Vec<Option<f64>> = vec![None; sc.stations.len()];

    let ticks = (sc.duration / sc.tick).round() as u64;
    let mut out = Vec::new();
    for k in 0..=ticks {
        let t = k as f64 * sc.tick;
        let positions: Vec<Point2> = sc
            .stations
            .iter()
            .zip(&walkers)
            .map(|(s, w)| w.at(s.speed * (t + s.start_offset)))
            .collect();
        for (i, state) in states.iter_mut().enumerate() {
            let due = last_sample[i].is_none_or(|prev| t - prev + EPS >= sample_period);
            if due {
                let mut fix = positions[i];
                if sc.position_noise_m > 0.0 {
                    fix = fix + Point2::new(gauss.sample(&mut noise[i]), gauss.sample(&mut noise[i]));
                }
                state.observe(t, fix).expect("tick times increase");
                last_sample[i] = Some(t);
            } else {
                state.advance_clock(t);
            }
        }
        for state in states.iter_mut() {
            let seq = state.sequence;
            if let Some(msg) = engine.step(state) {
                let bytes = codec::encode(&msg).map_err(|source| SimError::Encode { station: state.id, source })?;
                out.push(Transmission {
                    t,
                    tx: state.id,
                    seq,
                    bytes: bytes.len(),
                    tag: msg.container.tag(),
                    positions: positions.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Per-receiver reception decisions.
fn deliver(sc: &Scenario, txs: &[Transmission]) -> MessageLog {
    let ch = &sc.channel;
    let half = ch.busy_window / 2.0;
    let times: Vec<f64> = txs.iter().map(|x| x.t).collect();
    let airtimes: Vec<f64> = txs.iter().map(|x| airtime(x.bytes, ch.data_rate)).collect();
    let n = sc.stations.len() as u32;

    let mut records = Vec::with_capacity(txs.len() * n as usize);
    for (j, tx) in txs.iter().enumerate() {
        let lo = times.partition_point(|&t| t < tx.t - half - EPS);
        let hi = times.partition_point(|&t| t <= tx.t + half + EPS);
        let airtime_others: f64 = (lo..hi).filter(|&k| txs[k].tx != tx.tx).map(|k| airtimes[k]).sum();

        records.push(LogRecord {
            t: tx.t,
            tx_id: tx.tx,
            rx_id: None,
            bytes: tx.bytes,
            container_tag: tx.tag,
            distance_m: 0.0,
            delivered: true,
        });
        let mut draws = rng::substream(sc.seed, "channel", &[u64::from(tx.tx), tx.seq]);
        for rx in (0..n).filter(|&rx| rx != tx.tx) {
            let u: f64 = draws.random();
            let d = tx.positions[tx.tx as usize].distance(tx.positions[rx as usize]);
            let delivered = u < ch.reception_probability(d, airtime_others);
            records.push(LogRecord {
                t: tx.t,
                tx_id: tx.tx,
                rx_id: Some(rx),
                bytes: tx.bytes,
                container_tag: tx.tag,
                distance_m: d,
                delivered,
            });
        }
        debug_assert!(j == 0 || txs[j - 1].t <= tx.t);
    }
    MessageLog { records }
}

pub fn bin_index(distance_m: f64) -> Option<usize> {
    let b = (distance_m / BIN_WIDTH_M).floor();
    (b >= 0.0 && (b as usize) < NUM_BINS).then_some(b as usize)
}

pub fn bin_low(bin: usize) -> f64 {
    bin as f64 * BIN_WIDTH_M
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStat {
    pub bin: usize,
    pub mean: f64,
    pub median: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapKind {
    /// All receptions.
    Ipg,
    /// Receptions of path-bearing messages only.
    LfIpg,
}

/// IPG samples keyed by (tx, rx, distance bin); IGG samples keyed by tx.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapMetrics {
    pub ipg: BTreeMap<(u32, u32, usize), Vec<f64>>,
    pub lf_ipg: BTreeMap<(u32, u32, usize), Vec<f64>>,
    pub igg: BTreeMap<u32, Vec<f64>>,
    pub lf_igg: BTreeMap<u32, Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl GapMetrics {
    fn samples(&self, kind: GapKind) -> &BTreeMap<(u32, u32, usize), Vec<f64>> {
        match kind {
            GapKind::Ipg => &self.ipg,
            GapKind::LfIpg => &self.lf_ipg,
        }
    }

    /// Samples of one bin pooled over all (tx, rx) pairs.
    pub fn pooled(&self, kind: GapKind, bins: impl Fn(usize) -> bool) -> Vec<f64> {
        self.samples(kind)
            .iter()
            .filter(|((_, _, b), _)| bins(*b))
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }

    /// Mean and median per distance bin; empty bins are skipped.
    pub fn bin_stats(&self, kind: GapKind) -> Vec<BinStat> {
        (0..NUM_BINS)
            .filter_map(|bin| {
                let mut v = self.pooled(kind, |b| b == bin);
                (!v.is_empty()).then(|| BinStat { bin, mean: mean(&v), median: median(&mut v), n: v.len() })
            })
            .collect()
    }

    pub fn igg_mean(&self) -> Option<f64> {
        let v: Vec<f64> = self.igg.values().flatten().copied().collect();
        (!v.is_empty()).then(|| mean(&v))
    }

    pub fn lf_igg_mean(&self) -> Option<f64> {
        let v: Vec<f64> = self.lf_igg.values().flatten().copied().collect();
        (!v.is_empty()).then(|| mean(&v))
    }

    pub fn min_igg(&self) -> Option<f64> {
        self.igg.values().flatten().copied().reduce(f64::min)
    }

    /// Folds another run's samples into this one.
    pub fn merge(&mut self, other: &GapMetrics) {
        for (k, v) in &other.ipg {
            self.ipg.entry(*k).or_default().extend(v);
        }
        for (k, v) in &other.lf_ipg {
            self.lf_ipg.entry(*k).or_default().extend(v);
        }
        for (k, v) in &other.igg {
            self.igg.entry(*k).or_default().extend(v);
        }
        for (k, v) in &other.lf_igg {
            self.lf_igg.entry(*k).or_default().extend(v);
        }
    }

    /// Rows of `scheme,bin_low_m,metric,value_s,n_samples`. Unbinned
    /// generation metrics use `bin_low_m = -1`.
    pub fn write_csv(&self, scheme: &str, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "scheme,bin_low_m,metric,value_s,n_samples")?;
        for s in self.bin_stats(GapKind::Ipg) {
            writeln!(w, "{scheme},{},ipg_mean,{:.6},{}", bin_low(s.bin), s.mean, s.n)?;
            writeln!(w, "{scheme},{},ipg_median,{:.6},{}", bin_low(s.bin), s.median, s.n)?;
        }
        for s in self.bin_stats(GapKind::LfIpg) {
            writeln!(w, "{scheme},{},lf_ipg_mean,{:.6},{}", bin_low(s.bin), s.mean, s.n)?;
        }
        let count = |m: &BTreeMap<u32, Vec<f64>>| m.values().map(Vec::len).sum::<usize>();
        if let Some(m) = self.igg_mean() {
            writeln!(w, "{scheme},-1,igg_mean,{m:.6},{}", count(&self.igg))?;
        }
        if let Some(m) = self.lf_igg_mean() {
            writeln!(w, "{scheme},-1,lf_igg_mean,{m:.6},{}", count(&self.lf_igg))?;
        }
        Ok(())
    }
}

pub fn collect_gaps(log: &MessageLog) -> GapMetrics {
    let mut m = GapMetrics::default();
    let mut last_gen: BTreeMap<u32, f64> = BTreeMap::new();
    let mut last_lf_gen: BTreeMap<u32, f64> = BTreeMap::new();
    let mut last_rx: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut last_lf_rx: BTreeMap<(u32, u32), f64> = BTreeMap::new();

    for r in &log.records {
        let lf = r.container_tag == ContainerTag::Path;
        match r.rx_id {
            None => {
                if let Some(prev) = last_gen.insert(r.tx_id, r.t) {
                    m.igg.entry(r.tx_id).or_default().push(r.t - prev);
                }
                if lf {
                    if let Some(prev) = last_lf_gen.insert(r.tx_id, r.t) {
                        m.lf_igg.entry(r.tx_id).or_default().push(r.t - prev);
                    }
                }
            }
            Some(rx) if r.delivered => {
                let bin = bin_index(r.distance_m);
                if let Some(prev) = last_rx.insert((r.tx_id, rx), r.t) {
                    if let Some(b) = bin {
                        m.ipg.entry((r.tx_id, rx, b)).or_default().push(r.t - prev);
                    }
                }
                if lf {
                    if let Some(prev) = last_lf_rx.insert((r.tx_id, rx), r.t) {
                        if let Some(b) = bin {
                            m.lf_ipg.entry((r.tx_id, rx, b)).or_default().push(r.t - prev);
                        }
                    }
                }
            }
            Some(_) => {}
        }
    }
    m
}
