//! Intention Sharing (IS) and Intention Detection (ID) rounds over a set of
//! stations, instrumented with primitive-operation counters, and the harness
//! that fits scaling exponents to those counts.
//!
//! In IS every station fits its own history once and broadcasts the result;
//! the N(N−1)/2 unordered pairs are checked once. In ID every station fits
//! all N broadcast histories and checks all pairs itself, so fits grow as N²
//! and checks as N·N(N−1)/2.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{payload_size, PayloadForm};
use crate::geometry::{ellipse_overlap, sat_overlap_counted, trajectories_collide_counted, ConvexPolygon, Point2, UncertaintyEllipse};
use crate::prediction::{
    fit_quadratic, predict, to_ellipse, to_polygon, MotionHistory, MotionSample, PredictionError, DEFAULT_DT,
    DEFAULT_HISTORY_LEN, MAX_PREDICTION_POINTS,
};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordinationError {
    #[error("need at least 2 stations, got {0}")]
    TooFewStations(usize),
    #[error("invalid round parameter `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },
    #[error("degenerate {axis} grid: {reason}")]
    DegenerateGrid { axis: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    /// Predicted points, checked as polylines.
    Vector,
    Ellipse,
    Polygon(usize),
}

impl Form {
    pub fn payload(self, points: usize) -> PayloadForm {
        match self {
            Form::Vector => PayloadForm::Vector { points, with_sigmas: false },
            Form::Ellipse => PayloadForm::Ellipse,
            Form::Polygon(v) => PayloadForm::Polygon { vertices: v },
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Form::Vector => write!(f, "vector"),
            Form::Ellipse => write!(f, "ellipse"),
            Form::Polygon(v) => write!(f, "polygon:{v}"),
        }
    }
}

impl FromStr for Form {
    type Err = CoordinationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CoordinationError::InvalidInput { field: "form", reason: format!("unknown form {s:?}") };
        match s {
            "vector" => Ok(Form::Vector),
            "ellipse" => Ok(Form::Ellipse),
            _ => {
                let v = s.strip_prefix("polygon:").ok_or_else(bad)?;
                v.parse().map(Form::Polygon).map_err(|_| bad())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "IS")]
    IntentionSharing,
    #[serde(rename = "ID")]
    IntentionDetection,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::IntentionSharing => "IS",
            Mode::IntentionDetection => "ID",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundInput {
    pub histories: Vec<MotionHistory>,
    pub form: Form,
    pub mode: Mode,
    /// Predicted points T.
    pub horizon_points: usize,
    pub dt: f64,
    /// Histories are cut to their newest `history_len` samples before fitting.
    pub history_len: usize,
}

impl RoundInput {
    pub fn new(histories: Vec<MotionHistory>, form: Form, mode: Mode, horizon_points: usize) -> Self {
        Self { histories, form, mode, horizon_points, dt: DEFAULT_DT, history_len: DEFAULT_HISTORY_LEN }
    }

    pub fn validate(&self) -> Result<(), CoordinationError> {
        if self.histories.len() < 2 {
            return Err(CoordinationError::TooFewStations(self.histories.len()));
        }
        if !(1..=MAX_PREDICTION_POINTS).contains(&self.horizon_points) {
            return Err(CoordinationError::InvalidInput {
                field: "horizon_points",
                reason: format!("{} outside 1..={MAX_PREDICTION_POINTS}", self.horizon_points),
            });
        }
        if self.history_len < 3 {
            return Err(CoordinationError::InvalidInput { field: "history_len", reason: "must be at least 3".into() });
        }
        if let Form::Polygon(v) = self.form {
            if !(3..=crate::geometry::MAX_POLYGON_VERTICES).contains(&v) {
                return Err(CoordinationError::InvalidInput { field: "form", reason: format!("{v} polygon vertices") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub fits: u64,
    pub pair_checks: u64,
    pub segment_tests: u64,
    pub ellipse_tests: u64,
    pub sat_axis_tests: u64,
}

impl OpCounters {
    pub fn primitive_ops(&self) -> u64 {
        self.segment_tests + self.ellipse_tests + self.sat_axis_tests
    }
}

/// Symmetric N×N collision flags with a false diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionMatrix {
    n: usize,
    cells: Vec<bool>,
}

impl CollisionMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, cells: vec![false; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize) {
        self.cells[i * self.n + j] = true;
        self.cells[j * self.n + i] = true;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count() / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub collisions: CollisionMatrix,
    pub counters: OpCounters,
    pub bytes_on_air: u64,
    /// Stations whose fit failed and were left out of the checks.
    pub absent: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Representation {
    Vector(Vec<Point2>),
    Ellipse(UncertaintyEllipse),
    Polygon(ConvexPolygon),
}

fn represent(h: &MotionHistory, input: &RoundInput, c: &mut OpCounters) -> Result<Representation, PredictionError> {
    c.fits += 1;
    let fit = fit_quadratic(&h.truncated(input.history_len))?;
    let pt = predict(&fit, input.dt, input.horizon_points)?;
    Ok(match input.form {
        Form::Vector => Representation::Vector(pt.anchored_polyline()),
        Form::Ellipse => Representation::Ellipse(to_ellipse(&pt)?),
        Form::Polygon(v) => Representation::Polygon(to_polygon(&pt, v)?),
    })
}

fn check(a: &Representation, b: &Representation, c: &mut OpCounters) -> bool {
    c.pair_checks += 1;
    match (a, b) {
        (Representation::Vector(p), Representation::Vector(q)) => {
            let (hit, tests) = trajectories_collide_counted(p, q).expect("anchored polylines have at least 2 points");
            c.segment_tests += tests;
            hit
        }
        (Representation::Ellipse(p), Representation::Ellipse(q)) => {
            c.ellipse_tests += 1;
            // Floored sigmas keep the combined covariance invertible.
            ellipse_overlap(p, q).unwrap_or(false)
        }
        (Representation::Polygon(p), Representation::Polygon(q)) => {
            let (hit, axes) = sat_overlap_counted(p, q);
            c.sat_axis_tests += axes;
            hit
        }
        _ => unreachable!("one round uses a single form"),
    }
}

fn represent_all(input: &RoundInput, c: &mut OpCounters) -> Vec<Option<Representation>> {
    input
        .histories
        .iter()
        .enumerate()
        .map(|(i, h)| {
            represent(h, input, c)
                .inspect_err(|e| log::debug!("station {i} absent from checks: {e}"))
                .ok()
        })
        .collect()
}

fn check_all_pairs(reps: &[Option<Representation>], m: &mut CollisionMatrix, c: &mut OpCounters) {
    for i in 0..reps.len() {
        for j in i + 1..reps.len() {
            if let (Some(a), Some(b)) = (&reps[i], &reps[j]) {
                if check(a, b, c) {
                    m.set(i, j);
                }
            }
        }
    }
}

fn absent(reps: &[Option<Representation>]) -> Vec<usize> {
    reps.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect()
}

/// Each station fits its own history and broadcasts its representation;
/// every unordered pair is checked once.
pub fn run_is_round(input: &RoundInput) -> Result<RoundReport, CoordinationError> {
    input.validate()?;
    let mut counters = OpCounters::default();
    let reps = represent_all(input, &mut counters);
    let mut collisions = CollisionMatrix::new(reps.len());
    check_all_pairs(&reps, &mut collisions, &mut counters);
    let sent = reps.iter().filter(|r| r.is_some()).count() as u64;
    Ok(RoundReport {
        collisions,
        counters,
        bytes_on_air: sent * payload_size(input.form.payload(input.horizon_points)) as u64,
        absent: absent(&reps),
    })
}

/// Each station fits every broadcast history and checks all pairs locally.
pub fn run_id_round(input: &RoundInput) -> Result<RoundReport, CoordinationError> {
    input.validate()?;
    let n = input.histories.len();
    let mut counters = OpCounters::default();
    let mut collisions = CollisionMatrix::new(n);
    let mut missing = Vec::new();
    for observer in 0..n {
        let reps = represent_all(input, &mut counters);
        let mut local = CollisionMatrix::new(n);
        check_all_pairs(&reps, &mut local, &mut counters);
        if observer == 0 {
            collisions = local;
            missing = absent(&reps);
        } else {
            debug_assert_eq!(collisions, local, "observers disagree");
        }
    }
    let bytes: usize = input.histories.iter().map(|h| 8 * h.len().min(input.history_len)).sum();
    Ok(RoundReport { collisions, counters, bytes_on_air: bytes as u64, absent: missing })
}

pub fn run_round(input: &RoundInput) -> Result<RoundReport, CoordinationError> {
    match input.mode {
        Mode::IntentionSharing => run_is_round(input),
        Mode::IntentionDetection => run_id_round(input),
    }
}

/// `n` stations with random quadratic motion plus 0.3 m position noise,
/// `h` samples at 10 Hz each. Station density is held constant as `n` grows.
pub fn synthetic_histories(n: usize, h: usize, seed: u64) -> Vec<MotionHistory> {
    let side = 10.0 * (n as f64).sqrt();
    let noise = Normal::new(0.0, 0.3).expect("valid deviation");
    (0..n)
        .map(|i| {
            let mut r = rng::substream(seed, "coordination-history", &[n as u64, i as u64]);
            let p0 = Point2::new(r.random_range(0.0..side), r.random_range(0.0..side));
            let v = Point2::from_polar(r.random_range(0.5..6.0), r.random_range(0.0..std::f64::consts::TAU));
            let a = Point2::new(r.random_range(-0.5..0.5), r.random_range(-0.5..0.5));
            let samples = (0..h).map(|k| {
                let t = k as f64 * 0.1;
                let jitter = Point2::new(noise.sample(&mut r), noise.sample(&mut r));
                MotionSample { t, pos: p0 + v * t + a * (0.5 * t * t) + jitter }
            });
            MotionHistory::from_samples(samples, h).expect("increasing synthetic times")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub mode: Mode,
    pub form: Form,
    pub n: usize,
    pub t: usize,
    pub fits: u64,
    pub checks: u64,
    pub primitive_ops: u64,
    pub bytes_on_air: u64,
    /// fits · history length + primitive operations.
    pub total_work: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponent {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub mode: Mode,
    pub form: Form,
    /// Rows of the N sweep (T fixed at the first T value), then the T sweep
    /// (N fixed at the first N value).
    pub rows: Vec<GridRow>,
    pub fits_n: Exponent,
    pub checks_n: Exponent,
    pub ops_n: Exponent,
    pub work_n: Exponent,
    pub ops_t: Exponent,
}

/// Least-squares slope of log y on log x with its standard error.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Exponent {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = if x.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Exponent { value: slope, stderr }
}

fn check_grid(axis: &'static str, grid: &[usize]) -> Result<(), CoordinationError> {
    let err = |reason: String| CoordinationError::DegenerateGrid { axis, reason };
    if grid.len() < 4 {
        return Err(err(format!("need at least 4 values, got {}", grid.len())));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(err("values must be positive and strictly increasing".into()));
    }
    let ratios: Vec<f64> = grid.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    if ratios.iter().any(|r| (r / ratios[0] - 1.0).abs() > 0.05) {
        return Err(err(format!("values {grid:?} are not geometrically spaced")));
    }
    Ok(())
}

fn grid_row(mode: Mode, form: Form, n: usize, t: usize, seed: u64) -> Result<GridRow, CoordinationError> {
    let input = RoundInput::new(synthetic_histories(n, DEFAULT_HISTORY_LEN, seed), form, mode, t);
    let r = run_round(&input)?;
    let c = r.counters;
    Ok(GridRow {
        mode,
        form,
        n,
        t,
        fits: c.fits,
        checks: c.pair_checks,
        primitive_ops: c.primitive_ops(),
        bytes_on_air: r.bytes_on_air,
        total_work: c.fits * input.history_len as u64 + c.primitive_ops(),
    })
}

/// Runs one round per grid point and fits count exponents against N and T.
pub fn measure_scaling(
    form: Form,
    mode: Mode,
    n_grid: &[usize],
    t_grid: &[usize],
    seed: u64,
) -> Result<ScalingReport, CoordinationError> {
    check_grid("N", n_grid)?;
    check_grid("T", t_grid)?;
    if n_grid[0] < 2 {
        return Err(CoordinationError::DegenerateGrid { axis: "N", reason: "N must be at least 2".into() });
    }
    let n_rows = n_grid.iter().map(|&n| grid_row(mode, form, n, t_grid[0], seed)).collect::<Result<Vec<_>, _>>()?;
    let t_rows = t_grid.iter().map(|&t| grid_row(mode, form, n_grid[0], t, seed)).collect::<Result<Vec<_>, _>>()?;

    let nx: Vec<f64> = n_grid.iter().map(|&v| v as f64).collect();
    let tx: Vec<f64> = t_grid.iter().map(|&v| v as f64).collect();
    let col = |rows: &[GridRow], f: fn(&GridRow) -> u64| rows.iter().map(|r| f(r) as f64).collect::<Vec<_>>();
    let report = ScalingReport {
        mode,
        form,
        fits_n: log_log_slope(&nx, &col(&n_rows, |r| r.fits)),
        checks_n: log_log_slope(&nx, &col(&n_rows, |r| r.checks)),
        ops_n: log_log_slope(&nx, &col(&n_rows, |r| r.primitive_ops)),
        work_n: log_log_slope(&nx, &col(&n_rows, |r| r.total_work)),
        ops_t: log_log_slope(&tx, &col(&t_rows, |r| r.primitive_ops)),
        rows: n_rows.into_iter().chain(t_rows).collect(),
    };
    Ok(report)
}

pub fn write_grid_csv(reports: &[ScalingReport], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "mode,form,N,T,fits,checks,primitive_ops,bytes_on_air")?;
    for rep in reports {
        for r in &rep.rows {
            writeln!(w, "{},{},{},{},{},{},{},{}", r.mode, r.form, r.n, r.t, r.fits, r.checks, r.primitive_ops, r.bytes_on_air)?;
        }
    }
    Ok(())
}

pub fn write_exponent_csv(reports: &[ScalingReport], mut w: impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "mode,form,fits_n,fits_n_se,checks_n,checks_n_se,ops_n,ops_n_se,work_n,work_n_se,ops_t,ops_t_se"
    )?;
    for r in reports {
        write!(w, "{},{}", r.mode, r.form)?;
        for e in [r.fits_n, r.checks_n, r.ops_n, r.work_n, r.ops_t] {
            write!(w, ",{:.4},{:.4}", e.value, e.stderr)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
