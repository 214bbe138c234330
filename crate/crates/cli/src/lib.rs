//! Command implementations behind the `vam-intent` binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use vam_intent::codec::{self, golden_messages};
use vam_intent::coordination::{self, Form, Mode, ScalingReport};
use vam_intent::gnss::{parse_trace, LocalFrame};
use vam_intent::netsim::{self, bin_low, GapKind, GapMetrics, Scenario, NUM_BINS};
use vam_intent::prediction::{fit_quadratic, predict, to_ellipse, MotionHistory, MotionSample, MAX_HORIZON_S};
use vam_intent::vam_engine::Scheme;

#[derive(Debug, Parser)]
#[command(name = "vam-intent", version, about = "VRU intention sharing: simulation, trace replay, complexity and codec tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write message logs and gap metrics.
    Simulate(SimulateArgs),
    /// Replay a GNSS trace and write per-step predictions.
    Replay(ReplayArgs),
    /// Measure operation-count scaling of the coordination pipelines.
    Complexity(ComplexityArgs),
    /// Emit or verify golden codec vectors.
    Codec(CodecArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// etsi, ellipse or polygon:V; repeatable. Defaults to etsi and ellipse.
    #[arg(long = "scheme")]
    pub schemes: Vec<Scheme>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Channel data rate (bit/s).
    #[arg(long)]
    pub data_rate: Option<f64>,
    #[arg(long)]
    pub d50: Option<f64>,
    #[arg(long)]
    pub busy_window: Option<f64>,
    #[arg(long)]
    pub position_noise: Option<f64>,
    #[arg(long)]
    pub lf_period: Option<f64>,
    /// History length H.
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// CSV with a `t,lat,lon` header.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 23)]
    pub history: usize,
    #[arg(long, default_value_t = 0.25)]
    pub dt: f64,
    #[arg(long, default_value_t = 8)]
    pub horizon_points: usize,
    /// Output directory for steps.csv and points.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![16, 32, 64, 128])]
    pub n_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![5, 10, 20, 40])]
    pub t_grid: Vec<usize>,
    /// Polygon vertex count.
    #[arg(long, default_value_t = 8)]
    pub vertices: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    #[command(subcommand)]
    pub action: CodecAction,
}

#[derive(Debug, Subcommand)]
pub enum CodecAction {
    /// Write one hex dump per container kind.
    Emit {
        #[arg(long)]
        golden: PathBuf,
    },
    /// Re-encode the canonical messages and compare byte for byte.
    Verify {
        #[arg(long)]
        golden: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Replay(a) => cmd_replay(&a),
        Command::Complexity(a) => cmd_complexity(&a),
        Command::Codec(a) => match a.action {
            CodecAction::Emit { golden } => cmd_codec_emit(&golden),
            CodecAction::Verify { golden } => cmd_codec_verify(&golden),
        },
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

/// Scheme name safe for file names.
fn file_tag(s: Scheme) -> String {
    s.to_string().replace(':', "-")
}

fn apply_overrides(sc: &mut Scenario, a: &SimulateArgs) {
    if let Some(v) = a.seed {
        sc.seed = v;
    }
    if let Some(v) = a.duration {
        sc.duration = v;
    }
    if let Some(v) = a.data_rate {
        sc.channel.data_rate = v;
    }
    if let Some(v) = a.d50 {
        sc.channel.d50 = v;
    }
    if let Some(v) = a.busy_window {
        sc.channel.busy_window = v;
    }
    if let Some(v) = a.position_noise {
        sc.position_noise_m = v;
    }
    if let Some(v) = a.lf_period {
        sc.rules.lf_period = v;
    }
    if let Some(v) = a.history {
        sc.rules.history_len = v;
    }
    if let Some(v) = a.dt {
        sc.rules.horizon_dt = v;
    }
    if let Some(v) = a.horizon_points {
        sc.rules.horizon_points = v;
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.scenario).with_context(|| format!("cannot read {}", a.scenario.display()))?;
    let mut base: Scenario =
        serde_json::from_str(&text).with_context(|| format!("cannot parse scenario {}", a.scenario.display()))?;
    apply_overrides(&mut base, a);
    base.validate()?;
    let schemes = if a.schemes.is_empty() { vec![Scheme::EtsiPath, Scheme::ShapeEllipse] } else { a.schemes.clone() };
    fs::create_dir_all(&a.out)?;

    let mut results: Vec<(Scheme, GapMetrics)> = Vec::new();
    for scheme in schemes {
        let mut sc = base.clone();
        sc.rules.scheme = scheme;
        let out = netsim::run(&sc)?;
        let tag = file_tag(scheme);
        let mut w = create(&a.out.join(format!("log_{tag}.csv")))?;
        out.log.write_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&a.out.join(format!("gaps_{tag}.csv")))?;
        out.metrics.write_csv(&scheme.to_string(), &mut w)?;
        w.flush()?;
        info!("{scheme}: {} messages generated", out.log.generations().count());
        results.push((scheme, out.metrics));
    }
    let mut w = create(&a.out.join("ipg_by_distance.csv"))?;
    write_plot_csv(&results, &mut w)?;
    w.flush()?;
    Ok(())
}

/// One row per distance bin, mean IPG and LF IPG columns per scheme.
fn write_plot_csv(results: &[(Scheme, GapMetrics)], mut w: impl Write) -> Result<()> {
    let mut header = vec!["bin_low_m".to_string()];
    for (s, _) in results {
        header.push(format!("{s}_ipg_mean_s"));
        header.push(format!("{s}_lf_ipg_mean_s"));
    }
    writeln!(w, "{}", header.join(","))?;
    let stats: Vec<_> = results.iter().map(|(_, m)| (m.bin_stats(GapKind::Ipg), m.bin_stats(GapKind::LfIpg))).collect();
    for bin in 0..NUM_BINS {
        let mut row = vec![format!("{}", bin_low(bin))];
        for (all, lf) in &stats {
            for col in [all, lf] {
                row.push(col.iter().find(|s| s.bin == bin).map_or(String::new(), |s| format!("{:.6}", s.mean)));
            }
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    ensure!(a.history >= 3, "--history must be at least 3, got {}", a.history);
    ensure!(a.dt > 0.0 && a.dt * a.horizon_points as f64 <= MAX_HORIZON_S + 1e-9, "--dt × --horizon-points must lie in (0, {MAX_HORIZON_S}] s");
    let file = File::open(&a.trace).with_context(|| format!("cannot open {}", a.trace.display()))?;
    let records = parse_trace(file).with_context(|| format!("invalid trace {}", a.trace.display()))?;
    if records.len() < 3 {
        bail!("trace has {} records, need at least 3", records.len());
    }
    fs::create_dir_all(&a.out)?;
    let frame = LocalFrame::new(records[0].geo());
    let mut history = MotionHistory::new(a.history);
    let mut steps = create(&a.out.join("steps.csv"))?;
    let mut points = create(&a.out.join("points.csv"))?;
    writeln!(
        steps,
        "t,x,y,ax,bx,cx,ay,by,cy,sigma_x,sigma_y,center_x,center_y,semi_major,semi_minor,orientation_deg"
    )?;
    writeln!(points, "t,k,t_pred,x,y")?;
    for r in &records {
        let p = frame.to_local(r.geo());
        history.push(MotionSample { t: r.t, pos: p })?;
        if history.len() < 3 {
            continue;
        }
        let fit = fit_quadratic(&history)?;
        let pt = predict(&fit, a.dt, a.horizon_points)?;
        let e = to_ellipse(&pt)?;
        let (major, minor, angle) = e.semi_axes();
        writeln!(
            steps,
            "{:.3},{:.4},{:.4},{:.6},{:.6},{:.4},{:.6},{:.6},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.2}",
            r.t,
            p.x,
            p.y,
            fit.ax,
            fit.bx,
            fit.cx,
            fit.ay,
            fit.by,
            fit.cy,
            fit.sigma_x,
            fit.sigma_y,
            e.center.x,
            e.center.y,
            major,
            minor,
            angle.to_degrees()
        )?;
        for (k, q) in pt.points.iter().enumerate() {
            writeln!(points, "{:.3},{},{:.3},{:.4},{:.4}", r.t, k + 1, q.t, q.pos.x, q.pos.y)?;
        }
    }
    steps.flush()?;
    points.flush()?;
    info!("replayed {} records", records.len());
    Ok(())
}

pub fn cmd_complexity(a: &ComplexityArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let mut reports: Vec<ScalingReport> = Vec::new();
    for mode in [Mode::IntentionSharing, Mode::IntentionDetection] {
        for form in [Form::Vector, Form::Ellipse, Form::Polygon(a.vertices)] {
            let r = coordination::measure_scaling(form, mode, &a.n_grid, &a.t_grid, a.seed)?;
            info!("{mode}/{form}: N exponent of primitive ops {:.3}", r.ops_n.value);
            reports.push(r);
        }
    }
    let mut w = create(&a.out.join("exponents.csv"))?;
    coordination::write_exponent_csv(&reports, &mut w)?;
    w.flush()?;
    let mut w = create(&a.out.join("grid.csv"))?;
    coordination::write_grid_csv(&reports, &mut w)?;
    w.flush()?;
    Ok(())
}

fn hex_lines(bytes: &[u8]) -> String {
    let h = hex::encode(bytes);
    let mut out = String::new();
    for chunk in h.as_bytes().chunks(32) {
        out.push_str(std::str::from_utf8(chunk).expect("hex is ascii"));
        out.push('\n');
    }
    out
}

pub fn cmd_codec_emit(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, m) in golden_messages() {
        let path = dir.join(format!("{name}.hex"));
        fs::write(&path, hex_lines(&codec::encode(&m)?)).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_codec_verify(dir: &Path) -> Result<()> {
    let mut failures = Vec::new();
    for (name, m) in golden_messages() {
        let path = dir.join(format!("{name}.hex"));
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let stored = hex::decode(text.split_whitespace().collect::<String>())
            .with_context(|| format!("{} is not valid hex", path.display()))?;
        let fresh = codec::encode(&m)?;
        if let Some(offset) = first_difference(&stored, &fresh) {
            failures.push(format!("{name}: first difference at byte offset {offset}"));
        } else {
            info!("{name}: {} bytes ok", fresh.len());
        }
    }
    if !failures.is_empty() {
        bail!("golden vector mismatch: {}", failures.join("; "));
    }
    Ok(())
}

fn first_difference(a: &[u8], b: &[u8]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y).or_else(|| (a.len() != b.len()).then(|| a.len().min(b.len())))
}
