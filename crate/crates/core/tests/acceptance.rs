//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use vam_intent::codec::{self, ContainerTag, ELLIPSE_MESSAGE_LEN};
use vam_intent::coordination::{measure_scaling, Form, Mode};
use vam_intent::geometry::{sat_overlap, segments_intersect, Segment};
use vam_intent::gnss::{GeoPoint, LocalFrame};
use vam_intent::netsim::{self, GapKind, GapMetrics, Scenario, NUM_BINS};
use vam_intent::prediction::{fit_quadratic, predict, to_ellipse, MotionHistory, MotionSample, PredictedTrajectory};
use vam_intent::vam_engine::{GenerationRules, Scheme, StationState, VamEngine};
use vam_intent::{Point2, UncertaintyEllipse};

type Criterion = (&'static str, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

const CROSSING: &str = include_str!("../scenarios/crossing.json");
const PAIRED_SEEDS: [u64; 4] = [2024, 2025, 2026, 2027];

fn crossing_with(scheme: Scheme, seed: u64) -> Scenario {
    let mut sc = Scenario::from_json(CROSSING).expect("bundled scenario is valid");
    sc.rules.scheme = scheme;
    sc.seed = seed;
    sc
}

/// EtsiPath and Shape-Ellipse metrics pooled over the paired seeds.
fn crossing_metrics() -> &'static (GapMetrics, GapMetrics) {
    static CELL: OnceLock<(GapMetrics, GapMetrics)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut etsi = GapMetrics::default();
        let mut ellipse = GapMetrics::default();
        for seed in PAIRED_SEEDS {
            etsi.merge(&netsim::run(&crossing_with(Scheme::EtsiPath, seed)).unwrap().metrics);
            ellipse.merge(&netsim::run(&crossing_with(Scheme::ShapeEllipse, seed)).unwrap().metrics);
        }
        (etsi, ellipse)
    })
}

fn encoded_len_after_warmup(scheme: Scheme, t_points: usize) -> (usize, ContainerTag) {
    let rules = GenerationRules { scheme, horizon_points: t_points, ..GenerationRules::default() };
    let engine = VamEngine::new(rules, LocalFrame::new(GeoPoint::default())).unwrap();
    let mut s = StationState::new(7, codec::StationType::Cyclist, 23);
    for k in 0..30 {
        let t = k as f64 * 0.1;
        s.observe(t, Point2::new(5.0 * t, 0.02 * t * t)).unwrap();
    }
    let msg = engine.build_vam(&mut s);
    (codec::encode(&msg).unwrap().len(), msg.container.tag())
}

fn c1_fixed_size() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for t in [4, 10, 40] {
        let (ell, ell_tag) = encoded_len_after_warmup(Scheme::ShapeEllipse, t);
        let (etsi, etsi_tag) = encoded_len_after_warmup(Scheme::EtsiPath, t);
        let expected_etsi = 21 + 185 + (1 + 8 * t);
        pass &= ell == ELLIPSE_MESSAGE_LEN && ell_tag == ContainerTag::Ellipse;
        pass &= etsi == expected_etsi && etsi_tag == ContainerTag::Path;
        lines.push(format!("T={t}: ellipse {ell} B, etsi {etsi} B (expect {expected_etsi})"));
    }
    outcome(pass, lines.join("; "))
}

fn c2_ipg_ordering() -> Outcome {
    let (etsi, ell) = crossing_metrics();
    let a = etsi.bin_stats(GapKind::Ipg);
    let b = ell.bin_stats(GapKind::Ipg);
    let mut pass = true;
    let mut diffs: Vec<(usize, f64)> = Vec::new();
    let mut parts = Vec::new();
    for bin in 0..8 {
        let (Some(x), Some(y)) = (a.iter().find(|s| s.bin == bin), b.iter().find(|s| s.bin == bin)) else {
            continue;
        };
        if x.n < 50 || y.n < 50 {
            continue;
        }
        pass &= y.mean <= x.mean;
        diffs.push((bin, x.mean - y.mean));
        parts.push(format!("{}m {:.3}/{:.3}", bin * 50, x.mean, y.mean));
    }
    // longest run of consecutive bins with a strictly growing gap
    let mut best = 1;
    let mut run = 1;
    for w in diffs.windows(2) {
        if w[1].0 == w[0].0 + 1 && w[1].1 > w[0].1 {
            run += 1;
            best = best.max(run);
        } else {
            run = 1;
        }
    }
    pass &= diffs.len() == 8 && best >= 4;
    outcome(pass, format!("etsi/ellipse mean IPG s: {}; widening run {best} bins", parts.join(", ")))
}

fn c3_lf_starvation() -> Outcome {
    let (etsi, _) = crossing_metrics();
    let far = etsi.pooled(GapKind::LfIpg, |b| (5..NUM_BINS).contains(&b));
    let igg = etsi.lf_igg_mean().unwrap_or(f64::NAN);
    if far.is_empty() {
        return outcome(false, "no LF receptions at or beyond 250 m");
    }
    let ipg = far.iter().sum::<f64>() / far.len() as f64;
    let ratio = ipg / igg;
    outcome(
        ratio >= 1.3,
        format!("LF IPG {ipg:.2} s over {} samples, LF IGG {igg:.2} s, ratio {ratio:.2} (need >= 1.3)", far.len()),
    )
}

fn history(ts: &[f64], xs: &[f64], ys: &[f64]) -> MotionHistory {
    let samples = ts.iter().zip(xs).zip(ys).map(|((&t, &x), &y)| MotionSample::new(t, x, y));
    MotionHistory::from_samples(samples, ts.len()).unwrap()
}

fn c4_lsm() -> Outcome {
    let mut r = common::rng(4);
    let mut worst_pred: f64 = 0.0;
    for _ in 0..100 {
        let coef: Vec<f64> =
            (0..2).flat_map(|_| [r.random_range(-2.0..=2.0), r.random_range(-10.0..=10.0), r.random_range(-50.0..50.0)]).collect();
        let start = r.random_range(0.0..1000.0);
        let ts: Vec<f64> = (0..23).map(|k| start + 0.1 * k as f64).collect();
        let t0 = *ts.last().unwrap();
        let truth = |t: f64| {
            let tau = t - t0;
            Point2::new(coef[0] * tau * tau + coef[1] * tau + coef[2], coef[3] * tau * tau + coef[4] * tau + coef[5])
        };
        let xs: Vec<f64> = ts.iter().map(|&t| truth(t).x).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| truth(t).y).collect();
        let fit = fit_quadratic(&history(&ts, &xs, &ys)).unwrap();
        let pt = predict(&fit, 0.25, 40).unwrap();
        for p in &pt.points {
            worst_pred = worst_pred.max(p.pos.distance(truth(p.t)));
        }
    }

    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let ts: Vec<f64> = (0..23).map(|k| 0.1 * k as f64).collect();
        let xs: Vec<f64> = ts.iter().map(|&t| 3.0 + t + noise.sample(&mut r)).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| -1.0 + 0.3 * t * t + noise.sample(&mut r)).collect();
        let fit = fit_quadratic(&history(&ts, &xs, &ys)).unwrap();
        let t0 = *ts.last().unwrap();
        let ox = common::normal_equations_fit(&ts, &xs, t0);
        let oy = common::normal_equations_fit(&ts, &ys, t0);
        for (got, want) in [fit.ax, fit.bx, fit.cx, fit.ay, fit.by, fit.cy].iter().zip(ox.iter().chain(&oy)) {
            worst_rel = worst_rel.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    outcome(
        worst_pred <= 1e-6 && worst_rel <= 1e-8,
        format!("noiseless 10 s prediction error {worst_pred:.2e} m (<= 1e-6); noisy coefficient deviation {worst_rel:.2e} (<= 1e-8)"),
    )
}

fn coverage(e: &UncertaintyEllipse, samples: usize, r: &mut impl Rng) -> f64 {
    let l00 = e.cov.sxx.sqrt();
    let l10 = e.cov.sxy / l00;
    let l11 = (e.cov.syy - l10 * l10).sqrt();
    let mut inside = 0;
    for _ in 0..samples {
        let z0: f64 = StandardNormal.sample(r);
        let z1: f64 = StandardNormal.sample(r);
        let p = e.center + Point2::new(l00 * z0, l10 * z0 + l11 * z1);
        if e.contains(p).unwrap() {
            inside += 1;
        }
    }
    100.0 * inside as f64 / samples as f64
}

fn noisy_trajectory(r: &mut impl Rng) -> PredictedTrajectory {
    let noise = Normal::new(0.0, 0.8).unwrap();
    let ts: Vec<f64> = (0..23).map(|k| 0.1 * k as f64).collect();
    let xs: Vec<f64> = ts.iter().map(|&t| 2.0 * t + noise.sample(r)).collect();
    let ys: Vec<f64> = ts.iter().map(|&t| 1.5 * t + 0.2 * noise.sample(r)).collect();
    predict(&fit_quadratic(&history(&ts, &xs, &ys)).unwrap(), 0.25, 12).unwrap()
}

fn c5_coverage() -> Outcome {
    let mut r = common::rng(5);
    let iso = UncertaintyEllipse::confidence_95(Point2::ORIGIN, vam_intent::Cov2::identity()).unwrap();
    let rotated = to_ellipse(&noisy_trajectory(&mut r)).unwrap();
    let a = coverage(&iso, 100_000, &mut r);
    let b = coverage(&rotated, 100_000, &mut r);
    let ok = |c: f64| (c - 95.0).abs() <= 0.7;
    outcome(ok(a) && ok(b), format!("isotropic {a:.2}%, predicted anisotropic {b:.2}% (95 +/- 0.7)"))
}

fn c6_predicates() -> Outcome {
    let mut r = common::rng(6);
    let (mut agree, mut compared, mut excluded, mut overlapping) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let p = common::random_polygon(&mut r);
        let q = common::random_polygon(&mut r);
        let oracle = common::raster_polygons_overlap(p.vertices(), q.vertices(), 1e-3);
        if common::is_margin_case(p.vertices(), q.vertices(), oracle) {
            excluded += 1;
            continue;
        }
        compared += 1;
        overlapping += usize::from(oracle);
        agree += usize::from(sat_overlap(&p, &q) == oracle);
    }
    let sat_rate = agree as f64 / compared as f64;

    let (mut seg_agree, mut seg_compared) = (0u64, 0u64);
    let mut pt = || Point2::new(r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
    for _ in 0..100_000 {
        let (a, b, c, d) = (pt(), pt(), pt(), pt());
        let Some(oracle) = common::parametric_segments(a, b, c, d) else { continue };
        seg_compared += 1;
        let got = segments_intersect(&Segment::new(a, b).unwrap(), &Segment::new(c, d).unwrap());
        seg_agree += u64::from(got == oracle);
    }
    outcome(
        sat_rate >= 0.999 && seg_agree == seg_compared,
        format!(
            "SAT {agree}/{compared} agree ({overlapping} overlapping, {excluded} margin cases excluded); segments {seg_agree}/{seg_compared} agree"
        ),
    )
}

fn c7_complexity() -> Outcome {
    let n_grid = [16, 32, 64, 128];
    let t_grid = [5, 10, 20, 40];
    let run = |form, mode| measure_scaling(form, mode, &n_grid, &t_grid, 7).unwrap();
    let is_ell = run(Form::Ellipse, Mode::IntentionSharing);
    let is_vec = run(Form::Vector, Mode::IntentionSharing);
    let id_ell = run(Form::Ellipse, Mode::IntentionDetection);
    let id_vec = run(Form::Vector, Mode::IntentionDetection);
    let within = |v: f64, target: f64, tol: f64| (v - target).abs() <= tol;
    let checks = [
        ("IS/ellipse N", is_ell.ops_n, 2.0, 0.05),
        ("IS/vector N", is_vec.ops_n, 2.0, 0.05),
        ("IS/vector T", is_vec.ops_t, 2.0, 0.05),
        ("ID fits N", id_ell.fits_n, 2.0, 0.05),
        ("ID/vector checks N", id_vec.checks_n, 3.0, 0.10),
    ];
    let pass = checks.iter().all(|(_, e, target, tol)| within(e.value, *target, *tol));
    let mut parts: Vec<String> =
        checks.iter().map(|(name, e, target, _)| format!("{name} {:.3}+/-{:.3} (target {target})", e.value, e.stderr)).collect();
    parts.push(format!("ID/vector total work N {:.3}", id_vec.work_n.value));
    outcome(pass, parts.join("; "))
}

fn read_golden(dir: &Path, name: &str) -> Vec<u8> {
    let text = std::fs::read_to_string(dir.join(format!("{name}.hex"))).unwrap();
    hex::decode(text.split_whitespace().collect::<String>()).unwrap()
}

fn c8_determinism() -> Outcome {
    let log_bytes = |seed| {
        let out = netsim::run(&crossing_with(Scheme::EtsiPath, seed)).unwrap();
        let mut buf = Vec::new();
        out.log.write_csv(&mut buf).unwrap();
        buf
    };
    let deterministic = log_bytes(PAIRED_SEEDS[0]) == log_bytes(PAIRED_SEEDS[0]);

    let mut r = common::rng(8);
    let mut roundtrip_fail = 0;
    for _ in 0..10_000 {
        let m = common::random_message(&mut r);
        let bytes = codec::encode(&m).unwrap();
        if codec::decode(&bytes).as_ref() != Ok(&m) || bytes.len() != m.encoded_len() {
            roundtrip_fail += 1;
        }
    }

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("golden");
    let mut golden_fail = Vec::new();
    for (name, m) in codec::golden_messages() {
        if codec::encode(&m).unwrap() != read_golden(&dir, name) {
            golden_fail.push(name);
        }
    }
    outcome(
        deterministic && roundtrip_fail == 0 && golden_fail.is_empty(),
        format!(
            "identical logs: {deterministic}; roundtrip failures {roundtrip_fail}/10000; golden mismatches {golden_fail:?}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("fixed-size encoding law", c1_fixed_size, Duration::from_secs(1)),
        ("IPG ordering by distance", c2_ipg_ordering, Duration::from_secs(120)),
        ("LF starvation ratio", c3_lf_starvation, Duration::from_secs(120)),
        ("least-squares correctness", c4_lsm, Duration::from_secs(5)),
        ("ellipse 95% coverage", c5_coverage, Duration::from_secs(10)),
        ("collision predicate oracles", c6_predicates, Duration::from_secs(30)),
        ("complexity exponents", c7_complexity, Duration::from_secs(60)),
        ("determinism and golden vectors", c8_determinism, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= *budget;
        failed += usize::from(!pass);
        println!(
            "{} criterion {}: {name}: {} [{:.2} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
