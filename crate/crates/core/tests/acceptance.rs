//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bennett::cli::match_predictions;
use bennett::dataset::{build_grid, generate, ForwardConfig, GateReport, GridConfig, Sample};
use bennett::inverse::{candidate_curve, trajectory_at_phase, InverseConfig, InverseDesigner};
use bennett::io::write_samples;
use bennett::kinematics::{derive_dependents, BennettParams};
use bennett::metrics::{evaluate, wrap, EvalRecord};
use bennett::normalize::{
    normalize_dataset, normalized_a12, stage1_scale, C99Choice, NormalizedDataset, REFERENCE_C99,
};
use bennett::solver::{sweep, SolverConfig};
use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

struct Desk {
    samples: Vec<Sample>,
    report: GateReport,
    elapsed: Duration,
    normalized: NormalizedDataset,
}

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gate1_oracle() -> Verdict {
    let start = Instant::now();
    let grid = build_grid(&GridConfig::with_counts(200, 200));
    let mut mismatches = 0;
    for c in &grid {
        let brute = ((1.0 - c.a12) / c.a12 * c.alpha12.sin()).abs() <= 1.0;
        let got = derive_dependents(c.a12, c.alpha12)
            .map_err(|e| e.to_string())?
            .accepted()
            .is_some();
        if brute != got {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    check(
        mismatches == 0 && t < Duration::from_secs(1),
        format!("{} candidates, {mismatches} mismatches, {t:.2?}", grid.len()),
    )
}

#[rustfmt::skip]
fn dh(theta: f64, a: f64, alpha: f64) -> Matrix4<f64> {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    Matrix4::new(
        ct, -st * ca, st * sa, a * ct,
        st, ct * ca, -ct * sa, a * st,
        0.0, sa, ca, 0.0,
        0.0, 0.0, 0.0, 1.0,
    )
}

fn loop_residual(p: &BennettParams, t: [f64; 4]) -> f64 {
    let m = dh(t[0], p.a12(), p.alpha12())
        * dh(t[1], p.a23(), p.alpha23())
        * dh(t[2], p.a12(), p.alpha12())
        * dh(t[3], p.a23(), p.alpha23());
    let d = m - Matrix4::identity();
    (0..3)
        .flat_map(|r| (0..4).map(move |c| d[(r, c)].abs()))
        .fold(0.0, f64::max)
}

fn closure_fidelity() -> Verdict {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut pairs, mut frames, mut worst) = (0, 0, 0.0f64);
    while pairs < 20 {
        let a = if rng.gen_bool(0.5) {
            rng.gen_range(0.02..=0.48)
        } else {
            rng.gen_range(0.52..=0.98)
        };
        let alpha = if rng.gen_bool(0.5) {
            rng.gen_range(5f64.to_radians()..=178f64.to_radians())
        } else {
            rng.gen_range(185f64.to_radians()..=355f64.to_radians())
        };
        let Some(p) = derive_dependents(a, alpha).map_err(|e| e.to_string())?.accepted() else {
            continue;
        };
        let s = sweep(&p, &cfg).map_err(|e| e.to_string())?;
        for (k, f) in s.frames.iter().enumerate().filter(|(_, f)| f.converged) {
            worst = worst.max(loop_residual(&p, [s.drive_angle(k), f.theta2, f.theta3, f.theta4]));
            frames += 1;
        }
        pairs += 1;
    }
    let t = start.elapsed();
    check(
        worst <= 1e-6 && t < Duration::from_secs(60),
        format!("{pairs} pairs, {frames} converged frames, worst residual {worst:.3e}, {t:.2?}"),
    )
}

fn desk_generation(desk: &Desk) -> Verdict {
    let r = &desk.report;
    check(
        desk.elapsed < Duration::from_secs(600) && (0.40..=0.80).contains(&r.pass_rate),
        format!(
            "40x40 in {:.2?}, pass rate {:.4} (gate1 {}, gate2 {}, gate3 {} rejects)",
            desk.elapsed, r.pass_rate, r.gate1_rejects, r.gate2_rejects, r.gate3_rejects
        ),
    )
}

fn normalization(desk: &Desk) -> Verdict {
    let endpoint = normalized_a12(0.98, REFERENCE_C99);
    let mut a23_exact = true;
    for s in &desk.samples {
        a23_exact &= stage1_scale(s).map_err(|e| e.to_string())?.a23 == 1.0;
    }
    let coords: Vec<f64> = desk
        .normalized
        .train
        .iter()
        .flat_map(|s| s.positions.iter().flat_map(|p| [p.x, p.y, p.z]))
        .collect();
    let inside = coords.iter().filter(|c| c.abs() <= 1.0).count() as f64 / coords.len() as f64;
    check(
        (endpoint - 1.664).abs() <= 1e-3 && a23_exact && inside >= 0.99,
        format!(
            "a12 0.98 -> {endpoint:.5}, stage-1 a23 exact: {a23_exact}, auto c99 {:.4}, {:.4}% of train coords in [-1,1]",
            desk.normalized.c99,
            100.0 * inside
        ),
    )
}

fn brute_wrap(delta: f64) -> f64 {
    let k_max = (delta.abs() / TAU).ceil() as i64 + 1;
    (-k_max..=k_max)
        .map(|k| delta + TAU * k as f64)
        .filter(|x| *x > -std::f64::consts::PI)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap()
}

fn metric_correctness(desk: &Desk) -> Verdict {
    let rec = |alpha12| EvalRecord {
        alpha12,
        ..Default::default()
    };
    let seam = evaluate(&[rec(0.1)], &[rec(TAU - 0.1)])
        .map_err(|e| e.to_string())?
        .alpha12_mae;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("set.jsonl");
    write_samples(&path, &desk.samples).map_err(|e| e.to_string())?;
    let (p, g) = match_predictions(&path, &path).map_err(|e| e.to_string())?;
    let r = evaluate(&p, &g).map_err(|e| e.to_string())?;
    let zero = r.a12_mae == 0.0
        && r.alpha12_mae == 0.0
        && r.param_mae == 0.0
        && r.traj_mae == Some(0.0)
        && r.vel_mae == Some(0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut wrap_bad = 0;
    for _ in 0..10_000 {
        let x: f64 = rng.gen_range(-4.0 * TAU..4.0 * TAU);
        let y: f64 = rng.gen_range(-4.0 * TAU..4.0 * TAU);
        let (w, b) = (wrap(x - y), brute_wrap(x - y));
        if !(w > -std::f64::consts::PI && w <= std::f64::consts::PI) || (w - b).abs() > 1e-9 {
            wrap_bad += 1;
        }
    }
    check(
        (seam - 0.2).abs() <= 1e-12 && zero && wrap_bad == 0,
        format!(
            "seam MAE {seam:.15}, identical-file report zero: {zero} (n={}), wrap mismatches {wrap_bad}/10000",
            r.n
        ),
    )
}

/// Smallest position MAE over drive-angle shifts of the recovered curve.
fn aligned_traj_mae(recovered: &[Vec<Vector3<f64>>], truth: &[Vector3<f64>]) -> f64 {
    recovered
        .iter()
        .map(|r| {
            let diffs: f64 = r.iter().zip(truth).map(|(a, b)| (a - b).abs().sum()).sum();
            diffs / (3 * truth.len()) as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn inverse_round_trip(desk: &Desk) -> Verdict {
    let start = Instant::now();
    let c99 = desk.normalized.c99;
    let test = &desk.normalized.test;
    let trials: Vec<&Sample> = (0..50).map(|k| &test[k * test.len() / 50]).collect();
    let cfg = InverseConfig {
        c99,
        ..InverseConfig::default()
    };
    let designer = InverseDesigner::new(cfg.clone()).map_err(|e| e.to_string())?;
    let (mut param_ok, mut traj_ok, mut worst_traj) = (0, 0, 0.0f64);
    for s in &trials {
        let Ok(r) = designer.solve(&s.waypoints) else {
            continue;
        };
        if (r.a12_hat - s.a12).abs() <= 0.01 && wrap(r.alpha12_hat - s.alpha12).abs() <= 0.05 {
            param_ok += 1;
        }
        let Some(curve) = candidate_curve(r.a12_raw, r.alpha12_hat, c99, &cfg.forward) else {
            continue;
        };
        let shifts: Vec<Vec<Vector3<f64>>> = std::iter::once(r.phase_hat)
            .chain((0..720).map(|k| TAU * k as f64 / 720.0))
            .map(|phase| trajectory_at_phase(&curve.curve, phase))
            .collect();
        let mae = aligned_traj_mae(&shifts, &s.positions);
        worst_traj = worst_traj.max(mae);
        if mae < 0.02 {
            traj_ok += 1;
        }
    }
    let t = start.elapsed();
    let n = trials.len();
    check(
        param_ok * 10 >= n * 9 && traj_ok * 10 >= n * 9 && t < Duration::from_secs(1800),
        format!(
            "{param_ok}/{n} within 0.01 / 0.05 rad, {traj_ok}/{n} Traj-MAE < 0.02 (worst {worst_traj:.2e}), {t:.2?}"
        ),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str, workers: &str| -> Result<std::path::PathBuf, String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_bennett"))
            .args(["gen", "--na", "16", "--nalpha", "16", "--workers", workers, "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if status.success() {
            Ok(out)
        } else {
            Err(format!("gen exited with {status}"))
        }
    };
    let runs = [run("a", "1")?, run("b", "1")?, run("c", "4")?, run("d", "0")?];
    let read = |d: &Path, f: &str| fs::read(d.join(f)).map_err(|e| e.to_string());
    let mut identical = true;
    let mut bytes = 0;
    for file in ["dataset.jsonl", "manifest.json", "gate_report.json"] {
        let reference = read(&runs[0], file)?;
        bytes += reference.len();
        for other in &runs[1..] {
            identical &= read(other, file)? == reference;
        }
    }
    check(
        identical,
        format!("4 runs (workers 1, 1, 4, auto), {bytes} bytes per run, identical: {identical}"),
    )
}

fn main() {
    let start = Instant::now();
    let (samples, report) =
        generate(&GridConfig::with_counts(40, 40), &ForwardConfig::default(), 0).expect("desk generation runs");
    let elapsed = start.elapsed();
    let normalized = normalize_dataset(&samples, 0, C99Choice::Auto).expect("desk normalization runs");
    let desk = Desk {
        samples,
        report,
        elapsed,
        normalized,
    };

    let criteria: Vec<Criterion> = vec![
        ("gate-1 analytic oracle", Box::new(gate1_oracle)),
        ("closure fidelity", Box::new(closure_fidelity)),
        ("desk-scale generation", Box::new(|| desk_generation(&desk))),
        ("normalization arithmetic", Box::new(|| normalization(&desk))),
        ("metric correctness", Box::new(|| metric_correctness(&desk))),
        ("inverse round trip", Box::new(|| inverse_round_trip(&desk))),
        ("determinism", Box::new(determinism)),
    ];

    let mut failed = 0;
    for (name, criterion) in &criteria {
        match criterion() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
