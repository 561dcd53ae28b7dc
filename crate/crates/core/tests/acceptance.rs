//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use wlra::fixtures::{self, Fixture};
use wlra::homotopy::{cuts, make_path, solve_on_curve, svd_seed, trace_curve, TraceConfig};
use wlra::landscape::{conjecture_scan, enumerate_solutions, EnumerateConfig, ScanConfig};
use wlra::matrix::{rmse, truncated_svd, weighted_norm_sq};
use wlra::orthobasis::{closest_basis, VectorSet, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use wlra::solver::{alternate, is_stationary, update_a, update_b, SolverConfig};
use wlra::{Matrix, PseudoWeightGrid};

use common::*;

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Max entrywise deviation of the closest found matrix to each target.
fn matrix_deviations(targets: &[Matrix], found: &[Matrix]) -> Vec<f64> {
    targets
        .iter()
        .map(|t| {
            found
                .iter()
                .map(|f| f.max_abs_diff(t).unwrap())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|d| format!("{d:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn enumerate_fixture(fx: &Fixture) -> (Vec<Matrix>, Vec<f64>, Duration) {
    let cfg = EnumerateConfig {
        starts: Some(fx.starts),
        seed: SEED,
        jobs: jobs(),
        ..EnumerateConfig::default()
    };
    let (report, elapsed) = timed(|| enumerate_solutions(&fx.x, &fx.z0, fx.p, &cfg).unwrap());
    let wlra = report.solutions.iter().map(|b| b.solution.wlra.clone()).collect();
    let rmse = report.solutions.iter().map(|b| b.solution.rmse.unwrap()).collect();
    (wlra, rmse, elapsed)
}

fn criterion_1() -> Outcome {
    let fx = fixtures::small();
    let (found, found_rmse, elapsed) = enumerate_fixture(&fx);
    let dev = matrix_deviations(&fx.solutions, &found);
    let rmse_dev: Vec<f64> = fx
        .rmse
        .iter()
        .map(|want| found_rmse.iter().map(|r| (r - want).abs()).fold(f64::INFINITY, f64::min))
        .collect();
    let pass = found.len() == 2
        && dev.iter().all(|d| *d <= 5e-3)
        && rmse_dev.iter().all(|d| *d <= 1e-3)
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "2x2 fixture: {} solutions (want 2); wlra max deviation {} (tol 5e-3); rmse {} deviation {} (tol 1e-3); {:?} (limit 1 s)",
            found.len(),
            fmt(&dev),
            fmt(&found_rmse),
            fmt(&rmse_dev),
            elapsed
        ),
    )
}

fn criterion_2() -> Outcome {
    let fx = fixtures::medium();
    let (found, _, elapsed) = enumerate_fixture(&fx);
    let dev = matrix_deviations(&fx.solutions, &found);
    let pass = found.len() == 3 && dev.iter().all(|d| *d <= 5e-3) && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "4x3 fixture: {} solutions (want 3); wlra max deviation {} (tol 5e-3); {:?} (limit 10 s)",
            found.len(),
            fmt(&dev),
            elapsed
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0_f64;
    let mut counts = Vec::new();
    let mut indices_ok = true;
    let (_, elapsed) = timed(|| {
        for fx in [fixtures::small(), fixtures::medium()] {
            let found = cuts(&make_path(&fx.z0).unwrap());
            counts.push(found.len());
            for &(i, j, tau) in &fx.cuts {
                match found.iter().find(|c| (c.row, c.col) == (i, j)) {
                    Some(c) => worst = worst.max((c.tau - tau).abs() / tau.abs()),
                    None => indices_ok = false,
                }
            }
            indices_ok &= found.len() == fx.cuts.len();
        }
    });
    let pass = indices_ok && worst <= 1e-3 && elapsed < Duration::from_millis(100);
    outcome(
        pass,
        format!(
            "cut counts {counts:?} (want [4, 12]); max relative deviation {worst:.2e} (tol 1e-3); {elapsed:?} (limit 0.1 s)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let fx = fixtures::small();
    let ((curve, points), elapsed) = timed(|| {
        let path = make_path(&fx.z0).unwrap();
        let cfg = TraceConfig::default();
        let seed = svd_seed(&fx.x, &path, 1, &cfg).unwrap();
        let curve = trace_curve(&fx.x, &path, &seed, 1.0, &cfg).unwrap();
        let points: Vec<Option<(Matrix, f64)>> = fx
            .svd_curve
            .points
            .iter()
            .map(|(tau, _, _)| {
                curve.contains_tau(*tau).then(|| {
                    let s = solve_on_curve(&fx.x, &path, &curve, *tau, &cfg).unwrap();
                    let r = rmse(&fx.x, &fx.z0, &s.wlra).unwrap();
                    (s.wlra, r)
                })
            })
            .collect();
        (curve, points)
    });
    let end_dev = [
        (curve.tau_left - fx.svd_curve.tau_left).abs(),
        (curve.tau_right - fx.svd_curve.tau_right).abs(),
    ];
    let mut wlra_dev = Vec::new();
    let mut rmse_dev = Vec::new();
    let mut rmse_got = Vec::new();
    for ((tau, want, want_rmse), got) in fx.svd_curve.points.iter().zip(&points) {
        match got {
            Some((wlra, r)) => {
                // The reference lists tau = 0.9 and 1.1 as curve points; tau = 1 is the SVD itself.
                if *tau != 1.0 {
                    wlra_dev.push(wlra.max_abs_diff(want).unwrap());
                }
                rmse_dev.push((r - want_rmse).abs());
                rmse_got.push(*r);
            }
            None => {
                wlra_dev.push(f64::INFINITY);
                rmse_dev.push(f64::INFINITY);
            }
        }
    }
    let pass = end_dev.iter().all(|d| *d <= 1e-2)
        && wlra_dev.iter().all(|d| *d <= 5e-3)
        && rmse_dev.iter().all(|d| *d <= 1e-3)
        && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "endpoints ({:.5}, {:.5}) deviation {} (tol 1e-2); wlra(0.9), wlra(1.1) deviation {} (tol 5e-3); rmse at 0.9/1/1.1 {} deviation {} (tol 1e-3); {:?} (limit 5 s)",
            curve.tau_left,
            curve.tau_right,
            fmt(&end_dev),
            fmt(&wlra_dev),
            fmt(&rmse_got),
            fmt(&rmse_dev),
            elapsed
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut r = rng(SEED);
    let mut worst = 0.0_f64;
    let mut unconverged = 0;
    for _ in 0..100 {
        let m = r.gen_range(2..=6);
        let n = r.gen_range(2..=6);
        let p = r.gen_range(1..m.min(n));
        let x = random_matrix(&mut r, m, n);
        let w = PseudoWeightGrid::uniform(m, n, 1.0).unwrap();
        let s = alternate(&x, &w, p, None, &SolverConfig::default()).unwrap();
        if !s.converged {
            unconverged += 1;
        }
        let svd = truncated_svd(&x, p).unwrap();
        worst = worst.max(s.wlra.sub(&svd).unwrap().frobenius() / svd.frobenius());
    }
    outcome(
        worst <= 1e-8 && unconverged == 0,
        format!("100 uniform-weight instances: max relative Frobenius error {worst:.2e} (tol 1e-8); {unconverged} unconverged"),
    )
}

fn criterion_6() -> Outcome {
    let mut r = rng(SEED);
    let cfg = SolverConfig::default();
    let (mut descent, mut gauge, mut stationary, mut basis) = (0.0_f64, 0.0_f64, 0usize, 0.0_f64);
    let mut checked_stationary = 0;
    for _ in 0..100 {
        let m = r.gen_range(2..=5);
        let n = r.gen_range(2..=5);
        let p = r.gen_range(1..m.min(n));
        let x = random_matrix(&mut r, m, n);
        let z = random_weights(&mut r, m, n);
        let scale = weighted_norm_sq(&x, &z, &Matrix::zeros(m, n)).unwrap().max(1.0);

        // Monotone descent per half-step.
        let mut a = random_matrix(&mut r, m, p);
        let mut prev = f64::INFINITY;
        for _ in 0..30 {
            let b = update_b(&x, &z, &a).unwrap();
            let after_b = weighted_norm_sq(&x, &z, &a.mul_transpose(&b).unwrap()).unwrap();
            let next = update_a(&x, &z, &b).unwrap();
            let after_a = weighted_norm_sq(&x, &z, &next.mul_transpose(&b).unwrap()).unwrap();
            descent = descent.max((after_b - prev) / scale).max((after_a - after_b) / scale);
            prev = after_a;
            a = next;
        }

        // Gauge invariance under an invertible re-gauging of the start.
        let a0 = random_matrix(&mut r, m, p);
        let g = Matrix::from_fn(p, p, |i, j| if i == j { 1.5 } else { 0.3 }).unwrap();
        let s0 = alternate(&x, &z, p, Some(&a0), &cfg).unwrap();
        let s1 = alternate(&x, &z, p, Some(&a0.matmul(&g).unwrap()), &cfg).unwrap();
        if s0.converged && s1.converged {
            gauge = gauge.max(s0.wlra.max_abs_diff(&s1.wlra).unwrap() / x.max_abs().max(1.0));
        }

        // Finite-difference stationarity at every converged solution.
        for s in [&s0, &s1] {
            if s.converged {
                checked_stationary += 1;
                if !is_stationary(&x, &z, s) {
                    stationary += 1;
                }
            }
        }

        // Closest basis: orthonormality, span, permutation equivariance.
        let k = r.gen_range(1..=m);
        let vectors: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let e = closest_basis(&VectorSet::new(vectors.clone()).unwrap(), DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        basis = basis.max(e.orthonormality_defect());
        for v in &vectors {
            let mut resid = v.clone();
            for q in e.vectors() {
                let c: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
                resid.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
            basis = basis.max(resid.iter().map(|t| t.abs()).fold(0.0, f64::max));
        }
        let rev: Vec<Vec<f64>> = vectors.iter().rev().cloned().collect();
        let f = closest_basis(&VectorSet::new(rev).unwrap(), DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        for (i, v) in f.vectors().iter().enumerate() {
            let u = &e.vectors()[k - 1 - i];
            basis = basis.max(v.iter().zip(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }

    // Solution count of the 2x2 fixture by brute force over the angle of A.
    let (x, w) = fixture_2x2();
    let oracle = angle_grid_minima(&x, &w, 2_000_000).len();
    let enumerated = enumerate_solutions(&x, &w, 1, &EnumerateConfig { starts: Some(64), seed: SEED, ..Default::default() })
        .unwrap()
        .count();

    let pass = descent <= 1e-12
        && gauge <= 1e-8
        && stationary == 0
        && basis <= 1e-10
        && oracle == 2
        && enumerated == 2;
    outcome(
        pass,
        format!(
            "max relative objective increase per half-step {descent:.1e} (tol 1e-12); gauge deviation {gauge:.1e} (tol 1e-8); \
             {stationary}/{checked_stationary} converged solutions non-stationary; closest basis defect {basis:.1e} (tol 1e-10); \
             2x2 fixture count: oracle {oracle}, enumerated {enumerated} (want 2)"
        ),
    )
}

fn criterion_7() -> Outcome {
    let shapes = [((2, 2, 1), 2), ((2, 3, 1), 2), ((3, 3, 1), 3), ((4, 3, 2), 3)];
    let mut pass = true;
    let mut parts = Vec::new();
    let (_, elapsed) = timed(|| {
        for ((m, n, p), want) in shapes {
            let mut cfg = ScanConfig::new(m, n, p, 10_000, SEED);
            cfg.jobs = jobs();
            let summary = conjecture_scan(&cfg).unwrap();
            let ok = summary.max_count == want && summary.max_count <= summary.bound;
            pass &= ok;
            let mut part = format!(
                "({m},{n},{p}) max {} (want {want}, bound {}) histogram {:?}",
                summary.max_count, summary.bound, summary.histogram
            );
            if let Some(v) = summary.violating_instances.first() {
                part += &format!(
                    " first violation trial {} X {:?} W {:?} rmse {}",
                    v.trial,
                    v.instance.x.to_rows(),
                    v.instance.w.values().to_rows(),
                    fmt(&v.rmse)
                );
            }
            parts.push(part);
        }
    });
    pass &= elapsed < Duration::from_secs(600);
    outcome(pass, format!("10000 instances per shape, seed {SEED}: {}; {elapsed:?} (limit 600 s)", parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let many = jobs().max(2).to_string();
    let runs = [("1", "a.json"), ("1", "b.json"), (many.as_str(), "c.json")];
    let mut outputs = Vec::new();
    for (j, name) in runs {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_wlra"))
            .args(["--seed", "7", "--jobs", j, "repro", "-o"])
            .arg(&path)
            .status()
            .unwrap();
        outputs.push((status.code(), std::fs::read(&path).unwrap_or_default()));
    }
    let identical = outputs.windows(2).all(|w| w[0].1 == w[1].1) && !outputs[0].1.is_empty();
    outcome(
        identical,
        format!(
            "repro at --jobs 1, 1, {many}: reports byte-identical = {identical} ({} bytes), exit codes {:?}",
            outputs[0].1.len(),
            outputs.iter().map(|o| o.0).collect::<Vec<_>>()
        ),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {e:?}")));
        if !result.pass {
            failed += 1;
        }
        println!("criterion {id}: {} | {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
