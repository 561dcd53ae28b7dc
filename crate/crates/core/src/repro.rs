//! End-to-end checks of the built-in fixtures against their reference values.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fixtures::{self, Fixture};
use crate::homotopy::{
    cuts, make_path, solve_on_curve, svd_seed, trace_all, trace_curve, TraceConfig,
};
use crate::landscape::{enumerate_solutions, EnumerateConfig, DEFAULT_DEDUP_TOL};
use crate::matrix::{rmse, Matrix};
use crate::solver::SolverConfig;

pub const ZBAR_TOL: f64 = 1e-5;
pub const CUT_REL_TOL: f64 = 1e-3;
pub const WLRA_TOL: f64 = 5e-3;
pub const RMSE_TOL: f64 = 1e-3;
pub const ENDPOINT_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// `max |observed - expected|`.
    Absolute,
    /// `max |observed - expected| / |expected|`.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub fixture: String,
    pub name: String,
    pub expected: Vec<f64>,
    /// Absent when nothing comparable was produced.
    pub observed: Option<Vec<f64>>,
    pub deviation: Option<f64>,
    pub tolerance: f64,
    pub mode: Tolerance,
    pub pass: bool,
}

impl Check {
    pub fn new(
        fixture: &str,
        name: impl Into<String>,
        expected: Vec<f64>,
        observed: Option<Vec<f64>>,
        tolerance: f64,
        mode: Tolerance,
    ) -> Self {
        let deviation = observed.as_ref().and_then(|obs| {
            if obs.len() != expected.len() {
                return None;
            }
            Some(obs.iter().zip(&expected).fold(0.0_f64, |acc, (o, e)| {
                let d = (o - e).abs();
                acc.max(match mode {
                    Tolerance::Absolute => d,
                    Tolerance::Relative => d / e.abs(),
                })
            }))
        });
        Self {
            fixture: fixture.to_string(),
            name: name.into(),
            expected,
            observed,
            deviation,
            tolerance,
            mode,
            pass: deviation.is_some_and(|d| d <= tolerance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproReport {
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: usize,
    pub failed: usize,
    pub pass: bool,
}

/// Found matrix closest (max entry difference) to `target`.
fn closest<'a>(target: &Matrix, found: &'a [Matrix]) -> Option<&'a Matrix> {
    found.iter().min_by(|a, b| {
        let da = a.max_abs_diff(target).unwrap_or(f64::INFINITY);
        let db = b.max_abs_diff(target).unwrap_or(f64::INFINITY);
        da.total_cmp(&db)
    })
}

fn entries(m: &Matrix) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Runs every check of one fixture.
pub fn check_fixture(fx: &Fixture, seed: u64, jobs: usize) -> Result<Vec<Check>> {
    let name = fx.name;
    let mut out = Vec::new();
    let path = make_path(&fx.z0)?;
    out.push(Check::new(name, "zbar", vec![fx.zbar], Some(vec![path.zbar]), ZBAR_TOL, Tolerance::Absolute));

    let found_cuts = cuts(&path);
    let observed = (found_cuts.len() == fx.cuts.len()
        && found_cuts.iter().zip(&fx.cuts).all(|(c, &(i, j, _))| (c.row, c.col) == (i, j)))
    .then(|| found_cuts.iter().map(|c| c.tau).collect());
    out.push(Check::new(
        name,
        "cuts",
        fx.cuts.iter().map(|c| c.2).collect(),
        observed,
        CUT_REL_TOL,
        Tolerance::Relative,
    ));

    let cfg = EnumerateConfig {
        starts: Some(fx.starts),
        seed,
        rel_tol: DEFAULT_DEDUP_TOL,
        solver: SolverConfig::default(),
        jobs,
    };
    let report = enumerate_solutions(&fx.x, &fx.z0, fx.p, &cfg)?;
    out.push(Check::new(
        name,
        "solution_count",
        vec![fx.solutions.len() as f64],
        Some(vec![report.count() as f64]),
        0.0,
        Tolerance::Absolute,
    ));
    let found: Vec<Matrix> = report.solutions.iter().map(|b| b.solution.wlra.clone()).collect();
    for (k, target) in fx.solutions.iter().enumerate() {
        let hit = closest(target, &found);
        out.push(Check::new(
            name,
            format!("solution_{k}_wlra"),
            entries(target),
            hit.map(entries),
            WLRA_TOL,
            Tolerance::Absolute,
        ));
        if let Some(&want) = fx.rmse.get(k) {
            let got = hit.map(|h| rmse(&fx.x, &fx.z0, h)).transpose()?;
            out.push(Check::new(
                name,
                format!("solution_{k}_rmse"),
                vec![want],
                got.map(|r| vec![r]),
                RMSE_TOL,
                Tolerance::Absolute,
            ));
        }
    }

    let trace = TraceConfig::default();
    let seeds: Vec<_> = report.solutions.iter().map(|b| (0.0, b.solution.clone())).collect();
    let (zero_curves, _) = trace_all(&fx.x, &path, &seeds, &trace, DEFAULT_DEDUP_TOL)?;
    let mut ends: Vec<(f64, f64)> =
        zero_curves.iter().map(|(_, c)| (c.tau_left, c.tau_right)).collect();
    ends.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.push(Check::new(
        name,
        "zero_curve_endpoints",
        fx.zero_curves.iter().flat_map(|&(l, r)| [l, r]).collect(),
        Some(ends.iter().flat_map(|&(l, r)| [l, r]).collect()),
        ENDPOINT_TOL,
        Tolerance::Absolute,
    ));

    let seed_solution = svd_seed(&fx.x, &path, fx.p, &trace)?;
    let curve = trace_curve(&fx.x, &path, &seed_solution, 1.0, &trace)?;
    out.push(Check::new(
        name,
        "svd_curve_endpoints",
        vec![fx.svd_curve.tau_left, fx.svd_curve.tau_right],
        Some(vec![curve.tau_left, curve.tau_right]),
        ENDPOINT_TOL,
        Tolerance::Absolute,
    ));
    for (tau, wlra, want_rmse) in &fx.svd_curve.points {
        let on_curve = if curve.contains_tau(*tau) {
            solve_on_curve(&fx.x, &path, &curve, *tau, &trace).ok()
        } else {
            None
        };
        out.push(Check::new(
            name,
            format!("svd_curve_wlra_at_{tau}"),
            entries(wlra),
            on_curve.as_ref().map(|s| entries(&s.wlra)),
            WLRA_TOL,
            Tolerance::Absolute,
        ));
        let got = on_curve.map(|s| rmse(&fx.x, &fx.z0, &s.wlra)).transpose()?;
        out.push(Check::new(
            name,
            format!("svd_curve_rmse_at_{tau}"),
            vec![*want_rmse],
            got.map(|r| vec![r]),
            RMSE_TOL,
            Tolerance::Absolute,
        ));
    }
    Ok(out)
}

/// Runs all fixtures. The report does not depend on `jobs`.
pub fn run_repro(seed: u64, jobs: usize) -> Result<ReproReport> {
    let mut checks = Vec::new();
    for fx in fixtures::all() {
        checks.extend(check_fixture(&fx, seed, jobs)?);
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    let failed = checks.len() - passed;
    Ok(ReproReport {
        seed,
        checks,
        passed,
        failed,
        pass: failed == 0,
    })
}
