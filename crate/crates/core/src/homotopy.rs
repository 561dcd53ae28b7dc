//! Affine pseudo-weight paths and continuation of solutions along them.
//!
//! The path runs from the weights of interest (`tau = 0`) to a uniform grid
//! (`tau = 1`, where the unique solution is the truncated SVD) and beyond in
//! both directions, where some pseudo-weights turn negative. A cut is the
//! `tau` at which one entry crosses zero.
//!
//! [`follow_curve`] is a predictor-corrector tracer in `tau`: the predictor
//! extrapolates the orthonormal left factor linearly from the last two samples
//! and re-orthonormalizes it with the closest basis, and the corrector is
//! [`stationary_solve`] started from that prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, PseudoWeightGrid};
use crate::orthobasis::orthonormal_columns;
use crate::solver::{
    is_stationary, stationarity_residual, stationarity_tolerance, stationary_solve, Solution,
    SolverConfig,
};

/// `Z_tau = Z0 + tau (Z1 - Z0)` with `Z1` uniformly equal to `zbar = sum w^4 / sum w^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub z0: PseudoWeightGrid,
    pub z1: PseudoWeightGrid,
    pub zbar: f64,
}

impl Path {
    /// True when every entry of `Z0` already equals `zbar`, so nothing moves along the path.
    pub fn is_degenerate(&self) -> bool {
        let tol = 1e-14 * self.zbar.abs().max(f64::MIN_POSITIVE);
        self.z0
            .values()
            .as_slice()
            .iter()
            .all(|z| (z - self.zbar).abs() <= tol)
    }
}

/// Builds the path from nonnegative squared weights `W`.
pub fn make_path(w: &PseudoWeightGrid) -> Result<Path> {
    w.require_nonneg()?;
    let total = w.sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let zbar = w.sum_sq() / total;
    let (m, n) = w.shape();
    Ok(Path {
        z0: w.clone(),
        z1: PseudoWeightGrid::uniform(m, n, zbar)?,
        zbar,
    })
}

/// Pseudo-weights at `tau`; any real `tau` is allowed.
pub fn path_weights(path: &Path, tau: f64) -> PseudoWeightGrid {
    let (m, n) = path.z0.shape();
    let data = path
        .z0
        .values()
        .as_slice()
        .iter()
        .map(|z| z + tau * (path.zbar - z))
        .collect();
    PseudoWeightGrid::new(Matrix::new(m, n, data).expect("finite interpolation"))
}

/// The `tau` at which entry `(row, col)` (zero-based) of `Z_tau` vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub row: usize,
    pub col: usize,
    pub tau: f64,
}

/// All cuts of the path, sorted by `tau`. Entries already equal to `zbar` never cross zero.
pub fn cuts(path: &Path) -> Vec<Cut> {
    let (_, n) = path.z0.shape();
    let tol = 1e-14 * path.zbar.abs();
    let mut out: Vec<Cut> = path
        .z0
        .values()
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &z)| (z - path.zbar).abs() > tol)
        .map(|(k, &z)| Cut {
            row: k / n,
            col: k % n,
            tau: z / (z - path.zbar),
        })
        .collect();
    out.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub step_initial: f64,
    pub step_max: f64,
    pub step_floor: f64,
    pub growth: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Width of the success/failure bracket at which endpoint bisection stops.
    pub endpoint_tol: f64,
    /// A corrector result moving `max |delta wlra|` more than this multiple of the
    /// median of recent sample-to-sample moves is treated as a branch jump.
    pub jump_factor: f64,
    /// Correcting back to the previous `tau` from a new sample must return to the
    /// previous sample within `return_tol * max(1, max |X|)`.
    pub return_tol: f64,
    pub solver: SolverConfig,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            step_initial: 0.01,
            step_max: 0.05,
            step_floor: 1e-6,
            growth: 1.5,
            tau_min: -20.0,
            tau_max: 20.0,
            endpoint_tol: 1e-4,
            jump_factor: 10.0,
            return_tol: 1e-6,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointReason {
    SingularSystem,
    CorrectorFailure,
    StepFloor,
    RangeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Decreasing,
    Increasing,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Decreasing => -1.0,
            Direction::Increasing => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub tau: f64,
    /// Weighted RMSE under the weights of interest `Z0`.
    pub rmse: f64,
    pub solution: Solution,
}

/// One direction of a traced curve, ordered away from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub samples: Vec<CurveSample>,
    /// Last `tau` with a corrector success.
    pub end_tau: f64,
    /// First `tau` beyond `end_tau` where the corrector failed, if any.
    pub failure_tau: Option<f64>,
    pub reason: EndpointReason,
}

/// A connected family of stationary solutions, samples ordered by increasing `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub samples: Vec<CurveSample>,
    pub tau_left: f64,
    pub tau_right: f64,
    pub left_reason: EndpointReason,
    pub right_reason: EndpointReason,
    /// Cuts whose `tau` lies strictly between two consecutive samples.
    pub cut_crossings: Vec<Cut>,
}

impl Curve {
    pub fn contains_tau(&self, tau: f64) -> bool {
        tau >= self.tau_left && tau <= self.tau_right
    }

    /// Sample nearest to `tau`.
    pub fn nearest(&self, tau: f64) -> &CurveSample {
        self.samples
            .iter()
            .min_by(|a, b| (a.tau - tau).abs().total_cmp(&(b.tau - tau).abs()))
            .expect("a curve has at least its seed")
    }
}

enum Failure {
    Singular,
    Corrector,
    Jump,
}

struct Tracer<'a> {
    x: &'a Matrix,
    path: &'a Path,
    cfg: &'a TraceConfig,
    scale: f64,
}

impl Tracer<'_> {
    fn sample(&self, tau: f64, solution: Solution) -> CurveSample {
        let rmse = crate::matrix::rmse(self.x, &self.path.z0, &solution.wlra)
            .expect("path origin weights are nonnegative with positive sum");
        CurveSample {
            tau,
            rmse,
            solution,
        }
    }

    fn predict(&self, samples: &[CurveSample], tau: f64) -> Matrix {
        let last = &samples[samples.len() - 1];
        let a_last = &last.solution.factorization.a;
        if samples.len() < 2 {
            return a_last.clone();
        }
        let prev = &samples[samples.len() - 2];
        let t = (tau - last.tau) / (last.tau - prev.tau);
        let a_prev = &prev.solution.factorization.a;
        let data = a_last
            .as_slice()
            .iter()
            .zip(a_prev.as_slice())
            .map(|(l, p)| l + t * (l - p))
            .collect();
        Matrix::new(a_last.rows(), a_last.cols(), data)
            .ok()
            .and_then(|a| orthonormal_columns(&a).ok())
            .unwrap_or_else(|| a_last.clone())
    }

    /// Median of `max |delta wlra|` over the last few accepted steps.
    fn recent_move(samples: &[CurveSample]) -> Option<f64> {
        if samples.len() < 3 {
            return None;
        }
        let start = samples.len().saturating_sub(6);
        let mut moves: Vec<f64> = samples[start..]
            .windows(2)
            .map(|w| w[1].solution.wlra.max_abs_diff(&w[0].solution.wlra).unwrap())
            .collect();
        moves.sort_by(f64::total_cmp);
        Some(moves[moves.len() / 2])
    }

    fn correct(&self, samples: &[CurveSample], tau: f64) -> std::result::Result<CurveSample, Failure> {
        let z = path_weights(self.path, tau);
        let last = samples.last().expect("non-empty");
        let predicted = self.predict(samples, tau);
        let p = predicted.cols();
        let solution = match stationary_solve(self.x, &z, p, Some(&predicted), &self.cfg.solver) {
            Ok(s) => s,
            Err(Error::Conditioning { .. } | Error::SingularSystem { .. }) => {
                return Err(Failure::Singular)
            }
            Err(_) => return Err(Failure::Corrector),
        };
        if !solution.condition.pass {
            return Err(Failure::Singular);
        }
        if !is_stationary(self.x, &z, &solution) {
            return Err(Failure::Corrector);
        }
        let jump = solution.wlra.max_abs_diff(&last.solution.wlra).unwrap();
        if let Some(typical) = Self::recent_move(samples) {
            let allowed = self.cfg.jump_factor * typical.max(1e-8 * self.scale);
            if jump > allowed {
                return Err(Failure::Jump);
            }
        }
        let z_back = path_weights(self.path, last.tau);
        let a = &solution.factorization.a;
        match stationary_solve(self.x, &z_back, p, Some(a), &self.cfg.solver) {
            Ok(back)
                if back.wlra.max_abs_diff(&last.solution.wlra).unwrap()
                    <= self.cfg.return_tol * self.scale => {}
            _ => return Err(Failure::Jump),
        }
        Ok(self.sample(tau, solution))
    }
}

/// Traces the curve through `seed` (a stationary solution at `seed_tau`) in one direction.
pub fn follow_curve(
    x: &Matrix,
    path: &Path,
    seed: &Solution,
    seed_tau: f64,
    direction: Direction,
    cfg: &TraceConfig,
) -> Result<Branch> {
    let z_seed = path_weights(path, seed_tau);
    let objective = crate::matrix::weighted_norm_sq(x, &z_seed, &seed.wlra)?;
    let residual = stationarity_residual(x, &z_seed, &seed.factorization);
    let tolerance = stationarity_tolerance(objective);
    if !(residual <= tolerance) {
        return Err(Error::InvalidSeed { residual, tolerance });
    }
    let tracer = Tracer {
        x,
        path,
        cfg,
        scale: x.max_abs().max(1.0),
    };
    let mut samples = vec![tracer.sample(seed_tau, seed.clone())];
    if path.is_degenerate() {
        return Ok(Branch {
            samples,
            end_tau: seed_tau,
            failure_tau: None,
            reason: EndpointReason::RangeLimit,
        });
    }

    let sign = direction.sign();
    let bound = if sign > 0.0 { cfg.tau_max } else { cfg.tau_min };
    let mut h = cfg.step_initial.min(cfg.step_max);
    loop {
        let last_tau = samples.last().unwrap().tau;
        if (bound - last_tau) * sign <= 0.0 {
            return Ok(Branch {
                end_tau: last_tau,
                samples,
                failure_tau: None,
                reason: EndpointReason::RangeLimit,
            });
        }
        let mut tau = last_tau + sign * h;
        if (tau - bound) * sign > 0.0 {
            tau = bound;
        }
        match tracer.correct(&samples, tau) {
            Ok(s) => {
                samples.push(s);
                h = (h * cfg.growth).min(cfg.step_max);
            }
            Err(failure) if h <= cfg.step_floor => {
                let reason = match failure {
                    Failure::Singular => EndpointReason::SingularSystem,
                    Failure::Corrector => EndpointReason::CorrectorFailure,
                    Failure::Jump => EndpointReason::StepFloor,
                };
                let (end_tau, failure_tau) = refine_endpoint(&tracer, &mut samples, tau);
                return Ok(Branch {
                    samples,
                    end_tau,
                    failure_tau: Some(failure_tau),
                    reason,
                });
            }
            Err(_) => h = (h * 0.5).max(cfg.step_floor),
        }
    }
}

/// Bisects between the last success and the first failure until the bracket is
/// no wider than `endpoint_tol`. Successful midpoints become samples.
fn refine_endpoint(tracer: &Tracer<'_>, samples: &mut Vec<CurveSample>, mut failed: f64) -> (f64, f64) {
    let mut ok = samples.last().unwrap().tau;
    while (failed - ok).abs() > tracer.cfg.endpoint_tol {
        let mid = 0.5 * (ok + failed);
        match tracer.correct(samples, mid) {
            Ok(s) => {
                samples.push(s);
                ok = mid;
            }
            Err(_) => failed = mid,
        }
    }
    (ok, failed)
}

/// Traces both directions from the seed and joins them into one curve.
pub fn trace_curve(
    x: &Matrix,
    path: &Path,
    seed: &Solution,
    seed_tau: f64,
    cfg: &TraceConfig,
) -> Result<Curve> {
    let left = follow_curve(x, path, seed, seed_tau, Direction::Decreasing, cfg)?;
    let right = follow_curve(x, path, seed, seed_tau, Direction::Increasing, cfg)?;
    let mut samples: Vec<CurveSample> = left.samples.into_iter().rev().collect();
    samples.extend(right.samples.into_iter().skip(1));
    let all_cuts = cuts(path);
    let cut_crossings = samples
        .windows(2)
        .flat_map(|w| {
            let (lo, hi) = (w[0].tau, w[1].tau);
            all_cuts.iter().filter(move |c| c.tau > lo && c.tau < hi).copied()
        })
        .collect();
    Ok(Curve {
        samples,
        tau_left: left.end_tau,
        tau_right: right.end_tau,
        left_reason: left.reason,
        right_reason: right.reason,
        cut_crossings,
    })
}

/// Curves traced from `(tau, solution)` seeds in order. A seed that an earlier
/// curve already passes through (within `tol`, see [`curve_passes_through`]) is
/// skipped; the second value counts skipped seeds.
pub fn trace_all(
    x: &Matrix,
    path: &Path,
    seeds: &[(f64, Solution)],
    cfg: &TraceConfig,
    tol: f64,
) -> Result<(Vec<(f64, Curve)>, usize)> {
    let mut curves: Vec<(f64, Curve)> = Vec::new();
    let mut skipped = 0;
    for (tau, s) in seeds {
        if curves
            .iter()
            .any(|(_, c)| curve_passes_through(x, path, c, *tau, s, cfg, tol))
        {
            skipped += 1;
            continue;
        }
        curves.push((*tau, trace_curve(x, path, s, *tau, cfg)?));
    }
    Ok((curves, skipped))
}

/// The unique solution at `tau = 1`, where every weight equals `zbar`: the truncated SVD.
pub fn svd_seed(x: &Matrix, path: &Path, p: usize, cfg: &TraceConfig) -> Result<Solution> {
    stationary_solve(x, &path.z1, p, None, &cfg.solver)
}

/// Stationary solution on `curve` at `tau`, corrected from the nearest sample.
pub fn solve_on_curve(
    x: &Matrix,
    path: &Path,
    curve: &Curve,
    tau: f64,
    cfg: &TraceConfig,
) -> Result<Solution> {
    let near = curve.nearest(tau);
    let z = path_weights(path, tau);
    let a0 = &near.solution.factorization.a;
    stationary_solve(x, &z, a0.cols(), Some(a0), &cfg.solver)
}

/// Whether `solution` at `tau` lies on `curve`: a corrector started from the
/// nearest sample must land on `solution` within `tol * max(1, max |X|)`.
pub fn curve_passes_through(
    x: &Matrix,
    path: &Path,
    curve: &Curve,
    tau: f64,
    solution: &Solution,
    cfg: &TraceConfig,
    tol: f64,
) -> bool {
    if !curve.contains_tau(tau) {
        return false;
    }
    match solve_on_curve(x, path, curve, tau, cfg) {
        Ok(s) => s.wlra.max_abs_diff(&solution.wlra).unwrap() <= tol * x.max_abs().max(1.0),
        Err(_) => false,
    }
}
