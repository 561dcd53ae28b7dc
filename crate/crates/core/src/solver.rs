//! Alternating weighted least squares and its damped variant for signed pseudo-weights.
//!
//! One iteration updates every row of `B` by a diagonal-weighted regression on
//! the current `A`, then every row of `A` by a regression on that `B`. With
//! nonnegative weights each half-step is a least-squares minimization and the
//! objective cannot increase. With signed weights the same normal equations
//! give the stationary point of each half-problem; there is no descent
//! guarantee, so the `A` update is relaxed and the relaxation shrinks whenever
//! the iteration starts to oscillate.
//!
//! Convergence is always judged on the product `A B'`: factors are only defined
//! up to an invertible `p x p` gauge `(A M, B M^-T)`.

use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};
use crate::matrix::{
    condition_report_with, hadamard_bound, normal_equations, rmse, solve_in_place,
    weighted_norm_sq, ConditionReport, Matrix, PseudoWeightGrid, SINGULAR_RTOL,
};
use crate::orthobasis::{self, gram_schmidt, VectorSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative change of `A B'` (Frobenius) per iteration that counts as converged.
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Initial relaxation factor used when the weights contain a negative entry.
    pub damping: f64,
    /// Smallest relaxation factor reached by repeated halving.
    pub damping_floor: f64,
    pub singular_rtol: f64,
    /// `max |A B'|` beyond `divergence_limit * max(1, max |X|)` aborts the solve.
    pub divergence_limit: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_rel: 1e-10,
            max_iter: 10_000,
            damping: 0.5,
            damping_floor: 1.0 / 64.0,
            singular_rtol: SINGULAR_RTOL,
            divergence_limit: 1e8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0) {
            return Err(Error::Config(format!("tol_rel must be positive, got {}", self.tol_rel)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.damping_floor > 0.0 && self.damping_floor <= self.damping) {
            return Err(Error::Config(format!(
                "damping_floor must lie in (0, damping], got {}",
                self.damping_floor
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A factor pair `(A, B)` with `A B'` the approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub a: Matrix,
    pub b: Matrix,
}

impl Factorization {
    /// Checks shapes and full column rank of both factors via `det(A'A)`, `det(B'B)`.
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if a.cols() != b.cols() {
            return Err(Error::Dimension {
                context: "factorization",
                expected: format!("B with {} columns", a.cols()),
                got: format!("{} columns", b.cols()),
            });
        }
        let p = a.cols();
        for (factor, bound) in [(&a, a.rows()), (&b, b.rows())] {
            if p > bound {
                return Err(Error::Rank { rank: p, bound: bound + 1 });
            }
            let (mut gram, mut rhs) = normal_equations(factor, &vec![1.0; factor.rows()], |_| 0.0);
            let threshold = SINGULAR_RTOL * hadamard_bound(&gram, p);
            let det = solve_in_place(&mut gram, &mut rhs, p);
            if !(det.abs() > threshold) {
                return Err(Error::SingularSystem { det, threshold });
            }
        }
        Ok(Self { a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn product(&self) -> Matrix {
        self.a.mul_transpose(&self.b).expect("factor shapes agree")
    }

    /// Re-gauges so that `A` has orthonormal columns (closest basis), `B` absorbing the scale.
    pub fn canonical(&self) -> Result<Self> {
        let q = orthobasis::orthonormal_columns(&self.a)?;
        // A B' = Q (Q'A) B', so B becomes B (A'Q).
        let aq = self.a.transpose().matmul(&q)?;
        let b = self.b.matmul(&aq)?;
        Ok(Self { a: q, b })
    }
}

/// A converged (or, for [`alternate`], possibly unconverged) approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub wlra: Matrix,
    pub factorization: Factorization,
    /// Weighted RMSE under the solve weights; absent when they contain negative entries.
    pub rmse: Option<f64>,
    /// `sum z (X - A B')^2` under the solve weights.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub condition: ConditionReport,
}

fn check_problem(x: &Matrix, z: &PseudoWeightGrid, p: usize, a0: Option<&Matrix>) -> Result<()> {
    z.check_shape(x, "weights vs data")?;
    let (m, n) = x.shape();
    let bound = m.min(n);
    if p == 0 || p >= bound {
        return Err(Error::Rank { rank: p, bound });
    }
    if let Some(a0) = a0 {
        if a0.shape() != (m, p) {
            return Err(Error::Dimension {
                context: "initial A",
                expected: format!("{m}x{p}"),
                got: format!("{}x{}", a0.rows(), a0.cols()),
            });
        }
    }
    Ok(())
}

/// Solves the `count` systems `sum_l weight(k,l) d_l d_l' b_k = sum_l weight(k,l) target(k,l) d_l`.
fn solve_rows(
    count: usize,
    design: &Matrix,
    weight: impl Fn(usize, usize) -> f64,
    target: impl Fn(usize, usize) -> f64,
    axis: Axis,
    rtol: f64,
) -> Result<Matrix> {
    let p = design.cols();
    let len = design.rows();
    let mut out = Vec::with_capacity(count * p);
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for k in 0..count {
        gram.iter_mut().for_each(|g| *g = 0.0);
        rhs.iter_mut().for_each(|r| *r = 0.0);
        for l in 0..len {
            let w = weight(k, l);
            if w == 0.0 {
                continue;
            }
            let d = design.row(l);
            let t = w * target(k, l);
            for r in 0..p {
                let wd = w * d[r];
                rhs[r] += t * d[r];
                for c in r..p {
                    gram[r * p + c] += wd * d[c];
                }
            }
        }
        for r in 0..p {
            for c in 0..r {
                gram[r * p + c] = gram[c * p + r];
            }
        }
        let threshold = rtol * hadamard_bound(&gram, p);
        let det = solve_in_place(&mut gram, &mut rhs, p);
        if !(det.abs() > threshold) || rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Conditioning {
                axis,
                index: k,
                iteration: None,
            });
        }
        out.extend_from_slice(&rhs);
    }
    Matrix::new(count, p, out)
}

/// Optimal (stationary) `B` for fixed `A`: row `j` of `B` regresses column `j` of `X` on `A`.
pub fn update_b(x: &Matrix, z: &PseudoWeightGrid, a: &Matrix) -> Result<Matrix> {
    update_b_with(x, z, a, SINGULAR_RTOL)
}

pub fn update_b_with(x: &Matrix, z: &PseudoWeightGrid, a: &Matrix, rtol: f64) -> Result<Matrix> {
    z.check_shape(x, "weights vs data")?;
    if a.rows() != x.rows() {
        return Err(Error::Dimension {
            context: "A rows",
            expected: x.rows().to_string(),
            got: a.rows().to_string(),
        });
    }
    solve_rows(
        x.cols(),
        a,
        |j, i| z.get(i, j),
        |j, i| x.get(i, j),
        Axis::Column,
        rtol,
    )
}

/// Optimal (stationary) `A` for fixed `B`: row `i` of `A` regresses row `i` of `X` on `B`.
pub fn update_a(x: &Matrix, z: &PseudoWeightGrid, b: &Matrix) -> Result<Matrix> {
    update_a_with(x, z, b, SINGULAR_RTOL)
}

pub fn update_a_with(x: &Matrix, z: &PseudoWeightGrid, b: &Matrix, rtol: f64) -> Result<Matrix> {
    z.check_shape(x, "weights vs data")?;
    if b.rows() != x.cols() {
        return Err(Error::Dimension {
            context: "B rows",
            expected: x.cols().to_string(),
            got: b.rows().to_string(),
        });
    }
    solve_rows(x.rows(), b, |i, j| z.get(i, j), |i, j| x.get(i, j), Axis::Row, rtol)
}

/// Deterministic start: the first `p` identity columns.
pub fn default_start(m: usize, p: usize) -> Matrix {
    Matrix::identity(m, p)
}

fn with_iteration(err: Error, k: usize) -> Error {
    match err {
        Error::Conditioning { axis, index, .. } => Error::Conditioning {
            axis,
            index,
            iteration: Some(k),
        },
        other => other,
    }
}

/// Orthonormalizes without changing the span. Damped runs need the continuous
/// closest-basis gauge; undamped runs only need some basis of the span.
fn reorthonormalize(a: &Matrix, continuous_gauge: bool, k: usize) -> Result<Matrix> {
    let set = VectorSet::from_columns(a).map_err(|_| Error::Divergence { iteration: k })?;
    let basis = if continuous_gauge {
        orthobasis::closest_basis(&set, orthobasis::DEFAULT_TOL, orthobasis::DEFAULT_MAX_SWEEPS)
    } else {
        gram_schmidt(&set)
    };
    basis
        .map(|b| b.to_matrix())
        .map_err(|_| Error::Divergence { iteration: k })
}

struct RawRun {
    a: Matrix,
    b: Matrix,
    wlra: Matrix,
    iterations: usize,
    converged: bool,
}

fn iterate(
    x: &Matrix,
    z: &PseudoWeightGrid,
    a0: &Matrix,
    cfg: &SolverConfig,
    damped: bool,
) -> Result<RawRun> {
    cfg.validate()?;
    let limit = cfg.divergence_limit * x.max_abs().max(1.0);
    let mut gamma = if damped { cfg.damping } else { 1.0 };
    let mut a = reorthonormalize(a0, damped, 0)?;
    let mut prev: Option<Matrix> = None;
    let mut prev_change = f64::INFINITY;
    let mut prev_delta = 0.0_f64;
    let mut prev_objective: Option<f64> = None;

    for k in 1..=cfg.max_iter {
        let b = update_b_with(x, z, &a, cfg.singular_rtol).map_err(|e| with_iteration(e, k))?;
        let a_star = update_a_with(x, z, &b, cfg.singular_rtol).map_err(|e| with_iteration(e, k))?;
        let y = a_star
            .mul_transpose(&b)
            .map_err(|_| Error::Divergence { iteration: k })?;
        if y.max_abs() > limit {
            return Err(Error::Divergence { iteration: k });
        }
        let change = prev
            .as_ref()
            .map(|p| y.sub(p).expect("same shape").frobenius());
        if let Some(change) = change {
            // A stable product is not enough: with signed weights the span of A can
            // settle while A* = A M with M != I, which is not stationary.
            let tol = cfg.tol_rel * y.frobenius();
            if change <= tol && a.mul_transpose(&b)?.sub(&y)?.frobenius() <= tol / gamma {
                return Ok(RawRun {
                    a: a_star,
                    b,
                    wlra: y,
                    iterations: k,
                    converged: true,
                });
            }
        }
        if damped {
            let objective = weighted_norm_sq(x, z, &y)?;
            if let Some(prev_obj) = prev_objective {
                let delta = objective - prev_obj;
                let noise = 1e-12 * objective.abs().max(1.0);
                let change = change.unwrap_or(f64::INFINITY);
                let flipped = delta * prev_delta < 0.0 && delta.abs() > noise && prev_delta.abs() > noise;
                if flipped && change >= prev_change && gamma > cfg.damping_floor {
                    gamma = (gamma * 0.5).max(cfg.damping_floor);
                }
                prev_delta = delta;
                prev_change = change;
            }
            prev_objective = Some(objective);
            let relaxed: Vec<f64> = a
                .as_slice()
                .iter()
                .zip(a_star.as_slice())
                .map(|(old, new)| old + gamma * (new - old))
                .collect();
            let relaxed = Matrix::new(a.rows(), a.cols(), relaxed)
                .map_err(|_| Error::Divergence { iteration: k })?;
            a = reorthonormalize(&relaxed, true, k)?;
        } else {
            a = reorthonormalize(&a_star, false, k)?;
        }
        prev = Some(y);
    }
    let b = update_b_with(x, z, &a, cfg.singular_rtol).map_err(|e| with_iteration(e, cfg.max_iter))?;
    let wlra = a.mul_transpose(&b)?;
    Ok(RawRun {
        a,
        b,
        wlra,
        iterations: cfg.max_iter,
        converged: false,
    })
}

fn finish(x: &Matrix, z: &PseudoWeightGrid, run: RawRun, cfg: &SolverConfig) -> Result<Solution> {
    let factorization = Factorization { a: run.a, b: run.b }
        .canonical()
        .map_err(|_| Error::Divergence { iteration: run.iterations })?;
    let wlra = factorization.product();
    debug_assert!(wlra.max_abs_diff(&run.wlra).unwrap() <= 1e-8 * run.wlra.max_abs().max(1.0));
    let objective = weighted_norm_sq(x, z, &wlra)?;
    let rmse = if z.all_nonneg() && z.sum() > 0.0 {
        Some(rmse(x, z, &wlra)?)
    } else {
        None
    };
    let condition = condition_report_with(&factorization.a, &factorization.b, z, cfg.singular_rtol)?;
    Ok(Solution {
        wlra,
        factorization,
        rmse,
        objective,
        iterations: run.iterations,
        converged: run.converged,
        condition,
    })
}

/// Alternating least squares for nonnegative weights.
///
/// Reaching `max_iter` is not an error: the returned solution has `converged == false`.
pub fn alternate(
    x: &Matrix,
    w: &PseudoWeightGrid,
    p: usize,
    a0: Option<&Matrix>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    check_problem(x, w, p, a0)?;
    w.require_nonneg()?;
    let start = a0.cloned().unwrap_or_else(|| default_start(x.rows(), p));
    let run = iterate(x, w, &start, cfg, false)?;
    finish(x, w, run, cfg)
}

/// Stationary point of `sum z (X - A B')^2` for signed pseudo-weights.
///
/// Identical to [`alternate`] when every weight is nonnegative, except that
/// running out of iterations is reported as [`Error::NoConvergence`].
pub fn stationary_solve(
    x: &Matrix,
    z: &PseudoWeightGrid,
    p: usize,
    a0: Option<&Matrix>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    check_problem(x, z, p, a0)?;
    let start = a0.cloned().unwrap_or_else(|| default_start(x.rows(), p));
    let run = iterate(x, z, &start, cfg, !z.all_nonneg())?;
    if !run.converged {
        return Err(Error::NoConvergence {
            iterations: run.iterations,
        });
    }
    finish(x, z, run, cfg)
}

/// Objective as a function of the factor entries.
fn objective_of(x: &Matrix, z: &PseudoWeightGrid, a: &[f64], b: &[f64], p: usize) -> f64 {
    let (m, n) = x.shape();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let y: f64 = (0..p).map(|k| a[i * p + k] * b[j * p + k]).sum();
            let r = x.get(i, j) - y;
            total += z.get(i, j) * r * r;
        }
    }
    total
}

/// Largest central-difference partial derivative of the objective over all
/// `(m + n) p` factor entries.
pub fn stationarity_residual(x: &Matrix, z: &PseudoWeightGrid, f: &Factorization) -> f64 {
    let p = f.rank();
    let mut a = f.a.as_slice().to_vec();
    let mut b = f.b.as_slice().to_vec();
    let mut worst = 0.0_f64;
    let mut probe = |which: usize, k: usize| {
        let v = if which == 0 { &mut a } else { &mut b };
        let orig = v[k];
        let h = 1e-6 * orig.abs().max(1.0);
        v[k] = orig + h;
        let up = objective_of(x, z, &a, &b, p);
        let v = if which == 0 { &mut a } else { &mut b };
        v[k] = orig - h;
        let down = objective_of(x, z, &a, &b, p);
        let v = if which == 0 { &mut a } else { &mut b };
        v[k] = orig;
        worst = worst.max(((up - down) / (2.0 * h)).abs());
    };
    for k in 0..f.a.as_slice().len() {
        probe(0, k);
    }
    for k in 0..f.b.as_slice().len() {
        probe(1, k);
    }
    worst
}

/// Tolerance for [`stationarity_residual`]: `1e-6 * max(1, |objective|)`.
pub fn stationarity_tolerance(objective: f64) -> f64 {
    1e-6 * objective.abs().max(1.0)
}

/// Whether all directional derivatives vanish at `solution` to the standard tolerance.
pub fn is_stationary(x: &Matrix, z: &PseudoWeightGrid, solution: &Solution) -> bool {
    let objective = weighted_norm_sq(x, z, &solution.wlra).unwrap_or(f64::INFINITY);
    stationarity_residual(x, z, &solution.factorization) <= stationarity_tolerance(objective)
}
