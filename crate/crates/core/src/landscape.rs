//! Multistart enumeration of the distinct local solutions of one problem, and a
//! randomized scan counting solutions over a population of problems.
//!
//! Starts are spread over the unit sphere in `R^{m p}`: a Halton point set with
//! a seeded Cranley–Patterson shift is mapped to the sphere, relaxed by
//! pairwise inverse-square repulsion, reshaped to `m x p` and projected onto
//! orthonormal columns with the closest basis.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, PseudoWeightGrid};
use crate::orthobasis::{self, gram_schmidt, VectorSet};
use crate::solver::{alternate, is_stationary, Solution, SolverConfig};

pub const REPULSION_ITERATIONS: usize = 200;
pub const REPULSION_STEP: f64 = 0.01;
pub const DEFAULT_DEDUP_TOL: f64 = 1e-3;

/// Default number of starts: 64 for `m p <= 4`, otherwise `32 m p`.
pub fn default_start_count(m: usize, p: usize) -> usize {
    if m * p <= 4 {
        64
    } else {
        32 * m * p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSet {
    pub count: usize,
    pub seed: u64,
    pub starts: Vec<Matrix>,
    /// Minimum pairwise chordal distance of the sphere points before repulsion.
    pub initial_min_distance: f64,
    /// Minimum and mean pairwise chordal distance after repulsion.
    pub min_distance: f64,
    pub mean_distance: f64,
}

const PRIMES: [u32; 64] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293,
    307, 311,
];

fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let base = base as u64;
    let inv = 1.0 / base as f64;
    let (mut value, mut factor) = (0.0, inv);
    while index > 0 {
        value += (index % base) as f64 * factor;
        index /= base;
        factor *= inv;
    }
    value
}

fn sphere_points(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    // Box-Muller consumes coordinates in pairs.
    let padded = dim + dim % 2;
    if padded > PRIMES.len() {
        return Err(Error::Config(format!(
            "start dimension m*p = {dim} exceeds the supported {}",
            PRIMES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..padded).map(|_| rng.gen::<f64>()).collect();
    let mut points = Vec::with_capacity(count);
    for k in 0..count {
        let u: Vec<f64> = (0..padded)
            .map(|d| (radical_inverse(k as u64 + 1, PRIMES[d]) + shift[d]).fract())
            .collect();
        let mut g: Vec<f64> = u
            .chunks(2)
            .flat_map(|pair| {
                let r = (-2.0 * (1.0 - pair[0]).ln()).sqrt();
                let theta = std::f64::consts::TAU * pair[1];
                [r * theta.cos(), r * theta.sin()]
            })
            .take(dim)
            .collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            g.iter_mut().for_each(|v| *v /= norm);
        } else {
            g[0] = 1.0;
        }
        points.push(g);
    }
    Ok(points)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn distance_stats(points: &[Vec<f64>]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let (mut total, mut pairs) = (0.0, 0usize);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = distance(&points[i], &points[j]);
            min = min.min(d);
            total += d;
            pairs += 1;
        }
    }
    if pairs == 0 {
        (0.0, 0.0)
    } else {
        (min, total / pairs as f64)
    }
}

/// One repulsion pass: every point moves along its net inverse-square force,
/// the largest move being `step`, then returns to the sphere.
fn repel(points: &mut [Vec<f64>], step: f64) {
    let dim = points[0].len();
    let forces: Vec<Vec<f64>> = (0..points.len())
        .map(|i| {
            let mut f = vec![0.0; dim];
            for (j, other) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = distance(&points[i], other).max(1e-12);
                let scale = 1.0 / (d * d * d);
                f.iter_mut()
                    .zip(points[i].iter().zip(other))
                    .for_each(|(fk, (a, b))| *fk += scale * (a - b));
            }
            f
        })
        .collect();
    let largest = forces
        .iter()
        .map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if largest == 0.0 {
        return;
    }
    for (x, f) in points.iter_mut().zip(&forces) {
        x.iter_mut().zip(f).for_each(|(a, b)| *a += step * b / largest);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

fn to_orthonormal(point: &[f64], m: usize, p: usize) -> Result<Matrix> {
    let a = Matrix::new(m, p, point.to_vec())?;
    let set = VectorSet::from_columns(&a)?;
    orthobasis::closest_basis(&set, orthobasis::DEFAULT_TOL, orthobasis::DEFAULT_MAX_SWEEPS)
        .or_else(|_| gram_schmidt(&set))
        .map(|b| b.to_matrix())
}

/// `count` well-spread `m x p` starting matrices with orthonormal columns.
pub fn dispersed_starts(m: usize, p: usize, count: usize, seed: u64) -> Result<StartSet> {
    if count == 0 {
        return Err(Error::Config("at least one start is required".into()));
    }
    if p == 0 || p > m {
        return Err(Error::Rank { rank: p, bound: m + 1 });
    }
    let mut points = sphere_points(m * p, count, seed)?;
    let (initial_min_distance, _) = distance_stats(&points);
    if count > 1 {
        for _ in 0..REPULSION_ITERATIONS {
            repel(&mut points, REPULSION_STEP);
        }
    }
    let (min_distance, mean_distance) = distance_stats(&points);
    let starts = points
        .iter()
        .map(|pt| to_orthonormal(pt, m, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(StartSet {
        count,
        seed,
        starts,
        initial_min_distance,
        min_distance,
        mean_distance,
    })
}

/// A distinct solution and how many starts converged to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basin {
    pub solution: Solution,
    pub hits: usize,
}

/// Groups solutions whose products agree within `rel_tol * max(1, x_scale)`
/// entrywise. Classes are formed greedily in increasing objective order, so
/// each representative is the best member of its class.
pub fn dedup_solutions(solutions: Vec<Solution>, x_scale: f64, rel_tol: f64) -> Vec<Basin> {
    let tol = rel_tol * x_scale.max(1.0);
    let mut ordered = solutions;
    ordered.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    let mut basins: Vec<Basin> = Vec::new();
    for s in ordered {
        match basins
            .iter_mut()
            .find(|b| b.solution.wlra.max_abs_diff(&s.wlra).unwrap_or(f64::INFINITY) <= tol)
        {
            Some(b) => b.hits += 1,
            None => basins.push(Basin { solution: s, hits: 1 }),
        }
    }
    basins
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub x: Matrix,
    pub w: PseudoWeightGrid,
    pub p: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    /// Distinct solutions sorted by increasing RMSE.
    pub solutions: Vec<Basin>,
    pub n_starts: usize,
    pub n_failures: usize,
    pub instance: Instance,
}

impl LandscapeReport {
    pub fn count(&self) -> usize {
        self.solutions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerateConfig {
    /// Number of starts; `None` picks [`default_start_count`].
    pub starts: Option<usize>,
    pub seed: u64,
    pub rel_tol: f64,
    pub solver: SolverConfig,
    /// Worker threads; `1` runs sequentially. Results never depend on it, so it is not serialized.
    #[serde(skip, default = "one")]
    pub jobs: usize,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        Self {
            starts: None,
            seed: 0,
            rel_tol: DEFAULT_DEDUP_TOL,
            solver: SolverConfig::default(),
            jobs: 1,
        }
    }
}

/// Maps `f` over `items` on `jobs` threads, preserving order.
pub(crate) fn par_map<T: Sync, R: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Solves from every start and keeps the converged, stationary, well-conditioned results.
fn solve_from_starts(
    x: &Matrix,
    w: &PseudoWeightGrid,
    p: usize,
    starts: &[Matrix],
    solver: &SolverConfig,
    jobs: usize,
) -> (Vec<Solution>, usize) {
    let outcomes = par_map(starts, jobs, |a0| {
        alternate(x, w, p, Some(a0), solver)
            .ok()
            .filter(|s| s.converged && s.condition.pass && is_stationary(x, w, s))
    });
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    (outcomes.into_iter().flatten().collect(), failures)
}

fn check_instance(x: &Matrix, w: &PseudoWeightGrid, p: usize) -> Result<()> {
    w.check_shape(x, "weights vs data")?;
    w.require_nonneg()?;
    let bound = x.rows().min(x.cols());
    if p == 0 || p >= bound {
        return Err(Error::Rank { rank: p, bound });
    }
    Ok(())
}

/// Runs [`alternate`] from dispersed starts and collects the distinct solutions.
pub fn enumerate_solutions(
    x: &Matrix,
    w: &PseudoWeightGrid,
    p: usize,
    cfg: &EnumerateConfig,
) -> Result<LandscapeReport> {
    check_instance(x, w, p)?;
    cfg.solver.validate()?;
    let count = cfg.starts.unwrap_or_else(|| default_start_count(x.rows(), p));
    let starts = dispersed_starts(x.rows(), p, count, cfg.seed)?;
    Ok(enumerate_with_starts(x, w, p, &starts, cfg.rel_tol, &cfg.solver, cfg.jobs))
}

fn enumerate_with_starts(
    x: &Matrix,
    w: &PseudoWeightGrid,
    p: usize,
    starts: &StartSet,
    rel_tol: f64,
    solver: &SolverConfig,
    jobs: usize,
) -> LandscapeReport {
    let (solutions, n_failures) = solve_from_starts(x, w, p, &starts.starts, solver, jobs);
    LandscapeReport {
        solutions: dedup_solutions(solutions, x.max_abs(), rel_tol),
        n_starts: starts.count,
        n_failures,
        instance: Instance {
            x: x.clone(),
            w: w.clone(),
            p,
            seed: starts.seed,
        },
    }
}

/// Distribution of data entries in a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataDistribution {
    /// Integers drawn uniformly from `lo..=hi`.
    Integers { lo: i32, hi: i32 },
    /// Reals drawn uniformly from `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

/// Distribution of squared weights in a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    /// `w^2 = k / steps` with `k` uniform on `1..=steps`.
    Grid { steps: u32 },
    /// `w^2` uniform on `(0, 1]`.
    Uniform,
    /// Every `w^2` equal to `value` (the unweighted problem).
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub trials: usize,
    pub starts_per_trial: usize,
    pub seed: u64,
    pub data: DataDistribution,
    pub weights: WeightDistribution,
    pub rel_tol: f64,
    pub solver: SolverConfig,
    #[serde(skip, default = "one")]
    pub jobs: usize,
}

fn one() -> usize {
    1
}

impl ScanConfig {
    /// Integer data on `0..=9` and squared weights on the grid `{0.04, 0.08, ..., 1}`.
    pub fn new(m: usize, n: usize, p: usize, trials: usize, seed: u64) -> Self {
        Self {
            m,
            n,
            p,
            trials,
            starts_per_trial: default_start_count(m, p),
            seed,
            data: DataDistribution::Integers { lo: 0, hi: 9 },
            weights: WeightDistribution::Grid { steps: 25 },
            rel_tol: DEFAULT_DEDUP_TOL,
            solver: SolverConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub count: usize,
    pub instance: Instance,
    pub rmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub config: ScanConfig,
    /// `min(m, n)`, the conjectured maximum.
    pub bound: usize,
    pub max_count: usize,
    /// Number of instances per observed solution count.
    pub histogram: BTreeMap<usize, usize>,
    pub total_failures: usize,
    /// Instances whose count exceeded `bound`, kept verbatim.
    pub violating_instances: Vec<Violation>,
}

fn draw_instance(rng: &mut ChaCha8Rng, cfg: &ScanConfig) -> Result<(Matrix, PseudoWeightGrid)> {
    let cells = cfg.m * cfg.n;
    let x: Vec<f64> = (0..cells)
        .map(|_| match cfg.data {
            DataDistribution::Integers { lo, hi } => rng.gen_range(lo..=hi) as f64,
            DataDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
        })
        .collect();
    let w: Vec<f64> = (0..cells)
        .map(|_| match cfg.weights {
            WeightDistribution::Grid { steps } => rng.gen_range(1..=steps) as f64 / steps as f64,
            WeightDistribution::Uniform => 1.0 - rng.gen::<f64>(),
            WeightDistribution::Constant { value } => value,
        })
        .collect();
    Ok((
        Matrix::new(cfg.m, cfg.n, x)?,
        PseudoWeightGrid::new(Matrix::new(cfg.m, cfg.n, w)?),
    ))
}

fn check_scan(cfg: &ScanConfig) -> Result<()> {
    let bound = cfg.m.min(cfg.n);
    if cfg.p == 0 || cfg.p >= bound {
        return Err(Error::Rank { rank: cfg.p, bound });
    }
    match cfg.data {
        DataDistribution::Integers { lo, hi } if lo > hi => {
            return Err(Error::Config(format!("empty integer range {lo}..={hi}")))
        }
        DataDistribution::Uniform { lo, hi } if !(lo < hi) => {
            return Err(Error::Config(format!("empty real range [{lo}, {hi})")))
        }
        _ => {}
    }
    match cfg.weights {
        WeightDistribution::Grid { steps: 0 } => {
            Err(Error::Config("weight grid needs at least one step".into()))
        }
        WeightDistribution::Constant { value } if !(value > 0.0) => {
            Err(Error::Config(format!("constant weight must be positive, got {value}")))
        }
        _ => cfg.solver.validate(),
    }
}

/// Counts distinct solutions over `trials` random instances.
///
/// Instances are drawn sequentially from one seeded stream; the same start set
/// is reused for every instance. Counts above `min(m, n)` are recorded, not suppressed.
pub fn conjecture_scan(cfg: &ScanConfig) -> Result<ScanSummary> {
    check_scan(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let instances = (0..cfg.trials)
        .map(|_| draw_instance(&mut rng, cfg))
        .collect::<Result<Vec<_>>>()?;
    let starts = dispersed_starts(cfg.m, cfg.p, cfg.starts_per_trial, cfg.seed)?;
    let reports = par_map(&instances, cfg.jobs, |(x, w)| {
        enumerate_with_starts(x, w, cfg.p, &starts, cfg.rel_tol, &cfg.solver, 1)
    });

    let bound = cfg.m.min(cfg.n);
    let mut histogram = BTreeMap::new();
    let mut violating_instances = Vec::new();
    let mut total_failures = 0;
    for (trial, report) in reports.into_iter().enumerate() {
        *histogram.entry(report.count()).or_insert(0) += 1;
        total_failures += report.n_failures;
        if report.count() > bound {
            violating_instances.push(Violation {
                trial,
                count: report.count(),
                rmse: report.solutions.iter().filter_map(|b| b.solution.rmse).collect(),
                instance: report.instance,
            });
        }
    }
    Ok(ScanSummary {
        config: cfg.clone(),
        bound,
        max_count: histogram.keys().next_back().copied().unwrap_or(0),
        histogram,
        total_failures,
        violating_instances,
    })
}
