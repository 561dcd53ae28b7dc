#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wlra::{Matrix, PseudoWeightGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, m: usize, n: usize) -> Matrix {
    Matrix::new(m, n, (0..m * n).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap()
}

/// Weights in `[0.05, 1]`.
pub fn random_weights(rng: &mut impl Rng, m: usize, n: usize) -> PseudoWeightGrid {
    let data = (0..m * n).map(|_| rng.gen_range(0.05..=1.0)).collect();
    PseudoWeightGrid::new(Matrix::new(m, n, data).unwrap())
}

pub fn fixture_2x2() -> (Matrix, PseudoWeightGrid) {
    (
        Matrix::from_rows(&[[6.0, 0.0], [1.0, 2.0]]).unwrap(),
        PseudoWeightGrid::from_rows(&[[0.04, 0.68], [0.84, 0.40]]).unwrap(),
    )
}

/// The 2 x 3 rank-1 instance with three local minima.
pub fn three_minima_2x3() -> (Matrix, PseudoWeightGrid) {
    (
        Matrix::from_rows(&[[0.0, 6.0, 2.0], [6.0, 1.0, 0.0]]).unwrap(),
        PseudoWeightGrid::from_rows(&[[0.72, 0.28, 0.96], [0.40, 0.48, 0.04]]).unwrap(),
    )
}

/// Rank-1 objective of a two-row problem with `a = (cos t, sin t)` and the
/// optimal `b` for that `a`, written out independently of the library.
pub fn angle_objective(x: &Matrix, z: &PseudoWeightGrid, t: f64) -> f64 {
    let a = [t.cos(), t.sin()];
    (0..x.cols())
        .map(|j| {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, ai) in a.iter().enumerate() {
                num += z.get(i, j) * x.get(i, j) * ai;
                den += z.get(i, j) * ai * ai;
            }
            let b = num / den;
            (0..2).map(|i| z.get(i, j) * (x.get(i, j) - a[i] * b).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Local minima of the angle objective over a periodic grid on `[0, pi)`,
/// returned as `(angle, objective)`.
pub fn angle_grid_minima(x: &Matrix, z: &PseudoWeightGrid, points: usize) -> Vec<(f64, f64)> {
    assert_eq!(x.rows(), 2);
    let step = std::f64::consts::PI / points as f64;
    let f: Vec<f64> = (0..points).map(|k| angle_objective(x, z, k as f64 * step)).collect();
    (0..points)
        .filter(|&k| {
            let prev = f[(k + points - 1) % points];
            let next = f[(k + 1) % points];
            f[k] < prev && f[k] <= next
        })
        .map(|k| (k as f64 * step, f[k]))
        .collect()
}

/// Rank-1 product `a b'` for the angle `t` with the optimal `b`.
pub fn angle_product(x: &Matrix, z: &PseudoWeightGrid, t: f64) -> Matrix {
    let a = [t.cos(), t.sin()];
    let b: Vec<f64> = (0..x.cols())
        .map(|j| {
            let num: f64 = (0..2).map(|i| z.get(i, j) * x.get(i, j) * a[i]).sum();
            let den: f64 = (0..2).map(|i| z.get(i, j) * a[i] * a[i]).sum();
            num / den
        })
        .collect();
    Matrix::from_fn(2, x.cols(), |i, j| a[i] * b[j]).unwrap()
}
