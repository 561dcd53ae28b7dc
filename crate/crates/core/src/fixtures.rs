//! Two small published problems with their reference results, printed to three
//! to six significant digits.
//!
//! Cut positions are `(row, col, tau)` with zero-based indices.

use crate::matrix::{Matrix, PseudoWeightGrid};

pub struct Fixture {
    pub name: &'static str,
    pub x: Matrix,
    pub z0: PseudoWeightGrid,
    pub p: usize,
    pub starts: usize,
    pub zbar: f64,
    pub cuts: Vec<(usize, usize, f64)>,
    /// Distinct solutions at `tau = 0`.
    pub solutions: Vec<Matrix>,
    /// RMSE of each entry of `solutions`, where published.
    pub rmse: Vec<f64>,
    pub svd_curve: SvdCurve,
    /// `(left, right)` endpoints of every curve through a `tau = 0` solution, by left end.
    pub zero_curves: Vec<(f64, f64)>,
}

/// The curve through the `tau = 1` SVD.
pub struct SvdCurve {
    pub tau_left: f64,
    pub tau_right: f64,
    /// `(tau, wlra, rmse)` points on the curve, where published.
    pub points: Vec<(f64, Matrix, f64)>,
}

fn m<const N: usize>(rows: &[[f64; N]]) -> Matrix {
    Matrix::from_rows(rows).expect("fixture data is well-formed")
}

/// 2 x 2 data, rank 1, two local solutions.
pub fn small() -> Fixture {
    Fixture {
        name: "small_2x2_rank1",
        x: m(&[[6.0, 0.0], [1.0, 2.0]]),
        z0: PseudoWeightGrid::new(m(&[[0.04, 0.68], [0.84, 0.40]])),
        p: 1,
        starts: 64,
        zbar: 0.67837,
        cuts: vec![(1, 1, -1.43695), (0, 0, -0.06266), (1, 0, 5.19697), (0, 1, 416.500)],
        solutions: vec![
            m(&[[5.871, 0.202], [1.032, 0.036]]),
            m(&[[0.101, 0.194], [1.030, 1.968]]),
        ],
        rmse: vec![0.8958, 0.8507],
        svd_curve: SvdCurve {
            tau_left: -0.05227,
            tau_right: 5.19696,
            points: vec![
                (0.9, m(&[[5.978, 0.335], [1.099, 0.062]]), 0.9000),
                (1.0, m(&[[5.978, 0.351], [1.110, 0.065]]), 0.9011),
                (1.1, m(&[[5.978, 0.373], [1.125, 0.070]]), 0.9028),
            ],
        },
        zero_curves: vec![(-0.18799, 0.09357), (-0.05227, 5.19696)],
    }
}

/// 4 x 3 data, rank 2, three local solutions.
pub fn medium() -> Fixture {
    Fixture {
        name: "medium_4x3_rank2",
        x: m(&[[6.0, 4.0, 6.0], [2.0, 2.0, 9.0], [9.0, 0.0, 7.0], [1.0, 3.0, 1.0]]),
        z0: PseudoWeightGrid::new(m(&[
            [0.04, 0.84, 0.72],
            [0.56, 1.0, 0.68],
            [0.12, 0.40, 0.52],
            [0.60, 0.48, 0.32],
        ])),
        p: 2,
        starts: 256,
        zbar: 4.1392 / 6.28,
        cuts: vec![
            (3, 0, -10.1509),
            (1, 0, -5.65039),
            (2, 2, -3.73810),
            (3, 1, -2.67994),
            (2, 1, -1.54376),
            (3, 2, -0.94365),
            (2, 0, -0.22259),
            (0, 0, -0.06461),
            (1, 1, 2.93348),
            (0, 1, 4.64366),
            (0, 2, 11.8243),
            (1, 2, 32.5488),
        ],
        solutions: vec![
            m(&[[9.372, 3.431, 6.079], [2.152, 1.704, 9.052], [6.448, 2.668, 6.754], [1.550, 0.618, 1.427]]),
            m(&[[2.114, 3.974, 6.095], [3.424, 2.112, 8.486], [3.355, -0.239, 7.572], [0.290, 2.875, 1.584]]),
            m(&[[-0.065, 3.563, 6.285], [2.908, 2.774, 8.363], [7.371, -0.743, 7.320], [0.104, 1.295, 2.433]]),
        ],
        rmse: vec![],
        svd_curve: SvdCurve {
            tau_left: -0.06461,
            tau_right: 2.93359,
            points: vec![],
        },
        zero_curves: vec![(-0.24797, 0.01177), (-0.06533, 0.27532), (-0.06461, 2.93359)],
    }
}

pub fn all() -> Vec<Fixture> {
    vec![small(), medium()]
}
