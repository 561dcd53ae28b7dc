//! Orthonormal bases from small vector sets.
//!
//! [`gram_schmidt`] is the classical order-dependent process. [`closest_basis`]
//! is a symmetric iteration: every sweep normalizes the vectors and removes half
//! of each vector's projection on all the others. After normalization this is
//! `E <- E (3I - E'E) / 2`, a Newton–Schulz step towards the orthogonal polar
//! factor, so it converges quadratically and treats all input vectors alike.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Default convergence tolerance on `max |e_i' e_j|`, `i != j`.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default sweep budget for [`closest_basis`].
pub const DEFAULT_MAX_SWEEPS: usize = 50;

/// Deflated-to-original norm ratio below which a vector counts as dependent.
const DEPENDENCE_RTOL: f64 = 1e-10;

/// `p` nonzero vectors of common dimension `m`, `p <= m`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl VectorSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Empty);
        }
        if vectors.len() > dim {
            return Err(Error::Rank {
                rank: vectors.len(),
                bound: dim + 1,
            });
        }
        for (k, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Dimension {
                    context: "vector set",
                    expected: format!("length {dim}"),
                    got: format!("length {} for vector {k}", v.len()),
                });
            }
            if let Some(c) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row: c, col: k });
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::DependentSet { index: k });
            }
        }
        Ok(Self { dim, vectors })
    }

    /// Columns of `a` as the vector set.
    pub fn from_columns(a: &Matrix) -> Result<Self> {
        Self::new(a.columns())
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_columns(&self.vectors).expect("vector set entries are finite")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Largest `|e_i' e_j|` over distinct pairs.
    pub fn max_off_diagonal(&self) -> f64 {
        let p = self.vectors.len();
        let mut worst = 0.0_f64;
        for i in 0..p {
            for j in i + 1..p {
                worst = worst.max(dot(&self.vectors[i], &self.vectors[j]).abs());
            }
        }
        worst
    }

    /// `max |E'E - I|` over all entries.
    pub fn orthonormality_defect(&self) -> f64 {
        let p = self.vectors.len();
        let mut worst = 0.0_f64;
        for i in 0..p {
            for j in i..p {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&self.vectors[i], &self.vectors[j]) - target).abs());
            }
        }
        worst
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    norm
}

/// Classical Gram–Schmidt in input order.
pub fn gram_schmidt(set: &VectorSet) -> Result<VectorSet> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(set.count());
    for (i, a) in set.vectors.iter().enumerate() {
        let mut e = a.clone();
        let original = dot(a, a).sqrt();
        let coeffs: Vec<f64> = basis.iter().map(|q| dot(q, &e)).collect();
        for (q, c) in basis.iter().zip(&coeffs) {
            e.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        if normalize(&mut e) <= DEPENDENCE_RTOL * original {
            return Err(Error::DependentSet { index: i });
        }
        basis.push(e);
    }
    Ok(VectorSet {
        dim: set.dim,
        vectors: basis,
    })
}

/// Rank check by modified Gram–Schmidt on a copy; does not touch the iteration.
fn check_independent(vectors: &[Vec<f64>]) -> Result<()> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (i, a) in vectors.iter().enumerate() {
        let mut e = a.clone();
        let original = dot(a, a).sqrt();
        for q in &basis {
            let c = dot(q, &e);
            e.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        if normalize(&mut e) <= DEPENDENCE_RTOL * original {
            return Err(Error::DependentSet { index: i });
        }
        basis.push(e);
    }
    Ok(())
}

/// Symmetric orthonormalization that stays close in direction to the inputs.
pub fn closest_basis(set: &VectorSet, tol: f64, max_sweeps: usize) -> Result<VectorSet> {
    closest_basis_counted(set, tol, max_sweeps).map(|(basis, _)| basis)
}

/// As [`closest_basis`], also returning the number of half-projection sweeps applied.
pub fn closest_basis_counted(
    set: &VectorSet,
    tol: f64,
    max_sweeps: usize,
) -> Result<(VectorSet, usize)> {
    check_independent(&set.vectors)?;
    let p = set.count();
    let mut a = set.vectors.clone();
    let mut sweeps = 0;
    loop {
        let mut e = a;
        for v in &mut e {
            if normalize(v) == 0.0 {
                return Err(Error::DependentSet { index: 0 });
            }
        }
        let gram: Vec<f64> = (0..p * p).map(|k| dot(&e[k / p], &e[k % p])).collect();
        let off = (0..p * p)
            .filter(|k| k / p != k % p)
            .fold(0.0_f64, |acc, k| acc.max(gram[k].abs()));
        if off <= tol {
            return Ok((VectorSet { dim: set.dim, vectors: e }, sweeps));
        }
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence { iterations: sweeps });
        }
        let deltas: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let mut d = vec![0.0; set.dim];
                for j in (0..p).filter(|&j| j != i) {
                    let c = 0.5 * gram[j * p + i];
                    d.iter_mut().zip(&e[j]).for_each(|(x, y)| *x += c * y);
                }
                d
            })
            .collect();
        for (v, d) in e.iter_mut().zip(&deltas) {
            v.iter_mut().zip(d).for_each(|(x, y)| *x -= y);
        }
        a = e;
        sweeps += 1;
    }
}

/// Columns of `a` replaced by their closest orthonormal basis.
pub fn orthonormal_columns(a: &Matrix) -> Result<Matrix> {
    let set = VectorSet::from_columns(a)?;
    Ok(closest_basis(&set, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)?.to_matrix())
}
