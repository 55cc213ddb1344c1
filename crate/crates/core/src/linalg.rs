//! Dense linear algebra helpers: LU factorization with partial pivoting and
//! pairwise reductions. Instances here are desk scale, so O(n^3) direct
//! methods are used throughout.

use crate::error::{Error, Result};

/// Threshold below which plain left-to-right summation is used. Longer
/// slices are reduced pairwise to bound rounding drift.
const PAIRWISE_CUTOFF: usize = 1024;

/// Sum of a slice, pairwise above [`PAIRWISE_CUTOFF`].
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_CUTOFF {
        xs.iter().sum()
    } else {
        let (lo, hi) = xs.split_at(xs.len() / 2);
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

/// Dot product with the same pairwise policy as [`pairwise_sum`].
pub(crate) fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAIRWISE_CUTOFF {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        let mid = a.len() / 2;
        pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
    }
}

/// LU factors of a square matrix, stored in place with a pivot permutation.
pub(crate) struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

impl LuFactors {
    /// Factor a row-major `n x n` matrix with partial pivoting.
    pub(crate) fn factor(a: &[f64], n: usize) -> Result<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut pivots = vec![0usize; n];
        for col in 0..n {
            let mut best = col;
            let mut best_abs = lu[col * n + col].abs();
            for row in (col + 1)..n {
                let v = lu[row * n + col].abs();
                if v > best_abs {
                    best_abs = v;
                    best = row;
                }
            }
            if best_abs == 0.0 {
                return Err(Error::SingularSystem {
                    column: col,
                    pivot: 0.0,
                });
            }
            pivots[col] = best;
            if best != col {
                for k in 0..n {
                    lu.swap(col * n + k, best * n + k);
                }
            }
            let pivot = lu[col * n + col];
            for row in (col + 1)..n {
                let factor = lu[row * n + col] / pivot;
                lu[row * n + col] = factor;
                for k in (col + 1)..n {
                    lu[row * n + k] -= factor * lu[col * n + k];
                }
            }
        }
        Ok(LuFactors { n, lu, pivots })
    }

    /// Solve `A x = b` in place.
    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for col in 0..n {
            b.swap(col, self.pivots[col]);
        }
        // Forward substitution with unit lower triangle.
        for row in 1..n {
            let (done, rest) = b.split_at_mut(row);
            let acc: f64 = self.lu[row * n..row * n + row]
                .iter()
                .zip(done.iter())
                .map(|(l, x)| l * x)
                .sum();
            rest[0] -= acc;
        }
        // Back substitution.
        for row in (0..n).rev() {
            let (head, tail) = b.split_at_mut(row + 1);
            let acc: f64 = self.lu[row * n + row + 1..row * n + n]
                .iter()
                .zip(tail.iter())
                .map(|(l, x)| l * x)
                .sum();
            head[row] = (head[row] - acc) / self.lu[row * n + row];
        }
    }
}

/// Solve `A x = b` for a single right-hand side.
pub(crate) fn solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let factors = LuFactors::factor(a, n)?;
    let mut x = b.to_vec();
    factors.solve_in_place(&mut x);
    Ok(x)
}

/// Full inverse of a row-major `n x n` matrix, obtained by solving `n` unit
/// systems against one factorization. Returned row-major.
pub(crate) fn invert(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let factors = LuFactors::factor(a, n)?;
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        factors.solve_in_place(&mut col);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Ok(inv)
}
