use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::C64;

/// Pivot-free LU of a complex tridiagonal matrix.
///
/// Used for Crank-Nicolson systems `I + iτH`, whose Hermitian part `I + τΓ` is
/// positive definite, so every pivot is bounded away from zero.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    /// Super-diagonal of the original matrix.
    upper: Vec<C64>,
    /// Sub-diagonal multipliers.
    lower: Vec<C64>,
    /// Pivots of U.
    pivots: Vec<C64>,
}

impl TridiagonalLu {
    pub fn new(sub: &[C64], diag: &[C64], sup: &[C64]) -> Result<Self> {
        let n = diag.len();
        assert!(sub.len() + 1 == n && sup.len() + 1 == n);
        let mut pivots = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n.saturating_sub(1));
        pivots.push(diag[0]);
        for k in 1..n {
            let prev = pivots[k - 1];
            if prev.norm_sqr() == 0.0 {
                return Err(Error::SingularSystem);
            }
            let l = sub[k - 1] / prev;
            lower.push(l);
            pivots.push(diag[k] - l * sup[k - 1]);
        }
        if pivots[n - 1].norm_sqr() == 0.0 {
            return Err(Error::SingularSystem);
        }
        Ok(Self { upper: sup.to_vec(), lower, pivots })
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Solves in place.
    pub fn solve_in_place(&self, x: &mut [C64]) {
        let n = self.pivots.len();
        for k in 1..n {
            let prev = x[k - 1];
            x[k] -= self.lower[k - 1] * prev;
        }
        x[n - 1] /= self.pivots[n - 1];
        for k in (0..n - 1).rev() {
            let next = x[k + 1];
            x[k] = (x[k] - self.upper[k] * next) / self.pivots[k];
        }
    }
}
