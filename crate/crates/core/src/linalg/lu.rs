use alloc::vec::Vec;


use super::CMatrix;
use crate::error::{Error, Result};
use crate::C64;

/// LU factorization with partial pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    factors: CMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &CMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::ShapeMismatch("LU needs a square matrix".into()));
        }
        let n = a.rows();
        let mut f = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, f[(i, k)].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= scale * 1e-300 {
                return Err(Error::SingularSystem);
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let t = f[(k, j)];
                    f[(k, j)] = f[(p, j)];
                    f[(p, j)] = t;
                }
            }
            let inv = C64::new(1.0, 0.0) / f[(k, k)];
            for i in k + 1..n {
                let l = f[(i, k)] * inv;
                f[(i, k)] = l;
                if l.re == 0.0 && l.im == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let u = f[(k, j)];
                    f[(i, j)] -= l * u;
                }
            }
        }
        Ok(Self { n, factors: f, perm })
    }

    pub fn solve_vec(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.factors[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.factors[(i, j)] * x[j];
            }
            x[i] = s / self.factors[(i, i)];
        }
        x
    }

    /// Solves `A·X = B` column by column.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let n = self.n;
        let m = b.cols();
        let mut x = CMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        for i in 0..n {
            for j in 0..i {
                let l = self.factors[(i, j)];
                if l.re == 0.0 && l.im == 0.0 {
                    continue;
                }
                let (head, tail) = x.data_split(i);
                let src = &head[j * m..(j + 1) * m];
                for (t, s) in tail.iter_mut().zip(src) {
                    *t -= l * s;
                }
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.factors[(i, j)];
                if u.re == 0.0 && u.im == 0.0 {
                    continue;
                }
                let (row_i, row_j) = x.two_rows(i, j);
                for (t, s) in row_i.iter_mut().zip(row_j.iter()) {
                    *t -= u * s;
                }
            }
            let inv = C64::new(1.0, 0.0) / self.factors[(i, i)];
            x.row_mut(i).iter_mut().for_each(|z| *z *= inv);
        }
        x
    }
}

impl CMatrix {
    /// Rows `< i` and row `i` as disjoint slices.
    fn data_split(&mut self, i: usize) -> (&[C64], &mut [C64]) {
        let c = self.cols;
        let (head, rest) = self.data.split_at_mut(i * c);
        (head, &mut rest[..c])
    }

    fn two_rows(&mut self, i: usize, j: usize) -> (&mut [C64], &[C64]) {
        assert!(i < j);
        let c = self.cols;
        let (head, rest) = self.data.split_at_mut(j * c);
        (&mut head[i * c..(i + 1) * c], &rest[..c])
    }
}
