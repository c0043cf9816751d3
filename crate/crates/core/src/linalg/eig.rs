use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use super::CMatrix;
use crate::C64;

/// Eigenvalues of a Hermitian matrix in ascending order.
///
/// Householder reduction to a Hermitian tridiagonal form, whose off-diagonal
/// phases are irrelevant to the spectrum, followed by implicit QL.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    assert!(a.is_square());
    let n = a.rows();
    if n == 0 {
        return Vec::new();
    }
    let mut m = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut v = vec![C64::new(0.0, 0.0); n];
    let mut p = vec![C64::new(0.0, 0.0); n];
    for k in 0..n.saturating_sub(2) {
        d[k] = m[(k, k)].re;
        let xnorm = (k + 1..n).map(|i| m[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let x0 = m[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let alpha = -phase * xnorm;
        for i in k + 1..n {
            v[i] = m[(i, k)];
        }
        v[k + 1] -= alpha;
        let vnorm = (k + 1..n).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        for i in k + 1..n {
            v[i] /= vnorm;
        }
        // p = B v, K = v† p, w = p − K v, B ← B − 2 v w† − 2 w v†
        for i in k + 1..n {
            let row = m.row(i);
            p[i] = (k + 1..n).map(|j| row[j] * v[j]).sum();
        }
        let kk: f64 = (k + 1..n).map(|i| (v[i].conj() * p[i]).re).sum();
        for i in k + 1..n {
            p[i] -= v[i] * kk;
        }
        for i in k + 1..n {
            let (vi, wi) = (v[i], p[i]);
            let row = m.row_mut(i);
            for j in k + 1..n {
                row[j] -= (vi * p[j].conj() + wi * v[j].conj()) * 2.0;
            }
        }
        e[k] = alpha.norm();
    }
    if n >= 2 {
        d[n - 2] = m[(n - 2, n - 2)].re;
        d[n - 1] = m[(n - 1, n - 1)].re;
        e[n - 2] = m[(n - 1, n - 2)].norm();
    } else {
        d[0] = m[(0, 0)].re;
    }
    symmetric_tridiagonal_eigenvalues(&mut d, &mut e);
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    d
}

/// Implicit QL on a real symmetric tridiagonal matrix; `e[i]` couples `i` and
/// `i+1`. Eigenvalues overwrite `d`.
fn symmetric_tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    if n < 2 {
        return;
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}
