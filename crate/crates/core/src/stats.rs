//! Goodness-of-fit helpers for the Monte Carlo cross-checks.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and a
/// continuous model CDF.
///
/// `None` samples (no event) sit at `+∞`; the model is `P(T ≤ t)` and may have
/// total mass below 1.
pub fn ks_statistic(samples: &[Option<f64>], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut t: Vec<f64> = samples.iter().filter_map(|s| *s).collect();
    t.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < t.len() {
        let mut j = i;
        while j + 1 < t.len() && t[j + 1] == t[i] {
            j += 1;
        }
        let f = cdf(t[i]);
        d = d.max((i as f64 / n - f).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

/// Two-sample KS distance; `None` sits at `+∞`.
pub fn ks_two_sample(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let sorted = |s: &[Option<f64>]| {
        let mut v: Vec<f64> = s.iter().filter_map(|x| *x).collect();
        v.sort_by(|x, y| x.total_cmp(y));
        v
    };
    let (x, y) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() || j < y.len() {
        let t = match (x.get(i), y.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            _ => break,
        };
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// `Σ|p − q|`.
pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Index of the half-open bin of `edges` containing `x`, if any.
pub fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    if edges.len() < 2 || !(x >= edges[0]) || !(x < edges[edges.len() - 1]) {
        return None;
    }
    Some(edges.partition_point(|e| *e <= x) - 1)
}

/// Normalized histogram over `edges`; values outside count toward nothing.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; edges.len().saturating_sub(1)];
    for v in values {
        if let Some(k) = bin_index(edges, *v) {
            h[k] += 1.0;
        }
    }
    let n = values.len().max(1) as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

/// Pearson statistic `Σ (O − E)²/E` over cells with `E > 0`.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .filter(|(_, e)| **e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum()
}

/// Upper tail `P(χ²_k ≥ x)`.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    gamma_q(0.5 * dof, 0.5 * x)
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_pre = -x + a * x.ln() - libm::lgamma(a);
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        1.0 - sum * ln_pre.exp()
    } else {
        // Lentz continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        ln_pre.exp() * h
    }
}

/// Standard error of a binomial proportion.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
