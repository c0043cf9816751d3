//! Tensor-product Catmull-Rom interpolation of grid wave functions.
//!
//! Slopes at nodes are central differences. Beyond each endpoint the stencil
//! uses the Robin ghost value `ψ_ghost = ψ_inner + 2ihκψ_boundary`, so the
//! interpolant satisfies `n·∂ψ = iκψ` exactly at the boundary nodes.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::domain::{SpatialGrid, ENDPOINT_GAUGE};
use crate::C64;

/// A wave function on a tensor grid prepared for off-grid evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineField {
    grids: Vec<SpatialGrid>,
    /// Robin coefficient at the (left, right) end of every axis.
    kappas: Vec<[f64; 2]>,
    /// Point values `ψ(x)` (gauge removed), row-major.
    values: Vec<C64>,
}

type Taps = [(usize, C64); 6];

impl SplineField {
    /// From stored amplitudes in the boundary-symmetrized gauge.
    pub fn from_amplitudes(grids: &[SpatialGrid], kappas: &[[f64; 2]], amplitudes: &[C64]) -> Self {
        assert_eq!(grids.len(), kappas.len());
        let shape: Vec<usize> = grids.iter().map(|g| g.n_points()).collect();
        let st = crate::domain::strides(&shape);
        let values = amplitudes
            .iter()
            .enumerate()
            .map(|(flat, a)| {
                let mut g = 1.0;
                for ax in 0..shape.len() {
                    let k = (flat / st[ax]) % shape[ax];
                    if k == 0 || k + 1 == shape[ax] {
                        g *= ENDPOINT_GAUGE;
                    }
                }
                a / g
            })
            .collect();
        Self { grids: grids.to_vec(), kappas: kappas.to_vec(), values }
    }

    pub fn grids(&self) -> &[SpatialGrid] {
        &self.grids
    }

    /// Stencil taps along one axis: node indices with complex weights for
    /// the value and the derivative.
    fn taps(&self, ax: usize, x: f64) -> (Taps, Taps, usize) {
        let g = &self.grids[ax];
        let n = g.n_points();
        let h = g.spacing();
        let u = ((x - g.interval().a()) / h).clamp(0.0, (n - 1) as f64);
        let k = (u.floor() as usize).min(n - 2);
        let t = u - k as f64;
        let (t2, t3) = (t * t, t * t * t);
        let (h00, h10, h01, h11) = (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2);
        let (d00, d10, d01, d11) = (6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t);
        let w = [-0.5 * h10, h00 - 0.5 * h11, h01 + 0.5 * h10, 0.5 * h11];
        let dw = [-0.5 * d10 / h, (d00 - 0.5 * d11) / h, (d01 + 0.5 * d10) / h, 0.5 * d11 / h];
        let zero = (0usize, C64::new(0.0, 0.0));
        let mut tv = [zero; 6];
        let mut td = [zero; 6];
        let mut len = 0;
        let [kl, kr] = self.kappas[ax];
        let mut push = |idx: usize, wv: C64, wd: C64, len: &mut usize| {
            if let Some(p) = tv[..*len].iter().position(|(i, _)| *i == idx) {
                tv[p].1 += wv;
                td[p].1 += wd;
            } else {
                tv[*len] = (idx, wv);
                td[*len] = (idx, wd);
                *len += 1;
            }
        };
        for j in 0..4 {
            let idx = k as isize - 1 + j as isize;
            let (wv, wd) = (C64::new(w[j], 0.0), C64::new(dw[j], 0.0));
            if idx < 0 {
                let c = C64::new(0.0, 2.0 * h * kl);
                push(1, wv, wd, &mut len);
                push(0, wv * c, wd * c, &mut len);
            } else if idx as usize >= n {
                let c = C64::new(0.0, 2.0 * h * kr);
                push(n - 2, wv, wd, &mut len);
                push(n - 1, wv * c, wd * c, &mut len);
            } else {
                push(idx as usize, wv, wd, &mut len);
            }
        }
        (tv, td, len)
    }

    /// `ψ(x)` and `∇ψ(x)`; positions outside the grid are clamped.
    pub fn eval(&self, x: &[f64], grad: &mut [C64]) -> C64 {
        let d = self.grids.len();
        assert!(x.len() == d && grad.len() == d);
        let taps: Vec<(Taps, Taps, usize)> = (0..d).map(|ax| self.taps(ax, x[ax])).collect();
        let shape: Vec<usize> = self.grids.iter().map(|g| g.n_points()).collect();
        let st = crate::domain::strides(&shape);
        let mut value = C64::new(0.0, 0.0);
        grad.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        let mut sel = vec![0usize; d];
        'outer: loop {
            let mut flat = 0;
            let mut wv = C64::new(1.0, 0.0);
            for ax in 0..d {
                let (tv, _, _) = &taps[ax];
                flat += tv[sel[ax]].0 * st[ax];
                wv *= tv[sel[ax]].1;
            }
            let v = self.values[flat];
            value += wv * v;
            for gi in 0..d {
                let mut w = C64::new(1.0, 0.0);
                for ax in 0..d {
                    let (tv, td, _) = &taps[ax];
                    w *= if ax == gi { td[sel[ax]].1 } else { tv[sel[ax]].1 };
                }
                grad[gi] += w * v;
            }
            for ax in (0..d).rev() {
                sel[ax] += 1;
                if sel[ax] < taps[ax].2 {
                    continue 'outer;
                }
                sel[ax] = 0;
            }
            break;
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, Interval1D};

    #[test]
    fn reproduces_quadratics_inside() {
        let g = make_grid(Interval1D::new(0.0, 4.0).unwrap(), 41).unwrap();
        let f = |x: f64| C64::new(x * x - 0.3 * x, 0.5 * x);
        let amps: Vec<C64> = g
            .points()
            .iter()
            .enumerate()
            .map(|(k, x)| f(*x) * if k == 0 || k == 40 { ENDPOINT_GAUGE } else { 1.0 })
            .collect();
        let s = SplineField::from_amplitudes(&[g], &[[0.0, 0.0]], &amps);
        let mut d = [C64::new(0.0, 0.0)];
        for x in [0.55, 1.234, 2.0, 3.33] {
            let v = s.eval(&[x], &mut d);
            assert!((v - f(x)).norm() < 1e-12);
            assert!((d[0] - C64::new(2.0 * x - 0.3, 0.5)).norm() < 1e-10);
        }
    }

    #[test]
    fn boundary_derivative_obeys_robin_condition() {
        let g = make_grid(Interval1D::new(-1.0, 2.0).unwrap(), 31).unwrap();
        let amps: Vec<C64> = g.points().iter().map(|x| C64::from_polar(1.0 + x.sin(), 0.7 * x)).collect();
        let (kl, kr) = (0.8, 1.9);
        let s = SplineField::from_amplitudes(&[g], &[[kl, kr]], &amps);
        let mut d = [C64::new(0.0, 0.0)];
        let v = s.eval(&[2.0], &mut d);
        assert!((d[0] - C64::new(0.0, kr) * v).norm() < 1e-12);
        let v = s.eval(&[-1.0], &mut d);
        assert!((d[0] + C64::new(0.0, kl) * v).norm() < 1e-12);
    }

    #[test]
    fn tensor_product_matches_separable_function() {
        let g1 = make_grid(Interval1D::new(0.0, 2.0).unwrap(), 21).unwrap();
        let g2 = make_grid(Interval1D::new(-1.0, 1.0).unwrap(), 17).unwrap();
        let f = |x: f64| C64::new(x * x, x);
        let g = |y: f64| C64::new(1.0 - y, y * y);
        let mut amps = Vec::new();
        for (i, x) in g1.points().iter().enumerate() {
            for (j, y) in g2.points().iter().enumerate() {
                let mut gauge = 1.0;
                if i == 0 || i == 20 {
                    gauge *= ENDPOINT_GAUGE;
                }
                if j == 0 || j == 16 {
                    gauge *= ENDPOINT_GAUGE;
                }
                amps.push(f(*x) * g(*y) * gauge);
            }
        }
        let s = SplineField::from_amplitudes(&[g1, g2], &[[0.0, 0.0], [0.0, 0.0]], &amps);
        let mut d = [C64::new(0.0, 0.0); 2];
        let (x, y) = (0.73, 0.21);
        let v = s.eval(&[x, y], &mut d);
        assert!((v - f(x) * g(y)).norm() < 1e-12);
        assert!((d[0] - C64::new(2.0 * x, 1.0) * g(y)).norm() < 1e-10);
        assert!((d[1] - f(x) * C64::new(-1.0, 2.0 * y)).norm() < 1e-10);
    }
}
