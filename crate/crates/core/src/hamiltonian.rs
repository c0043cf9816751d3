//! Finite-difference effective Hamiltonian `H_eff = H_herm − iΓ`.
//!
//! Each particle axis carries a three-point Laplacian. The Robin condition
//! `n·∂ψ = iκψ` enters through a ghost node eliminated with the centered
//! relation `(ψ_ghost − ψ_inner)/(2h) = iκ ψ_boundary`. In the
//! boundary-symmetrized gauge the resulting boundary row couples to its
//! neighbour with `−√2·ħ²/(2mh²)` (symmetric) and carries the dissipator
//! `Γ = ħ²κ/(mh)` on the boundary node.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use crate::domain::{strides, Face, FaceId, ParticleLabel, PhysicalConstants, PotentialSpec, Side, SpatialGrid};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::C64;

/// One particle's share of the generator: a real symmetric tridiagonal matrix
/// plus boundary dissipators.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisOperator {
    label: ParticleLabel,
    mass: f64,
    spacing: f64,
    weight: f64,
    diag: Vec<f64>,
    off: Vec<f64>,
    gamma: [f64; 2],
    kappa: [f64; 2],
}

impl AxisOperator {
    /// `spacing` sets the stencil, `weight` the quadrature weight used for
    /// norms (equal for static grids).
    pub fn new(
        label: ParticleLabel,
        spacing: f64,
        weight: f64,
        potential: &[f64],
        mass: f64,
        hbar: f64,
        kappa_left: f64,
        kappa_right: f64,
    ) -> Result<Self> {
        let n = potential.len();
        if n < 3 {
            return Err(Error::TooFewPoints(n));
        }
        for (side, k) in [(Side::Left, kappa_left), (Side::Right, kappa_right)] {
            if !(k >= 0.0) || !k.is_finite() {
                return Err(Error::NegativeKappa { face: FaceId { particle: label.clone(), side }, kappa: k });
            }
        }
        let c = hbar * hbar / (2.0 * mass * spacing * spacing);
        let diag = potential.iter().map(|v| 2.0 * c + v).collect();
        let mut off = vec![-c; n - 1];
        off[0] = -core::f64::consts::SQRT_2 * c;
        off[n - 2] = -core::f64::consts::SQRT_2 * c;
        if n == 3 {
            off[0] = -core::f64::consts::SQRT_2 * c;
            off[1] = -core::f64::consts::SQRT_2 * c;
        }
        let g = hbar * hbar / (mass * spacing);
        Ok(Self {
            label,
            mass,
            spacing,
            weight,
            diag,
            off,
            gamma: [g * kappa_left, g * kappa_right],
            kappa: [kappa_left, kappa_right],
        })
    }

    pub fn label(&self) -> &ParticleLabel {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn gamma(&self, side: Side) -> f64 {
        self.gamma[side.index()]
    }

    pub fn kappa(&self, side: Side) -> f64 {
        self.kappa[side.index()]
    }

    /// Dense `n×n` block `A − iΓ`.
    pub fn to_dense(&self) -> CMatrix {
        let n = self.len();
        let mut m = CMatrix::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = C64::new(self.diag[k], 0.0);
            if k + 1 < n {
                m[(k, k + 1)] = C64::new(self.off[k], 0.0);
                m[(k + 1, k)] = C64::new(self.off[k], 0.0);
            }
        }
        m[(0, 0)] -= C64::new(0.0, self.gamma[0]);
        m[(n - 1, n - 1)] -= C64::new(0.0, self.gamma[1]);
        m
    }
}

/// Generator of the absorbing evolution on a tensor-product grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonian {
    hbar: f64,
    grids: Vec<SpatialGrid>,
    axes: Vec<AxisOperator>,
    pair: Option<Vec<f64>>,
}

impl EffectiveHamiltonian {
    /// Assembles from prepared axis operators and an optional full-tensor
    /// interaction potential.
    pub fn from_axes(
        hbar: f64,
        grids: Vec<SpatialGrid>,
        axes: Vec<AxisOperator>,
        pair: Option<Vec<f64>>,
    ) -> Result<Self> {
        if grids.len() != axes.len() || axes.is_empty() {
            return Err(Error::ShapeMismatch("one axis operator per grid required".into()));
        }
        for (g, ax) in grids.iter().zip(&axes) {
            if g.n_points() != ax.len() {
                return Err(Error::ShapeMismatch(format!(
                    "axis {} has {} nodes, grid has {}",
                    ax.label,
                    ax.len(),
                    g.n_points()
                )));
            }
        }
        let dim: usize = grids.iter().map(|g| g.n_points()).product();
        if let Some(p) = &pair {
            if p.len() != dim {
                return Err(Error::ShapeMismatch(format!("pair potential of length {} for dimension {dim}", p.len())));
            }
        }
        Ok(Self { hbar, grids, axes, pair })
    }

    /// Single particle labelled `label` on `grid`.
    pub fn single(
        label: impl Into<ParticleLabel>,
        grid: &SpatialGrid,
        potential: Option<&[f64]>,
        kappa_left: f64,
        kappa_right: f64,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        let label = label.into();
        let mut spec = PotentialSpec::zero();
        if let Some(v) = potential {
            spec = spec.with_single(label.clone(), v.to_vec())?;
        }
        let faces = [
            Face::new(label.clone(), Side::Left, kappa_left)?,
            Face::new(label.clone(), Side::Right, kappa_right)?,
        ];
        build_effective_hamiltonian(&[(label, *grid)], &spec, &faces, constants)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn grids(&self) -> &[SpatialGrid] {
        &self.grids
    }

    pub fn axes(&self) -> &[AxisOperator] {
        &self.axes
    }

    pub fn labels(&self) -> Vec<ParticleLabel> {
        self.axes.iter().map(|a| a.label.clone()).collect()
    }

    pub fn pair_potential(&self) -> Option<&[f64]> {
        self.pair.as_deref()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn dim(&self) -> usize {
        self.shape().iter().product()
    }

    /// Faces in canonical order: axis-major, left before right.
    pub fn face_ids(&self) -> Vec<FaceId> {
        self.axes
            .iter()
            .flat_map(|a| {
                [FaceId::new(a.label.clone(), Side::Left), FaceId::new(a.label.clone(), Side::Right)]
            })
            .collect()
    }

    pub fn axis_of(&self, label: &ParticleLabel) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| &a.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.0.clone()))
    }

    /// `H_eff · x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let shape = self.shape();
        let st = strides(&shape);
        let mut out = match &self.pair {
            Some(p) => x.iter().zip(p).map(|(z, v)| z * v).collect(),
            None => vec![C64::new(0.0, 0.0); x.len()],
        };
        for (ax, op) in self.axes.iter().enumerate() {
            let n = shape[ax];
            let stride = st[ax];
            let outer = x.len() / (n * stride);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    for k in 0..n {
                        let i = base + k * stride;
                        let mut acc = x[i] * op.diag[k];
                        if k > 0 {
                            acc += x[i - stride] * op.off[k - 1];
                        }
                        if k + 1 < n {
                            acc += x[i + stride] * op.off[k];
                        }
                        if k == 0 {
                            acc -= C64::new(0.0, op.gamma[0]) * x[i];
                        }
                        if k + 1 == n {
                            acc -= C64::new(0.0, op.gamma[1]) * x[i];
                        }
                        out[i] += acc;
                    }
                }
            }
        }
        out
    }

    /// Dense matrix of `H_eff`; refuses dimensions above `cap`.
    pub fn to_dense(&self, cap: usize) -> Result<CMatrix> {
        let dim = self.dim();
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        let mut m = CMatrix::zeros(dim, dim);
        let mut e = vec![C64::new(0.0, 0.0); dim];
        for j in 0..dim {
            e[j] = C64::new(1.0, 0.0);
            let col = self.apply(&e);
            for i in 0..dim {
                m[(i, j)] = col[i];
            }
            e[j] = C64::new(0.0, 0.0);
        }
        Ok(m)
    }

    /// Diagonal of the full dissipator `Γ`.
    pub fn gamma_diagonal(&self) -> Vec<f64> {
        let shape = self.shape();
        let st = strides(&shape);
        let dim = self.dim();
        let mut g = vec![0.0; dim];
        for (ax, op) in self.axes.iter().enumerate() {
            for (i, gi) in g.iter_mut().enumerate() {
                let k = (i / st[ax]) % shape[ax];
                if k == 0 {
                    *gi += op.gamma[0];
                }
                if k + 1 == shape[ax] {
                    *gi += op.gamma[1];
                }
            }
        }
        g
    }

    /// Quadrature weight of one tensor cell.
    pub fn cell_weight(&self) -> f64 {
        self.axes.iter().map(|a| a.weight).product()
    }
}

/// Builds `H_eff` for particles on `grids` with the given potential and faces.
///
/// Faces not listed are reflecting (`κ = 0`).
pub fn build_effective_hamiltonian(
    grids: &[(ParticleLabel, SpatialGrid)],
    potential: &PotentialSpec,
    faces: &[Face],
    constants: &PhysicalConstants,
) -> Result<EffectiveHamiltonian> {
    let hbar = constants.hbar();
    for (i, (l, _)) in grids.iter().enumerate() {
        if grids[..i].iter().any(|(m, _)| m == l) {
            return Err(Error::DuplicateLabel(l.0.clone()));
        }
    }
    let mut kappas: Vec<[Option<f64>; 2]> = vec![[None, None]; grids.len()];
    for f in faces {
        let ax = grids
            .iter()
            .position(|(l, _)| l == &f.particle)
            .ok_or_else(|| Error::UnknownLabel(f.particle.0.clone()))?;
        if !(f.kappa >= 0.0) {
            return Err(Error::NegativeKappa { face: f.id(), kappa: f.kappa });
        }
        let slot = &mut kappas[ax][f.side.index()];
        if slot.is_some() {
            return Err(Error::InvalidParameter(format!("face {} given twice", f.id())));
        }
        *slot = Some(f.kappa);
    }
    let mut axes = Vec::with_capacity(grids.len());
    for (ax, (label, grid)) in grids.iter().enumerate() {
        let n = grid.n_points();
        let v = match potential.single(label) {
            Some(v) if v.len() != n => {
                return Err(Error::ShapeMismatch(format!(
                    "potential for {label} has {} samples, grid has {n}",
                    v.len()
                )))
            }
            Some(v) => v.to_vec(),
            None => vec![0.0; n],
        };
        let h = grid.spacing();
        axes.push(AxisOperator::new(
            label.clone(),
            h,
            h,
            &v,
            constants.mass(label),
            hbar,
            kappas[ax][0].unwrap_or(0.0),
            kappas[ax][1].unwrap_or(0.0),
        )?);
    }
    let pair = if potential.has_pairs() {
        let labels: Vec<ParticleLabel> = grids.iter().map(|(l, _)| l.clone()).collect();
        for (a, b) in potential.pair_labels() {
            for l in [a, b] {
                if !labels.contains(l) {
                    return Err(Error::UnknownLabel(l.0.clone()));
                }
            }
        }
        let shape: Vec<usize> = grids.iter().map(|(_, g)| g.n_points()).collect();
        let st = strides(&shape);
        let dim: usize = shape.iter().product();
        let mut p = vec![0.0; dim];
        for i in 0..labels.len() {
            for j in i + 1..labels.len() {
                if potential.pair(&labels[i], &labels[j], 0, 0).is_none() {
                    continue;
                }
                for (flat, pv) in p.iter_mut().enumerate() {
                    let ki = (flat / st[i]) % shape[i];
                    let kj = (flat / st[j]) % shape[j];
                    *pv += potential.pair(&labels[i], &labels[j], ki, kj).unwrap_or(0.0);
                }
            }
        }
        Some(p)
    } else {
        None
    };
    EffectiveHamiltonian::from_axes(hbar, grids.iter().map(|(_, g)| *g).collect(), axes, pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, Interval1D};

    fn grid(n: usize, len: f64) -> SpatialGrid {
        make_grid(Interval1D::new(0.0, len).unwrap(), n).unwrap()
    }

    #[test]
    fn reflecting_faces_give_hermitian_generator() {
        let c = PhysicalConstants::default();
        let h = EffectiveHamiltonian::single("A", &grid(11, 1.0), None, 0.0, 0.0, &c).unwrap();
        assert!(h.gamma_diagonal().iter().all(|g| *g == 0.0));
        assert!(h.to_dense(64).unwrap().hermiticity_defect() < 1e-15);
    }

    #[test]
    fn one_detecting_face_has_one_positive_gamma() {
        let c = PhysicalConstants::default();
        let h = EffectiveHamiltonian::single("A", &grid(11, 1.0), None, 0.0, 1.0, &c).unwrap();
        let g = h.gamma_diagonal();
        let nonzero: Vec<usize> = (0..g.len()).filter(|&k| g[k] != 0.0).collect();
        assert_eq!(nonzero, [10]);
        // ħ²κ/(m h) with h = 0.1
        assert!((g[10] - 10.0).abs() < 1e-12);
        let d = h.to_dense(64).unwrap();
        let herm = d.hermitian_part();
        assert!(herm.hermiticity_defect() < 1e-15);
        assert!((d[(10, 10)].im + 10.0).abs() < 1e-12);
    }

    #[test]
    fn negative_kappa_rejected() {
        let c = PhysicalConstants::default();
        let faces = [Face { particle: "A".into(), side: Side::Left, kappa: -1.0 }];
        let r = build_effective_hamiltonian(&[("A".into(), grid(11, 1.0))], &PotentialSpec::zero(), &faces, &c);
        assert!(matches!(r, Err(Error::NegativeKappa { .. })));
    }

    #[test]
    fn unsymmetrized_ghost_stencil_is_similar() {
        // Plain ghost-point elimination gives a non-symmetric boundary row;
        // the stored generator is D·H·D⁻¹ with D = diag(1/√2, 1, …, 1, 1/√2).
        let c = PhysicalConstants::default();
        let g = grid(9, 2.0);
        let (kl, kr) = (0.7, 1.3);
        let h = g.spacing();
        let v: Vec<f64> = (0..9).map(|k| (k as f64 * 0.4).cos()).collect();
        let hs = EffectiveHamiltonian::single("A", &g, Some(&v), kl, kr, &c).unwrap();
        let dense = hs.to_dense(64).unwrap();
        let cc = 1.0 / (2.0 * h * h);
        let mut raw = CMatrix::zeros(9, 9);
        for k in 0..9 {
            raw[(k, k)] = C64::new(2.0 * cc + v[k], 0.0);
            if k > 0 {
                raw[(k, k - 1)] = C64::new(-cc, 0.0);
            }
            if k < 8 {
                raw[(k, k + 1)] = C64::new(-cc, 0.0);
            }
        }
        // ghost left: ψ_{-1} = ψ_1 + 2ihκ_L ψ_0 ; ghost right: ψ_9 = ψ_7 + 2ihκ_R ψ_8
        raw[(0, 1)] += C64::new(-cc, 0.0);
        raw[(0, 0)] += C64::new(0.0, -cc * 2.0 * h * kl);
        raw[(8, 7)] += C64::new(-cc, 0.0);
        raw[(8, 8)] += C64::new(0.0, -cc * 2.0 * h * kr);
        let d: Vec<f64> = (0..9).map(|k| if k == 0 || k == 8 { core::f64::consts::FRAC_1_SQRT_2 } else { 1.0 }).collect();
        let sim = CMatrix::from_fn(9, 9, |i, j| raw[(i, j)] * (d[i] / d[j]));
        assert!(sim.sub(&dense).max_abs() < 1e-10);
    }

    #[test]
    fn interior_change_is_local() {
        let c = PhysicalConstants::default();
        let g = grid(12, 3.0);
        let mut v = vec![0.5; 12];
        let h1 = EffectiveHamiltonian::single("A", &g, Some(&v), 1.0, 2.0, &c).unwrap().to_dense(64).unwrap();
        v[5] = -3.0;
        let h2 = EffectiveHamiltonian::single("A", &g, Some(&v), 1.0, 2.0, &c).unwrap().to_dense(64).unwrap();
        let diff = h2.sub(&h1);
        for i in 0..12 {
            for j in 0..12 {
                if i != 5 && j != 5 {
                    assert_eq!(diff[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
    }
}
