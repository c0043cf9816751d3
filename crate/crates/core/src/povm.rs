//! Explicit POVM operators on small grids.
//!
//! The elements are assembled from the same split Cayley step as the
//! evolution: a click on face `f` during step `k` corresponds to
//! `(2dt/ħ)·Γ_f·K†K`, where `K` maps the initial amplitudes to the sub-step
//! midpoint restricted to the face. Completeness then holds to rounding,
//! because every step's norm loss is exactly the sum of its face terms.
//! Operators act on stored amplitudes; probabilities are `cell·a†Ea`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::domain::{strides, FaceId, ParticleLabel, Side, SpatialGrid, WaveFunctionNP};
use crate::error::{Error, Result};
use crate::evolution::{dense_propagator, permutations, step_count, CnStepper};
use crate::hamiltonian::EffectiveHamiltonian;
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::multiparticle::{boundary_side, SystemParams};
use crate::C64;

/// Largest grid per particle accepted by the builders.
pub const POVM_GRID_CAP: usize = 64;

/// Largest tensor dimension of a two-particle joint POVM.
pub const JOINT_DIM_CAP: usize = 32 * 32;

#[derive(Debug, Clone, PartialEq)]
pub enum PovmBin {
    /// Click on `face` during `[t_start, t_end)`.
    Time { index: usize, t_start: f64, t_end: f64, face: FaceId },
    Infinity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PovmElement {
    pub operator: CMatrix,
    pub bin: PovmBin,
}

impl PovmElement {
    pub fn hermiticity_defect(&self) -> f64 {
        self.operator.hermiticity_defect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.operator.hermitian_part()).first().copied().unwrap_or(0.0)
    }
}

/// Elements of the first-click POVM with bins of whole steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePovm {
    pub t0: f64,
    pub dt: f64,
    pub bin_dt: f64,
    pub n_bins: usize,
    pub faces: Vec<FaceId>,
    pub dims: Vec<usize>,
    /// Quadrature weight of one tensor cell.
    pub cell: f64,
    /// Face-major, `elements[f·n_bins + k]`.
    pub elements: Vec<PovmElement>,
    pub infinity: PovmElement,
    /// `‖W†W(t_max) − W†W(t_max − bin_dt)‖` as a convergence indicator of the
    /// truncated infinity element.
    pub tail_change: f64,
}

impl StagePovm {
    pub fn element(&self, face: usize, bin: usize) -> &PovmElement {
        &self.elements[face * self.n_bins + bin]
    }

    /// `⟨ψ|E|ψ⟩`.
    pub fn probability(&self, element: &PovmElement, amplitudes: &[C64]) -> f64 {
        self.cell * element.operator.expectation(amplitudes).re
    }

    pub fn completeness_residual(&self) -> f64 {
        let dim = self.infinity.operator.rows();
        let mut sum = self.infinity.operator.clone();
        for e in &self.elements {
            sum.add_assign(&e.operator);
        }
        residual_from_identity(&sum, dim)
    }

    pub fn report(&self) -> PovmReport {
        let all = self.elements.iter().chain(core::iter::once(&self.infinity));
        let mut min_eigenvalue = f64::INFINITY;
        let mut hermiticity_defect: f64 = 0.0;
        for e in all {
            min_eigenvalue = min_eigenvalue.min(e.min_eigenvalue());
            hermiticity_defect = hermiticity_defect.max(e.hermiticity_defect());
        }
        PovmReport {
            min_eigenvalue,
            completeness_residual: self.completeness_residual(),
            hermiticity_defect,
            bin_count: self.elements.len() + 1,
            dims: self.dims.clone(),
        }
    }
}

/// Summary of a POVM check.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmReport {
    pub min_eigenvalue: f64,
    pub completeness_residual: f64,
    pub hermiticity_defect: f64,
    pub bin_count: usize,
    pub dims: Vec<usize>,
}

/// Spectral norm of `sum − I` for Hermitian `sum`.
fn residual_from_identity(sum: &CMatrix, dim: usize) -> f64 {
    let d = sum.sub(&CMatrix::identity(dim)).hermitian_part();
    let ev = hermitian_eigenvalues(&d);
    ev.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// One click of a stage sweep: step `s`, variant weight, face, the axes left
/// in the step after it, and the map to the face slice.
struct Click<'a> {
    step: usize,
    face: usize,
    weight: f64,
    rest: Vec<usize>,
    map: &'a CMatrix,
}

/// Runs a stage on every unit vector at once, calling `visit` for every
/// weighted click and returning the propagator over the whole stage.
fn stage_sweep(
    h: &EffectiveHamiltonian,
    dt: f64,
    n_local: usize,
    resume: Option<&[usize]>,
    mut visit: impl FnMut(Click<'_>) -> Result<()>,
) -> Result<CMatrix> {
    let stepper = CnStepper::new(h, dt)?;
    let dim = h.dim();
    let n_ax = h.axes().len();
    let nf = stepper.n_faces();
    let shape = h.shape();
    let orders = permutations(n_ax);
    let gammas: Vec<f64> = h.axes().iter().flat_map(|a| [a.gamma(Side::Left), a.gamma(Side::Right)]).collect();
    let mut cols: Vec<Vec<C64>> = (0..dim)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); dim];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();
    let scale = 2.0 * dt / h.hbar();
    for s in 0..n_local {
        let resuming = s == 0 && resume.is_some();
        let variants: Vec<&[usize]> = if resuming {
            vec![resume.unwrap()]
        } else {
            orders.iter().map(|o| o.as_slice()).collect()
        };
        let nv = variants.len() as f64;
        let mut next = Vec::new();
        for order in &variants {
            let mut maps: Vec<CMatrix> = (0..nf).map(|f| CMatrix::zeros(dim / shape[f / 2], dim)).collect();
            let mut out = Vec::with_capacity(dim);
            for (j, c) in cols.iter().enumerate() {
                let mut y = c.clone();
                let mut sl = vec![Vec::new(); nf];
                if resuming {
                    stepper.finish_step(&mut y, order, Some(&mut sl));
                } else {
                    stepper.step_ordered(&mut y, order, Some(&mut sl));
                }
                for (f, slice) in sl.iter().enumerate() {
                    for (r, z) in slice.iter().enumerate() {
                        maps[f][(r, j)] = *z;
                    }
                }
                out.push(y);
            }
            for &ax in order.iter() {
                let pos = order.iter().position(|a| *a == ax).unwrap();
                let rest: Vec<usize> = order[pos + 1..].iter().map(|a| if *a > ax { a - 1 } else { *a }).collect();
                for f in [2 * ax, 2 * ax + 1] {
                    if gammas[f] > 0.0 {
                        visit(Click { step: s, face: f, weight: scale * gammas[f] / nv, rest: rest.clone(), map: &maps[f] })?;
                    }
                }
            }
            next = out;
        }
        cols = next;
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| cols[j][i]))
}

fn check_caps(h: &EffectiveHamiltonian, dim_cap: usize) -> Result<()> {
    for g in h.grids() {
        if g.n_points() > POVM_GRID_CAP {
            return Err(Error::DimensionCap { dim: g.n_points(), cap: POVM_GRID_CAP });
        }
    }
    if h.dim() > dim_cap {
        return Err(Error::DimensionCap { dim: h.dim(), cap: dim_cap });
    }
    Ok(())
}

/// Steps and step size on `[t0, t_max]` with a whole number of bins.
pub fn binned_steps(t0: f64, t_max: f64, dt: f64, steps_per_bin: usize) -> Result<(usize, f64)> {
    if !(t_max > t0) {
        return Err(Error::InvalidParameter(format!("t_max {t_max} must exceed t0 {t0}")));
    }
    let spb = steps_per_bin.max(1);
    let (n, _) = step_count(t0, t_max, dt)?;
    let n = n.div_ceil(spb) * spb;
    Ok((n, (t_max - t0) / n as f64))
}

fn stage_povm(
    h: &EffectiveHamiltonian,
    t0: f64,
    dt: f64,
    start_step: usize,
    n_local: usize,
    n_bins: usize,
    spb: usize,
    resume: Option<&[usize]>,
) -> Result<StagePovm> {
    let dim = h.dim();
    let faces = h.face_ids();
    let nf = faces.len();
    let mut ops = vec![CMatrix::zeros(dim, dim); nf * n_bins];
    let mut prev_tail = CMatrix::identity(dim);
    let mut last_bin_start = None;
    let tail = stage_sweep(h, dt, n_local, resume, |c| {
        let k = (start_step + c.step) / spb;
        let e = c.map.adjoint_matmul(c.map);
        ops[c.face * n_bins + k].axpy(C64::new(c.weight, 0.0), &e);
        Ok(())
    })?;
    if n_local >= spb {
        // propagator up to the start of the last bin, for the tail indicator
        let n_prev = n_local - spb;
        let w = stage_sweep(h, dt, n_prev, resume, |_| Ok(()))?;
        prev_tail = w.adjoint_matmul(&w);
        last_bin_start = Some(n_prev);
    }
    let inf = tail.adjoint_matmul(&tail);
    let tail_change = if last_bin_start.is_some() { inf.sub(&prev_tail).operator_norm() } else { 0.0 };
    let mut elements = Vec::with_capacity(nf * n_bins);
    for (f, face) in faces.iter().enumerate() {
        for k in 0..n_bins {
            elements.push(PovmElement {
                operator: core::mem::replace(&mut ops[f * n_bins + k], CMatrix::zeros(0, 0)),
                bin: PovmBin::Time {
                    index: k,
                    t_start: t0 + (k * spb) as f64 * dt,
                    t_end: t0 + ((k + 1) * spb) as f64 * dt,
                    face: face.clone(),
                },
            });
        }
    }
    Ok(StagePovm {
        t0,
        dt,
        bin_dt: dt * spb as f64,
        n_bins,
        faces,
        dims: h.shape(),
        cell: h.cell_weight(),
        elements,
        infinity: PovmElement { operator: inf, bin: PovmBin::Infinity },
        tail_change,
    })
}

/// First-click POVM of `H_eff` on `[t0, t_max]`, `steps_per_bin` steps per
/// time bin, plus the infinity element `W†W(t_max)`.
pub fn build_single_povm(
    h: &EffectiveHamiltonian,
    t0: f64,
    t_max: f64,
    dt: f64,
    steps_per_bin: usize,
) -> Result<StagePovm> {
    check_caps(h, crate::evolution::DENSE_CAP)?;
    let spb = steps_per_bin.max(1);
    let (n, dt) = binned_steps(t0, t_max, dt, spb)?;
    stage_povm(h, t0, dt, 0, n, n / spb, spb, None)
}

/// `√(2Γ_f h/ħ)·⟨x_i = x|·W_s`: maps the current labels' space to the
/// space without `detected`.
#[derive(Debug, Clone, PartialEq)]
pub struct LOperator {
    pub matrix: CMatrix,
    pub detected: ParticleLabel,
    pub side: Side,
    pub location: f64,
    pub duration: f64,
    pub labels_after: Vec<ParticleLabel>,
    pub grids_after: Vec<SpatialGrid>,
}

impl LOperator {
    /// `Lψ` as a wave function of the remaining particles.
    pub fn apply(&self, psi: &WaveFunctionNP) -> Result<WaveFunctionNP> {
        if psi.amplitudes().len() != self.matrix.cols() {
            return Err(Error::ShapeMismatch("state does not match the operator".into()));
        }
        WaveFunctionNP::from_amplitudes(
            self.labels_after.clone(),
            self.grids_after.clone(),
            self.matrix.mul_vec(psi.amplitudes()),
            psi.time() + self.duration,
        )
    }
}

/// Builds `L` for a click of `detected` at the boundary point `x` after
/// evolving for `duration` under `h`.
///
/// `‖Lψ‖²` is the first-click density per unit time at that face.
pub fn build_l_operator(
    h: &EffectiveHamiltonian,
    detected: &ParticleLabel,
    x: f64,
    duration: f64,
) -> Result<LOperator> {
    check_caps(h, JOINT_DIM_CAP)?;
    let ax = h.axis_of(detected)?;
    let grid = h.grids()[ax];
    let side = boundary_side(&grid, x).ok_or_else(|| Error::NotOnBoundary { label: detected.0.clone(), x })?;
    let w = dense_propagator(h, duration)?;
    let shape = h.shape();
    let st = strides(&shape);
    let b = if side == Side::Left { 0 } else { shape[ax] - 1 };
    let op = &h.axes()[ax];
    let c = (2.0 * op.gamma(side) * op.weight() / h.hbar()).sqrt();
    let rows: Vec<usize> = (0..h.dim()).filter(|flat| (flat / st[ax]) % shape[ax] == b).collect();
    let matrix = CMatrix::from_fn(rows.len(), h.dim(), |r, j| w.matrix[(rows[r], j)] * c);
    let mut labels_after = h.labels();
    labels_after.remove(ax);
    let mut grids_after = h.grids().to_vec();
    grids_after.remove(ax);
    Ok(LOperator { matrix, detected: detected.clone(), side, location: x, duration, labels_after, grids_after })
}

/// Cell of the joint POVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum JointBin {
    /// First click `(f1, k1)`, second `(f2, k2)`; faces index `faces`.
    Pair { f1: usize, k1: usize, f2: usize, k2: usize },
    /// First click `(f1, k1)`, no second click by `t_max`.
    SecondNever { f1: usize, k1: usize },
    Never,
}

/// Summary of a joint POVM build.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPovmReport {
    pub faces: Vec<FaceId>,
    pub n_bins: usize,
    pub bin_dt: f64,
    pub dims: Vec<usize>,
    pub bin_count: usize,
    pub min_eigenvalue: f64,
    pub hermiticity_defect: f64,
    pub completeness_residual: f64,
    /// Operator norm of the summed elements with `k2 < k1`.
    pub reversed_time_norm: f64,
    /// `⟨Ψ|F(bin)|Ψ⟩` for the supplied states, per bin.
    pub expectations: Vec<BTreeMap<JointBin, f64>>,
}

/// Two-particle joint POVM `F` of `(Z¹, Z²)` with time bins of
/// `steps_per_bin` steps. Every element is streamed to `visit` once complete;
/// expectations are recorded for `states`.
pub fn build_joint_povm(
    labels: &[ParticleLabel],
    grids: &[SpatialGrid],
    params: &SystemParams,
    t0: f64,
    t_max: f64,
    dt: f64,
    steps_per_bin: usize,
    states: &[&WaveFunctionNP],
    check_positivity: bool,
    mut visit: impl FnMut(JointBin, &CMatrix),
) -> Result<JointPovmReport> {
    if labels.len() != 2 || grids.len() != 2 {
        return Err(Error::InvalidParameter("joint POVM needs two particles".into()));
    }
    let h = params.hamiltonian_on(labels, grids)?;
    check_caps(&h, JOINT_DIM_CAP)?;
    let spb = steps_per_bin.max(1);
    let (n, dt) = binned_steps(t0, t_max, dt, spb)?;
    let nb = n / spb;
    let dim = h.dim();
    let faces = h.face_ids();
    for s in states {
        if s.amplitudes().len() != dim {
            return Err(Error::ShapeMismatch("state does not match the joint grid".into()));
        }
    }
    let reduced: Vec<(SystemParams, Vec<ParticleLabel>, Vec<SpatialGrid>, EffectiveHamiltonian)> = (0..2)
        .map(|ax| {
            let p = params.restrict(&labels[ax]);
            let l = vec![labels[1 - ax].clone()];
            let g = vec![grids[1 - ax]];
            let hr = p.hamiltonian_on(&l, &g)?;
            Ok((p, l, g, hr))
        })
        .collect::<Result<_>>()?;
    // second-stage POVMs by (start step, detected axis, rest)
    let mut second: BTreeMap<(usize, usize, Vec<usize>), StagePovm> = BTreeMap::new();
    let mut acc: BTreeMap<JointBin, CMatrix> = BTreeMap::new();
    let mut total = CMatrix::zeros(dim, dim);
    let mut reversed = CMatrix::zeros(dim, dim);
    let mut min_eigenvalue = f64::INFINITY;
    let mut hermiticity_defect: f64 = 0.0;
    let mut bin_count = 0usize;
    let mut expectations = vec![BTreeMap::new(); states.len()];
    let cell = h.cell_weight();
    let mut current_bin = 0usize;
    let mut flush = |acc: &mut BTreeMap<JointBin, CMatrix>,
                     total: &mut CMatrix,
                     reversed: &mut CMatrix,
                     min_eigenvalue: &mut f64,
                     hermiticity_defect: &mut f64,
                     bin_count: &mut usize,
                     expectations: &mut Vec<BTreeMap<JointBin, f64>>| {
        for (bin, op) in core::mem::take(acc) {
            if check_positivity {
                *min_eigenvalue = min_eigenvalue.min(
                    hermitian_eigenvalues(&op.hermitian_part()).first().copied().unwrap_or(0.0),
                );
            }
            *hermiticity_defect = hermiticity_defect.max(op.hermiticity_defect());
            total.add_assign(&op);
            if let JointBin::Pair { k1, k2, .. } = bin {
                if k2 < k1 {
                    reversed.add_assign(&op);
                }
            }
            for (e, s) in expectations.iter_mut().zip(states) {
                e.insert(bin, cell * op.expectation(s.amplitudes()).re);
            }
            *bin_count += 1;
            visit(bin, &op);
        }
    };
    let tail = stage_sweep(&h, dt, n, None, |c| {
        let k1 = c.step / spb;
        if k1 != current_bin {
            flush(
                &mut acc,
                &mut total,
                &mut reversed,
                &mut min_eigenvalue,
                &mut hermiticity_defect,
                &mut bin_count,
                &mut expectations,
            );
            current_bin = k1;
        }
        let ax = c.face / 2;
        let key = (c.step, ax, c.rest.clone());
        if !second.contains_key(&key) {
            let (_, _, _, hr) = &reduced[ax];
            let sp = stage_povm(hr, t0, dt, c.step, n - c.step, nb, spb, Some(&c.rest))?;
            second.insert(key.clone(), sp);
        }
        let sp = &second[&key];
        let sandwich = |e: &CMatrix| c.map.adjoint_matmul(&e.matmul(c.map)).scale(C64::new(c.weight, 0.0));
        let other_face = |g: usize| if ax == 0 { 2 + g } else { g };
        for (g, _) in sp.faces.iter().enumerate() {
            for k2 in 0..nb {
                let e = &sp.element(g, k2).operator;
                if e.max_abs() == 0.0 {
                    continue;
                }
                let bin = JointBin::Pair { f1: c.face, k1, f2: other_face(g), k2 };
                acc.entry(bin).or_insert_with(|| CMatrix::zeros(dim, dim)).add_assign(&sandwich(e));
            }
        }
        let bin = JointBin::SecondNever { f1: c.face, k1 };
        acc.entry(bin).or_insert_with(|| CMatrix::zeros(dim, dim)).add_assign(&sandwich(&sp.infinity.operator));
        // second stages of earlier steps are no longer needed
        second.retain(|(s, _, _), _| *s >= c.step);
        Ok(())
    })?;
    acc.insert(JointBin::Never, tail.adjoint_matmul(&tail));
    flush(
        &mut acc,
        &mut total,
        &mut reversed,
        &mut min_eigenvalue,
        &mut hermiticity_defect,
        &mut bin_count,
        &mut expectations,
    );
    Ok(JointPovmReport {
        faces,
        n_bins: nb,
        bin_dt: dt * spb as f64,
        dims: h.shape(),
        bin_count,
        min_eigenvalue: if check_positivity { min_eigenvalue } else { f64::NAN },
        hermiticity_defect,
        completeness_residual: residual_from_identity(&total, dim),
        reversed_time_norm: reversed.operator_norm(),
        expectations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::detection_distribution;
    use crate::domain::{gaussian_packet, make_grid, Face, Interval1D, PhysicalConstants, PotentialSpec};
    use crate::multiparticle::joint_distribution_small;

    fn grid(n: usize) -> SpatialGrid {
        make_grid(Interval1D::new(0.0, 8.0).unwrap(), n).unwrap()
    }

    fn single_h(n: usize, kl: f64, kr: f64) -> EffectiveHamiltonian {
        EffectiveHamiltonian::single(ParticleLabel::from("A"), &grid(n), None, kl, kr, &PhysicalConstants::default()).unwrap()
    }

    #[test]
    fn single_povm_axioms_and_flux_agreement() {
        let h = single_h(24, 1.0, 2.0);
        let p = build_single_povm(&h, 0.0, 3.0, 0.05, 3).unwrap();
        let r = p.report();
        assert!(r.completeness_residual < 1e-10, "{}", r.completeness_residual);
        assert!(r.min_eigenvalue > -1e-12);
        assert!(r.hermiticity_defect < 1e-12);
        let psi = gaussian_packet(&grid(24), 4.0, 0.65, 1.3).unwrap();
        let d = detection_distribution(&psi, &h, 3.0, 0.05).unwrap().coarsen(3);
        for f in 0..2 {
            for k in 0..p.n_bins {
                let q = p.probability(p.element(f, k), psi.amplitudes());
                assert!((q - d.bins[f][k]).abs() < 1e-12);
            }
        }
        assert!((p.probability(&p.infinity, psi.amplitudes()) - d.tail).abs() < 1e-12);
    }

    #[test]
    fn l_operator_at_zero_duration_is_a_scaled_slice() {
        let g = grid(10);
        let params = SystemParams::new(
            PhysicalConstants::default(),
            PotentialSpec::zero(),
            vec![Face::new("A", Side::Right, 1.5).unwrap()],
        );
        let h = params.hamiltonian_on(&["A".into(), "B".into()], &[g, g]).unwrap();
        let l = build_l_operator(&h, &"A".into(), 8.0, 0.0).unwrap();
        assert_eq!(l.matrix.rows(), 10);
        let c = (2.0 * h.axes()[0].gamma(Side::Right) * g.spacing()).sqrt();
        for r in 0..10 {
            for j in 0..100 {
                let want = if j == 90 + r { c } else { 0.0 };
                assert!((l.matrix[(r, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
        assert!(build_l_operator(&h, &"A".into(), 3.0, 0.0).is_err());
    }

    #[test]
    fn joint_povm_matches_enumeration() {
        let g = make_grid(Interval1D::new(0.0, 6.0).unwrap(), 10).unwrap();
        let params = SystemParams::new(
            PhysicalConstants::default(),
            PotentialSpec::zero()
                .with_pair("A", "B", 10, 10, (0..100).map(|i| 0.1 * ((i / 10) as f64 - (i % 10) as f64).cos()).collect())
                .unwrap(),
            vec![Face::new("A", Side::Right, 1.0).unwrap(), Face::new("B", Side::Left, 0.5).unwrap()],
        );
        let psi = WaveFunctionNP::from_fn(vec!["A".into(), "B".into()], vec![g, g], 0.0, |x| {
            C64::from_polar((-(x[0] - 3.0).powi(2) - (x[1] - 3.0).powi(2) + 0.3 * x[0] * x[1]).exp(), x[0] - x[1])
        })
        .unwrap()
        .normalized();
        let labels = psi.labels().to_vec();
        let r = build_joint_povm(&labels, psi.grids(), &params, 0.0, 1.5, 0.1, 5, &[&psi], true, |_, _| {}).unwrap();
        assert!(r.completeness_residual < 1e-10, "{}", r.completeness_residual);
        assert!(r.min_eigenvalue > -1e-10);
        assert_eq!(r.reversed_time_norm, 0.0);
        let t = joint_distribution_small(&psi, &params, 1.5, 0.1, 5).unwrap();
        for (bin, p) in &r.expectations[0] {
            let want = match *bin {
                JointBin::Pair { f1, k1, f2, k2 } => t.mass(f1, k1, f2, k2),
                JointBin::SecondNever { f1, k1 } => t.second_never[f1 * t.n_bins + k1],
                JointBin::Never => t.never,
            };
            assert!((p - want).abs() < 1e-10, "{bin:?}: {p} vs {want}");
        }
    }
}
