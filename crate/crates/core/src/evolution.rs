//! Crank-Nicolson evolution under `H_eff` and the dense `exp(−isH/ħ)` oracle.
//!
//! On a tensor grid the step is the split Cayley product
//! `D · C_{n−1} ⋯ C_1 C_0 · D`, where `C_i` is the Cayley transform of particle
//! `i`'s axis operator acting along its tensor lines and `D` is half a step of
//! the interaction phase. For one particle this is plain Crank-Nicolson; for
//! non-interacting particles it factorizes exactly over product states. Each
//! `C_i` loses exactly `(2dt/ħ)·⟨m|Γ_i|m⟩` with `m` the sub-step midpoint, so
//! the per-face norm bookkeeping is exact. The `C_i` commute; [`evolve`]
//! averages the per-face split of each step's loss over all axis orders so
//! that no particle is favoured.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::domain::{strides, FaceId, NormSquared, SpatialGrid, WaveFunction1P, WaveFunctionNP};
use crate::error::{Error, Result};
use crate::hamiltonian::EffectiveHamiltonian;
use crate::linalg::{expm, CMatrix, TridiagonalLu};
use crate::C64;

/// Default dimension cap of the dense oracle.
pub const DENSE_CAP: usize = 4096;

/// Per-step relative tolerance of the contraction assertion.
pub const CONTRACTION_TOL: f64 = 1e-12;

/// Wave functions the stepper can advance.
pub trait GridState: Clone + NormSquared {
    fn grid_list(&self) -> Vec<SpatialGrid>;
    fn amps(&self) -> &[C64];
    fn amps_mut(&mut self) -> &mut [C64];
    fn stamp(&self) -> f64;
    fn set_stamp(&mut self, t: f64);
}

impl GridState for WaveFunction1P {
    fn grid_list(&self) -> Vec<SpatialGrid> {
        vec![*self.grid()]
    }
    fn amps(&self) -> &[C64] {
        self.amplitudes()
    }
    fn amps_mut(&mut self) -> &mut [C64] {
        self.amplitudes_mut()
    }
    fn stamp(&self) -> f64 {
        self.time()
    }
    fn set_stamp(&mut self, t: f64) {
        self.set_time(t)
    }
}

impl GridState for WaveFunctionNP {
    fn grid_list(&self) -> Vec<SpatialGrid> {
        self.grids().to_vec()
    }
    fn amps(&self) -> &[C64] {
        self.amplitudes()
    }
    fn amps_mut(&mut self) -> &mut [C64] {
        self.amplitudes_mut()
    }
    fn stamp(&self) -> f64 {
        self.time()
    }
    fn set_stamp(&mut self, t: f64) {
        self.set_time(t)
    }
}

#[derive(Debug, Clone)]
struct AxisCayley {
    lu: TridiagonalLu,
    rhs_diag: Vec<C64>,
    rhs_off: Vec<C64>,
    gamma: [f64; 2],
}

/// Factorized split Cayley step for a fixed `H_eff` and `dt`.
#[derive(Debug, Clone)]
pub struct CnStepper {
    hbar: f64,
    dt: f64,
    shape: Vec<usize>,
    strides: Vec<usize>,
    axes: Vec<AxisCayley>,
    half_phase: Option<Vec<C64>>,
    cell_weight: f64,
}

impl CnStepper {
    pub fn new(h: &EffectiveHamiltonian, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("time step must be > 0, got {dt}")));
        }
        let hbar = h.hbar();
        let tau = dt / (2.0 * hbar);
        let i = C64::new(0.0, 1.0);
        let mut axes = Vec::with_capacity(h.axes().len());
        for op in h.axes() {
            let n = op.len();
            let mut gam = vec![0.0; n];
            gam[0] += op.gamma(crate::Side::Left);
            gam[n - 1] += op.gamma(crate::Side::Right);
            let lhs_diag: Vec<C64> =
                (0..n).map(|k| C64::new(1.0 + tau * gam[k], tau * op.diag()[k])).collect();
            let rhs_diag = (0..n).map(|k| C64::new(1.0 - tau * gam[k], -tau * op.diag()[k])).collect();
            let lhs_off: Vec<C64> = op.off().iter().map(|o| i * (tau * o)).collect();
            let rhs_off = op.off().iter().map(|o| -i * (tau * o)).collect();
            axes.push(AxisCayley {
                lu: TridiagonalLu::new(&lhs_off, &lhs_diag, &lhs_off)?,
                rhs_diag,
                rhs_off,
                gamma: [op.gamma(crate::Side::Left), op.gamma(crate::Side::Right)],
            });
        }
        let half_phase = h
            .pair_potential()
            .map(|p| p.iter().map(|v| C64::from_polar(1.0, -v * dt / (2.0 * hbar))).collect());
        let shape = h.shape();
        Ok(Self {
            hbar,
            dt,
            strides: strides(&shape),
            shape,
            axes,
            half_phase,
            cell_weight: h.cell_weight(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn n_faces(&self) -> usize {
        2 * self.axes.len()
    }

    /// Advances `x` (stored amplitudes) by one step, axes in index order, and
    /// returns the probability lost through each face, in `face_ids()` order.
    ///
    /// With `mid_slices`, face `f`'s slot receives the sub-step midpoint
    /// restricted to that face: a row-major tensor over the other axes.
    pub fn step(&self, x: &mut [C64], mid_slices: Option<&mut [Vec<C64>]>) -> Vec<f64> {
        let order: Vec<usize> = (0..self.axes.len()).collect();
        self.sweep(x, &order, true, mid_slices)
    }

    /// One step with the axis solves in the given order.
    pub fn step_ordered(&self, x: &mut [C64], order: &[usize], mid_slices: Option<&mut [Vec<C64>]>) -> Vec<f64> {
        self.sweep(x, order, true, mid_slices)
    }

    /// The tail of a step: the axis solves in `rest`, then the closing half
    /// phase. Continues a step interrupted after its other axes.
    pub fn finish_step(&self, x: &mut [C64], rest: &[usize], mid_slices: Option<&mut [Vec<C64>]>) -> Vec<f64> {
        self.sweep(x, rest, false, mid_slices)
    }

    /// All axis orders, lexicographic.
    pub fn orderings(&self) -> Vec<Vec<usize>> {
        permutations(self.axes.len())
    }

    /// One step whose face losses are averaged over all axis orders.
    ///
    /// The axis factors commute, so the new state does not depend on the
    /// order; only the split of the loss between faces does.
    pub fn step_symmetric(&self, x: &mut [C64]) -> Vec<f64> {
        if self.axes.len() < 2 {
            return self.step(x, None);
        }
        let orders = self.orderings();
        let mut acc = vec![0.0; self.n_faces()];
        let mut out = Vec::new();
        for order in &orders {
            let mut y = x.to_vec();
            let l = self.sweep(&mut y, order, true, None);
            acc.iter_mut().zip(&l).for_each(|(a, b)| *a += b);
            out = y;
        }
        x.copy_from_slice(&out);
        let w = 1.0 / orders.len() as f64;
        acc.iter_mut().for_each(|a| *a *= w);
        acc
    }

    fn sweep(
        &self,
        x: &mut [C64],
        order: &[usize],
        opening_phase: bool,
        mut mid_slices: Option<&mut [Vec<C64>]>,
    ) -> Vec<f64> {
        assert_eq!(x.len(), self.shape.iter().product::<usize>());
        if opening_phase {
            if let Some(p) = &self.half_phase {
                x.iter_mut().zip(p).for_each(|(z, d)| *z *= d);
            }
        }
        if let Some(sl) = mid_slices.as_deref_mut() {
            sl.iter_mut().for_each(|v| v.clear());
        }
        let mut losses = vec![0.0; self.n_faces()];
        let nmax = self.shape.iter().copied().max().unwrap_or(0);
        let mut line = vec![C64::new(0.0, 0.0); nmax];
        let mut rhs = vec![C64::new(0.0, 0.0); nmax];
        for &ax in order {
            let cay = &self.axes[ax];
            let n = self.shape[ax];
            let stride = self.strides[ax];
            let outer = x.len() / (n * stride);
            let want = [cay.gamma[0] > 0.0 || mid_slices.is_some(), cay.gamma[1] > 0.0 || mid_slices.is_some()];
            if let Some(sl) = mid_slices.as_deref_mut() {
                for s in 0..2 {
                    sl[2 * ax + s].resize(outer * stride, C64::new(0.0, 0.0));
                }
            }
            let mut acc = [0.0f64; 2];
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    for k in 0..n {
                        line[k] = x[base + k * stride];
                    }
                    for k in 0..n {
                        let mut r = cay.rhs_diag[k] * line[k];
                        if k > 0 {
                            r += cay.rhs_off[k - 1] * line[k - 1];
                        }
                        if k + 1 < n {
                            r += cay.rhs_off[k] * line[k + 1];
                        }
                        rhs[k] = r;
                    }
                    cay.lu.solve_in_place(&mut rhs[..n]);
                    for (s, k) in [(0usize, 0usize), (1, n - 1)] {
                        if want[s] {
                            let m = (line[k] + rhs[k]) * 0.5;
                            acc[s] += m.norm_sqr();
                            if let Some(sl) = mid_slices.as_deref_mut() {
                                sl[2 * ax + s][o * stride + inner] = m;
                            }
                        }
                    }
                    for k in 0..n {
                        x[base + k * stride] = rhs[k];
                    }
                }
            }
            for s in 0..2 {
                losses[2 * ax + s] = 2.0 * self.dt / self.hbar * self.cell_weight * cay.gamma[s] * acc[s];
            }
        }
        if let Some(p) = &self.half_phase {
            x.iter_mut().zip(p).for_each(|(z, d)| *z *= d);
        }
        losses
    }

    /// `n×n` Cayley matrix of one axis.
    pub fn axis_cayley(&self, ax: usize) -> CMatrix {
        let n = self.shape[ax];
        let cay = &self.axes[ax];
        let mut out = CMatrix::zeros(n, n);
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            for k in 0..n {
                let mut r = cay.rhs_diag[k] * if k == j { 1.0 } else { 0.0 };
                if k > 0 && k - 1 == j {
                    r += cay.rhs_off[k - 1];
                }
                if k + 1 < n && k + 1 == j {
                    r += cay.rhs_off[k];
                }
                col[k] = r;
            }
            cay.lu.solve_in_place(&mut col);
            for k in 0..n {
                out[(k, j)] = col[k];
            }
        }
        out
    }

    /// Axis Cayley matrix embedded in the full tensor space.
    pub fn axis_cayley_full(&self, ax: usize) -> CMatrix {
        embed(&self.axis_cayley(ax), &self.shape, ax)
    }

    /// Diagonal of the half-step interaction phase, if any.
    pub fn half_phase(&self) -> Option<&[C64]> {
        self.half_phase.as_deref()
    }

    /// Dense matrix of the whole step.
    pub fn dense_matrix(&self) -> CMatrix {
        let dim: usize = self.shape.iter().product();
        let mut m = CMatrix::identity(dim);
        let mut e = vec![C64::new(0.0, 0.0); dim];
        for j in 0..dim {
            e.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            e[j] = C64::new(1.0, 0.0);
            self.step(&mut e, None);
            for i in 0..dim {
                m[(i, j)] = e[i];
            }
        }
        m
    }
}

/// `I ⊗ ⋯ ⊗ A ⊗ ⋯ ⊗ I` with `A` on axis `ax`.
pub fn embed(a: &CMatrix, shape: &[usize], ax: usize) -> CMatrix {
    let before: usize = shape[..ax].iter().product();
    let after: usize = shape[ax + 1..].iter().product();
    CMatrix::identity(before).kron(a).kron(&CMatrix::identity(after))
}

fn check_shape<S: GridState>(psi: &S, h: &EffectiveHamiltonian) -> Result<()> {
    if psi.grid_list().as_slice() != h.grids() {
        return Err(Error::ShapeMismatch("wave function grids differ from the Hamiltonian's".into()));
    }
    Ok(())
}

/// One Crank-Nicolson step of `ψ` under `H_eff`.
pub fn cn_step<S: GridState>(psi: &S, h: &EffectiveHamiltonian, dt: f64) -> Result<S> {
    check_shape(psi, h)?;
    let stepper = CnStepper::new(h, dt)?;
    let mut out = psi.clone();
    let before = out.norm_squared();
    stepper.step(out.amps_mut(), None);
    let after = out.norm_squared();
    if after > before * (1.0 + CONTRACTION_TOL) + f64::MIN_POSITIVE {
        return Err(Error::ContractionViolated { before, after });
    }
    out.set_stamp(psi.stamp() + dt);
    Ok(out)
}

/// Number of equal steps covering `[t0, t_final]` with step at most `dt`
/// (up to rounding), and the exact step length.
pub fn step_count(t0: f64, t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("time step must be > 0, got {dt}")));
    }
    if !(t_final >= t0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "final time {t_final} precedes initial time {t0}"
        )));
    }
    let span = t_final - t0;
    if span == 0.0 {
        return Ok((0, dt));
    }
    let n = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((n, span / n as f64))
}

/// Output of [`evolve`].
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub faces: Vec<FaceId>,
    /// Snapshot every `cadence` steps; the final state is always included.
    pub snapshots: Vec<S>,
    pub cadence: usize,
    /// `‖ψ‖²` after every step, starting with the initial state.
    pub norms: Vec<f64>,
    /// Probability lost through each face during each step.
    pub step_losses: Vec<Vec<f64>>,
}

impl<S: GridState> Trajectory<S> {
    pub fn final_state(&self) -> &S {
        self.snapshots.last().expect("trajectory holds at least the initial state")
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }
}

/// Repeated [`cn_step`] from `ψ0` to `t_final`.
///
/// The step is shrunk so that an integer number of steps lands on `t_final`.
/// `cadence = 0` keeps only the initial and final states.
pub fn evolve<S: GridState>(
    psi0: &S,
    h: &EffectiveHamiltonian,
    t_final: f64,
    dt: f64,
    cadence: usize,
) -> Result<Trajectory<S>> {
    check_shape(psi0, h)?;
    let t0 = psi0.stamp();
    let (n, dt_eff) = step_count(t0, t_final, dt)?;
    let mut snapshots = vec![psi0.clone()];
    let mut norms = vec![psi0.norm_squared()];
    let mut step_losses = Vec::with_capacity(n);
    if n > 0 {
        let stepper = CnStepper::new(h, dt_eff)?;
        let mut cur = psi0.clone();
        for k in 1..=n {
            let before = *norms.last().unwrap();
            let loss = stepper.step_symmetric(cur.amps_mut());
            cur.set_stamp(if k == n { t_final } else { t0 + k as f64 * dt_eff });
            let after = cur.norm_squared();
            if after > before * (1.0 + CONTRACTION_TOL) + f64::MIN_POSITIVE {
                return Err(Error::ContractionViolated { before, after });
            }
            norms.push(after);
            step_losses.push(loss);
            if k == n || (cadence > 0 && k % cadence == 0) {
                snapshots.push(cur.clone());
            }
        }
    }
    Ok(Trajectory {
        t0,
        dt: dt_eff,
        n_steps: n,
        faces: h.face_ids(),
        snapshots,
        cadence,
        norms,
        step_losses,
    })
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

/// Dense `W_s = exp(−isH_eff/ħ)` on stored amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub matrix: CMatrix,
    pub duration: f64,
}

impl Propagator {
    pub fn apply<S: GridState>(&self, psi: &S) -> S {
        let mut out = psi.clone();
        let v = self.matrix.mul_vec(psi.amps());
        out.amps_mut().copy_from_slice(&v);
        out.set_stamp(psi.stamp() + self.duration);
        out
    }

    pub fn operator_norm(&self) -> f64 {
        self.matrix.operator_norm()
    }
}

pub fn dense_propagator(h: &EffectiveHamiltonian, s: f64) -> Result<Propagator> {
    dense_propagator_capped(h, s, DENSE_CAP)
}

pub fn dense_propagator_capped(h: &EffectiveHamiltonian, s: f64, cap: usize) -> Result<Propagator> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("duration must be >= 0, got {s}")));
    }
    let hd = h.to_dense(cap)?;
    let matrix = expm(&hd.scale(C64::new(0.0, -s / h.hbar())))?;
    Ok(Propagator { matrix, duration: s })
}
