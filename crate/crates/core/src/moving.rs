//! Detectors on moving boundaries.
//!
//! A particle's interval `[a(t), b(t)]` moves and stretches. Writing
//! `y = x − a`, `L = b − a`, `ξ = y/L` and
//!
//! ```text
//! ψ(t, x) = L^{-1/2} · exp(iΘ) · χ(t, ξ),   Θ = (m/ħ)(ȧx + L̇y²/(2L)) + θ(t),   θ' = −mȧ²/(2ħ)
//! ```
//!
//! turns the moving-boundary problem into one on the fixed interval `[0, 1]`
//! with kinetic coefficient `ħ²/(2mL²)`, potential
//! `V(a + Lξ) + mäx + mL̈y²/(2L)` and Robin coefficient `κ_t − mv_n/ħ` on each
//! face, where `v_n` is the outward normal speed of that face. Admissibility
//! `ħκ_t/m ≥ v_n` is exactly the statement that this coefficient is
//! nonnegative, and the co-moving norm loss of a step equals
//! `dt·(ħκ_t/m − v_n)|ψ|²` at the face. For a uniformly translating interval
//! with detector sensitivity `κ` the co-moving problem is the static one, so
//! the Galilean boost holds to rounding.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::detection::{distribution_from_losses, NEGATIVE_FLUX_TOL};
use crate::domain::{
    make_grid, strides, DetectionDistribution, FaceId, Interval1D, ParticleLabel, PhysicalConstants,
    PotentialSpec, Side, SpatialGrid, WaveFunction1P, WaveFunctionNP, ENDPOINT_GAUGE,
};
use crate::error::{Error, Result};
use crate::evolution::{step_count, CnStepper, CONTRACTION_TOL};
use crate::hamiltonian::{AxisOperator, EffectiveHamiltonian};
use crate::C64;

/// Tolerance of the admissibility inequality.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

/// One knot of a piecewise-cubic endpoint trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub da: f64,
    pub db: f64,
}

/// `a(t)` and `b(t)` as cubic Hermite splines through the knots; linear
/// continuation outside them.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTrajectory {
    knots: Vec<Knot>,
}

/// Position, velocity and acceleration of one endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointMotion {
    pub x: f64,
    pub v: f64,
    pub acc: f64,
}

impl DomainTrajectory {
    pub fn new(knots: Vec<Knot>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidParameter("domain trajectory needs at least one knot".into()));
        }
        for k in &knots {
            if ![k.t, k.a, k.b, k.da, k.db].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite trajectory knot".into()));
            }
            if !(k.a < k.b) {
                return Err(Error::DomainCollapsed { time: k.t, a: k.a, b: k.b });
            }
        }
        if knots.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidParameter("knot times must be increasing".into()));
        }
        Ok(Self { knots })
    }

    /// Fixed interval.
    pub fn fixed(interval: Interval1D) -> Self {
        Self { knots: vec![Knot { t: 0.0, a: interval.a(), b: interval.b(), da: 0.0, db: 0.0 }] }
    }

    /// `a(t) = a0 + vt`, `b(t) = b0 + vt`.
    pub fn translating(interval: Interval1D, v: f64) -> Self {
        Self { knots: vec![Knot { t: 0.0, a: interval.a(), b: interval.b(), da: v, db: v }] }
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    fn side(&self, t: f64, pick: impl Fn(&Knot) -> (f64, f64)) -> EndpointMotion {
        let ks = &self.knots;
        let first = &ks[0];
        let last = &ks[ks.len() - 1];
        if t <= first.t {
            let (x, v) = pick(first);
            return EndpointMotion { x: x + v * (t - first.t), v, acc: 0.0 };
        }
        if t >= last.t {
            let (x, v) = pick(last);
            return EndpointMotion { x: x + v * (t - last.t), v, acc: 0.0 };
        }
        let i = ks.partition_point(|k| k.t <= t) - 1;
        let (k0, k1) = (&ks[i], &ks[i + 1]);
        let h = k1.t - k0.t;
        let s = (t - k0.t) / h;
        let (p0, m0) = pick(k0);
        let (p1, m1) = pick(k1);
        let (m0, m1) = (m0 * h, m1 * h);
        let (s2, s3) = (s * s, s * s * s);
        let x = (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * m1;
        let v = ((6.0 * s2 - 6.0 * s) * p0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * p1 + (3.0 * s2 - 2.0 * s) * m1) / h;
        let acc = ((12.0 * s - 6.0) * p0 + (6.0 * s - 4.0) * m0 + (-12.0 * s + 6.0) * p1 + (6.0 * s - 2.0) * m1) / (h * h);
        EndpointMotion { x, v, acc }
    }

    pub fn left(&self, t: f64) -> EndpointMotion {
        self.side(t, |k| (k.a, k.da))
    }

    pub fn right(&self, t: f64) -> EndpointMotion {
        self.side(t, |k| (k.b, k.db))
    }

    /// Outward normal speed of a face: `db/dt` on the right, `−da/dt` on the left.
    pub fn normal_speed(&self, side: Side, t: f64) -> f64 {
        match side {
            Side::Left => -self.left(t).v,
            Side::Right => self.right(t).v,
        }
    }

    pub fn interval(&self, t: f64) -> Result<Interval1D> {
        let (a, b) = (self.left(t).x, self.right(t).x);
        if !(a < b) {
            return Err(Error::DomainCollapsed { time: t, a, b });
        }
        Interval1D::new(a, b)
    }
}

/// Instantaneous state of one moving face.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingFaceState {
    pub face: FaceId,
    pub time: f64,
    pub v_n: f64,
    pub kappa_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostSpec {
    pub v: f64,
}

/// `κ + m·v_n/ħ`: the boundary coefficient of a detector with sensitivity `κ`
/// on a face moving with outward speed `v_n`.
pub fn kappa_effective(kappa_detector: f64, v_n: f64, mass: f64, hbar: f64) -> f64 {
    kappa_detector + mass * v_n / hbar
}

/// Checks `ħκ_t/m ≥ v_n` up to [`ADMISSIBILITY_TOL`].
pub fn check_admissibility(state: &MovingFaceState, constants: &PhysicalConstants) -> Result<()> {
    let speed = constants.hbar() * state.kappa_t / constants.mass(&state.face.particle);
    if speed >= state.v_n - ADMISSIBILITY_TOL {
        Ok(())
    } else {
        Err(Error::Admissibility {
            time: state.time,
            face: state.face.clone(),
            kappa_t: state.kappa_t,
            speed,
            v_n: state.v_n,
        })
    }
}

/// `ħκ_t/m − v_n`, the coefficient of `|ψ|²` in the moving detection density.
pub fn admissibility_margin(state: &MovingFaceState, constants: &PhysicalConstants) -> f64 {
    constants.hbar() * state.kappa_t / constants.mass(&state.face.particle) - state.v_n
}

/// `ψ̃_t(x) = exp(im(vx − v²t/2)/ħ)·ψ_t(x − vt)` on the grid shifted by `vt`.
pub fn galilean_boost(psi: &WaveFunction1P, boost: BoostSpec, t: f64, mass: f64, hbar: f64) -> WaveFunction1P {
    let v = boost.v;
    if v == 0.0 {
        return psi.clone();
    }
    let grid = psi.grid().shifted(v * t);
    let amps = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(k, z)| z * C64::from_polar(1.0, mass * (v * grid.point(k) - 0.5 * v * v * t) / hbar))
        .collect();
    WaveFunction1P::from_amplitudes(grid, amps, psi.time()).expect("shape preserved")
}

/// Face coefficient seen after a boost by `v`: `κ + m·v·n/ħ`.
pub fn boosted_kappa(kappa: f64, side: Side, v: f64, mass: f64, hbar: f64) -> f64 {
    kappa_effective(kappa, v * side.outward_normal(), mass, hbar)
}

/// How a face's boundary coefficient `κ_t` is determined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaRule {
    /// A detector of sensitivity `κ ≥ 0` riding the face: `κ_t = κ + m v_n/ħ`.
    Detector(f64),
    /// A fixed `κ_t`, possibly negative; admissibility is checked every step.
    Prescribed(f64),
}

impl KappaRule {
    pub fn kappa_t(&self, v_n: f64, mass: f64, hbar: f64) -> f64 {
        match *self {
            KappaRule::Detector(k) => kappa_effective(k, v_n, mass, hbar),
            KappaRule::Prescribed(k) => k,
        }
    }
}

/// Single-particle potential of a moving run.
#[derive(Clone, Default)]
pub enum MovingPotential {
    #[default]
    Zero,
    /// Samples on the reference grid; the potential rides with the domain.
    CoMoving(Vec<f64>),
    /// `V(t, x)` in the lab frame.
    Lab(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for MovingPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MovingPotential::Zero => f.write_str("Zero"),
            MovingPotential::CoMoving(v) => f.debug_tuple("CoMoving").field(v).finish(),
            MovingPotential::Lab(_) => f.write_str("Lab(<fn>)"),
        }
    }
}

/// One particle of a moving-domain run.
#[derive(Debug, Clone)]
pub struct MovingParticle {
    pub label: ParticleLabel,
    pub trajectory: DomainTrajectory,
    pub n_points: usize,
    /// (left, right) boundary rules.
    pub kappas: [KappaRule; 2],
    pub potential: MovingPotential,
}

impl MovingParticle {
    pub fn face_state(&self, side: Side, t: f64, constants: &PhysicalConstants) -> MovingFaceState {
        let v_n = self.trajectory.normal_speed(side, t);
        let kappa_t = self.kappas[side.index()].kappa_t(v_n, constants.mass(&self.label), constants.hbar());
        MovingFaceState { face: FaceId::new(self.label.clone(), side), time: t, v_n, kappa_t }
    }

    fn reference_grid(&self) -> Result<SpatialGrid> {
        make_grid(Interval1D::new(0.0, 1.0)?, self.n_points)
    }

    pub fn lab_grid(&self, t: f64) -> Result<SpatialGrid> {
        make_grid(self.trajectory.interval(t)?, self.n_points)
    }

    /// `Θ(t, x) − θ(t)`.
    fn phase(&self, t: f64, x: f64, constants: &PhysicalConstants) -> f64 {
        let (l, r) = (self.trajectory.left(t), self.trajectory.right(t));
        let len = r.x - l.x;
        let y = x - l.x;
        let m = constants.mass(&self.label);
        m / constants.hbar() * (l.v * x + (r.v - l.v) * y * y / (2.0 * len))
    }

    /// Co-moving axis operator at time `t`.
    fn axis_operator(&self, t: f64, constants: &PhysicalConstants) -> Result<AxisOperator> {
        let (l, r) = (self.trajectory.left(t), self.trajectory.right(t));
        let len = r.x - l.x;
        if !(len > 0.0) {
            return Err(Error::DomainCollapsed { time: t, a: l.x, b: r.x });
        }
        let n = self.n_points;
        let eta = 1.0 / (n - 1) as f64;
        let m = constants.mass(&self.label);
        let hbar = constants.hbar();
        let len_acc = r.acc - l.acc;
        let mut v = vec![0.0; n];
        for (k, vk) in v.iter_mut().enumerate() {
            let xi = if k + 1 == n { 1.0 } else { k as f64 * eta };
            let y = len * xi;
            let x = l.x + y;
            let base = match &self.potential {
                MovingPotential::Zero => 0.0,
                MovingPotential::CoMoving(s) => s[k],
                MovingPotential::Lab(f) => f(t, x),
            };
            *vk = base + m * l.acc * x + m * len_acc * y * y / (2.0 * len);
        }
        let mut coeff = [0.0; 2];
        for side in [Side::Left, Side::Right] {
            let st = self.face_state(side, t, constants);
            check_admissibility(&st, constants)?;
            coeff[side.index()] = (st.kappa_t - m * st.v_n / hbar).max(0.0);
        }
        AxisOperator::new(self.label.clone(), len * eta, eta, &v, m, hbar, coeff[0], coeff[1])
    }

    fn validate(&self) -> Result<()> {
        if self.n_points < 3 {
            return Err(Error::TooFewPoints(self.n_points));
        }
        if let MovingPotential::CoMoving(s) = &self.potential {
            if s.len() != self.n_points {
                return Err(Error::ShapeMismatch(format!(
                    "co-moving potential of {} has {} samples for {} points",
                    self.label,
                    s.len(),
                    self.n_points
                )));
            }
        }
        for (i, k) in self.kappas.iter().enumerate() {
            if let KappaRule::Detector(k) = k {
                if !(*k >= 0.0) {
                    let side = if i == 0 { Side::Left } else { Side::Right };
                    return Err(Error::NegativeKappa { face: FaceId::new(self.label.clone(), side), kappa: *k });
                }
            }
        }
        Ok(())
    }
}

/// Checks that both faces of every particle are admissible and the domains
/// non-degenerate at `t0`, every step edge and every step midpoint.
pub fn check_run_admissibility(
    particles: &[MovingParticle],
    constants: &PhysicalConstants,
    t0: f64,
    t_final: f64,
    dt: f64,
) -> Result<()> {
    let (n, dt_eff) = step_count(t0, t_final, dt)?;
    for j in 0..=2 * n {
        let t = t0 + 0.5 * j as f64 * dt_eff;
        for p in particles {
            p.trajectory.interval(t)?;
            for side in [Side::Left, Side::Right] {
                check_admissibility(&p.face_state(side, t, constants), constants)?;
            }
        }
    }
    Ok(())
}

/// Result of [`evolve_moving`]: co-moving states plus what is needed to map
/// them back to the lab frame.
#[derive(Debug, Clone)]
pub struct MovingRun {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub cadence: usize,
    pub particles: Vec<MovingParticle>,
    pub constants: PhysicalConstants,
    pub faces: Vec<FaceId>,
    /// Co-moving states `χ` on the reference grids.
    pub snapshots: Vec<WaveFunctionNP>,
    /// `θ_i` for every particle at every snapshot.
    pub thetas: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub step_losses: Vec<Vec<f64>>,
    /// Face states at every step midpoint, in `faces` order.
    pub midpoint_faces: Vec<Vec<MovingFaceState>>,
}

impl MovingRun {
    /// Lab-frame wave function of snapshot `i`.
    pub fn lab_state(&self, i: usize) -> Result<WaveFunctionNP> {
        let chi = &self.snapshots[i];
        let t = chi.time();
        let grids: Vec<SpatialGrid> = self.particles.iter().map(|p| p.lab_grid(t)).collect::<Result<_>>()?;
        let factors: Vec<Vec<C64>> = self
            .particles
            .iter()
            .zip(&grids)
            .zip(&self.thetas[i])
            .map(|((p, g), th)| {
                let len = g.interval().length();
                g.points()
                    .iter()
                    .map(|x| C64::from_polar(len.powf(-0.5), p.phase(t, *x, &self.constants) + th))
                    .collect()
            })
            .collect();
        let shape = chi.shape();
        let st = strides(&shape);
        let amps = chi
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(flat, z)| {
                let mut f = *z;
                for ax in 0..shape.len() {
                    f *= factors[ax][(flat / st[ax]) % shape[ax]];
                }
                f
            })
            .collect();
        WaveFunctionNP::from_amplitudes(chi.labels().to_vec(), grids, amps, t)
    }

    pub fn final_lab_state(&self) -> Result<WaveFunctionNP> {
        self.lab_state(self.snapshots.len() - 1)
    }
}

/// Co-moving amplitudes of a lab-frame state at `t0` (θ = 0).
fn to_comoving(psi: &WaveFunctionNP, particles: &[MovingParticle], constants: &PhysicalConstants) -> Result<WaveFunctionNP> {
    let t = psi.time();
    let mut factors = Vec::with_capacity(particles.len());
    let mut ref_grids = Vec::with_capacity(particles.len());
    for (ax, p) in particles.iter().enumerate() {
        let lab = p.lab_grid(t)?;
        let g = psi.grids()[ax];
        let tol = 1e-9 * lab.interval().length();
        if g.n_points() != p.n_points
            || (g.interval().a() - lab.interval().a()).abs() > tol
            || (g.interval().b() - lab.interval().b()).abs() > tol
        {
            return Err(Error::ShapeMismatch(format!(
                "initial grid of {} does not match the domain [{}, {}] at t0",
                p.label,
                lab.interval().a(),
                lab.interval().b()
            )));
        }
        let len = lab.interval().length();
        factors.push(
            lab.points()
                .iter()
                .map(|x| C64::from_polar(len.sqrt(), -p.phase(t, *x, constants)))
                .collect::<Vec<C64>>(),
        );
        ref_grids.push(p.reference_grid()?);
    }
    let shape = psi.shape();
    let st = strides(&shape);
    let amps = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(flat, z)| {
            let mut f = *z;
            for ax in 0..shape.len() {
                f *= factors[ax][(flat / st[ax]) % shape[ax]];
            }
            f
        })
        .collect();
    WaveFunctionNP::from_amplitudes(psi.labels().to_vec(), ref_grids, amps, t)
}

/// Evolves a lab-frame state `ψ0` (on the domain grid at its time stamp) to
/// `t_final`, keeping co-moving snapshots every `cadence` steps.
///
/// `pair` holds interaction terms sampled on the reference grids.
pub fn evolve_moving_np(
    psi0: &WaveFunctionNP,
    particles: &[MovingParticle],
    pair: &PotentialSpec,
    constants: &PhysicalConstants,
    t_final: f64,
    dt: f64,
    cadence: usize,
) -> Result<MovingRun> {
    if particles.len() != psi0.labels().len()
        || particles.iter().zip(psi0.labels()).any(|(p, l)| &p.label != l)
    {
        return Err(Error::ShapeMismatch("particles must match the wave function labels in order".into()));
    }
    for p in particles {
        p.validate()?;
    }
    let t0 = psi0.time();
    check_run_admissibility(particles, constants, t0, t_final, dt)?;
    let (n, dt_eff) = step_count(t0, t_final, dt)?;
    let chi0 = to_comoving(psi0, particles, constants)?;
    let ref_grids = chi0.grids().to_vec();
    let pair_tensor = if pair.has_pairs() {
        let labels: Vec<ParticleLabel> = particles.iter().map(|p| p.label.clone()).collect();
        let shape: Vec<usize> = particles.iter().map(|p| p.n_points).collect();
        let st = strides(&shape);
        let dim: usize = shape.iter().product();
        let mut v = vec![0.0; dim];
        for i in 0..labels.len() {
            for j in i + 1..labels.len() {
                if pair.pair(&labels[i], &labels[j], 0, 0).is_none() {
                    continue;
                }
                for (flat, vf) in v.iter_mut().enumerate() {
                    let (ki, kj) = ((flat / st[i]) % shape[i], (flat / st[j]) % shape[j]);
                    *vf += pair.pair(&labels[i], &labels[j], ki, kj).unwrap_or(0.0);
                }
            }
        }
        Some(v)
    } else {
        None
    };
    let faces: Vec<FaceId> = particles
        .iter()
        .flat_map(|p| [FaceId::new(p.label.clone(), Side::Left), FaceId::new(p.label.clone(), Side::Right)])
        .collect();
    let mut cur = chi0.clone();
    let mut theta = vec![0.0; particles.len()];
    let mut snapshots = vec![chi0.clone()];
    let mut thetas = vec![theta.clone()];
    let mut norms = vec![chi0.norm_squared()];
    let mut step_losses = Vec::with_capacity(n);
    let mut midpoint_faces = Vec::with_capacity(n);
    // 3-point Gauss nodes on [0, 1]
    let gx = [0.5 - 0.5 * (0.6f64).sqrt(), 0.5, 0.5 + 0.5 * (0.6f64).sqrt()];
    let gw = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    for k in 1..=n {
        let ta = t0 + (k - 1) as f64 * dt_eff;
        let tm = ta + 0.5 * dt_eff;
        let axes = particles.iter().map(|p| p.axis_operator(tm, constants)).collect::<Result<Vec<_>>>()?;
        let h = EffectiveHamiltonian::from_axes(constants.hbar(), ref_grids.clone(), axes, pair_tensor.clone())?;
        let stepper = CnStepper::new(&h, dt_eff)?;
        let before = *norms.last().unwrap();
        let loss = stepper.step_symmetric(cur.amplitudes_mut());
        let after = cur.norm_squared();
        if after > before * (1.0 + CONTRACTION_TOL) + f64::MIN_POSITIVE {
            return Err(Error::ContractionViolated { before, after });
        }
        let tb = if k == n { t_final } else { t0 + k as f64 * dt_eff };
        cur.set_time(tb);
        for (i, p) in particles.iter().enumerate() {
            let m = constants.mass(&p.label);
            let integral: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(s, w)| {
                    let v = p.trajectory.left(ta + s * dt_eff).v;
                    w * v * v
                })
                .sum::<f64>()
                * dt_eff;
            theta[i] -= m * integral / (2.0 * constants.hbar());
        }
        let states: Vec<MovingFaceState> = particles
            .iter()
            .flat_map(|p| [p.face_state(Side::Left, tm, constants), p.face_state(Side::Right, tm, constants)])
            .collect();
        for (st, l) in states.iter().zip(&loss) {
            if *l < -NEGATIVE_FLUX_TOL {
                return Err(Error::NegativeIntegrand { time: tm, side: st.face.side, value: *l / dt_eff });
            }
        }
        norms.push(after);
        step_losses.push(loss);
        midpoint_faces.push(states);
        if k == n || (cadence > 0 && k % cadence == 0) {
            snapshots.push(cur.clone());
            thetas.push(theta.clone());
        }
    }
    Ok(MovingRun {
        t0,
        dt: dt_eff,
        n_steps: n,
        cadence,
        particles: particles.to_vec(),
        constants: constants.clone(),
        faces,
        snapshots,
        thetas,
        norms,
        step_losses,
        midpoint_faces,
    })
}

/// Single-particle [`evolve_moving_np`].
pub fn evolve_moving(
    psi0: &WaveFunction1P,
    particle: &MovingParticle,
    constants: &PhysicalConstants,
    t_final: f64,
    dt: f64,
    cadence: usize,
) -> Result<MovingRun> {
    let np = psi0.clone().into_np(particle.label.clone());
    evolve_moving_np(&np, core::slice::from_ref(particle), &PotentialSpec::zero(), constants, t_final, dt, cadence)
}

/// Detection law of a moving run: the bin mass of a face is the co-moving
/// norm loss through it, `∫ dt (ħκ_t/m − v_n)|ψ|²`.
pub fn moving_detection_distribution(run: &MovingRun, steps_per_bin: usize) -> Result<DetectionDistribution> {
    let spb = steps_per_bin.max(1);
    if !run.n_steps.is_multiple_of(spb) {
        return Err(Error::InvalidParameter(format!(
            "{} steps do not split into bins of {spb}",
            run.n_steps
        )));
    }
    for (s, (losses, states)) in run.step_losses.iter().zip(&run.midpoint_faces).enumerate() {
        for (l, st) in losses.iter().zip(states) {
            if *l < -NEGATIVE_FLUX_TOL {
                return Err(Error::NegativeIntegrand {
                    time: run.t0 + (s as f64 + 0.5) * run.dt,
                    side: st.face.side,
                    value: *l / run.dt,
                });
            }
        }
    }
    let n0 = run.norms[0];
    let losses: Vec<Vec<f64>> = run.step_losses.iter().map(|l| l.iter().map(|x| x / n0).collect()).collect();
    let norms: Vec<f64> = run.norms.iter().map(|x| x / n0).collect();
    Ok(distribution_from_losses(run.t0, run.dt, spb, run.faces.clone(), &losses, &norms))
}

/// `(ħκ_t/m − v_n)|ψ(face)|²` at the start of every step from the stored
/// snapshots (requires cadence 1); the point-value form of the density.
pub fn moving_flux_density(run: &MovingRun, snapshot: usize) -> Result<Vec<f64>> {
    let chi = &run.snapshots[snapshot];
    if run.particles.len() != 1 {
        return Err(Error::InvalidParameter("point density is defined for one particle".into()));
    }
    let p = &run.particles[0];
    let t = chi.time();
    let len = p.trajectory.interval(t)?.length();
    let n = chi.amplitudes().len();
    let mut out = Vec::with_capacity(2);
    for (side, k) in [(Side::Left, 0usize), (Side::Right, n - 1)] {
        let st = p.face_state(side, t, &run.constants);
        let psi2 = (chi.amplitudes()[k] / ENDPOINT_GAUGE).norm_sqr() / len;
        out.push(admissibility_margin(&st, &run.constants) * psi2);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::detection_run;
    use crate::domain::gaussian_packet;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn kappa_effective_values() {
        assert_eq!(kappa_effective(1.0, 0.0, 1.0, 1.0), 1.0);
        assert_eq!(kappa_effective(1.0, 0.5, 1.0, 1.0), 1.5);
        assert_eq!(kappa_effective(1.0, -2.0, 1.0, 1.0), -1.0);
    }

    #[test]
    fn admissibility_cases() {
        let c = consts();
        let f = FaceId::new("A", Side::Right);
        let bad = MovingFaceState { face: f.clone(), time: 0.3, v_n: 2.0, kappa_t: 1.0 };
        match check_admissibility(&bad, &c) {
            Err(Error::Admissibility { time, face, .. }) => {
                assert_eq!(time, 0.3);
                assert_eq!(face, f);
            }
            other => panic!("{other:?}"),
        }
        let edge = MovingFaceState { face: f.clone(), time: 0.0, v_n: 1.0, kappa_t: 1.0 };
        assert!(check_admissibility(&edge, &c).is_ok());
        let neg = MovingFaceState { face: f, time: 0.0, v_n: -2.0, kappa_t: kappa_effective(1.0, -2.0, 1.0, 1.0) };
        assert!(check_admissibility(&neg, &c).is_ok());
    }

    #[test]
    fn boost_identities() {
        let g = make_grid(Interval1D::new(0.0, 20.0).unwrap(), 201).unwrap();
        let psi = gaussian_packet(&g, 10.0, 1.0, 0.5).unwrap();
        assert_eq!(galilean_boost(&psi, BoostSpec { v: 0.0 }, 3.0, 1.0, 1.0), psi);
        let b0 = galilean_boost(&psi, BoostSpec { v: 0.7 }, 0.0, 1.0, 1.0);
        for k in 0..201 {
            assert!((b0.amplitudes()[k].norm() - psi.amplitudes()[k].norm()).abs() < 1e-15);
        }
        let there = galilean_boost(&psi, BoostSpec { v: 0.7 }, 2.5, 1.0, 1.0);
        let back = galilean_boost(&there, BoostSpec { v: -0.7 }, 2.5, 1.0, 1.0);
        for k in 0..201 {
            assert!((back.amplitudes()[k] - psi.amplitudes()[k]).norm() < 1e-12);
        }
        assert!((there.norm_squared() - psi.norm_squared()).abs() < 1e-15);
    }

    #[test]
    fn trajectory_hermite_interpolates_knots() {
        let tr = DomainTrajectory::new(vec![
            Knot { t: 0.0, a: 0.0, b: 10.0, da: 0.0, db: 1.0 },
            Knot { t: 2.0, a: 0.5, b: 12.0, da: 0.5, db: 0.0 },
        ])
        .unwrap();
        assert!((tr.left(2.0).x - 0.5).abs() < 1e-15);
        assert!((tr.right(0.0).v - 1.0).abs() < 1e-15);
        assert!((tr.left(2.0).v - 0.5).abs() < 1e-12);
        // finite-difference check of velocity and acceleration
        let t = 0.7;
        let e = 1e-5;
        let fd_v = (tr.right(t + e).x - tr.right(t - e).x) / (2.0 * e);
        let fd_a = (tr.right(t + e).v - tr.right(t - e).v) / (2.0 * e);
        assert!((fd_v - tr.right(t).v).abs() < 1e-8);
        assert!((fd_a - tr.right(t).acc).abs() < 1e-6);
        assert_eq!(tr.right(5.0).x, 12.0);
        assert_eq!(tr.normal_speed(Side::Left, 1.0), -tr.left(1.0).v);
    }

    fn particle(tr: DomainTrajectory, n: usize, kl: KappaRule, kr: KappaRule) -> MovingParticle {
        MovingParticle { label: "A".into(), trajectory: tr, n_points: n, kappas: [kl, kr], potential: MovingPotential::Zero }
    }

    #[test]
    fn fixed_domain_reduces_to_static_evolution() {
        let iv = Interval1D::new(0.0, 20.0).unwrap();
        let g = make_grid(iv, 161).unwrap();
        let psi = gaussian_packet(&g, 10.0, 1.0, 1.5).unwrap();
        let p = particle(DomainTrajectory::fixed(iv), 161, KappaRule::Detector(1.0), KappaRule::Detector(1.5));
        let run = evolve_moving(&psi, &p, &consts(), 6.0, 0.02, 0).unwrap();
        let h = EffectiveHamiltonian::single("A", &g, None, 1.0, 1.5, &consts()).unwrap();
        let st = detection_run(&psi, &h, 6.0, 0.02, 1, 0).unwrap();
        let lab = run.final_lab_state().unwrap();
        let diff = lab
            .amplitudes()
            .iter()
            .zip(st.trajectory.final_state().amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        let dm = moving_detection_distribution(&run, 1).unwrap();
        for f in 0..2 {
            for k in 0..dm.n_bins() {
                assert!((dm.bins[f][k] - st.distribution.bins[f][k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn violating_run_rejected_before_stepping() {
        let iv = Interval1D::new(0.0, 20.0).unwrap();
        let g = make_grid(iv, 101).unwrap();
        let psi = gaussian_packet(&g, 10.0, 1.0, 0.0).unwrap();
        let tr = DomainTrajectory::new(vec![Knot { t: 0.0, a: 0.0, b: 20.0, da: 0.0, db: 2.0 }]).unwrap();
        let p = particle(tr, 101, KappaRule::Detector(0.0), KappaRule::Prescribed(1.0));
        assert!(matches!(evolve_moving(&psi, &p, &consts(), 1.0, 0.01, 0), Err(Error::Admissibility { .. })));
    }

    #[test]
    fn equality_face_collects_nothing() {
        let iv = Interval1D::new(0.0, 20.0).unwrap();
        let g = make_grid(iv, 201).unwrap();
        let psi = gaussian_packet(&g, 12.0, 1.0, 1.0).unwrap();
        let tr = DomainTrajectory::new(vec![Knot { t: 0.0, a: 0.0, b: 20.0, da: 0.3, db: 0.5 }]).unwrap();
        // ħκ_t/m = v_n on the right face throughout
        let p = particle(tr, 201, KappaRule::Detector(1.0), KappaRule::Prescribed(0.5));
        let run = evolve_moving(&psi, &p, &consts(), 8.0, 0.02, 0).unwrap();
        let d = moving_detection_distribution(&run, 5).unwrap();
        assert!(d.face_total(&FaceId::new("A", Side::Right)) < 1e-10);
        assert!((d.total() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn translating_interval_is_boosted_static_run() {
        let iv = Interval1D::new(0.0, 20.0).unwrap();
        let g = make_grid(iv, 161).unwrap();
        let psi = gaussian_packet(&g, 10.0, 1.0, 1.0).unwrap();
        let v = 0.8;
        let h = EffectiveHamiltonian::single("A", &g, None, 1.0, 1.0, &consts()).unwrap();
        let st = detection_run(&psi, &h, 5.0, 0.02, 1, 0).unwrap();
        let p = particle(DomainTrajectory::translating(iv, v), 161, KappaRule::Detector(1.0), KappaRule::Detector(1.0));
        let start = galilean_boost(&psi, BoostSpec { v }, 0.0, 1.0, 1.0);
        let run = evolve_moving(&start, &p, &consts(), 5.0, 0.02, 0).unwrap();
        let lab = run.final_lab_state().unwrap().into_1p().unwrap();
        let boosted = galilean_boost(st.trajectory.final_state(), BoostSpec { v }, 5.0, 1.0, 1.0);
        let diff = lab
            .amplitudes()
            .iter()
            .zip(boosted.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
    }
}
