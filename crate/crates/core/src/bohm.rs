//! Bohmian trajectories in an evolved wave function and their exit statistics.
//!
//! The velocity field `v_i = (ħ/m_i)·Im(∂_iψ/ψ)` is evaluated from
//! Catmull-Rom interpolants of every stored snapshot, linear in time between
//! snapshots. The interpolants obey the Robin condition at the faces, so the
//! outward velocity at a detecting face is exactly `ħκ/m`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use rand::Rng;

use crate::detection::{detection_run, normalized_input};
use crate::domain::{
    strides, DetectionDistribution, DetectionEvent, FaceId, ParticleLabel, PhysicalConstants, Side, SpatialGrid,
    WaveFunctionNP,
};
use crate::error::{Error, Result};
use crate::evolution::{evolve, GridState, Trajectory};
use crate::hamiltonian::EffectiveHamiltonian;
use crate::interp::SplineField;
use crate::moving::MovingRun;
use crate::multiparticle::{normalized_slice, DetectionRecord, SystemParams};
use crate::C64;

/// Density floor relative to the mean density `‖ψ‖²/volume`.
pub const NODE_FLOOR: f64 = 1e-12;

/// Wave-function snapshots prepared for velocity evaluation.
#[derive(Debug, Clone)]
pub struct BohmSeries {
    labels: Vec<ParticleLabel>,
    masses: Vec<f64>,
    hbar: f64,
    times: Vec<f64>,
    states: Vec<WaveFunctionNP>,
    fields: Vec<SplineField>,
    /// `[a, b]` of every axis at every snapshot.
    domains: Vec<Vec<[f64; 2]>>,
    /// Robin coefficients of every axis at every snapshot.
    kappas: Vec<Vec<[f64; 2]>>,
    floor: f64,
}

impl BohmSeries {
    /// From snapshots with their Robin coefficients; at least two snapshots
    /// with increasing times.
    pub fn new(states: Vec<WaveFunctionNP>, kappas: Vec<Vec<[f64; 2]>>, constants: &PhysicalConstants) -> Result<Self> {
        if states.len() < 2 || kappas.len() != states.len() {
            return Err(Error::InvalidParameter("a series needs at least two snapshots with kappas".into()));
        }
        if states.windows(2).any(|w| !(w[1].time() > w[0].time())) {
            return Err(Error::InvalidParameter("snapshot times must increase".into()));
        }
        let labels = states[0].labels().to_vec();
        let masses = labels.iter().map(|l| constants.mass(l)).collect();
        let fields = states
            .iter()
            .zip(&kappas)
            .map(|(s, k)| SplineField::from_amplitudes(s.grids(), k, s.amplitudes()))
            .collect();
        let domains = states
            .iter()
            .map(|s| s.grids().iter().map(|g| [g.interval().a(), g.interval().b()]).collect())
            .collect();
        let volume: f64 = states[0].grids().iter().map(|g| g.interval().length()).product();
        let floor = NODE_FLOOR * states[0].norm_squared() / volume;
        Ok(Self {
            labels,
            masses,
            hbar: constants.hbar(),
            times: states.iter().map(|s| s.time()).collect(),
            states,
            fields,
            domains,
            kappas,
            floor,
        })
    }

    /// From a fixed-domain run kept at every step.
    pub fn from_trajectory<S: GridState>(
        tr: &Trajectory<S>,
        h: &EffectiveHamiltonian,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        if tr.n_steps > 0 && tr.cadence != 1 {
            return Err(Error::InvalidParameter("Bohmian series needs a snapshot every step".into()));
        }
        let kap: Vec<[f64; 2]> = h.axes().iter().map(|a| [a.kappa(Side::Left), a.kappa(Side::Right)]).collect();
        let states = tr
            .snapshots
            .iter()
            .map(|s| WaveFunctionNP::from_amplitudes(h.labels(), s.grid_list(), s.amps().to_vec(), s.stamp()))
            .collect::<Result<Vec<_>>>()?;
        let n = states.len();
        Self::new(states, vec![kap; n], constants)
    }

    /// From a moving-domain run kept at every step, in the lab frame.
    pub fn from_moving_run(run: &MovingRun) -> Result<Self> {
        if run.n_steps > 0 && run.cadence != 1 {
            return Err(Error::InvalidParameter("Bohmian series needs a snapshot every step".into()));
        }
        let states = (0..run.snapshots.len()).map(|i| run.lab_state(i)).collect::<Result<Vec<_>>>()?;
        let kappas = states
            .iter()
            .map(|s| {
                run.particles
                    .iter()
                    .map(|p| {
                        [
                            p.face_state(Side::Left, s.time(), &run.constants).kappa_t,
                            p.face_state(Side::Right, s.time(), &run.constants).kappa_t,
                        ]
                    })
                    .collect()
            })
            .collect();
        Self::new(states, kappas, &run.constants)
    }

    pub fn labels(&self) -> &[ParticleLabel] {
        &self.labels
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn initial_state(&self) -> &WaveFunctionNP {
        &self.states[0]
    }

    pub fn state(&self, i: usize) -> &WaveFunctionNP {
        &self.states[i]
    }

    pub fn snapshot_count(&self) -> usize {
        self.states.len()
    }

    /// Snapshot interval containing `t` and the weight of its right end.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, t1) = (self.t_start(), self.t_end());
        let tol = 1e-12 * (t1 - t0).abs().max(1.0);
        if !(t >= t0 - tol && t <= t1 + tol) {
            return Err(Error::OutsideSeries(t));
        }
        let k = (self.times.partition_point(|s| *s <= t).max(1) - 1).min(self.times.len() - 2);
        let lam = ((t - self.times[k]) / (self.times[k + 1] - self.times[k])).clamp(0.0, 1.0);
        Ok((k, lam))
    }

    pub fn domain(&self, t: f64, ax: usize) -> Result<[f64; 2]> {
        let (k, l) = self.locate(t)?;
        let (p, q) = (self.domains[k][ax], self.domains[k + 1][ax]);
        Ok([p[0] + l * (q[0] - p[0]), p[1] + l * (q[1] - p[1])])
    }

    pub fn kappa(&self, t: f64, ax: usize, side: Side) -> Result<f64> {
        let (k, l) = self.locate(t)?;
        let s = side.index();
        Ok(self.kappas[k][ax][s] + l * (self.kappas[k + 1][ax][s] - self.kappas[k][ax][s]))
    }

    /// `ψ(t, x)` and `∇ψ(t, x)`. Between snapshots the interpolation is
    /// linear at fixed relative position in the domain.
    pub fn psi(&self, t: f64, x: &[f64], grad: &mut [C64]) -> Result<C64> {
        let (k, l) = self.locate(t)?;
        let d = x.len();
        let mut xs = vec![0.0; d];
        let mut scale = vec![0.0; d];
        let mut snapshot = |j: usize, out: &mut [C64]| {
            for ax in 0..d {
                let [p, q] = self.domains[j][ax];
                let [a, b] = self.domains[k][ax];
                let [a1, b1] = self.domains[k + 1][ax];
                let (at, bt) = (a + l * (a1 - a), b + l * (b1 - b));
                scale[ax] = (q - p) / (bt - at);
                xs[ax] = p + (x[ax] - at) * scale[ax];
            }
            let z = self.fields[j].eval(&xs, out);
            for (g, s) in out.iter_mut().zip(&scale) {
                *g *= *s;
            }
            z
        };
        if l == 0.0 {
            return Ok(snapshot(k, grad));
        }
        let mut g0 = vec![C64::new(0.0, 0.0); d];
        let a = snapshot(k, &mut g0);
        let b = snapshot(k + 1, grad);
        for (g, g0) in grad.iter_mut().zip(&g0) {
            *g = *g0 * (1.0 - l) + *g * l;
        }
        Ok(a * (1.0 - l) + b * l)
    }

    /// Bohmian velocity at `(t, x)`.
    pub fn velocity(&self, t: f64, x: &[f64], v: &mut [f64]) -> Result<()> {
        let d = x.len();
        let mut grad = vec![C64::new(0.0, 0.0); d];
        let psi = self.psi(t, x, &mut grad)?;
        let rho = psi.norm_sqr();
        if !(rho >= self.floor) {
            return Err(Error::NodeEncountered { time: t, x: x[0] });
        }
        for i in 0..d {
            v[i] = self.hbar / self.masses[i] * (psi.conj() * grad[i]).im / rho;
        }
        Ok(())
    }

    /// Stored boundary amplitudes of face `(ax, side)` at time `t`, linear
    /// between snapshots.
    fn boundary_slice(&self, t: f64, ax: usize, side: Side) -> Result<Vec<C64>> {
        let (k, l) = self.locate(t)?;
        let pick = |s: &WaveFunctionNP| {
            let shape = s.shape();
            let st = strides(&shape);
            let b = if side == Side::Left { 0 } else { shape[ax] - 1 };
            s.amplitudes()
                .iter()
                .enumerate()
                .filter(|(flat, _)| (flat / st[ax]) % shape[ax] == b)
                .map(|(_, z)| *z)
                .collect::<Vec<C64>>()
        };
        let (a, b) = (pick(&self.states[k]), pick(&self.states[k + 1]));
        Ok(a.iter().zip(&b).map(|(p, q)| p * (1.0 - l) + q * l).collect())
    }
}

/// `v(t, x)` of a series.
pub fn velocity_field(series: &BohmSeries, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let mut v = vec![0.0; x.len()];
    series.velocity(t, x, &mut v)?;
    Ok(v)
}

/// A Bohmian path up to its exit or the end of the series.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmTrajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub exit: DetectionEvent,
    /// Configuration at the exit, with the exiting coordinate on its face.
    pub exit_position: Option<Vec<f64>>,
    /// Outward velocity at the exit.
    pub exit_speed: Option<f64>,
    /// Crossings of reflecting faces, clamped back inside.
    pub faults: usize,
}

/// RK4 integration of `dX/dt = v(t, X)` from `(t_start, x0)` with step
/// `dt_traj`; exits are located by linear interpolation inside the step.
pub fn integrate_trajectory(
    series: &BohmSeries,
    x0: &[f64],
    t_start: f64,
    dt_traj: f64,
    record: bool,
) -> Result<BohmTrajectory> {
    if !(dt_traj > 0.0) || !dt_traj.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("trajectory step must be > 0, got {dt_traj}")));
    }
    let d = x0.len();
    if d != series.labels.len() {
        return Err(Error::ShapeMismatch("position dimension differs from the series".into()));
    }
    let t_end = series.t_end();
    for ax in 0..d {
        let [a, b] = series.domain(t_start, ax)?;
        let tol = 1e-12 * (b - a);
        if !(x0[ax] >= a - tol && x0[ax] <= b + tol) {
            return Err(Error::InvalidParameter(alloc::format!("start position {} outside [{a}, {b}]", x0[ax])));
        }
    }
    let mut t = t_start;
    let mut x = x0.to_vec();
    let mut times = Vec::new();
    let mut positions = Vec::new();
    if record {
        times.push(t);
        positions.push(x.clone());
    }
    let mut faults = 0usize;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut y = vec![0.0; d];
    let span_tol = 1e-12 * (t_end - t_start).abs().max(1.0);
    while t < t_end - span_tol {
        let h = dt_traj.min(t_end - t);
        series.velocity(t, &x, &mut k1)?;
        for i in 0..d {
            y[i] = x[i] + 0.5 * h * k1[i];
        }
        series.velocity(t + 0.5 * h, &y, &mut k2)?;
        for i in 0..d {
            y[i] = x[i] + 0.5 * h * k2[i];
        }
        series.velocity(t + 0.5 * h, &y, &mut k3)?;
        for i in 0..d {
            y[i] = x[i] + h * k3[i];
        }
        series.velocity(t + h, &y, &mut k4)?;
        let mut xn: Vec<f64> = (0..d).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        // earliest crossing of a detecting face within the step
        let mut first: Option<(f64, usize, Side)> = None;
        for ax in 0..d {
            let [a0, b0] = series.domain(t, ax)?;
            let [a1, b1] = series.domain(t + h, ax)?;
            for (side, g0, g1) in [(Side::Left, x[ax] - a0, xn[ax] - a1), (Side::Right, b0 - x[ax], b1 - xn[ax])] {
                if g1 < 0.0 {
                    let theta = if g0 > g1 { (g0 / (g0 - g1)).clamp(0.0, 1.0) } else { 0.0 };
                    if series.kappa(t + theta * h, ax, side)? > 0.0 {
                        if first.is_none_or(|(th, _, _)| theta < th) {
                            first = Some((theta, ax, side));
                        }
                    } else {
                        faults += 1;
                        let inset = 1e-12 * (b1 - a1);
                        xn[ax] = if side == Side::Left { a1 + inset } else { b1 - inset };
                    }
                }
            }
        }
        if let Some((theta, ax, side)) = first {
            let te = t + theta * h;
            let mut pos: Vec<f64> = (0..d).map(|i| x[i] + theta * (xn[i] - x[i])).collect();
            let [a, b] = series.domain(te, ax)?;
            pos[ax] = if side == Side::Left { a } else { b };
            for i in 0..d {
                if i != ax {
                    let [ai, bi] = series.domain(te, i)?;
                    pos[i] = pos[i].clamp(ai, bi);
                }
            }
            let mut v = vec![0.0; d];
            series.velocity(te, &pos, &mut v)?;
            let speed = v[ax] * side.outward_normal();
            if record {
                times.push(te);
                positions.push(pos.clone());
            }
            return Ok(BohmTrajectory {
                times,
                positions,
                exit: DetectionEvent::Detected {
                    time: te,
                    particle: series.labels[ax].clone(),
                    side,
                    location: pos[ax],
                },
                exit_position: Some(pos),
                exit_speed: Some(speed),
                faults,
            });
        }
        t += h;
        x = xn;
        if record {
            times.push(t);
            positions.push(x.clone());
        }
    }
    Ok(BohmTrajectory { times, positions, exit: DetectionEvent::Never, exit_position: None, exit_speed: None, faults })
}

/// Draws configurations from the multilinear interpolant of `|ψ|²`.
#[derive(Debug, Clone)]
pub struct InitialSampler {
    grids: Vec<SpatialGrid>,
    shape: Vec<usize>,
    density: Vec<f64>,
    /// Running cell masses, cells in row-major order of lower corners.
    cumulative: Vec<f64>,
    cells: Vec<usize>,
}

impl InitialSampler {
    pub fn new(psi: &WaveFunctionNP) -> Self {
        let shape = psi.shape();
        let d = shape.len();
        let st = strides(&shape);
        let mut idx = vec![0usize; d];
        let density: Vec<f64> = (0..psi.amplitudes().len())
            .map(|flat| {
                for ax in 0..d {
                    idx[ax] = (flat / st[ax]) % shape[ax];
                }
                psi.value(&idx).norm_sqr()
            })
            .collect();
        let mut cumulative = Vec::new();
        let mut cells = Vec::new();
        let mut acc = 0.0;
        for flat in 0..density.len() {
            if (0..d).any(|ax| (flat / st[ax]) % shape[ax] + 1 == shape[ax]) {
                continue;
            }
            let mut m = 0.0;
            for c in 0..(1usize << d) {
                let off: usize = (0..d).filter(|ax| c >> ax & 1 == 1).map(|ax| st[ax]).sum();
                m += density[flat + off];
            }
            acc += m;
            cumulative.push(acc);
            cells.push(flat);
        }
        Self { grids: psi.grids().to_vec(), shape, density, cumulative, cells }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.shape.len();
        let st = strides(&self.shape);
        let total = *self.cumulative.last().unwrap();
        let u = rng.gen::<f64>() * total;
        let c = self.cumulative.partition_point(|m| *m <= u).min(self.cells.len() - 1);
        let flat = self.cells[c];
        let corners: Vec<f64> = (0..(1usize << d))
            .map(|c| {
                let off: usize = (0..d).filter(|ax| c >> ax & 1 == 1).map(|ax| st[ax]).sum();
                self.density[flat + off]
            })
            .collect();
        let top = corners.iter().copied().fold(0.0, f64::max);
        loop {
            let r: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let mut val = 0.0;
            for (c, w) in corners.iter().enumerate() {
                let mut p = 1.0;
                for ax in 0..d {
                    p *= if c >> ax & 1 == 1 { r[ax] } else { 1.0 - r[ax] };
                }
                val += p * w;
            }
            if rng.gen::<f64>() * top <= val {
                return (0..d)
                    .map(|ax| {
                        let k = (flat / st[ax]) % self.shape[ax];
                        self.grids[ax].point(k) + r[ax] * self.grids[ax].spacing()
                    })
                    .collect();
            }
        }
    }
}

/// Outcome of one Monte Carlo sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub x0: Vec<f64>,
    pub exit: DetectionEvent,
    pub exit_speed: Option<f64>,
    pub faults: usize,
    /// Trajectories discarded at nodes before this one.
    pub discards: usize,
}

/// Simulates sample `index` of the stream family `seed`, resampling the
/// start point whenever a trajectory runs into a node.
pub fn simulate_sample(
    series: &BohmSeries,
    sampler: &InitialSampler,
    seed: u64,
    index: u64,
    dt_traj: f64,
    max_discards: usize,
) -> Result<SampleOutcome> {
    let mut rng = crate::rng::stream(seed, index);
    let mut discards = 0;
    loop {
        let x0 = sampler.draw(&mut rng);
        match integrate_trajectory(series, &x0, series.t_start(), dt_traj, false) {
            Ok(tr) => {
                return Ok(SampleOutcome { x0, exit: tr.exit, exit_speed: tr.exit_speed, faults: tr.faults, discards })
            }
            Err(Error::NodeEncountered { .. }) if discards < max_discards => discards += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Empirical exit statistics of `N` trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmStats {
    pub outcomes: Vec<SampleOutcome>,
}

impl BohmStats {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn exit_times(&self) -> Vec<Option<f64>> {
        self.outcomes.iter().map(|o| o.exit.time()).collect()
    }

    pub fn faults(&self) -> usize {
        self.outcomes.iter().map(|o| o.faults).sum()
    }

    pub fn discards(&self) -> usize {
        self.outcomes.iter().map(|o| o.discards).sum()
    }

    fn on_face(o: &SampleOutcome, face: &FaceId) -> bool {
        matches!(&o.exit, DetectionEvent::Detected { particle, side, .. } if particle == &face.particle && *side == face.side)
    }

    pub fn face_share(&self, face: &FaceId) -> f64 {
        self.outcomes.iter().filter(|o| Self::on_face(o, face)).count() as f64 / self.len().max(1) as f64
    }

    pub fn never_share(&self) -> f64 {
        self.outcomes.iter().filter(|o| o.exit.is_never()).count() as f64 / self.len().max(1) as f64
    }

    pub fn exit_speeds(&self, face: &FaceId) -> Vec<f64> {
        self.outcomes.iter().filter(|o| Self::on_face(o, face)).filter_map(|o| o.exit_speed).collect()
    }

    /// Empirical law binned like a flux-law distribution.
    pub fn distribution(&self, t0: f64, bin_dt: f64, n_bins: usize, faces: &[FaceId]) -> DetectionDistribution {
        let n = self.len().max(1) as f64;
        let mut bins = vec![vec![0.0; n_bins]; faces.len()];
        let mut late = 0.0;
        for o in &self.outcomes {
            if let DetectionEvent::Detected { time, particle, side, .. } = &o.exit {
                let k = ((time - t0) / bin_dt).floor().max(0.0) as usize;
                let f = faces.iter().position(|f| &f.particle == particle && f.side == *side);
                match (f, k < n_bins) {
                    (Some(f), true) => bins[f][k] += 1.0 / n,
                    _ => late += 1.0 / n,
                }
            }
        }
        let tail = self.never_share() + late;
        let mut survival = vec![1.0];
        let mut s = 1.0;
        for k in 0..n_bins {
            s -= bins.iter().map(|b| b[k]).sum::<f64>();
            survival.push(s);
        }
        DetectionDistribution {
            t0,
            bin_dt,
            faces: faces.to_vec(),
            bins,
            tail,
            p_never_estimate: f64::NAN,
            fit_residual: f64::NAN,
            negative_flux_count: 0,
            survival,
        }
    }
}

/// Runs `n_samples` trajectories with per-sample streams of `seed`.
pub fn mc_exit_statistics_with(
    series: &BohmSeries,
    n_samples: usize,
    seed: u64,
    dt_traj: f64,
) -> Result<BohmStats> {
    if n_samples < 100 {
        return Err(Error::InvalidParameter(alloc::format!("need at least 100 samples, got {n_samples}")));
    }
    let sampler = InitialSampler::new(series.initial_state());
    let outcomes = (0..n_samples as u64)
        .map(|i| simulate_sample(series, &sampler, seed, i, dt_traj, n_samples))
        .collect::<Result<Vec<_>>>()?;
    Ok(BohmStats { outcomes })
}

/// Evolves `ψ0` with snapshots every step and runs [`mc_exit_statistics_with`].
pub fn mc_exit_statistics(
    psi0: &WaveFunctionNP,
    h: &EffectiveHamiltonian,
    constants: &PhysicalConstants,
    t_max: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
    dt_traj: f64,
) -> Result<BohmStats> {
    let series = evolve_series(psi0, h, constants, t_max, dt)?;
    mc_exit_statistics_with(&series, n_samples, seed, dt_traj)
}

/// The series of `ψ0` evolved under `h` with a snapshot every step.
pub fn evolve_series(
    psi0: &WaveFunctionNP,
    h: &EffectiveHamiltonian,
    constants: &PhysicalConstants,
    t_max: f64,
    dt: f64,
) -> Result<BohmSeries> {
    let psi0 = normalized_input(psi0)?;
    let run = detection_run(&psi0, h, t_max, dt, 1, 1)?;
    BohmSeries::from_trajectory(&run.trajectory, h, constants)
}

/// Configuration-space Bohmian version of the sequential detection process:
/// after each exit the remaining particles continue in the conditional wave
/// function of the exit configuration.
pub fn simulate_sequence(
    series: &BohmSeries,
    params: &SystemParams,
    x0: &[f64],
    dt: f64,
    dt_traj: f64,
) -> Result<(DetectionRecord, usize)> {
    let n = series.labels.len();
    let t_max = series.t_end();
    let mut events = Vec::with_capacity(n);
    let mut faults = 0;
    let mut owned: Option<BohmSeries> = None;
    let mut params = params.clone();
    let mut x = x0.to_vec();
    let mut t = series.t_start();
    loop {
        let cur = owned.as_ref().unwrap_or(series);
        let tr = integrate_trajectory(cur, &x, t, dt_traj, false)?;
        faults += tr.faults;
        let (te, ax, side) = match &tr.exit {
            DetectionEvent::Detected { time, side, particle, .. } => {
                (*time, cur.labels.iter().position(|l| l == particle).unwrap(), *side)
            }
            DetectionEvent::Never => break,
        };
        events.push(tr.exit.clone());
        if cur.labels.len() == 1 || te >= t_max - 1e-12 * t_max.abs().max(1.0) {
            break;
        }
        let k = cur.locate(te)?.0;
        let slice = cur.boundary_slice(te, ax, side)?;
        let grids = cur.states[k].grids().to_vec();
        let psi = normalized_slice(slice, &cur.labels, &grids, ax, te)?;
        params = params.restrict(&cur.labels[ax]);
        let h = params.hamiltonian(&psi)?;
        let tr2 = evolve(&psi, &h, t_max, dt, 1)?;
        let next = BohmSeries::from_trajectory(&tr2, &h, &params.constants)?;
        let mut pos = tr.exit_position.unwrap();
        pos.remove(ax);
        x = pos;
        t = te;
        owned = Some(next);
    }
    events.resize(n, DetectionEvent::Never);
    Ok((DetectionRecord { events }, faults))
}
