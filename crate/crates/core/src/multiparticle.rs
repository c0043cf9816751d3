//! Several particles: configuration-space faces, the first-detection law,
//! collapse onto the boundary slice, and sequential sampling of the full
//! detection record.
//!
//! A click of particle `i` during step `k` is attributed to the midpoint of
//! axis `i`'s sub-step, so the collapsed state is the face slice of that
//! midpoint. The reduced system then finishes step `k` from axis `i` on and
//! continues on the shared time grid. Probabilities of whole records multiply
//! exactly and `T² ≥ T¹` holds by construction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use rand::Rng;

use crate::detection::{boundary_flux, detection_distribution, normalized_input, NEGATIVE_FLUX_TOL};
use crate::domain::{
    strides, DetectionDistribution, DetectionEvent, Face, FaceId, ParticleLabel, PhysicalConstants, PotentialSpec,
    Side, SpatialGrid, WaveFunctionNP, ENDPOINT_GAUGE,
};
use crate::error::{Error, Result};
use crate::evolution::{step_count, CnStepper, CONTRACTION_TOL};
use crate::hamiltonian::{build_effective_hamiltonian, EffectiveHamiltonian};
use crate::moving::{evolve_moving_np, moving_detection_distribution, MovingParticle};
use crate::C64;

/// Largest tensor dimension per particle accepted by [`joint_distribution_small`].
pub const JOINT_GRID_CAP: usize = 32;

/// Stage runs keep their face slices in memory up to this many amplitudes.
const SLICE_CAP: usize = 1 << 24;

/// The part of the configuration-space boundary where one particle sits on a
/// face of its own domain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigurationFace {
    pub detected_particle: ParticleLabel,
    pub side: Side,
}

impl ConfigurationFace {
    pub fn new(particle: impl Into<ParticleLabel>, side: Side) -> Self {
        Self { detected_particle: particle.into(), side }
    }

    pub fn id(&self) -> FaceId {
        FaceId::new(self.detected_particle.clone(), self.side)
    }
}

impl From<FaceId> for ConfigurationFace {
    fn from(f: FaceId) -> Self {
        Self { detected_particle: f.particle, side: f.side }
    }
}

/// Constants, potential, and detecting faces of a system of particles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemParams {
    pub constants: PhysicalConstants,
    pub potential: PotentialSpec,
    /// Faces not listed are reflecting.
    pub faces: Vec<Face>,
}

impl SystemParams {
    pub fn new(constants: PhysicalConstants, potential: PotentialSpec, faces: Vec<Face>) -> Self {
        Self { constants, potential, faces }
    }

    /// `κ` of a face; 0 when not listed.
    pub fn kappa(&self, face: &FaceId) -> f64 {
        self.faces
            .iter()
            .find(|f| f.particle == face.particle && f.side == face.side)
            .map_or(0.0, |f| f.kappa)
    }

    /// The system after `label` has been detected.
    pub fn restrict(&self, label: &ParticleLabel) -> Self {
        Self {
            constants: self.constants.clone(),
            potential: self.potential.restrict(label),
            faces: self.faces.iter().filter(|f| &f.particle != label).cloned().collect(),
        }
    }

    /// `H_eff` on the labels and grids of `psi`.
    pub fn hamiltonian(&self, psi: &WaveFunctionNP) -> Result<EffectiveHamiltonian> {
        self.hamiltonian_on(psi.labels(), psi.grids())
    }

    pub fn hamiltonian_on(&self, labels: &[ParticleLabel], grids: &[SpatialGrid]) -> Result<EffectiveHamiltonian> {
        let pairs: Vec<(ParticleLabel, SpatialGrid)> = labels.iter().cloned().zip(grids.iter().copied()).collect();
        build_effective_hamiltonian(&pairs, &self.potential, &self.faces, &self.constants)
    }
}

/// Detection outcomes in the order of detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub events: Vec<DetectionEvent>,
}

impl DetectionRecord {
    /// Checks ordering, distinct labels, and Never-padding.
    pub fn validate(&self) -> core::result::Result<(), String> {
        let mut last = f64::NEG_INFINITY;
        let mut seen: Vec<&ParticleLabel> = Vec::new();
        let mut never = false;
        for (j, e) in self.events.iter().enumerate() {
            match e {
                DetectionEvent::Never => never = true,
                DetectionEvent::Detected { time, particle, .. } => {
                    if never {
                        return Err(format!("detection at position {j} after a Never entry"));
                    }
                    if *time < last {
                        return Err(format!("detection times decrease at position {j}"));
                    }
                    if seen.contains(&particle) {
                        return Err(format!("particle {particle} detected twice"));
                    }
                    seen.push(particle);
                    last = *time;
                }
            }
        }
        Ok(())
    }

    pub fn detected_count(&self) -> usize {
        self.events.iter().filter(|e| !e.is_never()).count()
    }
}

/// Maps a record to per-particle outcomes; undetected labels map to Never.
pub fn reorder_record(
    record: &DetectionRecord,
    labels: &[ParticleLabel],
) -> Result<BTreeMap<ParticleLabel, DetectionEvent>> {
    let mut out: BTreeMap<ParticleLabel, DetectionEvent> =
        labels.iter().map(|l| (l.clone(), DetectionEvent::Never)).collect();
    let mut seen: Vec<&ParticleLabel> = Vec::new();
    for e in &record.events {
        if let Some(p) = e.particle() {
            if seen.contains(&p) {
                return Err(Error::DuplicateLabel(p.0.clone()));
            }
            seen.push(p);
            match out.get_mut(p) {
                Some(slot) => *slot = e.clone(),
                None => return Err(Error::UnknownLabel(p.0.clone())),
            }
        }
    }
    Ok(out)
}

/// Probability per unit time of a first click on `face`: the boundary flux
/// of the detected particle integrated over everyone else.
pub fn face_flux_marginal(psi: &WaveFunctionNP, face: &ConfigurationFace, params: &SystemParams) -> Result<f64> {
    let id = face.id();
    let f = Face { particle: id.particle.clone(), side: id.side, kappa: params.kappa(&id) };
    Ok(boundary_flux(psi, &f, &params.constants)?.density)
}

/// Law of `(T¹, I¹, X¹)` with one bin per step; faces in axis order.
pub fn first_detection_distribution(
    psi0: &WaveFunctionNP,
    params: &SystemParams,
    t_max: f64,
    dt: f64,
) -> Result<DetectionDistribution> {
    let h = params.hamiltonian(psi0)?;
    detection_distribution(psi0, &h, t_max, dt)
}

/// First-detection law when every particle has its own moving domain.
pub fn first_detection_distribution_moving(
    psi0: &WaveFunctionNP,
    particles: &[MovingParticle],
    pair: &PotentialSpec,
    constants: &PhysicalConstants,
    t_max: f64,
    dt: f64,
) -> Result<DetectionDistribution> {
    let psi0 = normalized_input(psi0)?;
    let run = evolve_moving_np(&psi0, particles, pair, constants, t_max, dt, 0)?;
    moving_detection_distribution(&run, 1)
}

/// Conditional wave function of the others once `detected` clicked at
/// `location`, normalized and stamped with the time of `psi`.
pub fn collapse(psi: &WaveFunctionNP, detected: &ParticleLabel, location: f64) -> Result<WaveFunctionNP> {
    let ax = psi.axis_of(detected)?;
    if psi.labels().len() < 2 {
        return Err(Error::InvalidParameter("collapse needs at least two particles".into()));
    }
    let side = boundary_side(&psi.grids()[ax], location).ok_or_else(|| Error::NotOnBoundary {
        label: detected.0.clone(),
        x: location,
    })?;
    let shape = psi.shape();
    let st = strides(&shape);
    let k = if side == Side::Left { 0 } else { shape[ax] - 1 };
    let slice: Vec<C64> = psi
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(flat, _)| (flat / st[ax]) % shape[ax] == k)
        .map(|(_, a)| *a)
        .collect();
    normalized_slice(slice, psi.labels(), psi.grids(), ax, psi.time())
}

/// Which end of `grid` the point `x` is, within `1e−9` of the length.
pub fn boundary_side(grid: &SpatialGrid, x: f64) -> Option<Side> {
    let iv = grid.interval();
    let tol = 1e-9 * iv.length();
    if (x - iv.a()).abs() <= tol {
        Some(Side::Left)
    } else if (x - iv.b()).abs() <= tol {
        Some(Side::Right)
    } else {
        None
    }
}

/// Builds the reduced state from stored boundary amplitudes of axis `ax`.
pub(crate) fn normalized_slice(
    slice: Vec<C64>,
    labels: &[ParticleLabel],
    grids: &[SpatialGrid],
    ax: usize,
    time: f64,
) -> Result<WaveFunctionNP> {
    let mut labels = labels.to_vec();
    let mut grids = grids.to_vec();
    labels.remove(ax);
    grids.remove(ax);
    let cell: f64 = grids.iter().map(|g| g.spacing()).product();
    let norm_squared = slice.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell / (ENDPOINT_GAUGE * ENDPOINT_GAUGE);
    if !(norm_squared > 1e-24) {
        return Err(Error::ZeroNormSlice { norm_squared });
    }
    let s = 1.0 / (norm_squared.sqrt() * ENDPOINT_GAUGE);
    let amps = slice.into_iter().map(|z| z * s).collect();
    let out = WaveFunctionNP::from_amplitudes(labels, grids, amps, time)?;
    Ok(out.normalized())
}

/// One leg of the sequential process: the reduced system evolved from a
/// collapsed state to `t_max`.
///
/// Every step is split into variants, one per axis order, each carrying
/// weight `1/variants`; a step that resumes an interrupted one has the single
/// variant given by the remaining axes.
#[derive(Debug, Clone)]
struct Stage {
    labels: Vec<ParticleLabel>,
    grids: Vec<SpatialGrid>,
    params: SystemParams,
    faces: Vec<FaceId>,
    /// Global index of the first step.
    start_step: usize,
    /// Remaining axes of the first step, if it resumes an interrupted one.
    resume: Option<Vec<usize>>,
    orders: Vec<Vec<usize>>,
    initial: Vec<C64>,
    /// `[step][variant][face]` losses.
    variant_losses: Vec<Vec<Vec<f64>>>,
    /// Running sum of weighted, clipped losses over (step, face), step-major.
    cumulative: Vec<f64>,
    norms: Vec<f64>,
    /// `[step][variant][face]` midpoint face slices, when kept.
    slices: Option<Vec<Vec<Vec<Vec<C64>>>>>,
}

type Advance = (Vec<Vec<Vec<f64>>>, Vec<f64>, Option<Vec<Vec<Vec<Vec<C64>>>>>);

impl Stage {
    fn variants(&self, s: usize) -> Vec<&[usize]> {
        match (&self.resume, s) {
            (Some(r), 0) => vec![r.as_slice()],
            _ => self.orders.iter().map(|o| o.as_slice()).collect(),
        }
    }

    /// Weighted loss of (step, face) summed over variants.
    fn loss(&self, s: usize, f: usize) -> f64 {
        let v = &self.variant_losses[s];
        v.iter().map(|l| l[f].max(0.0)).sum::<f64>() / v.len() as f64
    }

    fn step_losses(&self) -> Vec<Vec<f64>> {
        (0..self.variant_losses.len())
            .map(|s| (0..self.faces.len()).map(|f| self.loss(s, f)).collect())
            .collect()
    }

    /// Axes still to run after face `f`'s axis in variant `v` of step `s`,
    /// renumbered for the system without that axis.
    fn rest_after(&self, s: usize, v: usize, f: usize) -> Vec<usize> {
        let ax = f / 2;
        let order = self.variants(s)[v];
        let pos = order.iter().position(|a| *a == ax).expect("face axis runs in every variant");
        order[pos + 1..].iter().map(|a| if *a > ax { a - 1 } else { *a }).collect()
    }
}

/// Shared time grid and first-stage data of the sequential process.
#[derive(Debug, Clone)]
pub struct Sampler {
    params: SystemParams,
    psi0: WaveFunctionNP,
    t0: f64,
    t_max: f64,
    dt: f64,
    n_steps: usize,
    cache: BTreeMap<Vec<(usize, usize, usize)>, Stage>,
    /// Consecutive detections that fell into the same step.
    pub ties: usize,
}

impl Sampler {
    pub fn new(psi0: &WaveFunctionNP, params: &SystemParams, t_max: f64, dt: f64) -> Result<Self> {
        let psi0 = normalized_input(psi0)?;
        let t0 = psi0.time();
        if !(t_max > t0) {
            return Err(Error::InvalidParameter(format!("t_max {t_max} must exceed t0 {t0}")));
        }
        let (n_steps, dt) = step_count(t0, t_max, dt)?;
        let mut s = Self { params: params.clone(), psi0, t0, t_max, dt, n_steps, cache: BTreeMap::new(), ties: 0 };
        let root = s.run_stage(
            s.psi0.labels().to_vec(),
            s.psi0.grids().to_vec(),
            s.params.clone(),
            s.psi0.amplitudes().to_vec(),
            0,
            None,
        )?;
        s.cache.insert(Vec::new(), root);
        Ok(s)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn labels(&self) -> &[ParticleLabel] {
        self.psi0.labels()
    }

    fn time_at(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.t_max
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    fn run_stage(
        &self,
        labels: Vec<ParticleLabel>,
        grids: Vec<SpatialGrid>,
        params: SystemParams,
        initial: Vec<C64>,
        start_step: usize,
        resume: Option<Vec<usize>>,
    ) -> Result<Stage> {
        let h = params.hamiltonian_on(&labels, &grids)?;
        let faces = h.face_ids();
        let nf = faces.len();
        let orders = crate::evolution::permutations(labels.len());
        let n_local = self.n_steps - start_step;
        let per_step = if labels.len() >= 2 { h.dim() * orders.len() } else { 0 };
        let keep = labels.len() >= 2 && per_step.saturating_mul(n_local) <= SLICE_CAP;
        let mut stage = Stage {
            labels,
            grids,
            params,
            faces,
            start_step,
            resume,
            orders,
            initial,
            variant_losses: Vec::new(),
            cumulative: Vec::new(),
            norms: Vec::new(),
            slices: None,
        };
        let (variant_losses, norms, slices) = self.advance(&stage, &h, n_local, keep, None)?;
        stage.variant_losses = variant_losses;
        stage.norms = norms;
        stage.slices = slices;
        let mut acc = 0.0;
        stage.cumulative = Vec::with_capacity(n_local * nf);
        for s in 0..n_local {
            for f in 0..nf {
                acc += stage.loss(s, f);
                stage.cumulative.push(acc);
            }
        }
        Ok(stage)
    }

    /// Evolves a stage's initial state for `n_local` steps, keeping all face
    /// slices or only those of local step `only`.
    fn advance(
        &self,
        stage: &Stage,
        h: &EffectiveHamiltonian,
        n_local: usize,
        keep_all: bool,
        only: Option<usize>,
    ) -> Result<Advance> {
        let stepper = CnStepper::new(h, self.dt)?;
        let nf = stepper.n_faces();
        let cell = h.cell_weight();
        let mut x = stage.initial.clone();
        let norm = |x: &[C64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell;
        let mut norms = vec![norm(&x)];
        let mut losses = Vec::with_capacity(n_local);
        let mut slices = keep_all.then(|| Vec::with_capacity(n_local));
        for s in 0..n_local {
            let want = keep_all || only == Some(s);
            let resuming = s == 0 && stage.resume.is_some();
            let mut step_losses = Vec::new();
            let mut step_slices = Vec::new();
            let mut next = Vec::new();
            for order in stage.variants(s) {
                let mut y = x.clone();
                let mut sl = vec![Vec::new(); nf];
                let slot = if want { Some(sl.as_mut_slice()) } else { None };
                let loss = if resuming {
                    stepper.finish_step(&mut y, order, slot)
                } else {
                    stepper.step_ordered(&mut y, order, slot)
                };
                for l in &loss {
                    if *l < -NEGATIVE_FLUX_TOL {
                        return Err(Error::InvalidParameter(format!(
                            "negative face loss {l:e} at t = {}",
                            self.time_at(stage.start_step + s)
                        )));
                    }
                }
                step_losses.push(loss);
                step_slices.push(sl);
                next = y;
            }
            x = next;
            let before = *norms.last().unwrap();
            let after = norm(&x);
            if after > before * (1.0 + CONTRACTION_TOL) + f64::MIN_POSITIVE {
                return Err(Error::ContractionViolated { before, after });
            }
            norms.push(after);
            losses.push(step_losses);
            if let Some(all) = slices.as_mut() {
                all.push(step_slices);
            } else if only == Some(s) {
                return Ok((losses, norms, Some(vec![step_slices])));
            }
        }
        Ok((losses, norms, slices))
    }

    /// Face slice of local step `s`, variant `v`, face `f` of a stage.
    fn stage_slice(&self, stage: &Stage, s: usize, v: usize, f: usize) -> Result<Vec<C64>> {
        if let Some(sl) = &stage.slices {
            return Ok(sl[s][v][f].clone());
        }
        let h = stage.params.hamiltonian_on(&stage.labels, &stage.grids)?;
        let (_, _, sl) = self.advance(stage, &h, s + 1, false, Some(s))?;
        Ok(sl.expect("slice of the requested step")[0][v][f].clone())
    }

    /// The stage reached after a click on face `f` in variant `v` of local
    /// step `s` of `parent`.
    fn child_stage(&self, parent: &Stage, s: usize, v: usize, f: usize) -> Result<Stage> {
        let ax = f / 2;
        let slice = self.stage_slice(parent, s, v, f)?;
        let k = parent.start_step + s;
        let reduced = normalized_slice(slice, &parent.labels, &parent.grids, ax, self.time_at(k))?;
        let params = parent.params.restrict(&parent.labels[ax]);
        self.run_stage(
            reduced.labels().to_vec(),
            reduced.grids().to_vec(),
            params,
            reduced.into_amplitudes(),
            k,
            Some(parent.rest_after(s, v, f)),
        )
    }

    fn stage(&mut self, path: &[(usize, usize, usize)]) -> Result<&Stage> {
        if !self.cache.contains_key(path) {
            let (last, head) = path.split_last().expect("root stage is always cached");
            let parent = self.cache.get(head).expect("parent stage cached before child");
            let child = self.child_stage(parent, last.0 - parent.start_step, last.1, last.2)?;
            self.cache.insert(path.to_vec(), child);
        }
        Ok(&self.cache[path])
    }

    /// One full record, deterministic in `seed`.
    pub fn sample(&mut self, seed: u64) -> Result<DetectionRecord> {
        let mut rng = crate::rng::stream(seed, 0);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<DetectionRecord> {
        let n = self.psi0.labels().len();
        let mut events = Vec::with_capacity(n);
        let mut path: Vec<(usize, usize, usize)> = Vec::new();
        let mut t_prev = self.t0;
        let mut k_prev = usize::MAX;
        while events.len() < n {
            let u: f64 = rng.gen();
            let stage = self.stage(&path)?;
            let total = stage.cumulative.last().copied().unwrap_or(0.0);
            if !(u < total) {
                break;
            }
            let idx = stage.cumulative.partition_point(|c| *c <= u).min(stage.cumulative.len() - 1);
            let nf = stage.faces.len();
            let (s, f) = (idx / nf, idx % nf);
            // variant conditional on the click
            let weights: Vec<f64> = stage.variant_losses[s].iter().map(|l| l[f].max(0.0)).collect();
            let wsum: f64 = weights.iter().sum();
            let mut r = rng.gen::<f64>() * wsum;
            let mut v = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    v = i;
                    break;
                }
                r -= w;
            }
            let k = stage.start_step + s;
            let face = stage.faces[f].clone();
            let grid = stage.grids[f / 2];
            let lo = if s == 0 && stage.resume.is_some() { t_prev.max(self.time_at(k)) } else { self.time_at(k) };
            let hi = self.time_at(k + 1);
            let time = lo + rng.gen::<f64>() * (hi - lo);
            if k == k_prev {
                self.ties += 1;
            }
            events.push(DetectionEvent::Detected {
                time,
                particle: face.particle,
                side: face.side,
                location: grid.interval().endpoint(face.side),
            });
            t_prev = time;
            k_prev = k;
            path.push((k, v, f));
        }
        events.resize(n, DetectionEvent::Never);
        Ok(DetectionRecord { events })
    }

    /// Records for the streams `0..count` derived from `root`.
    pub fn sample_many(&mut self, root: u64, count: usize) -> Result<Vec<DetectionRecord>> {
        (0..count)
            .map(|i| {
                let mut rng = crate::rng::stream(root, i as u64);
                self.sample_with(&mut rng)
            })
            .collect()
    }

    /// Survival `‖Ψ_t‖²` of the first stage at every step edge.
    pub fn first_stage_norms(&self) -> &[f64] {
        &self.cache[&Vec::new()].norms
    }

    /// First-stage loss per step and face, averaged over axis orders.
    pub fn first_stage_losses(&self) -> Vec<Vec<f64>> {
        self.cache[&Vec::new()].step_losses()
    }
}

/// Draws one detection record by sequential evolve, sample, collapse.
pub fn sample_detection_sequence(
    psi0: &WaveFunctionNP,
    params: &SystemParams,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Result<DetectionRecord> {
    Sampler::new(psi0, params, t_max, dt)?.sample(seed)
}

/// Joint law of `(Z¹, Z²)` for two particles, binned in time.
///
/// Index order of `pair` is `[f1][k1][f2][k2]` over `faces × bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub t0: f64,
    pub bin_dt: f64,
    pub n_bins: usize,
    pub faces: Vec<FaceId>,
    pub pair: Vec<f64>,
    /// First click in `[f1][k1]`, no second click by `t_max`.
    pub second_never: Vec<f64>,
    pub never: f64,
}

impl JointTable {
    pub fn mass(&self, f1: usize, k1: usize, f2: usize, k2: usize) -> f64 {
        let (nf, nb) = (self.faces.len(), self.n_bins);
        self.pair[((f1 * nb + k1) * nf + f2) * nb + k2]
    }

    pub fn total(&self) -> f64 {
        self.pair.iter().sum::<f64>() + self.second_never.iter().sum::<f64>() + self.never
    }

    /// Law of the first click, `[face][bin]`.
    pub fn first_marginal(&self) -> Vec<Vec<f64>> {
        let (nf, nb) = (self.faces.len(), self.n_bins);
        let mut out = vec![vec![0.0; nb]; nf];
        for f1 in 0..nf {
            for k1 in 0..nb {
                let mut m = self.second_never[f1 * nb + k1];
                for f2 in 0..nf {
                    for k2 in 0..nb {
                        m += self.mass(f1, k1, f2, k2);
                    }
                }
                out[f1][k1] = m;
            }
        }
        out
    }

    /// Mass on cells with the second click in an earlier bin than the first.
    pub fn reversed_time_mass(&self) -> f64 {
        let (nf, nb) = (self.faces.len(), self.n_bins);
        let mut m = 0.0;
        for f1 in 0..nf {
            for k1 in 0..nb {
                for f2 in 0..nf {
                    for k2 in 0..k1 {
                        m += self.mass(f1, k1, f2, k2);
                    }
                }
            }
        }
        m
    }

    /// Per-particle law `[bin]` of `Z_label` restricted to face `side`, plus
    /// the Never mass, via the reordering map.
    pub fn particle_marginal(&self, label: &ParticleLabel) -> (Vec<Vec<f64>>, f64) {
        let (nf, nb) = (self.faces.len(), self.n_bins);
        let mut out = vec![vec![0.0; nb]; 2];
        let mut never = self.never;
        for f1 in 0..nf {
            let own1 = &self.faces[f1].particle == label;
            for k1 in 0..nb {
                let sn = self.second_never[f1 * nb + k1];
                if own1 {
                    out[self.faces[f1].side.index()][k1] += sn;
                } else {
                    never += sn;
                }
                for f2 in 0..nf {
                    for k2 in 0..nb {
                        let m = self.mass(f1, k1, f2, k2);
                        if own1 {
                            out[self.faces[f1].side.index()][k1] += m;
                        } else if &self.faces[f2].particle == label {
                            out[self.faces[f2].side.index()][k2] += m;
                        }
                    }
                }
            }
        }
        (out, never)
    }
}

/// Exhaustive `(Z¹, Z²)` law for two particles: every first-detection step
/// and face is collapsed and followed by its own second stage.
pub fn joint_distribution_small(
    psi0: &WaveFunctionNP,
    params: &SystemParams,
    t_max: f64,
    dt: f64,
    steps_per_bin: usize,
) -> Result<JointTable> {
    if psi0.labels().len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "joint enumeration needs two particles, got {}",
            psi0.labels().len()
        )));
    }
    for g in psi0.grids() {
        if g.n_points() > JOINT_GRID_CAP {
            return Err(Error::DimensionCap { dim: g.n_points(), cap: JOINT_GRID_CAP });
        }
    }
    let spb = steps_per_bin.max(1);
    let t0 = psi0.time();
    let (n, _) = step_count(t0, t_max, dt)?;
    let n = n.div_ceil(spb) * spb;
    let sampler = Sampler::new(psi0, params, t_max, (t_max - t0) / n as f64 * (1.0 + 1e-13))?;
    debug_assert_eq!(sampler.n_steps, n);
    let root = &sampler.cache[&Vec::new()];
    let faces = root.faces.clone();
    let (nf, nb) = (faces.len(), n / spb);
    let mut pair = vec![0.0; nf * nb * nf * nb];
    let mut second_never = vec![0.0; nf * nb];
    for s in 0..root.variant_losses.len() {
        let k1 = s / spb;
        let nv = root.variant_losses[s].len() as f64;
        for (v, losses) in root.variant_losses[s].iter().enumerate() {
            for (f, &l1) in losses.iter().enumerate() {
                let p1 = l1 / nv;
                if !(p1 > 0.0) {
                    continue;
                }
                let child = sampler.child_stage(root, s, v, f)?;
                let ax1 = f / 2;
                for (s2, l2) in child.step_losses().iter().enumerate() {
                    let k2 = (child.start_step + s2) / spb;
                    for (g, &p2) in l2.iter().enumerate() {
                        // child faces belong to the remaining particle
                        let f2 = if ax1 == 0 { 2 + g } else { g };
                        pair[((f * nb + k1) * nf + f2) * nb + k2] += p1 * p2;
                    }
                }
                second_never[f * nb + k1] += p1 * child.norms.last().copied().unwrap_or(0.0);
            }
        }
    }
    Ok(JointTable {
        t0,
        bin_dt: sampler.dt * spb as f64,
        n_bins: nb,
        faces,
        pair,
        second_never,
        never: *root.norms.last().unwrap(),
    })
}
