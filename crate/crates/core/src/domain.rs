//! Shared vocabulary: constants, labels, grids, faces, wave functions,
//! potentials and detection outcomes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::C64;

/// Scale factor between a physical endpoint value and its stored amplitude.
pub const ENDPOINT_GAUGE: f64 = core::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalConstants {
    hbar: f64,
    masses: BTreeMap<ParticleLabel, f64>,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: 1.0, masses: BTreeMap::new() }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be > 0, got {hbar}")));
        }
        Ok(Self { hbar, masses: BTreeMap::new() })
    }

    pub fn with_mass(mut self, label: impl Into<ParticleLabel>, mass: f64) -> Result<Self> {
        let label = label.into();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass of {label} must be > 0, got {mass}")));
        }
        self.masses.insert(label, mass);
        Ok(self)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Mass of `label`; unlisted particles have unit mass.
    pub fn mass(&self, label: &ParticleLabel) -> f64 {
        self.masses.get(label).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParticleLabel(pub String);

impl ParticleLabel {
    pub fn new(name: &str) -> Self {
        Self(name.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ParticleLabel {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl fmt::Display for ParticleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval1D {
    a: f64,
    b: f64,
}

impl Interval1D {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::DegenerateInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn endpoint(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.a,
            Side::Right => self.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    interval: Interval1D,
    n_points: usize,
}

impl SpatialGrid {
    pub fn interval(&self) -> Interval1D {
        self.interval
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.interval.length() / (self.n_points - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        if k + 1 == self.n_points {
            self.interval.b
        } else {
            self.interval.a + k as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.point(k)).collect()
    }

    pub fn boundary_index(&self, side: Side) -> usize {
        match side {
            Side::Left => 0,
            Side::Right => self.n_points - 1,
        }
    }

    /// The same grid translated by `dx`.
    pub fn shifted(&self, dx: f64) -> SpatialGrid {
        SpatialGrid {
            interval: Interval1D { a: self.interval.a + dx, b: self.interval.b + dx },
            n_points: self.n_points,
        }
    }
}

pub fn make_grid(interval: Interval1D, n_points: usize) -> Result<SpatialGrid> {
    if n_points < 3 {
        return Err(Error::TooFewPoints(n_points));
    }
    Interval1D::new(interval.a, interval.b)?;
    Ok(SpatialGrid { interval, n_points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Outward unit normal of the face in 1D.
    pub fn outward_normal(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaceId {
    pub particle: ParticleLabel,
    pub side: Side,
}

impl FaceId {
    pub fn new(particle: impl Into<ParticleLabel>, side: Side) -> Self {
        Self { particle: particle.into(), side }
    }
}

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.particle, self.side.as_str())
    }
}

/// One absorbing boundary component of one particle's interval.
///
/// `kappa == 0` marks a reflecting (Neumann) face.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub particle: ParticleLabel,
    pub side: Side,
    pub kappa: f64,
}

impl Face {
    pub fn new(particle: impl Into<ParticleLabel>, side: Side, kappa: f64) -> Result<Self> {
        let particle = particle.into();
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::NegativeKappa { face: FaceId { particle, side }, kappa });
        }
        Ok(Self { particle, side, kappa })
    }

    pub fn id(&self) -> FaceId {
        FaceId { particle: self.particle.clone(), side: self.side }
    }

    pub fn is_detecting(&self) -> bool {
        self.kappa > 0.0
    }
}

fn check_finite(amplitudes: &[C64]) -> Result<()> {
    if amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("non-finite amplitude".into()))
    }
}

/// Single-particle wave function on a grid, stored in the boundary-symmetrized
/// gauge (endpoint amplitudes are `ψ/√2`).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction1P {
    grid: SpatialGrid,
    amplitudes: Vec<C64>,
    time: f64,
}

impl WaveFunction1P {
    /// Wraps amplitudes that are already in the stored gauge.
    pub fn from_amplitudes(grid: SpatialGrid, amplitudes: Vec<C64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for {} grid points",
                amplitudes.len(),
                grid.n_points()
            )));
        }
        check_finite(&amplitudes)?;
        Ok(Self { grid, amplitudes, time })
    }

    /// Builds the stored representation from point values `ψ(x_k)`.
    pub fn from_values(grid: SpatialGrid, values: Vec<C64>, time: f64) -> Result<Self> {
        let mut psi = Self::from_amplitudes(grid, values, time)?;
        let n = psi.amplitudes.len();
        psi.amplitudes[0] *= ENDPOINT_GAUGE;
        psi.amplitudes[n - 1] *= ENDPOINT_GAUGE;
        Ok(psi)
    }

    pub fn zeros(grid: SpatialGrid, time: f64) -> Self {
        Self { grid, amplitudes: vec![C64::new(0.0, 0.0); grid.n_points()], time }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Point value `ψ(x_k)`.
    pub fn value(&self, k: usize) -> C64 {
        let a = self.amplitudes[k];
        if k == 0 || k + 1 == self.amplitudes.len() {
            a / ENDPOINT_GAUGE
        } else {
            a
        }
    }

    pub fn values(&self) -> Vec<C64> {
        (0..self.amplitudes.len()).map(|k| self.value(k)).collect()
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            grid: self.grid,
            amplitudes: self.amplitudes.iter().map(|z| z * c).collect(),
            time: self.time,
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.spacing()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_squared().sqrt();
        self.scaled(C64::new(1.0 / n, 0.0))
    }

    pub fn into_np(self, label: ParticleLabel) -> WaveFunctionNP {
        WaveFunctionNP {
            labels: vec![label],
            grids: vec![self.grid],
            amplitudes: self.amplitudes,
            time: self.time,
        }
    }
}

/// Joint wave function of labeled particles on a tensor-product grid.
///
/// Row-major: the first label varies slowest. Every axis uses the
/// boundary-symmetrized gauge independently.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunctionNP {
    labels: Vec<ParticleLabel>,
    grids: Vec<SpatialGrid>,
    amplitudes: Vec<C64>,
    time: f64,
}

impl WaveFunctionNP {
    pub fn from_amplitudes(
        labels: Vec<ParticleLabel>,
        grids: Vec<SpatialGrid>,
        amplitudes: Vec<C64>,
        time: f64,
    ) -> Result<Self> {
        if labels.len() != grids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels but {} grids",
                labels.len(),
                grids.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.0.clone()));
            }
        }
        let dim: usize = grids.iter().map(|g| g.n_points()).product();
        if dim != amplitudes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for tensor dimension {dim}",
                amplitudes.len()
            )));
        }
        check_finite(&amplitudes)?;
        Ok(Self { labels, grids, amplitudes, time })
    }

    /// Tensor product of single-particle states.
    pub fn product(factors: &[(ParticleLabel, &WaveFunction1P)]) -> Result<Self> {
        let mut amplitudes = vec![C64::new(1.0, 0.0)];
        for (_, psi) in factors {
            let mut next = Vec::with_capacity(amplitudes.len() * psi.amplitudes.len());
            for a in &amplitudes {
                for b in psi.amplitudes() {
                    next.push(a * b);
                }
            }
            amplitudes = next;
        }
        let time = factors.first().map(|(_, p)| p.time()).unwrap_or(0.0);
        Self::from_amplitudes(
            factors.iter().map(|(l, _)| l.clone()).collect(),
            factors.iter().map(|(_, p)| *p.grid()).collect(),
            amplitudes,
            time,
        )
    }

    /// Builds a state from a function of point values, applying the gauge.
    pub fn from_fn(
        labels: Vec<ParticleLabel>,
        grids: Vec<SpatialGrid>,
        time: f64,
        mut f: impl FnMut(&[f64]) -> C64,
    ) -> Result<Self> {
        let shape: Vec<usize> = grids.iter().map(|g| g.n_points()).collect();
        let dim: usize = shape.iter().product();
        let mut amplitudes = Vec::with_capacity(dim);
        let mut idx = vec![0usize; shape.len()];
        let mut x = vec![0.0; shape.len()];
        for _ in 0..dim {
            let mut gauge = 1.0;
            for (ax, &k) in idx.iter().enumerate() {
                x[ax] = grids[ax].point(k);
                if k == 0 || k + 1 == shape[ax] {
                    gauge *= ENDPOINT_GAUGE;
                }
            }
            amplitudes.push(f(&x) * gauge);
            increment(&mut idx, &shape);
        }
        Self::from_amplitudes(labels, grids, amplitudes, time)
    }

    pub fn labels(&self) -> &[ParticleLabel] {
        &self.labels
    }

    pub fn grids(&self) -> &[SpatialGrid] {
        &self.grids
    }

    pub fn shape(&self) -> Vec<usize> {
        self.grids.iter().map(|g| g.n_points()).collect()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn axis_of(&self, label: &ParticleLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.0.clone()))
    }

    /// Product of grid spacings: the quadrature weight of one tensor cell.
    pub fn cell_volume(&self) -> f64 {
        self.grids.iter().map(|g| g.spacing()).product()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_volume()
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|z| *z *= c);
        out
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_squared().sqrt();
        self.scaled(C64::new(1.0 / n, 0.0))
    }

    /// Point value at a multi-index (undoes the endpoint gauge).
    pub fn value(&self, idx: &[usize]) -> C64 {
        let strides = strides(&self.shape());
        let mut flat = 0;
        let mut gauge = 1.0;
        for (ax, &k) in idx.iter().enumerate() {
            flat += k * strides[ax];
            if k == 0 || k + 1 == self.grids[ax].n_points() {
                gauge *= ENDPOINT_GAUGE;
            }
        }
        self.amplitudes[flat] / gauge
    }

    pub fn into_1p(self) -> Result<WaveFunction1P> {
        if self.labels.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected one particle, found {}",
                self.labels.len()
            )));
        }
        Ok(WaveFunction1P { grid: self.grids[0], amplitudes: self.amplitudes, time: self.time })
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for ax in (0..idx.len()).rev() {
        idx[ax] += 1;
        if idx[ax] < shape[ax] {
            return;
        }
        idx[ax] = 0;
    }
}

pub trait NormSquared {
    fn norm_squared(&self) -> f64;
}

impl NormSquared for WaveFunction1P {
    fn norm_squared(&self) -> f64 {
        WaveFunction1P::norm_squared(self)
    }
}

impl NormSquared for WaveFunctionNP {
    fn norm_squared(&self) -> f64 {
        WaveFunctionNP::norm_squared(self)
    }
}

/// Rectangle-rule `Σ|a|²·Πh` over the stored amplitudes.
pub fn norm_squared<W: NormSquared + ?Sized>(psi: &W) -> f64 {
    psi.norm_squared()
}

/// Normalized Gaussian `exp(-(x-c)²/(4w²))·exp(i k0 x)`; `w` is the standard
/// deviation of `|ψ|²`.
pub fn gaussian_packet(grid: &SpatialGrid, center: f64, width: f64, k0: f64) -> Result<WaveFunction1P> {
    let iv = grid.interval();
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidParameter(format!("packet width must be > 0, got {width}")));
    }
    if !(center > iv.a() && center < iv.b()) {
        return Err(Error::InvalidParameter(format!(
            "packet center {center} outside ({}, {})",
            iv.a(),
            iv.b()
        )));
    }
    let sigma = width * core::f64::consts::SQRT_2;
    let outside = 0.5 * libm::erfc((center - iv.a()) / sigma) + 0.5 * libm::erfc((iv.b() - center) / sigma);
    if outside >= 1e-8 {
        return Err(Error::PacketOverlapsBoundary { mass: outside });
    }
    let values = grid
        .points()
        .into_iter()
        .map(|x| {
            let env = (-(x - center).powi(2) / (4.0 * width * width)).exp();
            C64::from_polar(env, k0 * x)
        })
        .collect();
    Ok(WaveFunction1P::from_values(*grid, values, 0.0)?.normalized())
}

/// Real potential terms: one sampled array per particle plus pair terms.
///
/// The full potential is `Σ_i V_i(x_i) + Σ_{i<j} V_ij(x_i, x_j)`, i.e. the
/// symmetric double sum with the factor ½.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PotentialSpec {
    single: BTreeMap<ParticleLabel, Vec<f64>>,
    pairs: Vec<PairTerm>,
}

#[derive(Debug, Clone, PartialEq)]
struct PairTerm {
    first: ParticleLabel,
    second: ParticleLabel,
    n_second: usize,
    values: Vec<f64>,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn with_single(mut self, label: impl Into<ParticleLabel>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite potential sample".into()));
        }
        self.single.insert(label.into(), values);
        Ok(self)
    }

    /// Adds `V_ij` sampled row-major on `grid_i × grid_j`.
    pub fn with_pair(
        mut self,
        first: impl Into<ParticleLabel>,
        second: impl Into<ParticleLabel>,
        n_first: usize,
        n_second: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let (first, second) = (first.into(), second.into());
        if first == second {
            return Err(Error::DuplicateLabel(first.0));
        }
        if values.len() != n_first * n_second {
            return Err(Error::ShapeMismatch(format!(
                "pair potential has {} samples for a {n_first}x{n_second} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite potential sample".into()));
        }
        if self.pairs.iter().any(|p| {
            (p.first == first && p.second == second) || (p.first == second && p.second == first)
        }) {
            return Err(Error::InvalidParameter(format!("pair ({first}, {second}) given twice")));
        }
        self.pairs.push(PairTerm { first, second, n_second, values });
        Ok(self)
    }

    pub fn single(&self, label: &ParticleLabel) -> Option<&[f64]> {
        self.single.get(label).map(|v| v.as_slice())
    }

    pub fn has_pairs(&self) -> bool {
        !self.pairs.is_empty()
    }

    pub fn pair_labels(&self) -> impl Iterator<Item = (&ParticleLabel, &ParticleLabel)> {
        self.pairs.iter().map(|p| (&p.first, &p.second))
    }

    /// `V_ij(x_i[ki], x_j[kj])`; `V_ji(y, x)` reads the same stored sample as
    /// `V_ij(x, y)`, so the symmetry is exact.
    pub fn pair(&self, i: &ParticleLabel, j: &ParticleLabel, ki: usize, kj: usize) -> Option<f64> {
        self.pairs.iter().find_map(|p| {
            if &p.first == i && &p.second == j {
                Some(p.values[ki * p.n_second + kj])
            } else if &p.first == j && &p.second == i {
                Some(p.values[kj * p.n_second + ki])
            } else {
                None
            }
        })
    }

    /// Drops every term involving `label`.
    pub fn restrict(&self, label: &ParticleLabel) -> Self {
        let mut single = self.single.clone();
        single.remove(label);
        let pairs = self
            .pairs
            .iter()
            .filter(|p| &p.first != label && &p.second != label)
            .cloned()
            .collect();
        Self { single, pairs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectionEvent {
    Detected { time: f64, particle: ParticleLabel, side: Side, location: f64 },
    Never,
}

impl DetectionEvent {
    pub fn is_never(&self) -> bool {
        matches!(self, DetectionEvent::Never)
    }

    pub fn time(&self) -> Option<f64> {
        match self {
            DetectionEvent::Detected { time, .. } => Some(*time),
            DetectionEvent::Never => None,
        }
    }

    pub fn particle(&self) -> Option<&ParticleLabel> {
        match self {
            DetectionEvent::Detected { particle, .. } => Some(particle),
            DetectionEvent::Never => None,
        }
    }
}

/// Binned law of the detection outcome `Z`.
///
/// `bins[f][k]` is the probability of a click on face `faces[f]` during
/// `[t0 + k·bin_dt, t0 + (k+1)·bin_dt)`; `tail` is the survival probability at
/// the end of the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionDistribution {
    pub t0: f64,
    pub bin_dt: f64,
    pub faces: Vec<FaceId>,
    pub bins: Vec<Vec<f64>>,
    pub tail: f64,
    pub p_never_estimate: f64,
    pub fit_residual: f64,
    pub negative_flux_count: usize,
    /// Survival probability at every bin edge (`n_bins + 1` entries).
    pub survival: Vec<f64>,
}

impl DetectionDistribution {
    pub fn n_bins(&self) -> usize {
        self.bins.first().map_or(0, |b| b.len())
    }

    pub fn face_index(&self, face: &FaceId) -> Option<usize> {
        self.faces.iter().position(|f| f == face)
    }

    pub fn face_total(&self, face: &FaceId) -> f64 {
        self.face_index(face).map_or(0.0, |i| self.bins[i].iter().sum())
    }

    pub fn detected_total(&self) -> f64 {
        self.bins.iter().flatten().sum()
    }

    pub fn total(&self) -> f64 {
        self.detected_total() + self.tail
    }

    /// Probability of detection during bin `k` on any face.
    pub fn bin_mass(&self, k: usize) -> f64 {
        self.bins.iter().map(|b| b[k]).sum()
    }

    /// Detection-time CDF `P(T ≤ t)`, linear inside bins.
    pub fn time_cdf(&self, t: f64) -> f64 {
        let u = (t - self.t0) / self.bin_dt;
        if u <= 0.0 {
            return 0.0;
        }
        let n = self.n_bins();
        let full = (u.floor() as usize).min(n);
        let mut acc: f64 = (0..full).map(|k| self.bin_mass(k)).sum();
        if full < n {
            acc += (u - full as f64) * self.bin_mass(full);
        }
        acc
    }

    pub fn bin_start(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.bin_dt
    }

    /// Checks nonnegativity, total mass, and `tail ≥ p_never_estimate`.
    pub fn validate(&self, tol: f64) -> core::result::Result<(), String> {
        if let Some(m) = self.bins.iter().flatten().find(|m| **m < 0.0) {
            return Err(format!("negative bin mass {m:e}"));
        }
        let total = self.total();
        if (total - 1.0).abs() > tol {
            return Err(format!("total mass {total} differs from 1 by more than {tol:e}"));
        }
        if self.tail < self.p_never_estimate - tol {
            return Err(format!(
                "tail {} below never-detected estimate {}",
                self.tail, self.p_never_estimate
            ));
        }
        Ok(())
    }

    /// Re-bins by summing groups of `factor` consecutive bins.
    pub fn coarsen(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let n = self.n_bins() / factor;
        let bins = self
            .bins
            .iter()
            .map(|b| (0..n).map(|k| b[k * factor..(k + 1) * factor].iter().sum()).collect())
            .collect::<Vec<Vec<f64>>>();
        let survival = (0..=n).map(|k| self.survival[k * factor]).collect();
        let dropped: f64 = self.bins.iter().map(|b| b[n * factor..].iter().sum::<f64>()).sum();
        Self {
            t0: self.t0,
            bin_dt: self.bin_dt * factor as f64,
            faces: self.faces.clone(),
            bins,
            tail: self.tail + dropped,
            p_never_estimate: self.p_never_estimate,
            fit_residual: self.fit_residual,
            negative_flux_count: self.negative_flux_count,
            survival,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> SpatialGrid {
        make_grid(Interval1D::new(0.0, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn grid_spacing_and_points() {
        let g = unit_grid(11);
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        let pts = g.points();
        for (k, x) in pts.iter().enumerate() {
            assert!((x - 0.1 * k as f64).abs() < 1e-15);
        }
        assert_eq!(pts[10], 1.0);
        let g = make_grid(Interval1D::new(-3.0, 5.0).unwrap(), 257).unwrap();
        assert_eq!(g.spacing(), 0.03125);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert_eq!(
            make_grid(Interval1D::new(0.0, 1.0).unwrap(), 2),
            Err(Error::TooFewPoints(2))
        );
        assert!(matches!(Interval1D::new(1.0, 1.0), Err(Error::DegenerateInterval { .. })));
        assert!(matches!(Interval1D::new(2.0, 1.0), Err(Error::DegenerateInterval { .. })));
    }

    #[test]
    fn packet_at_rest_is_real_and_normalized() {
        let g = make_grid(Interval1D::new(0.0, 20.0).unwrap(), 401).unwrap();
        let psi = gaussian_packet(&g, 10.0, 1.0, 0.0).unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
        assert!(psi.amplitudes().iter().all(|z| z.im.abs() < 1e-15));
    }

    #[test]
    fn packet_mean_momentum() {
        // <p> = ħ Σ Im(ψ* ψ') h with central differences against the analytic k0.
        let g = make_grid(Interval1D::new(0.0, 20.0).unwrap(), 2001).unwrap();
        let psi = gaussian_packet(&g, 10.0, 1.0, 2.0).unwrap();
        let v = psi.values();
        let h = g.spacing();
        let p: f64 = (1..v.len() - 1)
            .map(|k| (v[k].conj() * (v[k + 1] - v[k - 1]) / (2.0 * h)).im * h)
            .sum();
        assert!((p - 2.0).abs() < 0.02, "mean momentum {p}");
    }

    #[test]
    fn packet_overlapping_boundary_is_rejected() {
        let g = unit_grid(101);
        assert!(matches!(
            gaussian_packet(&g, 0.5, 0.5, 0.0),
            Err(Error::PacketOverlapsBoundary { .. })
        ));
    }

    #[test]
    fn norm_zero_and_scaling() {
        let g = unit_grid(11);
        assert_eq!(norm_squared(&WaveFunction1P::zeros(g, 0.0)), 0.0);
        let g = make_grid(Interval1D::new(0.0, 20.0).unwrap(), 201).unwrap();
        let psi = gaussian_packet(&g, 10.0, 1.0, 1.0).unwrap();
        let n1 = norm_squared(&psi);
        let n2 = norm_squared(&psi.scaled(C64::new(2.0, 0.0)));
        assert!((n2 - 4.0 * n1).abs() < 1e-12);
    }

    #[test]
    fn endpoint_gauge_roundtrip() {
        let g = unit_grid(5);
        let vals: Vec<C64> = (0..5).map(|k| C64::new(k as f64 + 1.0, 0.5)).collect();
        let psi = WaveFunction1P::from_values(g, vals.clone(), 0.0).unwrap();
        for k in 0..5 {
            assert!((psi.value(k) - vals[k]).norm() < 1e-14);
        }
        // rectangle rule on stored amplitudes = trapezoid rule on values
        let trap: f64 = (0..5)
            .map(|k| vals[k].norm_sqr() * if k == 0 || k == 4 { 0.5 } else { 1.0 })
            .sum::<f64>()
            * g.spacing();
        assert!((psi.norm_squared() - trap).abs() < 1e-14);
    }

    #[test]
    fn pair_potential_symmetry_is_exact() {
        let vals: Vec<f64> = (0..12).map(|k| (k as f64).sin()).collect();
        let v = PotentialSpec::zero().with_pair("A", "B", 3, 4, vals).unwrap();
        let (a, b) = (ParticleLabel::new("A"), ParticleLabel::new("B"));
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(v.pair(&a, &b, i, j), v.pair(&b, &a, j, i));
            }
        }
        assert!(v.restrict(&a).pair(&a, &b, 0, 0).is_none());
    }

    #[test]
    fn product_state_norm_factorizes() {
        let g = make_grid(Interval1D::new(0.0, 20.0).unwrap(), 41).unwrap();
        let a = gaussian_packet(&g, 10.0, 1.5, 0.3).unwrap();
        let b = gaussian_packet(&g, 8.0, 1.2, -0.3).unwrap().scaled(C64::new(0.0, 2.0));
        let ab = WaveFunctionNP::product(&[("A".into(), &a), ("B".into(), &b)]).unwrap();
        assert!((ab.norm_squared() - a.norm_squared() * b.norm_squared()).abs() < 1e-12);
        assert!((ab.value(&[3, 5]) - a.value(3) * b.value(5)).norm() < 1e-14);
        assert!((ab.value(&[0, 40]) - a.value(0) * b.value(40)).norm() < 1e-14);
    }
}
