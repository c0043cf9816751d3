//! The law of the detection outcome `Z = (T, X)` from evolved wave functions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::domain::{
    strides, DetectionDistribution, Face, FaceId, PhysicalConstants, WaveFunctionNP, ENDPOINT_GAUGE,
};
use crate::error::{Error, Result};
use crate::evolution::{evolve, step_count, GridState, Trajectory};
use crate::hamiltonian::EffectiveHamiltonian;
use crate::C64;

/// Flux densities in `[-NEGATIVE_FLUX_TOL, 0)` are rounding noise and get clipped.
pub const NEGATIVE_FLUX_TOL: f64 = 1e-14;

/// Relative deviation of `‖ψ0‖²` from 1 that is silently renormalized.
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FluxSample {
    pub time: f64,
    pub face: FaceId,
    pub density: f64,
}

/// Outward flux through `face`: `(ħκ/m)|ψ(boundary)|²`, integrated over the
/// other particles' coordinates.
pub fn boundary_flux(psi: &WaveFunctionNP, face: &Face, constants: &PhysicalConstants) -> Result<FluxSample> {
    let ax = psi.axis_of(&face.particle)?;
    let shape = psi.shape();
    let st = strides(&shape);
    let k = if face.side == crate::Side::Left { 0 } else { shape[ax] - 1 };
    let mut acc = 0.0;
    for (flat, a) in psi.amplitudes().iter().enumerate() {
        if (flat / st[ax]) % shape[ax] == k {
            acc += a.norm_sqr();
        }
    }
    let others: f64 = psi
        .grids()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ax)
        .map(|(_, g)| g.spacing())
        .product();
    let speed = constants.hbar() * face.kappa / constants.mass(&face.particle);
    // stored boundary amplitudes carry the endpoint gauge factor
    let density = speed * acc * others / (ENDPOINT_GAUGE * ENDPOINT_GAUGE);
    Ok(FluxSample { time: psi.time(), face: face.id(), density })
}

/// `r(k)` for a unit incoming wave `e^{ikx}` hitting a right face at `x = 0`.
pub fn reflection_amplitude(k: f64, kappa: f64) -> Result<C64> {
    reflection_amplitude_at(k, kappa, 0.0)
}

/// `r = e^{2ikb}(k − κ)/(k + κ)` for a right face at `x = b`.
pub fn reflection_amplitude_at(k: f64, kappa: f64, b: f64) -> Result<C64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!("wavenumber must be > 0, got {k}")));
    }
    if !(kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
    }
    Ok(C64::from_polar((k - kappa) / (k + kappa), 2.0 * k * b))
}

/// Survival samples `‖ψ_t‖²` and their extrapolated `t → ∞` limit.
#[derive(Debug, Clone, PartialEq)]
pub struct NeverReport {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub estimate: f64,
    /// RMS residual of the tail fit.
    pub residual: f64,
    /// Fitted decay rate of the leaky part.
    pub gamma: f64,
}

/// Fits `c + a·exp(−γt)` to the last third of `(times, values)`.
///
/// Returns `(c, rms residual, γ)` with `c` clamped to `[0, last value]`.
pub fn fit_tail(times: &[f64], values: &[f64]) -> (f64, f64, f64) {
    let n = times.len();
    let last = values.last().copied().unwrap_or(0.0);
    if n < 3 {
        return (last.clamp(0.0, 1.0), 0.0, 0.0);
    }
    let start = (2 * n) / 3;
    let start = start.min(n - 3);
    let (t, y) = (&times[start..], &values[start..]);
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    if hi - lo <= 1e-14 * hi.abs().max(1e-300) {
        return (last.clamp(0.0, last.max(0.0)), 0.0, 0.0);
    }
    let span = t[t.len() - 1] - t[0];
    let fit = |g: f64| -> (f64, f64, f64) {
        // least squares for c + a·e^{−g(t−t_start)}
        let (mut s1, mut se, mut see, mut sy, mut sey) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let e = (-g * (ti - t[0])).exp();
            s1 += 1.0;
            se += e;
            see += e * e;
            sy += yi;
            sey += e * yi;
        }
        let det = s1 * see - se * se;
        if det.abs() < 1e-300 {
            return (f64::INFINITY, last, 0.0);
        }
        let c = (see * sy - se * sey) / det;
        let a = (s1 * sey - se * sy) / det;
        let r: f64 = t
            .iter()
            .zip(y)
            .map(|(ti, yi)| {
                let d = c + a * (-g * (ti - t[0])).exp() - yi;
                d * d
            })
            .sum();
        ((r / s1).sqrt(), c, a)
    };
    let (lg_lo, lg_hi) = ((0.05 / span).ln(), (2000.0 / span).ln());
    let m = 240;
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..=m {
        let g = (lg_lo + (lg_hi - lg_lo) * i as f64 / m as f64).exp();
        let r = fit(g).0;
        if r < best.0 {
            best = (r, i);
        }
    }
    // golden-section refinement in log γ around the best grid point
    let step = (lg_hi - lg_lo) / m as f64;
    let (mut a, mut b) = (lg_lo + step * (best.1 as f64 - 1.0), lg_lo + step * (best.1 as f64 + 1.0));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (fit(x1.exp()).0, fit(x2.exp()).0);
    for _ in 0..60 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = fit(x1.exp()).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = fit(x2.exp()).0;
        }
    }
    let g = (0.5 * (a + b)).exp();
    let (r, c, _) = fit(g);
    (c.clamp(0.0, last.max(0.0)), r, g)
}

/// `‖ψ_t‖²` on `t_grid` and its extrapolated limit.
pub fn prob_never<S: GridState>(
    psi0: &S,
    h: &EffectiveHamiltonian,
    t_grid: &[f64],
    dt: f64,
) -> Result<NeverReport> {
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must be increasing".into()));
    }
    let mut cur = psi0.clone();
    let mut norms = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if t > cur.stamp() {
            let tr = evolve(&cur, h, t, dt, 0)?;
            cur = tr.final_state().clone();
        }
        norms.push(cur.norm_squared());
    }
    let (estimate, residual, gamma) = fit_tail(t_grid, &norms);
    Ok(NeverReport { times: t_grid.to_vec(), norms, estimate, residual, gamma })
}

/// A detection distribution together with the run that produced it.
#[derive(Debug, Clone)]
pub struct DetectionRun<S> {
    pub distribution: DetectionDistribution,
    pub trajectory: Trajectory<S>,
}

/// Checks `‖ψ0‖² ≈ 1` and renormalizes small deviations.
pub fn normalized_input<S: GridState>(psi0: &S) -> Result<S> {
    let n2 = psi0.norm_squared();
    if !((n2 - 1.0).abs() <= NORMALIZATION_TOL) {
        return Err(Error::NotNormalized { norm_squared: n2 });
    }
    let mut out = psi0.clone();
    let s = 1.0 / n2.sqrt();
    out.amps_mut().iter_mut().for_each(|z| *z *= s);
    Ok(out)
}

/// Bins per-step face losses into a distribution.
///
/// `norms` has one entry per step edge; `steps_per_bin` must divide the step
/// count.
pub fn distribution_from_losses(
    t0: f64,
    dt: f64,
    steps_per_bin: usize,
    faces: Vec<FaceId>,
    step_losses: &[Vec<f64>],
    norms: &[f64],
) -> DetectionDistribution {
    let spb = steps_per_bin.max(1);
    let n_bins = step_losses.len() / spb;
    let mut bins = vec![vec![0.0; n_bins]; faces.len()];
    let mut negative = 0usize;
    for (s, losses) in step_losses.iter().enumerate() {
        let k = (s / spb).min(n_bins.saturating_sub(1));
        for (f, &l) in losses.iter().enumerate() {
            let l = if l < 0.0 {
                negative += 1;
                if l >= -NEGATIVE_FLUX_TOL {
                    0.0
                } else {
                    l
                }
            } else {
                l
            };
            bins[f][k] += l;
        }
    }
    let tail = *norms.last().unwrap_or(&1.0);
    let times: Vec<f64> = (0..norms.len()).map(|k| t0 + k as f64 * dt).collect();
    let (p_never_estimate, fit_residual, _) = fit_tail(&times, norms);
    let survival = (0..=n_bins).map(|k| norms[k * spb]).collect();
    DetectionDistribution {
        t0,
        bin_dt: dt * spb as f64,
        faces,
        bins,
        tail,
        p_never_estimate,
        fit_residual,
        negative_flux_count: negative,
        survival,
    }
}

/// Flux-law distribution of `Z` with one bin per time step.
pub fn detection_distribution<S: GridState>(
    psi0: &S,
    h: &EffectiveHamiltonian,
    t_max: f64,
    dt: f64,
) -> Result<DetectionDistribution> {
    Ok(detection_run(psi0, h, t_max, dt, 1, 0)?.distribution)
}

/// Like [`detection_distribution`] with `steps_per_bin` steps per bin and
/// snapshots every `cadence` steps kept.
///
/// The step is shrunk so that a whole number of bins covers `[t0, t_max]`.
pub fn detection_run<S: GridState>(
    psi0: &S,
    h: &EffectiveHamiltonian,
    t_max: f64,
    dt: f64,
    steps_per_bin: usize,
    cadence: usize,
) -> Result<DetectionRun<S>> {
    let psi0 = normalized_input(psi0)?;
    let t0 = psi0.stamp();
    if !(t_max > t0) {
        return Err(Error::InvalidParameter(format!("t_max {t_max} must exceed t0 {t0}")));
    }
    let spb = steps_per_bin.max(1);
    let (n, _) = step_count(t0, t_max, dt)?;
    let n = n.div_ceil(spb) * spb;
    let dt_eff = (t_max - t0) / n as f64;
    let trajectory = evolve(&psi0, h, t_max, dt_eff * (1.0 + 1e-13), cadence)?;
    debug_assert_eq!(trajectory.n_steps, n);
    let distribution = distribution_from_losses(
        t0,
        trajectory.dt,
        spb,
        trajectory.faces.clone(),
        &trajectory.step_losses,
        &trajectory.norms,
    );
    Ok(DetectionRun { distribution, trajectory })
}
