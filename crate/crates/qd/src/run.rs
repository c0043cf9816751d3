//! One pipeline per experiment kind.

use std::collections::BTreeMap;
use std::path::Path;

use absorb_core::bohm::{
    evolve_series, integrate_trajectory, simulate_sample, BohmSeries, BohmStats, InitialSampler,
};
use absorb_core::detection::{detection_run, distribution_from_losses};
use absorb_core::evolution::{evolve, step_count};
use absorb_core::moving::{admissibility_margin, evolve_moving_np, moving_detection_distribution, MovingRun};
use absorb_core::multiparticle::{DetectionRecord, Sampler, SystemParams};
use absorb_core::povm::{build_joint_povm, build_single_povm, JointBin};
use absorb_core::stats::ks_statistic;
use absorb_core::{
    build_effective_hamiltonian, DetectionDistribution, DetectionEvent, EffectiveHamiltonian, WaveFunctionNP,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Kind};
use crate::error::QdError;
use crate::io::{num, OutDir};
use crate::report::{config_hash, emit_report, versions, Check, Failure, ReportRow, RunManifest, Status, MANIFEST};

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

type Checks = BTreeMap<String, Check>;

/// Runs `cfg` into `out` and writes its manifest. Only problems with the
/// output directory itself are returned as errors; pipeline failures end up
/// in the manifest.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<RunManifest, QdError> {
    let mut dir = OutDir::prepare(out)?;
    let mut checks = Checks::new();
    let mut child_codes = Vec::new();
    let result = match cfg.kind {
        Kind::Evolve => run_evolve(cfg, &mut dir, &mut checks),
        Kind::Detect => run_detect(cfg, &mut dir, &mut checks),
        Kind::Moving => run_moving(cfg, &mut dir, &mut checks),
        Kind::Multi => run_multi(cfg, &mut dir, &mut checks),
        Kind::Bohm => run_bohm(cfg, &mut dir, &mut checks, opts),
        Kind::PovmCheck => run_povm(cfg, &mut dir, &mut checks),
        Kind::Sweep => run_sweep(cfg, &mut dir, &mut checks, opts, &mut child_codes),
    };
    let (status, exit_code, failure) = match result {
        Ok(()) => {
            let worst_child = child_codes.iter().copied().max().unwrap_or(0);
            if checks.values().all(|c| c.pass) && worst_child == 0 {
                (Status::Passed, 0, None)
            } else if worst_child == 1 {
                (Status::Error, 1, None)
            } else {
                (Status::ChecksFailed, 2, None)
            }
        }
        Err(e) => {
            let stage = match &e {
                QdError::Module { stage, .. } => stage.to_string(),
                QdError::Io(_) => "write".into(),
                _ => "setup".into(),
            };
            let code = e.exit_code();
            (Status::Error, code, Some(Failure { stage, message: e.to_string() }))
        }
    };
    let manifest = RunManifest {
        kind: cfg.kind.as_str().into(),
        status,
        exit_code,
        config_hash: config_hash(&cfg.raw),
        seed: cfg.seed(),
        failure,
        checks,
        artifacts: dir.entries(),
        versions: versions(),
    };
    crate::io::write_atomic(&out.join(MANIFEST), &crate::io::json_bytes(&manifest))?;
    Ok(manifest)
}

fn hamiltonian(cfg: &ExperimentConfig, psi: &WaveFunctionNP) -> Result<EffectiveHamiltonian, QdError> {
    let grids: Vec<_> = psi.labels().iter().cloned().zip(psi.grids().iter().copied()).collect();
    let v = cfg.potential().map_err(QdError::module("setup"))?;
    build_effective_hamiltonian(&grids, &v, &cfg.static_faces(), &cfg.constants).map_err(QdError::module("setup"))
}

fn initial(cfg: &ExperimentConfig) -> Result<WaveFunctionNP, QdError> {
    cfg.initial_state().map_err(QdError::module("setup"))
}

fn params(cfg: &ExperimentConfig) -> Result<SystemParams, QdError> {
    Ok(SystemParams::new(
        cfg.constants.clone(),
        cfg.potential().map_err(QdError::module("setup"))?,
        cfg.static_faces(),
    ))
}

/// A step no larger than `dt` that splits `[0, t_max]` into whole bins.
fn binned_dt(cfg: &ExperimentConfig) -> Result<(usize, f64), QdError> {
    let spb = cfg.time.steps_per_bin;
    let (n, _) = step_count(0.0, cfg.time.t_max, cfg.time.dt).map_err(QdError::module("setup"))?;
    let n = n.div_ceil(spb) * spb;
    Ok((n, cfg.time.t_max / n as f64))
}

fn max_growth(norms: &[f64]) -> f64 {
    norms.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(0.0, f64::max)
}

fn distribution_checks(d: &DetectionDistribution, checks: &mut Checks) {
    checks.insert("mass_balance".into(), Check::at_most((d.total() - 1.0).abs(), 1e-10));
    let min = d.bins.iter().flatten().copied().fold(0.0, f64::min);
    checks.insert("flux_nonnegative".into(), Check::at_least(min, -absorb_core::detection::NEGATIVE_FLUX_TOL));
}

fn distribution_summary(d: &DetectionDistribution) -> Value {
    let face_mass: BTreeMap<String, f64> = d.faces.iter().enumerate().map(|(f, id)| (id.to_string(), d.bins[f].iter().sum())).collect();
    json!({
        "t0": d.t0,
        "bin_dt": d.bin_dt,
        "n_bins": d.n_bins(),
        "tail": d.tail,
        "p_never_estimate": d.p_never_estimate,
        "fit_residual": d.fit_residual,
        "negative_flux_count": d.negative_flux_count,
        "detected_total": d.detected_total(),
        "face_mass": face_mass,
    })
}

fn with_checks(mut summary: Value, checks: &Checks) -> Value {
    summary["checks"] = serde_json::to_value(checks).expect("serializable");
    summary
}

fn state_csv(psi: &WaveFunctionNP, out: &mut String) {
    let shape = psi.shape();
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..psi.amplitudes().len() {
        let mut rem = flat;
        for ax in (0..shape.len()).rev() {
            idx[ax] = rem % shape[ax];
            rem /= shape[ax];
        }
        let z = psi.value(&idx);
        out.push_str(&num(psi.time()));
        for (ax, k) in idx.iter().enumerate() {
            out.push(',');
            out.push_str(&num(psi.grids()[ax].point(*k)));
        }
        out.push_str(&format!(",{},{}\n", num(z.re), num(z.im)));
    }
}

fn coordinate_header(n: usize) -> String {
    (1..=n).map(|i| if i == 1 { "x".to_string() } else { format!("x{i}") }).collect::<Vec<_>>().join(",")
}

fn run_evolve(cfg: &ExperimentConfig, dir: &mut OutDir, checks: &mut Checks) -> Result<(), QdError> {
    let psi = initial(cfg)?;
    let h = hamiltonian(cfg, &psi)?;
    let tr = evolve(&psi, &h, cfg.time.t_max, cfg.time.dt, cfg.time.snapshot_every).map_err(QdError::module("evolve"))?;
    let mut norms = String::from("step,t,norm_squared\n");
    for (k, n) in tr.norms.iter().enumerate() {
        norms.push_str(&format!("{k},{},{}\n", num(tr.time_at(k)), num(*n)));
    }
    dir.write("norms.csv", norms.as_bytes())?;
    let mut snaps = format!("t,{},re,im\n", coordinate_header(psi.labels().len()));
    for s in &tr.snapshots {
        state_csv(s, &mut snaps);
    }
    dir.write("snapshots.csv", snaps.as_bytes())?;
    let growth = max_growth(&tr.norms);
    checks.insert("contraction".into(), Check::at_most(growth, absorb_core::evolution::CONTRACTION_TOL));
    let summary = json!({
        "n_steps": tr.n_steps,
        "dt": tr.dt,
        "final_norm_squared": tr.norms.last(),
        "max_relative_norm_growth": growth,
    });
    dir.write_json("summary.json", &with_checks(summary, checks))
}

fn run_detect(cfg: &ExperimentConfig, dir: &mut OutDir, checks: &mut Checks) -> Result<(), QdError> {
    let psi = initial(cfg)?;
    let h = hamiltonian(cfg, &psi)?;
    let run = detection_run(&psi, &h, cfg.time.t_max, cfg.time.dt, cfg.time.steps_per_bin, 0)
        .map_err(QdError::module("detect"))?;
    let d = &run.distribution;
    dir.write("dist.csv", crate::io::distribution_csv(d).as_bytes())?;
    checks.insert("contraction".into(), Check::at_most(max_growth(&run.trajectory.norms), 1e-12));
    distribution_checks(d, checks);
    let mut summary = distribution_summary(d);
    summary["n_steps"] = json!(run.trajectory.n_steps);
    summary["dt"] = json!(run.trajectory.dt);
    dir.write_json("summary.json", &with_checks(summary, checks))
}

fn moving_run(cfg: &ExperimentConfig, psi: &WaveFunctionNP, cadence: usize) -> Result<MovingRun, QdError> {
    let ps = cfg.moving_particles().map_err(QdError::module("setup"))?;
    let pair = cfg.moving_pair_potential().map_err(QdError::module("setup"))?;
    let (_, dt) = binned_dt(cfg)?;
    evolve_moving_np(psi, &ps, &pair, &cfg.constants, cfg.time.t_max, dt * (1.0 + 1e-13), cadence)
        .map_err(QdError::module("evolve"))
}

fn run_moving(cfg: &ExperimentConfig, dir: &mut OutDir, checks: &mut Checks) -> Result<(), QdError> {
    let psi = initial(cfg)?;
    let psi = absorb_core::detection::normalized_input(&psi).map_err(QdError::module("setup"))?;
    let run = moving_run(cfg, &psi, 0)?;
    let d = moving_detection_distribution(&run, cfg.time.steps_per_bin).map_err(QdError::module("detect"))?;
    dir.write("dist.csv", crate::io::distribution_csv(&d).as_bytes())?;
    let min_margin = run
        .midpoint_faces
        .iter()
        .flatten()
        .map(|s| admissibility_margin(s, &cfg.constants))
        .fold(f64::INFINITY, f64::min);
    let min_rate = run.step_losses.iter().flatten().map(|l| l / run.dt).fold(f64::INFINITY, f64::min);
    checks.insert("contraction".into(), Check::at_most(max_growth(&run.norms), 1e-12));
    checks.insert("integrand_nonnegative".into(), Check::at_least(min_rate, -1e-12));
    checks.insert("admissibility".into(), Check::at_least(min_margin, -absorb_core::moving::ADMISSIBILITY_TOL));
    distribution_checks(&d, checks);
    let mut summary = distribution_summary(&d);
    summary["n_steps"] = json!(run.n_steps);
    summary["dt"] = json!(run.dt);
    summary["min_admissibility_margin"] = json!(min_margin);
    summary["min_integrand"] = json!(min_rate);
    dir.write_json("summary.json", &with_checks(summary, checks))
}

fn event_json(e: &DetectionEvent) -> Value {
    match e {
        DetectionEvent::Detected { time, particle, side, location } => {
            json!({"particle": particle.as_str(), "time": time, "side": side.as_str(), "location": location})
        }
        DetectionEvent::Never => Value::Null,
    }
}

fn run_multi(cfg: &ExperimentConfig, dir: &mut OutDir, checks: &mut Checks) -> Result<(), QdError> {
    let s = cfg.sampler.as_ref().expect("validated sampler");
    let psi = initial(cfg)?;
    let params = params(cfg)?;
    let (_, dt) = binned_dt(cfg)?;
    let mut sampler =
        Sampler::new(&psi, &params, cfg.time.t_max, dt * (1.0 + 1e-13)).map_err(QdError::module("evolve"))?;
    let records = sampler.sample_many(s.seed, s.n).map_err(QdError::module("sample"))?;
    let mut lines = String::new();
    let mut invalid = 0usize;
    let mut counts = vec![0usize; psi.labels().len() + 1];
    let mut per_particle: BTreeMap<String, usize> = psi.labels().iter().map(|l| (l.to_string(), 0)).collect();
    for (i, r) in records.iter().enumerate() {
        invalid += usize::from(r.validate().is_err());
        counts[r.detected_count()] += 1;
        for e in &r.events {
            if let Some(p) = e.particle() {
                *per_particle.get_mut(p.as_str()).expect("known label") += 1;
            }
        }
        let events: Vec<Value> = r.events.iter().map(event_json).collect();
        lines.push_str(&serde_json::to_string(&json!({"sample": i, "events": events})).expect("JSON"));
        lines.push('\n');
    }
    dir.write("records.jsonl", lines.as_bytes())?;
    let first = distribution_from_losses(
        0.0,
        sampler.dt(),
        cfg.time.steps_per_bin,
        params.hamiltonian(&psi).map_err(QdError::module("setup"))?.face_ids(),
        &sampler.first_stage_losses(),
        sampler.first_stage_norms(),
    );
    dir.write("dist.csv", crate::io::distribution_csv(&first).as_bytes())?;
    let firsts: Vec<Option<f64>> = records.iter().map(|r: &DetectionRecord| r.events[0].time()).collect();
    let ks = ks_statistic(&firsts, |t| first.time_cdf(t));
    let bound = 1.63 / (s.n as f64).sqrt() + 0.02;
    checks.insert("records_valid".into(), Check::at_most(invalid as f64, 0.0));
    if s.n >= 100 {
        checks.insert("first_detection_ks".into(), Check::at_most(ks, bound));
    }
    distribution_checks(&first, checks);
    let mut summary = distribution_summary(&first);
    summary["samples"] = json!(s.n);
    summary["seed"] = json!(s.seed);
    summary["ties"] = json!(sampler.ties);
    summary["detected_count_histogram"] = json!(counts);
    summary["detections_per_particle"] = json!(per_particle);
    summary["first_detection_ks"] = json!(ks);
    dir.write_json("summary.json", &with_checks(summary, checks))
}

fn run_bohm(cfg: &ExperimentConfig, dir: &mut OutDir, checks: &mut Checks, opts: RunOptions) -> Result<(), QdError> {
    let s = cfg.sampler.as_ref().expect("validated sampler");
    let psi = initial(cfg)?;
    let psi = absorb_core::detection::normalized_input(&psi).map_err(QdError::module("setup"))?;
    let (_, dt) = binned_dt(cfg)?;
    let spb = cfg.time.steps_per_bin;
    let (series, law) = if cfg.is_moving() {
        let run = moving_run(cfg, &psi, 1)?;
        let law = moving_detection_distribution(&run, spb).map_err(QdError::module("detect"))?;
        (BohmSeries::from_moving_run(&run).map_err(QdError::module("evolve"))?, law)
    } else {
        let h = hamiltonian(cfg, &psi)?;
        let law = detection_run(&psi, &h, cfg.time.t_max, dt * (1.0 + 1e-13), spb, 0)
            .map_err(QdError::module("detect"))?
            .distribution;
        let series = evolve_series(&psi, &h, &cfg.constants, cfg.time.t_max, dt * (1.0 + 1e-13))
            .map_err(QdError::module("evolve"))?;
        (series, law)
    };
    let dt_traj = s.dt_traj.unwrap_or(0.5 * dt);
    let sampler = InitialSampler::new(series.initial_state());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| QdError::Usage(format!("thread pool: {e}")))?;
    let outcomes = pool
        .install(|| {
            (0..s.n as u64)
                .into_par_iter()
                .map(|i| simulate_sample(&series, &sampler, s.seed, i, dt_traj, s.n))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(QdError::module("sample"))?;
    let stats = BohmStats { outcomes };
    let emp = stats.distribution(law.t0, law.bin_dt, law.n_bins(), &law.faces);
    dir.write("dist.csv", crate::io::distribution_csv(&emp).as_bytes())?;
    dir.write("flux_dist.csv", crate::io::distribution_csv(&law).as_bytes())?;

    let labels = series.labels().to_vec();
    let mut exits = String::from("sample_id,t_exit,face,exit_speed\n");
    let mut worst_speed: f64 = 0.0;
    let mut n_exits = 0usize;
    for (i, o) in stats.outcomes.iter().enumerate() {
        match &o.exit {
            DetectionEvent::Detected { time, particle, side, .. } => {
                let v = o.exit_speed.unwrap_or(f64::NAN);
                exits.push_str(&format!("{i},{},{particle}:{},{}\n", num(*time), side.as_str(), num(v)));
                let ax = labels.iter().position(|l| l == particle).expect("known label");
                let kappa = series.kappa(*time, ax, *side).map_err(QdError::module("sample"))?;
                let expect = cfg.constants.hbar() * kappa / cfg.constants.mass(particle);
                worst_speed = worst_speed.max((v - expect).abs() / expect.abs().max(f64::MIN_POSITIVE));
                n_exits += 1;
            }
            DetectionEvent::Never => exits.push_str(&format!("{i},,,\n")),
        }
    }
    dir.write("exits.csv", exits.as_bytes())?;
    if s.dump_trajectories > 0 {
        let mut tr = format!("sample_id,t,{}\n", coordinate_header(labels.len()));
        for (i, o) in stats.outcomes.iter().take(s.dump_trajectories).enumerate() {
            let path = integrate_trajectory(&series, &o.x0, series.t_start(), dt_traj, true)
                .map_err(QdError::module("sample"))?;
            for (t, x) in path.times.iter().zip(&path.positions) {
                let xs: Vec<String> = x.iter().map(|v| num(*v)).collect();
                tr.push_str(&format!("{i},{},{}\n", num(*t), xs.join(",")));
            }
        }
        dir.write("trajectories.csv", tr.as_bytes())?;
    }
    let ks = ks_statistic(&stats.exit_times(), |t| law.time_cdf(t));
    let bound = 1.63 / (s.n as f64).sqrt() + 0.02;
    checks.insert("exit_time_ks".into(), Check::at_most(ks, bound));
    if n_exits > 0 {
        checks.insert("exit_speed_identity".into(), Check::at_most(worst_speed, 0.02));
    }
    let shares: BTreeMap<String, f64> = law.faces.iter().map(|f| (f.to_string(), stats.face_share(f))).collect();
    let mut summary = distribution_summary(&emp);
    summary["samples"] = json!(s.n);
    summary["seed"] = json!(s.seed);
    summary["dt_traj"] = json!(dt_traj);
    summary["faults"] = json!(stats.faults());
    summary["node_discards"] = json!(stats.discards());
    summary["never_share"] = json!(stats.never_share());
    summary["face_share"] = json!(shares);
    summary["exit_time_ks"] = json!(ks);
    summary["exit_time_ks_bound"] = json!(bound);
    summary["exit_speed_max_relative_deviation"] = json!(worst_speed);
    summary["flux_law"] = distribution_summary(&law);
    dir.write_json("summary.json", &with_checks(summary, checks))
}

fn run_povm(cfg: &ExperimentConfig, dir: &mut OutDir, checks: &mut Checks) -> Result<(), QdError> {
    let psi = initial(cfg)?;
    let spb = cfg.time.steps_per_bin;
    if psi.labels().len() == 1 {
        let h = hamiltonian(cfg, &psi)?;
        let povm = build_single_povm(&h, 0.0, cfg.time.t_max, cfg.time.dt, spb).map_err(QdError::module("povm"))?;
        let rep = povm.report();
        let flux = detection_run(&psi, &h, cfg.time.t_max, cfg.time.dt, spb, 0).map_err(QdError::module("detect"))?;
        let mut d = flux.distribution.clone();
        let mut worst: f64 = 0.0;
        for f in 0..d.faces.len() {
            for k in 0..d.n_bins() {
                let p = povm.probability(povm.element(f, k), psi.amplitudes());
                worst = worst.max((p - d.bins[f][k]).abs());
                d.bins[f][k] = p;
            }
        }
        d.tail = povm.probability(&povm.infinity, psi.amplitudes());
        dir.write("dist.csv", crate::io::distribution_csv(&d).as_bytes())?;
        let report = json!({
            "particles": 1,
            "dims": rep.dims,
            "bin_count": rep.bin_count,
            "min_eigenvalue": rep.min_eigenvalue,
            "completeness_residual": rep.completeness_residual,
            "hermiticity_defect": rep.hermiticity_defect,
            "tail_change": povm.tail_change,
            "max_flux_difference": worst,
        });
        dir.write_json("povm_report.json", &report)?;
        checks.insert("hermiticity".into(), Check::at_most(rep.hermiticity_defect, 1e-10));
        checks.insert("positivity".into(), Check::at_least(rep.min_eigenvalue, -1e-8));
        checks.insert("completeness".into(), Check::at_most(rep.completeness_residual, 1e-8));
        checks.insert("flux_agreement".into(), Check::at_most(worst, 1e-6));
        let mut summary = distribution_summary(&d);
        summary["povm"] = report;
        dir.write_json("summary.json", &with_checks(summary, checks))
    } else {
        let params = params(cfg)?;
        let labels = psi.labels().to_vec();
        let rep = build_joint_povm(
            &labels,
            psi.grids(),
            &params,
            0.0,
            cfg.time.t_max,
            cfg.time.dt,
            spb,
            &[&psi],
            true,
            |_, _| {},
        )
        .map_err(QdError::module("povm"))?;
        let mut csv = String::from("first_face,first_bin_start,second_face,second_bin_start,mass\n");
        let bin = |k: usize| num(k as f64 * rep.bin_dt);
        let mut total = 0.0;
        for (b, p) in &rep.expectations[0] {
            total += p;
            let row = match *b {
                JointBin::Pair { f1, k1, f2, k2 } => {
                    format!("{},{},{},{}", rep.faces[f1], bin(k1), rep.faces[f2], bin(k2))
                }
                JointBin::SecondNever { f1, k1 } => format!("{},{},never,", rep.faces[f1], bin(k1)),
                JointBin::Never => "never,,never,".into(),
            };
            csv.push_str(&format!("{row},{}\n", num(*p)));
        }
        dir.write("joint.csv", csv.as_bytes())?;
        let report = json!({
            "particles": 2,
            "dims": rep.dims,
            "bin_count": rep.bin_count,
            "n_bins": rep.n_bins,
            "bin_dt": rep.bin_dt,
            "min_eigenvalue": rep.min_eigenvalue,
            "completeness_residual": rep.completeness_residual,
            "hermiticity_defect": rep.hermiticity_defect,
            "reversed_time_norm": rep.reversed_time_norm,
            "total_probability": total,
        });
        dir.write_json("povm_report.json", &report)?;
        checks.insert("positivity".into(), Check::at_least(rep.min_eigenvalue, -1e-6));
        checks.insert("completeness".into(), Check::at_most(rep.completeness_residual, 1e-6));
        checks.insert("reversed_time".into(), Check::at_most(rep.reversed_time_norm, 1e-12));
        checks.insert("mass_balance".into(), Check::at_most((total - 1.0).abs(), 1e-8));
        dir.write_json("summary.json", &with_checks(json!({"povm": report}), checks))
    }
}

fn run_sweep(
    cfg: &ExperimentConfig,
    dir: &mut OutDir,
    checks: &mut Checks,
    opts: RunOptions,
    child_codes: &mut Vec<i32>,
) -> Result<(), QdError> {
    let sweep = cfg.sweep.as_ref().expect("validated sweep");
    let children = cfg.expand_sweep()?;
    let names: Vec<String> = (0..children.len()).map(|i| format!("child-{i:03}")).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| QdError::Usage(format!("thread pool: {e}")))?;
    // children share the pool; each runs its own sampling single-threaded
    let root = dir.root().to_path_buf();
    let manifests = pool.install(|| {
        children
            .par_iter()
            .zip(names.par_iter())
            .map(|(c, name)| run_experiment(c, &root.join(name), RunOptions { workers: 1 }))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let face = cfg.face_ids()[sweep.face].to_string();
    let mut rows = Vec::new();
    for ((m, name), k) in manifests.iter().zip(&names).zip(&sweep.kappas) {
        let mut entries = m.artifacts.clone();
        let bytes = std::fs::read(root.join(name).join(MANIFEST))?;
        entries.push(crate::io::ArtifactEntry {
            path: MANIFEST.into(),
            bytes: bytes.len(),
            sha256: crate::io::sha256_hex(&bytes),
        });
        dir.adopt(name, &entries);
        for (c, v) in &m.checks {
            checks.insert(format!("{name}/{c}"), v.clone());
        }
        child_codes.push(m.exit_code);
        let summary = std::fs::read(root.join(name).join("summary.json"))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or(Value::Null);
        rows.push(ReportRow { name: name.clone(), manifest: m.clone(), summary, face: face.clone(), kappa: *k });
    }
    dir.write("report.csv", emit_report(&rows)?.as_bytes())
}
