use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use absorb_qd::io::{list_files, sha256_hex};
use absorb_qd::report::read_manifest;
use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_absorb-qd"));
    c.env_remove("ABSORB_QD_WORKERS");
    c
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn run(kind: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(kind).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn detect_config() -> Value {
    json!({
        "kind": "detect",
        "particles": [{"label": "A", "interval": [0, 20], "n_points": 200}],
        "faces": [{"particle": "A", "side": "right", "kappa": 2.0}, {"particle": "A", "side": "left", "kappa": 2.0}],
        "initial_state": {"packets": [{"particle": "A", "center": 10, "width": 1.0, "k0": 2.0}]},
        "time": {"t_max": 6, "dt": 0.02, "steps_per_bin": 5}
    })
}

fn bohm_config(n: usize, seed: u64) -> Value {
    json!({
        "kind": "bohm",
        "particles": [{"label": "A", "interval": [0, 10], "n_points": 121}],
        "faces": [{"particle": "A", "side": "right", "kappa": 1.0}, {"particle": "A", "side": "left", "kappa": 0.5}],
        "initial_state": {"packets": [{"particle": "A", "center": 5, "width": 0.8, "k0": 1.0}]},
        "time": {"t_max": 10, "dt": 0.02, "steps_per_bin": 10},
        "sampler": {"n": n, "seed": seed, "dump_trajectories": 3}
    })
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    list_files(dir).unwrap().into_iter().map(|f| (f.clone(), fs::read(dir.join(&f)).unwrap())).collect()
}

fn assert_manifest_complete(dir: &Path) {
    let m = read_manifest(dir).unwrap();
    let mut listed: Vec<String> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    assert_eq!(list_files(dir).unwrap(), listed);
    for a in &m.artifacts {
        let bytes = fs::read(dir.join(&a.path)).unwrap();
        assert_eq!(bytes.len(), a.bytes, "{}", a.path);
        assert_eq!(sha256_hex(&bytes), a.sha256, "{}", a.path);
    }
}

#[test]
fn detect_writes_distribution_summary_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &detect_config());
    let out = tmp.path().join("out");
    let o = run("detect", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(list_files(&out).unwrap(), ["dist.csv", "manifest.json", "summary.json"]);
    let csv = fs::read_to_string(out.join("dist.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t_bin_start,face,mass"));
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    for k in ["tail", "p_never_estimate", "fit_residual", "negative_flux_count"] {
        assert!(summary.get(k).is_some(), "{k}");
    }
    let m = read_manifest(&out).unwrap();
    assert!(m.passed() && m.exit_code == 0 && m.failure.is_none());
    assert_manifest_complete(&out);
}

#[test]
fn identical_runs_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &detect_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run("detect", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("detect", &cfg, &b, &[])), 0);
    assert_eq!(snapshot(&a), snapshot(&b));
    // rerunning into the same directory replaces the earlier artifacts
    assert_eq!(code(&run("detect", &cfg, &a, &[])), 0);
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn bohm_output_does_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &bohm_config(300, 17));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let oa = run("bohm", &cfg, &a, &["--workers", "1"]);
    assert_eq!(code(&oa), 0, "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = bin()
        .env("ABSORB_QD_WORKERS", "4")
        .args(["bohm", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(code(&ob), 0);
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_manifest_complete(&a);
    let exits = fs::read_to_string(a.join("exits.csv")).unwrap();
    assert_eq!(exits.lines().count(), 301);
    let traj = fs::read_to_string(a.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("sample_id,t,x"));
    assert!(traj.lines().skip(1).all(|l| ["0,", "1,", "2,"].iter().any(|p| l.starts_with(p))));
}

#[test]
fn different_seeds_give_different_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run("bohm", &write_config(tmp.path(), "a.json", &bohm_config(100, 1)), &a, &[]);
    run("bohm", &write_config(tmp.path(), "b.json", &bohm_config(100, 2)), &b, &[]);
    assert_ne!(fs::read(a.join("exits.csv")).unwrap(), fs::read(b.join("exits.csv")).unwrap());
}

#[test]
fn povm_check_reports_completeness() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = detect_config();
    v["kind"] = json!("povm-check");
    v["particles"][0]["n_points"] = json!(48);
    v["time"] = json!({"t_max": 4, "dt": 0.05, "steps_per_bin": 10});
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    assert_eq!(code(&run("povm-check", &cfg, &out, &[])), 0);
    let rep: Value = serde_json::from_slice(&fs::read(out.join("povm_report.json")).unwrap()).unwrap();
    assert!(rep["completeness_residual"].as_f64().unwrap() < 1e-8);
    assert!(rep["min_eigenvalue"].as_f64().unwrap() > -1e-8);
    assert_manifest_complete(&out);
}

#[test]
fn two_particle_povm_check_writes_joint_table() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "kind": "povm-check",
        "particles": [
            {"label": "A", "interval": [0, 6], "n_points": 12},
            {"label": "B", "interval": [0, 6], "n_points": 12}
        ],
        "faces": [{"particle": "A", "side": "right", "kappa": 1.5}, {"particle": "B", "side": "left", "kappa": 1.0}],
        "initial_state": {"packets": [
            {"particle": "A", "center": 3, "width": 0.5, "k0": 1.0},
            {"particle": "B", "center": 3, "width": 0.5, "k0": -1.0}
        ]},
        "time": {"t_max": 3, "dt": 0.1, "steps_per_bin": 10}
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run("povm-check", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let joint = fs::read_to_string(out.join("joint.csv")).unwrap();
    let total: f64 = joint.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn sweep_reflection_follows_the_plane_wave_law() {
    let tmp = tempfile::tempdir().unwrap();
    let kappas = [0.5, 1.0, 2.0, 3.0, 4.0];
    let mut v = detect_config();
    v["kind"] = json!("sweep");
    v["particles"][0] = json!({"label": "A", "interval": [0, 40], "n_points": 800});
    v["initial_state"]["packets"][0] = json!({"particle": "A", "center": 20, "width": 2.5, "k0": 2.0});
    v["time"] = json!({"t_max": 16, "dt": 0.01, "steps_per_bin": 20});
    v["sweep"] = json!({"kind": "detect", "face": 0, "kappa": kappas});
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run("sweep", &cfg, &out, &["--workers", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_manifest_complete(&out);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("child,kind,status,face,kappa,reflected_mass,p_never,tail"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[4].parse().unwrap(), c[5].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), kappas.len());
    let k = 2.0f64;
    for &(kappa, r) in &rows {
        let plane = ((k - kappa) / (k + kappa)).powi(2);
        assert!((r - plane).abs() < 0.01, "kappa {kappa}: {r} vs {plane}");
    }
    // on each side of the matched value, reflection grows with the mismatch
    let mut by_mismatch = rows.clone();
    by_mismatch.sort_by(|a, b| (a.0 / k).ln().abs().total_cmp(&(b.0 / k).ln().abs()));
    for side in [|kappa: f64| kappa <= 2.0, |kappa: f64| kappa >= 2.0] {
        let r: Vec<f64> = by_mismatch.iter().filter(|x| side(x.0)).map(|x| x.1).collect();
        assert!(r.windows(2).all(|w| w[0] < w[1]), "{r:?}");
    }
}

#[test]
fn multi_records_are_valid_json_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "kind": "multi",
        "particles": [
            {"label": "A", "interval": [0, 6], "n_points": 31},
            {"label": "B", "interval": [0, 6], "n_points": 31}
        ],
        "faces": [{"particle": "A", "side": "right", "kappa": 1.5}, {"particle": "B", "side": "left", "kappa": 1.0}],
        "initial_state": {"packets": [
            {"particle": "A", "center": 3, "width": 0.5, "k0": 1.5},
            {"particle": "B", "center": 3, "width": 0.5, "k0": -1.0}
        ]},
        "time": {"t_max": 4, "dt": 0.02, "steps_per_bin": 5},
        "sampler": {"n": 200, "seed": 9}
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run("multi", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 200);
    for l in text.lines() {
        let r: Value = serde_json::from_str(l).unwrap();
        let ev = r["events"].as_array().unwrap();
        assert_eq!(ev.len(), 2);
        // detections come first, in time order, one per particle
        if let (Some(a), Some(b)) = (ev[0]["time"].as_f64(), ev[1]["time"].as_f64()) {
            assert!(a <= b);
            assert_ne!(ev[0]["particle"], ev[1]["particle"]);
        } else {
            assert!(ev[1].is_null());
        }
    }
}

#[test]
fn failed_checks_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = bohm_config(200, 3);
    v["sampler"]["dt_traj"] = json!(3.0);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run("bohm", &cfg, &out, &[]);
    assert_eq!(code(&o), 2);
    let m = read_manifest(&out).unwrap();
    assert!(!m.passed() && m.exit_code == 2);
    assert!(!m.checks["exit_time_ks"].pass);
    assert_manifest_complete(&out);
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), "good.json", &detect_config());
    let mut v = detect_config();
    v["time"]["dt"] = json!(0);
    v["faces"][0]["kappa"] = json!(-1);
    let bad = write_config(tmp.path(), "bad.json", &v);
    let out = tmp.path().join("out");

    let o = run("detect", &bad, &out, &[]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("time.dt") && err.contains("faces[0].kappa"), "{err}");
    assert!(!out.exists());

    assert_eq!(code(&run("bohm", &good, &out, &[])), 1);
    assert_eq!(code(&run("teleport", &good, &out, &[])), 1);
    assert_eq!(code(&run("detect", &tmp.path().join("missing.json"), &out, &[])), 1);
    assert_eq!(code(&bin().arg("detect").output().unwrap()), 1);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
}

#[test]
fn foreign_files_in_the_output_directory_are_left_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &detect_config());
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("thesis.tex"), b"keep me").unwrap();
    assert_eq!(code(&run("detect", &cfg, &out, &[])), 1);
    assert_eq!(fs::read(out.join("thesis.tex")).unwrap(), b"keep me");
    assert_eq!(list_files(&out).unwrap(), ["thesis.tex"]);
}

#[test]
fn output_dir_can_come_from_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = detect_config();
    let out = tmp.path().join("from-config");
    v["output_dir"] = json!(out.to_str().unwrap());
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = bin().args(["detect", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn moving_run_passes_its_invariant_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "kind": "moving",
        "particles": [{"label": "A", "n_points": 160, "trajectory": [{"t": 0, "a": 0, "b": 10, "da": 0.2, "db": 0.2}]}],
        "faces": [{"particle": "A", "side": "right", "kappa": 1.0}, {"particle": "A", "side": "left", "kappa": 1.0}],
        "initial_state": {"packets": [{"particle": "A", "center": 5, "width": 0.8, "k0": 1.2}]},
        "time": {"t_max": 6, "dt": 0.02, "steps_per_bin": 10}
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run("moving", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_manifest(&out).unwrap();
    for c in ["integrand_nonnegative", "admissibility", "mass_balance"] {
        assert!(m.checks[c].pass, "{c}");
    }
}
