//! Run manifests and sweep aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::QdError;
use crate::io::{num, sha256_hex, ArtifactEntry};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub pass: bool,
    pub value: Option<f64>,
    pub limit: f64,
}

impl Check {
    /// Passes when `value ≤ limit`.
    pub fn at_most(value: f64, limit: f64) -> Self {
        Self { pass: value <= limit, value: value.is_finite().then_some(value), limit }
    }

    /// Passes when `value ≥ limit`.
    pub fn at_least(value: f64, limit: f64) -> Self {
        Self { pass: value >= limit, value: value.is_finite().then_some(value), limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    ChecksFailed,
    Error,
}

/// What a run did and produced. `artifacts` lists every file under the
/// output directory except the manifest itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub status: Status,
    pub exit_code: i32,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub failure: Option<Failure>,
    pub checks: BTreeMap<String, Check>,
    pub artifacts: Vec<ArtifactEntry>,
    pub versions: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.status == Status::Passed
    }
}

/// SHA-256 of the canonical (key-sorted, compact) form of a JSON document.
pub fn config_hash(raw: &Value) -> String {
    sha256_hex(serde_json::to_string(raw).expect("JSON value").as_bytes())
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("absorb-core".to_string(), absorb_core::VERSION.to_string()),
        ("absorb-qd".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, QdError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    serde_json::from_str(&text).map_err(|e| QdError::Usage(format!("{}: bad manifest: {e}", dir.display())))
}

/// Artifact paths of a manifest already in `dir`, if any.
pub fn previous_artifacts(dir: &Path) -> Result<Vec<String>, QdError> {
    if !dir.join(MANIFEST).exists() {
        return Ok(Vec::new());
    }
    Ok(read_manifest(dir)?.artifacts.into_iter().map(|a| a.path).collect())
}

/// One finished run as seen by the aggregator.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub manifest: RunManifest,
    pub summary: Value,
    /// The swept face and its `κ` in this run.
    pub face: String,
    pub kappa: f64,
}

/// CSV `child,kind,status,face,kappa,reflected_mass,p_never,tail`; the
/// reflected mass is what the swept face did not absorb. All rows must be
/// the same experiment kind.
pub fn emit_report(rows: &[ReportRow]) -> Result<String, QdError> {
    let first = rows.first().ok_or_else(|| QdError::Usage("report needs at least one run".into()))?;
    if let Some(r) = rows.iter().find(|r| r.manifest.kind != first.manifest.kind) {
        return Err(QdError::Usage(format!(
            "cannot aggregate kind '{}' ({}) with kind '{}' ({})",
            r.manifest.kind, r.name, first.manifest.kind, first.name
        )));
    }
    let mut s = String::from("child,kind,status,face,kappa,reflected_mass,p_never,tail\n");
    for r in rows {
        let get = |k: &str| r.summary.get(k).and_then(Value::as_f64).unwrap_or(f64::NAN);
        let absorbed = r.summary.get("face_mass").and_then(|m| m.get(&r.face)).and_then(Value::as_f64);
        let status = serde_json::to_value(r.manifest.status).ok().and_then(|v| v.as_str().map(String::from));
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.name,
            r.manifest.kind,
            status.unwrap_or_default(),
            r.face,
            num(r.kappa),
            num(absorbed.map_or(f64::NAN, |m| 1.0 - m)),
            num(get("p_never_estimate")),
            num(get("tail")),
        ));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(kind: &str, kappa: f64, mass: f64) -> ReportRow {
        ReportRow {
            name: format!("c{kappa}"),
            manifest: RunManifest {
                kind: kind.into(),
                status: Status::Passed,
                exit_code: 0,
                config_hash: String::new(),
                seed: None,
                failure: None,
                checks: BTreeMap::new(),
                artifacts: Vec::new(),
                versions: versions(),
            },
            summary: serde_json::json!({"face_mass": {"A:right": mass}, "p_never_estimate": 0.0, "tail": 0.01}),
            face: "A:right".into(),
            kappa,
        }
    }

    #[test]
    fn single_manifest_gives_one_row() {
        let csv = emit_report(&[row("detect", 1.0, 0.9)]).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("c1,detect,passed,A:right,1,"));
    }

    #[test]
    fn mixed_kinds_are_refused() {
        assert!(emit_report(&[row("detect", 1.0, 0.9), row("bohm", 2.0, 0.9)]).is_err());
        assert!(emit_report(&[]).is_err());
    }

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"x": 1, "y": {"b": 2, "a": [1, 2]}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"y": {"a": [1, 2], "b": 2}, "x": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
    }
}
