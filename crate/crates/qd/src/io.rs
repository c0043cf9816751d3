//! Output directories, atomic writes and number formatting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use absorb_core::DetectionDistribution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::QdError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x.is_nan() {
        "nan".into()
    } else if a == 0.0 || (1e-4..1e15).contains(&a) || a.is_infinite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// An output directory that remembers what was written into it.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: BTreeMap<String, ArtifactEntry>,
}

impl OutDir {
    /// Creates `root`, or reuses it when it is empty or holds an earlier
    /// run's artifacts (which are removed). Other content is refused.
    pub fn prepare(root: &Path) -> Result<Self, QdError> {
        if root.exists() {
            if !root.is_dir() {
                return Err(QdError::Usage(format!("{} is not a directory", root.display())));
            }
            let previous = crate::report::previous_artifacts(root)?;
            let mut leftovers = Vec::new();
            for f in list_files(root)? {
                if previous.contains(&f) || f == crate::report::MANIFEST {
                    fs::remove_file(root.join(&f))?;
                } else {
                    leftovers.push(f);
                }
            }
            if !leftovers.is_empty() {
                return Err(QdError::Usage(format!(
                    "output directory {} holds files not written by an earlier run: {}",
                    root.display(),
                    leftovers.join(", ")
                )));
            }
            remove_empty_dirs(root)?;
        }
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), written: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), QdError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&path, bytes)?;
        self.written
            .insert(rel.to_string(), ArtifactEntry { path: rel.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, v: &T) -> Result<(), QdError> {
        self.write(rel, &json_bytes(v))
    }

    /// Records files written by someone else (sweep children) under `prefix`.
    pub fn adopt(&mut self, prefix: &str, entries: &[ArtifactEntry]) {
        for e in entries {
            let path = format!("{prefix}/{}", e.path);
            self.written.insert(path.clone(), ArtifactEntry { path, ..e.clone() });
        }
    }

    pub fn entries(&self) -> Vec<ArtifactEntry> {
        self.written.values().cloned().collect()
    }
}

/// Relative paths of all files under `root`, sorted, `/`-separated.
pub fn list_files(root: &Path) -> std::io::Result<Vec<String>> {
    fn walk(dir: &Path, prefix: &str, out: &mut Vec<String>) -> std::io::Result<()> {
        for e in fs::read_dir(dir)? {
            let e = e?;
            let name = e.file_name().to_string_lossy().into_owned();
            let rel = if prefix.is_empty() { name } else { format!("{prefix}/{name}") };
            if e.file_type()?.is_dir() {
                walk(&e.path(), &rel, out)?;
            } else {
                out.push(rel);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, "", &mut out)?;
    out.sort();
    Ok(out)
}

fn remove_empty_dirs(dir: &Path) -> std::io::Result<()> {
    for e in fs::read_dir(dir)? {
        let e = e?;
        if e.file_type()?.is_dir() {
            remove_empty_dirs(&e.path())?;
            if fs::read_dir(e.path())?.next().is_none() {
                fs::remove_dir(e.path())?;
            }
        }
    }
    Ok(())
}

/// `t_bin_start,face,mass`, bins in time order, faces in their listed order.
pub fn distribution_csv(d: &DetectionDistribution) -> String {
    let mut s = String::from("t_bin_start,face,mass\n");
    for k in 0..d.n_bins() {
        for (f, face) in d.faces.iter().enumerate() {
            s.push_str(&format!("{},{face},{}\n", num(d.bin_start(k)), num(d.bins[f][k])));
        }
    }
    s
}
