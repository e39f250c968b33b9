//! Output directory bookkeeping: content hashes, cached stages and atomic writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a stage's name and its input fingerprints.
pub fn input_hash(stage: &str, parts: &[&str]) -> String {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    for p in parts {
        h.update([0u8]);
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Cached,
}

impl StageStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    /// Path relative to the output directory → SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
    pub status: StageStatus,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub simulation: u64,
    pub pulse: u64,
    pub fit: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn artifact_count(&self) -> usize {
        self.stages.values().map(|s| s.artifacts.len()).sum()
    }

    /// Recorded hash of an artifact, from whichever stage produced it.
    pub fn recorded_hash(&self, rel: &str) -> Option<&str> {
        self.stages
            .values()
            .find_map(|s| s.artifacts.get(rel).map(String::as_str))
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let shown = path.display().to_string();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent.display().to_string()))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(CliError::io(tmp.display().to_string()))?;
    std::fs::rename(&tmp, path).map_err(CliError::io(shown))
}

/// Collects the files a stage writes.
pub struct StageWriter<'a> {
    root: &'a Path,
    artifacts: BTreeMap<String, String>,
}

impl StageWriter<'_> {
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.root.join(rel), bytes)?;
        self.artifacts.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

pub struct Workspace {
    pub root: PathBuf,
    pub manifest: RunManifest,
    pub force: bool,
}

impl Workspace {
    pub fn open(root: &Path, force: bool) -> CliResult<Self> {
        let path = root.join(MANIFEST_FILE);
        let manifest = match std::fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice(&bytes) {
                Ok(m) => m,
                Err(_) if force => RunManifest::default(),
                Err(e) => {
                    return Err(CliError::Dependency(format!(
                        "{} is unreadable ({e}); rerun with --force to start over",
                        path.display()
                    )))
                }
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => RunManifest::default(),
            Err(e) => return Err(CliError::io(path.display().to_string())(e)),
        };
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            force,
        })
    }

    pub fn save(&self) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.root.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Reads an upstream artifact, checking it against the manifest.
    ///
    /// `producer` names the subcommand that creates it, for the error message.
    pub fn read_artifact(&self, rel: &str, producer: &str) -> CliResult<Vec<u8>> {
        let path = self.root.join(rel);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CliError::Dependency(format!(
                    "{} not found; run `{producer}` first",
                    path.display()
                )))
            }
            Err(e) => return Err(CliError::io(path.display().to_string())(e)),
        };
        if let Some(expected) = self.manifest.recorded_hash(rel) {
            let actual = sha256_hex(&bytes);
            if actual != expected && !self.force {
                return Err(CliError::HashMismatch {
                    path: path.display().to_string(),
                    expected: expected.to_string(),
                    actual,
                });
            }
        }
        Ok(bytes)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.root.join(rel).is_file()
    }

    /// Runs `produce` unless the recorded stage has the same input hash and
    /// intact artifacts.
    pub fn run_stage(
        &mut self,
        name: &str,
        input_hash: &str,
        produce: impl FnOnce(&mut StageWriter) -> CliResult<()>,
    ) -> CliResult<StageStatus> {
        if !self.force {
            if let Some(rec) = self.manifest.stages.get(name) {
                if rec.input_hash == input_hash && self.artifacts_intact(rec)? {
                    let rec = self.manifest.stages.get_mut(name).expect("present");
                    rec.status = StageStatus::Cached;
                    self.save()?;
                    return Ok(StageStatus::Cached);
                }
            }
        }
        let started_unix = now_unix();
        let mut writer = StageWriter {
            root: &self.root,
            artifacts: BTreeMap::new(),
        };
        produce(&mut writer)?;
        let artifacts = writer.artifacts;
        self.manifest.stages.insert(
            name.to_string(),
            StageRecord {
                input_hash: input_hash.to_string(),
                artifacts,
                status: StageStatus::Ran,
                started_unix,
                finished_unix: now_unix(),
            },
        );
        self.save()?;
        Ok(StageStatus::Ran)
    }

    /// All files present and matching; a changed file is an error, a missing
    /// one just invalidates the cache.
    fn artifacts_intact(&self, rec: &StageRecord) -> CliResult<bool> {
        for (rel, expected) in &rec.artifacts {
            let path = self.root.join(rel);
            match std::fs::read(&path) {
                Ok(bytes) => {
                    let actual = sha256_hex(&bytes);
                    if &actual != expected {
                        return Err(CliError::HashMismatch {
                            path: path.display().to_string(),
                            expected: expected.clone(),
                            actual,
                        });
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(false),
                Err(e) => return Err(CliError::io(path.display().to_string())(e)),
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"hello").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"hello");
        let names: Vec<_> = std::fs::read_dir(dir.path().join("a")).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn stage_caching_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::open(dir.path(), false).unwrap();
        let mut runs = 0;
        let mut produce = |w: &mut StageWriter| {
            runs += 1;
            w.write("s/x.txt", b"data")
        };
        assert_eq!(ws.run_stage("s", "h1", &mut produce).unwrap(), StageStatus::Ran);
        let mut ws = Workspace::open(dir.path(), false).unwrap();
        assert_eq!(ws.run_stage("s", "h1", &mut produce).unwrap(), StageStatus::Cached);
        assert_eq!(ws.run_stage("s", "h2", &mut produce).unwrap(), StageStatus::Ran);
        std::fs::write(dir.path().join("s/x.txt"), b"tampered").unwrap();
        let err = ws.run_stage("s", "h2", &mut produce).unwrap_err();
        assert!(matches!(err, CliError::HashMismatch { .. }));
        assert!(err.to_string().contains("x.txt"));
        assert!(matches!(
            ws.read_artifact("s/x.txt", "s"),
            Err(CliError::HashMismatch { .. })
        ));
        ws.force = true;
        assert_eq!(ws.run_stage("s", "h2", &mut produce).unwrap(), StageStatus::Ran);
        assert_eq!(runs, 3);
    }

    #[test]
    fn missing_upstream_is_dependency_error() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path(), false).unwrap();
        let e = ws.read_artifact("hamiltonian/vsd.json", "hamiltonian").unwrap_err();
        assert_eq!(e.exit_code(), 6);
    }

    #[test]
    fn input_hash_separates_parts() {
        assert_ne!(input_hash("s", &["ab", "c"]), input_hash("s", &["a", "bc"]));
    }
}
