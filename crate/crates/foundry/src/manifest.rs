//! Append-only run manifest: one JSON record per line.
//!
//! Stage records carry the config hash, the hashed inputs and outputs and
//! per-item outcomes; decision records carry review verdicts. Everything
//! that varies between otherwise identical runs (wall-clock times, worker
//! count, output location) lives under the `run` key, which
//! [`normalized_lines`] strips for comparisons.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Outcome of one camera, view or patch set within a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<String>,
}

impl ItemRecord {
    pub fn new(id: impl Into<String>, outcome: impl Into<String>, reasons: Vec<String>) -> Self {
        Self {
            id: id.into(),
            outcome: outcome.into(),
            reasons,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_root: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    pub config: serde_json::Map<String, serde_json::Value>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub items: Vec<ItemRecord>,
    pub run: RunInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected,
}

impl Verdict {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accepted" | "accept" => Some(Verdict::Accepted),
            "rejected" | "reject" => Some(Verdict::Rejected),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
        }
    }
}

/// A reviewer's verdict on one view. The latest record per view is live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub view_id: String,
    pub verdict: Verdict,
    pub reason: String,
    pub reviewer: String,
    pub run: RunInfo,
}

impl PruneDecision {
    pub fn new(view_id: &str, verdict: Verdict, reason: &str, reviewer: &str) -> Self {
        Self {
            view_id: view_id.to_string(),
            verdict,
            reason: reason.to_string(),
            reviewer: reviewer.to_string(),
            run: RunInfo {
                started_ms: None,
                finished_ms: None,
                jobs: None,
                output_root: None,
                timestamp_ms: Some(now_ms()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Stage(StageRecord),
    Decision(PruneDecision),
}

/// In-memory view of the manifest file plus an append handle.
#[derive(Debug)]
pub struct Manifest {
    path: PathBuf,
    records: Vec<Record>,
}

impl Manifest {
    /// Loads `<out>/manifest.jsonl`, or starts empty when it does not exist.
    /// A final line without a newline is an interrupted write and is ignored.
    pub fn open(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        let mut records = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let mut buf = String::new();
            let mut reader = reader;
            let mut line_no = 0;
            loop {
                buf.clear();
                if reader.read_line(&mut buf)? == 0 {
                    break;
                }
                line_no += 1;
                if !buf.ends_with('\n') {
                    log::warn!("ignoring truncated manifest line {line_no}");
                    break;
                }
                let line = buf.trim();
                if line.is_empty() {
                    continue;
                }
                let rec: Record = serde_json::from_str(line)
                    .with_context(|| format!("manifest line {line_no}"))?;
                records.push(rec);
            }
        }
        Ok(Self { path, records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Writes one record as a single line and syncs it before returning.
    pub fn append(&mut self, rec: Record) -> Result<()> {
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .with_context(|| format!("opening {}", self.path.display()))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        self.records.push(rec);
        Ok(())
    }

    pub fn latest_stage(&self, stage: &str) -> Option<&StageRecord> {
        self.records.iter().rev().find_map(|r| match r {
            Record::Stage(s) if s.stage == stage => Some(s),
            _ => None,
        })
    }

    /// The live decision per view, sorted by view id.
    pub fn live_decisions(&self) -> Vec<&PruneDecision> {
        let mut live: std::collections::BTreeMap<&str, &PruneDecision> = Default::default();
        for r in &self.records {
            if let Record::Decision(d) = r {
                live.insert(d.view_id.as_str(), d);
            }
        }
        live.into_values().collect()
    }

    pub fn live_decision(&self, view_id: &str) -> Option<&PruneDecision> {
        self.records.iter().rev().find_map(|r| match r {
            Record::Decision(d) if d.view_id == view_id => Some(d),
            _ => None,
        })
    }
}

/// Hashes files given relative to `root`, in the given order.
pub fn hash_files(root: &Path, rel: &[String]) -> Result<Vec<FileHash>> {
    rel.iter()
        .map(|p| {
            Ok(FileHash {
                path: p.clone(),
                sha256: sha256_file(&root.join(p))?,
            })
        })
        .collect()
}

/// Re-hashes the outputs of the latest record of every stage. Returns the
/// mismatches as `path: reason` strings.
pub fn verify_outputs(out: &Path, manifest: &Manifest) -> Result<Vec<String>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut problems = Vec::new();
    for r in manifest.records().iter().rev() {
        let Record::Stage(s) = r else { continue };
        if !seen.insert(s.stage.clone()) {
            continue;
        }
        for f in &s.outputs {
            let path = out.join(&f.path);
            if !path.exists() {
                problems.push(format!("{}: missing", f.path));
            } else if sha256_file(&path)? != f.sha256 {
                problems.push(format!("{}: hash mismatch", f.path));
            }
        }
    }
    Ok(problems)
}

/// Manifest lines with the `run` object removed, for comparing runs.
pub fn normalized_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l)?;
            match v.as_object_mut() {
                Some(obj) => {
                    obj.remove("run");
                }
                None => bail!("manifest line is not an object"),
            }
            Ok(serde_json::to_string(&v)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(name: &str) -> Record {
        Record::Stage(StageRecord {
            stage: name.into(),
            config_hash: "abc".into(),
            config: Default::default(),
            inputs: vec![],
            outputs: vec![],
            items: vec![ItemRecord::new("cam0", "kept", vec![])],
            run: RunInfo {
                started_ms: Some(now_ms()),
                finished_ms: Some(now_ms()),
                jobs: Some(3),
                output_root: Some("/tmp/x".into()),
                timestamp_ms: None,
            },
        })
    }

    #[test]
    fn append_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::open(dir.path()).unwrap();
        m.append(stage("gate")).unwrap();
        m.append(Record::Decision(PruneDecision::new("c.v00", Verdict::Accepted, "ok", "me")))
            .unwrap();
        m.append(Record::Decision(PruneDecision::new("c.v00", Verdict::Rejected, "", "me")))
            .unwrap();
        let back = Manifest::open(dir.path()).unwrap();
        assert_eq!(back.records(), m.records());
        assert_eq!(back.live_decisions().len(), 1);
        assert_eq!(back.live_decision("c.v00").unwrap().verdict, Verdict::Rejected);
        assert!(back.latest_stage("gate").is_some());
        assert!(back.latest_stage("views").is_none());
    }

    #[test]
    fn truncated_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::open(dir.path()).unwrap();
        m.append(stage("gate")).unwrap();
        let mut f = OpenOptions::new().append(true).open(m.path()).unwrap();
        f.write_all(b"{\"kind\":\"stage\",\"sta").unwrap();
        let back = Manifest::open(dir.path()).unwrap();
        assert_eq!(back.records().len(), 1);
    }

    #[test]
    fn normalization_drops_run_info() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Manifest::open(&dir.path().join("a")).unwrap();
        let mut b = Manifest::open(&dir.path().join("b")).unwrap();
        a.append(stage("gate")).unwrap();
        let mut rec = stage("gate");
        if let Record::Stage(s) = &mut rec {
            s.run.jobs = Some(8);
            s.run.output_root = Some("/else".into());
        }
        b.append(rec).unwrap();
        assert_ne!(
            std::fs::read(a.path()).unwrap(),
            std::fs::read(b.path()).unwrap()
        );
        assert_eq!(normalized_lines(a.path()).unwrap(), normalized_lines(b.path()).unwrap());
    }

    #[test]
    fn verification_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.txt"), b"hello").unwrap();
        let mut m = Manifest::open(dir.path()).unwrap();
        let mut rec = stage("gate");
        if let Record::Stage(s) = &mut rec {
            s.outputs = hash_files(dir.path(), &["x.txt".to_string()]).unwrap();
        }
        m.append(rec).unwrap();
        assert!(verify_outputs(dir.path(), &m).unwrap().is_empty());
        std::fs::write(dir.path().join("x.txt"), b"hellO").unwrap();
        assert_eq!(verify_outputs(dir.path(), &m).unwrap().len(), 1);
    }
}
