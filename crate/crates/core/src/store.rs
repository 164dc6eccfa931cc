//! Versioned artifact storage on the local filesystem.
//!
//! Layout: one directory per artifact kind holding `v000001.json`,
//! `v000002.json`, ..., a `manifest.json` at the root listing every version
//! with its SHA-256, and an append-only `feedback.jsonl` of feedback events.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::FeedbackEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Corpus,
    Index,
    Model,
    Report,
    FeedbackLog,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 5] = [
        ArtifactKind::Corpus,
        ArtifactKind::Index,
        ArtifactKind::Model,
        ArtifactKind::Report,
        ArtifactKind::FeedbackLog,
    ];

    pub fn dir_name(&self) -> &'static str {
        match self {
            ArtifactKind::Corpus => "corpus",
            ArtifactKind::Index => "index",
            ArtifactKind::Model => "model",
            ArtifactKind::Report => "report",
            ArtifactKind::FeedbackLog => "feedback-log",
        }
    }
}

impl std::str::FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.dir_name() == s)
            .ok_or_else(|| format!("unknown artifact kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreVersion {
    pub kind: ArtifactKind,
    pub version: u64,
    /// Hex SHA-256 of the stored bytes.
    pub hash: String,
    pub created_at: DateTime<Utc>,
    /// Path relative to the store root.
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<StoreVersion>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no {kind:?} version {version:?}")]
    UnknownVersion {
        kind: ArtifactKind,
        version: Option<u64>,
        tag: Option<String>,
    },
    #[error("{file} does not match its recorded hash")]
    HashMismatch { file: String },
    #[error("feedback event {event_id:?} is already in the log")]
    DuplicateEventId { event_id: String },
    #[error("corrupt store data in {file}: {detail}")]
    Corrupt { file: String, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownVersion { .. } => "UnknownVersion",
            StoreError::HashMismatch { .. } => "HashMismatch",
            StoreError::DuplicateEventId { .. } => "DuplicateEventId",
            StoreError::Corrupt { .. } => "Corrupt",
            StoreError::Io(_) => "Io",
        }
    }
}

pub const FEEDBACK_FILE: &str = "feedback.jsonl";
const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A store rooted at one directory. Writers are serialized through an
/// internal lock; readers never block each other.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        for kind in ArtifactKind::ALL {
            fs::create_dir_all(root.join(kind.dir_name()))?;
        }
        Ok(Self {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> Result<Manifest, StoreError> {
        let path = self.root.join(MANIFEST_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                file: MANIFEST_FILE.into(),
                detail: e.to_string(),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(e.into()),
        }
    }

    fn write_manifest(&self, manifest: &Manifest) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        write_atomic(&self.root.join(MANIFEST_FILE), &bytes)
    }

    pub fn versions(&self, kind: Option<ArtifactKind>) -> Result<Vec<StoreVersion>, StoreError> {
        Ok(self
            .manifest()?
            .entries
            .into_iter()
            .filter(|e| kind.is_none_or(|k| e.kind == k))
            .collect())
    }

    /// Stores `bytes` as the next version of `kind`.
    pub fn persist_bytes(
        &self,
        kind: ArtifactKind,
        bytes: &[u8],
        tag: Option<&str>,
    ) -> Result<StoreVersion, StoreError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut manifest = self.manifest()?;
        let version = manifest
            .entries
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.version)
            .max()
            .unwrap_or(0)
            + 1;
        let file = format!("{}/v{version:06}.json", kind.dir_name());
        write_atomic(&self.root.join(&file), bytes)?;
        let entry = StoreVersion {
            kind,
            version,
            hash: sha256_hex(bytes),
            created_at: Utc::now(),
            file,
            tag: tag.map(str::to_string),
        };
        manifest.entries.push(entry.clone());
        self.write_manifest(&manifest)?;
        Ok(entry)
    }

    pub fn persist_json<T: Serialize>(
        &self,
        kind: ArtifactKind,
        value: &T,
        tag: Option<&str>,
    ) -> Result<StoreVersion, StoreError> {
        let bytes = serde_json::to_vec(value).map_err(|e| StoreError::Corrupt {
            file: kind.dir_name().into(),
            detail: e.to_string(),
        })?;
        self.persist_bytes(kind, &bytes, tag)
    }

    /// The entry for `version`, or the latest one (optionally with `tag`).
    pub fn find(
        &self,
        kind: ArtifactKind,
        version: Option<u64>,
        tag: Option<&str>,
    ) -> Result<StoreVersion, StoreError> {
        self.manifest()?
            .entries
            .into_iter()
            .filter(|e| e.kind == kind)
            .filter(|e| tag.is_none_or(|t| e.tag.as_deref() == Some(t)))
            .filter(|e| version.is_none_or(|v| e.version == v))
            .max_by_key(|e| e.version)
            .ok_or_else(|| StoreError::UnknownVersion {
                kind,
                version,
                tag: tag.map(str::to_string),
            })
    }

    /// Reads a stored version and checks it against its recorded hash.
    pub fn load_bytes(
        &self,
        kind: ArtifactKind,
        version: Option<u64>,
        tag: Option<&str>,
    ) -> Result<(StoreVersion, Vec<u8>), StoreError> {
        let entry = self.find(kind, version, tag)?;
        let bytes = fs::read(self.root.join(&entry.file))?;
        if sha256_hex(&bytes) != entry.hash {
            return Err(StoreError::HashMismatch { file: entry.file });
        }
        Ok((entry, bytes))
    }

    pub fn load_json<T: DeserializeOwned>(
        &self,
        kind: ArtifactKind,
        version: Option<u64>,
        tag: Option<&str>,
    ) -> Result<(StoreVersion, T), StoreError> {
        let (entry, bytes) = self.load_bytes(kind, version, tag)?;
        let value = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            file: entry.file.clone(),
            detail: e.to_string(),
        })?;
        Ok((entry, value))
    }

    fn feedback_path(&self) -> PathBuf {
        self.root.join(ArtifactKind::FeedbackLog.dir_name()).join(FEEDBACK_FILE)
    }

    /// Every logged feedback event, in append order.
    pub fn feedback_events(&self) -> Result<Vec<FeedbackEvent>, StoreError> {
        let file = match File::open(self.feedback_path()) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut events = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                file: format!("{FEEDBACK_FILE} line {}", n + 1),
                detail: e.to_string(),
            })?);
        }
        Ok(events)
    }

    /// Appends one event; ids must be unique across the log.
    pub fn append_feedback(&self, event: &FeedbackEvent) -> Result<usize, StoreError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let existing = self.feedback_events()?;
        let ids: BTreeSet<&str> = existing.iter().map(|e| e.event_id.as_str()).collect();
        if ids.contains(event.event_id.as_str()) {
            return Err(StoreError::DuplicateEventId {
                event_id: event.event_id.clone(),
            });
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.feedback_path())?;
        let mut line = serde_json::to_vec(event).expect("event serializes");
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(existing.len() + 1)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{TargetField, Verdict};

    fn event(id: &str) -> FeedbackEvent {
        FeedbackEvent {
            event_id: id.into(),
            ticket_id: "T1".into(),
            target_field: TargetField::Assignee,
            label: "ops".into(),
            verdict: Verdict::Accepted,
            summary: "disk full".into(),
            description: String::new(),
            timestamp: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
        }
    }

    #[test]
    fn versions_increase_and_latest_wins() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let a = store.persist_json(ArtifactKind::Report, &"first", None).unwrap();
        let b = store.persist_json(ArtifactKind::Report, &"second", None).unwrap();
        let c = store.persist_json(ArtifactKind::Model, &"m", Some("assignee")).unwrap();
        assert_eq!((a.version, b.version, c.version), (1, 2, 1));
        let (v, s): (_, String) = store.load_json(ArtifactKind::Report, None, None).unwrap();
        assert_eq!((v.version, s.as_str()), (2, "second"));
        let (_, s): (_, String) = store.load_json(ArtifactKind::Report, Some(1), None).unwrap();
        assert_eq!(s, "first");
        assert!(matches!(
            store.load_bytes(ArtifactKind::Report, Some(9), None),
            Err(StoreError::UnknownVersion { .. })
        ));
        assert!(matches!(
            store.load_bytes(ArtifactKind::Model, None, Some("business_process")),
            Err(StoreError::UnknownVersion { .. })
        ));
        let reopened = Store::open(dir.path()).unwrap();
        assert_eq!(reopened.versions(None).unwrap().len(), 3);
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let v = store.persist_bytes(ArtifactKind::Index, b"payload", None).unwrap();
        fs::write(dir.path().join(&v.file), b"payloaD").unwrap();
        assert!(matches!(
            store.load_bytes(ArtifactKind::Index, None, None),
            Err(StoreError::HashMismatch { .. })
        ));
    }

    #[test]
    fn feedback_log_is_append_only_and_unique() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.feedback_events().unwrap().is_empty());
        store.append_feedback(&event("e1")).unwrap();
        store.append_feedback(&event("e2")).unwrap();
        assert!(matches!(
            store.append_feedback(&event("e1")),
            Err(StoreError::DuplicateEventId { .. })
        ));
        let ids: Vec<String> = store
            .feedback_events()
            .unwrap()
            .into_iter()
            .map(|e| e.event_id)
            .collect();
        assert_eq!(ids, ["e1", "e2"]);
    }
}
