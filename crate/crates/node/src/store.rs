//! Durable per-node storage: an append-only record log, a blob directory and
//! the governance and results logs.
//!
//! Erasure compacts the log into a new file, overwrites the old file and the
//! backup with zeros and only then renames the compacted file into place, so
//! no byte of an erased record stays reachable from the data directory.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use trustworthy_core::canonical_json;
use trustworthy_core::policy::AccessPolicy;

use crate::crypto::sha256_hex;
use crate::error::NodeError;

pub const RECORDS: &str = "records.log";
pub const BACKUP: &str = "records.log.bak";
const COMPACTED: &str = "records.log.new";
pub const DECISIONS: &str = "decisions.log";
pub const RESULTS: &str = "results.log";
pub const BLOBS: &str = "blobs";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    KeyShare,
    EmailShare,
    SurveyShare,
    Blob,
    RegistryEntry,
}

impl RecordKind {
    pub fn is_share(self) -> bool {
        matches!(self, RecordKind::KeyShare | RecordKind::EmailShare | RecordKind::SurveyShare)
    }
}

/// One stored item. Share kinds keep this node's share values as decimal
/// strings in `values`; blobs live in `blobs/<hex-id>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub record_id: String,
    pub kind: RecordKind,
    pub policy: AccessPolicy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    pub consistency_hash: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub meta: Value,
}

impl StoredRecord {
    pub fn share(record_id: impl Into<String>, kind: RecordKind, policy: AccessPolicy, values: Vec<String>, meta: Value) -> Self {
        let consistency_hash = sha256_hex(canonical_json(&values).as_bytes());
        Self {
            record_id: record_id.into(),
            kind,
            policy,
            values,
            consistency_hash,
            meta,
        }
    }

    pub fn blob(record_id: impl Into<String>, policy: AccessPolicy, data: &[u8], meta: Value) -> Self {
        Self {
            record_id: record_id.into(),
            kind: RecordKind::Blob,
            policy,
            values: Vec::new(),
            consistency_hash: sha256_hex(data),
            meta,
        }
    }
}

pub fn blob_file_name(record_id: &str) -> String {
    hex::encode(record_id.as_bytes())
}

fn sync_dir(dir: &Path) -> std::io::Result<()> {
    File::open(dir)?.sync_all()
}

/// Overwrites a file in place with zeros and flushes it to disk.
fn destroy_contents(path: &Path) -> std::io::Result<()> {
    let len = match fs::metadata(path) {
        Ok(m) => m.len(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e),
    };
    let mut f = OpenOptions::new().write(true).open(path)?;
    let zeros = vec![0u8; 64 * 1024];
    let mut left = len;
    while left > 0 {
        let n = left.min(zeros.len() as u64) as usize;
        f.write_all(&zeros[..n])?;
        left -= n as u64;
    }
    f.sync_all()
}

fn write_synced(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(data)?;
    f.sync_all()
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    records: BTreeMap<String, StoredRecord>,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Self, NodeError> {
        fs::create_dir_all(dir.join(BLOBS))?;
        let compacted = dir.join(COMPACTED);
        if compacted.exists() {
            // a compaction finished writing but was interrupted before the rename
            destroy_contents(&dir.join(RECORDS))?;
            fs::rename(&compacted, dir.join(RECORDS))?;
        }
        let mut records = BTreeMap::new();
        for line in read_lines(&dir.join(RECORDS))? {
            let rec: StoredRecord =
                serde_json::from_str(&line).map_err(|e| NodeError::StorageFailure(format!("corrupt record log: {e}")))?;
            records.insert(rec.record_id.clone(), rec);
        }
        Ok(Self {
            dir: dir.to_owned(),
            records,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, record_id: &str) -> Option<&StoredRecord> {
        self.records.get(record_id)
    }

    pub fn contains(&self, record_id: &str) -> bool {
        self.records.contains_key(record_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &StoredRecord> {
        self.records.values()
    }

    /// Appends a record; returns once the line is on disk.
    pub fn put(&mut self, rec: StoredRecord) -> Result<(), NodeError> {
        if self.records.contains_key(&rec.record_id) {
            return Err(NodeError::AlreadyExists(rec.record_id));
        }
        append_line(&self.dir.join(RECORDS), &canonical_json(&rec))?;
        self.records.insert(rec.record_id.clone(), rec);
        Ok(())
    }

    /// Writes the blob file, then the record describing it.
    pub fn put_blob(&mut self, rec: StoredRecord, data: &[u8]) -> Result<(), NodeError> {
        if self.records.contains_key(&rec.record_id) {
            return Err(NodeError::AlreadyExists(rec.record_id));
        }
        let name = blob_file_name(&rec.record_id);
        let tmp = self.dir.join(BLOBS).join(format!("{name}.tmp"));
        write_synced(&tmp, data)?;
        fs::rename(&tmp, self.dir.join(BLOBS).join(&name))?;
        sync_dir(&self.dir.join(BLOBS))?;
        self.put(rec)
    }

    pub fn blob_path(&self, record_id: &str) -> PathBuf {
        self.dir.join(BLOBS).join(blob_file_name(record_id))
    }

    pub fn blob(&self, record_id: &str) -> Result<Vec<u8>, NodeError> {
        match self.records.get(record_id) {
            Some(r) if r.kind == RecordKind::Blob => Ok(fs::read(self.blob_path(record_id))?),
            _ => Err(NodeError::NotFound(record_id.to_owned())),
        }
    }

    /// Hash of the blob bytes as currently on disk.
    pub fn blob_hash(&self, record_id: &str) -> Result<String, NodeError> {
        Ok(sha256_hex(&self.blob(record_id)?))
    }

    /// Replaces an existing record; the old version is erased first.
    pub fn replace(&mut self, rec: StoredRecord) -> Result<(), NodeError> {
        if self.records.contains_key(&rec.record_id) {
            self.erase(&[rec.record_id.as_str()])?;
        }
        self.put(rec)
    }

    /// Removes records and destroys their bytes. Returns the ids that existed.
    pub fn erase(&mut self, ids: &[&str]) -> Result<Vec<String>, NodeError> {
        let mut removed = Vec::new();
        for id in ids {
            if let Some(rec) = self.records.remove(*id) {
                if rec.kind == RecordKind::Blob {
                    let path = self.blob_path(id);
                    destroy_contents(&path)?;
                    fs::remove_file(&path)?;
                }
                removed.push(rec.record_id);
            }
        }
        if !removed.is_empty() {
            self.compact()?;
        }
        Ok(removed)
    }

    fn compact(&mut self) -> Result<(), NodeError> {
        let mut text = String::new();
        for rec in self.records.values() {
            text.push_str(&canonical_json(rec));
            text.push('\n');
        }
        let compacted = self.dir.join(COMPACTED);
        write_synced(&compacted, text.as_bytes())?;
        destroy_contents(&self.dir.join(BACKUP))?;
        destroy_contents(&self.dir.join(RECORDS))?;
        fs::rename(&compacted, self.dir.join(RECORDS))?;
        write_synced(&self.dir.join(BACKUP), text.as_bytes())?;
        sync_dir(&self.dir)?;
        Ok(())
    }

    pub fn append_log(&self, name: &str, line: &str) -> Result<(), NodeError> {
        append_line(&self.dir.join(name), line)
    }

    pub fn read_log(&self, name: &str) -> Result<Vec<String>, NodeError> {
        read_lines(&self.dir.join(name))
    }
}

pub fn append_line(path: &Path, line: &str) -> Result<(), NodeError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.write_all(b"\n")?;
    f.sync_data()?;
    Ok(())
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, NodeError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

/// Every file under `dir`, recursively, as raw bytes.
pub fn scan_bytes(dir: &Path) -> std::io::Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        let entries = match fs::read_dir(&d) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(e) => return Err(e),
        };
        for entry in entries {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.clone(), fs::read(&path)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn contains_bytes(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use trustworthy_core::policy::PolicyKind;

    fn policy(id: &str) -> AccessPolicy {
        AccessPolicy::new(id, 3, "user:alice", PolicyKind::UserItem).unwrap()
    }

    fn dir_contains(dir: &Path, needle: &str) -> bool {
        scan_bytes(dir)
            .unwrap()
            .iter()
            .any(|(_, b)| contains_bytes(b, needle.as_bytes()))
    }

    #[test]
    fn put_survives_reopen() {
        let d = tempfile::tempdir().unwrap();
        let mut s = Store::open(d.path()).unwrap();
        let rec = StoredRecord::share("k1", RecordKind::KeyShare, policy("k1"), vec!["123456789".into()], json!({"hint": "x"}));
        s.put(rec.clone()).unwrap();
        s.put_blob(StoredRecord::blob("b1", policy("b1"), b"cipher", Value::Null), b"cipher").unwrap();
        assert!(matches!(s.put(rec.clone()), Err(NodeError::AlreadyExists(_))));
        drop(s);
        let s = Store::open(d.path()).unwrap();
        assert_eq!(s.get("k1"), Some(&rec));
        assert_eq!(s.blob("b1").unwrap(), b"cipher");
        assert_eq!(s.blob_hash("b1").unwrap(), s.get("b1").unwrap().consistency_hash);
    }

    #[test]
    fn erase_leaves_no_bytes() {
        let d = tempfile::tempdir().unwrap();
        let mut s = Store::open(d.path()).unwrap();
        s.put(StoredRecord::share("a", RecordKind::KeyShare, policy("a"), vec!["998877665544".into()], Value::Null))
            .unwrap();
        s.put(StoredRecord::share("b", RecordKind::KeyShare, policy("b"), vec!["112233445566".into()], Value::Null))
            .unwrap();
        s.put_blob(StoredRecord::blob("c", policy("c"), b"secret-blob", Value::Null), b"secret-blob")
            .unwrap();
        // first compaction produces a backup containing "a"
        s.erase(&["b"]).unwrap();
        assert!(dir_contains(d.path(), "998877665544"));
        assert!(!dir_contains(d.path(), "112233445566"));
        s.erase(&["a", "c", "missing"]).unwrap();
        assert!(!dir_contains(d.path(), "998877665544"));
        assert!(!dir_contains(d.path(), "secret-blob"));
        let s = Store::open(d.path()).unwrap();
        assert!(s.get("a").is_none());
        assert!(matches!(s.blob("c"), Err(NodeError::NotFound(_))));
    }

    #[test]
    fn interrupted_compaction_recovers() {
        let d = tempfile::tempdir().unwrap();
        let mut s = Store::open(d.path()).unwrap();
        let keep = StoredRecord::share("keep", RecordKind::KeyShare, policy("keep"), vec!["1".into()], Value::Null);
        s.put(keep.clone()).unwrap();
        drop(s);
        fs::write(d.path().join(COMPACTED), format!("{}\n", canonical_json(&keep))).unwrap();
        fs::write(d.path().join(RECORDS), "garbage that is not json\n").unwrap();
        let s = Store::open(d.path()).unwrap();
        assert_eq!(s.get("keep"), Some(&keep));
        assert!(!d.path().join(COMPACTED).exists());
    }

    #[test]
    fn replace_erases_old_version() {
        let d = tempfile::tempdir().unwrap();
        let mut s = Store::open(d.path()).unwrap();
        s.put(StoredRecord::share("a", RecordKind::KeyShare, policy("a"), vec!["5550001".into()], Value::Null))
            .unwrap();
        s.replace(StoredRecord::share("a", RecordKind::KeyShare, policy("a"), vec!["5550002".into()], Value::Null))
            .unwrap();
        assert!(!dir_contains(d.path(), "5550001"));
        assert_eq!(s.get("a").unwrap().values, vec!["5550002".to_string()]);
    }
}
