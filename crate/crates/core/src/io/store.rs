//! Append-only canonical store.
//!
//! Layout under the root directory:
//!
//! ```text
//! manifest.json
//! <session>/<YYYY-MM-DD>/segment-00000.jsonl
//! ```
//!
//! Each segment starts with a schema header line followed by one
//! [`CanonicalRow`] per line. A segment is sealed when its writer moves to a
//! new date, hits the row limit or finishes; sealing records the segment's
//! SHA-256 in the manifest, after which it is never written again.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{CanonicalRow, SessionId, Timestamp};
use crate::trend::date_hour;

use super::{IoError, SCHEMA_VERSION};

pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_SEGMENT_ROWS: usize = 3600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaHeader {
    pub schema: String,
    pub version: u32,
}

impl SchemaHeader {
    pub fn canonical() -> Self {
        Self {
            schema: "ward-sentinel.canonical".into(),
            version: SCHEMA_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub session_id: SessionId,
    pub date: NaiveDate,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestInfo {
    pub adapter: String,
    pub source: String,
    pub rows: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// Keyed by path relative to the store root, `/`-separated.
    pub segments: BTreeMap<String, SegmentInfo>,
    /// Keyed by SHA-256 of the ingested source file.
    #[serde(default)]
    pub ingested: BTreeMap<String, IngestInfo>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            segments: BTreeMap::new(),
            ingested: BTreeMap::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let mut f = File::open(path).map_err(IoError::file(path))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(IoError::file(path))?;
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug)]
struct Shared {
    root: PathBuf,
    segment_rows: usize,
    manifest: Mutex<Manifest>,
}

/// Handle to a store directory. Cheap to clone; writers for different
/// sessions may run on different threads.
#[derive(Debug, Clone)]
pub struct Store {
    shared: Arc<Shared>,
}

impl Store {
    /// Opens `root`, creating it and an empty manifest if needed.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, IoError> {
        Self::with_segment_rows(root, DEFAULT_SEGMENT_ROWS)
    }

    pub fn with_segment_rows(root: impl AsRef<Path>, segment_rows: usize) -> Result<Self, IoError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(IoError::file(&root))?;
        let mpath = root.join(MANIFEST);
        let manifest = if mpath.exists() {
            let text = fs::read_to_string(&mpath).map_err(IoError::file(&mpath))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| IoError::Parse {
                path: mpath.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            if m.schema_version != SCHEMA_VERSION {
                return Err(IoError::SchemaMismatch {
                    path: mpath,
                    reason: format!(
                        "store schema v{}, expected v{SCHEMA_VERSION}",
                        m.schema_version
                    ),
                });
            }
            m
        } else {
            let m = Manifest::default();
            write_manifest(&root, &m)?;
            m
        };
        Ok(Self {
            shared: Arc::new(Shared {
                root,
                segment_rows: segment_rows.max(1),
                manifest: Mutex::new(manifest),
            }),
        })
    }

    pub fn root(&self) -> &Path {
        &self.shared.root
    }

    pub fn manifest(&self) -> Manifest {
        self.shared.manifest.lock().expect("manifest lock").clone()
    }

    pub fn sessions(&self) -> Vec<SessionId> {
        let m = self.shared.manifest.lock().expect("manifest lock");
        let mut out: Vec<SessionId> = m.segments.values().map(|s| s.session_id.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn has_session(&self, session: &SessionId) -> bool {
        let m = self.shared.manifest.lock().expect("manifest lock");
        m.segments.values().any(|s| &s.session_id == session)
    }

    /// Starts a writer for a session with no stored segments.
    pub fn writer(&self, session: SessionId) -> Result<SessionWriter, IoError> {
        if self.has_session(&session) {
            return Err(IoError::SessionExists(session));
        }
        Ok(SessionWriter {
            store: self.clone(),
            session,
            open: None,
            last_ts: None,
            next_index: BTreeMap::new(),
        })
    }

    fn seal(&self, rel: String, info: SegmentInfo) -> Result<(), IoError> {
        let mut m = self.shared.manifest.lock().expect("manifest lock");
        m.segments.insert(rel, info);
        write_manifest(&self.shared.root, &m)
    }

    pub fn is_ingested(&self, source_hash: &str) -> bool {
        let m = self.shared.manifest.lock().expect("manifest lock");
        m.ingested.contains_key(source_hash)
    }

    pub fn record_ingest(&self, source_hash: String, info: IngestInfo) -> Result<(), IoError> {
        let mut m = self.shared.manifest.lock().expect("manifest lock");
        m.ingested.insert(source_hash, info);
        write_manifest(&self.shared.root, &m)
    }

    /// Segment paths of one session in time order.
    pub fn segments_of(&self, session: &SessionId) -> Vec<(String, SegmentInfo)> {
        let m = self.shared.manifest.lock().expect("manifest lock");
        let mut segs: Vec<(String, SegmentInfo)> = m
            .segments
            .iter()
            .filter(|(_, s)| &s.session_id == session)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        segs.sort_by_key(|(_, s)| s.first_ts);
        segs
    }

    pub fn read_session(&self, session: &SessionId) -> Result<Vec<CanonicalRow>, IoError> {
        let mut rows = Vec::new();
        for (rel, _) in self.segments_of(session) {
            rows.extend(read_canonical_jsonl(&self.shared.root.join(&rel))?);
        }
        Ok(rows)
    }

    /// Re-hashes every sealed segment against the manifest.
    pub fn verify(&self) -> Result<usize, IoError> {
        let m = self.manifest();
        for (rel, info) in &m.segments {
            let actual = sha256_file(&self.shared.root.join(rel))?;
            if actual != info.sha256 {
                return Err(IoError::Integrity {
                    segment: rel.clone(),
                    expected: info.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(m.segments.len())
    }
}

fn write_manifest(root: &Path, m: &Manifest) -> Result<(), IoError> {
    let path = root.join(MANIFEST);
    let tmp = root.join(format!("{MANIFEST}.tmp"));
    let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
    text.push('\n');
    fs::write(&tmp, text).map_err(IoError::file(&tmp))?;
    fs::rename(&tmp, &path).map_err(IoError::file(&path))
}

/// Reads canonical rows, skipping an optional schema header line.
pub fn read_canonical_jsonl(path: &Path) -> Result<Vec<CanonicalRow>, IoError> {
    let f = File::open(path).map_err(IoError::file(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(IoError::file(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Ok(h) = serde_json::from_str::<SchemaHeader>(&line) {
                if h.version != SCHEMA_VERSION {
                    return Err(IoError::SchemaMismatch {
                        path: path.to_path_buf(),
                        reason: format!("{} v{}, expected v{SCHEMA_VERSION}", h.schema, h.version),
                    });
                }
                continue;
            }
        }
        rows.push(serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

#[derive(Debug)]
struct OpenSegment {
    rel: String,
    path: PathBuf,
    date: NaiveDate,
    out: BufWriter<File>,
    hasher: Sha256,
    first_ts: Timestamp,
    last_ts: Timestamp,
    rows: usize,
}

/// Appends one session's rows in timestamp order.
#[derive(Debug)]
pub struct SessionWriter {
    store: Store,
    session: SessionId,
    open: Option<OpenSegment>,
    last_ts: Option<Timestamp>,
    next_index: BTreeMap<NaiveDate, usize>,
}

impl SessionWriter {
    pub fn session(&self) -> &SessionId {
        &self.session
    }

    pub fn append(&mut self, row: &CanonicalRow) -> Result<(), IoError> {
        if row.session_id != self.session {
            return Err(IoError::Adapter {
                session: row.session_id.clone(),
                ts: row.ts,
                reason: format!("row written to writer of session {}", self.session),
            });
        }
        if let Some(prev) = self.last_ts {
            if row.ts <= prev {
                return Err(IoError::NonMonotonic {
                    session: self.session.clone(),
                    prev,
                    ts: row.ts,
                });
            }
        }
        let (date, _) = date_hour(row.ts);
        let roll = match &self.open {
            Some(seg) => seg.date != date || seg.rows >= self.store.shared.segment_rows,
            None => true,
        };
        if roll {
            self.seal_open()?;
            self.open = Some(self.start_segment(date, row.ts)?);
        }
        let seg = self.open.as_mut().expect("segment just opened");
        let mut line = serde_json::to_string(row).expect("row serializes");
        line.push('\n');
        seg.out
            .write_all(line.as_bytes())
            .map_err(IoError::file(&seg.path))?;
        seg.hasher.update(line.as_bytes());
        seg.last_ts = row.ts;
        seg.rows += 1;
        self.last_ts = Some(row.ts);
        Ok(())
    }

    fn start_segment(&mut self, date: NaiveDate, ts: Timestamp) -> Result<OpenSegment, IoError> {
        let idx = self.next_index.entry(date).or_insert(0);
        let rel = format!("{}/{}/segment-{:05}.jsonl", self.session, date, *idx);
        *idx += 1;
        let path = self.store.shared.root.join(&rel);
        let dir = path.parent().expect("segment has a parent");
        fs::create_dir_all(dir).map_err(IoError::file(dir))?;
        let file = File::create(&path).map_err(IoError::file(&path))?;
        let mut seg = OpenSegment {
            rel,
            path,
            date,
            out: BufWriter::new(file),
            hasher: Sha256::new(),
            first_ts: ts,
            last_ts: ts,
            rows: 0,
        };
        let mut header = serde_json::to_string(&SchemaHeader::canonical()).expect("header");
        header.push('\n');
        seg.out
            .write_all(header.as_bytes())
            .map_err(IoError::file(&seg.path))?;
        seg.hasher.update(header.as_bytes());
        Ok(seg)
    }

    fn seal_open(&mut self) -> Result<(), IoError> {
        let Some(mut seg) = self.open.take() else {
            return Ok(());
        };
        seg.out.flush().map_err(IoError::file(&seg.path))?;
        let info = SegmentInfo {
            session_id: self.session.clone(),
            date: seg.date,
            first_ts: seg.first_ts,
            last_ts: seg.last_ts,
            rows: seg.rows,
            sha256: hex::encode(seg.hasher.finalize()),
        };
        self.store.seal(seg.rel, info)
    }

    /// Seals the open segment.
    pub fn finish(mut self) -> Result<(), IoError> {
        self.seal_open()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DetectionRecord;

    fn row(session: &str, ts: Timestamp) -> CanonicalRow {
        CanonicalRow::from_record(DetectionRecord::empty(session.into(), ts))
    }

    #[test]
    fn segments_split_by_date_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::with_segment_rows(dir.path(), 3).unwrap();
        let mut w = store.writer("a".into()).unwrap();
        for ts in [86_398, 86_399, 86_400, 86_401, 86_402, 86_403] {
            w.append(&row("a", ts)).unwrap();
        }
        w.finish().unwrap();
        let m = store.manifest();
        let keys: Vec<&String> = m.segments.keys().collect();
        assert_eq!(
            keys,
            [
                "a/1970-01-01/segment-00000.jsonl",
                "a/1970-01-02/segment-00000.jsonl",
                "a/1970-01-02/segment-00001.jsonl"
            ]
        );
        assert_eq!(store.read_session(&"a".into()).unwrap().len(), 6);
        assert_eq!(store.verify().unwrap(), 3);
    }

    #[test]
    fn tamper_detected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let mut w = store.writer("s".into()).unwrap();
        w.append(&row("s", 5)).unwrap();
        w.finish().unwrap();
        let seg = dir.path().join("s/1970-01-01/segment-00000.jsonl");
        let mut text = fs::read_to_string(&seg).unwrap();
        text.push('\n');
        fs::write(&seg, text).unwrap();
        assert!(matches!(store.verify(), Err(IoError::Integrity { .. })));
    }

    #[test]
    fn ordering_and_reuse_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let mut w = store.writer("s".into()).unwrap();
        w.append(&row("s", 5)).unwrap();
        assert!(matches!(
            w.append(&row("s", 5)),
            Err(IoError::NonMonotonic { .. })
        ));
        w.finish().unwrap();
        assert!(matches!(
            store.writer("s".into()),
            Err(IoError::SessionExists(_))
        ));
        let reopened = Store::open(dir.path()).unwrap();
        assert_eq!(reopened.sessions(), vec![SessionId::from("s")]);
    }

    #[test]
    fn concurrent_sessions() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::with_segment_rows(dir.path(), 10).unwrap();
        std::thread::scope(|s| {
            for name in ["x", "y", "z"] {
                let store = store.clone();
                s.spawn(move || {
                    let mut w = store.writer(name.into()).unwrap();
                    for ts in 0..95 {
                        w.append(&row(name, ts)).unwrap();
                    }
                    w.finish().unwrap();
                });
            }
        });
        for name in ["x", "y", "z"] {
            let rows = store.read_session(&name.into()).unwrap();
            assert_eq!(rows.len(), 95);
            assert!(rows.windows(2).all(|w| w[0].ts < w[1].ts));
        }
        assert_eq!(store.manifest().segments.len(), 30);
    }
}
