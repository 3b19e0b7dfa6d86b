//! External data into the canonical store.
//!
//! Two adapters:
//!
//! - `canonical`: JSONL of canonical rows, as written by this crate.
//! - `public-csv`: per-second count table with columns `session_id`, `ts`,
//!   `person_count` and optionally `patient_count`, `staff_count`,
//!   `scene_motion`. Counts become placeholder person boxes laid out in a
//!   row; only their number and roles carry information.
//!
//! Rows failing validation are reported with their line number and skipped.
//! A source whose hash the store has already seen is not ingested again.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{
    validate_record, BoundingBox, CanonicalRow, ObjectClass, RoiMotion, Role, RoleDistribution,
    SessionId, Timestamp,
};

use super::store::{sha256_file, IngestInfo, SchemaHeader, Store};
use super::IoError;

pub const ADAPTERS: [&str; 2] = ["canonical", "public-csv"];
const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adapter {
    Canonical,
    PublicCsv,
}

impl Adapter {
    pub fn parse(id: &str) -> Result<Self, IoError> {
        match id {
            "canonical" => Ok(Adapter::Canonical),
            "public-csv" => Ok(Adapter::PublicCsv),
            other => Err(IoError::UnknownAdapter(other.to_owned())),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Adapter::Canonical => "canonical",
            Adapter::PublicCsv => "public-csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub frame_dims: (usize, usize),
    /// Sessions spanning fewer days are dropped.
    pub min_session_days: Option<f64>,
}

impl IngestOptions {
    /// The public dataset only admits sessions of at least two days.
    pub fn for_adapter(adapter: Adapter, frame_dims: (usize, usize)) -> Self {
        Self {
            frame_dims,
            min_session_days: match adapter {
                Adapter::PublicCsv => Some(2.0),
                Adapter::Canonical => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub adapter: String,
    pub source_sha256: String,
    pub already_ingested: bool,
    pub rows_ingested: usize,
    pub sessions: Vec<SessionId>,
    pub rejected: Vec<Rejection>,
    pub dropped_sessions: Vec<(SessionId, String)>,
}

pub fn ingest_external(
    path: &Path,
    adapter_id: &str,
    store: &Store,
    opts: &IngestOptions,
) -> Result<IngestReport, IoError> {
    let adapter = Adapter::parse(adapter_id)?;
    let hash = sha256_file(path)?;
    let mut report = IngestReport {
        adapter: adapter.id().into(),
        source_sha256: hash.clone(),
        already_ingested: false,
        rows_ingested: 0,
        sessions: Vec::new(),
        rejected: Vec::new(),
        dropped_sessions: Vec::new(),
    };
    if store.is_ingested(&hash) {
        report.already_ingested = true;
        return Ok(report);
    }
    let parsed = match adapter {
        Adapter::Canonical => parse_canonical(path)?,
        Adapter::PublicCsv => parse_public_csv(path, opts.frame_dims)?,
    };
    report.rejected = parsed.rejected;

    let mut sessions: BTreeMap<SessionId, Vec<CanonicalRow>> = BTreeMap::new();
    for (line, row) in parsed.rows {
        let row = match validate_record(row.record(), opts.frame_dims) {
            Ok(rec) => CanonicalRow {
                boxes: rec.boxes,
                ..row
            },
            Err(e) => {
                report.rejected.push(Rejection {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let rows = sessions.entry(row.session_id.clone()).or_default();
        if let Some(prev) = rows.last() {
            if row.ts <= prev.ts {
                report.rejected.push(Rejection {
                    line,
                    reason: format!("ts {} does not follow {}", row.ts, prev.ts),
                });
                continue;
            }
        }
        rows.push(row);
    }

    for (session, rows) in sessions {
        let span_days = (rows[rows.len() - 1].ts - rows[0].ts + 1) as f64 / SECONDS_PER_DAY;
        if let Some(min) = opts.min_session_days {
            if span_days < min {
                report.dropped_sessions.push((
                    session,
                    format!("monitored {span_days:.3} days, minimum {min}"),
                ));
                continue;
            }
        }
        let mut w = store.writer(session.clone())?;
        for row in &rows {
            w.append(row)?;
        }
        w.finish()?;
        report.rows_ingested += rows.len();
        report.sessions.push(session);
    }
    report.rejected.sort_by_key(|r| r.line);
    store.record_ingest(
        hash,
        IngestInfo {
            adapter: adapter.id().into(),
            source: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            rows: report.rows_ingested,
            rejected: report.rejected.len(),
        },
    )?;
    Ok(report)
}

struct Parsed {
    rows: Vec<(usize, CanonicalRow)>,
    rejected: Vec<Rejection>,
}

fn parse_canonical(path: &Path) -> Result<Parsed, IoError> {
    let f = File::open(path).map_err(IoError::file(path))?;
    let mut out = Parsed {
        rows: Vec::new(),
        rejected: Vec::new(),
    };
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(IoError::file(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if i == 0 {
            if let Ok(h) = serde_json::from_str::<SchemaHeader>(t) {
                if h.version != super::SCHEMA_VERSION {
                    return Err(IoError::SchemaMismatch {
                        path: path.to_path_buf(),
                        reason: format!("{} v{}", h.schema, h.version),
                    });
                }
                continue;
            }
        }
        match serde_json::from_str::<CanonicalRow>(t) {
            Ok(row) => out.rows.push((i + 1, row)),
            Err(e) => out.rejected.push(Rejection {
                line: i + 1,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Placeholder person boxes for `count` people, left to right.
pub fn nominal_person_boxes(
    roles: &[Role],
    frame_dims: (usize, usize),
) -> Vec<(BoundingBox, RoleDistribution)> {
    let (fw, fh) = (frame_dims.0 as f64, frame_dims.1 as f64);
    let w = (fw / (roles.len().max(1) as f64 + 1.0)).min(100.0);
    let h = (fh * 0.4).min(250.0);
    roles
        .iter()
        .enumerate()
        .map(|(i, &role)| {
            let x = (i as f64 + 0.5) * w;
            (
                BoundingBox::new(ObjectClass::Person, x, fh - h - 1.0, w * 0.9, h, 1.0),
                RoleDistribution::from_primary(role, 1.0),
            )
        })
        .collect()
}

fn parse_public_csv(path: &Path, frame_dims: (usize, usize)) -> Result<Parsed, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| IoError::SchemaMismatch {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| IoError::SchemaMismatch {
            path: path.to_path_buf(),
            reason: format!("missing column '{name}'"),
        })
    };
    let (c_session, c_ts, c_person) = (need("session_id")?, need("ts")?, need("person_count")?);
    let (c_patient, c_staff, c_motion) = (
        col("patient_count"),
        col("staff_count"),
        col("scene_motion"),
    );

    let mut out = Parsed {
        rows: Vec::new(),
        rejected: Vec::new(),
    };
    for rec in reader.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.rejected.push(Rejection {
                    line: e.position().map_or(0, |p| p.line() as usize),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        match public_row(
            &rec, c_session, c_ts, c_person, c_patient, c_staff, c_motion, frame_dims,
        ) {
            Ok(row) => out.rows.push((line, row)),
            Err(reason) => out.rejected.push(Rejection { line, reason }),
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn public_row(
    rec: &csv::StringRecord,
    c_session: usize,
    c_ts: usize,
    c_person: usize,
    c_patient: Option<usize>,
    c_staff: Option<usize>,
    c_motion: Option<usize>,
    frame_dims: (usize, usize),
) -> Result<CanonicalRow, String> {
    let field = |i: usize| rec.get(i).ok_or_else(|| format!("missing field {}", i + 1));
    let count = |name: &str, i: Option<usize>| -> Result<usize, String> {
        let Some(i) = i else { return Ok(0) };
        let raw = field(i)?;
        if raw.is_empty() {
            return Ok(0);
        }
        let v: i64 = raw
            .parse()
            .map_err(|_| format!("{name} '{raw}' is not an integer"))?;
        usize::try_from(v).map_err(|_| format!("{name} must be >= 0, got {v}"))
    };
    let session = field(c_session)?;
    if session.is_empty() {
        return Err("empty session_id".into());
    }
    let ts: Timestamp = field(c_ts)?
        .parse()
        .map_err(|_| format!("ts '{}' is not an integer", field(c_ts).unwrap_or("")))?;
    let persons = count("person_count", Some(c_person))?;
    let patients = count("patient_count", c_patient)?;
    let staff = count("staff_count", c_staff)?;
    if patients + staff > persons {
        return Err(format!(
            "patient_count + staff_count = {} exceeds person_count {persons}",
            patients + staff
        ));
    }
    let scene = match c_motion.map(field).transpose()? {
        Some(raw) if !raw.is_empty() => {
            let v: f64 = raw
                .parse()
                .map_err(|_| format!("scene_motion '{raw}' is not a number"))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("scene_motion must be finite and >= 0, got {v}"));
            }
            Some(v)
        }
        _ => None,
    };
    let mut roles = vec![Role::Patient; patients];
    roles.extend(std::iter::repeat_n(Role::Staff, staff));
    roles.extend(std::iter::repeat_n(Role::Other, persons - patients - staff));
    let mut row =
        CanonicalRow::from_record(crate::model::DetectionRecord::empty(session.into(), ts));
    for (b, d) in nominal_person_boxes(&roles, frame_dims) {
        row.boxes.push(b);
        row.roles.push(Some(d));
    }
    row.motion = scene.map(|s| RoiMotion {
        scene: Some(s),
        ..Default::default()
    });
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY: i64 = 86_400;

    fn csv_file(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("export.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    fn two_day_body() -> String {
        let mut s = String::from("session_id,ts,person_count,patient_count,staff_count\n");
        for (i, ts) in [0, 60, 3600, DAY, 2 * DAY - 1].iter().enumerate() {
            s.push_str(&format!("p1,{ts},{},1,{}\n", 1 + i % 2, i % 2));
        }
        s
    }

    #[test]
    fn well_formed_export_preserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let src = csv_file(dir.path(), &two_day_body());
        let store = Store::open(dir.path().join("store")).unwrap();
        let opts = IngestOptions::for_adapter(Adapter::PublicCsv, (1088, 612));
        let rep = ingest_external(&src, "public-csv", &store, &opts).unwrap();
        assert_eq!(rep.rows_ingested, 5);
        assert!(rep.rejected.is_empty());
        let rows = store.read_session(&"p1".into()).unwrap();
        assert_eq!(rows.len(), 5);
        let second = rows[1].record();
        assert_eq!(second.person_count(), 2);
        assert!(second.has_role(Role::Patient) && second.has_role(Role::Staff));
    }

    #[test]
    fn negative_count_rejected_others_kept() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = two_day_body();
        body.push_str("p1,200000,-1,0,0\n");
        let src = csv_file(dir.path(), &body);
        let store = Store::open(dir.path().join("store")).unwrap();
        let opts = IngestOptions::for_adapter(Adapter::PublicCsv, (1088, 612));
        let rep = ingest_external(&src, "public-csv", &store, &opts).unwrap();
        assert_eq!(rep.rows_ingested, 5);
        assert_eq!(rep.rejected.len(), 1);
        assert_eq!(rep.rejected[0].line, 7);
        assert!(rep.rejected[0].reason.contains(">= 0"));
    }

    #[test]
    fn double_ingest_is_a_no_op() {
        let dir = tempfile::tempdir().unwrap();
        let src = csv_file(dir.path(), &two_day_body());
        let store = Store::open(dir.path().join("store")).unwrap();
        let opts = IngestOptions::for_adapter(Adapter::PublicCsv, (1088, 612));
        ingest_external(&src, "public-csv", &store, &opts).unwrap();
        let manifest = std::fs::read(dir.path().join("store/manifest.json")).unwrap();
        let again = ingest_external(&src, "public-csv", &store, &opts).unwrap();
        assert!(again.already_ingested);
        assert_eq!(
            std::fs::read(dir.path().join("store/manifest.json")).unwrap(),
            manifest
        );
    }

    #[test]
    fn short_sessions_dropped_and_bad_schema_reported() {
        let dir = tempfile::tempdir().unwrap();
        let src = csv_file(dir.path(), "session_id,ts,person_count\ns,0,1\ns,10,1\n");
        let store = Store::open(dir.path().join("store")).unwrap();
        let opts = IngestOptions::for_adapter(Adapter::PublicCsv, (1088, 612));
        let rep = ingest_external(&src, "public-csv", &store, &opts).unwrap();
        assert_eq!(rep.rows_ingested, 0);
        assert_eq!(rep.dropped_sessions.len(), 1);

        let dir2 = tempfile::tempdir().unwrap();
        let src = csv_file(dir2.path(), "session,time\nx,1\n");
        assert!(matches!(
            ingest_external(&src, "public-csv", &store, &opts),
            Err(IoError::SchemaMismatch { .. })
        ));
        assert!(matches!(
            ingest_external(&src, "parquet", &store, &opts),
            Err(IoError::UnknownAdapter(_))
        ));
    }
}
