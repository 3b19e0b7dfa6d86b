//! Flat-file formats: JSONL records, trend and log CSVs, flat export.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::eval::TrendAccuracyRow;
use crate::geometry::CrossingEvent;
use crate::model::{CanonicalRow, Role, SessionId, Timestamp};
use crate::trend::{CohortHour, HourlyTrend, ObservationLog};

use super::{IoError, CSV_SCHEMA_HEADER};

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

fn io_csv(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// CSV writer whose output starts with the schema comment line.
pub fn csv_writer<W: Write>(mut out: W) -> std::io::Result<csv::Writer<W>> {
    writeln!(out, "{CSV_SCHEMA_HEADER}")?;
    Ok(csv::Writer::from_writer(out))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(IoError::file(dir))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(IoError::file(path))?,
    ))
}

/// One value per line; blank lines and lines starting with `#` are
/// skipped, as is a leading `{"schema": ...}` header object.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let f = File::open(path).map_err(IoError::file(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(IoError::file(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || (i == 0 && t.starts_with("{\"schema\"")) {
            continue;
        }
        out.push(serde_json::from_str(t).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(
    items: &[T],
    schema: &str,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "{{\"schema\":\"{schema}\",\"version\":{}}}",
        super::SCHEMA_VERSION
    )?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_trends_csv<W: Write>(trends: &[HourlyTrend], out: W) -> std::io::Result<()> {
    let mut w = csv_writer(out)?;
    w.write_record([
        "session_id",
        "date",
        "hour",
        "monitored_min",
        "alone_min",
        "moving_min",
        "alone_moving_min",
        "supervised_min",
    ])
    .map_err(io_csv)?;
    for t in trends {
        w.write_record([
            t.session_id.to_string(),
            t.date.to_string(),
            t.hour.to_string(),
            t.monitored_minutes.to_string(),
            t.alone.to_string(),
            t.moving.to_string(),
            t.alone_and_moving.to_string(),
            t.supervised_by_staff.to_string(),
        ])
        .map_err(io_csv)?;
    }
    w.flush()
}

pub fn write_cohort_csv<W: Write>(hours: &[CohortHour], out: W) -> std::io::Result<()> {
    let mut w = csv_writer(out)?;
    w.write_record([
        "hour",
        "patient_days",
        "monitored_min",
        "alone_min",
        "moving_min",
        "alone_moving_min",
        "supervised_min",
    ])
    .map_err(io_csv)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for h in hours {
        w.write_record([
            h.hour.to_string(),
            h.patient_days.to_string(),
            opt(h.monitored_minutes),
            opt(h.alone),
            opt(h.moving),
            opt(h.alone_and_moving),
            opt(h.supervised_by_staff),
        ])
        .map_err(io_csv)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LogRow {
    session_id: SessionId,
    start_ts: Timestamp,
    end_ts: Timestamp,
}

/// Observation logs grouped by session; `end_ts` is exclusive.
pub fn read_observation_logs(path: &Path) -> Result<Vec<ObservationLog>, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut by_session: BTreeMap<SessionId, Vec<(Timestamp, Timestamp)>> = BTreeMap::new();
    for rec in r.deserialize::<LogRow>() {
        let row = rec.map_err(csv_err(path))?;
        by_session
            .entry(row.session_id)
            .or_default()
            .push((row.start_ts, row.end_ts));
    }
    by_session
        .into_iter()
        .map(|(s, iv)| {
            ObservationLog::new(s, iv).map_err(|e| IoError::SchemaMismatch {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_observation_logs<W: Write>(logs: &[ObservationLog], out: W) -> std::io::Result<()> {
    let mut w = csv_writer(out)?;
    w.write_record(["session_id", "start_ts", "end_ts"])
        .map_err(io_csv)?;
    for log in logs {
        for &(s, e) in log.intervals() {
            w.write_record([log.session_id.to_string(), s.to_string(), e.to_string()])
                .map_err(io_csv)?;
        }
    }
    w.flush()
}

pub fn write_trend_accuracy_csv<W: Write>(
    rows: &[TrendAccuracyRow],
    out: W,
) -> std::io::Result<()> {
    let mut w = csv_writer(out)?;
    w.write_record([
        "session_id",
        "date",
        "period",
        "method",
        "accuracy",
        "seconds",
    ])
    .map_err(io_csv)?;
    for r in rows {
        let method = match r.method {
            crate::eval::AccuracyMethod::Logistic => "logistic",
            crate::eval::AccuracyMethod::Manual => "manual",
        };
        w.write_record([
            r.session_id.to_string(),
            r.date.to_string(),
            r.period.as_str().to_string(),
            method.to_string(),
            r.accuracy.to_string(),
            r.seconds.to_string(),
        ])
        .map_err(io_csv)?;
    }
    w.flush()
}

pub fn write_crossings_csv<W: Write>(events: &[CrossingEvent], out: W) -> std::io::Result<()> {
    let mut w = csv_writer(out)?;
    w.write_record(["session_id", "ts", "direction", "person_index"])
        .map_err(io_csv)?;
    for e in events {
        let dir = match e.direction {
            crate::geometry::CrossingDirection::Exit => "exit",
            crate::geometry::CrossingDirection::Entry => "entry",
        };
        w.write_record([
            e.session_id.to_string(),
            e.ts.to_string(),
            dir.to_string(),
            e.person_index.to_string(),
        ])
        .map_err(io_csv)?;
    }
    w.flush()
}

/// One flat line per stored second, for loading into external warehouses.
pub fn export_rows_csv<W: Write>(rows: &[CanonicalRow], out: W) -> std::io::Result<()> {
    let mut w = csv_writer(out)?;
    w.write_record([
        "session_id",
        "ts",
        "person_count",
        "patient_count",
        "staff_count",
        "other_count",
        "bed_count",
        "chair_count",
        "scene_motion",
        "bed_motion",
        "zone_motion",
        "person_alone",
        "patient_alone",
        "supervised_by_staff",
        "moving",
    ])
    .map_err(io_csv)?;
    let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_b = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let role_count = |role: Role| {
            r.roles
                .iter()
                .flatten()
                .filter(|d| d.argmax() == role)
                .count()
                .to_string()
        };
        let cls_count = |cls: crate::model::ObjectClass| {
            r.boxes.iter().filter(|b| b.cls == cls).count().to_string()
        };
        let m = r.motion.unwrap_or_default();
        let l = r.logical;
        w.write_record([
            r.session_id.to_string(),
            r.ts.to_string(),
            cls_count(crate::model::ObjectClass::Person),
            role_count(Role::Patient),
            role_count(Role::Staff),
            role_count(Role::Other),
            cls_count(crate::model::ObjectClass::Bed),
            cls_count(crate::model::ObjectClass::Chair),
            opt_f(m.scene),
            opt_f(m.bed),
            opt_f(m.safety_zone),
            opt_b(l.map(|f| f.person_alone)),
            opt_b(l.map(|f| f.patient_alone)),
            opt_b(l.map(|f| f.supervised_by_staff)),
            opt_b(l.map(|f| f.moving)),
        ])
        .map_err(io_csv)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_log_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let logs = vec![
            ObservationLog::new("a".into(), vec![(0, 10), (20, 25)]).unwrap(),
            ObservationLog::new("b".into(), vec![(5, 6)]).unwrap(),
        ];
        write_observation_logs(&logs, create(&path).unwrap()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(CSV_SCHEMA_HEADER));
        assert_eq!(read_observation_logs(&path).unwrap(), logs);
    }

    #[test]
    fn overlapping_log_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        std::fs::write(&path, "session_id,start_ts,end_ts\na,0,10\na,5,12\n").unwrap();
        assert!(matches!(
            read_observation_logs(&path),
            Err(IoError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let rows = vec![CanonicalRow::from_record(
            crate::model::DetectionRecord::empty("s".into(), 1),
        )];
        write_jsonl(&rows, "ward-sentinel.canonical", create(&path).unwrap()).unwrap();
        let back: Vec<CanonicalRow> = read_jsonl(&path).unwrap();
        assert_eq!(back, rows);
    }
}
