//! Role attribution, the trailing smoothing window and per-second logical
//! states.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BoundingBox, DetectionRecord, LogicalState, MotionRecord, ObjectClass, PipelineConfig, Role,
    RoleDistribution, SessionId, Timestamp,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogicError {
    #[error("detector gave no role confidences")]
    NoRoleSignal,
    #[error("record at ts {ts} does not follow {last}")]
    OutOfOrderRecord { last: Timestamp, ts: Timestamp },
    #[error("smoothing window is empty")]
    EmptyWindow,
    #[error("window belongs to session {expected}, got {got}")]
    SessionMismatch { expected: SessionId, got: SessionId },
    #[error("motion for ts {motion} paired with record at ts {record}")]
    MotionMismatch {
        record: Timestamp,
        motion: Timestamp,
    },
}

/// Role-specific detector confidences for one person box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoleConfidences {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub staff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<f64>,
}

impl RoleConfidences {
    pub fn only(role: Role, confidence: f64) -> Self {
        let mut c = Self::default();
        match role {
            Role::Patient => c.patient = Some(confidence),
            Role::Staff => c.staff = Some(confidence),
            Role::Other => c.other = Some(confidence),
        }
        c
    }

    pub fn get(&self, role: Role) -> Option<f64> {
        match role {
            Role::Patient => self.patient,
            Role::Staff => self.staff,
            Role::Other => self.other,
        }
    }

    pub fn is_empty(&self) -> bool {
        Role::ALL
            .iter()
            .all(|&r| self.get(r).is_none_or(|v| !v.is_finite()))
    }
}

/// Primary role takes its own confidence; the residual is split equally
/// over the remaining two roles.
pub fn attribute_role(conf: &RoleConfidences) -> Result<RoleDistribution, LogicError> {
    let mut best: Option<(Role, f64)> = None;
    for role in Role::ALL {
        if let Some(c) = conf.get(role).filter(|c| c.is_finite()) {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((role, c));
            }
        }
    }
    let (role, c) = best.ok_or(LogicError::NoRoleSignal)?;
    Ok(RoleDistribution::from_primary(role, c))
}

/// Attributes every person; those without any signal get the uniform
/// distribution and are listed in the second return value.
pub fn attribute_roles(persons: &[RoleConfidences]) -> (Vec<RoleDistribution>, Vec<usize>) {
    let mut flagged = Vec::new();
    let dists = persons
        .iter()
        .enumerate()
        .map(|(i, c)| {
            attribute_role(c).unwrap_or_else(|_| {
                flagged.push(i);
                RoleDistribution::uniform()
            })
        })
        .collect();
    (dists, flagged)
}

/// One box as emitted by a detector, before role attribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    #[serde(default)]
    pub roles: RoleConfidences,
}

impl RawDetection {
    pub fn new(bbox: BoundingBox, roles: RoleConfidences) -> Self {
        Self { bbox, roles }
    }

    pub fn object(bbox: BoundingBox) -> Self {
        Self::new(bbox, RoleConfidences::default())
    }
}

/// Builds the record for one second; role distributions are attached to
/// person boxes only. Returns the indices (into the record's boxes) of
/// persons that carried no role signal.
pub fn attribute_detections(
    session_id: SessionId,
    ts: Timestamp,
    raws: &[RawDetection],
) -> (DetectionRecord, Vec<usize>) {
    let mut rec = DetectionRecord::empty(session_id, ts);
    let mut flagged = Vec::new();
    for (i, raw) in raws.iter().enumerate() {
        let role = if raw.bbox.cls == ObjectClass::Person {
            Some(attribute_role(&raw.roles).unwrap_or_else(|_| {
                flagged.push(i);
                RoleDistribution::uniform()
            }))
        } else {
            None
        };
        rec.push(raw.bbox, role);
    }
    (rec, flagged)
}

/// What the window keeps from each second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEntry {
    pub ts: Timestamp,
    pub person_count: usize,
    pub has_patient: bool,
    pub has_staff: bool,
    pub scene_motion: Option<f64>,
}

impl WindowEntry {
    pub fn from_record(rec: &DetectionRecord, motion: Option<&MotionRecord>) -> Self {
        Self {
            ts: rec.ts,
            person_count: rec.person_count(),
            has_patient: rec.has_role(Role::Patient),
            has_staff: rec.has_role(Role::Staff),
            scene_motion: motion.and_then(|m| m.magnitudes.scene),
        }
    }
}

/// Trailing window over the last `size_s` seconds of one session.
#[derive(Debug, Clone)]
pub struct SmoothingWindow {
    size_s: u32,
    session: Option<SessionId>,
    entries: VecDeque<WindowEntry>,
}

impl SmoothingWindow {
    pub fn new(size_s: u32) -> Self {
        let size_s = size_s.max(1);
        Self {
            size_s,
            session: None,
            entries: VecDeque::with_capacity(size_s as usize),
        }
    }

    pub fn size_s(&self) -> u32 {
        self.size_s
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    pub fn last_ts(&self) -> Option<Timestamp> {
        self.entries.back().map(|e| e.ts)
    }

    pub fn session(&self) -> Option<&SessionId> {
        self.session.as_ref()
    }

    /// Appends one second. A gap longer than the window restarts it; older
    /// entries fall out once they leave `(ts - size_s, ts]`.
    pub fn update(
        &mut self,
        rec: &DetectionRecord,
        motion: Option<&MotionRecord>,
    ) -> Result<(), LogicError> {
        if let Some(s) = &self.session {
            if *s != rec.session_id {
                return Err(LogicError::SessionMismatch {
                    expected: s.clone(),
                    got: rec.session_id.clone(),
                });
            }
        }
        if let Some(m) = motion {
            if m.ts != rec.ts {
                return Err(LogicError::MotionMismatch {
                    record: rec.ts,
                    motion: m.ts,
                });
            }
        }
        if let Some(last) = self.last_ts() {
            if rec.ts <= last {
                return Err(LogicError::OutOfOrderRecord { last, ts: rec.ts });
            }
            if rec.ts - last > self.size_s as i64 {
                self.entries.clear();
            }
        }
        self.session = Some(rec.session_id.clone());
        let horizon = rec.ts - self.size_s as i64;
        while self.entries.front().is_some_and(|e| e.ts <= horizon) {
            self.entries.pop_front();
        }
        self.entries
            .push_back(WindowEntry::from_record(rec, motion));
        Ok(())
    }
}

/// Functional form of [`SmoothingWindow::update`].
pub fn update_window(
    mut w: SmoothingWindow,
    rec: &DetectionRecord,
    motion: Option<&MotionRecord>,
) -> Result<SmoothingWindow, LogicError> {
    w.update(rec, motion)?;
    Ok(w)
}

/// Logical state at the window's most recent second.
///
/// With `avg` the mean person count over the window: alone when `avg < 2`;
/// patient alone when also some second shows a patient; supervised when
/// `avg >= 2` and some second shows staff; moving when the mean scene
/// motion over seconds that have it exceeds the threshold.
pub fn derive_state(w: &SmoothingWindow, cfg: &PipelineConfig) -> Result<LogicalState, LogicError> {
    let last = w.entries.back().ok_or(LogicError::EmptyWindow)?;
    let n = w.entries.len();
    let total: usize = w.entries.iter().map(|e| e.person_count).sum();
    let avg = total as f64 / n as f64;
    let any_patient = w.entries.iter().any(|e| e.has_patient);
    let any_staff = w.entries.iter().any(|e| e.has_staff);
    let (mut msum, mut mcount) = (0.0f64, 0usize);
    for m in w.entries.iter().filter_map(|e| e.scene_motion) {
        msum += m;
        mcount += 1;
    }
    let moving = mcount > 0 && msum / mcount as f64 > cfg.moving_threshold;
    let person_alone = avg < 2.0;
    Ok(LogicalState {
        session_id: w.session.clone().expect("non-empty window has a session"),
        ts: last.ts,
        person_alone,
        patient_alone: person_alone && any_patient,
        supervised_by_staff: !person_alone && any_staff,
        moving,
        smoothed_person_count: avg,
    })
}

/// Window plus derivation for one session's stream.
#[derive(Debug, Clone)]
pub struct LogicEngine {
    cfg: PipelineConfig,
    window: SmoothingWindow,
}

impl LogicEngine {
    pub fn new(cfg: PipelineConfig) -> Self {
        let window = SmoothingWindow::new(cfg.smoothing_window_s);
        Self { cfg, window }
    }

    pub fn push(
        &mut self,
        rec: &DetectionRecord,
        motion: Option<&MotionRecord>,
    ) -> Result<LogicalState, LogicError> {
        self.window.update(rec, motion)?;
        derive_state(&self.window, &self.cfg)
    }

    pub fn window(&self) -> &SmoothingWindow {
        &self.window
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, ObjectClass, RoiMotion};

    fn dist_close(d: RoleDistribution, p: f64, s: f64, o: f64) {
        for (a, b) in [
            (d.score(Role::Patient), p),
            (d.score(Role::Staff), s),
            (d.score(Role::Other), o),
        ] {
            assert!((a - b).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn attribution_splits_residual() {
        dist_close(
            attribute_role(&RoleConfidences::only(Role::Patient, 0.9)).unwrap(),
            0.9,
            0.05,
            0.05,
        );
        dist_close(
            attribute_role(&RoleConfidences::only(Role::Staff, 0.4)).unwrap(),
            0.3,
            0.4,
            0.3,
        );
        let tie = RoleConfidences {
            patient: Some(0.5),
            staff: Some(0.5),
            other: None,
        };
        dist_close(attribute_role(&tie).unwrap(), 0.5, 0.25, 0.25);
    }

    #[test]
    fn missing_signal_flagged_uniform() {
        assert_eq!(
            attribute_role(&RoleConfidences::default()),
            Err(LogicError::NoRoleSignal)
        );
        let (d, flagged) = attribute_roles(&[
            RoleConfidences::only(Role::Other, 0.8),
            RoleConfidences::default(),
        ]);
        assert_eq!(flagged, vec![1]);
        assert_eq!(d[1], RoleDistribution::uniform());
        assert_eq!(d[0].argmax(), Role::Other);
    }

    fn rec(ts: Timestamp, roles: &[Role]) -> DetectionRecord {
        let mut r = DetectionRecord::empty("s".into(), ts);
        for &role in roles {
            r.push(
                BoundingBox::new(ObjectClass::Person, 10.0, 10.0, 20.0, 40.0, 0.9),
                Some(RoleDistribution::from_primary(role, 0.9)),
            );
        }
        r
    }

    fn motion(ts: Timestamp, scene: f64) -> MotionRecord {
        MotionRecord {
            session_id: "s".into(),
            ts,
            magnitudes: RoiMotion {
                scene: Some(scene),
                ..Default::default()
            },
        }
    }

    #[test]
    fn window_evicts_and_resets() {
        let mut w = SmoothingWindow::new(5);
        for ts in 0..6 {
            w.update(&rec(ts, &[]), None).unwrap();
        }
        assert_eq!(w.len(), 5);
        assert_eq!(w.entries().next().unwrap().ts, 1);
        w.update(&rec(15, &[]), None).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(
            w.update(&rec(15, &[]), None),
            Err(LogicError::OutOfOrderRecord { last: 15, ts: 15 })
        );
    }

    #[test]
    fn short_gap_keeps_recent_entries() {
        let mut w = SmoothingWindow::new(5);
        for ts in 10..15 {
            w.update(&rec(ts, &[]), None).unwrap();
        }
        w.update(&rec(16, &[]), None).unwrap();
        let ts: Vec<_> = w.entries().map(|e| e.ts).collect();
        assert_eq!(ts, vec![12, 13, 14, 16]);
    }

    #[test]
    fn patient_alone_when_single_patient_still() {
        let cfg = PipelineConfig::default();
        let mut e = LogicEngine::new(cfg);
        let mut s = None;
        for ts in 0..5 {
            s = Some(
                e.push(&rec(ts, &[Role::Patient]), Some(&motion(ts, 0.0)))
                    .unwrap(),
            );
        }
        let s = s.unwrap();
        assert!(s.person_alone && s.patient_alone && !s.supervised_by_staff && !s.moving);
    }

    #[test]
    fn average_below_two_is_alone() {
        let cfg = PipelineConfig::default();
        let mut e = LogicEngine::new(cfg);
        let counts = [1, 1, 1, 3, 3];
        let mut last = None;
        for (ts, &c) in counts.iter().enumerate() {
            last = Some(
                e.push(&rec(ts as i64, &vec![Role::Other; c]), None)
                    .unwrap(),
            );
        }
        let s = last.unwrap();
        assert!((s.smoothed_person_count - 1.8).abs() < 1e-12);
        assert!(s.person_alone);
        assert!(!s.patient_alone);
    }

    #[test]
    fn two_with_staff_is_supervised() {
        let cfg = PipelineConfig::default();
        let mut e = LogicEngine::new(cfg);
        let mut last = None;
        for ts in 0..5 {
            last = Some(
                e.push(&rec(ts, &[Role::Patient, Role::Staff]), None)
                    .unwrap(),
            );
        }
        let s = last.unwrap();
        assert!(s.supervised_by_staff && !s.person_alone && !s.patient_alone);
    }

    #[test]
    fn moving_uses_mean_scene_motion() {
        let cfg = PipelineConfig::default();
        let mut e = LogicEngine::new(cfg);
        e.push(&rec(0, &[Role::Patient]), Some(&motion(0, 0.0)))
            .unwrap();
        let s = e
            .push(&rec(1, &[Role::Patient]), Some(&motion(1, 1.2)))
            .unwrap();
        assert!(s.moving, "mean 0.6 > 0.5");
        let s = e.push(&rec(2, &[Role::Patient]), None).unwrap();
        assert!(s.moving);
        let s = e
            .push(&rec(3, &[Role::Patient]), Some(&motion(3, 0.0)))
            .unwrap();
        assert!(!s.moving, "mean 0.4");
    }

    #[test]
    fn empty_window_errors() {
        assert_eq!(
            derive_state(&SmoothingWindow::new(5), &PipelineConfig::default()),
            Err(LogicError::EmptyWindow)
        );
    }

    #[test]
    fn motion_must_match_record() {
        let mut w = SmoothingWindow::new(5);
        assert!(matches!(
            w.update(&rec(3, &[]), Some(&motion(4, 0.0))),
            Err(LogicError::MotionMismatch { .. })
        ));
    }
}
