//! Shared domain vocabulary: frames, detections, roles, per-second records
//! and pipeline configuration.
//!
//! Everything here is plain data. Values are validated on construction and
//! never mutated afterwards, so they can be shared freely across threads.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowParams, MotionAggregation};

/// Whole seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

/// Tolerance on `patient + staff + other == 1`.
pub const ROLE_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("malformed record at ts {ts}: {reason}")]
    MalformedRecord { ts: Timestamp, reason: String },
    #[error("non-monotonic timestamp in session {session}: {ts} after {prev}")]
    NonMonotonicTimestamp {
        session: SessionId,
        prev: Timestamp,
        ts: Timestamp,
    },
    #[error("invalid role distribution: {0}")]
    InvalidRoleDistribution(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Opaque session identifier. Carries no patient-identifying content.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SessionId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Rgb,
    /// Near-infrared, single channel.
    Nir,
}

impl ColorMode {
    pub fn channels(self) -> usize {
        match self {
            ColorMode::Rgb => 3,
            ColorMode::Nir => 1,
        }
    }
}

/// One captured image, row-major, 8 bits per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    session_id: SessionId,
    ts: Timestamp,
    width: usize,
    height: usize,
    mode: ColorMode,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(
        session_id: SessionId,
        ts: Timestamp,
        width: usize,
        height: usize,
        mode: ColorMode,
        pixels: Vec<u8>,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::InvalidFrame(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width * height * mode.channels();
        if pixels.len() != expected {
            return Err(ModelError::InvalidFrame(format!(
                "buffer length {} does not match {width}x{height}x{}",
                pixels.len(),
                mode.channels()
            )));
        }
        Ok(Self {
            session_id,
            ts,
            width,
            height,
            mode,
            pixels,
        })
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn ts(&self) -> Timestamp {
        self.ts
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mode(&self) -> ColorMode {
        self.mode
    }

    pub fn channels(&self) -> usize {
        self.mode.channels()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Person,
    Bed,
    Chair,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [ObjectClass::Person, ObjectClass::Bed, ObjectClass::Chair];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Person => "person",
            ObjectClass::Bed => "bed",
            ObjectClass::Chair => "chair",
        }
    }
}

/// Axis-aligned box in pixels, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cls: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

impl BoundingBox {
    pub fn new(cls: ObjectClass, x: f64, y: f64, w: f64, h: f64, confidence: f64) -> Self {
        Self {
            cls,
            x,
            y,
            w,
            h,
            confidence,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Intersection with `[0, width] x [0, height]`, or `None` if empty.
    pub fn clamped(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width);
        let y1 = self.bottom().min(height);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(BoundingBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            ..*self
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Patient,
    Staff,
    Other,
}

impl Role {
    /// Also the tie-break order: earlier wins.
    pub const ALL: [Role; 3] = [Role::Patient, Role::Staff, Role::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Patient => "patient",
            Role::Staff => "staff",
            Role::Other => "other",
        }
    }
}

/// Role scores of one detected person; the three scores sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRoleDistribution")]
pub struct RoleDistribution {
    patient: f64,
    staff: f64,
    other: f64,
}

#[derive(Deserialize)]
struct RawRoleDistribution {
    patient: f64,
    staff: f64,
    other: f64,
}

impl TryFrom<RawRoleDistribution> for RoleDistribution {
    type Error = ModelError;

    fn try_from(raw: RawRoleDistribution) -> Result<Self, Self::Error> {
        RoleDistribution::new(raw.patient, raw.staff, raw.other)
    }
}

impl RoleDistribution {
    pub fn new(patient: f64, staff: f64, other: f64) -> Result<Self, ModelError> {
        for (name, v) in [("patient", patient), ("staff", staff), ("other", other)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(ModelError::InvalidRoleDistribution(format!(
                    "{name} score {v} outside [0, 1]"
                )));
            }
        }
        let sum = patient + staff + other;
        if (sum - 1.0).abs() > ROLE_SUM_TOLERANCE {
            return Err(ModelError::InvalidRoleDistribution(format!(
                "scores sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            patient,
            staff,
            other,
        })
    }

    /// `score` on `primary`, the residual split equally over the other two.
    pub fn from_primary(primary: Role, score: f64) -> Self {
        let score = if score.is_finite() {
            score.clamp(0.0, 1.0)
        } else {
            0.0
        };
        let residual = (1.0 - score) / 2.0;
        let mut d = Self {
            patient: residual,
            staff: residual,
            other: residual,
        };
        *d.slot(primary) = score;
        d
    }

    pub fn uniform() -> Self {
        let third = 1.0 / 3.0;
        Self {
            patient: third,
            staff: third,
            other: third,
        }
    }

    fn slot(&mut self, role: Role) -> &mut f64 {
        match role {
            Role::Patient => &mut self.patient,
            Role::Staff => &mut self.staff,
            Role::Other => &mut self.other,
        }
    }

    pub fn score(&self, role: Role) -> f64 {
        match role {
            Role::Patient => self.patient,
            Role::Staff => self.staff,
            Role::Other => self.other,
        }
    }

    /// Highest-scoring role; ties resolve patient > staff > other.
    pub fn argmax(&self) -> Role {
        let mut best = Role::Patient;
        for role in [Role::Staff, Role::Other] {
            if self.score(role) > self.score(best) {
                best = role;
            }
        }
        best
    }
}

/// One second of detections for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub session_id: SessionId,
    pub ts: Timestamp,
    pub boxes: Vec<BoundingBox>,
    /// Parallel to `boxes`; `Some` exactly for person boxes.
    pub roles: Vec<Option<RoleDistribution>>,
}

impl DetectionRecord {
    pub fn empty(session_id: SessionId, ts: Timestamp) -> Self {
        Self {
            session_id,
            ts,
            boxes: Vec::new(),
            roles: Vec::new(),
        }
    }

    pub fn push(&mut self, bbox: BoundingBox, role: Option<RoleDistribution>) {
        self.boxes.push(bbox);
        self.roles.push(role);
    }

    pub fn persons(
        &self,
    ) -> impl Iterator<Item = (usize, &BoundingBox, Option<&RoleDistribution>)> {
        self.boxes
            .iter()
            .zip(&self.roles)
            .enumerate()
            .filter(|(_, (b, _))| b.cls == ObjectClass::Person)
            .map(|(i, (b, r))| (i, b, r.as_ref()))
    }

    pub fn person_count(&self) -> usize {
        self.boxes
            .iter()
            .filter(|b| b.cls == ObjectClass::Person)
            .count()
    }

    /// Whether any person's argmax role is `role`.
    pub fn has_role(&self, role: Role) -> bool {
        self.persons()
            .any(|(_, _, r)| r.map(|d| d.argmax() == role).unwrap_or(false))
    }

    /// Highest-confidence box of `cls` (first one on ties).
    pub fn best_of(&self, cls: ObjectClass) -> Option<&BoundingBox> {
        self.boxes
            .iter()
            .filter(|b| b.cls == cls)
            .fold(None, |best: Option<&BoundingBox>, b| match best {
                Some(cur) if cur.confidence >= b.confidence => Some(cur),
                _ => Some(b),
            })
    }
}

/// Mean motion magnitude per region, px/frame at analysis resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoiMotion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_zone: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub session_id: SessionId,
    pub ts: Timestamp,
    pub magnitudes: RoiMotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalState {
    pub session_id: SessionId,
    pub ts: Timestamp,
    pub person_alone: bool,
    pub patient_alone: bool,
    pub supervised_by_staff: bool,
    pub moving: bool,
    pub smoothed_person_count: f64,
}

/// The `logical` object of a canonical row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogicalFlags {
    pub person_alone: bool,
    pub patient_alone: bool,
    pub supervised_by_staff: bool,
    pub moving: bool,
    #[serde(default)]
    pub smoothed_person_count: f64,
}

impl LogicalState {
    pub fn flags(&self) -> LogicalFlags {
        LogicalFlags {
            person_alone: self.person_alone,
            patient_alone: self.patient_alone,
            supervised_by_staff: self.supervised_by_staff,
            moving: self.moving,
            smoothed_person_count: self.smoothed_person_count,
        }
    }

    pub fn from_flags(session_id: SessionId, ts: Timestamp, f: LogicalFlags) -> Self {
        Self {
            session_id,
            ts,
            person_alone: f.person_alone,
            patient_alone: f.patient_alone,
            supervised_by_staff: f.supervised_by_staff,
            moving: f.moving,
            smoothed_person_count: f.smoothed_person_count,
        }
    }
}

/// One line of the canonical JSONL store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRow {
    pub session_id: SessionId,
    pub ts: Timestamp,
    pub boxes: Vec<BoundingBox>,
    pub roles: Vec<Option<RoleDistribution>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<RoiMotion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logical: Option<LogicalFlags>,
}

impl CanonicalRow {
    pub fn from_record(rec: DetectionRecord) -> Self {
        Self {
            session_id: rec.session_id,
            ts: rec.ts,
            boxes: rec.boxes,
            roles: rec.roles,
            motion: None,
            logical: None,
        }
    }

    pub fn record(&self) -> DetectionRecord {
        DetectionRecord {
            session_id: self.session_id.clone(),
            ts: self.ts,
            boxes: self.boxes.clone(),
            roles: self.roles.clone(),
        }
    }

    pub fn motion_record(&self) -> Option<MotionRecord> {
        self.motion.map(|m| MotionRecord {
            session_id: self.session_id.clone(),
            ts: self.ts,
            magnitudes: m,
        })
    }

    pub fn logical_state(&self) -> Option<LogicalState> {
        self.logical
            .map(|f| LogicalState::from_flags(self.session_id.clone(), self.ts, f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HospitalSize {
    /// Average daily census below 100.
    Small,
    /// 100 to 299.
    Medium,
    /// 300 and above.
    Large,
}

impl HospitalSize {
    pub fn from_census(avg_daily_census: f64) -> Self {
        if avg_daily_census < 100.0 {
            HospitalSize::Small
        } else if avg_daily_census < 300.0 {
            HospitalSize::Medium
        } else {
            HospitalSize::Large
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: SessionId,
    pub hospital_id: String,
    pub hospital_size_bucket: HospitalSize,
    pub age_bucket: String,
    pub gender: String,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
}

/// Sessions shorter than this are dropped from the public dataset.
pub const MIN_PUBLIC_MONITORING_S: i64 = 2 * 86_400;

impl SessionMeta {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.end_ts <= self.start_ts {
            return Err(ModelError::InvalidConfig(format!(
                "session {} ends ({}) before it starts ({})",
                self.session_id, self.end_ts, self.start_ts
            )));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> i64 {
        self.end_ts - self.start_ts
    }

    pub fn eligible_for_public_dataset(&self) -> bool {
        self.duration_s() >= MIN_PUBLIC_MONITORING_S
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub smoothing_window_s: u32,
    /// Mean scene flow magnitude (px/frame at analysis resolution) above which
    /// the room counts as moving.
    pub moving_threshold: f64,
    pub iou_threshold: f64,
    pub day_start_hour: u32,
    pub night_start_hour: u32,
    pub safety_zone_expansion: f64,
    pub flow: FlowParams,
    pub motion_aggregation: MotionAggregation,
    /// Cross-frame person matching gate as a fraction of the frame diagonal.
    pub crossing_gate: f64,
    /// Coordinate frame of detection boxes and zone polygons.
    pub analysis_width: usize,
    pub analysis_height: usize,
    pub flow_width: usize,
    pub flow_height: usize,
    pub exclude_exception_frames: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            smoothing_window_s: 5,
            moving_threshold: 0.5,
            iou_threshold: 0.5,
            day_start_hour: 6,
            night_start_hour: 21,
            safety_zone_expansion: 0.10,
            flow: FlowParams::default(),
            motion_aggregation: MotionAggregation::MeanMagnitude,
            crossing_gate: 0.15,
            analysis_width: 1088,
            analysis_height: 612,
            flow_width: 480,
            flow_height: 270,
            exclude_exception_frames: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.smoothing_window_s < 1 {
            return bad("smoothing_window_s must be >= 1".into());
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return bad(format!(
                "iou_threshold {} outside (0, 1)",
                self.iou_threshold
            ));
        }
        if self.safety_zone_expansion.is_nan() || self.safety_zone_expansion < 0.0 {
            return bad("safety_zone_expansion must be >= 0".into());
        }
        if self.moving_threshold.is_nan() || self.moving_threshold < 0.0 {
            return bad("moving_threshold must be >= 0".into());
        }
        if self.day_start_hour >= 24 || self.night_start_hour >= 24 {
            return bad("day/night start hours must be in 0..24".into());
        }
        if self.day_start_hour >= self.night_start_hour {
            return bad("day_start_hour must precede night_start_hour".into());
        }
        if self.crossing_gate.is_nan() || self.crossing_gate <= 0.0 {
            return bad("crossing_gate must be > 0".into());
        }
        if self.analysis_width == 0
            || self.analysis_height == 0
            || self.flow_width == 0
            || self.flow_height == 0
        {
            return bad("resolutions must be positive".into());
        }
        self.flow
            .validate()
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }

    pub fn analysis_dims(&self) -> (usize, usize) {
        (self.analysis_width, self.analysis_height)
    }

    pub fn flow_dims(&self) -> (usize, usize) {
        (self.flow_width, self.flow_height)
    }

    /// True when `hour` (0..24) falls in the daytime period.
    pub fn is_daytime(&self, hour: u32) -> bool {
        hour >= self.day_start_hour && hour < self.night_start_hour
    }
}

/// Clamps boxes to the frame and checks the record's structural invariants.
pub fn validate_record(
    rec: DetectionRecord,
    frame_dims: (usize, usize),
) -> Result<DetectionRecord, ModelError> {
    let (fw, fh) = (frame_dims.0 as f64, frame_dims.1 as f64);
    let malformed = |reason: String| ModelError::MalformedRecord { ts: rec.ts, reason };
    if rec.boxes.len() != rec.roles.len() {
        return Err(malformed(format!(
            "{} boxes but {} role entries",
            rec.boxes.len(),
            rec.roles.len()
        )));
    }
    let mut boxes = Vec::with_capacity(rec.boxes.len());
    for (i, (b, role)) in rec.boxes.iter().zip(&rec.roles).enumerate() {
        let is_person = b.cls == ObjectClass::Person;
        if is_person != role.is_some() {
            return Err(malformed(if is_person {
                format!("person box {i} has no role distribution")
            } else {
                format!("{} box {i} carries a role distribution", b.cls.as_str())
            }));
        }
        if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) || b.w <= 0.0 || b.h <= 0.0 {
            return Err(malformed(format!("box {i} has invalid geometry")));
        }
        if !(0.0..=1.0).contains(&b.confidence) {
            return Err(malformed(format!(
                "box {i} confidence {} outside [0, 1]",
                b.confidence
            )));
        }
        let clamped = b
            .clamped(fw, fh)
            .ok_or_else(|| malformed(format!("box {i} lies entirely outside the frame")))?;
        boxes.push(clamped);
    }
    Ok(DetectionRecord { boxes, ..rec })
}

/// Enforces strictly increasing timestamps within each session.
#[derive(Debug, Default, Clone)]
pub struct TimestampGuard {
    last: std::collections::HashMap<SessionId, Timestamp>,
}

impl TimestampGuard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, session: &SessionId, ts: Timestamp) -> Result<(), ModelError> {
        match self.last.get_mut(session) {
            Some(prev) if ts <= *prev => Err(ModelError::NonMonotonicTimestamp {
                session: session.clone(),
                prev: *prev,
                ts,
            }),
            Some(prev) => {
                *prev = ts;
                Ok(())
            }
            None => {
                self.last.insert(session.clone(), ts);
                Ok(())
            }
        }
    }
}
