//! Per-second runtime for one session, and a driver for many in parallel.
//!
//! Each tick runs: preprocess, detect, attribute roles, validate, flow
//! against the previous second's frame, per-ROI motion, zone crossings,
//! window update, logical state, store. A runner keeps only the smoothing
//! window, the previous flow image and the previous record, so memory does
//! not grow with session length.

use crate::error::{Error, Result};
use crate::flow::{farneback_flow, roi_motion, FlowError, GrayImage};
use crate::geometry::{
    detect_crossings, expand_polygon, rasterize, CrossingEvent, Polygon, RoiKind, RoiMask,
};
use crate::logic::{attribute_detections, LogicEngine};
use crate::model::{
    validate_record, BoundingBox, CanonicalRow, DetectionRecord, Frame, LogicalState, MotionRecord,
    ObjectClass, PipelineConfig, RoiMotion, SessionId, Timestamp,
};
use crate::par;
use crate::sim::{Scenario, SimError};

use super::detector::DetectorPort;
use super::preprocess::{preprocess, Targets};
use super::store::{SessionWriter, Store};
use super::IoError;

/// Input for one second.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub ts: Timestamp,
    pub frame: Option<Frame>,
    /// Precomputed motion; when present, flow is not computed.
    pub motion: Option<RoiMotion>,
}

impl Tick {
    pub fn bare(ts: Timestamp) -> Self {
        Self {
            ts,
            frame: None,
            motion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub row: CanonicalRow,
    pub state: LogicalState,
    pub crossings: Vec<CrossingEvent>,
    /// Person boxes that arrived without any role confidence.
    pub flagged_persons: Vec<usize>,
}

pub struct SessionRunner {
    cfg: PipelineConfig,
    session: SessionId,
    detector: Box<dyn DetectorPort>,
    engine: LogicEngine,
    scene_flow: RoiMask,
    zone_analysis: Option<RoiMask>,
    zone_flow: Option<RoiMask>,
    prev_gray: Option<(Timestamp, GrayImage)>,
    prev_record: Option<DetectionRecord>,
    last_ts: Option<Timestamp>,
}

impl SessionRunner {
    /// `zone` is the monitor-drawn polygon in analysis pixels; it is
    /// expanded by the configured factor before rasterizing.
    pub fn new(
        cfg: &PipelineConfig,
        session: SessionId,
        detector: Box<dyn DetectorPort>,
        zone: Option<&Polygon>,
    ) -> Result<Self> {
        cfg.validate()?;
        let (aw, ah) = cfg.analysis_dims();
        let (fw, fh) = cfg.flow_dims();
        let (zone_analysis, zone_flow) = match zone {
            Some(z) => {
                let expanded = expand_polygon(z, cfg.safety_zone_expansion)?;
                let scaled = expanded.scaled(fw as f64 / aw as f64, fh as f64 / ah as f64)?;
                (
                    Some(rasterize(&expanded, RoiKind::SafetyZone, aw, ah)),
                    Some(rasterize(&scaled, RoiKind::SafetyZone, fw, fh)),
                )
            }
            None => (None, None),
        };
        Ok(Self {
            cfg: cfg.clone(),
            session,
            detector,
            engine: LogicEngine::new(cfg.clone()),
            scene_flow: RoiMask::scene(fw, fh),
            zone_analysis,
            zone_flow,
            prev_gray: None,
            prev_record: None,
            last_ts: None,
        })
    }

    pub fn session(&self) -> &SessionId {
        &self.session
    }

    pub fn step(&mut self, tick: Tick) -> Result<StepOutput> {
        let ts = tick.ts;
        self.step_inner(tick).map_err(|e| e.at(&self.session, ts))
    }

    fn step_inner(&mut self, tick: Tick) -> Result<StepOutput> {
        let ts = tick.ts;
        if let Some(prev) = self.last_ts {
            if ts <= prev {
                return Err(IoError::NonMonotonic {
                    session: self.session.clone(),
                    prev,
                    ts,
                }
                .into());
            }
        }
        self.last_ts = Some(ts);

        let prepared = match &tick.frame {
            Some(f) => Some(preprocess(
                f,
                &self.cfg,
                Targets {
                    analysis: false,
                    detector: self.detector.needs_pixels(),
                },
            )?),
            None => None,
        };
        let det_frame = prepared.as_ref().and_then(|p| p.detector.as_ref());
        let raws = self.detector.detect(&self.session, ts, det_frame)?;
        let (rec, flagged_persons) = attribute_detections(self.session.clone(), ts, &raws);
        let rec = validate_record(rec, self.cfg.analysis_dims())?;

        let gray = prepared.map(|p| p.flow);
        let motion = match tick.motion {
            Some(m) => Some(m),
            None => self.flow_motion(&rec, ts, gray.as_ref())?,
        };
        self.prev_gray = gray.map(|g| (ts, g));

        let crossings = match (&self.zone_analysis, &self.prev_record) {
            (Some(zone), Some(prev)) if prev.ts + 1 == ts => detect_crossings(
                prev,
                &rec,
                zone,
                self.cfg.analysis_dims(),
                self.cfg.crossing_gate,
            )?,
            _ => Vec::new(),
        };

        let motion_record = motion.map(|m| MotionRecord {
            session_id: self.session.clone(),
            ts,
            magnitudes: m,
        });
        let state = self.engine.push(&rec, motion_record.as_ref())?;
        let mut row = CanonicalRow::from_record(rec.clone());
        row.motion = motion;
        row.logical = Some(state.flags());
        self.prev_record = Some(rec);
        Ok(StepOutput {
            row,
            state,
            crossings,
            flagged_persons,
        })
    }

    fn flow_motion(
        &self,
        rec: &DetectionRecord,
        ts: Timestamp,
        gray: Option<&GrayImage>,
    ) -> Result<Option<RoiMotion>> {
        let (Some(cur), Some((pts, prev))) = (gray, &self.prev_gray) else {
            return Ok(None);
        };
        if pts + 1 != ts {
            return Ok(None);
        }
        let mut flow = farneback_flow(prev, cur, &self.cfg.flow)?;
        let (aw, ah) = self.cfg.analysis_dims();
        let (fw, fh) = self.cfg.flow_dims();
        // Report in analysis pixels per frame.
        let (kx, ky) = (
            (aw as f64 / fw as f64) as f32,
            (ah as f64 / fh as f64) as f32,
        );
        flow.dx.iter_mut().for_each(|v| *v *= kx);
        flow.dy.iter_mut().for_each(|v| *v *= ky);
        let agg = self.cfg.motion_aggregation;
        let optional = |r: std::result::Result<f64, FlowError>| match r {
            Ok(v) => Ok(Some(v)),
            Err(FlowError::EmptyMask) => Ok(None),
            Err(e) => Err(Error::from(e)),
        };
        let bed = match rec.best_of(ObjectClass::Bed) {
            Some(b) => {
                let (sx, sy) = (fw as f64 / aw as f64, fh as f64 / ah as f64);
                let scaled =
                    BoundingBox::new(b.cls, b.x * sx, b.y * sy, b.w * sx, b.h * sy, b.confidence);
                let mask = RoiMask::from_box(RoiKind::Bed, fw, fh, &scaled);
                optional(roi_motion(&flow, &mask, agg))?
            }
            None => None,
        };
        let safety_zone = match &self.zone_flow {
            Some(mask) => optional(roi_motion(&flow, mask, agg))?,
            None => None,
        };
        Ok(Some(RoiMotion {
            scene: optional(roi_motion(&flow, &self.scene_flow, agg))?,
            bed,
            safety_zone,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub session_id: SessionId,
    pub rows: usize,
    pub first_ts: Option<Timestamp>,
    pub last_ts: Option<Timestamp>,
    pub crossings: Vec<CrossingEvent>,
    pub flagged_persons: usize,
}

/// Drives `runner` over `ticks`, handing each output to `sink`. The source
/// ending is the normal end of the session.
pub fn run_session<I, F>(mut runner: SessionRunner, ticks: I, mut sink: F) -> Result<SessionSummary>
where
    I: IntoIterator<Item = Tick>,
    F: FnMut(&StepOutput) -> Result<()>,
{
    let mut summary = SessionSummary {
        session_id: runner.session.clone(),
        rows: 0,
        first_ts: None,
        last_ts: None,
        crossings: Vec::new(),
        flagged_persons: 0,
    };
    for tick in ticks {
        let out = runner.step(tick)?;
        sink(&out)?;
        summary.rows += 1;
        summary.first_ts.get_or_insert(out.row.ts);
        summary.last_ts = Some(out.row.ts);
        summary.flagged_persons += out.flagged_persons.len();
        summary.crossings.extend(out.crossings);
    }
    Ok(summary)
}

/// Runs a session and appends every row to `store`.
pub fn run_to_store<I>(runner: SessionRunner, ticks: I, store: &Store) -> Result<SessionSummary>
where
    I: IntoIterator<Item = Tick>,
{
    let mut writer: SessionWriter = store.writer(runner.session.clone())?;
    let summary = run_session(runner, ticks, |out| Ok(writer.append(&out.row)?))?;
    writer.finish()?;
    Ok(summary)
}

/// One independent unit of work for [`run_many`].
pub struct SessionJob {
    pub runner: SessionRunner,
    pub ticks: Box<dyn Iterator<Item = Tick> + Send>,
}

/// Runs sessions in parallel into one store; results keep job order.
pub fn run_many(jobs: Vec<SessionJob>, store: &Store) -> Vec<Result<SessionSummary>> {
    par::map_owned(jobs, |job| run_to_store(job.runner, job.ticks, store))
}

/// Where a simulated session's motion comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionMode {
    /// Optical flow on rendered frames.
    Flow,
    /// The scenario's precomputed motion magnitudes.
    Provided,
    Off,
}

/// Ticks for every second of a scenario.
pub fn scenario_ticks(
    scenario: &Scenario,
    mode: MotionMode,
) -> Result<impl Iterator<Item = Tick> + '_> {
    if mode == MotionMode::Flow && !scenario.has_frames() {
        return Err(SimError::InvalidSchedule("flow mode needs render_dims".into()).into());
    }
    Ok(scenario
        .timestamps()
        .zip(&scenario.motion)
        .map(move |(ts, m)| Tick {
            ts,
            frame: match mode {
                MotionMode::Flow => scenario.frame(ts),
                _ => None,
            },
            motion: match mode {
                MotionMode::Provided => Some(m.magnitudes),
                _ => None,
            },
        }))
}

/// Logical states for one session's stored rows. Rows that all carry a
/// `logical` object are read as is; otherwise the window is replayed over
/// the rows and their stored motion.
pub fn derive_states(rows: &[CanonicalRow], cfg: &PipelineConfig) -> Result<Vec<LogicalState>> {
    if let Some(states) = rows
        .iter()
        .map(CanonicalRow::logical_state)
        .collect::<Option<Vec<_>>>()
    {
        return Ok(states);
    }
    let mut engine = LogicEngine::new(cfg.clone());
    rows.iter()
        .map(|r| {
            let rec = r.record();
            let m = r.motion_record();
            engine
                .push(&rec, m.as_ref())
                .map_err(|e| Error::from(e).at(&r.session_id, r.ts))
        })
        .collect()
}

/// Ticks replaying stored rows, reusing their motion when present.
pub fn row_ticks(rows: &[CanonicalRow]) -> impl Iterator<Item = Tick> + '_ {
    rows.iter().map(|r| Tick {
        ts: r.ts,
        frame: None,
        motion: r.motion,
    })
}
