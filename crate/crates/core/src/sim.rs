//! Seeded synthetic monitoring sessions with schedule-side ground truth.
//!
//! A scenario is a tiling of the session into intervals, each with a fixed
//! set of occupants and a moving flag. Ground truth is read straight off the
//! schedule (no noise, no smoothing); noise only touches the emitted
//! detections. Frames are optional: a textured background with a textured
//! block that slides horizontally during moving intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{gaussian_blur, GrayImage};
use crate::geometry::{expand_polygon, CrossingDirection, CrossingEvent, GeometryError, Polygon};
use crate::logic::{RawDetection, RoleConfidences};
use crate::model::{
    BoundingBox, ColorMode, Frame, LogicalState, MotionRecord, ObjectClass, RoiMotion, Role,
    SessionId, Timestamp,
};
use crate::par;
use crate::trend::ObservationLog;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Confidence given to true detections and their emitted role.
pub const DETECTION_CONFIDENCE: f64 = 0.9;
/// Scene motion reported for moving intervals in provided-motion mode.
pub const PROVIDED_MOTION: f64 = 2.0;
/// Render speed of the moving block, px/frame at render resolution.
pub const RENDER_SPEED: i64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupant {
    pub role: Role,
    /// Foot point at interval start, analysis pixels. Defaults to an evenly
    /// spaced spot near the bottom of the frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<(f64, f64)>,
    /// Foot point on the interval's last second; linear walk in between.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<(f64, f64)>,
}

impl Occupant {
    pub fn still(role: Role) -> Self {
        Self {
            role,
            from: None,
            to: None,
        }
    }
}

/// Half-open `[start, end)` in seconds relative to the scenario start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleInterval {
    pub start: i64,
    pub end: i64,
    #[serde(default)]
    pub occupants: Vec<Occupant>,
    #[serde(default)]
    pub moving: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub p_miss: f64,
    pub p_spur: f64,
    pub p_role: f64,
}

impl NoiseSpec {
    pub fn symmetric(p: f64) -> Self {
        Self {
            p_miss: p,
            p_spur: p,
            p_role: p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub session_id: SessionId,
    #[serde(default)]
    pub start_ts: Timestamp,
    pub duration_s: i64,
    #[serde(default = "default_frame_dims")]
    pub frame_dims: (usize, usize),
    pub schedule: Vec<ScheduleInterval>,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Monitor-drawn safety zone in analysis pixels, before expansion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<Polygon>,
    #[serde(default = "default_zone_expansion")]
    pub zone_expansion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bed: Option<BoundingBox>,
    /// Frame proxy size; no frames are produced when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render_dims: Option<(usize, usize)>,
}

fn default_frame_dims() -> (usize, usize) {
    (1088, 612)
}

fn default_zone_expansion() -> f64 {
    0.10
}

impl ScenarioSpec {
    /// Single interval covering the whole session.
    pub fn constant(
        seed: u64,
        session_id: impl Into<SessionId>,
        start_ts: Timestamp,
        duration_s: i64,
        occupants: Vec<Occupant>,
        moving: bool,
    ) -> Self {
        Self {
            seed,
            session_id: session_id.into(),
            start_ts,
            duration_s,
            frame_dims: default_frame_dims(),
            schedule: vec![ScheduleInterval {
                start: 0,
                end: duration_s,
                occupants,
                moving,
            }],
            noise: NoiseSpec::default(),
            zone: None,
            zone_expansion: default_zone_expansion(),
            bed: None,
            render_dims: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSchedule(m));
        if self.duration_s <= 0 {
            return bad("duration must be positive".into());
        }
        let mut cursor = 0;
        for (i, iv) in self.schedule.iter().enumerate() {
            if iv.start != cursor {
                return bad(format!(
                    "interval {i} starts at {} but previous ends at {cursor}",
                    iv.start
                ));
            }
            if iv.end <= iv.start {
                return bad(format!("interval {i} is empty"));
            }
            cursor = iv.end;
        }
        if cursor != self.duration_s {
            return bad(format!(
                "schedule ends at {cursor}, session at {}",
                self.duration_s
            ));
        }
        for (name, p) in [
            ("p_miss", self.noise.p_miss),
            ("p_spur", self.noise.p_spur),
            ("p_role", self.noise.p_role),
        ] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1)"));
            }
        }
        if let Some((w, h)) = self.render_dims {
            if w < 64 || h < 64 {
                return bad("render dims below 64 px".into());
            }
        }
        if self.zone_expansion.is_nan() || self.zone_expansion < 0.0 {
            return bad("zone expansion must be >= 0".into());
        }
        Ok(())
    }

    fn interval_at(&self, rel: i64) -> &ScheduleInterval {
        let i = self.schedule.partition_point(|iv| iv.end <= rel);
        &self.schedule[i]
    }
}

/// Everything a scenario produces. Per-second vectors are indexed by
/// `ts - start_ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub detections: Vec<Vec<RawDetection>>,
    pub motion: Vec<MotionRecord>,
    pub truth: Vec<LogicalState>,
    pub log: ObservationLog,
    pub crossings: Vec<CrossingEvent>,
    render: Option<Renderer>,
}

pub const PERSON_BOX: (f64, f64) = (100.0, 250.0);

fn person_box(anchor: (f64, f64)) -> BoundingBox {
    let (w, h) = PERSON_BOX;
    BoundingBox::new(
        ObjectClass::Person,
        anchor.0 - w / 2.0,
        anchor.1 - h,
        w,
        h,
        DETECTION_CONFIDENCE,
    )
}

fn anchor_at(
    occ: &Occupant,
    idx: usize,
    n: usize,
    iv: &ScheduleInterval,
    rel: i64,
    dims: (usize, usize),
) -> (f64, f64) {
    let (fw, fh) = (dims.0 as f64, dims.1 as f64);
    let default = (fw * (idx + 1) as f64 / (n + 1) as f64, fh * 0.8);
    let from = occ.from.unwrap_or(default);
    let Some(to) = occ.to else {
        return from;
    };
    let span = (iv.end - 1 - iv.start).max(1) as f64;
    let t = (rel - iv.start) as f64 / span;
    (from.0 + (to.0 - from.0) * t, from.1 + (to.1 - from.1) * t)
}

fn other_role(rng: &mut ChaCha8Rng, role: Role) -> Role {
    let others: Vec<Role> = Role::ALL.into_iter().filter(|&r| r != role).collect();
    others[rng.gen_range(0..others.len())]
}

pub fn generate(spec: &ScenarioSpec) -> Result<Scenario, SimError> {
    spec.validate()?;
    let zone = spec
        .zone
        .as_ref()
        .map(|z| expand_polygon(z, spec.zone_expansion))
        .transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.duration_s as usize;
    let mut detections = Vec::with_capacity(n);
    let mut motion = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut crossings = Vec::new();
    let mut prev_inside: Option<(usize, Vec<bool>)> = None;

    for rel in 0..spec.duration_s {
        let ts = spec.start_ts + rel;
        let iv_index = spec.schedule.partition_point(|iv| iv.end <= rel);
        let iv = &spec.schedule[iv_index];
        let occ_n = iv.occupants.len();
        let anchors: Vec<(f64, f64)> = iv
            .occupants
            .iter()
            .enumerate()
            .map(|(i, o)| anchor_at(o, i, occ_n, iv, rel, spec.frame_dims))
            .collect();

        let has = |r: Role| iv.occupants.iter().any(|o| o.role == r);
        let alone = occ_n < 2;
        truth.push(LogicalState {
            session_id: spec.session_id.clone(),
            ts,
            person_alone: alone,
            patient_alone: alone && has(Role::Patient),
            supervised_by_staff: !alone && has(Role::Staff),
            moving: iv.moving,
            smoothed_person_count: occ_n as f64,
        });

        if let Some(zone) = &zone {
            let inside: Vec<bool> = anchors.iter().map(|&(x, y)| zone.contains(x, y)).collect();
            if let Some((prev_iv, prev)) = &prev_inside {
                if *prev_iv == iv_index {
                    for (j, (&a, &b)) in prev.iter().zip(&inside).enumerate() {
                        let direction = match (a, b) {
                            (true, false) => CrossingDirection::Exit,
                            (false, true) => CrossingDirection::Entry,
                            _ => continue,
                        };
                        crossings.push(CrossingEvent {
                            session_id: spec.session_id.clone(),
                            ts,
                            direction,
                            person_index: j,
                        });
                    }
                }
            }
            prev_inside = Some((iv_index, inside));
        }

        let mut raws = Vec::with_capacity(occ_n + 2);
        if let Some(bed) = spec.bed {
            raws.push(RawDetection::object(bed));
        }
        for (o, &a) in iv.occupants.iter().zip(&anchors) {
            if rng.gen::<f64>() < spec.noise.p_miss {
                continue;
            }
            let role = if rng.gen::<f64>() < spec.noise.p_role {
                other_role(&mut rng, o.role)
            } else {
                o.role
            };
            raws.push(RawDetection::new(
                person_box(a),
                RoleConfidences::only(role, DETECTION_CONFIDENCE),
            ));
        }
        if rng.gen::<f64>() < spec.noise.p_spur {
            let (fw, fh) = (spec.frame_dims.0 as f64, spec.frame_dims.1 as f64);
            let a = (
                rng.gen_range(PERSON_BOX.0..fw - PERSON_BOX.0),
                rng.gen_range(PERSON_BOX.1..fh),
            );
            let role = Role::ALL[rng.gen_range(0..3)];
            raws.push(RawDetection::new(
                person_box(a),
                RoleConfidences::only(role, DETECTION_CONFIDENCE),
            ));
        }
        detections.push(raws);

        let m = if iv.moving { PROVIDED_MOTION } else { 0.0 };
        motion.push(MotionRecord {
            session_id: spec.session_id.clone(),
            ts,
            magnitudes: RoiMotion {
                scene: Some(m),
                bed: spec.bed.map(|_| m),
                safety_zone: zone.as_ref().map(|_| m),
            },
        });
    }

    let log = ObservationLog::from_seconds(
        spec.session_id.clone(),
        truth.iter().map(|s| (s.ts, s.patient_alone)),
    );
    let render = spec.render_dims.map(|dims| {
        Renderer::new(
            spec,
            dims,
            &mut ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed),
        )
    });
    Ok(Scenario {
        spec: spec.clone(),
        detections,
        motion,
        truth,
        log,
        crossings,
        render,
    })
}

/// Generates many scenarios in parallel, keeping input order.
pub fn generate_all(specs: &[ScenarioSpec]) -> Vec<Result<Scenario, SimError>> {
    par::map(specs, generate)
}

impl Scenario {
    pub fn session_id(&self) -> &SessionId {
        &self.spec.session_id
    }

    pub fn start_ts(&self) -> Timestamp {
        self.spec.start_ts
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.truth.iter().map(|s| s.ts)
    }

    pub fn detections_at(&self, ts: Timestamp) -> Option<&[RawDetection]> {
        let i = usize::try_from(ts - self.spec.start_ts).ok()?;
        self.detections.get(i).map(Vec::as_slice)
    }

    pub fn has_frames(&self) -> bool {
        self.render.is_some()
    }

    /// Whether a `window_s` trailing window at `ts` lies entirely inside one
    /// schedule interval.
    pub fn past_warmup(&self, ts: Timestamp, window_s: u32) -> bool {
        let rel = ts - self.spec.start_ts;
        let iv = self.spec.interval_at(rel);
        rel - iv.start >= window_s as i64 - 1
    }

    /// The frame proxy for `ts`, rendered on demand.
    pub fn frame(&self, ts: Timestamp) -> Option<Frame> {
        let r = self.render.as_ref()?;
        let rel = usize::try_from(ts - self.spec.start_ts).ok()?;
        let x = *r.block_x.get(rel)?;
        Some(r.render(&self.spec.session_id, ts, x))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Renderer {
    width: usize,
    height: usize,
    background: GrayImage,
    block: GrayImage,
    block_y: usize,
    /// Block left edge per second.
    block_x: Vec<usize>,
}

fn texture(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f32, hi: f32) -> GrayImage {
    let noise = GrayImage::new(
        w,
        h,
        (0..w * h).map(|_| rng.gen_range(0.0..255.0f32)).collect(),
    );
    let blurred = gaussian_blur(&noise, 9, 2.0);
    let (mn, mx) = blurred
        .data
        .iter()
        .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (mx - mn).max(1e-6);
    GrayImage::new(
        w,
        h,
        blurred
            .data
            .iter()
            .map(|&v| (lo + (v - mn) / span * (hi - lo)).round())
            .collect(),
    )
}

/// A textured image and a copy translated by `shift` whole pixels, so the
/// true flow from the first to the second is `shift` everywhere.
pub fn textured_pair(
    seed: u64,
    width: usize,
    height: usize,
    shift: (i32, i32),
) -> (GrayImage, GrayImage) {
    let pad = shift.0.unsigned_abs().max(shift.1.unsigned_abs()) as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let canvas = texture(&mut rng, width + 2 * pad, height + 2 * pad, 0.0, 255.0);
    let crop = |ox: i64, oy: i64| {
        GrayImage::from_fn(width, height, |x, y| {
            canvas.at((x as i64 + ox) as usize, (y as i64 + oy) as usize)
        })
    };
    let p = pad as i64;
    (crop(p, p), crop(p - shift.0 as i64, p - shift.1 as i64))
}

impl Renderer {
    fn new(spec: &ScenarioSpec, (width, height): (usize, usize), rng: &mut ChaCha8Rng) -> Self {
        let bw = width / 2;
        let bh = height * 3 / 5;
        let margin = 16usize.min((width - bw) / 4);
        let travel = ((width - bw - 2 * margin) as i64 / RENDER_SPEED) * RENDER_SPEED;
        let background = texture(rng, width, height, 0.0, 255.0);
        let block = texture(rng, bw, bh, 20.0, 235.0);
        let mut pos = 0i64;
        let mut dir = 1i64;
        let mut block_x = Vec::with_capacity(spec.duration_s as usize);
        for rel in 0..spec.duration_s {
            if rel > 0 && spec.interval_at(rel).moving && travel > 0 {
                if pos + dir * RENDER_SPEED > travel || pos + dir * RENDER_SPEED < 0 {
                    dir = -dir;
                }
                pos += dir * RENDER_SPEED;
            }
            block_x.push(margin + pos as usize);
        }
        Self {
            width,
            height,
            background,
            block,
            block_y: (height - bh) / 2,
            block_x,
        }
    }

    fn render(&self, session: &SessionId, ts: Timestamp, bx: usize) -> Frame {
        let (bw, bh) = self.block.dims();
        let mut pixels = Vec::with_capacity(self.width * self.height * 3);
        for y in 0..self.height {
            for x in 0..self.width {
                let inside = x >= bx && x < bx + bw && y >= self.block_y && y < self.block_y + bh;
                let v = if inside {
                    self.block.at(x - bx, y - self.block_y)
                } else {
                    self.background.at(x, y)
                } as u8;
                pixels.extend_from_slice(&[v, v, v]);
            }
        }
        Frame::new(
            session.clone(),
            ts,
            self.width,
            self.height,
            ColorMode::Rgb,
            pixels,
        )
        .expect("renderer sizes are consistent")
    }
}
