#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ward_sentinel_core::model::RoiMotion;
use ward_sentinel_core::sim::{NoiseSpec, Occupant, ScenarioSpec, ScheduleInterval};
use ward_sentinel_core::{
    BoundingBox, DetectionRecord, LogicalState, MotionRecord, ObjectClass, PipelineConfig, Role,
    RoleDistribution, SessionId, Timestamp,
};

pub type Second = (DetectionRecord, Option<MotionRecord>);

pub fn person(x: f64, y: f64) -> BoundingBox {
    BoundingBox::new(ObjectClass::Person, x, y, 40.0, 90.0, 0.9)
}

/// Person box whose bottom-centre anchor sits at `(fx, fy)`.
pub fn person_at(fx: f64, fy: f64) -> BoundingBox {
    BoundingBox::new(ObjectClass::Person, fx - 20.0, fy - 80.0, 40.0, 80.0, 0.9)
}

pub fn role(r: Role) -> RoleDistribution {
    RoleDistribution::from_primary(r, 1.0)
}

pub fn record(session: &str, ts: Timestamp, roles: &[Role]) -> DetectionRecord {
    let mut rec = DetectionRecord::empty(session.into(), ts);
    for (i, &r) in roles.iter().enumerate() {
        rec.push(person(50.0 + 60.0 * i as f64, 100.0), Some(role(r)));
    }
    rec
}

pub fn motion(session: &str, ts: Timestamp, scene: Option<f64>) -> MotionRecord {
    MotionRecord {
        session_id: session.into(),
        ts,
        magnitudes: RoiMotion {
            scene,
            ..RoiMotion::default()
        },
    }
}

/// Random per-second stream with occasional gaps (some longer than the
/// window), 0 to 4 persons with random role scores, beds, and motion that
/// is sometimes missing.
pub fn random_stream(seed: u64, len: usize, session: &str) -> Vec<Second> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ts: Timestamp = 1_700_000_000 + rng.gen_range(0..86_400);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let mut rec = DetectionRecord::empty(session.into(), ts);
        if rng.gen_bool(0.3) {
            rec.push(
                BoundingBox::new(ObjectClass::Bed, 300.0, 200.0, 400.0, 300.0, 0.8),
                None,
            );
        }
        let n = match rng.gen_range(0..10) {
            0..=3 => 1,
            4..=5 => 2,
            6 => 0,
            7 => 3,
            8 => 4,
            _ => rng.gen_range(0..=2),
        };
        for i in 0..n {
            let raw: [f64; 3] = [rng.gen(), rng.gen(), rng.gen::<f64>() * 0.5];
            let s: f64 = raw.iter().sum();
            let d = RoleDistribution::new(raw[0] / s, raw[1] / s, 1.0 - raw[0] / s - raw[1] / s)
                .unwrap_or_else(|_| RoleDistribution::uniform());
            rec.push(person(10.0 + 90.0 * i as f64, 50.0), Some(d));
        }
        let m = match rng.gen_range(0..10) {
            0 => None,
            1..=4 => Some(motion(session, ts, None)),
            _ => Some(motion(session, ts, Some(rng.gen_range(0.0..1.2)))),
        };
        out.push((rec, m));
        ts += match rng.gen_range(0..200) {
            0 => rng.gen_range(6..40),
            1..=3 => rng.gen_range(2..5),
            _ => 1,
        };
    }
    out
}

/// Recomputes every second's state from the raw records in its trailing
/// window, without any incremental bookkeeping.
pub fn brute_force_states(stream: &[Second], cfg: &PipelineConfig) -> Vec<LogicalState> {
    let w = cfg.smoothing_window_s as i64;
    (0..stream.len())
        .map(|i| {
            let now = stream[i].0.ts;
            let window: Vec<&Second> = stream[..=i]
                .iter()
                .rev()
                .take_while(|(r, _)| r.ts > now - w)
                .collect();
            let persons = |r: &DetectionRecord| {
                r.boxes
                    .iter()
                    .filter(|b| b.cls == ObjectClass::Person)
                    .count()
            };
            let has = |r: &DetectionRecord, want: Role| {
                r.boxes.iter().zip(&r.roles).any(|(b, d)| {
                    b.cls == ObjectClass::Person && d.as_ref().is_some_and(|d| top_role(d) == want)
                })
            };
            let total: usize = window.iter().map(|(r, _)| persons(r)).sum();
            let avg = total as f64 / window.len() as f64;
            let alone = avg < 2.0;
            let motions: Vec<f64> = window
                .iter()
                .filter_map(|(_, m)| m.as_ref().and_then(|m| m.magnitudes.scene))
                .collect();
            let moving = !motions.is_empty()
                && motions.iter().sum::<f64>() / motions.len() as f64 > cfg.moving_threshold;
            LogicalState {
                session_id: stream[i].0.session_id.clone(),
                ts: now,
                person_alone: alone,
                patient_alone: alone && window.iter().any(|(r, _)| has(r, Role::Patient)),
                supervised_by_staff: !alone && window.iter().any(|(r, _)| has(r, Role::Staff)),
                moving,
                smoothed_person_count: avg,
            }
        })
        .collect()
}

/// Highest-scoring role, earlier of patient, staff, other on ties.
pub fn top_role(d: &RoleDistribution) -> Role {
    let s = [
        d.score(Role::Patient),
        d.score(Role::Staff),
        d.score(Role::Other),
    ];
    let mut best = 0;
    for i in 1..3 {
        if s[i] > s[best] {
            best = i;
        }
    }
    [Role::Patient, Role::Staff, Role::Other][best]
}

pub fn session(s: &str) -> SessionId {
    SessionId::new(s)
}

pub const DAY_START: Timestamp = 1_700_006_400;

/// One UTC day: long alone stretches, a few staff and visitor periods, one
/// half hour with nobody in the room.
pub fn day_spec(seed: u64, session: &str, noise: f64) -> ScenarioSpec {
    use Role::{Other, Patient, Staff};
    let table: [(i64, i64, &[Role], bool); 12] = [
        (0, 21_600, &[Patient], false),
        (21_600, 22_500, &[Patient, Staff], true),
        (22_500, 25_000, &[Patient], true),
        (25_000, 30_000, &[Patient], false),
        (30_000, 31_800, &[Patient, Staff, Other], true),
        (31_800, 43_200, &[Patient], false),
        (43_200, 45_000, &[], false),
        (45_000, 46_800, &[Patient, Staff], true),
        (46_800, 50_000, &[Patient], true),
        (50_000, 64_800, &[Patient], false),
        (64_800, 66_600, &[Patient, Other], true),
        (66_600, 86_400, &[Patient], false),
    ];
    let schedule = table
        .iter()
        .map(|&(start, end, roles, moving)| ScheduleInterval {
            start,
            end,
            occupants: roles.iter().map(|&r| Occupant::still(r)).collect(),
            moving,
        })
        .collect();
    let mut spec = ScenarioSpec::constant(seed, session, DAY_START, 86_400, vec![], false);
    spec.schedule = schedule;
    spec.noise = NoiseSpec::symmetric(noise);
    spec.bed = Some(BoundingBox::new(
        ObjectClass::Bed,
        300.0,
        250.0,
        450.0,
        300.0,
        0.95,
    ));
    spec
}
