mod common;

use std::sync::Arc;

use ward_sentinel_core::io::detector::{ReplayDetector, SyntheticDetector};
use ward_sentinel_core::io::files::{create, read_jsonl, write_jsonl};
use ward_sentinel_core::io::pipeline::{
    derive_states, row_ticks, run_many, run_session, run_to_store, scenario_ticks, MotionMode,
    SessionJob, SessionRunner,
};
use ward_sentinel_core::io::store::Store;
use ward_sentinel_core::logic::attribute_detections;
use ward_sentinel_core::model::CanonicalRow;
use ward_sentinel_core::sim::{generate, NoiseSpec, Occupant, ScenarioSpec};
use ward_sentinel_core::{LogicalState, PipelineConfig, Role};

fn synthetic_states(spec: &ScenarioSpec, cfg: &PipelineConfig) -> Vec<LogicalState> {
    let sc = Arc::new(generate(spec).unwrap());
    let runner = SessionRunner::new(
        cfg,
        spec.session_id.clone(),
        Box::new(SyntheticDetector::new(sc.clone())),
        None,
    )
    .unwrap();
    let mut out = Vec::new();
    run_session(
        runner,
        scenario_ticks(&sc, MotionMode::Provided).unwrap(),
        |o| {
            out.push(o.state.clone());
            Ok(())
        },
    )
    .unwrap();
    out
}

#[test]
fn same_seed_same_scenario() {
    let spec = common::day_spec(11, "d", 0.05);
    let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
    assert_eq!(a.detections, b.detections);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.log, b.log);
    let other = generate(&common::day_spec(12, "d", 0.05)).unwrap();
    assert_ne!(a.detections, other.detections);
}

#[test]
fn missed_detections_barely_dent_patient_alone() {
    let cfg = PipelineConfig::default();
    let mut spec = ScenarioSpec::constant(
        21,
        "miss",
        0,
        3600,
        vec![Occupant::still(Role::Patient)],
        false,
    );
    spec.noise = NoiseSpec {
        p_miss: 0.05,
        ..NoiseSpec::default()
    };
    let sc = generate(&spec).unwrap();
    let missed = sc.detections.iter().filter(|d| d.is_empty()).count();
    assert!(missed > 100, "noise not applied: {missed} empty seconds");
    let got = synthetic_states(&spec, &cfg);
    let agree = got
        .iter()
        .zip(&sc.truth)
        .filter(|(g, t)| g.patient_alone == t.patient_alone)
        .count();
    let accuracy = agree as f64 / got.len() as f64;
    assert!(accuracy >= 0.95, "accuracy {accuracy}");
}

#[test]
fn noiseless_constant_scenarios_match_truth_after_warmup() {
    let cfg = PipelineConfig::default();
    let cases: [(&[Role], bool); 5] = [
        (&[Role::Patient], false),
        (&[Role::Patient], true),
        (&[Role::Patient, Role::Staff], true),
        (&[Role::Staff, Role::Other, Role::Patient], false),
        (&[], false),
    ];
    for (i, (roles, moving)) in cases.into_iter().enumerate() {
        let occ = roles.iter().map(|&r| Occupant::still(r)).collect();
        let spec =
            ScenarioSpec::constant(i as u64, format!("c{i}").as_str(), 5_000, 600, occ, moving);
        let sc = generate(&spec).unwrap();
        let got = synthetic_states(&spec, &cfg);
        assert_eq!(got.len(), sc.truth.len());
        for (g, t) in got.iter().zip(&sc.truth) {
            if sc.past_warmup(t.ts, cfg.smoothing_window_s) {
                assert_eq!(
                    (
                        g.person_alone,
                        g.patient_alone,
                        g.supervised_by_staff,
                        g.moving
                    ),
                    (
                        t.person_alone,
                        t.patient_alone,
                        t.supervised_by_staff,
                        t.moving
                    ),
                    "case {i} at {}",
                    t.ts
                );
            }
        }
    }
}

#[test]
fn replaying_exported_rows_reproduces_the_live_run() {
    let cfg = PipelineConfig::default();
    let mut spec = common::day_spec(5, "r", 0.05);
    spec.duration_s = 30_000;
    spec.schedule.retain(|iv| iv.start < 30_000);
    spec.schedule.last_mut().unwrap().end = 30_000;
    let sc = generate(&spec).unwrap();
    let live = synthetic_states(&spec, &cfg);

    let rows: Vec<CanonicalRow> = sc
        .detections
        .iter()
        .zip(&sc.motion)
        .map(|(raws, m)| {
            let (rec, _) = attribute_detections(spec.session_id.clone(), m.ts, raws);
            let mut row = CanonicalRow::from_record(rec);
            row.motion = Some(m.magnitudes);
            row
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.jsonl");
    write_jsonl(&rows, "ward-sentinel.canonical", create(&path).unwrap()).unwrap();
    let rows: Vec<CanonicalRow> = read_jsonl(&path).unwrap();

    assert_eq!(derive_states(&rows, &cfg).unwrap(), live);
    let runner = SessionRunner::new(
        &cfg,
        "r".into(),
        Box::new(ReplayDetector::from_rows(&rows)),
        None,
    )
    .unwrap();
    let mut replayed = Vec::new();
    run_session(runner, row_ticks(&rows), |o| {
        replayed.push(o.state.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(replayed, live);
}

#[test]
fn parallel_sessions_store_what_each_would_store_alone() {
    let cfg = PipelineConfig::default();
    let specs: Vec<ScenarioSpec> = (0..4)
        .map(|i| {
            let mut s = common::day_spec(100 + i, &format!("s{i}"), 0.05);
            s.duration_s = 25_000;
            s.schedule.retain(|iv| iv.start < 25_000);
            s.schedule.last_mut().unwrap().end = 25_000;
            s
        })
        .collect();
    let scenarios: Vec<_> = specs
        .iter()
        .map(|s| Arc::new(generate(s).unwrap()))
        .collect();

    let dir_a = tempfile::tempdir().unwrap();
    let store = Store::with_segment_rows(dir_a.path(), 7_000).unwrap();
    let jobs = scenarios
        .iter()
        .map(|sc| {
            let runner = SessionRunner::new(
                &cfg,
                sc.session_id().clone(),
                Box::new(SyntheticDetector::new(sc.clone())),
                None,
            )
            .unwrap();
            let ticks: Vec<_> = scenario_ticks(sc, MotionMode::Provided).unwrap().collect();
            SessionJob {
                runner,
                ticks: Box::new(ticks.into_iter()),
            }
        })
        .collect();
    for r in run_many(jobs, &store) {
        assert_eq!(r.unwrap().rows, 25_000);
    }
    assert_eq!(store.verify().unwrap(), 16);

    let dir_b = tempfile::tempdir().unwrap();
    let alone = Store::with_segment_rows(dir_b.path(), 7_000).unwrap();
    for sc in scenarios.iter().rev() {
        let runner = SessionRunner::new(
            &cfg,
            sc.session_id().clone(),
            Box::new(SyntheticDetector::new(sc.clone())),
            None,
        )
        .unwrap();
        run_to_store(
            runner,
            scenario_ticks(sc, MotionMode::Provided).unwrap(),
            &alone,
        )
        .unwrap();
    }
    for s in store.sessions() {
        assert_eq!(
            store.read_session(&s).unwrap(),
            alone.read_session(&s).unwrap()
        );
        for ((na, a), (nb, b)) in store.segments_of(&s).iter().zip(alone.segments_of(&s)) {
            assert_eq!(na, &nb);
            assert_eq!(a.sha256, b.sha256);
        }
    }
    assert_eq!(
        std::fs::read(dir_a.path().join("manifest.json")).unwrap(),
        std::fs::read(dir_b.path().join("manifest.json")).unwrap()
    );
}
