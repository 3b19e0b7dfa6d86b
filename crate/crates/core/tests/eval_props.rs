use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ward_sentinel_core::eval::{
    evaluate_frames, fit_logistic, manual_accuracy, prf1, Confusion, FrameLabel, LabeledBox,
};
use ward_sentinel_core::model::CanonicalRow;
use ward_sentinel_core::{
    BoundingBox, DetectionRecord, ObjectClass, PipelineConfig, Role, RoleDistribution,
};

fn bools(max: usize) -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (1..max).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

/// Random labelled frames with jittered, partially missing predictions.
fn frames(seed: u64, n: usize) -> (Vec<FrameLabel>, Vec<CanonicalRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = [ObjectClass::Person, ObjectClass::Bed, ObjectClass::Chair];
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for i in 0..n {
        let ts = 100 + i as i64;
        let mut boxes = Vec::new();
        let mut rec = DetectionRecord::empty("e".into(), ts);
        for _ in 0..rng.gen_range(0..5) {
            let cls = classes[rng.gen_range(0..3)];
            let (x, y) = (rng.gen_range(0.0..900.0), rng.gen_range(0.0..450.0));
            let (w, h) = (rng.gen_range(30.0..150.0), rng.gen_range(30.0..150.0));
            let role = (cls == ObjectClass::Person).then(|| Role::ALL[rng.gen_range(0..3)]);
            boxes.push(LabeledBox {
                cls,
                x,
                y,
                w,
                h,
                conf: 1.0,
                role,
            });
            if rng.gen_bool(0.8) {
                let j = rng.gen_range(-8.0..8.0);
                let d = role.map(|r| {
                    let r = if rng.gen_bool(0.8) {
                        r
                    } else {
                        Role::ALL[rng.gen_range(0..3)]
                    };
                    RoleDistribution::from_primary(r, 0.9)
                });
                rec.push(BoundingBox::new(cls, x + j, y - j, w, h, rng.gen()), d);
            }
        }
        if rng.gen_bool(0.2) {
            rec.push(
                BoundingBox::new(ObjectClass::Chair, 10.0, 10.0, 40.0, 40.0, 0.3),
                None,
            );
        }
        labels.push(FrameLabel {
            session_id: "e".into(),
            ts,
            frame_id: None,
            width: None,
            height: None,
            boxes,
            in_bed: None,
            exception: rng.gen_bool(0.25),
            patient_alone: None,
        });
        rows.push(CanonicalRow::from_record(rec));
    }
    (labels, rows)
}

proptest! {
    #[test]
    fn swapping_fp_and_fn_swaps_precision_and_recall(tp in 0u64..1000, fp in 0u64..1000, fneg in 0u64..1000) {
        let a = prf1(Confusion::new(tp, fp, fneg));
        let b = prf1(Confusion::new(tp, fneg, fp));
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert_eq!(a.f1, b.f1);
        for v in [a.precision, a.recall, a.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if a.precision + a.recall > 0.0 {
            let f1 = 2.0 * a.precision * a.recall / (a.precision + a.recall);
            prop_assert!((a.f1 - f1).abs() < 1e-12);
        } else {
            prop_assert_eq!(a.f1, 0.0);
        }
    }

    #[test]
    fn manual_accuracy_is_symmetric((x, y) in bools(300)) {
        let a = manual_accuracy(&x, &y).unwrap();
        prop_assert_eq!(a, manual_accuracy(&y, &x).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn logistic_beats_the_majority_share((x, y) in bools(3000)) {
        let pos = y.iter().filter(|&&v| v).count();
        prop_assume!(pos > 0 && pos < y.len());
        let share = pos.max(y.len() - pos) as f64 / y.len() as f64;
        let fit = fit_logistic(&x, &y).unwrap();
        prop_assert!(fit.accuracy >= share - 1e-9);
        prop_assert!(fit.accuracy <= 1.0);
    }

    #[test]
    fn exception_frames_are_a_pure_filter(seed in any::<u64>()) {
        let (labels, rows) = frames(seed, 40);
        let cfg = PipelineConfig::default();
        let all = evaluate_frames(&labels, &rows, &cfg);
        let kept: Vec<FrameLabel> = labels.iter().filter(|l| !l.exception).cloned().collect();
        let only = evaluate_frames(&kept, &rows, &cfg);
        prop_assert_eq!(&all.per_class, &only.per_class);
        prop_assert_eq!(all.patient_role, only.patient_role);
        prop_assert_eq!(all.patient_alone, only.patient_alone);
        prop_assert_eq!(all.frames_evaluated, kept.len());
        prop_assert_eq!(all.frames_excluded, labels.len() - kept.len());
        for m in all.per_class.values() {
            for v in [m.scores.precision, m.scores.recall, m.scores.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
