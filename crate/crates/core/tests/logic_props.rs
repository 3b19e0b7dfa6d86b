mod common;

use proptest::prelude::*;
use ward_sentinel_core::logic::LogicEngine;
use ward_sentinel_core::{PipelineConfig, Role};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn engine_matches_brute_force(seed in any::<u64>(), window in 1u32..12, threshold in 0.0..1.0f64) {
        let cfg = PipelineConfig { smoothing_window_s: window, moving_threshold: threshold, ..Default::default() };
        let stream = common::random_stream(seed, 1500, "p");
        let oracle = common::brute_force_states(&stream, &cfg);
        let mut engine = LogicEngine::new(cfg.clone());
        for ((rec, m), want) in stream.iter().zip(&oracle) {
            let got = engine.push(rec, m.as_ref()).unwrap();
            prop_assert_eq!(&got, want);
            prop_assert!(!got.patient_alone || got.person_alone);
            prop_assert!(!got.supervised_by_staff || !got.person_alone);
            prop_assert!(engine.window().len() <= window as usize);
            let entries: Vec<_> = engine.window().entries().map(|e| e.ts).collect();
            prop_assert!(entries.windows(2).all(|p| p[1] - p[0] <= window as i64));
        }
    }

    #[test]
    fn single_spike_never_flips_alone(len in 6usize..200, at in 0usize..200, spike in 2usize..=5, staff in any::<bool>()) {
        let cfg = PipelineConfig::default();
        // the spike needs a full window of stable seconds around it
        let w = cfg.smoothing_window_s as usize;
        let at = w - 1 + at % (len - w + 1);
        let mut engine = LogicEngine::new(cfg);
        for i in 0..len {
            let ts = 1000 + i as i64;
            let roles: Vec<Role> = if i == at {
                std::iter::once(Role::Patient)
                    .chain(std::iter::repeat_n(if staff { Role::Staff } else { Role::Other }, spike - 1))
                    .collect()
            } else {
                vec![Role::Patient]
            };
            let s = engine.push(&common::record("g", ts, &roles), None).unwrap();
            prop_assert!(s.person_alone, "flipped at {} (spike at {})", i, at);
            prop_assert!(s.patient_alone);
            prop_assert!(!s.supervised_by_staff);
        }
    }
}
