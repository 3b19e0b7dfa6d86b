mod common;

use proptest::prelude::*;
use ward_sentinel_core::geometry::{
    detect_crossings, expand_polygon, rasterize, CrossingDirection, Polygon, RoiKind,
};
use ward_sentinel_core::DetectionRecord;

/// Convex polygon: points on an ellipse at sorted distinct angles.
fn arb_convex() -> impl Strategy<Value = Polygon> {
    (
        60.0..420.0f64,
        50.0..220.0f64,
        20.0..100.0f64,
        20.0..60.0f64,
        prop::collection::btree_set(0u16..360, 3..10),
    )
        .prop_map(|(cx, cy, rx, ry, angles)| {
            let v = angles
                .into_iter()
                .map(|a| {
                    let t = (a as f64).to_radians();
                    (cx + rx * t.cos(), cy + ry * t.sin())
                })
                .collect();
            Polygon::new(v).unwrap()
        })
        .prop_filter("non-degenerate", |p| p.area() > 50.0)
}

fn shoelace(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_keeps_shape_and_scales_perimeter(p in arb_convex(), f in 0.0..0.5f64) {
        let e = expand_polygon(&p, f).unwrap();
        prop_assert_eq!(e.len(), p.len());
        prop_assert!(e.is_convex());
        prop_assert!((e.perimeter() / p.perimeter() - (1.0 + f)).abs() < 1e-9);
        prop_assert!((shoelace(e.vertices()) / shoelace(p.vertices()) - (1.0 + f).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn expanded_raster_contains_original(p in arb_convex(), f in 0.001..0.5f64) {
        let base = rasterize(&p, RoiKind::SafetyZone, 480, 270);
        let grown = rasterize(&expand_polygon(&p, f).unwrap(), RoiKind::SafetyZone, 480, 270);
        prop_assert!(grown.is_superset_of(&base));
        prop_assert!(grown.count() >= base.count());
    }

    #[test]
    fn raster_matches_pixel_centre_test(p in arb_convex()) {
        let (w, h) = (200, 120);
        let m = rasterize(&p, RoiKind::Bed, w, h);
        prop_assert!(m.count() <= w * h);
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                // skip centres sitting on an edge, where either answer is fine
                let on_edge = p.edges().any(|(a, b)| {
                    let cross = (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0);
                    cross.abs() < 1e-9
                });
                if !on_edge {
                    prop_assert_eq!(m.get(x, y), p.contains(px, py), "pixel ({}, {})", x, y);
                }
            }
        }
    }

    #[test]
    fn crossings_alternate_along_a_walk(steps in prop::collection::vec((-40.0..40.0f64, -25.0..25.0f64), 2..120)) {
        let zone = Polygon::rect(400.0, 200.0, 300.0, 200.0).unwrap();
        let mask = rasterize(&zone, RoiKind::SafetyZone, 1088, 612);
        let (mut x, mut y) = (550.0, 300.0);
        let mut prev = DetectionRecord::empty("w".into(), 0);
        prev.push(common::person_at(x, y), Some(common::role(ward_sentinel_core::Role::Patient)));
        let mut dirs = Vec::new();
        for (i, (dx, dy)) in steps.into_iter().enumerate() {
            x = (x + dx).clamp(100.0, 1000.0);
            y = (y + dy).clamp(100.0, 600.0);
            let mut cur = DetectionRecord::empty("w".into(), i as i64 + 1);
            cur.push(common::person_at(x, y), Some(common::role(ward_sentinel_core::Role::Patient)));
            for e in detect_crossings(&prev, &cur, &mask, (1088, 612), 0.15).unwrap() {
                dirs.push(e.direction);
            }
            prev = cur;
        }
        for pair in dirs.windows(2) {
            prop_assert_ne!(pair[0], pair[1]);
        }
        if let Some(first) = dirs.first() {
            prop_assert_eq!(*first, CrossingDirection::Exit);
        }
    }
}
