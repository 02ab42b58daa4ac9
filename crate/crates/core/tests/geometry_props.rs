mod common;

use proptest::prelude::*;
use rand::Rng;

use layoutbench::geometry::{
    intersection_area, iou, overlaps, relation_holds, BoundingBox, RelationKind,
};
use layoutbench::seed::rng_from_seed;

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (0.0..0.95f64, 0.0..0.95f64, 0.01..1.0f64, 0.01..1.0f64).prop_map(|(x, y, fw, fh)| {
        let x_max = x + (1.0 - x) * fw;
        let y_max = y + (1.0 - y) * fh;
        BoundingBox { x_min: x, y_min: y, x_max, y_max }.quantized()
    })
    .prop_filter("non-degenerate after quantization", |b| b.is_valid())
}

fn arb_kind() -> impl Strategy<Value = RelationKind> {
    prop::sample::select(RelationKind::ALL.to_vec())
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let v = iou(&a, &b);
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn overlap_iff_positive_iou(a in arb_box(), b in arb_box()) {
        prop_assert_eq!(overlaps(&a, &b), iou(&a, &b) > 0.0);
    }

    #[test]
    fn relations_mirror(kind in arb_kind(), a in arb_box(), b in arb_box()) {
        prop_assert_eq!(relation_holds(kind, &a, &b), relation_holds(kind.mirror(), &b, &a));
    }

    #[test]
    fn boxes_round_trip_through_json(b in arb_box()) {
        let text = serde_json::to_string(&b).unwrap();
        let back: BoundingBox = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, b);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn intersection_never_exceeds_either_area(a in arb_box(), b in arb_box()) {
        let i = intersection_area(&a, &b);
        prop_assert!(i <= a.area() + 1e-15 && i <= b.area() + 1e-15);
    }
}

/// Monte Carlo estimate of IoU from uniform points in the unit square.
fn monte_carlo_iou(a: &BoundingBox, b: &BoundingBox, samples: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let (mut inter, mut union) = (0usize, 0usize);
    for _ in 0..samples {
        let (x, y): (f64, f64) = (rng.random(), rng.random());
        let in_a = a.contains_point(x, y);
        let in_b = b.contains_point(x, y);
        inter += usize::from(in_a && in_b);
        union += usize::from(in_a || in_b);
    }
    inter as f64 / union as f64
}

#[test]
fn iou_agrees_with_monte_carlo_estimate() {
    let pairs = [
        ([0.0, 0.0, 0.5, 0.5], [0.25, 0.25, 0.75, 0.75]),
        ([0.1, 0.1, 0.9, 0.6], [0.3, 0.0, 0.7, 1.0]),
        ([0.2, 0.2, 0.4, 0.9], [0.0, 0.5, 1.0, 0.7]),
    ];
    for (i, (a, b)) in pairs.iter().enumerate() {
        let (a, b) = (common::bx(*a), common::bx(*b));
        let estimate = monte_carlo_iou(&a, &b, 1_000_000, i as u64);
        assert!((estimate - iou(&a, &b)).abs() < 0.01, "pair {i}: {estimate} vs {}", iou(&a, &b));
    }
}
