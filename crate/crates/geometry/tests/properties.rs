use std::f64::consts::PI;

use ogrg_geometry::dump::{read_dump, write_dump, PredictionRecord};
use ogrg_geometry::{angle_diff, jaccard_at_n, rect_iou, GraspPose, GraspRectangle};
use proptest::prelude::*;

fn rect() -> impl Strategy<Value = GraspRectangle> {
    (0.0..30.0f64, 0.0..30.0f64, -PI..PI, 1.0..25.0f64, 1.0..12.0f64)
        .prop_map(|(x, y, a, w, h)| GraspRectangle::new(x, y, a, w, h))
}

proptest! {
    #[test]
    fn iou_symmetric_bounded_reflexive(a in rect(), b in rect()) {
        let ab = rect_iou(&a, &b).unwrap();
        let ba = rect_iou(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((rect_iou(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_invariant_under_common_rotation(a in rect(), b in rect(), phi in -PI..PI) {
        let before = rect_iou(&a, &b).unwrap();
        let after = rect_iou(&a.rotated_about(7.0, -3.0, phi), &b.rotated_about(7.0, -3.0, phi)).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn corners_round_trip(r in rect()) {
        let back = GraspRectangle::from_corners(&r.corners());
        prop_assert!((back.cx - r.cx).abs() < 1e-6 && (back.cy - r.cy).abs() < 1e-6);
        prop_assert!((back.width - r.width).abs() < 1e-6 && (back.height - r.height).abs() < 1e-6);
        prop_assert!(angle_diff(back.angle, r.angle) < 1e-6);
        prop_assert!((back.width * back.height - r.area()).abs() < 1e-6);
    }

    #[test]
    fn angle_diff_range_symmetry_period(a in -10.0..10.0f64, b in -10.0..10.0f64) {
        let d = angle_diff(a, b);
        prop_assert!((0.0..=90.0).contains(&d));
        prop_assert!((d - angle_diff(b, a)).abs() < 1e-9);
        prop_assert!(angle_diff(a, a + PI) < 1e-9);
    }

    #[test]
    fn jaccard_monotone_in_n(
        preds in prop::collection::vec((0.0..30.0f64, 0.0..30.0f64, -1.5..1.5f64, 4.0..20.0f64), 1..6),
        gts in prop::collection::vec(rect(), 1..4),
    ) {
        let poses: Vec<GraspPose> = preds.iter().map(|&(x, y, t, l)| GraspPose { x, y, z: 0.0, theta: t, l }).collect();
        let j1 = jaccard_at_n(&poses, &gts, 1).unwrap();
        let jany = jaccard_at_n(&poses, &gts, poses.len()).unwrap();
        prop_assert!(!j1 || jany);
    }
}

#[test]
fn dump_round_trip_and_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pred.jsonl");
    let recs = vec![
        PredictionRecord { id: "a".into(), mask: "a.png".into(), poses: vec![[1.0, 2.0, 30.0, 40.0]] },
        PredictionRecord { id: "b".into(), mask: "b.png".into(), poses: vec![] },
    ];
    write_dump(&path, &recs).unwrap();
    assert_eq!(read_dump(&path).unwrap(), recs);
    std::fs::write(&path, "{\"id\":\"a\",\"mask\":\"m\",\"poses\":[]}\nnot json\n").unwrap();
    let err = read_dump(&path).unwrap_err().to_string();
    assert!(err.contains(":2:"), "{err}");
}
