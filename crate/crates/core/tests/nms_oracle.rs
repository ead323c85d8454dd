//! Greedy NMS against an independent repeated-argmax reference, plus the
//! suppression invariants.

use rvdet_core::geom::{self, Box2D, Box3D, Point3};
use rvdet_core::postproc::{self, Detection};
use rvdet_core::rng::Rng;
use rvdet_core::targets::ObjectClass;

fn random_dets(rng: &mut Rng, n: usize) -> Vec<Detection> {
    (0..n)
        .map(|i| {
            let cx = rng.range(50.0, 700.0);
            let cy = rng.range(40.0, 280.0);
            Detection {
                anchor_point_id: i as u32,
                class: ObjectClass::from_index(rng.index(3)).unwrap(),
                score: rng.range(0.05, 1.0),
                box2d: Box2D::new(cx, cy, rng.range(5.0, 120.0), rng.range(5.0, 60.0)),
                box3d: Box3D::new(
                    Point3::new(rng.range(-40.0, 40.0), 1.0, rng.range(80.0, 420.0)),
                    rng.range(0.5, 3.0),
                    rng.range(0.5, 6.0),
                    1.6,
                    rng.range(-3.1, 3.1),
                ),
            }
        })
        .collect()
}

/// Repeated-argmax reference NMS: pull the best remaining detection, then
/// delete everything of its class it overlaps. Quadratic and obviously
/// correct.
fn reference_nms(
    dets: &[Detection],
    thresh: f64,
    iou: impl Fn(&Detection, &Detection) -> f64,
) -> Vec<Detection> {
    let mut remaining: Vec<Detection> = dets.to_vec();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.score
                    .total_cmp(&b.score)
                    .then(b.anchor_point_id.cmp(&a.anchor_point_id))
            })
            .map(|(i, _)| i)
            .unwrap();
        let winner = remaining.swap_remove(best);
        remaining.retain(|d| d.class != winner.class || iou(&winner, d) < thresh);
        kept.push(winner);
    }
    kept.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.anchor_point_id.cmp(&b.anchor_point_id))
    });
    kept
}

#[test]
fn nms_2d_equals_reference_on_thousand_sets() {
    let mut rng = Rng::new(0x2d2d);
    for trial in 0..1000 {
        let n = 4 + rng.index(28);
        let dets = random_dets(&mut rng, n);
        let fast = postproc::nms_2d(&dets, 0.5);
        let slow = reference_nms(&dets, 0.5, |a, b| geom::iou_2d(&a.box2d, &b.box2d));
        assert_eq!(fast, slow, "trial {trial}");
    }
}

#[test]
fn nms_bev_equals_reference_on_thousand_sets() {
    let mut rng = Rng::new(0x3d3d);
    for trial in 0..1000 {
        let n = 4 + rng.index(28);
        let dets = random_dets(&mut rng, n);
        let fast = postproc::nms_bev(&dets, 0.2);
        let slow = reference_nms(&dets, 0.2, |a, b| geom::iou_bev(&a.box3d, &b.box3d));
        assert_eq!(fast, slow, "trial {trial}");
    }
}

#[test]
fn nms_output_invariants() {
    let mut rng = Rng::new(0x4e4e);
    for _ in 0..100 {
        let dets = random_dets(&mut rng, 24);
        let out2d = postproc::nms_2d(&dets, 0.5);
        let out_bev = postproc::nms_bev(&dets, 0.2);

        // Top-scoring input per class always survives.
        for class in ObjectClass::ALL {
            let top = dets
                .iter()
                .filter(|d| d.class == class)
                .max_by(|a, b| a.score.total_cmp(&b.score));
            if let Some(top) = top {
                assert!(out2d.iter().any(|d| d.anchor_point_id == top.anchor_point_id));
                assert!(out_bev.iter().any(|d| d.anchor_point_id == top.anchor_point_id));
            }
        }

        // Pairwise same-class IoU below threshold.
        for (i, a) in out2d.iter().enumerate() {
            for b in &out2d[i + 1..] {
                if a.class == b.class {
                    assert!(geom::iou_2d(&a.box2d, &b.box2d) < 0.5);
                }
            }
        }
        for (i, a) in out_bev.iter().enumerate() {
            for b in &out_bev[i + 1..] {
                if a.class == b.class {
                    assert!(geom::iou_bev(&a.box3d, &b.box3d) < 0.2);
                }
            }
        }

        // Idempotence.
        assert_eq!(postproc::nms_2d(&out2d, 0.5), out2d);
        assert_eq!(postproc::nms_bev(&out_bev, 0.2), out_bev);
    }
}
