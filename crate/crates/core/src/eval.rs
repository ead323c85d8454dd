//! Range-bucketed detection metrics: BEV average precision at a loose IoU
//! and a 2.5D max-F1 that gates on 2D box overlap plus relative range error.
//!
//! Labels are bucketed by centroid range. Detections match labels in any
//! bucket; an unmatched detection counts as a false positive in the bucket
//! of its own centroid range. Buckets without labels report no value rather
//! than zero.

use crate::geom;
use crate::postproc::Detection;
use crate::targets::{LinkedLabel, ObjectClass};
use alloc::vec;
use alloc::vec::Vec;

/// Metric configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// BEV IoU threshold for AP matching.
    pub bev_iou: f64,
    /// 2D IoU threshold for the 2.5D gate.
    pub iou_2d: f64,
    /// Maximum relative range error for the 2.5D gate.
    pub max_range_err: f64,
    /// Non-overlapping ascending (min, max) range buckets, meters.
    pub buckets: Vec<(f64, f64)>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bev_iou: 0.1,
            iou_2d: 0.5,
            max_range_err: 0.10,
            buckets: vec![(100.0, 200.0), (200.0, 300.0), (300.0, 400.0), (400.0, 500.0)],
        }
    }
}

impl EvalConfig {
    /// Single bucket spanning the whole configured range.
    pub fn pooled(&self) -> EvalConfig {
        let lo = self.buckets.first().map(|b| b.0).unwrap_or(0.0);
        let hi = self.buckets.last().map(|b| b.1).unwrap_or(f64::INFINITY);
        EvalConfig {
            buckets: vec![(lo, hi)],
            ..self.clone()
        }
    }

    pub fn buckets_valid(&self) -> bool {
        self.buckets
            .windows(2)
            .all(|w| w[0].1 <= w[1].0 && w[0].0 < w[0].1)
            && self.buckets.iter().all(|b| b.0 < b.1)
    }

    fn bucket_of(&self, range: f64) -> Option<usize> {
        self.buckets
            .iter()
            .position(|&(lo, hi)| range >= lo && range < hi)
    }
}

/// One detection frame: predictions plus ground truth for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub detections: Vec<Detection>,
    pub labels: Vec<LinkedLabel>,
}

/// Metric value for one (class, bucket) cell; `None` when the bucket holds
/// no labels of that class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketMetric {
    pub class: ObjectClass,
    pub bucket_min: f64,
    pub bucket_max: f64,
    pub value: Option<f64>,
}

fn detection_range(d: &Detection) -> f64 {
    d.box3d.centroid.norm()
}

fn label_range(l: &LinkedLabel) -> f64 {
    l.box3d.centroid.norm()
}

fn sorted_class_dets(frame: &Frame, class: ObjectClass) -> Vec<&Detection> {
    let mut dets: Vec<&Detection> = frame
        .detections
        .iter()
        .filter(|d| d.class == class)
        .collect();
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.anchor_point_id.cmp(&b.anchor_point_id))
    });
    dets
}

/// Score-descending greedy matching for one frame and class: each detection
/// takes the highest-IoU unmatched label passing the gate. Returns per-event
/// (score, matched label bucket or detection bucket, is_tp).
fn match_frame_bev(
    frame: &Frame,
    class: ObjectClass,
    cfg: &EvalConfig,
    events: &mut Vec<(f64, bool, usize)>,
) {
    let labels: Vec<(&LinkedLabel, Option<usize>)> = frame
        .labels
        .iter()
        .filter(|l| l.class == class)
        .map(|l| (l, cfg.bucket_of(label_range(l))))
        .collect();
    let mut taken = vec![false; labels.len()];
    for det in sorted_class_dets(frame, class) {
        let mut best: Option<(usize, f64)> = None;
        for (li, (label, bucket)) in labels.iter().enumerate() {
            if taken[li] || bucket.is_none() {
                continue;
            }
            let iou = geom::iou_bev(&det.box3d, &label.box3d);
            if iou >= cfg.bev_iou {
                let better = match best {
                    None => true,
                    Some((_, b)) => iou > b,
                };
                if better {
                    best = Some((li, iou));
                }
            }
        }
        match best {
            Some((li, _)) => {
                taken[li] = true;
                events.push((det.score, true, labels[li].1.expect("bucketed label")));
            }
            None => {
                if let Some(bucket) = cfg.bucket_of(detection_range(det)) {
                    events.push((det.score, false, bucket));
                }
            }
        }
    }
}

/// Area under the precision-recall curve with all-points interpolation.
///
/// `events` are (score, is_tp) pairs; they are sorted score-descending here.
/// `n_labels` must be positive.
pub fn average_precision(events: &[(f64, bool)], n_labels: usize) -> f64 {
    debug_assert!(n_labels > 0);
    let mut sorted = events.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = sorted.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, is_tp) in &sorted {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / n_labels as f64);
    }
    // Precision envelope from the right.
    let mut env = precision.clone();
    for i in (0..n.saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..n {
        if sorted[i].1 {
            ap += (recall[i] - prev_recall) * env[i];
            prev_recall = recall[i];
        }
    }
    ap
}

/// BEV average precision per (class, bucket) over a set of frames.
pub fn bev_ap(frames: &[Frame], cfg: &EvalConfig) -> Vec<BucketMetric> {
    assert!(cfg.buckets_valid(), "buckets must be ascending and disjoint");
    let mut out = Vec::new();
    for class in ObjectClass::ALL {
        let mut events: Vec<(f64, bool, usize)> = Vec::new();
        let mut n_labels = vec![0usize; cfg.buckets.len()];
        for frame in frames {
            for label in frame.labels.iter().filter(|l| l.class == class) {
                if let Some(b) = cfg.bucket_of(label_range(label)) {
                    n_labels[b] += 1;
                }
            }
            match_frame_bev(frame, class, cfg, &mut events);
        }
        for (bi, &(lo, hi)) in cfg.buckets.iter().enumerate() {
            let value = if n_labels[bi] == 0 {
                None
            } else {
                let bucket_events: Vec<(f64, bool)> = events
                    .iter()
                    .filter(|&&(_, _, b)| b == bi)
                    .map(|&(s, tp, _)| (s, tp))
                    .collect();
                Some(average_precision(&bucket_events, n_labels[bi]))
            };
            out.push(BucketMetric {
                class,
                bucket_min: lo,
                bucket_max: hi,
                value,
            });
        }
    }
    out
}

/// 2.5D gate: 2D IoU and relative range error.
fn gate_25d(det: &Detection, label: &LinkedLabel, cfg: &EvalConfig) -> Option<f64> {
    let iou = geom::iou_2d(&det.box2d, &label.box2d);
    if iou < cfg.iou_2d {
        return None;
    }
    let lr = label_range(label);
    if ((detection_range(det) - lr) / lr).abs() > cfg.max_range_err {
        return None;
    }
    Some(iou)
}

/// Per-bucket (tp, fp, fn) counts at one score threshold.
fn counts_at_threshold(
    frames: &[Frame],
    class: ObjectClass,
    cfg: &EvalConfig,
    threshold: f64,
) -> Vec<(usize, usize, usize)> {
    let mut counts = vec![(0usize, 0usize, 0usize); cfg.buckets.len()];
    for frame in frames {
        let labels: Vec<(&LinkedLabel, Option<usize>)> = frame
            .labels
            .iter()
            .filter(|l| l.class == class)
            .map(|l| (l, cfg.bucket_of(label_range(l))))
            .collect();
        let mut taken = vec![false; labels.len()];
        for det in sorted_class_dets(frame, class) {
            if det.score < threshold {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (li, (label, bucket)) in labels.iter().enumerate() {
                if taken[li] || bucket.is_none() {
                    continue;
                }
                if let Some(iou) = gate_25d(det, label, cfg) {
                    let better = match best {
                        None => true,
                        Some((_, b)) => iou > b,
                    };
                    if better {
                        best = Some((li, iou));
                    }
                }
            }
            match best {
                Some((li, _)) => {
                    taken[li] = true;
                    counts[labels[li].1.unwrap()].0 += 1;
                }
                None => {
                    if let Some(b) = cfg.bucket_of(detection_range(det)) {
                        counts[b].1 += 1;
                    }
                }
            }
        }
        for (li, (_, bucket)) in labels.iter().enumerate() {
            if let Some(b) = bucket {
                if !taken[li] {
                    counts[*b].2 += 1;
                }
            }
        }
    }
    counts
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}

/// Max-F1 over a score-threshold sweep, per (class, bucket). A match needs
/// 2D IoU above threshold and relative range error within the gate.
pub fn max_f1_25d(frames: &[Frame], cfg: &EvalConfig) -> Vec<BucketMetric> {
    assert!(cfg.buckets_valid(), "buckets must be ascending and disjoint");
    let mut out = Vec::new();
    for class in ObjectClass::ALL {
        // Candidate thresholds: every distinct detection score. F1 as a
        // function of the threshold only changes at score values.
        let mut thresholds: Vec<f64> = frames
            .iter()
            .flat_map(|f| f.detections.iter())
            .filter(|d| d.class == class)
            .map(|d| d.score)
            .collect();
        thresholds.sort_by(|a, b| a.total_cmp(b));
        thresholds.dedup();

        let mut n_labels = vec![0usize; cfg.buckets.len()];
        for frame in frames {
            for label in frame.labels.iter().filter(|l| l.class == class) {
                if let Some(b) = cfg.bucket_of(label_range(label)) {
                    n_labels[b] += 1;
                }
            }
        }

        let mut best = vec![0.0f64; cfg.buckets.len()];
        for &t in &thresholds {
            for (bi, &(tp, fp, fn_)) in counts_at_threshold(frames, class, cfg, t)
                .iter()
                .enumerate()
            {
                best[bi] = best[bi].max(f1(tp, fp, fn_));
            }
        }
        for (bi, &(lo, hi)) in cfg.buckets.iter().enumerate() {
            out.push(BucketMetric {
                class,
                bucket_min: lo,
                bucket_max: hi,
                value: if n_labels[bi] == 0 { None } else { Some(best[bi]) },
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Box2D, Box3D, Point3};

    fn label(id: u32, class: ObjectClass, z: f64) -> LinkedLabel {
        LinkedLabel {
            id,
            class,
            box2d: Box2D::new(100.0 + id as f64 * 60.0, 80.0, 30.0, 14.0),
            box3d: Box3D::new(
                Point3::new(id as f64 * 4.0 - 6.0, 1.2, z),
                2.0,
                4.5,
                1.6,
                0.3,
            ),
        }
    }

    fn perfect_det(l: &LinkedLabel, score: f64) -> Detection {
        Detection {
            anchor_point_id: l.id,
            class: l.class,
            score,
            box2d: l.box2d,
            box3d: l.box3d,
        }
    }

    fn cfg() -> EvalConfig {
        EvalConfig::default()
    }

    #[test]
    fn perfect_detections_score_one_everywhere() {
        let labels = vec![
            label(0, ObjectClass::Vehicle, 150.0),
            label(1, ObjectClass::Vehicle, 250.0),
            label(2, ObjectClass::Vru, 350.0),
            label(3, ObjectClass::Construction, 450.0),
        ];
        let dets: Vec<Detection> = labels.iter().map(|l| perfect_det(l, 1.0)).collect();
        let frames = [Frame {
            detections: dets,
            labels,
        }];
        for m in bev_ap(&frames, &cfg()) {
            if let Some(v) = m.value {
                assert_eq!(v, 1.0, "{:?}", m);
            }
        }
        for m in max_f1_25d(&frames, &cfg()) {
            if let Some(v) = m.value {
                assert_eq!(v, 1.0, "{:?}", m);
            }
        }
    }

    #[test]
    fn no_detections_scores_zero_where_labels_exist() {
        let labels = vec![label(0, ObjectClass::Vehicle, 150.0)];
        let frames = [Frame {
            detections: Vec::new(),
            labels,
        }];
        let metrics = bev_ap(&frames, &cfg());
        let vehicle_near = metrics
            .iter()
            .find(|m| m.class == ObjectClass::Vehicle && m.bucket_min == 100.0)
            .unwrap();
        assert_eq!(vehicle_near.value, Some(0.0));
        // Bucket without labels reports absent, not zero.
        let vehicle_far = metrics
            .iter()
            .find(|m| m.class == ObjectClass::Vehicle && m.bucket_min == 400.0)
            .unwrap();
        assert_eq!(vehicle_far.value, None);
    }

    #[test]
    fn duplicate_detections_one_tp_rest_fp() {
        let l = label(0, ObjectClass::Vehicle, 150.0);
        let dets = vec![perfect_det(&l, 0.9), perfect_det(&l, 0.8), perfect_det(&l, 0.7)];
        let frames = [Frame {
            detections: dets,
            labels: vec![l],
        }];
        let metrics = bev_ap(&frames, &cfg());
        let m = metrics
            .iter()
            .find(|m| m.class == ObjectClass::Vehicle && m.bucket_min == 100.0)
            .unwrap();
        // One TP at rank 1: precision 1 at recall 1, then FPs only.
        assert_eq!(m.value, Some(1.0));
    }

    #[test]
    fn range_gate_fails_at_twenty_percent_error() {
        let l = label(0, ObjectClass::Vehicle, 200.0);
        let mut det = perfect_det(&l, 0.9);
        det.box3d.centroid = det.box3d.centroid.scale(1.2);
        let frames = [Frame {
            detections: vec![det],
            labels: vec![l],
        }];
        let metrics = max_f1_25d(&frames, &cfg());
        let near = metrics
            .iter()
            .find(|m| m.class == ObjectClass::Vehicle && m.bucket_min == 200.0)
            .unwrap();
        assert_eq!(near.value, Some(0.0));
    }

    #[test]
    fn order_invariance_of_ap() {
        let labels = vec![
            label(0, ObjectClass::Vehicle, 150.0),
            label(1, ObjectClass::Vehicle, 160.0),
        ];
        let mut dets = vec![
            perfect_det(&labels[0], 0.9),
            perfect_det(&labels[1], 0.7),
            Detection {
                anchor_point_id: 9,
                class: ObjectClass::Vehicle,
                score: 0.8,
                box2d: Box2D::new(500.0, 80.0, 30.0, 14.0),
                box3d: Box3D::new(Point3::new(30.0, 1.2, 180.0), 2.0, 4.5, 1.6, 0.0),
            },
        ];
        let a = bev_ap(
            &[Frame {
                detections: dets.clone(),
                labels: labels.clone(),
            }],
            &cfg(),
        );
        dets.reverse();
        let b = bev_ap(
            &[Frame {
                detections: dets,
                labels,
            }],
            &cfg(),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn spurious_detection_removal_is_monotone() {
        let labels = vec![label(0, ObjectClass::Vehicle, 150.0)];
        let spurious = Detection {
            anchor_point_id: 5,
            class: ObjectClass::Vehicle,
            score: 0.95,
            box2d: Box2D::new(700.0, 80.0, 30.0, 14.0),
            box3d: Box3D::new(Point3::new(40.0, 1.2, 190.0), 2.0, 4.5, 1.6, 0.0),
        };
        let with = [Frame {
            detections: vec![perfect_det(&labels[0], 0.9), spurious],
            labels: labels.clone(),
        }];
        let without = [Frame {
            detections: vec![perfect_det(&labels[0], 0.9)],
            labels,
        }];
        let get = |frames: &[Frame]| {
            bev_ap(frames, &cfg())
                .into_iter()
                .find(|m| m.class == ObjectClass::Vehicle && m.bucket_min == 100.0)
                .unwrap()
                .value
                .unwrap()
        };
        assert!(get(&without) >= get(&with));
    }
}
