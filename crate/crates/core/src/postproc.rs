//! Output decoding and post-processing: foreground selection from the class
//! heatmap, greedy 2D NMS, then bird's-eye-view NMS on the decoded boxes.
//!
//! Suppression runs 2D first and BEV second. NMS is per class; cross-class
//! suppression would delete co-located pairs such as a pedestrian next to a
//! vehicle. Ties in score break toward the lower anchor point id so results
//! are deterministic.

use crate::geom::{self, Box2D, Box3D, CameraModel};
use crate::loss::PredictionGrid;
use crate::raster::{DepthRaster, LidarPoint};
use crate::targets::{self, ObjectClass, TargetError, BACKGROUND_INDEX};
use alloc::vec::Vec;

/// A decoded detection: linked 2D and 3D boxes anchored on a lidar point.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub anchor_point_id: u32,
    pub class: ObjectClass,
    pub score: f64,
    pub box2d: Box2D,
    pub box3d: Box3D,
}

/// Which NMS stages to run; mirrors the post-processing ablation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmsMode {
    /// 2D NMS only.
    TwoD,
    /// BEV NMS only.
    Bev,
    /// 2D NMS followed by BEV NMS.
    Both,
}

impl NmsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            NmsMode::TwoD => "2d",
            NmsMode::Bev => "3d",
            NmsMode::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<NmsMode> {
        match s {
            "2d" => Some(NmsMode::TwoD),
            "3d" => Some(NmsMode::Bev),
            "both" => Some(NmsMode::Both),
            _ => None,
        }
    }
}

/// Post-processing configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocConfig {
    /// Minimum foreground class probability for a candidate anchor.
    pub score_threshold: f64,
    /// 2D NMS IoU threshold.
    pub nms_iou_2d: f64,
    /// BEV NMS IoU threshold.
    pub nms_iou_bev: f64,
    pub nms: NmsMode,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        PostprocConfig {
            score_threshold: 0.3,
            nms_iou_2d: 0.5,
            nms_iou_bev: 0.2,
            nms: NmsMode::Both,
        }
    }
}

/// A foreground anchor picked from the class heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForegroundCandidate {
    /// Row in the prediction grid (sentinel pixels in row-major order).
    pub grid_idx: usize,
    /// Row-major raster index of the pixel.
    pub raster_idx: usize,
    /// Anchoring point index.
    pub point_index: u32,
    pub class: ObjectClass,
    /// Probability of the winning foreground class.
    pub score: f64,
}

/// All sentinel pixels whose best foreground class probability reaches
/// `threshold`, with the argmax class.
pub fn select_foreground(
    pred: &PredictionGrid,
    raster: &DepthRaster,
    threshold: f64,
) -> Vec<ForegroundCandidate> {
    assert_eq!(
        pred.pixels.len(),
        raster.valid_count(),
        "prediction grid must align with the raster's sentinel pixels"
    );
    let mut out = Vec::new();
    for (grid_idx, raster_idx) in raster.valid_pixels().enumerate() {
        let probs = pred.pixels[grid_idx].class_probs();
        let (mut best, mut best_p) = (0, probs[0]);
        for (c, &p) in probs.iter().enumerate().take(BACKGROUND_INDEX).skip(1) {
            if p > best_p {
                best = c;
                best_p = p;
            }
        }
        if best_p >= threshold {
            out.push(ForegroundCandidate {
                grid_idx,
                raster_idx,
                point_index: raster.point_index[raster_idx].expect("sentinel back-pointer"),
                class: ObjectClass::from_index(best).expect("foreground class index"),
                score: best_p,
            });
        }
    }
    out
}

fn sort_for_nms(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.anchor_point_id.cmp(&b.anchor_point_id))
    });
}

/// Greedy per-class NMS over axis-aligned 2D boxes.
pub fn nms_2d(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut sorted: Vec<Detection> = dets.to_vec();
    sort_for_nms(&mut sorted);
    let mut kept: Vec<Detection> = Vec::new();
    for det in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.class == det.class && geom::iou_2d(&k.box2d, &det.box2d) >= iou_thresh);
        if !suppressed {
            kept.push(det);
        }
    }
    kept
}

/// Greedy per-class NMS over rotated BEV footprints.
pub fn nms_bev(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut sorted: Vec<Detection> = dets.to_vec();
    sort_for_nms(&mut sorted);
    let mut kept: Vec<Detection> = Vec::new();
    for det in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.class == det.class && geom::iou_bev(&k.box3d, &det.box3d) >= iou_thresh);
        if !suppressed {
            kept.push(det);
        }
    }
    kept
}

/// Post-processing bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PostprocStats {
    pub candidates: usize,
    /// Candidates rejected because the decoded range was non-positive.
    pub decode_rejected: usize,
}

/// Foreground query plus decode: every candidate anchor becomes a full
/// detection. Candidates whose recovered range is non-positive are dropped
/// and counted.
pub fn decode_foreground(
    pred: &PredictionGrid,
    raster: &DepthRaster,
    points: &[LidarPoint],
    cam: &CameraModel,
    score_threshold: f64,
) -> (Vec<Detection>, PostprocStats) {
    let candidates = select_foreground(pred, raster, score_threshold);
    let mut stats = PostprocStats {
        candidates: candidates.len(),
        decode_rejected: 0,
    };
    let mut decoded: Vec<Detection> = Vec::with_capacity(candidates.len());
    for cand in &candidates {
        let pixel = &pred.pixels[cand.grid_idx];
        let anchor = &points[cand.point_index as usize];
        let proj = match geom::project(cam, &anchor.position) {
            Ok(p) => p,
            Err(_) => {
                stats.decode_rejected += 1;
                continue;
            }
        };
        match targets::decode_detection(
            anchor,
            (proj.u, proj.v),
            cand.point_index,
            &pixel.pred_2d(),
            &pixel.pred_3d(),
            cand.score,
            cand.class,
            cam,
        ) {
            Ok(det) => decoded.push(det),
            Err(TargetError::NonPositiveRange) => stats.decode_rejected += 1,
            Err(_) => stats.decode_rejected += 1,
        }
    }
    (decoded, stats)
}

/// Full output pipeline: foreground query, decode, 2D NMS, BEV NMS.
///
/// Decoding a 3D box is as cheap as the 2D box for this head, so candidates
/// are decoded once up front; the suppression order (2D first, BEV second)
/// matches the staged formulation exactly.
pub fn run_postprocess(
    pred: &PredictionGrid,
    raster: &DepthRaster,
    points: &[LidarPoint],
    cam: &CameraModel,
    cfg: &PostprocConfig,
) -> (Vec<Detection>, PostprocStats) {
    let (decoded, stats) = decode_foreground(pred, raster, points, cam, cfg.score_threshold);
    let after_2d = match cfg.nms {
        NmsMode::TwoD | NmsMode::Both => nms_2d(&decoded, cfg.nms_iou_2d),
        NmsMode::Bev => decoded,
    };
    let final_dets = match cfg.nms {
        NmsMode::Bev | NmsMode::Both => nms_bev(&after_2d, cfg.nms_iou_bev),
        NmsMode::TwoD => after_2d,
    };
    (final_dets, stats)
}
