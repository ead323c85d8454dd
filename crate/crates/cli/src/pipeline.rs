//! Glue between scene data and the core pipeline: feature preparation,
//! training-sample assembly, and the inference path including the
//! resolution-transfer variant.

use crate::config::RunConfig;
use anyhow::{anyhow, Result};
use rvdet_core::geom::CameraModel;
use rvdet_core::head::{self, HeadParams, Supervision, TrainSample, FEATURE_DIM};
use rvdet_core::loss::PredictionGrid;
use rvdet_core::postproc::{self, Detection, NmsMode, PostprocStats};
use rvdet_core::raster::{self, DepthRaster, LidarPoint};
use rvdet_core::synth::{Scene, TwoDSource};
use rvdet_core::targets::{self, TargetGrid};

/// Factor applied to lidar ranges when inferring at doubled resolution.
pub const TRANSFER_RANGE_FACTOR: f64 = 0.5;
/// Resolution multiplier of the transfer mode.
pub const TRANSFER_RES_FACTOR: u32 = 2;

/// A scene turned into a raster plus the conditioned point list.
pub struct PreparedScene {
    pub cam: CameraModel,
    pub raster: DepthRaster,
    pub points: Vec<LidarPoint>,
}

/// How the lidar stream is conditioned before rasterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conditioning {
    /// Seeded point dropout (training parity).
    Dropout { seed: u64 },
    /// No dropout, no rescale.
    Plain,
    /// Resolution transfer: no dropout, ranges rescaled, doubled raster.
    Transfer,
}

/// Condition the points and build the depth raster.
pub fn prepare_scene(scene: &Scene, rc: &RunConfig, conditioning: Conditioning) -> Result<PreparedScene> {
    let sc = &scene.config;
    let (points, cam, rw, rh) = match conditioning {
        Conditioning::Dropout { seed } => (
            raster::dropout_points(&scene.points, rc.dropout_p, seed),
            sc.camera,
            sc.raster_width,
            sc.raster_height,
        ),
        Conditioning::Plain => (
            scene.points.clone(),
            sc.camera,
            sc.raster_width,
            sc.raster_height,
        ),
        Conditioning::Transfer => (
            raster::rescale_ranges_points(&scene.points, TRANSFER_RANGE_FACTOR),
            sc.camera.scaled(TRANSFER_RES_FACTOR),
            sc.raster_width * TRANSFER_RES_FACTOR,
            sc.raster_height * TRANSFER_RES_FACTOR,
        ),
    };
    let (raster, _) = raster::build_depth_raster(&points, &cam, rw, rh);
    Ok(PreparedScene {
        cam,
        raster,
        points,
    })
}

/// Render the appearance channels and extract per-pixel features for every
/// valid raster pixel. This is the model-input side; the oracle geometry
/// paths never need it.
pub fn scene_features(
    scene: &Scene,
    prepared: &PreparedScene,
    rc: &RunConfig,
) -> Result<Vec<[f64; FEATURE_DIM]>> {
    let appearance = scene.appearance(prepared.raster.width, prepared.raster.height);
    let mut features = Vec::with_capacity(prepared.raster.valid_count());
    for idx in prepared.raster.valid_pixels() {
        features.push(
            head::extract_features(&prepared.raster, &appearance, idx, &rc.features)
                .map_err(|e| anyhow!("feature extraction: {e}"))?,
        );
    }
    Ok(features)
}

/// Which 2D boxes supervise a given mode.
pub fn two_d_source(supervision: Supervision) -> TwoDSource {
    match supervision {
        // The 3D-only mode never reads the 2D targets; the true boxes are a
        // placeholder.
        Supervision::ThreeDOnly | Supervision::ThreeD2D => TwoDSource::True,
        Supervision::ThreeDProj2D => TwoDSource::Projected,
    }
}

/// Build one training sample from a scene.
pub fn build_sample(
    scene: &Scene,
    rc: &RunConfig,
    supervision: Supervision,
    dropout_seed: u64,
) -> Result<(TrainSample, PreparedScene)> {
    let prepared = prepare_scene(scene, rc, Conditioning::Dropout { seed: dropout_seed })?;
    let features = scene_features(scene, &prepared, rc)?;
    let labels = scene.linked_labels(two_d_source(supervision));
    let corr = targets::correspondences_from_points(&prepared.points);
    let grid = targets::build_target_grid(
        &prepared.raster,
        &prepared.points,
        &labels,
        &corr,
        &prepared.cam,
    )
    .map_err(|e| anyhow!("target grid: {e}"))?;
    Ok((
        TrainSample {
            features,
            targets: grid,
        },
        prepared,
    ))
}

/// Train a head on a set of scenes.
pub fn train_on_scenes(
    scenes: &[Scene],
    rc: &RunConfig,
    supervision: Supervision,
    seed: u64,
) -> Result<(HeadParams, Vec<head::EpochLoss>)> {
    let mut samples = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let (sample, _) = build_sample(scene, rc, supervision, seed ^ (i as u64).wrapping_mul(0x9e37))?;
        samples.push(sample);
    }
    head::train(&samples, &rc.loss, &rc.optim, supervision, rc.hidden_dim, seed)
        .map_err(|e| anyhow!("training: {e}"))
}

/// Inference output for one scene.
pub struct InferenceResult {
    pub detections: Vec<Detection>,
    pub stats: PostprocStats,
}

/// Decode candidates, run 2D NMS in image space, undo any range rescale,
/// then run BEV NMS in true metric space. Undoing before the BEV stage
/// matters: decoded extents are metric while rescaled centroids are
/// compressed, so footprint overlaps would be distorted otherwise.
fn postprocess_staged(
    pred: &PredictionGrid,
    prepared: &PreparedScene,
    rc: &RunConfig,
    nms: NmsMode,
    transfer: bool,
) -> InferenceResult {
    let (decoded, stats) = postproc::decode_foreground(
        pred,
        &prepared.raster,
        &prepared.points,
        &prepared.cam,
        rc.postproc.score_threshold,
    );
    let after_2d = match nms {
        NmsMode::TwoD | NmsMode::Both => postproc::nms_2d(&decoded, rc.postproc.nms_iou_2d),
        NmsMode::Bev => decoded,
    };
    let restored: Vec<Detection> = if transfer {
        after_2d
            .iter()
            .map(|d| raster::undo_rescale(d, TRANSFER_RANGE_FACTOR))
            .collect()
    } else {
        after_2d
    };
    let detections = match nms {
        NmsMode::Bev | NmsMode::Both => postproc::nms_bev(&restored, rc.postproc.nms_iou_bev),
        NmsMode::TwoD => restored,
    };
    InferenceResult { detections, stats }
}

/// Run the head plus post-processing on one scene. With `transfer` the
/// resolution-transfer recipe applies: dropout disabled, ranges rescaled,
/// doubled raster, and the rescale undone on every decoded detection.
pub fn infer_scene(
    params: &HeadParams,
    scene: &Scene,
    rc: &RunConfig,
    nms: NmsMode,
    transfer: bool,
    dropout_seed: u64,
) -> Result<InferenceResult> {
    let conditioning = if transfer {
        Conditioning::Transfer
    } else {
        Conditioning::Dropout { seed: dropout_seed }
    };
    let prepared = prepare_scene(scene, rc, conditioning)?;
    let features = scene_features(scene, &prepared, rc)?;
    let pass = head::forward_grid(
        params,
        &features,
        prepared.raster.width,
        prepared.raster.height,
    )
    .map_err(|e| anyhow!("forward: {e}"))?;
    Ok(postprocess_staged(&pass.grid, &prepared, rc, nms, transfer))
}

/// Oracle predictions from ground-truth targets: the class slot gets a
/// saturated logit and every regression mean equals its target. Used by the
/// geometric pipeline tests and the benchmark, where a trained head would
/// only add noise.
pub fn oracle_predictions(grid: &TargetGrid) -> PredictionGrid {
    let mut pred = PredictionGrid::zeros(grid.width, grid.height, grid.pixels.len());
    for (px, tg) in pred.pixels.iter_mut().zip(&grid.pixels) {
        px.logits[tg.class_index] = 12.0;
        if let Some(fg) = &tg.foreground {
            px.means[rvdet_core::loss::mean::DX2D] = fg.t2d.dx;
            px.means[rvdet_core::loss::mean::DY2D] = fg.t2d.dy;
            px.means[rvdet_core::loss::mean::W2D] = fg.t2d.w;
            px.means[rvdet_core::loss::mean::H2D] = fg.t2d.h;
            px.means[rvdet_core::loss::mean::DX3D] = fg.t3d.dx;
            px.means[rvdet_core::loss::mean::DY3D] = fg.t3d.dy;
            px.means[rvdet_core::loss::mean::DD] = fg.t3d.dd;
            px.means[rvdet_core::loss::mean::W3D] = fg.t3d.w;
            px.means[rvdet_core::loss::mean::L3D] = fg.t3d.l;
            px.means[rvdet_core::loss::mean::H3D] = fg.t3d.h;
            px.means[rvdet_core::loss::mean::COS] = fg.t3d.cos_t;
            px.means[rvdet_core::loss::mean::SIN] = fg.t3d.sin_t;
        }
    }
    pred
}

/// Geometric (oracle-encode) pipeline: raster, target grid, decode of every
/// foreground pixel, NMS. No learned component; exercises the data path.
pub fn oracle_pipeline(
    scene: &Scene,
    rc: &RunConfig,
    conditioning: Conditioning,
    nms: NmsMode,
) -> Result<InferenceResult> {
    let prepared = prepare_scene(scene, rc, conditioning)?;
    let labels = scene.linked_labels(TwoDSource::True);
    let labels = if matches!(conditioning, Conditioning::Transfer) {
        // Targets must be encoded against the rescaled world: scale label
        // centroids like the points.
        labels
            .iter()
            .map(|l| rvdet_core::targets::LinkedLabel {
                box3d: rvdet_core::geom::Box3D::new(
                    l.box3d.centroid.scale(TRANSFER_RANGE_FACTOR),
                    l.box3d.w,
                    l.box3d.l,
                    l.box3d.h,
                    l.box3d.phi,
                ),
                // 2D boxes live in the doubled image.
                box2d: rvdet_core::geom::Box2D::new(
                    l.box2d.cx * TRANSFER_RES_FACTOR as f64,
                    l.box2d.cy * TRANSFER_RES_FACTOR as f64,
                    l.box2d.w * TRANSFER_RES_FACTOR as f64,
                    l.box2d.h * TRANSFER_RES_FACTOR as f64,
                ),
                ..*l
            })
            .collect()
    } else {
        labels
    };
    let corr = targets::correspondences_from_points(&prepared.points);
    let grid = targets::build_target_grid(
        &prepared.raster,
        &prepared.points,
        &labels,
        &corr,
        &prepared.cam,
    )
    .map_err(|e| anyhow!("target grid: {e}"))?;
    let pred = oracle_predictions(&grid);
    let transfer = matches!(conditioning, Conditioning::Transfer);
    Ok(postprocess_staged(&pred, &prepared, rc, nms, transfer))
}
