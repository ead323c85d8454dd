//! Sparse depth rasterization with z-buffering, plus the range-rescaling
//! operations used when transferring a model across image resolutions.
//!
//! The raster keeps two channels, Euclidean range and a binary sentinel, and
//! additionally a per-pixel back-pointer to the source lidar point so that
//! decoded detections stay anchored on real points.

use crate::geom::{self, CameraModel, Point3};
use crate::postproc::Detection;
use crate::rng::Rng;
use alloc::vec;
use alloc::vec::Vec;

/// One lidar return in camera frame, optionally linked to a labeled object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Point3,
    pub object_id: Option<u32>,
}

impl LidarPoint {
    pub fn new(position: Point3) -> Self {
        LidarPoint {
            position,
            object_id: None,
        }
    }

    pub fn with_object(position: Point3, object_id: u32) -> Self {
        LidarPoint {
            position,
            object_id: Some(object_id),
        }
    }
}

/// Sparse depth raster: per-pixel range (0 where empty), binary sentinel and
/// the index of the surviving source point.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthRaster {
    pub width: u32,
    pub height: u32,
    pub range_ch: Vec<f64>,
    pub sentinel_ch: Vec<u8>,
    pub point_index: Vec<Option<u32>>,
}

impl DepthRaster {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = (width as usize) * (height as usize);
        DepthRaster {
            width,
            height,
            range_ch: vec![0.0; n],
            sentinel_ch: vec![0; n],
            point_index: vec![None; n],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn valid_count(&self) -> usize {
        self.sentinel_ch.iter().filter(|&&s| s == 1).count()
    }

    /// Indices of all sentinel pixels in row-major order.
    pub fn valid_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.sentinel_ch
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .map(|(i, _)| i)
    }

    /// Channel consistency: sentinel set iff range positive iff back-pointer
    /// present.
    pub fn channels_consistent(&self) -> bool {
        self.range_ch
            .iter()
            .zip(&self.sentinel_ch)
            .zip(&self.point_index)
            .all(|((&r, &s), &p)| (s == 1) == (r > 0.0) && (s == 1) == p.is_some())
    }
}

/// Bookkeeping from a raster build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterStats {
    /// Points that projected inside the image.
    pub projected: usize,
    /// In-image points that lost the per-pixel z-buffer contest.
    pub suppressed: usize,
    /// Points projecting outside the image bounds.
    pub out_of_view: usize,
    /// Points at or behind the image plane.
    pub behind_camera: usize,
}

impl RasterStats {
    /// Fraction of in-image points removed by z-buffering.
    pub fn suppressed_fraction(&self) -> f64 {
        if self.projected == 0 {
            0.0
        } else {
            self.suppressed as f64 / self.projected as f64
        }
    }
}

/// Map a continuous full-resolution pixel position to a raster cell.
#[inline]
fn raster_cell(cam: &CameraModel, u: f64, v: f64, out_w: u32, out_h: u32) -> (u32, u32) {
    let x = ((u * out_w as f64 / cam.width as f64) as u32).min(out_w - 1);
    let y = ((v * out_h as f64 / cam.height as f64) as u32).min(out_h - 1);
    (x, y)
}

/// Project a point cloud into a `out_w` x `out_h` raster, keeping only the
/// nearest point per pixel. Behind-camera and out-of-view points are counted
/// but not an error; long-range clouds legitimately exceed the FOV.
///
/// Deterministic sequential order: on an exact range tie the earlier point
/// wins.
pub fn build_depth_raster(
    points: &[LidarPoint],
    cam: &CameraModel,
    out_w: u32,
    out_h: u32,
) -> (DepthRaster, RasterStats) {
    assert!(out_w > 0 && out_h > 0, "raster dimensions must be positive");
    let mut raster = DepthRaster::empty(out_w, out_h);
    let mut stats = RasterStats::default();
    for (i, point) in points.iter().enumerate() {
        let proj = match geom::project(cam, &point.position) {
            Ok(p) => p,
            Err(_) => {
                stats.behind_camera += 1;
                continue;
            }
        };
        if !proj.in_image(cam) {
            stats.out_of_view += 1;
            continue;
        }
        stats.projected += 1;
        let (x, y) = raster_cell(cam, proj.u, proj.v, out_w, out_h);
        let idx = raster.idx(x, y);
        if raster.sentinel_ch[idx] == 0 || proj.range < raster.range_ch[idx] {
            raster.range_ch[idx] = proj.range;
            raster.sentinel_ch[idx] = 1;
            raster.point_index[idx] = Some(i as u32);
        }
    }
    stats.suppressed = stats.projected - raster.valid_count();
    (raster, stats)
}

/// Resample all channels by nearest neighbor. The sentinel stays binary at
/// every scale.
pub fn resize_nearest(raster: &DepthRaster, out_w: u32, out_h: u32) -> DepthRaster {
    assert!(out_w > 0 && out_h > 0, "target dimensions must be positive");
    let mut out = DepthRaster::empty(out_w, out_h);
    for y in 0..out_h {
        let sy = (y as usize * raster.height as usize) / out_h as usize;
        for x in 0..out_w {
            let sx = (x as usize * raster.width as usize) / out_w as usize;
            let src = sy * raster.width as usize + sx;
            let dst = out.idx(x, y);
            out.range_ch[dst] = raster.range_ch[src];
            out.sentinel_ch[dst] = raster.sentinel_ch[src];
            out.point_index[dst] = raster.point_index[src];
        }
    }
    out
}

/// Independently drop each point with probability `p` under a seeded
/// generator. Bit-for-bit reproducible for a fixed seed.
pub fn dropout_points(points: &[LidarPoint], p: f64, seed: u64) -> Vec<LidarPoint> {
    assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
    let mut rng = Rng::derive(seed, 0x64726f70);
    points
        .iter()
        .filter(|_| rng.f64() >= p)
        .copied()
        .collect()
}

/// Multiply every point's radial distance by `factor`; directions unchanged.
pub fn rescale_ranges_points(points: &[LidarPoint], factor: f64) -> Vec<LidarPoint> {
    assert!(factor > 0.0, "rescale factor must be positive");
    points
        .iter()
        .map(|p| LidarPoint {
            position: p.position.scale(factor),
            object_id: p.object_id,
        })
        .collect()
}

/// Multiply the range channel of a raster by `factor`.
pub fn rescale_ranges_raster(raster: &DepthRaster, factor: f64) -> DepthRaster {
    assert!(factor > 0.0, "rescale factor must be positive");
    let mut out = raster.clone();
    for (r, &s) in out.range_ch.iter_mut().zip(&raster.sentinel_ch) {
        if s == 1 {
            *r *= factor;
        }
    }
    out
}

/// Undo a range rescale on a decoded detection: the centroid's radial
/// distance is divided by `factor`. The 2D box and the 3D extents are left
/// untouched because extents are regressed directly in meters.
pub fn undo_rescale(det: &Detection, factor: f64) -> Detection {
    assert!(factor > 0.0, "rescale factor must be positive");
    let mut out = det.clone();
    out.box3d.centroid = det.box3d.centroid.scale(1.0 / factor);
    out
}
