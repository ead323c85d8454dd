//! Point-anchored target encoding and decoding.
//!
//! Every valid raster pixel holds a lidar point; foreground pixels
//! additionally carry regression targets expressed relative to that anchor:
//!
//! * 2D: pixel displacement from the anchor's projection to the 2D box
//!   center, plus the box extent in pixels.
//! * 3D: pixel displacement from the anchor's projection to the projected 3D
//!   centroid, a range delta `dd` along the centroid ray, the heading
//!   relative to the bearing as a (cos, sin) pair, and the metric extents.
//!
//! The range delta is the dot product of the unit ray toward the centroid
//! with the displacement from the anchor point to the centroid. Decoding
//! inverts this exactly: the ray through the predicted centroid pixel is
//! walked out to `ray . anchor + dd`, which recovers the centroid because
//! `ray . centroid` is the centroid's full range. Heading is recovered as
//! `atan2(sin, cos)` plus the bearing of the recovered centroid.

use crate::geom::{self, Box2D, Box3D, CameraModel, GeomError, Point3};
use crate::math;
use crate::postproc::Detection;
use crate::raster::{DepthRaster, LidarPoint};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Object classes, mirroring the three foreground categories of the
/// synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectClass {
    Vehicle,
    Vru,
    Construction,
}

/// Number of foreground classes.
pub const NUM_CLASSES: usize = 3;
/// Class-vector length including the background slot.
pub const NUM_CLASSES_BG: usize = NUM_CLASSES + 1;
/// Index of the background slot in class vectors.
pub const BACKGROUND_INDEX: usize = NUM_CLASSES;

impl ObjectClass {
    pub const ALL: [ObjectClass; NUM_CLASSES] =
        [ObjectClass::Vehicle, ObjectClass::Vru, ObjectClass::Construction];

    pub fn index(&self) -> usize {
        match self {
            ObjectClass::Vehicle => 0,
            ObjectClass::Vru => 1,
            ObjectClass::Construction => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<ObjectClass> {
        match i {
            0 => Some(ObjectClass::Vehicle),
            1 => Some(ObjectClass::Vru),
            2 => Some(ObjectClass::Construction),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::Vehicle => "vehicle",
            ObjectClass::Vru => "vru",
            ObjectClass::Construction => "construction",
        }
    }

    pub fn parse(s: &str) -> Option<ObjectClass> {
        match s {
            "vehicle" => Some(ObjectClass::Vehicle),
            "vru" => Some(ObjectClass::Vru),
            "construction" => Some(ObjectClass::Construction),
            _ => None,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A linked 2D/3D label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkedLabel {
    pub id: u32,
    pub class: ObjectClass,
    pub box2d: Box2D,
    pub box3d: Box3D,
}

/// Encoded 2D regression target: anchor-to-center displacement plus extent,
/// all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Encoded2DTarget {
    pub dx: f64,
    pub dy: f64,
    pub w: f64,
    pub h: f64,
}

/// Encoded 3D regression target: projected-centroid pixel displacement,
/// range delta along the centroid ray, relative heading and metric extents.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Encoded3DTarget {
    pub dx: f64,
    pub dy: f64,
    pub dd: f64,
    pub cos_t: f64,
    pub sin_t: f64,
    pub w: f64,
    pub l: f64,
    pub h: f64,
}

/// Targets attached to a foreground pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForegroundTarget {
    pub label_id: u32,
    pub t2d: Encoded2DTarget,
    pub t3d: Encoded3DTarget,
}

/// Per-pixel target: class plus optional regression targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelTarget {
    /// Row-major index into the raster.
    pub raster_idx: usize,
    /// Index of the anchoring point in the source point list.
    pub point_index: u32,
    /// Class slot, `BACKGROUND_INDEX` for background.
    pub class_index: usize,
    /// Present only on foreground pixels.
    pub foreground: Option<ForegroundTarget>,
}

/// Targets for every valid raster pixel, in row-major raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetGrid {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<PixelTarget>,
}

impl TargetGrid {
    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.foreground.is_some()).count()
    }
}

/// Errors from target construction or decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetError {
    /// A correspondence references a point index outside the point list.
    DanglingPoint(u32),
    /// A correspondence or point references an unknown label id.
    DanglingLabel(u32),
    /// Label centroid or box corner at or behind the image plane.
    Geometry(GeomError),
    /// Decoded centroid range came out non-positive.
    NonPositiveRange,
}

impl fmt::Display for TargetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetError::DanglingPoint(i) => write!(f, "correspondence references missing point {i}"),
            TargetError::DanglingLabel(i) => write!(f, "correspondence references missing label {i}"),
            TargetError::Geometry(e) => write!(f, "geometry: {e}"),
            TargetError::NonPositiveRange => write!(f, "decoded centroid range is non-positive"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TargetError {}

impl From<GeomError> for TargetError {
    fn from(e: GeomError) -> Self {
        TargetError::Geometry(e)
    }
}

/// Encode the 2D box of `label` relative to an anchor pixel position.
pub fn encode_2d(label: &LinkedLabel, anchor_px: (f64, f64)) -> Encoded2DTarget {
    Encoded2DTarget {
        dx: label.box2d.cx - anchor_px.0,
        dy: label.box2d.cy - anchor_px.1,
        w: label.box2d.w,
        h: label.box2d.h,
    }
}

/// Encode the 3D box of `label` relative to an anchoring point.
pub fn encode_3d(
    label: &LinkedLabel,
    point: &Point3,
    cam: &CameraModel,
) -> Result<Encoded3DTarget, TargetError> {
    let c = label.box3d.centroid;
    let proj_c = geom::project(cam, &c)?;
    let proj_p = geom::project(cam, point)?;
    let ray = c.normalized();
    let dd = ray.dot(&c.sub(point));
    let alpha = geom::bearing(&c)?;
    let theta = math::wrap_angle(label.box3d.phi - alpha);
    Ok(Encoded3DTarget {
        dx: proj_c.u - proj_p.u,
        dy: proj_c.v - proj_p.v,
        dd,
        cos_t: math::cos(theta),
        sin_t: math::sin(theta),
        w: label.box3d.w,
        l: label.box3d.l,
        h: label.box3d.h,
    })
}

/// Smallest extent a decoded box may have, in pixels or meters.
const MIN_DECODED_EXTENT: f64 = 1e-3;

/// Decode one detection from predicted 2D/3D targets at an anchor point.
///
/// The centroid is recovered along the ray through the predicted projected
/// centroid pixel; a non-positive recovered range rejects the candidate.
#[allow(clippy::too_many_arguments)]
pub fn decode_detection(
    anchor: &LidarPoint,
    anchor_px: (f64, f64),
    anchor_point_id: u32,
    pred2d: &Encoded2DTarget,
    pred3d: &Encoded3DTarget,
    score: f64,
    class: ObjectClass,
    cam: &CameraModel,
) -> Result<Detection, TargetError> {
    let box2d = Box2D::new(
        anchor_px.0 + pred2d.dx,
        anchor_px.1 + pred2d.dy,
        pred2d.w.max(MIN_DECODED_EXTENT),
        pred2d.h.max(MIN_DECODED_EXTENT),
    );
    let ray = geom::unproject_ray(cam, anchor_px.0 + pred3d.dx, anchor_px.1 + pred3d.dy);
    let range = ray.dot(&anchor.position) + pred3d.dd;
    if range <= 0.0 {
        return Err(TargetError::NonPositiveRange);
    }
    let centroid = ray.scale(range);
    let alpha = geom::bearing(&centroid)?;
    let theta = math::atan2(pred3d.sin_t, pred3d.cos_t);
    let box3d = Box3D::new(
        centroid,
        pred3d.w.max(MIN_DECODED_EXTENT),
        pred3d.l.max(MIN_DECODED_EXTENT),
        pred3d.h.max(MIN_DECODED_EXTENT),
        theta + alpha,
    );
    Ok(Detection {
        anchor_point_id,
        class,
        score,
        box2d,
        box3d,
    })
}

/// Axis-aligned 2D bounds of the eight projected corners of a 3D box.
pub fn project_3d_to_2d_label(box3d: &Box3D, cam: &CameraModel) -> Result<Box2D, TargetError> {
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for corner in box3d.corners() {
        let p = geom::project(cam, &corner)?;
        min_u = min_u.min(p.u);
        max_u = max_u.max(p.u);
        min_v = min_v.min(p.v);
        max_v = max_v.max(p.v);
    }
    Ok(Box2D::from_bounds(min_u, min_v, max_u, max_v))
}

/// Build per-pixel targets for every valid raster pixel.
///
/// `correspondences` maps point indices to label ids; points without an
/// entry are background. Dangling references are an error.
pub fn build_target_grid(
    raster: &DepthRaster,
    points: &[LidarPoint],
    labels: &[LinkedLabel],
    correspondences: &[(u32, u32)],
    cam: &CameraModel,
) -> Result<TargetGrid, TargetError> {
    let mut label_of_point: Vec<Option<usize>> = vec![None; points.len()];
    for &(point_idx, label_id) in correspondences {
        if point_idx as usize >= points.len() {
            return Err(TargetError::DanglingPoint(point_idx));
        }
        let label_pos = labels
            .iter()
            .position(|l| l.id == label_id)
            .ok_or(TargetError::DanglingLabel(label_id))?;
        label_of_point[point_idx as usize] = Some(label_pos);
    }

    let mut pixels = Vec::with_capacity(raster.valid_count());
    for raster_idx in raster.valid_pixels() {
        let point_index = raster.point_index[raster_idx].expect("sentinel pixel has back-pointer");
        let point = points
            .get(point_index as usize)
            .ok_or(TargetError::DanglingPoint(point_index))?;
        let (class_index, foreground) = match label_of_point[point_index as usize] {
            Some(label_pos) => {
                let label = &labels[label_pos];
                let proj = geom::project(cam, &point.position)?;
                let t2d = encode_2d(label, (proj.u, proj.v));
                let t3d = encode_3d(label, &point.position, cam)?;
                (
                    label.class.index(),
                    Some(ForegroundTarget {
                        label_id: label.id,
                        t2d,
                        t3d,
                    }),
                )
            }
            None => (BACKGROUND_INDEX, None),
        };
        pixels.push(PixelTarget {
            raster_idx,
            point_index,
            class_index,
            foreground,
        });
    }
    Ok(TargetGrid {
        width: raster.width,
        height: raster.height,
        pixels,
    })
}

/// Build correspondences straight from the points' own object ids.
pub fn correspondences_from_points(points: &[LidarPoint]) -> Vec<(u32, u32)> {
    points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.object_id.map(|id| (i as u32, id)))
        .collect()
}
