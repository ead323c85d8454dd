//! Camera model, pinhole projection, bearings and box geometry.
//!
//! Conventions used throughout the crate:
//!
//! * Camera frame is z-forward, x-right, y-down (optical convention).
//! * The bearing of a point is its azimuth in the horizontal x–z plane,
//!   zero on the optical axis, positive toward +x.
//! * Box headings are measured in the same plane about the vertical axis,
//!   zero along +z and positive toward +x, so that heading minus bearing is
//!   a viewpoint-independent quantity.

use crate::math;
use core::fmt;

/// Pinhole camera intrinsics plus image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        debug_assert!(cam.is_valid());
        cam
    }

    /// Camera with a given horizontal field of view (radians), square pixels
    /// and centered principal point.
    pub fn with_hfov(width: u32, height: u32, hfov: f64) -> Self {
        let fx = width as f64 / 2.0 / math::tan(hfov / 2.0);
        CameraModel::new(
            fx,
            fx,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64
    }

    /// Same field of view at `factor`-times the pixel resolution.
    pub fn scaled(&self, factor: u32) -> CameraModel {
        let f = factor as f64;
        CameraModel::new(
            self.fx * f,
            self.fy * f,
            self.cx * f,
            self.cy * f,
            self.width * factor,
            self.height * factor,
        )
    }

    pub fn horizontal_fov(&self) -> f64 {
        2.0 * math::atan2(self.width as f64 / 2.0, self.fx)
    }
}

/// Point in the 3D camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn sub(&self, other: &Point3) -> Point3 {
        Point3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn add(&self, other: &Point3) -> Point3 {
        Point3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(&self) -> Point3 {
        self.scale(1.0 / self.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Axis-aligned 2D box in pixels, stored as center plus extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Box2D {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Box2D { cx, cy, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn min_x(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn max_x(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn min_y(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn max_y(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn from_bounds(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Box2D::new(
            (min_x + max_x) / 2.0,
            (min_y + max_y) / 2.0,
            max_x - min_x,
            max_y - min_y,
        )
    }
}

/// Oriented 3D box: centroid, extents (width lateral, length along heading,
/// height vertical) and heading about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub centroid: Point3,
    pub w: f64,
    pub l: f64,
    pub h: f64,
    pub phi: f64,
}

impl Box3D {
    pub fn new(centroid: Point3, w: f64, l: f64, h: f64, phi: f64) -> Self {
        Box3D {
            centroid,
            w,
            l,
            h,
            phi: math::wrap_angle(phi),
        }
    }

    /// The eight corners of the box in camera frame.
    pub fn corners(&self) -> [Point3; 8] {
        let (s, c) = (math::sin(self.phi), math::cos(self.phi));
        // Unit axes of the footprint: `long` along the heading, `lat` to its
        // right; the vertical axis is y (down).
        let long = (s, c);
        let lat = (c, -s);
        let mut out = [Point3::default(); 8];
        let mut i = 0;
        for &dl in &[-self.l / 2.0, self.l / 2.0] {
            for &dw in &[-self.w / 2.0, self.w / 2.0] {
                for &dh in &[-self.h / 2.0, self.h / 2.0] {
                    out[i] = Point3::new(
                        self.centroid.x + dl * long.0 + dw * lat.0,
                        self.centroid.y + dh,
                        self.centroid.z + dl * long.1 + dw * lat.1,
                    );
                    i += 1;
                }
            }
        }
        out
    }

    /// Footprint corners in the horizontal (x, z) plane, counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = (math::sin(self.phi), math::cos(self.phi));
        let long = [s, c];
        let lat = [c, -s];
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        let cx = self.centroid.x;
        let cz = self.centroid.z;
        // Counter-clockwise in the (x, z) plane for any heading.
        [
            [cx + hl * long[0] + hw * lat[0], cz + hl * long[1] + hw * lat[1]],
            [cx + hl * long[0] - hw * lat[0], cz + hl * long[1] - hw * lat[1]],
            [cx - hl * long[0] - hw * lat[0], cz - hl * long[1] - hw * lat[1]],
            [cx - hl * long[0] + hw * lat[0], cz - hl * long[1] + hw * lat[1]],
        ]
    }

    /// Euclidean distance of the centroid from the camera origin.
    pub fn range(&self) -> f64 {
        self.centroid.norm()
    }
}

/// Geometry errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomError {
    /// Point at or behind the image plane.
    BehindCamera,
    /// Bearing undefined: zero horizontal projection.
    ZeroHorizontal,
}

impl fmt::Display for GeomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeomError::BehindCamera => write!(f, "point is behind the camera (z <= 0)"),
            GeomError::ZeroHorizontal => {
                write!(f, "bearing undefined for zero horizontal projection")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GeomError {}

/// Continuous pixel position plus Euclidean range of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub range: f64,
}

impl PixelProjection {
    /// True when the continuous position falls inside the image bounds.
    pub fn in_image(&self, cam: &CameraModel) -> bool {
        self.u >= 0.0 && self.u < cam.width as f64 && self.v >= 0.0 && self.v < cam.height as f64
    }
}

/// Project a camera-frame point to continuous pixel coordinates.
///
/// The returned range is the Euclidean distance from the camera origin, not
/// the z depth. Points at or behind the image plane are rejected rather than
/// clipped.
pub fn project(cam: &CameraModel, p: &Point3) -> Result<PixelProjection, GeomError> {
    if p.z <= 0.0 {
        return Err(GeomError::BehindCamera);
    }
    Ok(PixelProjection {
        u: cam.fx * p.x / p.z + cam.cx,
        v: cam.fy * p.y / p.z + cam.cy,
        range: p.norm(),
    })
}

/// Unit direction of the camera ray through a continuous pixel position.
pub fn unproject_ray(cam: &CameraModel, u: f64, v: f64) -> Point3 {
    Point3::new((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0).normalized()
}

/// Back-project a pixel position at a Euclidean range.
pub fn unproject(cam: &CameraModel, u: f64, v: f64, range: f64) -> Point3 {
    unproject_ray(cam, u, v).scale(range)
}

/// Azimuth of a point in the horizontal x–z plane; zero on the optical axis.
pub fn bearing(p: &Point3) -> Result<f64, GeomError> {
    if p.x == 0.0 && p.z == 0.0 {
        return Err(GeomError::ZeroHorizontal);
    }
    Ok(math::atan2(p.x, p.z))
}

/// IoU of two axis-aligned 2D boxes.
pub fn iou_2d(a: &Box2D, b: &Box2D) -> f64 {
    let ix = (a.max_x().min(b.max_x()) - a.min_x().max(b.min_x())).max(0.0);
    let iy = (a.max_y().min(b.max_y()) - a.min_y().max(b.min_y())).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Collinearity tolerance for the polygon clipper.
const CLIP_EPS: f64 = 1e-12;

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    math::abs(acc) / 2.0
}

/// Clip a convex polygon by the half-plane left of the directed edge a→b.
fn clip_by_edge(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2], out: &mut alloc::vec::Vec<[f64; 2]>) {
    out.clear();
    let n = poly.len();
    if n == 0 {
        return;
    }
    let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    for i in 0..n {
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let sc = side(cur);
        let sn = side(next);
        if sc >= -CLIP_EPS {
            out.push(cur);
        }
        // Edge crosses the clip line: emit the intersection point.
        if (sc > CLIP_EPS && sn < -CLIP_EPS) || (sc < -CLIP_EPS && sn > CLIP_EPS) {
            let t = sc / (sc - sn);
            out.push([
                cur[0] + t * (next[0] - cur[0]),
                cur[1] + t * (next[1] - cur[1]),
            ]);
        }
    }
}

/// Intersection area of two convex polygons (counter-clockwise winding).
pub fn convex_intersection_area(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> f64 {
    let mut poly: alloc::vec::Vec<[f64; 2]> = subject.to_vec();
    let mut scratch = alloc::vec::Vec::with_capacity(subject.len() + clip.len());
    for i in 0..clip.len() {
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        clip_by_edge(&poly, a, b, &mut scratch);
        core::mem::swap(&mut poly, &mut scratch);
        if poly.is_empty() {
            return 0.0;
        }
    }
    polygon_area(&poly)
}

/// Bird's-eye-view IoU of two oriented boxes: IoU of the rotated footprint
/// rectangles, computed by convex polygon clipping. Near-zero-area
/// footprints contribute zero overlap.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let fa = a.footprint();
    let fb = b.footprint();
    let area_a = polygon_area(&fa);
    let area_b = polygon_area(&fb);
    if area_a <= CLIP_EPS || area_b <= CLIP_EPS {
        return 0.0;
    }
    let inter = convex_intersection_area(&fa, &fb);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn test_cam() -> CameraModel {
        CameraModel::new(1000.0, 1000.0, 400.0, 300.0, 800, 600)
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let p = project(&test_cam(), &Point3::new(0.0, 0.0, 10.0)).unwrap();
        assert_eq!(p.u, 400.0);
        assert_eq!(p.v, 300.0);
        assert_eq!(p.range, 10.0);
    }

    #[test]
    fn off_axis_projection() {
        let p = project(&test_cam(), &Point3::new(1.0, 0.0, 100.0)).unwrap();
        assert!((p.u - 410.0).abs() < 1e-12);
        assert!((p.v - 300.0).abs() < 1e-12);
        assert!((p.range - 10001f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_rejected() {
        assert_eq!(
            project(&test_cam(), &Point3::new(0.0, 0.0, -5.0)),
            Err(GeomError::BehindCamera)
        );
        assert_eq!(
            project(&test_cam(), &Point3::new(1.0, 1.0, 0.0)),
            Err(GeomError::BehindCamera)
        );
    }

    #[test]
    fn bearing_examples() {
        assert_eq!(bearing(&Point3::new(0.0, -1.0, 50.0)).unwrap(), 0.0);
        assert!((bearing(&Point3::new(50.0, 0.0, 50.0)).unwrap() - PI / 4.0).abs() < 1e-12);
        let expect = (-3.0f64).atan2(40.0);
        assert_eq!(bearing(&Point3::new(-3.0, 2.0, 40.0)).unwrap(), expect);
        assert_eq!(
            bearing(&Point3::new(0.0, 1.0, 0.0)),
            Err(GeomError::ZeroHorizontal)
        );
    }

    #[test]
    fn iou_2d_cases() {
        let a = Box2D::new(0.5, 0.5, 1.0, 1.0);
        assert_eq!(iou_2d(&a, &a), 1.0);
        let disjoint = Box2D::new(5.0, 5.0, 1.0, 1.0);
        assert_eq!(iou_2d(&a, &disjoint), 0.0);
        let shifted = Box2D::new(1.0, 0.5, 1.0, 1.0);
        assert!((iou_2d(&a, &shifted) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou_2d(&a, &shifted), iou_2d(&shifted, &a));
    }

    #[test]
    fn iou_bev_identity_and_square_rotation() {
        let sq = Box3D::new(Point3::new(1.0, 0.0, 30.0), 2.0, 2.0, 1.5, 0.3);
        assert!((iou_bev(&sq, &sq) - 1.0).abs() < 1e-12);
        let rot = Box3D::new(sq.centroid, 2.0, 2.0, 1.5, 0.3 + PI / 2.0);
        assert!((iou_bev(&sq, &rot) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_bev_cross_rectangles() {
        let a = Box3D::new(Point3::new(0.0, 0.0, 50.0), 2.0, 4.0, 1.5, 0.0);
        let b = Box3D::new(Point3::new(0.0, 0.0, 50.0), 2.0, 4.0, 1.5, PI / 2.0);
        assert!((iou_bev(&a, &b) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn iou_bev_degenerate_footprint_is_zero() {
        let a = Box3D::new(Point3::new(0.0, 0.0, 50.0), 2.0, 4.0, 1.5, 0.0);
        let flat = Box3D::new(Point3::new(0.0, 0.0, 50.0), 1e-15, 4.0, 1.5, 0.0);
        assert_eq!(iou_bev(&a, &flat), 0.0);
        assert_eq!(iou_bev(&flat, &a), 0.0);
    }

    #[test]
    fn scaled_camera_doubles_continuous_coordinates() {
        let cam = test_cam();
        let cam2 = cam.scaled(2);
        let p = Point3::new(3.0, -1.0, 120.0);
        let a = project(&cam, &p).unwrap();
        let b = project(&cam2, &p).unwrap();
        assert!((b.u - 2.0 * a.u).abs() < 1e-9);
        assert!((b.v - 2.0 * a.v).abs() < 1e-9);
        assert_eq!(a.range, b.range);
    }
}
