//! Deterministic synthetic long-range scene and lidar generator.
//!
//! Scenes hold labeled objects standing on a flat ground plane in front of a
//! narrow-FOV camera. The physical surface of each object is a vertical
//! prism inscribed in its 3D label box with the footprint corners beveled
//! off, which mimics how real objects underfill their circumscribed label
//! boxes: the tight image-space silhouette box of the surface is genuinely
//! smaller than the projection of the 3D box.
//!
//! Lidar sampling casts a regular angular grid against the object surfaces
//! and the ground, keeps the first hit per ray, and applies Gaussian range
//! noise. Point counts on an object fall off roughly as 1/r^2, leaving only
//! a handful of returns at the far end of the range span.
//!
//! Appearance channels stand in for RGB: each class has a signature color,
//! rendered per raster pixel by ray casting plus per-pixel noise, so a model
//! can learn semantics from them the way images provide them.

use crate::geom::{self, Box2D, Box3D, CameraModel, Point3};
use crate::math;
use crate::raster::LidarPoint;
use crate::rng::Rng;
use crate::targets::{self, LinkedLabel, ObjectClass, TargetError, NUM_CLASSES_BG};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Scene generation configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub n_vehicles: usize,
    pub n_vrus: usize,
    pub n_construction: usize,
    /// Range span for object placement, meters (horizontal distance).
    pub range_min: f64,
    pub range_max: f64,
    /// Full-resolution camera; 30 degree FOV by default.
    pub camera: CameraModel,
    /// Raster resolution (half the image resolution by default).
    pub raster_width: u32,
    pub raster_height: u32,
    /// Lidar angular grid resolution, radians.
    pub lidar_az_res: f64,
    pub lidar_el_res: f64,
    /// Elevation span of the lidar grid, radians (positive is down).
    pub lidar_el_min: f64,
    pub lidar_el_max: f64,
    /// Usable lidar range, meters; rays hitting farther return nothing.
    pub lidar_max_range: f64,
    /// Gaussian range noise, meters.
    pub range_noise_sigma: f64,
    /// Appearance channel noise.
    pub appearance_noise_sigma: f64,
    /// Camera height above ground, meters.
    pub camera_height: f64,
    /// Footprint corner bevel fraction of the true object surface.
    pub corner_cut: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            n_vehicles: 6,
            n_vrus: 4,
            n_construction: 3,
            range_min: 100.0,
            range_max: 450.0,
            camera: CameraModel::with_hfov(1580, 320, 30f64.to_radians()),
            raster_width: 790,
            raster_height: 160,
            lidar_az_res: 0.0025,
            lidar_el_res: 0.002,
            lidar_el_min: -0.002,
            lidar_el_max: 0.025,
            lidar_max_range: 450.0,
            range_noise_sigma: 0.02,
            appearance_noise_sigma: 0.06,
            camera_height: 2.0,
            corner_cut: 0.25,
        }
    }
}

impl SceneConfig {
    pub fn is_valid(&self) -> bool {
        self.lidar_az_res > 0.0
            && self.lidar_el_res > 0.0
            && self.range_min > 0.0
            && self.range_min < self.range_max
            && self.range_max <= self.lidar_max_range
            && (0.0..1.0).contains(&self.corner_cut)
            && self.raster_width > 0
            && self.raster_height > 0
    }

    pub fn class_count(&self, class: ObjectClass) -> usize {
        match class {
            ObjectClass::Vehicle => self.n_vehicles,
            ObjectClass::Vru => self.n_vrus,
            ObjectClass::Construction => self.n_construction,
        }
    }
}

/// Mean (width, length, height) extents per class, meters.
pub fn class_extent_prior(class: ObjectClass) -> (f64, f64, f64) {
    match class {
        ObjectClass::Vehicle => (2.0, 4.5, 1.6),
        ObjectClass::Vru => (0.7, 0.7, 1.7),
        ObjectClass::Construction => (0.5, 0.5, 1.0),
    }
}

/// Appearance signatures per class slot (background last).
pub const CLASS_SIGNATURES: [[f64; 3]; NUM_CLASSES_BG] = [
    [0.90, 0.15, 0.10],
    [0.10, 0.85, 0.20],
    [0.15, 0.10, 0.90],
    [0.40, 0.40, 0.40],
];

/// A labeled object carrying both flavors of 2D box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneLabel {
    pub id: u32,
    pub class: ObjectClass,
    pub box3d: Box3D,
    /// Tight silhouette bounds of the true object surface.
    pub box2d_true: Box2D,
    /// Axis-aligned bounds of the eight projected 3D box corners.
    pub box2d_proj: Box2D,
}

/// Which 2D box flavor feeds a [`LinkedLabel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoDSource {
    True,
    Projected,
}

impl SceneLabel {
    pub fn linked(&self, source: TwoDSource) -> LinkedLabel {
        LinkedLabel {
            id: self.id,
            class: self.class,
            box2d: match source {
                TwoDSource::True => self.box2d_true,
                TwoDSource::Projected => self.box2d_proj,
            },
            box3d: self.box3d,
        }
    }
}

/// A generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub labels: Vec<SceneLabel>,
    pub points: Vec<LidarPoint>,
}

impl Scene {
    pub fn linked_labels(&self, source: TwoDSource) -> Vec<LinkedLabel> {
        self.labels.iter().map(|l| l.linked(source)).collect()
    }

    /// Appearance channels for this scene at a given raster resolution.
    pub fn appearance(&self, width: u32, height: u32) -> AppearanceImage {
        render_appearance(
            &self.labels,
            &self.config.camera,
            width,
            height,
            self.config.camera_height,
            self.config.corner_cut,
            self.config.appearance_noise_sigma,
            self.config.seed,
        )
    }
}

/// Synthesis errors.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    InvalidConfig,
    /// Could not place an object without footprint overlap.
    PlacementFailed { class: ObjectClass, attempts: usize },
    /// Object (partly) outside the camera FOV.
    OutOfFov,
    Target(TargetError),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::InvalidConfig => write!(f, "invalid scene configuration"),
            SynthError::PlacementFailed { class, attempts } => {
                write!(f, "could not place {class} without overlap after {attempts} attempts")
            }
            SynthError::OutOfFov => write!(f, "object outside the camera field of view"),
            SynthError::Target(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SynthError {}

impl From<TargetError> for SynthError {
    fn from(e: TargetError) -> Self {
        SynthError::Target(e)
    }
}

/// Octagonal footprint of the true object surface in local (long, lat)
/// coordinates; `cut = 0` degenerates to the label rectangle.
fn surface_footprint(l: f64, w: f64, cut: f64) -> [[f64; 2]; 8] {
    let (hl, hw) = (l / 2.0, w / 2.0);
    let (cs, ct) = (cut * hl, cut * hw);
    [
        [hl - cs, hw],
        [hl, hw - ct],
        [hl, -hw + ct],
        [hl - cs, -hw],
        [-hl + cs, -hw],
        [-hl, -hw + ct],
        [-hl, hw - ct],
        [-hl + cs, hw],
    ]
}

fn local_axes(phi: f64) -> ([f64; 2], [f64; 2]) {
    let (s, c) = (math::sin(phi), math::cos(phi));
    ([s, c], [c, -s])
}

fn to_world(box3d: &Box3D, long: [f64; 2], lat: [f64; 2], s: f64, t: f64, y: f64) -> Point3 {
    Point3::new(
        box3d.centroid.x + s * long[0] + t * lat[0],
        y,
        box3d.centroid.z + s * long[1] + t * lat[1],
    )
}

/// Tight axis-aligned silhouette bounds of the true (beveled prism) surface
/// of a label box, from dense sampling of the surface. The sampling grid
/// includes every prism vertex, so for a convex surface the bounds are
/// exact. Always contained in the eight-corner projected box.
pub fn true_2d_box(
    box3d: &Box3D,
    cam: &CameraModel,
    corner_cut: f64,
    samples_per_edge: usize,
) -> Result<Box2D, SynthError> {
    let n = samples_per_edge.max(2);
    let (long, lat) = local_axes(box3d.phi);
    let ring = surface_footprint(box3d.l, box3d.w, corner_cut);
    let y_top = box3d.centroid.y - box3d.h / 2.0;
    let y_bot = box3d.centroid.y + box3d.h / 2.0;
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for e in 0..ring.len() {
        let a = ring[e];
        let b = ring[(e + 1) % ring.len()];
        for i in 0..=n {
            let f = i as f64 / n as f64;
            let s = a[0] + f * (b[0] - a[0]);
            let t = a[1] + f * (b[1] - a[1]);
            for j in 0..=n {
                let y = y_top + (y_bot - y_top) * j as f64 / n as f64;
                let p = to_world(box3d, long, lat, s, t, y);
                let proj = geom::project(cam, &p).map_err(TargetError::from)?;
                min_u = min_u.min(proj.u);
                max_u = max_u.max(proj.u);
                min_v = min_v.min(proj.v);
                max_v = max_v.max(proj.v);
            }
        }
    }
    if max_u < 0.0 || min_u >= cam.width as f64 || max_v < 0.0 || min_v >= cam.height as f64 {
        return Err(SynthError::OutOfFov);
    }
    Ok(Box2D::from_bounds(min_u, min_v, max_u, max_v))
}

/// A ray hit on an object surface: entry distance, the normalized
/// surface-local coordinates of the hit point, and the outward normal of
/// the entry face in the horizontal plane (both used for shading).
#[derive(Debug, Clone, Copy, PartialEq)]
struct SurfaceHit {
    t: f64,
    /// Position along the box length, in [-1, 1].
    s_norm: f64,
    /// Lateral position across the box width, in [-1, 1].
    t_norm: f64,
    /// Outward normal of the struck face in world (x, z); zero for the top
    /// face.
    normal_xz: [f64; 2],
}

/// Tight silhouette bounds over the parts of the surface actually visible
/// from the camera: surface samples hidden behind any occluder are skipped.
/// Returns `None` when the object is fully hidden.
pub fn visible_2d_box(
    box3d: &Box3D,
    occluders: &[Box3D],
    cam: &CameraModel,
    corner_cut: f64,
    samples_per_edge: usize,
) -> Result<Option<Box2D>, SynthError> {
    let n = samples_per_edge.max(2);
    let (long, lat) = local_axes(box3d.phi);
    let ring = surface_footprint(box3d.l, box3d.w, corner_cut);
    let y_top = box3d.centroid.y - box3d.h / 2.0;
    let y_bot = box3d.centroid.y + box3d.h / 2.0;
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    let mut visible = false;
    for e in 0..ring.len() {
        let a = ring[e];
        let b = ring[(e + 1) % ring.len()];
        for i in 0..=n {
            let f = i as f64 / n as f64;
            let s = a[0] + f * (b[0] - a[0]);
            let t = a[1] + f * (b[1] - a[1]);
            for j in 0..=n {
                let y = y_top + (y_bot - y_top) * j as f64 / n as f64;
                let p = to_world(box3d, long, lat, s, t, y);
                let proj = geom::project(cam, &p).map_err(TargetError::from)?;
                let range = p.norm();
                let dir = p.scale(1.0 / range);
                let occluded = occluders.iter().any(|o| {
                    ray_hit_surface(o, corner_cut, &dir)
                        .map(|hit| hit.t < range - 1e-9)
                        .unwrap_or(false)
                });
                if occluded {
                    continue;
                }
                visible = true;
                min_u = min_u.min(proj.u);
                max_u = max_u.max(proj.u);
                min_v = min_v.min(proj.v);
                max_v = max_v.max(proj.v);
            }
        }
    }
    if !visible {
        return Ok(None);
    }
    Ok(Some(Box2D::from_bounds(min_u, min_v, max_u, max_v)))
}

/// Ray/surface intersection against the beveled prism of a label, returning
/// the entry distance along the (unit) direction.
fn ray_hit_surface(box3d: &Box3D, corner_cut: f64, dir: &Point3) -> Option<SurfaceHit> {
    let (long, lat) = local_axes(box3d.phi);
    // Local coordinates of the camera origin and direction.
    let rel = Point3::new(-box3d.centroid.x, 0.0, -box3d.centroid.z);
    let os = rel.x * long[0] + rel.z * long[1];
    let ot = rel.x * lat[0] + rel.z * lat[1];
    let ds = dir.x * long[0] + dir.z * long[1];
    let dt = dir.x * lat[0] + dir.z * lat[1];
    let oy = -box3d.centroid.y;
    let dy = dir.y;
    let (hl, hw, hh) = (box3d.l / 2.0, box3d.w / 2.0, box3d.h / 2.0);

    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut entry: usize = usize::MAX;

    let inscribe = 2.0 - corner_cut;
    let constraints: [(f64, f64); 10] = [
        (os - hl, ds),
        (-os - hl, -ds),
        (ot - hw, dt),
        (-ot - hw, -dt),
        (oy - hh, dy),
        (-oy - hh, -dy),
        (os / hl + ot / hw - inscribe, ds / hl + dt / hw),
        (os / hl - ot / hw - inscribe, ds / hl - dt / hw),
        (-os / hl + ot / hw - inscribe, -ds / hl + dt / hw),
        (-os / hl - ot / hw - inscribe, -ds / hl - dt / hw),
    ];
    // Half-space constraints a + b t <= 0; track which face defines entry.
    for (ci, &(a, b)) in constraints.iter().enumerate() {
        if math::abs(b) < 1e-15 {
            if a > 0.0 {
                return None;
            }
        } else {
            let bound = -a / b;
            if b > 0.0 {
                hi = hi.min(bound);
            } else if bound > lo {
                lo = bound;
                entry = ci;
            }
            if lo > hi {
                return None;
            }
        }
    }
    if !(lo > 0.0 && lo <= hi) {
        return None;
    }
    // Outward normal of the entry face, local (s, t) frame.
    let inv = 1.0 / math::hypot(1.0 / hl, 1.0 / hw);
    let (ns, nt) = match entry {
        0 => (1.0, 0.0),
        1 => (-1.0, 0.0),
        2 => (0.0, 1.0),
        3 => (0.0, -1.0),
        6 => (inv / hl, inv / hw),
        7 => (inv / hl, -inv / hw),
        8 => (-inv / hl, inv / hw),
        9 => (-inv / hl, -inv / hw),
        // Top/bottom faces or degenerate: no horizontal normal.
        _ => (0.0, 0.0),
    };
    Some(SurfaceHit {
        t: lo,
        s_norm: ((os + lo * ds) / hl).clamp(-1.0, 1.0),
        t_norm: ((ot + lo * dt) / hw).clamp(-1.0, 1.0),
        normal_xz: [
            ns * long[0] + nt * lat[0],
            ns * long[1] + nt * lat[1],
        ],
    })
}

/// Fixed scene light direction in the horizontal plane.
const LIGHT_XZ: [f64; 2] = [0.6, -0.8];

/// Per-channel brightness modulation over an object's surface. Each channel
/// carries a different cue — position along the object, lateral position,
/// and face orientation under the fixed light — so a pixel's appearance
/// encodes where on the object it sits and which way the surface points,
/// the way real imagery does.
fn surface_shade(hit: &SurfaceHit) -> [f64; 3] {
    let lambert = (hit.normal_xz[0] * LIGHT_XZ[0] + hit.normal_xz[1] * LIGHT_XZ[1]).max(0.0);
    [
        0.62 + 0.28 * hit.s_norm,
        0.62 + 0.28 * hit.t_norm,
        0.62 + 0.30 * lambert,
    ]
}

/// Shade triplet for surfaces without object-local structure (ground).
const FLAT_SHADE: [f64; 3] = [0.62, 0.62, 0.62];

/// Cast the regular lidar angular grid against a label set plus the ground
/// plane; first hit per ray, Gaussian range noise, nothing beyond the usable
/// lidar range.
pub fn sample_lidar(labels: &[SceneLabel], cfg: &SceneConfig) -> Vec<LidarPoint> {
    let mut rng = Rng::derive(cfg.seed, 0x6c69_6461);
    let hfov = cfg.camera.horizontal_fov();
    let n_az = (hfov / cfg.lidar_az_res) as usize;
    let n_el = ((cfg.lidar_el_max - cfg.lidar_el_min) / cfg.lidar_el_res) as usize;
    let mut points = Vec::new();
    for ei in 0..=n_el {
        let el = cfg.lidar_el_min + ei as f64 * cfg.lidar_el_res;
        for ai in 0..=n_az {
            let az = -hfov / 2.0 + ai as f64 * cfg.lidar_az_res;
            let dir = Point3::new(
                math::sin(az) * math::cos(el),
                math::sin(el),
                math::cos(az) * math::cos(el),
            );
            // Ground plane at y = camera_height (y points down).
            let mut best_t = if dir.y > 1e-12 {
                cfg.camera_height / dir.y
            } else {
                f64::INFINITY
            };
            let mut best_id: Option<u32> = None;
            for label in labels {
                if let Some(hit) = ray_hit_surface(&label.box3d, cfg.corner_cut, &dir) {
                    if hit.t < best_t {
                        best_t = hit.t;
                        best_id = Some(label.id);
                    }
                }
            }
            if best_t > cfg.lidar_max_range {
                continue;
            }
            let noisy_t = if cfg.range_noise_sigma > 0.0 {
                (best_t + cfg.range_noise_sigma * rng.normal()).max(0.1)
            } else {
                best_t
            };
            points.push(LidarPoint {
                position: dir.scale(noisy_t),
                object_id: best_id,
            });
        }
    }
    points
}

#[allow(clippy::too_many_arguments)]
fn render_appearance(
    labels: &[SceneLabel],
    cam: &CameraModel,
    width: u32,
    height: u32,
    camera_height: f64,
    corner_cut: f64,
    noise_sigma: f64,
    seed: u64,
) -> AppearanceImage {
    let mut rng = Rng::derive(seed, 0x6170_7065);
    let n = width as usize * height as usize;
    let mut data = vec![0.0; n * 3];
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 + 0.5) * cam.width as f64 / width as f64;
            let v = (y as f64 + 0.5) * cam.height as f64 / height as f64;
            let dir = geom::unproject_ray(cam, u, v);
            let mut best_t = if dir.y > 1e-12 {
                camera_height / dir.y
            } else {
                f64::INFINITY
            };
            let mut slot = crate::targets::BACKGROUND_INDEX;
            let mut shade = FLAT_SHADE;
            for label in labels {
                if let Some(hit) = ray_hit_surface(&label.box3d, corner_cut, &dir) {
                    if hit.t < best_t {
                        best_t = hit.t;
                        slot = label.class.index();
                        shade = surface_shade(&hit);
                    }
                }
            }
            let idx = (y as usize * width as usize + x as usize) * 3;
            for c in 0..3 {
                data[idx + c] = CLASS_SIGNATURES[slot][c] * shade[c] + noise_sigma * rng.normal();
            }
        }
    }
    AppearanceImage {
        width,
        height,
        data,
    }
}

/// Per-pixel appearance channels aligned to a raster grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, 3 channels per pixel.
    pub data: Vec<f64>,
}

impl AppearanceImage {
    pub fn constant(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = vec![0.0; n * 3];
        for px in 0..n {
            data[px * 3..px * 3 + 3].copy_from_slice(&rgb);
        }
        AppearanceImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn at(&self, raster_idx: usize, channel: usize) -> f64 {
        self.data[raster_idx * 3 + channel]
    }
}

const PLACEMENT_ATTEMPTS: usize = 200;

/// Generate a scene: non-overlapping labeled objects on the ground plane,
/// class-conditional extents, both 2D box flavors, and the lidar point
/// cloud. Deterministic per config.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene, SynthError> {
    if !cfg.is_valid() {
        return Err(SynthError::InvalidConfig);
    }
    let mut rng = Rng::derive(cfg.seed, 0x7363_656e);
    let hfov = cfg.camera.horizontal_fov();
    let mut labels: Vec<SceneLabel> = Vec::new();
    let mut placed: Vec<(f64, f64, f64)> = Vec::new(); // (x, z, circumradius)
    let mut next_id = 0u32;
    for class in ObjectClass::ALL {
        for _ in 0..cfg.class_count(class) {
            let (pw, pl, ph) = class_extent_prior(class);
            let mut ok = false;
            for attempt in 0.. {
                if attempt >= PLACEMENT_ATTEMPTS {
                    return Err(SynthError::PlacementFailed {
                        class,
                        attempts: PLACEMENT_ATTEMPTS,
                    });
                }
                let w = pw * rng.range(0.85, 1.15);
                let l = pl * rng.range(0.85, 1.15);
                let h = ph * rng.range(0.85, 1.15);
                let radius = math::sqrt(w * w + l * l) / 2.0;
                let r = rng.range(cfg.range_min, cfg.range_max);
                // Keep the whole footprint inside the FOV with one extra
                // lidar column of margin.
                let az_margin = math::atan2(radius * 1.2, r) + cfg.lidar_az_res;
                let az_half = hfov / 2.0 - az_margin;
                if az_half <= 0.0 {
                    continue;
                }
                let az = rng.range(-az_half, az_half);
                let x = r * math::sin(az);
                let z = r * math::cos(az);
                let clear = placed
                    .iter()
                    .all(|&(px, pz, pr)| math::hypot(x - px, z - pz) > pr + radius + 1.0);
                if !clear {
                    continue;
                }
                let phi = rng.range(-core::f64::consts::PI, core::f64::consts::PI);
                let centroid = Point3::new(x, cfg.camera_height - h / 2.0, z);
                let box3d = Box3D::new(centroid, w, l, h, phi);
                let box2d_proj =
                    targets::project_3d_to_2d_label(&box3d, &cfg.camera).map_err(SynthError::from)?;
                labels.push(SceneLabel {
                    id: next_id,
                    class,
                    box3d,
                    // Placeholder; the occlusion-aware box needs the full
                    // label set and is filled in below.
                    box2d_true: box2d_proj,
                    box2d_proj,
                });
                placed.push((x, z, radius));
                next_id += 1;
                ok = true;
                break;
            }
            debug_assert!(ok);
        }
    }
    // Human-style 2D boxes bound only the visible surface: tighter than the
    // projected 3D box, and truncated where another object occludes.
    let boxes: Vec<Box3D> = labels.iter().map(|l| l.box3d).collect();
    for (i, label) in labels.iter_mut().enumerate() {
        let occluders: Vec<Box3D> = boxes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, b)| *b)
            .collect();
        label.box2d_true =
            match visible_2d_box(&label.box3d, &occluders, &cfg.camera, cfg.corner_cut, 16)? {
                Some(b) => b,
                None => {
                    // Fully hidden: keep a degenerate one-pixel box at the
                    // projected centroid; no lidar anchor will ever carry it.
                    let c = geom::project(&cfg.camera, &label.box3d.centroid)
                        .map_err(TargetError::from)?;
                    Box2D::new(c.u, c.v, 1.0, 1.0)
                }
            };
    }
    let points = sample_lidar(&labels, cfg);
    Ok(Scene {
        config: *cfg,
        labels,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg(seed: u64) -> SceneConfig {
        SceneConfig {
            seed,
            n_vehicles: 3,
            n_vrus: 2,
            n_construction: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_objects_gives_ground_only_points() {
        let cfg = SceneConfig {
            n_vehicles: 0,
            n_vrus: 0,
            n_construction: 0,
            ..quick_cfg(1)
        };
        let scene = generate_scene(&cfg).unwrap();
        assert!(scene.labels.is_empty());
        assert!(!scene.points.is_empty());
        assert!(scene.points.iter().all(|p| p.object_id.is_none()));
    }

    #[test]
    fn fixed_seed_reproduces_scene() {
        let a = generate_scene(&quick_cfg(7)).unwrap();
        let b = generate_scene(&quick_cfg(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&quick_cfg(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_inside_fov_and_span() {
        let scene = generate_scene(&quick_cfg(3)).unwrap();
        let hfov = scene.config.camera.horizontal_fov();
        for label in &scene.labels {
            let az = geom::bearing(&label.box3d.centroid).unwrap();
            assert!(az.abs() < hfov / 2.0);
            let horiz = math::hypot(label.box3d.centroid.x, label.box3d.centroid.z);
            assert!(horiz >= scene.config.range_min && horiz <= scene.config.range_max);
        }
    }

    #[test]
    fn occluded_object_gets_no_points() {
        let cfg = SceneConfig {
            range_noise_sigma: 0.0,
            ..quick_cfg(0)
        };
        let near = Box3D::new(Point3::new(0.0, cfg.camera_height - 1.5, 120.0), 6.0, 2.0, 3.0, 0.0);
        let far = Box3D::new(Point3::new(0.0, cfg.camera_height - 0.8, 200.0), 2.0, 1.0, 1.6, 0.0);
        let mk = |id, box3d| SceneLabel {
            id,
            class: ObjectClass::Vehicle,
            box3d,
            box2d_true: Box2D::new(0.0, 0.0, 1.0, 1.0),
            box2d_proj: Box2D::new(0.0, 0.0, 1.0, 1.0),
        };
        let labels = [mk(0, near), mk(1, far)];
        let points = sample_lidar(&labels, &cfg);
        assert!(points.iter().any(|p| p.object_id == Some(0)));
        assert!(points.iter().all(|p| p.object_id != Some(1)));
    }

    #[test]
    fn true_box_contained_in_projected_box() {
        let scene = generate_scene(&quick_cfg(11)).unwrap();
        for label in &scene.labels {
            let t = &label.box2d_true;
            let p = &label.box2d_proj;
            assert!(t.min_x() >= p.min_x() - 1e-9);
            assert!(t.max_x() <= p.max_x() + 1e-9);
            assert!(t.min_y() >= p.min_y() - 1e-9);
            assert!(t.max_y() <= p.max_y() + 1e-9);
        }
    }

    #[test]
    fn facing_cuboid_true_box_equals_front_face_projection() {
        let cam = CameraModel::with_hfov(1580, 320, 30f64.to_radians());
        let box3d = Box3D::new(Point3::new(0.0, 0.0, 150.0), 4.0, 2.0, 1.6, 0.0);
        // Zero corner cut: the true surface is the label cuboid itself.
        let tight = true_2d_box(&box3d, &cam, 0.0, 32).unwrap();
        let zf = 150.0 - 1.0; // front face depth
        let expect_w = 4.0 * cam.fx / zf;
        let expect_h = 1.6 * cam.fy / zf;
        assert!((tight.w - expect_w).abs() < 1e-9, "{} vs {}", tight.w, expect_w);
        assert!((tight.h - expect_h).abs() < 1e-9);
        assert!((tight.cx - cam.cx).abs() < 1e-9);
    }

    #[test]
    fn rotated_beveled_surface_is_strictly_tighter() {
        let cam = CameraModel::with_hfov(1580, 320, 30f64.to_radians());
        let box3d = Box3D::new(
            Point3::new(5.0, 1.0, 180.0),
            2.0,
            4.5,
            1.6,
            core::f64::consts::FRAC_PI_4,
        );
        let tight = true_2d_box(&box3d, &cam, 0.25, 32).unwrap();
        let corners = targets::project_3d_to_2d_label(&box3d, &cam).unwrap();
        assert!(tight.area() < corners.area() * 0.999);
    }

    #[test]
    fn tight_box_contained_in_corner_box_on_random_boxes() {
        let cam = CameraModel::with_hfov(1580, 320, 30f64.to_radians());
        let mut rng = crate::rng::Rng::new(0x7b0c);
        let mut checked = 0;
        while checked < 1000 {
            let r = rng.range(60.0, 420.0);
            let az = rng.range(-0.2, 0.2);
            let box3d = Box3D::new(
                Point3::new(r * az.sin(), rng.range(0.0, 1.5), r * az.cos()),
                rng.range(0.4, 3.0),
                rng.range(0.4, 6.0),
                rng.range(0.4, 2.2),
                rng.range(-core::f64::consts::PI, core::f64::consts::PI),
            );
            let cut = rng.range(0.0, 0.5);
            let Ok(tight) = true_2d_box(&box3d, &cam, cut, 12) else {
                continue;
            };
            let corners = targets::project_3d_to_2d_label(&box3d, &cam).unwrap();
            assert!(tight.min_x() >= corners.min_x() - 1e-9);
            assert!(tight.max_x() <= corners.max_x() + 1e-9);
            assert!(tight.min_y() >= corners.min_y() - 1e-9);
            assert!(tight.max_y() <= corners.max_y() + 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn out_of_fov_object_is_an_error() {
        let cam = CameraModel::with_hfov(1580, 320, 30f64.to_radians());
        let box3d = Box3D::new(Point3::new(100.0, 0.0, 120.0), 2.0, 4.5, 1.6, 0.0);
        assert!(matches!(
            true_2d_box(&box3d, &cam, 0.25, 16),
            Err(SynthError::OutOfFov) | Err(SynthError::Target(_))
        ));
    }

    #[test]
    fn appearance_channels_are_class_informative() {
        let scene = generate_scene(&quick_cfg(21)).unwrap();
        let cfg = &scene.config;
        let app = scene.appearance(cfg.raster_width, cfg.raster_height);
        let (raster, _) = crate::raster::build_depth_raster(
            &scene.points,
            &cfg.camera,
            cfg.raster_width,
            cfg.raster_height,
        );
        // Mean appearance over each object's pixels, classified by nearest
        // signature, must beat chance comfortably.
        let mut correct = 0usize;
        let mut total = 0usize;
        for label in &scene.labels {
            let mut mean = [0.0f64; 3];
            let mut count = 0usize;
            for idx in raster.valid_pixels() {
                let pi = raster.point_index[idx].unwrap() as usize;
                if scene.points[pi].object_id == Some(label.id) {
                    for (m, c) in mean.iter_mut().zip(0..3) {
                        *m += app.at(idx, c);
                    }
                    count += 1;
                }
            }
            if count == 0 {
                continue;
            }
            for m in &mut mean {
                *m /= count as f64;
            }
            // Cosine similarity: shading scales all channels together.
            let cosine = |sig: &[f64; 3]| {
                let dot: f64 = (0..3).map(|c| mean[c] * sig[c]).sum();
                let nm: f64 = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
                let ns: f64 = sig.iter().map(|s| s * s).sum::<f64>().sqrt();
                dot / (nm * ns)
            };
            let nearest = (0..NUM_CLASSES_BG)
                .max_by(|&a, &b| {
                    cosine(&CLASS_SIGNATURES[a]).total_cmp(&cosine(&CLASS_SIGNATURES[b]))
                })
                .unwrap();
            total += 1;
            if nearest == label.class.index() {
                correct += 1;
            }
        }
        assert!(total > 0);
        assert!(
            correct as f64 / total as f64 > 0.5,
            "appearance classifier accuracy {}/{}",
            correct,
            total
        );
    }

    #[test]
    fn every_scene_builds_a_target_grid() {
        for seed in 0..5 {
            let scene = generate_scene(&quick_cfg(seed)).unwrap();
            let cfg = &scene.config;
            let (raster, _) = crate::raster::build_depth_raster(
                &scene.points,
                &cfg.camera,
                cfg.raster_width,
                cfg.raster_height,
            );
            let labels = scene.linked_labels(TwoDSource::True);
            let corr = targets::correspondences_from_points(&scene.points);
            let grid =
                targets::build_target_grid(&raster, &scene.points, &labels, &corr, &cfg.camera);
            assert!(grid.is_ok(), "seed {seed}: {:?}", grid.err());
        }
    }
}
