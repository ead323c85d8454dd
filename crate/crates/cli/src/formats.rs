//! On-disk formats: JSON-lines scene and detection files, the binary raster
//! dump, the checkpoint blob, and CSV emitters. All formats are versioned;
//! readers reject unknown schemas and report line numbers on bad input.
//! Writers go through a temp-file-plus-rename so outputs appear atomically.

use anyhow::{anyhow, bail, Context, Result};
use rvdet_core::geom::{Box2D, Box3D, CameraModel, Point3};
use rvdet_core::head::HeadParams;
use rvdet_core::postproc::Detection;
use rvdet_core::raster::{DepthRaster, LidarPoint};
use rvdet_core::synth::{Scene, SceneConfig, SceneLabel};
use rvdet_core::targets::ObjectClass;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

pub const SCENE_SCHEMA: &str = "rvdet-scenes";
pub const SCENE_VERSION: u32 = 1;
pub const DETS_SCHEMA: &str = "rvdet-detections";
pub const DETS_VERSION: u32 = 1;
pub const RASTER_MAGIC: &[u8; 4] = b"RVRD";
pub const RASTER_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp_path, bytes)
        .with_context(|| format!("writing {}", tmp_path.display()))?;
    std::fs::rename(&tmp_path, path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Scene JSON-lines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct CameraRec {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl From<&CameraModel> for CameraRec {
    fn from(c: &CameraModel) -> Self {
        CameraRec {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

impl CameraRec {
    fn to_core(&self) -> CameraModel {
        CameraModel::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct SceneConfigRec {
    seed: u64,
    vehicles: usize,
    vrus: usize,
    construction: usize,
    range_min: f64,
    range_max: f64,
    camera: CameraRec,
    raster_width: u32,
    raster_height: u32,
    lidar_az_res: f64,
    lidar_el_res: f64,
    lidar_el_min: f64,
    lidar_el_max: f64,
    lidar_max_range: f64,
    range_noise_sigma: f64,
    appearance_noise_sigma: f64,
    camera_height: f64,
    corner_cut: f64,
}

impl From<&SceneConfig> for SceneConfigRec {
    fn from(c: &SceneConfig) -> Self {
        SceneConfigRec {
            seed: c.seed,
            vehicles: c.n_vehicles,
            vrus: c.n_vrus,
            construction: c.n_construction,
            range_min: c.range_min,
            range_max: c.range_max,
            camera: (&c.camera).into(),
            raster_width: c.raster_width,
            raster_height: c.raster_height,
            lidar_az_res: c.lidar_az_res,
            lidar_el_res: c.lidar_el_res,
            lidar_el_min: c.lidar_el_min,
            lidar_el_max: c.lidar_el_max,
            lidar_max_range: c.lidar_max_range,
            range_noise_sigma: c.range_noise_sigma,
            appearance_noise_sigma: c.appearance_noise_sigma,
            camera_height: c.camera_height,
            corner_cut: c.corner_cut,
        }
    }
}

impl SceneConfigRec {
    fn to_core(&self) -> SceneConfig {
        SceneConfig {
            seed: self.seed,
            n_vehicles: self.vehicles,
            n_vrus: self.vrus,
            n_construction: self.construction,
            range_min: self.range_min,
            range_max: self.range_max,
            camera: self.camera.to_core(),
            raster_width: self.raster_width,
            raster_height: self.raster_height,
            lidar_az_res: self.lidar_az_res,
            lidar_el_res: self.lidar_el_res,
            lidar_el_min: self.lidar_el_min,
            lidar_el_max: self.lidar_el_max,
            lidar_max_range: self.lidar_max_range,
            range_noise_sigma: self.range_noise_sigma,
            appearance_noise_sigma: self.appearance_noise_sigma,
            camera_height: self.camera_height,
            corner_cut: self.corner_cut,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Box2DRec {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl From<&Box2D> for Box2DRec {
    fn from(b: &Box2D) -> Self {
        Box2DRec {
            cx: b.cx,
            cy: b.cy,
            w: b.w,
            h: b.h,
        }
    }
}

impl Box2DRec {
    fn to_core(&self) -> Box2D {
        Box2D::new(self.cx, self.cy, self.w, self.h)
    }
}

/// One line of a scene file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "record", rename_all = "snake_case")]
enum SceneRecord {
    Header {
        schema: String,
        version: u32,
        config: SceneConfigRec,
        n_labels: usize,
        n_points: usize,
    },
    Label {
        id: u32,
        class: String,
        x: f64,
        y: f64,
        z: f64,
        w: f64,
        l: f64,
        h: f64,
        phi: f64,
        box2d_true: Box2DRec,
        box2d_proj: Box2DRec,
    },
    Point {
        x: f64,
        y: f64,
        z: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        object_id: Option<u32>,
    },
}

/// Serialize scenes as JSON lines: one header per scene, then its labels
/// and points.
pub fn scenes_to_jsonl(scenes: &[Scene]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for scene in scenes {
        let header = SceneRecord::Header {
            schema: SCENE_SCHEMA.to_string(),
            version: SCENE_VERSION,
            config: (&scene.config).into(),
            n_labels: scene.labels.len(),
            n_points: scene.points.len(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.push(b'\n');
        for label in &scene.labels {
            let rec = SceneRecord::Label {
                id: label.id,
                class: label.class.as_str().to_string(),
                x: label.box3d.centroid.x,
                y: label.box3d.centroid.y,
                z: label.box3d.centroid.z,
                w: label.box3d.w,
                l: label.box3d.l,
                h: label.box3d.h,
                phi: label.box3d.phi,
                box2d_true: (&label.box2d_true).into(),
                box2d_proj: (&label.box2d_proj).into(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
        for point in &scene.points {
            let rec = SceneRecord::Point {
                x: point.position.x,
                y: point.position.y,
                z: point.position.z,
                object_id: point.object_id,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn write_scenes(path: &Path, scenes: &[Scene]) -> Result<()> {
    write_atomic(path, &scenes_to_jsonl(scenes)?)
}

/// Read a scene file, validating the schema and reporting line numbers.
pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut scenes: Vec<Scene> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SceneRecord = serde_json::from_str(&line)
            .map_err(|e| anyhow!("{}:{}: {e}", path.display(), lineno + 1))?;
        match rec {
            SceneRecord::Header {
                schema,
                version,
                config,
                ..
            } => {
                if schema != SCENE_SCHEMA {
                    bail!(
                        "{}:{}: unexpected schema `{schema}` (want {SCENE_SCHEMA})",
                        path.display(),
                        lineno + 1
                    );
                }
                if version != SCENE_VERSION {
                    bail!(
                        "{}:{}: unsupported version {version}",
                        path.display(),
                        lineno + 1
                    );
                }
                scenes.push(Scene {
                    config: config.to_core(),
                    labels: Vec::new(),
                    points: Vec::new(),
                });
            }
            SceneRecord::Label {
                id,
                class,
                x,
                y,
                z,
                w,
                l,
                h,
                phi,
                box2d_true,
                box2d_proj,
            } => {
                let scene = scenes.last_mut().ok_or_else(|| {
                    anyhow!("{}:{}: label before header", path.display(), lineno + 1)
                })?;
                let class = ObjectClass::parse(&class).ok_or_else(|| {
                    anyhow!("{}:{}: unknown class `{class}`", path.display(), lineno + 1)
                })?;
                scene.labels.push(SceneLabel {
                    id,
                    class,
                    box3d: Box3D::new(Point3::new(x, y, z), w, l, h, phi),
                    box2d_true: box2d_true.to_core(),
                    box2d_proj: box2d_proj.to_core(),
                });
            }
            SceneRecord::Point { x, y, z, object_id } => {
                let scene = scenes.last_mut().ok_or_else(|| {
                    anyhow!("{}:{}: point before header", path.display(), lineno + 1)
                })?;
                scene.points.push(LidarPoint {
                    position: Point3::new(x, y, z),
                    object_id,
                });
            }
        }
    }
    if scenes.is_empty() {
        bail!("{}: no scenes found", path.display());
    }
    Ok(scenes)
}

// ---------------------------------------------------------------------------
// Detections JSON-lines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "record", rename_all = "snake_case")]
enum DetRecord {
    Header {
        schema: String,
        version: u32,
    },
    Detection {
        scene: usize,
        anchor_point_id: u32,
        class: String,
        score: f64,
        box2d: Box2DRec,
        x: f64,
        y: f64,
        z: f64,
        w: f64,
        l: f64,
        h: f64,
        phi: f64,
    },
}

/// Serialize per-scene detections.
pub fn detections_to_jsonl(per_scene: &[Vec<Detection>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    serde_json::to_writer(
        &mut out,
        &DetRecord::Header {
            schema: DETS_SCHEMA.to_string(),
            version: DETS_VERSION,
        },
    )?;
    out.push(b'\n');
    for (scene, dets) in per_scene.iter().enumerate() {
        for d in dets {
            let rec = DetRecord::Detection {
                scene,
                anchor_point_id: d.anchor_point_id,
                class: d.class.as_str().to_string(),
                score: d.score,
                box2d: (&d.box2d).into(),
                x: d.box3d.centroid.x,
                y: d.box3d.centroid.y,
                z: d.box3d.centroid.z,
                w: d.box3d.w,
                l: d.box3d.l,
                h: d.box3d.h,
                phi: d.box3d.phi,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn write_detections(path: &Path, per_scene: &[Vec<Detection>]) -> Result<()> {
    write_atomic(path, &detections_to_jsonl(per_scene)?)
}

/// Read detections grouped by scene index; `n_scenes` sizes the result.
pub fn read_detections(path: &Path, n_scenes: usize) -> Result<Vec<Vec<Detection>>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut out = vec![Vec::new(); n_scenes];
    let mut saw_header = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetRecord = serde_json::from_str(&line)
            .map_err(|e| anyhow!("{}:{}: {e}", path.display(), lineno + 1))?;
        match rec {
            DetRecord::Header { schema, version } => {
                if schema != DETS_SCHEMA || version != DETS_VERSION {
                    bail!(
                        "{}:{}: unsupported detections schema {schema} v{version}",
                        path.display(),
                        lineno + 1
                    );
                }
                saw_header = true;
            }
            DetRecord::Detection {
                scene,
                anchor_point_id,
                class,
                score,
                box2d,
                x,
                y,
                z,
                w,
                l,
                h,
                phi,
            } => {
                if !saw_header {
                    bail!("{}:{}: detection before header", path.display(), lineno + 1);
                }
                if scene >= n_scenes {
                    bail!(
                        "{}:{}: scene index {scene} out of range ({n_scenes} scenes)",
                        path.display(),
                        lineno + 1
                    );
                }
                let class = ObjectClass::parse(&class).ok_or_else(|| {
                    anyhow!("{}:{}: unknown class `{class}`", path.display(), lineno + 1)
                })?;
                out[scene].push(Detection {
                    anchor_point_id,
                    class,
                    score,
                    box2d: box2d.to_core(),
                    box3d: Box3D::new(Point3::new(x, y, z), w, l, h, phi),
                });
            }
        }
    }
    if !saw_header {
        bail!("{}: missing detections header", path.display());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Binary raster dump
// ---------------------------------------------------------------------------

/// Raster dump: magic, version, width, height, then the row-major 32-bit
/// float range channel and the byte sentinel channel, all little-endian.
pub fn raster_to_bytes(raster: &DepthRaster) -> Vec<u8> {
    let n = raster.range_ch.len();
    let mut out = Vec::with_capacity(16 + 5 * n);
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&RASTER_VERSION.to_le_bytes());
    out.extend_from_slice(&raster.width.to_le_bytes());
    out.extend_from_slice(&raster.height.to_le_bytes());
    for &r in &raster.range_ch {
        out.extend_from_slice(&(r as f32).to_le_bytes());
    }
    out.extend_from_slice(&raster.sentinel_ch);
    out
}

pub fn write_raster(path: &Path, raster: &DepthRaster) -> Result<()> {
    write_atomic(path, &raster_to_bytes(raster))
}

/// Parse a raster dump. Back-pointers are not part of the format; the
/// sentinel pixels get placeholder indices so channel consistency holds.
pub fn read_raster(path: &Path) -> Result<DepthRaster> {
    let mut file =
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != RASTER_MAGIC {
        bail!("{}: not a raster dump", path.display());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != RASTER_VERSION {
        bail!("{}: unsupported raster version {version}", path.display());
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let n = width as usize * height as usize;
    let want = 16 + 5 * n;
    if bytes.len() != want {
        bail!(
            "{}: truncated raster dump ({} bytes, want {want})",
            path.display(),
            bytes.len()
        );
    }
    let mut raster = DepthRaster::empty(width, height);
    for i in 0..n {
        let off = 16 + 4 * i;
        let r = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        raster.range_ch[i] = r;
    }
    let sent_off = 16 + 4 * n;
    let mut count = 0u32;
    for i in 0..n {
        let s = bytes[sent_off + i];
        if s > 1 {
            bail!("{}: sentinel byte {s} at pixel {i}", path.display());
        }
        raster.sentinel_ch[i] = s;
        if s == 1 {
            raster.point_index[i] = Some(count);
            count += 1;
        }
    }
    if !raster.channels_consistent() {
        bail!("{}: inconsistent raster channels", path.display());
    }
    Ok(raster)
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

/// Checkpoint: magic, version, the three layer dimensions, then every
/// parameter as little-endian f32 in (w1, b1, w2, b2) order.
pub fn checkpoint_to_bytes(params: &HeadParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * params.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(params.hidden_dim as u32).to_le_bytes());
    out.extend_from_slice(&(params.output_dim as u32).to_le_bytes());
    for &p in params.iter() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn write_checkpoint(path: &Path, params: &HeadParams) -> Result<()> {
    write_atomic(path, &checkpoint_to_bytes(params))
}

pub fn read_checkpoint(path: &Path) -> Result<HeadParams> {
    let bytes = std::fs::read(path).with_context(|| format!("opening {}", path.display()))?;
    if bytes.len() < 20 || &bytes[..4] != CHECKPOINT_MAGIC {
        bail!("{}: not a checkpoint", path.display());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        bail!("{}: unsupported checkpoint version {version}", path.display());
    }
    let input_dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let hidden_dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let output_dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let mut params = HeadParams::zeros(input_dim, hidden_dim, output_dim);
    let n = params.n_params();
    if bytes.len() != 20 + 4 * n {
        bail!(
            "{}: truncated checkpoint ({} bytes, want {})",
            path.display(),
            bytes.len(),
            20 + 4 * n
        );
    }
    for (i, p) in params.iter_mut().enumerate() {
        let off = 20 + 4 * i;
        *p = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    }
    Ok(params)
}

// ---------------------------------------------------------------------------
// CSV emitters
// ---------------------------------------------------------------------------

/// Metrics CSV: class,bucket_min,bucket_max,metric,value. Buckets without
/// labels are omitted rather than written as zero.
pub fn metrics_to_csv(rows: &[(String, rvdet_core::eval::BucketMetric)]) -> String {
    let mut s = String::from("class,bucket_min,bucket_max,metric,value\n");
    for (metric, m) in rows {
        if let Some(v) = m.value {
            s.push_str(&format!(
                "{},{},{},{},{v:.6}\n",
                m.class.as_str(),
                m.bucket_min,
                m.bucket_max,
                metric
            ));
        }
    }
    s
}

/// Loss curve CSV.
pub fn losses_to_csv(history: &[rvdet_core::head::EpochLoss]) -> String {
    let mut s = String::from("epoch,class,l2d,l3d,total\n");
    for e in history {
        s.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{:.9}\n",
            e.epoch, e.class, e.l2d, e.l3d, e.total
        ));
    }
    s
}
