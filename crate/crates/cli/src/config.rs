//! Flat key=value configuration files and the merged run configuration.
//!
//! Every tunable of the pipeline lives in one [`RunConfig`] with embedded
//! defaults; a config file overrides individual keys and `--dump-config`
//! prints the effective values in the same format.

use anyhow::{anyhow, bail, Result};
use rvdet_core::geom::CameraModel;
use rvdet_core::head::{FeatureConfig, OptimConfig};
use rvdet_core::loss::LossConfig;
use rvdet_core::postproc::PostprocConfig;
use rvdet_core::synth::SceneConfig;
use std::fmt::Write as _;
use std::path::Path;

/// Everything the commands need, with defaults matching the core crate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub features: FeatureConfig,
    pub postproc: PostprocConfig,
    pub eval: EvalSettings,
    pub hidden_dim: usize,
    /// Point dropout probability applied in training and standard
    /// inference; resolution transfer disables it.
    pub dropout_p: f64,
}

/// Eval thresholds plus bucket list (kept separate from the core config so
/// the bucket syntax stays a CLI concern).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub bev_iou: f64,
    pub iou_2d: f64,
    pub max_range_err: f64,
    pub buckets: Vec<(f64, f64)>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let d = rvdet_core::eval::EvalConfig::default();
        EvalSettings {
            bev_iou: d.bev_iou,
            iou_2d: d.iou_2d,
            max_range_err: d.max_range_err,
            buckets: d.buckets,
        }
    }
}

impl EvalSettings {
    pub fn to_core(&self) -> rvdet_core::eval::EvalConfig {
        rvdet_core::eval::EvalConfig {
            bev_iou: self.bev_iou,
            iou_2d: self.iou_2d,
            max_range_err: self.max_range_err,
            buckets: self.buckets.clone(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneConfig::default(),
            loss: LossConfig::default(),
            optim: OptimConfig::default(),
            features: FeatureConfig::default(),
            postproc: PostprocConfig::default(),
            eval: EvalSettings::default(),
            hidden_dim: 48,
            dropout_p: 0.5,
        }
    }
}

fn parse_buckets(v: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for part in v.split(',') {
        let (lo, hi) = part
            .split_once('-')
            .ok_or_else(|| anyhow!("bucket `{part}` is not of the form lo-hi"))?;
        out.push((lo.trim().parse()?, hi.trim().parse()?));
    }
    Ok(out)
}

fn format_buckets(buckets: &[(f64, f64)]) -> String {
    buckets
        .iter()
        .map(|(lo, hi)| format!("{lo}-{hi}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Apply one key=value override.
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let fv = || -> Result<f64> { Ok(value.parse::<f64>()?) };
        let uv = || -> Result<usize> { Ok(value.parse::<usize>()?) };
        let bv = || -> Result<bool> { Ok(value.parse::<bool>()?) };
        match key {
            "scene.seed" => self.scene.seed = value.parse()?,
            "scene.vehicles" => self.scene.n_vehicles = uv()?,
            "scene.vrus" => self.scene.n_vrus = uv()?,
            "scene.construction" => self.scene.n_construction = uv()?,
            "scene.range_min" => self.scene.range_min = fv()?,
            "scene.range_max" => self.scene.range_max = fv()?,
            "scene.image_width" | "scene.image_height" | "scene.hfov_deg" => {
                let mut width = self.scene.camera.width;
                let mut height = self.scene.camera.height;
                let mut hfov = self.scene.camera.horizontal_fov().to_degrees();
                match key {
                    "scene.image_width" => width = value.parse()?,
                    "scene.image_height" => height = value.parse()?,
                    _ => hfov = fv()?,
                }
                self.scene.camera = CameraModel::with_hfov(width, height, hfov.to_radians());
            }
            "scene.raster_width" => self.scene.raster_width = value.parse()?,
            "scene.raster_height" => self.scene.raster_height = value.parse()?,
            "scene.lidar_az_res" => self.scene.lidar_az_res = fv()?,
            "scene.lidar_el_res" => self.scene.lidar_el_res = fv()?,
            "scene.lidar_el_min" => self.scene.lidar_el_min = fv()?,
            "scene.lidar_el_max" => self.scene.lidar_el_max = fv()?,
            "scene.lidar_max_range" => self.scene.lidar_max_range = fv()?,
            "scene.range_noise_sigma" => self.scene.range_noise_sigma = fv()?,
            "scene.appearance_noise_sigma" => self.scene.appearance_noise_sigma = fv()?,
            "scene.camera_height" => self.scene.camera_height = fv()?,
            "scene.corner_cut" => self.scene.corner_cut = fv()?,
            "loss.focal_alpha" => self.loss.focal_alpha = fv()?,
            "loss.focal_gamma" => self.loss.focal_gamma = fv()?,
            "loss.b_min" => self.loss.b_min = fv()?,
            "loss.dd_uncertainty" => self.loss.dd_uncertainty = bv()?,
            "optim.lr" => self.optim.lr = fv()?,
            "optim.beta1" => self.optim.beta1 = fv()?,
            "optim.beta2" => self.optim.beta2 = fv()?,
            "optim.eps" => self.optim.eps = fv()?,
            "optim.lr_decay" => self.optim.lr_decay = fv()?,
            "optim.decay_every" => self.optim.decay_every = uv()?,
            "optim.epochs" => self.optim.epochs = uv()?,
            "head.hidden_dim" => self.hidden_dim = uv()?,
            "features.patch" => self.features.patch = uv()?,
            "features.range_norm" => self.features.range_norm = fv()?,
            "features.rel_depth_gain" => self.features.rel_depth_gain = fv()?,
            "features.rel_depth_clamp" => self.features.rel_depth_clamp = fv()?,
            "postproc.score_threshold" => self.postproc.score_threshold = fv()?,
            "postproc.nms_iou_2d" => self.postproc.nms_iou_2d = fv()?,
            "postproc.nms_iou_bev" => self.postproc.nms_iou_bev = fv()?,
            "eval.bev_iou" => self.eval.bev_iou = fv()?,
            "eval.iou_2d" => self.eval.iou_2d = fv()?,
            "eval.max_range_err" => self.eval.max_range_err = fv()?,
            "eval.buckets" => self.eval.buckets = parse_buckets(value)?,
            "infer.dropout_p" => self.dropout_p = fv()?,
            _ => bail!("unknown key `{key}`"),
        }
        Ok(())
    }

    /// Parse a flat key=value file over the defaults. Errors carry the file
    /// name and line number.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("{}:{}: expected key = value", path.display(), lineno + 1)
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| anyhow!("{}:{}: {e}", path.display(), lineno + 1))?;
        }
        if !cfg.scene.is_valid() {
            bail!("{}: scene configuration is invalid", path.display());
        }
        Ok(cfg)
    }

    /// Serialize the effective configuration in config-file syntax.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let cam = &self.scene.camera;
        let kv: Vec<(&str, String)> = vec![
            ("scene.seed", self.scene.seed.to_string()),
            ("scene.vehicles", self.scene.n_vehicles.to_string()),
            ("scene.vrus", self.scene.n_vrus.to_string()),
            ("scene.construction", self.scene.n_construction.to_string()),
            ("scene.range_min", self.scene.range_min.to_string()),
            ("scene.range_max", self.scene.range_max.to_string()),
            ("scene.image_width", cam.width.to_string()),
            ("scene.image_height", cam.height.to_string()),
            (
                "scene.hfov_deg",
                format!("{:.3}", cam.horizontal_fov().to_degrees()),
            ),
            ("scene.raster_width", self.scene.raster_width.to_string()),
            ("scene.raster_height", self.scene.raster_height.to_string()),
            ("scene.lidar_az_res", self.scene.lidar_az_res.to_string()),
            ("scene.lidar_el_res", self.scene.lidar_el_res.to_string()),
            ("scene.lidar_el_min", self.scene.lidar_el_min.to_string()),
            ("scene.lidar_el_max", self.scene.lidar_el_max.to_string()),
            ("scene.lidar_max_range", self.scene.lidar_max_range.to_string()),
            (
                "scene.range_noise_sigma",
                self.scene.range_noise_sigma.to_string(),
            ),
            (
                "scene.appearance_noise_sigma",
                self.scene.appearance_noise_sigma.to_string(),
            ),
            ("scene.camera_height", self.scene.camera_height.to_string()),
            ("scene.corner_cut", self.scene.corner_cut.to_string()),
            ("loss.focal_alpha", self.loss.focal_alpha.to_string()),
            ("loss.focal_gamma", self.loss.focal_gamma.to_string()),
            ("loss.b_min", self.loss.b_min.to_string()),
            ("loss.dd_uncertainty", self.loss.dd_uncertainty.to_string()),
            ("optim.lr", self.optim.lr.to_string()),
            ("optim.beta1", self.optim.beta1.to_string()),
            ("optim.beta2", self.optim.beta2.to_string()),
            ("optim.eps", self.optim.eps.to_string()),
            ("optim.lr_decay", self.optim.lr_decay.to_string()),
            ("optim.decay_every", self.optim.decay_every.to_string()),
            ("optim.epochs", self.optim.epochs.to_string()),
            ("head.hidden_dim", self.hidden_dim.to_string()),
            ("features.patch", self.features.patch.to_string()),
            ("features.range_norm", self.features.range_norm.to_string()),
            (
                "features.rel_depth_gain",
                self.features.rel_depth_gain.to_string(),
            ),
            (
                "features.rel_depth_clamp",
                self.features.rel_depth_clamp.to_string(),
            ),
            (
                "postproc.score_threshold",
                self.postproc.score_threshold.to_string(),
            ),
            ("postproc.nms_iou_2d", self.postproc.nms_iou_2d.to_string()),
            ("postproc.nms_iou_bev", self.postproc.nms_iou_bev.to_string()),
            ("eval.bev_iou", self.eval.bev_iou.to_string()),
            ("eval.iou_2d", self.eval.iou_2d.to_string()),
            ("eval.max_range_err", self.eval.max_range_err.to_string()),
            ("eval.buckets", format_buckets(&self.eval.buckets)),
            ("infer.dropout_p", self.dropout_p.to_string()),
        ];
        for (k, v) in kv {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Directory resolution: relative paths are joined onto `RVDET_DATA_DIR`
/// when the variable is set.
pub fn resolve_path(path: &Path) -> std::path::PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("RVDET_DATA_DIR") {
        Some(dir) if !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// A dumped config parses back to itself (camera compared loosely since it
/// is reconstructed from the FOV).
#[cfg(test)]
fn roundtrips(cfg: &RunConfig) -> Result<bool> {
    let dumped = cfg.dump();
    let mut parsed = RunConfig::default();
    for (lineno, raw) in dumped.lines().enumerate() {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: bad dump", lineno + 1))?;
        parsed.set(key.trim(), value.trim())?;
    }
    // The camera is reconstructed from FOV with limited precision; compare
    // everything else exactly and the camera loosely.
    let cam_close = (parsed.scene.camera.fx - cfg.scene.camera.fx).abs() < 0.5;
    let mut parsed_fixed = parsed;
    parsed_fixed.scene.camera = cfg.scene.camera;
    Ok(cam_close && parsed_fixed == *cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_dump_and_reparse() {
        let cfg = RunConfig::default();
        assert!(roundtrips(&cfg).unwrap());
    }

    #[test]
    fn file_overrides_and_line_numbered_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment").unwrap();
        writeln!(f, "scene.vehicles = 9").unwrap();
        writeln!(f, "optim.lr = 0.005").unwrap();
        drop(f);
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.scene.n_vehicles, 9);
        assert_eq!(cfg.optim.lr, 0.005);

        let bad = dir.path().join("bad.cfg");
        std::fs::write(&bad, "scene.vehicles = 3\nnope = 1\n").unwrap();
        let err = RunConfig::from_file(&bad).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
        assert!(err.contains("unknown key"), "{err}");

        let malformed = dir.path().join("malformed.cfg");
        std::fs::write(&malformed, "scene.vehicles 3\n").unwrap();
        let err = RunConfig::from_file(&malformed).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }

    #[test]
    fn bucket_syntax() {
        let mut cfg = RunConfig::default();
        cfg.set("eval.buckets", "100-250,250-500").unwrap();
        assert_eq!(cfg.eval.buckets, vec![(100.0, 250.0), (250.0, 500.0)]);
        assert!(cfg.set("eval.buckets", "100..200").is_err());
    }
}
