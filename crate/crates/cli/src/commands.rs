//! Implementations behind the CLI subcommands. Each returns the paths it
//! wrote so tests can call them directly.

use crate::bench;
use crate::config::RunConfig;
use crate::formats;
use crate::pipeline;
use anyhow::{anyhow, Context, Result};
use rvdet_core::eval::{self, Frame};
use rvdet_core::head::Supervision;
use rvdet_core::postproc::NmsMode;
use rvdet_core::rng::Rng;
use rvdet_core::synth::{self, Scene, TwoDSource};
use rvdet_core::targets;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Generate `count` scenes; scene seeds derive deterministically from the
/// command seed.
pub fn generate(rc: &RunConfig, count: usize, seed: u64, out: &Path) -> Result<usize> {
    let mut scenes = Vec::with_capacity(count);
    for i in 0..count {
        let scene_seed = Rng::derive(seed, i as u64).next_u64();
        let cfg = synth::SceneConfig {
            seed: scene_seed,
            ..rc.scene
        };
        scenes.push(synth::generate_scene(&cfg).map_err(|e| anyhow!("scene {i}: {e}"))?);
    }
    formats::write_scenes(out, &scenes)?;
    Ok(scenes.len())
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TargetRecord<'a> {
    Header {
        schema: &'a str,
        version: u32,
        scene: usize,
        width: u32,
        height: u32,
        foreground: usize,
        background: usize,
    },
    Pixel {
        raster_idx: usize,
        point_index: u32,
        class: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        label_id: Option<u32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        t2d: Option<[f64; 4]>,
        #[serde(skip_serializing_if = "Option::is_none")]
        t3d: Option<[f64; 8]>,
    },
}

/// Encode scenes into target grids: binary raster dumps, a target JSONL per
/// scene, and one human-readable per-pixel report.
pub fn encode(rc: &RunConfig, scenes_path: &Path, out_dir: &Path) -> Result<PathBuf> {
    let scenes = formats::read_scenes(scenes_path)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut report = String::new();
    for (i, scene) in scenes.iter().enumerate() {
        let prepared = pipeline::prepare_scene(scene, rc, pipeline::Conditioning::Plain)?;
        let labels = scene.linked_labels(TwoDSource::True);
        let corr = targets::correspondences_from_points(&prepared.points);
        let grid = targets::build_target_grid(
            &prepared.raster,
            &prepared.points,
            &labels,
            &corr,
            &prepared.cam,
        )
        .map_err(|e| anyhow!("scene {i}: {e}"))?;

        formats::write_raster(&out_dir.join(format!("scene_{i:04}.rvrd")), &prepared.raster)?;

        let mut jsonl = Vec::new();
        let fg = grid.foreground_count();
        let header = TargetRecord::Header {
            schema: "rvdet-targets",
            version: 1,
            scene: i,
            width: grid.width,
            height: grid.height,
            foreground: fg,
            background: grid.pixels.len() - fg,
        };
        serde_json::to_writer(&mut jsonl, &header)?;
        jsonl.push(b'\n');
        for px in &grid.pixels {
            let class = rvdet_core::targets::ObjectClass::from_index(px.class_index)
                .map(|c| c.as_str())
                .unwrap_or("background");
            let rec = TargetRecord::Pixel {
                raster_idx: px.raster_idx,
                point_index: px.point_index,
                class,
                label_id: px.foreground.as_ref().map(|f| f.label_id),
                t2d: px
                    .foreground
                    .as_ref()
                    .map(|f| [f.t2d.dx, f.t2d.dy, f.t2d.w, f.t2d.h]),
                t3d: px.foreground.as_ref().map(|f| {
                    [
                        f.t3d.dx, f.t3d.dy, f.t3d.dd, f.t3d.cos_t, f.t3d.sin_t, f.t3d.w, f.t3d.l,
                        f.t3d.h,
                    ]
                }),
            };
            serde_json::to_writer(&mut jsonl, &rec)?;
            jsonl.push(b'\n');
        }
        formats::write_atomic(&out_dir.join(format!("scene_{i:04}.targets.jsonl")), &jsonl)?;

        let _ = writeln!(
            report,
            "scene {i}: {} labels, {} points, {} valid pixels ({} foreground)",
            scene.labels.len(),
            scene.points.len(),
            grid.pixels.len(),
            fg
        );
        for px in &grid.pixels {
            let x = px.raster_idx % grid.width as usize;
            let y = px.raster_idx / grid.width as usize;
            let range = prepared.raster.range_ch[px.raster_idx];
            match &px.foreground {
                Some(f) => {
                    let _ = writeln!(
                        report,
                        "  px({x:4},{y:3}) r={range:8.2}m label {:3} {:12} d2d=({:+7.2},{:+6.2}) wh=({:6.2},{:5.2}) d3d=({:+7.2},{:+6.2}) dd={:+6.3} theta=({:+.3},{:+.3}) wlh=({:.2},{:.2},{:.2})",
                        f.label_id,
                        rvdet_core::targets::ObjectClass::from_index(px.class_index).unwrap().as_str(),
                        f.t2d.dx, f.t2d.dy, f.t2d.w, f.t2d.h,
                        f.t3d.dx, f.t3d.dy, f.t3d.dd, f.t3d.cos_t, f.t3d.sin_t,
                        f.t3d.w, f.t3d.l, f.t3d.h,
                    );
                }
                None => {
                    let _ = writeln!(report, "  px({x:4},{y:3}) r={range:8.2}m background");
                }
            }
        }
    }
    let report_path = out_dir.join("report.txt");
    formats::write_atomic(&report_path, report.as_bytes())?;
    Ok(report_path)
}

/// Train a head; writes the checkpoint and a loss-curve CSV next to it.
pub fn train(
    rc: &RunConfig,
    scenes_path: &Path,
    supervision: Supervision,
    seed: u64,
    out_ckpt: &Path,
    out_losses: Option<&Path>,
) -> Result<()> {
    let scenes = formats::read_scenes(scenes_path)?;
    let (params, history) = pipeline::train_on_scenes(&scenes, rc, supervision, seed)?;
    formats::write_checkpoint(out_ckpt, &params)?;
    let losses_path = match out_losses {
        Some(p) => p.to_path_buf(),
        None => out_ckpt.with_extension("losses.csv"),
    };
    formats::write_atomic(&losses_path, formats::losses_to_csv(&history).as_bytes())?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        eprintln!(
            "trained {} epochs on {} scenes: total loss {:.4} -> {:.4}",
            history.len(),
            scenes.len(),
            first.total,
            last.total
        );
    }
    Ok(())
}

/// Run inference over a scene file.
pub fn infer(
    rc: &RunConfig,
    scenes_path: &Path,
    ckpt_path: &Path,
    nms: NmsMode,
    transfer: bool,
    seed: u64,
    out: &Path,
) -> Result<usize> {
    let scenes = formats::read_scenes(scenes_path)?;
    let params = formats::read_checkpoint(ckpt_path)?;
    let mut per_scene = Vec::with_capacity(scenes.len());
    let mut total = 0;
    for (i, scene) in scenes.iter().enumerate() {
        let result = pipeline::infer_scene(
            &params,
            scene,
            rc,
            nms,
            transfer,
            Rng::derive(seed, i as u64).next_u64(),
        )?;
        total += result.detections.len();
        per_scene.push(result.detections);
    }
    formats::write_detections(out, &per_scene)?;
    Ok(total)
}

/// Frames for evaluation: detections joined with scene labels.
pub fn frames_from(scenes: &[Scene], per_scene: &[Vec<rvdet_core::postproc::Detection>]) -> Vec<Frame> {
    scenes
        .iter()
        .zip(per_scene)
        .map(|(scene, dets)| Frame {
            detections: dets.clone(),
            labels: scene.linked_labels(TwoDSource::True),
        })
        .collect()
}

/// Evaluate detections against scene labels; writes the metrics CSV.
pub fn evaluate(rc: &RunConfig, dets_path: &Path, scenes_path: &Path, out: &Path) -> Result<String> {
    let scenes = formats::read_scenes(scenes_path)?;
    let per_scene = formats::read_detections(dets_path, scenes.len())?;
    let frames = frames_from(&scenes, &per_scene);
    let cfg = rc.eval.to_core();
    let mut rows = Vec::new();
    for m in eval::bev_ap(&frames, &cfg) {
        rows.push(("bev_ap".to_string(), m));
    }
    for m in eval::max_f1_25d(&frames, &cfg) {
        rows.push(("max_f1_25d".to_string(), m));
    }
    let csv = formats::metrics_to_csv(&rows);
    formats::write_atomic(out, csv.as_bytes())?;
    Ok(csv)
}

/// One ablation row: a supervision mode paired with an NMS configuration.
pub const ABLATION_ROWS: [(Supervision, NmsMode); 6] = [
    (Supervision::ThreeDOnly, NmsMode::Bev),
    (Supervision::ThreeDProj2D, NmsMode::Both),
    (Supervision::ThreeD2D, NmsMode::Both),
    (Supervision::ThreeD2D, NmsMode::Bev),
    (Supervision::ThreeD2D, NmsMode::TwoD),
    (Supervision::ThreeD2D, NmsMode::Both),
];

/// Ablation result with per-bucket and pooled metrics.
pub struct AblationCell {
    pub supervision: Supervision,
    pub nms: NmsMode,
    pub metrics: Vec<(String, eval::BucketMetric)>,
    /// Pooled vehicle BEV AP across all buckets.
    pub pooled_vehicle_ap: Option<f64>,
}

/// Train once per supervision mode, then evaluate the supervision x NMS
/// grid on held-out scenes.
pub fn ablation_cells(
    rc: &RunConfig,
    train_scenes: &[Scene],
    eval_scenes: &[Scene],
    seed: u64,
) -> Result<Vec<AblationCell>> {
    let mut checkpoints: Vec<(Supervision, rvdet_core::head::HeadParams)> = Vec::new();
    for sup in [
        Supervision::ThreeDOnly,
        Supervision::ThreeDProj2D,
        Supervision::ThreeD2D,
    ] {
        eprintln!("ablate: training supervision={}", sup.as_str());
        let (params, _) = pipeline::train_on_scenes(train_scenes, rc, sup, seed)?;
        checkpoints.push((sup, params));
    }
    let eval_cfg = rc.eval.to_core();
    let pooled_cfg = eval_cfg.pooled();
    let mut cells = Vec::new();
    for (sup, nms) in ABLATION_ROWS {
        let params = &checkpoints
            .iter()
            .find(|(s, _)| *s == sup)
            .expect("checkpoint trained")
            .1;
        let mut per_scene = Vec::with_capacity(eval_scenes.len());
        for (i, scene) in eval_scenes.iter().enumerate() {
            let result = pipeline::infer_scene(
                params,
                scene,
                rc,
                nms,
                false,
                Rng::derive(seed ^ 0xe7a1, i as u64).next_u64(),
            )?;
            per_scene.push(result.detections);
        }
        let frames = frames_from(eval_scenes, &per_scene);
        let mut metrics = Vec::new();
        for m in eval::bev_ap(&frames, &eval_cfg) {
            metrics.push(("bev_ap".to_string(), m));
        }
        for m in eval::max_f1_25d(&frames, &eval_cfg) {
            metrics.push(("max_f1_25d".to_string(), m));
        }
        let pooled = eval::bev_ap(&frames, &pooled_cfg);
        let pooled_vehicle_ap = pooled
            .iter()
            .find(|m| m.class == rvdet_core::targets::ObjectClass::Vehicle)
            .and_then(|m| m.value);
        for m in pooled {
            metrics.push(("bev_ap_pooled".to_string(), m));
        }
        cells.push(AblationCell {
            supervision: sup,
            nms,
            metrics,
            pooled_vehicle_ap,
        });
    }
    Ok(cells)
}

/// The `ablate` command: run the grid and emit one combined CSV.
pub fn ablate(
    rc: &RunConfig,
    train_path: &Path,
    eval_path: &Path,
    seed: u64,
    out: &Path,
) -> Result<String> {
    let train_scenes = formats::read_scenes(train_path)?;
    let eval_scenes = formats::read_scenes(eval_path)?;
    let cells = ablation_cells(rc, &train_scenes, &eval_scenes, seed)?;
    let mut csv = String::from("supervision,nms,class,bucket_min,bucket_max,metric,value\n");
    for cell in &cells {
        for (metric, m) in &cell.metrics {
            if let Some(v) = m.value {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{v:.6}\n",
                    cell.supervision.as_str(),
                    cell.nms.as_str(),
                    m.class.as_str(),
                    m.bucket_min,
                    m.bucket_max,
                    metric
                ));
            }
        }
    }
    formats::write_atomic(out, csv.as_bytes())?;
    Ok(csv)
}

/// The `bench` command.
pub fn bench_cmd(
    ranges: &[f64],
    reps: usize,
    seed: u64,
    out: &Path,
    gnuplot: Option<&Path>,
) -> Result<Vec<bench::BenchRow>> {
    let rows = bench::bench_range_scaling(ranges, reps, seed)?;
    formats::write_atomic(out, bench::rows_to_csv(&rows).as_bytes())?;
    if let Some(p) = gnuplot {
        formats::write_atomic(p, bench::rows_to_gnuplot(&rows).as_bytes())?;
    }
    Ok(rows)
}
