//! Runtime scaling benchmark: the range-view pipeline keeps a fixed raster
//! and a fixed ray budget no matter how far the scene reaches, while a
//! bird's-eye-view grid grows quadratically with range.
//!
//! The BEV side is a workload mock, not a detector: it allocates the grid a
//! BEV method would allocate for the same coverage (fixed 0.2 m cells over
//! a `2 r tan(FOV/2)` by `r` region) and does constant work per cell. The
//! point of the comparison is data-structure growth, nothing else.

use crate::config::RunConfig;
use crate::pipeline::{self, Conditioning};
use anyhow::Result;
use rvdet_core::postproc::NmsMode;
use rvdet_core::synth::{self, SceneConfig};
use std::time::Instant;

/// One benchmark row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub max_range: f64,
    pub rv_time_ms: f64,
    pub bev_time_ms: f64,
    pub bev_cells: u64,
    pub rv_detections: usize,
}

/// Cell counts of the mock BEV grid: width `2 r tan(FOV/2)`, depth `r`,
/// fixed 0.2 m cells.
pub fn bev_cell_counts(max_range: f64, hfov: f64) -> (u64, u64) {
    const CELL: f64 = 0.2;
    let width_m = 2.0 * max_range * (hfov / 2.0).tan();
    let nx = (width_m / CELL).ceil() as u64;
    let nz = (max_range / CELL).ceil() as u64;
    (nx, nz)
}

/// Allocate and sweep the BEV grid with constant per-cell work. Returns a
/// checksum so the sweep cannot be optimized away.
fn bev_mock_pass(nx: u64, nz: u64) -> f32 {
    let n = (nx * nz) as usize;
    let mut grid = vec![0.0f32; n];
    let mut acc = 0.0f32;
    for (i, cell) in grid.iter_mut().enumerate() {
        *cell = (i & 0xff) as f32 * 0.5 + 1.0;
        acc += (*cell * 1.25 + 2.0).sqrt();
    }
    acc
}

/// Scene density fixed per unit of covered area, so longer ranges hold
/// proportionally more objects (as a real scene would).
fn bench_scene_config(max_range: f64, seed: u64) -> SceneConfig {
    let base = SceneConfig::default();
    let hfov = base.camera.horizontal_fov();
    let area = hfov / 2.0 * max_range * max_range;
    let density = 4.6e-4; // objects per square meter of wedge
    let n = (area * density).ceil() as usize;
    SceneConfig {
        seed,
        n_vehicles: (n * 6).div_ceil(10).max(1),
        n_vrus: (n * 3).div_ceil(10),
        n_construction: n.div_ceil(10),
        range_min: 100.0_f64.min(max_range * 0.5),
        range_max: max_range,
        lidar_max_range: max_range.max(base.lidar_max_range),
        ..base
    }
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    samples[samples.len() / 2]
}

/// Measure the range-view pipeline and the BEV mock at each operating
/// range. Medians over `reps` runs after warmup; single-threaded; the
/// returned cell counts are exact.
pub fn bench_range_scaling(max_ranges: &[f64], reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    assert!(reps >= 1);
    assert!(
        max_ranges.windows(2).all(|w| w[0] < w[1]),
        "ranges must be ascending"
    );
    let rc = RunConfig::default();
    let mut rows = Vec::with_capacity(max_ranges.len());
    let mut sink = 0.0f32;
    for (i, &r) in max_ranges.iter().enumerate() {
        let scene_cfg = bench_scene_config(r, seed ^ i as u64);
        let scene = synth::generate_scene(&scene_cfg)?;
        let hfov = scene_cfg.camera.horizontal_fov();
        let (nx, nz) = bev_cell_counts(r, hfov);

        let rv_pass = || -> Result<usize> {
            let out = pipeline::oracle_pipeline(&scene, &rc, Conditioning::Plain, NmsMode::Both)?;
            Ok(out.detections.len())
        };

        // Warmup.
        let mut detections = 0;
        for _ in 0..3.min(reps) {
            detections = rv_pass()?;
            sink += bev_mock_pass(nx, nz);
        }
        let mut rv_times = Vec::with_capacity(reps);
        let mut bev_times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t0 = Instant::now();
            detections = rv_pass()?;
            rv_times.push(t0.elapsed().as_secs_f64() * 1e3);

            let t1 = Instant::now();
            sink += bev_mock_pass(nx, nz);
            bev_times.push(t1.elapsed().as_secs_f64() * 1e3);
        }
        rows.push(BenchRow {
            max_range: r,
            rv_time_ms: median(&mut rv_times),
            bev_time_ms: median(&mut bev_times),
            bev_cells: nx * nz,
            rv_detections: detections,
        });
    }
    // Keep the checksum alive.
    if sink.is_nan() {
        anyhow::bail!("benchmark checksum became NaN");
    }
    Ok(rows)
}

/// CSV for the benchmark table.
pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("range_m,rv_time_ms,bev_mock_time_ms,bev_cell_count,rv_detections\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.4},{:.4},{},{}\n",
            r.max_range, r.rv_time_ms, r.bev_time_ms, r.bev_cells, r.rv_detections
        ));
    }
    s
}

/// gnuplot-friendly whitespace table.
pub fn rows_to_gnuplot(rows: &[BenchRow]) -> String {
    let mut s = String::from("# range_m rv_time_ms bev_mock_time_ms bev_cell_count\n");
    for r in rows {
        s.push_str(&format!(
            "{} {:.4} {:.4} {}\n",
            r.max_range, r.rv_time_ms, r.bev_time_ms, r.bev_cells
        ));
    }
    s
}
