//! Raster construction against brute-force oracles: per-pixel min
//! z-buffering, nearest-neighbor index arithmetic, dropout statistics and
//! the suppressed-fraction bound on synthetic scenes.

use rvdet_core::geom::{self, CameraModel, Point3};
use rvdet_core::raster::{self, DepthRaster, LidarPoint};
use rvdet_core::rng::Rng;
use rvdet_core::synth::{self, SceneConfig};

fn cam() -> CameraModel {
    CameraModel::new(2948.0, 2948.0, 790.0, 160.0, 1580, 320)
}

fn random_cloud(rng: &mut Rng, n: usize) -> Vec<LidarPoint> {
    (0..n)
        .map(|_| {
            // Mostly in view, some behind and some outside.
            let p = match rng.index(10) {
                0 => Point3::new(rng.range(-5.0, 5.0), rng.range(-5.0, 5.0), rng.range(-50.0, 0.0)),
                1 => Point3::new(rng.range(300.0, 600.0), rng.range(-5.0, 5.0), rng.range(10.0, 50.0)),
                _ => {
                    let u = rng.range(0.0, 1580.0);
                    let v = rng.range(0.0, 320.0);
                    geom::unproject(&cam(), u, v, rng.range(5.0, 450.0))
                }
            };
            LidarPoint::new(p)
        })
        .collect()
}

/// Brute-force per-pixel arg-min over projected points.
fn oracle_raster(points: &[LidarPoint], cam: &CameraModel, w: u32, h: u32) -> DepthRaster {
    let mut out = DepthRaster::empty(w, h);
    for x in 0..w {
        for y in 0..h {
            let mut best: Option<(f64, u32)> = None;
            for (i, p) in points.iter().enumerate() {
                let proj = match geom::project(cam, &p.position) {
                    Ok(pr) => pr,
                    Err(_) => continue,
                };
                if !proj.in_image(cam) {
                    continue;
                }
                let px = ((proj.u * w as f64 / cam.width as f64) as u32).min(w - 1);
                let py = ((proj.v * h as f64 / cam.height as f64) as u32).min(h - 1);
                if px != x || py != y {
                    continue;
                }
                let replace = match best {
                    None => true,
                    Some((r, _)) => proj.range < r,
                };
                if replace {
                    best = Some((proj.range, i as u32));
                }
            }
            if let Some((r, i)) = best {
                let idx = out.idx(x, y);
                out.range_ch[idx] = r;
                out.sentinel_ch[idx] = 1;
                out.point_index[idx] = Some(i);
            }
        }
    }
    out
}

#[test]
fn z_buffer_equals_brute_force_oracle() {
    let cam = cam();
    let mut rng = Rng::new(0x2b);
    for trial in 0..100 {
        let points = random_cloud(&mut rng, 400);
        let (fast, stats) = raster::build_depth_raster(&points, &cam, 79, 16);
        let slow = oracle_raster(&points, &cam, 79, 16);
        assert_eq!(fast, slow, "trial {trial}");
        assert!(fast.channels_consistent());
        assert_eq!(
            stats.projected - stats.suppressed,
            fast.valid_count(),
            "trial {trial}"
        );
    }
}

#[test]
fn dense_cloud_matches_oracle_with_many_collisions() {
    // Tiny raster forces heavy suppression; the oracle must still agree
    // exactly, including tie handling.
    let cam = cam();
    let mut rng = Rng::new(0x77);
    let points = random_cloud(&mut rng, 2000);
    let (fast, stats) = raster::build_depth_raster(&points, &cam, 16, 8);
    let slow = oracle_raster(&points, &cam, 16, 8);
    assert_eq!(fast, slow);
    assert!(stats.suppressed > 0);
}

#[test]
fn suppressed_fraction_below_one_percent_at_8mp_scale() {
    for seed in 0..5 {
        let cfg = SceneConfig {
            seed,
            ..Default::default()
        };
        let scene = synth::generate_scene(&cfg).unwrap();
        let cam8 = cfg.camera.scaled(2);
        let (_, stats) = raster::build_depth_raster(
            &scene.points,
            &cam8,
            cfg.raster_width * 2,
            cfg.raster_height * 2,
        );
        assert!(stats.projected > 1000, "seed {seed}: {stats:?}");
        assert!(
            stats.suppressed_fraction() < 0.01,
            "seed {seed}: {stats:?}"
        );
    }
}

#[test]
fn resize_matches_index_arithmetic_oracle() {
    let cam = cam();
    let mut rng = Rng::new(0x99);
    for &(sw, sh, ow, oh) in &[(158u32, 32u32, 79u32, 16u32), (79, 16, 158, 32), (100, 40, 33, 13)] {
        let points = random_cloud(&mut rng, 500);
        let (src, _) = raster::build_depth_raster(&points, &cam, sw, sh);
        let resized = raster::resize_nearest(&src, ow, oh);
        for y in 0..oh {
            for x in 0..ow {
                let sx = (x as usize * sw as usize) / ow as usize;
                let sy = (y as usize * sh as usize) / oh as usize;
                let s_idx = sy * sw as usize + sx;
                let d_idx = resized.idx(x, y);
                assert_eq!(resized.range_ch[d_idx], src.range_ch[s_idx]);
                assert_eq!(resized.sentinel_ch[d_idx], src.sentinel_ch[s_idx]);
                assert_eq!(resized.point_index[d_idx], src.point_index[s_idx]);
            }
        }
        assert!(resized.sentinel_ch.iter().all(|&s| s <= 1));
    }
}

#[test]
fn dropout_count_within_three_sigma() {
    let n = 100_000;
    let points: Vec<LidarPoint> = (0..n)
        .map(|i| LidarPoint::new(Point3::new(i as f64, 0.0, 100.0)))
        .collect();
    let kept = raster::dropout_points(&points, 0.5, 0xd0);
    let expected = n as f64 * 0.5;
    let sigma = (n as f64 * 0.25).sqrt();
    let deviation = (kept.len() as f64 - expected).abs();
    assert!(
        deviation <= 3.0 * sigma,
        "kept {} of {n}, deviation {deviation:.1} > 3 sigma {:.1}",
        kept.len(),
        3.0 * sigma
    );
}

#[test]
fn rescale_then_undo_is_identity_on_centroids() {
    use rvdet_core::geom::{Box2D, Box3D};
    use rvdet_core::postproc::Detection;
    use rvdet_core::targets::ObjectClass;
    let mut rng = Rng::new(0x1d);
    for _ in 0..200 {
        let centroid = Point3::new(
            rng.range(-60.0, 60.0),
            rng.range(-2.0, 2.0),
            rng.range(50.0, 450.0),
        );
        let det = Detection {
            anchor_point_id: 0,
            class: ObjectClass::Vehicle,
            score: 0.5,
            box2d: Box2D::new(10.0, 10.0, 5.0, 5.0),
            box3d: Box3D::new(centroid, 2.0, 4.5, 1.6, rng.range(-3.0, 3.0)),
        };
        let factor = rng.range(0.1, 2.0);
        let scaled = Detection {
            box3d: Box3D::new(centroid.scale(factor), 2.0, 4.5, 1.6, det.box3d.phi),
            ..det.clone()
        };
        let undone = raster::undo_rescale(&scaled, factor);
        let err = undone.box3d.centroid.sub(&centroid).norm() / centroid.norm();
        assert!(err < 1e-9, "relative error {err}");
    }
}
