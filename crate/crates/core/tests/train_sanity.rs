//! Training-loop sanity: full-pipeline gradient checks through the head,
//! overfit-to-floor on a single sample, and monotone descent under a small
//! learning rate.

#![allow(clippy::needless_range_loop)]

use rvdet_core::check::{random_loss_fixture, GradCheck};
use rvdet_core::head::{
    self, HeadParams, OptimConfig, Supervision, TrainSample, FEATURE_DIM, OUTPUT_DIM,
};
use rvdet_core::loss::{self, LossConfig, LossGrad, PixelGrad};
use rvdet_core::rng::Rng;
use rvdet_core::targets::{
    Encoded2DTarget, Encoded3DTarget, ForegroundTarget, PixelTarget, TargetGrid, BACKGROUND_INDEX,
    NUM_CLASSES_BG,
};

fn random_features(seed: u64, n: usize) -> Vec<[f64; FEATURE_DIM]> {
    let mut rng = Rng::derive(seed, 0xf0f0);
    (0..n)
        .map(|_| {
            let mut f = [0.0; FEATURE_DIM];
            for x in &mut f {
                *x = rng.range(-1.0, 1.0);
            }
            f
        })
        .collect()
}

/// Fixture whose residuals under the given params stay away from the |.|
/// kinks, so finite differences through the head remain valid.
fn kink_free_sample(params: &HeadParams, start_seed: u64, n_pixels: usize) -> TrainSample {
    'seeds: for seed in start_seed.. {
        let (_, targets) = random_loss_fixture(seed, n_pixels);
        let features = random_features(seed, n_pixels);
        let pass = head::forward_grid(params, &features, targets.width, targets.height).unwrap();
        for (px, tg) in pass.grid.pixels.iter().zip(&targets.pixels) {
            if let Some(fg) = &tg.foreground {
                let t3 = &fg.t3d;
                let t2 = &fg.t2d;
                let targets_flat = [
                    t2.dx, t2.dy, t2.w, t2.h, t3.dx, t3.dy, t3.dd, t3.w, t3.l, t3.h, t3.cos_t,
                    t3.sin_t,
                ];
                for (m, t) in px.means.iter().zip(&targets_flat) {
                    if (m - t).abs() < 0.02 {
                        continue 'seeds;
                    }
                }
            }
        }
        return TrainSample { features, targets };
    }
    unreachable!()
}

#[test]
fn full_head_backprop_matches_fd_on_three_pixel_grid() {
    let loss_cfg = LossConfig::default();
    let check = GradCheck::default();
    let params = HeadParams::init(0xbeef, FEATURE_DIM, 12, OUTPUT_DIM);
    let sample = kink_free_sample(&params, 1, 3);

    let (_, analytic) = head::loss_and_grad(&params, &sample, &loss_cfg, Supervision::ThreeD2D).unwrap();
    let eval = |p: &HeadParams| {
        head::loss_and_grad(p, &sample, &loss_cfg, Supervision::ThreeD2D)
            .unwrap()
            .0
            .total()
    };
    let mut work = params.clone();
    let analytic_flat: Vec<f64> = analytic.iter().copied().collect();
    let n = work.n_params();
    assert_eq!(analytic_flat.len(), n);
    for k in 0..n {
        let x = *work.iter().nth(k).unwrap();
        *work.iter_mut().nth(k).unwrap() = x + check.step;
        let up = eval(&work);
        *work.iter_mut().nth(k).unwrap() = x - check.step;
        let down = eval(&work);
        *work.iter_mut().nth(k).unwrap() = x;
        let fd = (up - down) / (2.0 * check.step);
        assert!(
            check.agrees(analytic_flat[k], fd),
            "param {k}: analytic {} vs fd {fd}",
            analytic_flat[k]
        );
    }
}

#[test]
fn forward_jacobian_matches_fd() {
    // Spot-check rows of the output Jacobian with unit cotangents.
    let check = GradCheck::default();
    let params = HeadParams::init(17, FEATURE_DIM, 10, OUTPUT_DIM);
    let features = random_features(3, 1);
    let pass = head::forward_grid(&params, &features, 1, 1).unwrap();
    let slots: [usize; 5] = [0, 5, NUM_CLASSES_BG + 3, NUM_CLASSES_BG + 11, OUTPUT_DIM - 1];
    for &slot in &slots {
        let mut pg = PixelGrad::default();
        if slot < NUM_CLASSES_BG {
            pg.logits[slot] = 1.0;
        } else if slot < NUM_CLASSES_BG + loss::NUM_MEANS {
            pg.means[slot - NUM_CLASSES_BG] = 1.0;
        } else {
            pg.log_div[slot - NUM_CLASSES_BG - loss::NUM_MEANS] = 1.0;
        }
        let lg = LossGrad { pixels: vec![pg] };
        let analytic = head::backward(&params, &features, &pass, &lg);
        let analytic_flat: Vec<f64> = analytic.iter().copied().collect();

        let read_slot = |p: &HeadParams| {
            let px = head::forward(p, &features[0]).unwrap();
            if slot < NUM_CLASSES_BG {
                px.logits[slot]
            } else if slot < NUM_CLASSES_BG + loss::NUM_MEANS {
                px.means[slot - NUM_CLASSES_BG]
            } else {
                px.log_div[slot - NUM_CLASSES_BG - loss::NUM_MEANS]
            }
        };
        let mut work = params.clone();
        for k in 0..work.n_params() {
            let x = *work.iter().nth(k).unwrap();
            *work.iter_mut().nth(k).unwrap() = x + check.step;
            let up = read_slot(&work);
            *work.iter_mut().nth(k).unwrap() = x - check.step;
            let down = read_slot(&work);
            *work.iter_mut().nth(k).unwrap() = x;
            let fd = (up - down) / (2.0 * check.step);
            assert!(
                check.agrees(analytic_flat[k], fd),
                "output {slot} param {k}: analytic {} vs fd {fd}",
                analytic_flat[k]
            );
        }
    }
}

/// Small handcrafted overfit sample: a few foreground pixels with modest
/// target magnitudes plus background pixels.
fn overfit_sample() -> TrainSample {
    let mut rng = Rng::new(0x0f17);
    let n_fg = 4;
    let n_bg = 2;
    let mut pixels = Vec::new();
    for i in 0..n_fg + n_bg {
        let foreground = if i < n_fg {
            let theta = rng.range(-3.0, 3.0);
            Some(ForegroundTarget {
                label_id: i as u32,
                t2d: Encoded2DTarget {
                    dx: rng.range(-4.0, 4.0),
                    dy: rng.range(-2.0, 2.0),
                    w: rng.range(3.0, 10.0),
                    h: rng.range(2.0, 6.0),
                },
                t3d: Encoded3DTarget {
                    dx: rng.range(-2.0, 2.0),
                    dy: rng.range(-1.0, 1.0),
                    dd: rng.range(-1.5, 1.5),
                    cos_t: theta.cos(),
                    sin_t: theta.sin(),
                    w: rng.range(0.5, 2.5),
                    l: rng.range(0.5, 5.0),
                    h: rng.range(0.5, 2.0),
                },
            })
        } else {
            None
        };
        pixels.push(PixelTarget {
            raster_idx: i,
            point_index: i as u32,
            class_index: if i < n_fg { i % 3 } else { BACKGROUND_INDEX },
            foreground,
        });
    }
    TrainSample {
        features: random_features(0x0f17, n_fg + n_bg),
        targets: TargetGrid {
            width: (n_fg + n_bg) as u32,
            height: 1,
            pixels,
        },
    }
}

#[test]
fn single_sample_overfits_to_analytic_floor() {
    let loss_cfg = LossConfig::default();
    let sample = overfit_sample();
    let optim = OptimConfig {
        lr: 0.02,
        lr_decay: 0.6,
        decay_every: 600,
        epochs: 14_000,
        ..Default::default()
    };
    let (_, history) = head::train(
        &[sample],
        &loss_cfg,
        &optim,
        Supervision::ThreeD2D,
        24,
        0x0f17,
    )
    .unwrap();
    // With a perfect fit the focal and L1 terms vanish and every Laplacian
    // term bottoms out at ln(b_min): 4 2D + 6 3D diversity terms.
    let floor = 10.0 * loss_cfg.b_min.ln();
    let last = history.last().unwrap().total;
    let gap = (last - floor).abs();
    println!("overfit: final {last:.4}, floor {floor:.4}, gap {gap:.4}");
    assert!(
        gap <= 0.05 * floor.abs(),
        "final {last} not within 5% of floor {floor}"
    );
    assert!(history.last().unwrap().total < history[0].total);
}

#[test]
fn loss_non_increasing_under_small_learning_rate() {
    let loss_cfg = LossConfig::default();
    let sample = overfit_sample();
    // One step per epoch on a fixed batch.
    let optim = OptimConfig {
        lr: 1e-5,
        lr_decay: 1.0,
        decay_every: usize::MAX,
        epochs: 100,
        ..Default::default()
    };
    let (_, history) = head::train(
        &[sample],
        &loss_cfg,
        &optim,
        Supervision::ThreeD2D,
        16,
        0x5eed,
    )
    .unwrap();
    for w in history.windows(2) {
        assert!(
            w[1].total <= w[0].total + 1e-6,
            "loss increased: {} -> {}",
            w[0].total,
            w[1].total
        );
    }
}

#[test]
fn supervision_mode_changes_2d_component_only() {
    let loss_cfg = LossConfig::default();
    let params = HeadParams::init(5, FEATURE_DIM, 8, OUTPUT_DIM);
    let sample = kink_free_sample(&params, 40, 5);
    let (with_2d, _) = head::loss_and_grad(&params, &sample, &loss_cfg, Supervision::ThreeD2D).unwrap();
    let (without, _) =
        head::loss_and_grad(&params, &sample, &loss_cfg, Supervision::ThreeDOnly).unwrap();
    assert_eq!(without.l2d, 0.0);
    assert_eq!(with_2d.class, without.class);
    assert_eq!(with_2d.l3d, without.l3d);
    assert!(with_2d.l2d > 0.0);
}
