//! Finite-difference gradient checking utilities, shared between unit tests
//! and the acceptance suite. The checkers stay independent of the analytic
//! gradient code paths they verify: they only re-evaluate loss closures at
//! perturbed inputs.

use crate::loss::{LossGrad, PixelGrad, PixelPrediction, PredictionGrid, NUM_DIVS, NUM_MEANS};
use crate::rng::Rng;
use crate::targets::{
    Encoded2DTarget, Encoded3DTarget, ForegroundTarget, PixelTarget, TargetGrid, BACKGROUND_INDEX,
    NUM_CLASSES_BG,
};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Addressable scalar inside a [`PixelPrediction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Logit(usize),
    Mean(usize),
    LogDiv(usize),
}

impl Slot {
    pub fn all() -> impl Iterator<Item = Slot> {
        (0..NUM_CLASSES_BG)
            .map(Slot::Logit)
            .chain((0..NUM_MEANS).map(Slot::Mean))
            .chain((0..NUM_DIVS).map(Slot::LogDiv))
    }

    pub fn get(&self, px: &PixelPrediction) -> f64 {
        match *self {
            Slot::Logit(i) => px.logits[i],
            Slot::Mean(i) => px.means[i],
            Slot::LogDiv(i) => px.log_div[i],
        }
    }

    pub fn set(&self, px: &mut PixelPrediction, v: f64) {
        match *self {
            Slot::Logit(i) => px.logits[i] = v,
            Slot::Mean(i) => px.means[i] = v,
            Slot::LogDiv(i) => px.log_div[i] = v,
        }
    }

    pub fn grad(&self, g: &PixelGrad) -> f64 {
        match *self {
            Slot::Logit(i) => g.logits[i],
            Slot::Mean(i) => g.means[i],
            Slot::LogDiv(i) => g.log_div[i],
        }
    }
}

/// Tolerances for a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_floor: 1e-6,
        }
    }
}

impl GradCheck {
    /// True when `fd` and `analytic` agree within the relative tolerance
    /// (with an absolute floor for near-zero gradients).
    pub fn agrees(&self, analytic: f64, fd: f64) -> bool {
        let gap = (analytic - fd).abs();
        gap <= (self.rel_tol * analytic.abs().max(fd.abs())).max(self.abs_floor)
    }
}

/// Check an analytic loss gradient against central finite differences over
/// every slot of every pixel. Returns the worst gap-to-allowance ratio
/// (passing checks are <= 1), or a description of the first failure.
pub fn check_loss_gradients<F>(
    pred: &PredictionGrid,
    grad: &LossGrad,
    cfg: &GradCheck,
    mut eval: F,
) -> Result<f64, String>
where
    F: FnMut(&PredictionGrid) -> f64,
{
    assert_eq!(pred.pixels.len(), grad.pixels.len());
    let mut work = pred.clone();
    let mut worst = 0.0f64;
    for i in 0..pred.pixels.len() {
        for slot in Slot::all() {
            let x = slot.get(&work.pixels[i]);
            slot.set(&mut work.pixels[i], x + cfg.step);
            let up = eval(&work);
            slot.set(&mut work.pixels[i], x - cfg.step);
            let down = eval(&work);
            slot.set(&mut work.pixels[i], x);
            let fd = (up - down) / (2.0 * cfg.step);
            let analytic = slot.grad(&grad.pixels[i]);
            let gap = (analytic - fd).abs();
            let allowed = (cfg.rel_tol * analytic.abs().max(fd.abs())).max(cfg.abs_floor);
            worst = worst.max(gap / allowed);
            if gap > allowed {
                return Err(format!(
                    "pixel {i} {slot:?}: analytic {analytic:.9e} vs fd {fd:.9e} (gap {gap:.3e} > {allowed:.3e})"
                ));
            }
        }
    }
    Ok(worst)
}

/// Randomized prediction/target pair for gradient checks. Residuals are kept
/// away from the |.| kinks and diversities away from the clamp so central
/// differences stay valid.
pub fn random_loss_fixture(seed: u64, n_pixels: usize) -> (PredictionGrid, TargetGrid) {
    let mut rng = Rng::derive(seed, 0x6c6f7373);
    let mut pred_pixels = Vec::with_capacity(n_pixels);
    let mut target_pixels = Vec::with_capacity(n_pixels);
    for i in 0..n_pixels {
        let mut px = PixelPrediction::default();
        for z in &mut px.logits {
            *z = rng.range(-3.0, 3.0);
        }
        for d in &mut px.log_div {
            *d = rng.range(-2.5, 1.0);
        }
        // Roughly one background pixel in three.
        let class_index = if rng.f64() < 0.34 {
            BACKGROUND_INDEX
        } else {
            rng.index(BACKGROUND_INDEX)
        };
        let foreground = if class_index == BACKGROUND_INDEX {
            for m in &mut px.means {
                *m = rng.range(-2.0, 2.0);
            }
            None
        } else {
            let theta = rng.range(-core::f64::consts::PI, core::f64::consts::PI);
            let t = ForegroundTarget {
                label_id: i as u32,
                t2d: Encoded2DTarget {
                    dx: rng.range(-40.0, 40.0),
                    dy: rng.range(-20.0, 20.0),
                    w: rng.range(4.0, 60.0),
                    h: rng.range(4.0, 30.0),
                },
                t3d: Encoded3DTarget {
                    dx: rng.range(-10.0, 10.0),
                    dy: rng.range(-5.0, 5.0),
                    dd: rng.range(-2.0, 2.0),
                    cos_t: crate::math::cos(theta),
                    sin_t: crate::math::sin(theta),
                    w: rng.range(0.5, 3.0),
                    l: rng.range(0.5, 5.0),
                    h: rng.range(0.5, 2.0),
                },
            };
            // Means offset from the targets by a residual bounded away from
            // zero so the step never crosses an |.| kink.
            let mut set = |slot: usize, target: f64| {
                let mag = rng.range(0.05, 1.5);
                let sign = if rng.f64() < 0.5 { -1.0 } else { 1.0 };
                px.means[slot] = target + sign * mag;
            };
            set(crate::loss::mean::DX2D, t.t2d.dx);
            set(crate::loss::mean::DY2D, t.t2d.dy);
            set(crate::loss::mean::W2D, t.t2d.w);
            set(crate::loss::mean::H2D, t.t2d.h);
            set(crate::loss::mean::DX3D, t.t3d.dx);
            set(crate::loss::mean::DY3D, t.t3d.dy);
            set(crate::loss::mean::DD, t.t3d.dd);
            set(crate::loss::mean::W3D, t.t3d.w);
            set(crate::loss::mean::L3D, t.t3d.l);
            set(crate::loss::mean::H3D, t.t3d.h);
            set(crate::loss::mean::COS, t.t3d.cos_t);
            set(crate::loss::mean::SIN, t.t3d.sin_t);
            Some(t)
        };
        pred_pixels.push(px);
        target_pixels.push(PixelTarget {
            raster_idx: i,
            point_index: i as u32,
            class_index,
            foreground,
        });
    }
    (
        PredictionGrid {
            width: n_pixels as u32,
            height: 1,
            pixels: pred_pixels,
        },
        TargetGrid {
            width: n_pixels as u32,
            height: 1,
            pixels: target_pixels,
        },
    )
}
