//! Loss stack: focal classification loss over all valid pixels, Laplacian
//! negative log-likelihood for the regressed 2D/3D parameters over
//! foreground pixels, and L1 for the orientation pair. Every loss returns
//! its analytic gradient with respect to the raw per-pixel outputs (class
//! logits, regression means, log-diversities).
//!
//! Diversities are predicted as log-b and exponentiated with a floor at
//! `b_min`, keeping the optimization unconstrained. Sums run in fixed pixel
//! order so results are bit-reproducible.

use crate::math;
use crate::targets::{Encoded2DTarget, Encoded3DTarget, ForegroundTarget, TargetGrid, NUM_CLASSES_BG};
use alloc::vec;
use alloc::vec::Vec;

/// Number of regression mean outputs per pixel.
pub const NUM_MEANS: usize = 12;
/// Number of log-diversity outputs per pixel.
pub const NUM_DIVS: usize = 10;

/// Mean slot indices.
pub mod mean {
    pub const DX2D: usize = 0;
    pub const DY2D: usize = 1;
    pub const W2D: usize = 2;
    pub const H2D: usize = 3;
    pub const DX3D: usize = 4;
    pub const DY3D: usize = 5;
    pub const DD: usize = 6;
    pub const W3D: usize = 7;
    pub const L3D: usize = 8;
    pub const H3D: usize = 9;
    pub const COS: usize = 10;
    pub const SIN: usize = 11;
}

/// Log-diversity slot indices.
pub mod div {
    pub const X2D: usize = 0;
    pub const Y2D: usize = 1;
    pub const W2D: usize = 2;
    pub const H2D: usize = 3;
    pub const X3D: usize = 4;
    pub const Y3D: usize = 5;
    pub const W3D: usize = 6;
    pub const L3D: usize = 7;
    pub const H3D: usize = 8;
    pub const DD: usize = 9;
}

/// Loss configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Focal loss weight.
    pub focal_alpha: f64,
    /// Focal loss focusing exponent.
    pub focal_gamma: f64,
    /// Diversity floor.
    pub b_min: f64,
    /// Attach a Laplacian diversity to the range delta as well; with this
    /// off the range delta trains with plain L1.
    pub dd_uncertainty: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            b_min: 1e-3,
            dd_uncertainty: true,
        }
    }
}

/// Raw per-pixel network output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPrediction {
    pub logits: [f64; NUM_CLASSES_BG],
    pub means: [f64; NUM_MEANS],
    pub log_div: [f64; NUM_DIVS],
}

impl Default for PixelPrediction {
    fn default() -> Self {
        PixelPrediction {
            logits: [0.0; NUM_CLASSES_BG],
            means: [0.0; NUM_MEANS],
            log_div: [0.0; NUM_DIVS],
        }
    }
}

impl PixelPrediction {
    /// Softmax over classes plus background.
    pub fn class_probs(&self) -> [f64; NUM_CLASSES_BG] {
        let mut m = self.logits[0];
        for &z in &self.logits[1..] {
            m = m.max(z);
        }
        let mut out = [0.0; NUM_CLASSES_BG];
        let mut sum = 0.0;
        for (o, &z) in out.iter_mut().zip(&self.logits) {
            *o = math::exp(z - m);
            sum += *o;
        }
        for o in &mut out {
            *o /= sum;
        }
        out
    }

    /// Diversity for a slot: `max(exp(log_div), b_min)`.
    pub fn diversity(&self, slot: usize, b_min: f64) -> f64 {
        math::exp(self.log_div[slot]).max(b_min)
    }

    pub fn pred_2d(&self) -> Encoded2DTarget {
        Encoded2DTarget {
            dx: self.means[mean::DX2D],
            dy: self.means[mean::DY2D],
            w: self.means[mean::W2D],
            h: self.means[mean::H2D],
        }
    }

    pub fn pred_3d(&self) -> Encoded3DTarget {
        Encoded3DTarget {
            dx: self.means[mean::DX3D],
            dy: self.means[mean::DY3D],
            dd: self.means[mean::DD],
            cos_t: self.means[mean::COS],
            sin_t: self.means[mean::SIN],
            w: self.means[mean::W3D],
            l: self.means[mean::L3D],
            h: self.means[mean::H3D],
        }
    }
}

/// Predictions for every valid raster pixel, aligned with the target grid's
/// pixel order (sentinel pixels, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<PixelPrediction>,
}

impl PredictionGrid {
    pub fn zeros(width: u32, height: u32, n_pixels: usize) -> Self {
        PredictionGrid {
            width,
            height,
            pixels: vec![PixelPrediction::default(); n_pixels],
        }
    }
}

/// Gradient with respect to one pixel's raw outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGrad {
    pub logits: [f64; NUM_CLASSES_BG],
    pub means: [f64; NUM_MEANS],
    pub log_div: [f64; NUM_DIVS],
}

impl Default for PixelGrad {
    fn default() -> Self {
        PixelGrad {
            logits: [0.0; NUM_CLASSES_BG],
            means: [0.0; NUM_MEANS],
            log_div: [0.0; NUM_DIVS],
        }
    }
}

/// Gradient aligned with a [`PredictionGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub pixels: Vec<PixelGrad>,
}

impl LossGrad {
    pub fn zeros(n: usize) -> Self {
        LossGrad {
            pixels: vec![PixelGrad::default(); n],
        }
    }

    pub fn accumulate(&mut self, other: &LossGrad) {
        assert_eq!(self.pixels.len(), other.pixels.len());
        for (a, b) in self.pixels.iter_mut().zip(&other.pixels) {
            for (x, y) in a.logits.iter_mut().zip(&b.logits) {
                *x += y;
            }
            for (x, y) in a.means.iter_mut().zip(&b.means) {
                *x += y;
            }
            for (x, y) in a.log_div.iter_mut().zip(&b.log_div) {
                *x += y;
            }
        }
    }
}

fn check_alignment(pred: &PredictionGrid, targets: &TargetGrid) {
    assert_eq!(
        pred.pixels.len(),
        targets.pixels.len(),
        "prediction and target grids must cover the same sentinel pixels"
    );
}

/// Focal loss over all valid pixels; background is a class like any other.
pub fn focal_loss(pred: &PredictionGrid, targets: &TargetGrid, cfg: &LossConfig) -> (f64, LossGrad) {
    check_alignment(pred, targets);
    let n = pred.pixels.len();
    let mut grad = LossGrad::zeros(n);
    if n == 0 {
        return (0.0, grad);
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    for (i, (px, tg)) in pred.pixels.iter().zip(&targets.pixels).enumerate() {
        let probs = px.class_probs();
        let t = tg.class_index;
        let p = probs[t];
        let one_m = 1.0 - p;
        if one_m < 1e-15 {
            // Fully confident and correct: zero loss, zero gradient.
            continue;
        }
        let w = math::powf(one_m, cfg.focal_gamma);
        let lp = math::ln(p);
        loss += -cfg.focal_alpha * w * lp * inv_n;
        // dL/dp with L = -alpha (1-p)^gamma ln p.
        let dl_dp = cfg.focal_alpha
            * (cfg.focal_gamma * math::powf(one_m, cfg.focal_gamma - 1.0) * lp - w / p);
        for (j, &pj) in probs.iter().enumerate() {
            let dp_dz = p * (if j == t { 1.0 } else { 0.0 } - pj);
            grad.pixels[i].logits[j] += dl_dp * dp_dz * inv_n;
        }
    }
    (loss, grad)
}

/// One Laplacian NLL term: |e|/b + ln b, with gradients into the mean and
/// log-diversity slots.
fn laplace_term(
    px: &PixelPrediction,
    g: &mut PixelGrad,
    mean_slot: usize,
    div_slot: usize,
    target: f64,
    b_min: f64,
    inv_nf: f64,
) -> f64 {
    let e = target - px.means[mean_slot];
    let raw_b = math::exp(px.log_div[div_slot]);
    let b = raw_b.max(b_min);
    let abs_e = math::abs(e);
    let loss = abs_e / b + math::ln(b);
    g.means[mean_slot] += -sign(e) / b * inv_nf;
    if raw_b >= b_min {
        g.log_div[div_slot] += (1.0 - abs_e / b) * inv_nf;
    }
    loss
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn foreground_count(targets: &TargetGrid) -> usize {
    targets.pixels.iter().filter(|p| p.foreground.is_some()).count()
}

const SLOTS_2D: [(usize, usize); 4] = [
    (mean::DX2D, div::X2D),
    (mean::DY2D, div::Y2D),
    (mean::W2D, div::W2D),
    (mean::H2D, div::H2D),
];

const SLOTS_3D: [(usize, usize); 5] = [
    (mean::DX3D, div::X3D),
    (mean::DY3D, div::Y3D),
    (mean::W3D, div::W3D),
    (mean::L3D, div::L3D),
    (mean::H3D, div::H3D),
];

fn target_mean(fg: &ForegroundTarget, slot: usize) -> f64 {
    match slot {
        mean::DX2D => fg.t2d.dx,
        mean::DY2D => fg.t2d.dy,
        mean::W2D => fg.t2d.w,
        mean::H2D => fg.t2d.h,
        mean::DX3D => fg.t3d.dx,
        mean::DY3D => fg.t3d.dy,
        mean::DD => fg.t3d.dd,
        mean::W3D => fg.t3d.w,
        mean::L3D => fg.t3d.l,
        mean::H3D => fg.t3d.h,
        mean::COS => fg.t3d.cos_t,
        mean::SIN => fg.t3d.sin_t,
        _ => unreachable!("unknown mean slot"),
    }
}

/// Laplacian NLL over the 2D box parameters, foreground pixels only.
pub fn laplace_nll_2d(
    pred: &PredictionGrid,
    targets: &TargetGrid,
    cfg: &LossConfig,
) -> (f64, LossGrad) {
    check_alignment(pred, targets);
    let mut grad = LossGrad::zeros(pred.pixels.len());
    let nf = foreground_count(targets);
    if nf == 0 {
        return (0.0, grad);
    }
    let inv_nf = 1.0 / nf as f64;
    let mut loss = 0.0;
    for (i, (px, tg)) in pred.pixels.iter().zip(&targets.pixels).enumerate() {
        let Some(fg) = &tg.foreground else { continue };
        for &(m, d) in &SLOTS_2D {
            loss += laplace_term(px, &mut grad.pixels[i], m, d, target_mean(fg, m), cfg.b_min, inv_nf)
                * inv_nf;
        }
    }
    (loss, grad)
}

/// Laplacian NLL over the 3D position/extent parameters plus the range
/// delta, foreground pixels only. With `dd_uncertainty` off the range delta
/// contributes plain L1 instead.
pub fn laplace_nll_3d(
    pred: &PredictionGrid,
    targets: &TargetGrid,
    cfg: &LossConfig,
) -> (f64, LossGrad) {
    check_alignment(pred, targets);
    let mut grad = LossGrad::zeros(pred.pixels.len());
    let nf = foreground_count(targets);
    if nf == 0 {
        return (0.0, grad);
    }
    let inv_nf = 1.0 / nf as f64;
    let mut loss = 0.0;
    for (i, (px, tg)) in pred.pixels.iter().zip(&targets.pixels).enumerate() {
        let Some(fg) = &tg.foreground else { continue };
        let g = &mut grad.pixels[i];
        for &(m, d) in &SLOTS_3D {
            loss += laplace_term(px, g, m, d, target_mean(fg, m), cfg.b_min, inv_nf) * inv_nf;
        }
        if cfg.dd_uncertainty {
            loss += laplace_term(px, g, mean::DD, div::DD, fg.t3d.dd, cfg.b_min, inv_nf) * inv_nf;
        } else {
            let e = fg.t3d.dd - px.means[mean::DD];
            loss += math::abs(e) * inv_nf;
            g.means[mean::DD] += -sign(e) * inv_nf;
        }
    }
    (loss, grad)
}

/// L1 on the raw (cos, sin) orientation pair, foreground pixels only.
pub fn orientation_l1(pred: &PredictionGrid, targets: &TargetGrid) -> (f64, LossGrad) {
    check_alignment(pred, targets);
    let mut grad = LossGrad::zeros(pred.pixels.len());
    let nf = foreground_count(targets);
    if nf == 0 {
        return (0.0, grad);
    }
    let inv_nf = 1.0 / nf as f64;
    let mut loss = 0.0;
    for (i, (px, tg)) in pred.pixels.iter().zip(&targets.pixels).enumerate() {
        let Some(fg) = &tg.foreground else { continue };
        for &(slot, target) in &[(mean::COS, fg.t3d.cos_t), (mean::SIN, fg.t3d.sin_t)] {
            let e = px.means[slot] - target;
            loss += math::abs(e) * inv_nf;
            grad.pixels[i].means[slot] += sign(e) * inv_nf;
        }
    }
    (loss, grad)
}

/// Per-component loss values; orientation is folded into the 3D component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub class: f64,
    pub l2d: f64,
    pub l3d: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.class + self.l2d + self.l3d
    }
}

/// Unweighted sum of classification, 2D and 3D (incl. orientation) losses.
pub fn total_loss(
    pred: &PredictionGrid,
    targets: &TargetGrid,
    cfg: &LossConfig,
) -> (LossBreakdown, LossGrad) {
    let (class, mut grad) = focal_loss(pred, targets, cfg);
    let (l2d, g2d) = laplace_nll_2d(pred, targets, cfg);
    let (l3d_base, g3d) = laplace_nll_3d(pred, targets, cfg);
    let (orient, go) = orientation_l1(pred, targets);
    grad.accumulate(&g2d);
    grad.accumulate(&g3d);
    grad.accumulate(&go);
    (
        LossBreakdown {
            class,
            l2d,
            l3d: l3d_base + orient,
        },
        grad,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::PixelTarget;

    fn empty_grid() -> (PredictionGrid, TargetGrid) {
        (
            PredictionGrid::zeros(8, 8, 0),
            TargetGrid {
                width: 8,
                height: 8,
                pixels: Vec::new(),
            },
        )
    }

    fn one_fg_grid(t: ForegroundTarget, px: PixelPrediction) -> (PredictionGrid, TargetGrid) {
        let pred = PredictionGrid {
            width: 8,
            height: 8,
            pixels: vec![px],
        };
        let tg = TargetGrid {
            width: 8,
            height: 8,
            pixels: vec![PixelTarget {
                raster_idx: 0,
                point_index: 0,
                class_index: 0,
                foreground: Some(t),
            }],
        };
        (pred, tg)
    }

    fn fg_target() -> ForegroundTarget {
        ForegroundTarget {
            label_id: 1,
            t2d: Encoded2DTarget {
                dx: 1.5,
                dy: -2.0,
                w: 30.0,
                h: 12.0,
            },
            t3d: Encoded3DTarget {
                dx: 0.5,
                dy: 0.25,
                dd: 1.2,
                cos_t: 0.8,
                sin_t: 0.6,
                w: 2.0,
                l: 4.5,
                h: 1.6,
            },
        }
    }

    #[test]
    fn empty_grids_give_zero_losses() {
        let cfg = LossConfig::default();
        let (pred, tg) = empty_grid();
        assert_eq!(focal_loss(&pred, &tg, &cfg).0, 0.0);
        assert_eq!(laplace_nll_2d(&pred, &tg, &cfg).0, 0.0);
        assert_eq!(laplace_nll_3d(&pred, &tg, &cfg).0, 0.0);
        assert_eq!(orientation_l1(&pred, &tg).0, 0.0);
        assert_eq!(total_loss(&pred, &tg, &cfg).0.total(), 0.0);
    }

    #[test]
    fn confident_correct_class_gives_zero_focal() {
        let cfg = LossConfig::default();
        let mut px = PixelPrediction::default();
        px.logits[2] = 60.0;
        let pred = PredictionGrid {
            width: 8,
            height: 8,
            pixels: vec![px],
        };
        let tg = TargetGrid {
            width: 8,
            height: 8,
            pixels: vec![PixelTarget {
                raster_idx: 0,
                point_index: 0,
                class_index: 2,
                foreground: None,
            }],
        };
        let (loss, grad) = focal_loss(&pred, &tg, &cfg);
        assert_eq!(loss, 0.0);
        assert!(grad.pixels[0].logits.iter().all(|&g| g == 0.0));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn focal_with_gamma_zero_is_cross_entropy() {
        let cfg = LossConfig {
            focal_alpha: 1.0,
            focal_gamma: 0.0,
            ..Default::default()
        };
        let mut rng = crate::rng::Rng::new(5);
        for _ in 0..20 {
            let mut px = PixelPrediction::default();
            for z in &mut px.logits {
                *z = rng.range(-3.0, 3.0);
            }
            let class = rng.index(NUM_CLASSES_BG);
            let pred = PredictionGrid {
                width: 4,
                height: 4,
                pixels: vec![px],
            };
            let tg = TargetGrid {
                width: 4,
                height: 4,
                pixels: vec![PixelTarget {
                    raster_idx: 0,
                    point_index: 0,
                    class_index: class,
                    foreground: None,
                }],
            };
            let (loss, grad) = focal_loss(&pred, &tg, &cfg);
            let probs = px.class_probs();
            let ce = -math::ln(probs[class]);
            assert!((loss - ce).abs() < 1e-12, "{loss} vs {ce}");
            for j in 0..NUM_CLASSES_BG {
                let expect = probs[j] - if j == class { 1.0 } else { 0.0 };
                assert!((grad.pixels[0].logits[j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_means_unit_diversities_give_zero_nll() {
        let cfg = LossConfig::default();
        let t = fg_target();
        let mut px = PixelPrediction::default();
        for slot in 0..NUM_MEANS {
            px.means[slot] = target_mean(&t, slot);
        }
        // log_div zero -> b = 1 -> |0|/1 + ln 1 = 0 per parameter.
        let (pred, tg) = one_fg_grid(t, px);
        assert!(laplace_nll_2d(&pred, &tg, &cfg).0.abs() < 1e-12);
        assert!(laplace_nll_3d(&pred, &tg, &cfg).0.abs() < 1e-12);
        assert!(orientation_l1(&pred, &tg).0.abs() < 1e-12);
    }

    #[test]
    fn diversity_stationary_at_absolute_residual() {
        // f(b) = |e|/b + ln b is minimized at b = |e|.
        let cfg = LossConfig::default();
        let t = fg_target();
        let e = 0.7;
        let mut base = PixelPrediction::default();
        for slot in 0..NUM_MEANS {
            base.means[slot] = target_mean(&t, slot);
        }
        base.means[mean::DX2D] = t.t2d.dx - e;
        let eval = |log_b: f64| {
            let mut px = base;
            px.log_div[div::X2D] = log_b;
            let (pred, tg) = one_fg_grid(t, px);
            laplace_nll_2d(&pred, &tg, &cfg).0
        };
        let at_opt = eval(math::ln(e));
        for &delta in &[-0.2, -0.05, 0.05, 0.2] {
            assert!(eval(math::ln(e) + delta) > at_opt);
        }
        // Gradient vanishes at the stationary point.
        let mut px = base;
        px.log_div[div::X2D] = math::ln(e);
        let (pred, tg) = one_fg_grid(t, px);
        let (_, grad) = laplace_nll_2d(&pred, &tg, &cfg);
        assert!(grad.pixels[0].log_div[div::X2D].abs() < 1e-12);
    }

    #[test]
    fn orientation_examples() {
        let mut t = fg_target();
        t.t3d.cos_t = 0.0;
        t.t3d.sin_t = 1.0;
        let mut px = PixelPrediction::default();
        px.means[mean::COS] = 1.0;
        px.means[mean::SIN] = 0.0;
        let (pred, tg) = one_fg_grid(t, px);
        let (loss, _) = orientation_l1(&pred, &tg);
        assert!((loss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn total_is_sum_of_components() {
        let cfg = LossConfig::default();
        let t = fg_target();
        let mut rng = crate::rng::Rng::new(9);
        let mut px = PixelPrediction::default();
        for z in &mut px.logits {
            *z = rng.range(-2.0, 2.0);
        }
        for m in &mut px.means {
            *m = rng.range(-2.0, 2.0);
        }
        for d in &mut px.log_div {
            *d = rng.range(-1.0, 1.0);
        }
        let (pred, tg) = one_fg_grid(t, px);
        let (breakdown, _) = total_loss(&pred, &tg, &cfg);
        let c = focal_loss(&pred, &tg, &cfg).0;
        let l2 = laplace_nll_2d(&pred, &tg, &cfg).0;
        let l3 = laplace_nll_3d(&pred, &tg, &cfg).0;
        let o = orientation_l1(&pred, &tg).0;
        assert_eq!(breakdown.total(), c + l2 + l3 + o);
    }

    #[test]
    fn dd_l1_mode_drops_diversity_gradient() {
        let cfg = LossConfig {
            dd_uncertainty: false,
            ..Default::default()
        };
        let t = fg_target();
        let mut px = PixelPrediction::default();
        px.means[mean::DD] = t.t3d.dd - 0.5;
        let (pred, tg) = one_fg_grid(t, px);
        let (_, grad) = laplace_nll_3d(&pred, &tg, &cfg);
        assert_eq!(grad.pixels[0].log_div[div::DD], 0.0);
        assert!((grad.pixels[0].means[mean::DD] + 1.0).abs() < 1e-12);
    }
}
