//! Per-point prediction head: a two-layer MLP with tanh in between, applied
//! independently at every valid raster pixel. It stands in for a full image
//! backbone so the encode → loss → train → decode loop can be exercised end
//! to end, deterministically and on one core.

use crate::loss::{
    self, LossBreakdown, LossConfig, LossGrad, PixelPrediction, PredictionGrid, NUM_DIVS,
    NUM_MEANS,
};
use crate::math;
use crate::raster::DepthRaster;
use crate::rng::Rng;
use crate::synth::AppearanceImage;
use crate::targets::{TargetGrid, NUM_CLASSES_BG};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Appearance channels per pixel.
pub const APPEARANCE_DIM: usize = 3;
/// Per-pixel feature vector length.
pub const FEATURE_DIM: usize = 8 + APPEARANCE_DIM;
/// Raw head outputs per pixel: class logits, regression means,
/// log-diversities.
pub const OUTPUT_DIM: usize = NUM_CLASSES_BG + NUM_MEANS + NUM_DIVS;

/// Feature extraction configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Square patch side for the local depth statistics.
    pub patch: usize,
    /// Range normalizer in meters.
    pub range_norm: f64,
    /// Gain applied to relative depth differences.
    pub rel_depth_gain: f64,
    /// Clamp on the scaled relative depth differences.
    pub rel_depth_clamp: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            patch: 5,
            range_norm: 500.0,
            rel_depth_gain: 20.0,
            rel_depth_clamp: 10.0,
        }
    }
}

/// Errors from the head.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadError {
    /// Feature extraction asked for a pixel without a lidar return.
    NonSentinelPixel(usize),
    /// Input length does not match the parameter dimensions.
    DimensionMismatch { expected: usize, got: usize },
    /// Training aborted on a non-finite loss.
    Diverged { step: usize, detail: String },
    /// Training needs at least one sample.
    EmptyDataset,
}

impl fmt::Display for HeadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadError::NonSentinelPixel(i) => write!(f, "pixel {i} has no lidar return"),
            HeadError::DimensionMismatch { expected, got } => {
                write!(f, "feature dimension mismatch: expected {expected}, got {got}")
            }
            HeadError::Diverged { step, detail } => {
                write!(f, "training diverged at step {step}: {detail}")
            }
            HeadError::EmptyDataset => write!(f, "training dataset is empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for HeadError {}

/// Deterministic per-pixel feature vector: normalized pixel position,
/// normalized range, patch occupancy and relative-depth statistics over a
/// `patch` x `patch` neighborhood (zero-padded at borders), and the
/// appearance channels at the pixel.
pub fn extract_features(
    raster: &DepthRaster,
    appearance: &AppearanceImage,
    raster_idx: usize,
    cfg: &FeatureConfig,
) -> Result<[f64; FEATURE_DIM], HeadError> {
    if raster.sentinel_ch.get(raster_idx) != Some(&1) {
        return Err(HeadError::NonSentinelPixel(raster_idx));
    }
    debug_assert_eq!(appearance.width, raster.width);
    debug_assert_eq!(appearance.height, raster.height);
    let w = raster.width as isize;
    let h = raster.height as isize;
    let x = (raster_idx % raster.width as usize) as isize;
    let y = (raster_idx / raster.width as usize) as isize;
    let r_center = raster.range_ch[raster_idx];
    let half = (cfg.patch / 2) as isize;

    let mut valid = 1usize; // center counts itself
    let mut diffs: Vec<f64> = Vec::with_capacity(cfg.patch * cfg.patch);
    for dy in -half..=half {
        for dx in -half..=half {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let nidx = (ny * w + nx) as usize;
            if raster.sentinel_ch[nidx] == 1 {
                valid += 1;
                let rel = (raster.range_ch[nidx] - r_center) / r_center * cfg.rel_depth_gain;
                diffs.push(rel.clamp(-cfg.rel_depth_clamp, cfg.rel_depth_clamp));
            }
        }
    }
    let (mut mean, mut std, mut min, mut max) = (0.0, 0.0, 0.0, 0.0);
    if !diffs.is_empty() {
        mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / diffs.len() as f64;
        std = math::sqrt(var);
        min = diffs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        max = diffs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    }

    let mut out = [0.0; FEATURE_DIM];
    out[0] = (x as f64 + 0.5) / raster.width as f64;
    out[1] = (y as f64 + 0.5) / raster.height as f64;
    out[2] = r_center / cfg.range_norm;
    out[3] = valid as f64 / (cfg.patch * cfg.patch) as f64;
    out[4] = mean;
    out[5] = std;
    out[6] = min;
    out[7] = max;
    for c in 0..APPEARANCE_DIM {
        out[8 + c] = appearance.at(raster_idx, c);
    }
    Ok(out)
}

/// Two affine layers with tanh in between.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// hidden_dim x input_dim, row major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// output_dim x hidden_dim, row major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        HeadParams {
            input_dim,
            hidden_dim,
            output_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; output_dim * hidden_dim],
            b2: vec![0.0; output_dim],
        }
    }

    /// Uniform Glorot initialization.
    pub fn init(seed: u64, input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        let mut rng = Rng::derive(seed, 0x696e6974);
        let mut params = HeadParams::zeros(input_dim, hidden_dim, output_dim);
        let lim1 = math::sqrt(6.0 / (input_dim + hidden_dim) as f64);
        for w in &mut params.w1 {
            *w = rng.range(-lim1, lim1);
        }
        let lim2 = math::sqrt(6.0 / (hidden_dim + output_dim) as f64);
        for w in &mut params.w2 {
            *w = rng.range(-lim2, lim2);
        }
        params
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters in a fixed order (w1, b1, w2, b2).
    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }

    fn hidden(&self, features: &[f64], out: &mut [f64]) {
        for (hi, o) in out.iter_mut().enumerate() {
            let mut acc = self.b1[hi];
            let row = &self.w1[hi * self.input_dim..(hi + 1) * self.input_dim];
            for (w, x) in row.iter().zip(features) {
                acc += w * x;
            }
            *o = math::tanh(acc);
        }
    }

    fn output(&self, hidden: &[f64], out: &mut [f64]) {
        for (oi, o) in out.iter_mut().enumerate() {
            let mut acc = self.b2[oi];
            let row = &self.w2[oi * self.hidden_dim..(oi + 1) * self.hidden_dim];
            for (w, h) in row.iter().zip(hidden) {
                acc += w * h;
            }
            *o = acc;
        }
    }
}

fn split_outputs(o: &[f64]) -> PixelPrediction {
    let mut px = PixelPrediction::default();
    px.logits.copy_from_slice(&o[..NUM_CLASSES_BG]);
    px.means
        .copy_from_slice(&o[NUM_CLASSES_BG..NUM_CLASSES_BG + NUM_MEANS]);
    px.log_div.copy_from_slice(&o[NUM_CLASSES_BG + NUM_MEANS..]);
    px
}

/// Forward pass for a single pixel.
pub fn forward(params: &HeadParams, features: &[f64]) -> Result<PixelPrediction, HeadError> {
    if features.len() != params.input_dim {
        return Err(HeadError::DimensionMismatch {
            expected: params.input_dim,
            got: features.len(),
        });
    }
    let mut hidden = vec![0.0; params.hidden_dim];
    let mut out = vec![0.0; params.output_dim];
    params.hidden(features, &mut hidden);
    params.output(&hidden, &mut out);
    Ok(split_outputs(&out))
}

/// Forward pass over a grid of per-pixel features, caching activations for
/// the backward pass.
pub struct ForwardPass {
    pub grid: PredictionGrid,
    hidden: Vec<f64>,
}

pub fn forward_grid(
    params: &HeadParams,
    features: &[[f64; FEATURE_DIM]],
    width: u32,
    height: u32,
) -> Result<ForwardPass, HeadError> {
    if params.input_dim != FEATURE_DIM {
        return Err(HeadError::DimensionMismatch {
            expected: FEATURE_DIM,
            got: params.input_dim,
        });
    }
    let mut hidden = vec![0.0; features.len() * params.hidden_dim];
    let mut out = vec![0.0; params.output_dim];
    let mut pixels = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let h = &mut hidden[i * params.hidden_dim..(i + 1) * params.hidden_dim];
        params.hidden(f, h);
        params.output(h, &mut out);
        pixels.push(split_outputs(&out));
    }
    Ok(ForwardPass {
        grid: PredictionGrid {
            width,
            height,
            pixels,
        },
        hidden,
    })
}

/// Gradient of a scalar loss with respect to every head parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros(params: &HeadParams) -> Self {
        ParamGrad {
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: vec![0.0; params.b2.len()],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }
}

/// Backpropagate per-pixel output gradients through the head.
pub fn backward(
    params: &HeadParams,
    features: &[[f64; FEATURE_DIM]],
    pass: &ForwardPass,
    loss_grad: &LossGrad,
) -> ParamGrad {
    assert_eq!(features.len(), loss_grad.pixels.len());
    let mut grad = ParamGrad::zeros(params);
    let hd = params.hidden_dim;
    let mut go = vec![0.0; params.output_dim];
    let mut gh = vec![0.0; hd];
    for (i, (f, pg)) in features.iter().zip(&loss_grad.pixels).enumerate() {
        go[..NUM_CLASSES_BG].copy_from_slice(&pg.logits);
        go[NUM_CLASSES_BG..NUM_CLASSES_BG + NUM_MEANS].copy_from_slice(&pg.means);
        go[NUM_CLASSES_BG + NUM_MEANS..].copy_from_slice(&pg.log_div);
        let hidden = &pass.hidden[i * hd..(i + 1) * hd];

        gh.fill(0.0);
        for (oi, &g) in go.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b2[oi] += g;
            let w_row = &params.w2[oi * hd..(oi + 1) * hd];
            let gw_row = &mut grad.w2[oi * hd..(oi + 1) * hd];
            for hi in 0..hd {
                gw_row[hi] += g * hidden[hi];
                gh[hi] += g * w_row[hi];
            }
        }
        for hi in 0..hd {
            let ga = gh[hi] * (1.0 - hidden[hi] * hidden[hi]);
            if ga == 0.0 {
                continue;
            }
            grad.b1[hi] += ga;
            let gw_row = &mut grad.w1[hi * params.input_dim..(hi + 1) * params.input_dim];
            for (gw, x) in gw_row.iter_mut().zip(f) {
                *gw += ga * x;
            }
        }
    }
    grad
}

/// Supervision modes for the ablation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    /// 3D targets only; the 2D branch receives no gradient.
    ThreeDOnly,
    /// 3D plus 2D boxes derived by projecting the 3D labels.
    ThreeDProj2D,
    /// 3D plus true (tight silhouette) 2D boxes.
    ThreeD2D,
}

impl Supervision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Supervision::ThreeDOnly => "3d",
            Supervision::ThreeDProj2D => "3d+proj2d",
            Supervision::ThreeD2D => "3d+2d",
        }
    }

    pub fn parse(s: &str) -> Option<Supervision> {
        match s {
            "3d" => Some(Supervision::ThreeDOnly),
            "3d+proj2d" => Some(Supervision::ThreeDProj2D),
            "3d+2d" => Some(Supervision::ThreeD2D),
            _ => None,
        }
    }

    /// Whether the 2D loss contributes.
    pub fn uses_2d_loss(&self) -> bool {
        !matches!(self, Supervision::ThreeDOnly)
    }
}

/// One training sample: per-pixel features plus aligned targets.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: Vec<[f64; FEATURE_DIM]>,
    pub targets: TargetGrid,
}

/// Loss and parameter gradient for one sample under a supervision mode.
pub fn loss_and_grad(
    params: &HeadParams,
    sample: &TrainSample,
    loss_cfg: &LossConfig,
    supervision: Supervision,
) -> Result<(LossBreakdown, ParamGrad), HeadError> {
    let pass = forward_grid(
        params,
        &sample.features,
        sample.targets.width,
        sample.targets.height,
    )?;
    let (class, mut grad) = loss::focal_loss(&pass.grid, &sample.targets, loss_cfg);
    let mut breakdown = LossBreakdown {
        class,
        l2d: 0.0,
        l3d: 0.0,
    };
    if supervision.uses_2d_loss() {
        let (l2d, g) = loss::laplace_nll_2d(&pass.grid, &sample.targets, loss_cfg);
        breakdown.l2d = l2d;
        grad.accumulate(&g);
    }
    let (l3d, g3) = loss::laplace_nll_3d(&pass.grid, &sample.targets, loss_cfg);
    let (orient, go) = loss::orientation_l1(&pass.grid, &sample.targets);
    breakdown.l3d = l3d + orient;
    grad.accumulate(&g3);
    grad.accumulate(&go);
    let pgrad = backward(params, &sample.features, &pass, &grad);
    Ok((breakdown, pgrad))
}

/// Optimizer configuration: adaptive-moment gradient descent with a
/// staircase exponential learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate multiplier applied every `decay_every` steps.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay: 0.9,
            decay_every: 1000,
            epochs: 60,
        }
    }
}

/// Adaptive-moment state over the flattened parameter vector.
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut HeadParams, grad: &ParamGrad, cfg: &OptimConfig, lr: f64) {
        self.t += 1;
        let b1t = 1.0 - math::powf(cfg.beta1, self.t as f64);
        let b2t = 1.0 - math::powf(cfg.beta2, self.t as f64);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / b1t;
            let vhat = *v / b2t;
            *p -= lr * mhat / (math::sqrt(vhat) + cfg.eps);
        }
    }
}

/// Loss history entry, averaged over the epoch's samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub class: f64,
    pub l2d: f64,
    pub l3d: f64,
    pub total: f64,
}

/// Train the head. One optimizer step per sample, samples shuffled each
/// epoch under the seed. Deterministic for a fixed seed; aborts with a
/// diagnostic if the loss stops being finite.
pub fn train(
    dataset: &[TrainSample],
    loss_cfg: &LossConfig,
    optim: &OptimConfig,
    supervision: Supervision,
    hidden_dim: usize,
    seed: u64,
) -> Result<(HeadParams, Vec<EpochLoss>), HeadError> {
    if dataset.is_empty() {
        return Err(HeadError::EmptyDataset);
    }
    let mut params = HeadParams::init(seed, FEATURE_DIM, hidden_dim, OUTPUT_DIM);
    let mut adam = AdamState::new(params.n_params());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = Rng::derive(seed, 0x73687566);
    let mut history = Vec::with_capacity(optim.epochs);
    let mut step = 0usize;
    for epoch in 0..optim.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut sums = (0.0, 0.0, 0.0);
        for &si in &order {
            let (breakdown, grad) = loss_and_grad(&params, &dataset[si], loss_cfg, supervision)?;
            let total = breakdown.total();
            if !total.is_finite() {
                return Err(HeadError::Diverged {
                    step,
                    detail: alloc::format!(
                        "class {} l2d {} l3d {}",
                        breakdown.class,
                        breakdown.l2d,
                        breakdown.l3d
                    ),
                });
            }
            let lr = optim.lr * math::powf(optim.lr_decay, (step / optim.decay_every) as f64);
            adam.step(&mut params, &grad, optim, lr);
            step += 1;
            sums.0 += breakdown.class;
            sums.1 += breakdown.l2d;
            sums.2 += breakdown.l3d;
        }
        let n = dataset.len() as f64;
        history.push(EpochLoss {
            epoch,
            class: sums.0 / n,
            l2d: sums.1 / n,
            l3d: sums.2 / n,
            total: (sums.0 + sums.1 + sums.2) / n,
        });
    }
    Ok((params, history))
}
