//! Fitting a network to one light field: loss, learning-rate schedule, Adam,
//! and the epoch loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{compress_with_mask, prune, CompressedModel, PruneMask};
use crate::error::{Error, Result};
use crate::eval::{psnr, ssim, MetricsReport};
use crate::lightfield::{normalize_coord, LensletLightField};
use crate::net::{
    backward_encoded, decode_lightfield, forward_encoded, init_model, positional_encode, ArchConfig,
    GradientSet, MinlModel, NetKind, NORM_EPS,
};

/// How the sparsity penalty aggregates `|θ|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L1Reduction {
    /// `α·Σ|θ|`.
    #[default]
    Sum,
    /// `α·Σ|θ| / P`, with `P` the parameter count.
    Mean,
}

impl std::str::FromStr for L1Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            _ => Err(Error::InvalidArgument(format!("unknown L1 reduction {s:?} (expected sum or mean)"))),
        }
    }
}

/// Per-item distortion term of the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distortion {
    /// `√(Σr² + ε²)`: the unsquared per-micro-image L2 norm.
    #[default]
    L2Norm,
    /// `Σr²`.
    SquaredL2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub finetune_epochs: usize,
    pub distortion: Distortion,
    pub l1: L1Reduction,
    /// Record probe-subset PSNR every this many epochs (0 = never).
    pub probe_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 250,
            batch_size: 5000,
            alpha: 0.01,
            lr_start: 1e-2,
            lr_end: 1e-4,
            seed: 0,
            finetune_epochs: 30,
            distortion: Distortion::L2Norm,
            l1: L1Reduction::Sum,
            probe_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("training config: {m}")));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha {} must be >= 0", self.alpha));
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return bad(format!(
                "need 0 < lr_end <= lr_start (got {} and {})",
                self.lr_end, self.lr_start
            ));
        }
        Ok(())
    }

    /// Coefficient applied to `Σ|θ|` for a model with `params` parameters.
    pub fn effective_alpha(&self, params: usize) -> f64 {
        match self.l1 {
            L1Reduction::Sum => self.alpha,
            L1Reduction::Mean => self.alpha / params.max(1) as f64,
        }
    }
}

/// `(1/B)·Σ_i √(‖pred_i − target_i‖² + ε²) + α·Σ|θ|`.
pub fn loss(
    preds: &[f32],
    targets: &[f32],
    item_len: usize,
    theta: &MinlModel,
    alpha: f64,
    distortion: Distortion,
) -> Result<f64> {
    if preds.len() != targets.len() || item_len == 0 || preds.len() % item_len != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets with item length {item_len}",
            preds.len(),
            targets.len()
        )));
    }
    let batch = preds.len() / item_len;
    if batch == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let eps2 = (NORM_EPS * NORM_EPS) as f32;
    let mut total = 0.0f64;
    for (p, t) in preds.chunks_exact(item_len).zip(targets.chunks_exact(item_len)) {
        let ss: f32 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        total += match distortion {
            Distortion::L2Norm => (ss + eps2).sqrt() as f64,
            Distortion::SquaredL2 => ss as f64,
        };
    }
    Ok(total / batch as f64 + alpha * theta.l1_norm())
}

/// Geometric decay from `lr_start` at epoch 0 to `lr_end` at the last epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.lr_start;
    }
    let frac = epoch as f64 / (cfg.epochs - 1) as f64;
    cfg.lr_start * (cfg.lr_end / cfg.lr_start).powf(frac)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub t: u64,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamState {
    pub fn new(model: &MinlModel) -> Self {
        let zeros: Vec<Vec<f32>> = model.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update of `model` in place.
pub fn adam_step(
    state: &mut AdamState,
    model: &mut MinlModel,
    grads: &GradientSet<f32>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate {lr} must be > 0")));
    }
    if grads.tensors.len() != model.tensors.len()
        || state.m.len() != model.tensors.len()
        || grads
            .tensors
            .iter()
            .zip(&model.tensors)
            .zip(&state.m)
            .any(|((g, t), m)| g.len() != t.len() || m.len() != t.len())
    {
        return Err(Error::ShapeMismatch(
            "gradients, optimizer state and parameters are not congruent".into(),
        ));
    }
    for (i, g) in grads.tensors.iter().enumerate() {
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient tensor {i}, entry {j} ({}) at step {}",
                g[j],
                state.t + 1
            )));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = (1.0 - (b1 as f64).powi(state.t as i32)) as f32;
    let bc2 = (1.0 - (b2 as f64).powi(state.t as i32)) as f32;
    let lr = lr as f32;
    for ((theta, g), (m, v)) in model
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((w, gi), mi), vi) in theta.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub psnr_db: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `epoch,loss,lr,psnr,seconds` rows; PSNR left empty when not probed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,lr,psnr,seconds\n");
        for r in &self.records {
            let psnr = r.psnr_db.map(|p| format!("{p:.4}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.8},{:.6e},{},{:.3}\n",
                r.epoch, r.mean_loss, r.lr, psnr, r.seconds
            ));
        }
        out
    }
}

/// Encoded inputs and targets for every micro-image, in grid order.
pub(crate) struct TrainingSet {
    pub inputs: Vec<f32>,
    pub targets: Vec<f32>,
    pub count: usize,
    pub input_dim: usize,
    pub item_len: usize,
}

impl TrainingSet {
    pub fn new(lf: &LensletLightField, arch: &ArchConfig) -> Result<Self> {
        if arch.kind != NetKind::MicroImage {
            return Err(Error::InvalidArgument(
                "training needs a micro-image architecture".into(),
            ));
        }
        if arch.output_side != lf.angular_side() {
            return Err(Error::ShapeMismatch(format!(
                "architecture emits {0}x{0} micro-images, light field has A={1}",
                arch.output_side,
                lf.angular_side()
            )));
        }
        let dims = lf.dims();
        let mut inputs = Vec::with_capacity(dims.count() * arch.input_dim());
        for t in 0..dims.sy {
            for s in 0..dims.sx {
                let enc = positional_encode(normalize_coord(s, t, dims)?, arch.levels);
                inputs.extend(enc.values.iter().map(|v| *v as f32));
            }
        }
        Ok(Self {
            inputs,
            targets: lf.values().to_vec(),
            count: dims.count(),
            input_dim: arch.input_dim(),
            item_len: lf.mi_len(),
        })
    }

    fn gather(&self, order: &[usize]) -> (Vec<f32>, Vec<f32>) {
        let mut x = Vec::with_capacity(order.len() * self.input_dim);
        let mut y = Vec::with_capacity(order.len() * self.item_len);
        for &i in order {
            x.extend_from_slice(&self.inputs[i * self.input_dim..(i + 1) * self.input_dim]);
            y.extend_from_slice(&self.targets[i * self.item_len..(i + 1) * self.item_len]);
        }
        (x, y)
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// PSNR of the clamped predictions on a fixed evenly spaced subset of MIs.
fn probe_psnr(model: &MinlModel, set: &TrainingSet) -> Result<f64> {
    let step = (set.count / 256).max(1);
    let idx: Vec<usize> = (0..set.count).step_by(step).collect();
    let (x, y) = set.gather(&idx);
    let pred = forward_encoded(model, &x, idx.len(), None)?;
    let mse: f64 = pred
        .iter()
        .zip(&y)
        .map(|(p, t)| {
            let d = (p.clamp(0.0, 1.0) - t) as f64;
            d * d
        })
        .sum::<f64>()
        / y.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Runs `epochs` passes of shuffled mini-batch Adam from `model`.
///
/// `lr_of_epoch` supplies the step size. With a mask installed, pruned
/// entries are zeroed before the first step and after every step.
pub(crate) fn run_epochs(
    set: &TrainingSet,
    model: &mut MinlModel,
    cfg: &TrainConfig,
    epochs: usize,
    lr_of_epoch: &dyn Fn(usize) -> f64,
    mask: Option<&PruneMask>,
    seed: u64,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if let Some(mask) = mask {
        mask.apply(model)?;
    }
    let mut adam = AdamState::new(model);
    let mut history = TrainHistory::default();
    let alpha = cfg.effective_alpha(model.param_count());
    let mut order: Vec<usize> = (0..set.count).collect();
    for epoch in 0..epochs {
        let started = Instant::now();
        let lr = lr_of_epoch(epoch);
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(seed, epoch));
        let mut weighted = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (x, y) = set.gather(batch);
            let (loss, grads) =
                backward_encoded(model, &x, &y, batch.len(), alpha, cfg.distortion)?;
            adam_step(&mut adam, model, &grads, lr)?;
            if let Some(mask) = mask {
                mask.apply(model)?;
            }
            weighted += loss * batch.len() as f64;
        }
        let psnr_db = if cfg.probe_every > 0 && (epoch + 1) % cfg.probe_every == 0 {
            Some(probe_psnr(model, set)?)
        } else {
            None
        };
        history.records.push(EpochRecord {
            epoch,
            mean_loss: weighted / set.count as f64,
            lr,
            psnr_db,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(history)
}

/// Trains a fresh network on `lf`: `cfg.epochs` epochs over all micro-images.
pub fn fit(
    lf: &LensletLightField,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<(MinlModel, TrainHistory)> {
    cfg.validate()?;
    fit_from(lf, init_model(arch, cfg.seed)?, cfg)
}

/// [`fit`] starting from the given parameters instead of a fresh init.
pub fn fit_from(
    lf: &LensletLightField,
    mut model: MinlModel,
    cfg: &TrainConfig,
) -> Result<(MinlModel, TrainHistory)> {
    cfg.validate()?;
    model.check_shapes()?;
    let set = TrainingSet::new(lf, &model.arch)?;
    let history = run_epochs(&set, &mut model, cfg, cfg.epochs, &|e| lr_at(e, cfg), None, cfg.seed)?;
    Ok((model, history))
}

/// Continues training `model` with `mask` held fixed for
/// `cfg.finetune_epochs` epochs at `cfg.lr_end`.
pub fn finetune(
    lf: &LensletLightField,
    model: &MinlModel,
    mask: &PruneMask,
    cfg: &TrainConfig,
) -> Result<(MinlModel, TrainHistory)> {
    let set = TrainingSet::new(lf, &model.arch)?;
    let mut tuned = model.clone();
    let lr = cfg.lr_end;
    let history = run_epochs(
        &set,
        &mut tuned,
        cfg,
        cfg.finetune_epochs,
        &|_| lr,
        Some(mask),
        cfg.seed.wrapping_add(1),
    )?;
    Ok((tuned, history))
}

/// Prunes `model`, fine-tunes it with the mask held fixed, then quantizes
/// and entropy-codes the result.
pub fn compress_finetuned(
    lf: &LensletLightField,
    model: &MinlModel,
    ratio: f64,
    bits: u8,
    cfg: &TrainConfig,
) -> Result<(CompressedModel, TrainHistory)> {
    let (pruned, mask) = prune(model, ratio)?;
    let (tuned, history) = finetune(lf, &pruned, &mask, cfg)?;
    Ok((compress_with_mask(&tuned, &mask, bits)?, history))
}

/// Decodes `model` and scores it against `lf_gt`.
pub fn evaluate_reconstruction(model: &MinlModel, lf_gt: &LensletLightField) -> Result<MetricsReport> {
    if model.arch.output_side != lf_gt.angular_side() {
        return Err(Error::ShapeMismatch(format!(
            "model emits A={}, ground truth has A={}",
            model.arch.output_side,
            lf_gt.angular_side()
        )));
    }
    let started = Instant::now();
    let recon = decode_lightfield(model, lf_gt.dims())?;
    let decode_seconds = started.elapsed().as_secs_f64();
    let mut report = MetricsReport::new(psnr(&recon, lf_gt, 1.0)?, ssim(&recon, lf_gt)?, lf_gt);
    report.decode_seconds = Some(decode_seconds);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Tensor;

    fn scalar_model(values: &[f32]) -> MinlModel {
        let mut m = MinlModel::zeros(ArchConfig::pixel(1, 1)).unwrap();
        m.tensors = vec![Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }];
        m
    }

    #[test]
    fn loss_examples() {
        let theta = scalar_model(&[0.0]);
        let p = vec![0.3f32; 363];
        assert!(loss(&p, &p, 363, &theta, 0.0, Distortion::L2Norm).unwrap() <= 1.1e-8);

        let t = vec![0.0f32; 363];
        let r = vec![0.1f32; 363];
        let l = loss(&r, &t, 363, &theta, 0.0, Distortion::L2Norm).unwrap();
        assert!((l - 0.1 * 363f64.sqrt()).abs() < 1e-5, "{l}");
        assert!((l - 1.90526).abs() < 1e-5);

        let theta = scalar_model(&[1.0, -2.0]);
        let l = loss(&t, &t, 363, &theta, 0.01, Distortion::L2Norm).unwrap();
        assert!((l - 0.03).abs() < 1e-7, "{l}");

        assert!(loss(&t[..10], &t, 363, &theta, 0.0, Distortion::L2Norm).is_err());
    }

    #[test]
    fn loss_is_batch_permutation_invariant() {
        let theta = scalar_model(&[0.5]);
        let a: Vec<f32> = (0..30).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..30).map(|i| (i as f32 * 0.11).cos()).collect();
        let l1 = loss(&a, &b, 10, &theta, 0.01, Distortion::L2Norm).unwrap();
        let swap = |v: &[f32]| [&v[20..30], &v[0..10], &v[10..20]].concat();
        let l2 = loss(&swap(&a), &swap(&b), 10, &theta, 0.01, Distortion::L2Norm).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 1e-2);
        assert!((lr_at(249, &cfg) - 1e-4).abs() < 1e-15);
        let odd = TrainConfig {
            epochs: 251,
            ..cfg.clone()
        };
        assert!((lr_at(125, &odd) - 1e-3).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for e in 0..cfg.epochs {
            let lr = lr_at(e, &cfg);
            assert!(lr <= last);
            last = lr;
        }
        let one = TrainConfig {
            epochs: 1,
            ..cfg.clone()
        };
        assert_eq!(lr_at(0, &one), 1e-2);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut model = scalar_model(&[0.25, -1.5]);
        let before = model.clone();
        let mut st = AdamState::new(&model);
        let g = GradientSet {
            tensors: vec![vec![0.0, 0.0]],
        };
        adam_step(&mut st, &mut model, &g, 0.01).unwrap();
        assert_eq!(model, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step() {
        let mut model = scalar_model(&[0.0]);
        let mut st = AdamState::new(&model);
        let g = GradientSet {
            tensors: vec![vec![1.0]],
        };
        adam_step(&mut st, &mut model, &g, 0.01).unwrap();
        let expected = -0.01 / (1.0 + 1e-8);
        assert!((model.tensors[0].data[0] as f64 - expected).abs() < 1e-9);
        assert!(st.v[0][0] >= 0.0);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut model = scalar_model(&[0.0]);
        let mut st = AdamState::new(&model);
        let g = GradientSet {
            tensors: vec![vec![f32::NAN]],
        };
        let err = adam_step(&mut st, &mut model, &g, 0.01).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn l1_reduction_scales_alpha() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.effective_alpha(400), 0.01);
        let mean = TrainConfig {
            l1: L1Reduction::Mean,
            ..cfg
        };
        assert!((mean.effective_alpha(400) - 2.5e-5).abs() < 1e-18);
        assert_eq!("mean".parse::<L1Reduction>().unwrap(), L1Reduction::Mean);
        assert!("max".parse::<L1Reduction>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            lr_end: 0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
