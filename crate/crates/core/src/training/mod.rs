//! Staged supervised training with class-uniform crop sampling.

mod loss;
mod sampler;
mod source;

use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{compute_loss, cross_entropy, LossKind, LossPlugin, LossRegistry};
pub use sampler::{ClassUniformSampler, CropSpec};
pub use source::{DiskImages, ImageSource, MemoryImages};

use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::mask::MaskImage;
use crate::model::{Backbone, EncoderDecoder, ModelCheckpoint, SegmentationModel};
use crate::pool::{DatasetPool, Split};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub horizontal_flip: bool,
    /// Per-channel gain drawn from `[1 − j, 1 + j]`; 0 disables jitter.
    pub color_jitter: f32,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            horizontal_flip: true,
            color_jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f32,
    pub weight_decay: f32,
    pub learning_rate: f32,
    pub epochs_per_stage: usize,
    pub loss: LossKind,
    pub crop_size: usize,
    pub augment: AugmentSpec,
    /// The rate decays linearly (polynomial power 1) to this fraction of `learning_rate`.
    pub final_lr_fraction: f32,
    /// Crops per epoch; `None` means one per training image.
    pub crops_per_epoch: Option<usize>,
    /// Scales for validation passes; `None` uses the model's inference scales.
    pub eval_scales: Option<Vec<f64>>,
    /// Parameters whose names start with any of these prefixes are not updated.
    pub frozen_prefixes: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            momentum: 0.9,
            weight_decay: 5e-4,
            learning_rate: 0.002,
            epochs_per_stage: 10,
            loss: LossKind::CrossEntropy,
            crop_size: 64,
            augment: AugmentSpec::default(),
            final_lr_fraction: 0.1,
            crops_per_epoch: None,
            eval_scales: None,
            frozen_prefixes: Vec::new(),
        }
    }
}

impl TrainConfig {
    /// Settings for training the small CPU network from scratch on 64×64 synthetic scenes.
    /// The default rate suits a pre-trained backbone and barely moves a fresh one.
    pub fn desk() -> Self {
        Self {
            learning_rate: 0.05,
            crops_per_epoch: Some(128),
            eval_scales: Some(vec![0.5, 1.0]),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("final_lr_fraction", self.final_lr_fraction),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs_per_stage == 0 || self.crop_size == 0 {
            return Err(Error::Config(
                "batch_size, epochs_per_stage and crop_size must be at least 1".into(),
            ));
        }
        if let Some(s) = &self.eval_scales {
            crate::model::check_scales(s)?;
        }
        Ok(())
    }

    /// Learning rate at `step` of `total` steps.
    pub fn lr_at(&self, step: usize, total: usize) -> f32 {
        let floor = self.learning_rate * self.final_lr_fraction;
        if total <= 1 {
            return self.learning_rate;
        }
        let t = step.min(total - 1) as f32 / (total - 1) as f32;
        self.learning_rate + (floor - self.learning_rate) * t
    }
}

/// SGD with momentum and L2 weight decay.
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    momentum: f32,
    weight_decay: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Applies `grad / grad_scale` to every parameter not matched by `frozen`.
    pub fn step<B: Backbone>(&mut self, model: &mut SegmentationModel<B>, lr: f32, grad_scale: f32, frozen: &[String]) {
        let params = model.params_mut();
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        }
        for ((name, p), v) in params.into_iter().zip(&mut self.velocity) {
            if frozen.iter().any(|f| name.starts_with(f.as_str())) {
                continue;
            }
            for ((w, g), vel) in p.value.iter_mut().zip(&p.grad).zip(v.iter_mut()) {
                let d = g / grad_scale + self.weight_decay * *w;
                *vel = self.momentum * *vel + d;
                *w -= lr * *vel;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_miou_all: f64,
    pub val_miou_materials: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
}

impl EpochReport {
    fn score(&self) -> f64 {
        self.val_miou_all
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCheckpoint {
    pub stage: usize,
    pub best: EpochReport,
    pub epochs: Vec<EpochReport>,
    pub weights: ModelCheckpoint,
    /// Training image ids the stage saw, sorted.
    pub training_set: Vec<String>,
}

impl StageCheckpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// Index of the best epoch: highest all-class validation mIoU, earliest on ties.
pub fn best_epoch(reports: &[EpochReport]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        if best.is_none_or(|b| r.score() > reports[b].score()) {
            best = Some(i);
        }
    }
    best
}

/// Confusion matrix and metrics of multi-scale predictions over one split.
pub fn evaluate_split<B: Backbone>(
    model: &SegmentationModel<B>,
    pool: &DatasetPool,
    images: &dyn ImageSource,
    split: Split,
    scales: &[f64],
) -> Result<(ConfusionMatrix, MetricsReport)> {
    let mut cm = ConfusionMatrix::new(pool.taxonomy().len());
    for id in pool.ids_in(split) {
        let truth = pool.mask(&id)?;
        let pred = model.predict(images.image(&id)?.as_ref(), scales)?;
        cm.accumulate(&pred.mask, &truth)?;
    }
    let report = compute_metrics(&cm, pool.taxonomy())?;
    Ok((cm, report))
}

struct Sample {
    image_id: String,
    image: Tensor3,
    target: MaskImage,
}

fn prepare(spec: &CropSpec, pool: &DatasetPool, images: &dyn ImageSource, augment: &AugmentSpec, rng: &mut impl Rng) -> Result<Sample> {
    let img = images.image(&spec.image_id)?;
    let mask = pool.mask(&spec.image_id)?;
    let mut image = img.tensor().crop(spec.y0, spec.x0, spec.height, spec.width);
    let mut target = mask.crop(spec.y0, spec.x0, spec.height, spec.width);
    if augment.horizontal_flip && rng.random_bool(0.5) {
        image = image.flip_horizontal();
        target = target.flip_horizontal();
    }
    if augment.color_jitter > 0.0 {
        let j = augment.color_jitter;
        for c in 0..3 {
            let gain = rng.random_range(1.0 - j..=1.0 + j);
            for v in image.plane_mut(c) {
                *v = (*v * gain).clamp(0.0, 1.0);
            }
        }
    }
    Ok(Sample {
        image_id: spec.image_id.clone(),
        image,
        target,
    })
}

/// Runs `epochs_per_stage` epochs and leaves `model` holding the best epoch's weights.
pub fn train_stage<B: Backbone>(
    model: &mut SegmentationModel<B>,
    pool: &DatasetPool,
    images: &dyn ImageSource,
    config: &TrainConfig,
    stage: usize,
    seed: u64,
) -> Result<StageCheckpoint> {
    train_stage_with(model, pool, images, config, stage, seed, &LossRegistry::default())
}

pub fn train_stage_with<B: Backbone>(
    model: &mut SegmentationModel<B>,
    pool: &DatasetPool,
    images: &dyn ImageSource,
    config: &TrainConfig,
    stage: usize,
    seed: u64,
    registry: &LossRegistry,
) -> Result<StageCheckpoint> {
    config.validate()?;
    if model.num_classes() != pool.taxonomy().len() {
        return Err(Error::Precondition(format!(
            "model predicts {} classes but the pool taxonomy has {}",
            model.num_classes(),
            pool.taxonomy().len()
        )));
    }
    if pool.count(Split::Validation) == 0 {
        return Err(Error::Precondition("validation split is empty".into()));
    }
    let sampler = ClassUniformSampler::new(pool, config.crop_size)?;
    let crops = config.crops_per_epoch.unwrap_or(sampler.image_count()).max(1);
    let steps_per_epoch = crops.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs_per_stage;
    let scales = config
        .eval_scales
        .clone()
        .unwrap_or_else(|| model.config().inference_scales.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Sgd::new(config.momentum, config.weight_decay);
    let mut reports: Vec<EpochReport> = Vec::with_capacity(config.epochs_per_stage);
    let mut best_model = model.clone();
    let mut step = 0;

    for epoch in 0..config.epochs_per_stage {
        let plan = sampler.plan_epoch(crops, &mut rng);
        let mut aug_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let (tx, rx) = mpsc::sync_channel::<Result<Vec<Sample>>>(2);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let outcome: Result<()> = std::thread::scope(|scope| {
            scope.spawn(|| {
                for chunk in plan.chunks(config.batch_size) {
                    let batch = chunk
                        .iter()
                        .map(|spec| prepare(spec, pool, images, &config.augment, &mut aug_rng))
                        .collect::<Result<Vec<_>>>();
                    if tx.send(batch).is_err() {
                        break;
                    }
                }
                drop(tx);
            });
            for (batch_index, batch) in rx.iter().enumerate() {
                let batch = batch?;
                model.zero_grad();
                for sample in &batch {
                    let (fused, pass) = model.forward_train(&sample.image)?;
                    let (loss, grad) = registry.loss_and_grad(config.loss, &fused.values, &sample.target)?;
                    if !loss.is_finite() {
                        return Err(Error::Numeric(format!(
                            "non-finite loss at stage {stage}, epoch {epoch}, batch {batch_index} (image {})",
                            sample.image_id
                        )));
                    }
                    model.backward_train(pass, &grad)?;
                    loss_sum += loss;
                    loss_count += 1;
                }
                let lr = config.lr_at(step, total_steps);
                opt.step(model, lr, batch.len() as f32, &config.frozen_prefixes);
                step += 1;
            }
            Ok(())
        });
        if let Err(e) = outcome {
            *model = best_model;
            log::error!("stage {stage} aborted: {e}; restored last good weights");
            return Err(e);
        }

        let (confusion, metrics) = evaluate_split(model, pool, images, Split::Validation, &scales)?;
        let report = EpochReport {
            epoch,
            train_loss: loss_sum / loss_count.max(1) as f64,
            val_miou_all: metrics.miou_all,
            val_miou_materials: metrics.miou_materials,
            per_class_iou: metrics.per_class.iter().map(|c| c.iou).collect(),
            confusion,
        };
        log::info!(
            "stage {stage} epoch {epoch}: loss {:.4} val mIoU {:.4} (materials {:.4})",
            report.train_loss,
            report.val_miou_all,
            report.val_miou_materials.unwrap_or(f64::NAN)
        );
        let improved = reports.last().is_none() || report.score() > reports[best_epoch(&reports).unwrap()].score();
        if improved {
            best_model = model.clone();
        }
        reports.push(report);
    }

    *model = best_model;
    let best = reports[best_epoch(&reports).expect("at least one epoch")].clone();
    let mut training_set = pool.ids_in(Split::Train);
    training_set.sort();
    Ok(StageCheckpoint {
        stage,
        best,
        epochs: reports,
        weights: model.checkpoint(pool.taxonomy()),
        training_set,
    })
}

/// Default model type used by the campaign and the command-line tools.
pub type DefaultModel = SegmentationModel<EncoderDecoder>;
