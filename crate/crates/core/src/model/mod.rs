//! Multi-scale segmentation network with hierarchical attention fusion.
//!
//! Each scale runs the same weights: the image is resized by the scale factor, passed
//! through the [`Backbone`], and the features are resized back to the input
//! resolution before the segmentation and attention heads. Score maps from several
//! scales are then blended lowest scale first (see [`fusion`]).

mod backbone;
mod checkpoint;
pub mod fusion;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use backbone::{Backbone, BackboneConfig, EncoderDecoder};
pub use checkpoint::{ModelCheckpoint, CHECKPOINT_SCHEMA_VERSION};
pub use fusion::{fuse_backward, fuse_values, FusionGrads};

use crate::active::uncertainty::{margin_uncertainty, UncertaintyMap};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::mask::{MaskImage, Provenance};
use crate::nn::{relu_backward, relu_in_place, sigmoid, Conv2d, ConvCache, Param, ResizePlan};
use crate::taxonomy::ClassId;
use crate::tensor::Tensor3;

/// Per-class logits from the segmentation head for one scale, at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub values: Tensor3,
    pub scale: f64,
}

/// Blend weights in `[0, 1]` from the attention head: 1 plane (shared) or C planes.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub weights: Tensor3,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedScoreMap {
    pub values: Tensor3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneFeatures {
    /// Feature planes at the backbone's native resolution for the scaled input.
    pub embedding: Tensor3,
    /// Spatial mean of `embedding`, one value per feature channel.
    pub pooled: Vec<f32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionArity {
    /// One spatial weight broadcast over all classes.
    #[default]
    Shared,
    PerClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_classes: usize,
    /// Adjacent pair used during training, low then high.
    pub train_scales: [f64; 2],
    pub inference_scales: Vec<f64>,
    pub backbone: BackboneConfig,
    pub attention: AttentionArity,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            train_scales: [0.5, 1.0],
            inference_scales: vec![0.5, 1.0, 2.0],
            backbone: BackboneConfig::default(),
            attention: AttentionArity::Shared,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        check_scales(&self.train_scales)?;
        check_scales(&self.inference_scales)
    }

    pub fn is_configured_scale(&self, scale: f64) -> bool {
        self.train_scales.contains(&scale) || self.inference_scales.contains(&scale)
    }

    fn attention_channels(&self) -> usize {
        match self.attention {
            AttentionArity::Shared => 1,
            AttentionArity::PerClass => self.num_classes,
        }
    }
}

pub fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::Config("scale list is empty".into()));
    }
    if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Config(format!("scales must be positive: {scales:?}")));
    }
    if scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("scales must be strictly increasing: {scales:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleOutput {
    pub scores: ScoreMap,
    pub attention: AttentionMap,
    pub features: BackboneFeatures,
}

/// Output of [`SegmentationModel::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub fused: FusedScoreMap,
    pub mask: MaskImage,
    pub uncertainty: UncertaintyMap,
    /// Features from the 1.0 scale when it is in the scale list, else from the lowest scale.
    pub features: BackboneFeatures,
}

struct HeadCache {
    seg_hidden: (ConvCache, Tensor3),
    classifier: ConvCache,
    attn_hidden: (ConvCache, Tensor3),
    attn_out: ConvCache,
    attention: Tensor3,
}

struct ScaleCache<C> {
    backbone: C,
    feature_resize: ResizePlan,
    heads: HeadCache,
}

/// Everything needed to backpropagate one training sample through the scale pair.
pub struct TrainPass<C> {
    low: ScaleCache<C>,
    high: ScaleCache<C>,
    h_low: Tensor3,
    a_low: Tensor3,
    h_high: Tensor3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationModel<B: Backbone = EncoderDecoder> {
    config: ModelConfig,
    backbone: B,
    seg_hidden: Conv2d,
    classifier: Conv2d,
    attn_hidden: Conv2d,
    attn_out: Conv2d,
}

/// Pixel values in `[0, 1]` are centered and scaled before the backbone sees them.
const INPUT_MEAN: f32 = 0.5;
const INPUT_STD: f32 = 0.25;

fn normalize_input(t: &mut Tensor3) {
    for v in &mut t.data {
        *v = (*v - INPUT_MEAN) / INPUT_STD;
    }
}

fn scaled_len(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

impl<B: Backbone> SegmentationModel<B> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let backbone = B::build(&config.backbone, &mut rng)?;
        let d = backbone.out_channels();
        let hidden = d.div_ceil(2).max(1);
        let seg_hidden = Conv2d::pointwise(d, d, &mut rng);
        let classifier = Conv2d::pointwise(d, config.num_classes, &mut rng);
        let attn_hidden = Conv2d::pointwise(d, hidden, &mut rng);
        let attn_out = Conv2d::pointwise(hidden, config.attention_channels(), &mut rng);
        Ok(Self {
            config,
            backbone,
            seg_hidden,
            classifier,
            attn_hidden,
            attn_out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn backbone(&self) -> &B {
        &self.backbone
    }

    pub fn set_inference_scales(&mut self, scales: Vec<f64>) -> Result<()> {
        check_scales(&scales)?;
        self.config.inference_scales = scales;
        Ok(())
    }

    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut out = self.backbone.params();
        for (name, conv) in [
            ("seg_hidden", &self.seg_hidden),
            ("classifier", &self.classifier),
            ("attn_hidden", &self.attn_hidden),
            ("attn_out", &self.attn_out),
        ] {
            out.push((format!("{name}.weight"), &conv.weight));
            out.push((format!("{name}.bias"), &conv.bias));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = self.backbone.params_mut();
        for (name, conv) in [
            ("seg_hidden", &mut self.seg_hidden),
            ("classifier", &mut self.classifier),
            ("attn_hidden", &mut self.attn_hidden),
            ("attn_out", &mut self.attn_out),
        ] {
            out.push((format!("{name}.weight"), &mut conv.weight));
            out.push((format!("{name}.bias"), &mut conv.bias));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    fn run_heads(&self, features: &Tensor3) -> (Tensor3, Tensor3, HeadCache) {
        let (mut sh, sh_cache) = self.seg_hidden.forward(features);
        relu_in_place(&mut sh);
        let (scores, cls_cache) = self.classifier.forward(&sh);
        let (mut ah, ah_cache) = self.attn_hidden.forward(features);
        relu_in_place(&mut ah);
        let (mut attention, ao_cache) = self.attn_out.forward(&ah);
        attention.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        let cache = HeadCache {
            seg_hidden: (sh_cache, sh),
            classifier: cls_cache,
            attn_hidden: (ah_cache, ah),
            attn_out: ao_cache,
            attention: attention.clone(),
        };
        (scores, attention, cache)
    }

    fn forward_scale(&self, image: &Tensor3, scale: f64) -> Result<(ScaleOutput, ScaleCache<B::Cache>)> {
        if image.plane_len() == 0 {
            return Err(Error::Precondition("image is empty".into()));
        }
        let (h, w) = (image.height, image.width);
        let (sh, sw) = (scaled_len(h, scale), scaled_len(w, scale));
        let mut scaled = ResizePlan::new(h, w, sh, sw).forward(image);
        normalize_input(&mut scaled);
        let (features, backbone_cache) = self.backbone.forward(&scaled);
        let feature_resize = ResizePlan::new(features.height, features.width, h, w);
        let up = feature_resize.forward(&features);
        let (scores, attention, heads) = self.run_heads(&up);
        if !scores.is_finite() || !attention.is_finite() {
            let bad = scores.data.iter().filter(|v| !v.is_finite()).count();
            return Err(Error::Numeric(format!(
                "non-finite activations at scale {scale}: {bad} of {} score values",
                scores.data.len()
            )));
        }
        let pooled = features.channel_means();
        Ok((
            ScaleOutput {
                scores: ScoreMap { values: scores, scale },
                attention: AttentionMap {
                    weights: attention,
                    scale,
                },
                features: BackboneFeatures {
                    embedding: features,
                    pooled,
                },
            },
            ScaleCache {
                backbone: backbone_cache,
                feature_resize,
                heads,
            },
        ))
    }

    /// Runs one scale; outputs are at the input image's resolution.
    pub fn forward_single_scale(&self, image: &RgbImage, scale: f64) -> Result<ScaleOutput> {
        if !self.config.is_configured_scale(scale) {
            return Err(Error::Config(format!("scale {scale} is not configured")));
        }
        Ok(self.forward_scale(image.tensor(), scale)?.0)
    }

    /// Multi-scale prediction with hierarchical fusion, lowest scale applied outermost.
    pub fn predict(&self, image: &RgbImage, scales: &[f64]) -> Result<Prediction> {
        check_scales(scales)?;
        let outputs = scales
            .iter()
            .map(|&s| self.forward_scale(image.tensor(), s).map(|(o, _)| o))
            .collect::<Result<Vec<_>>>()?;
        let fused = fuse_outputs(&outputs)?;
        let mask = argmax_mask(&fused.values, Provenance::ModelPrediction);
        let uncertainty = margin_uncertainty(&fused)?;
        let features = outputs
            .iter()
            .find(|o| o.scores.scale == 1.0)
            .unwrap_or(&outputs[0])
            .features
            .clone();
        Ok(Prediction {
            fused,
            mask,
            uncertainty,
            features,
        })
    }

    /// Pooled backbone embedding at scale 1.0, used for clustering and retrieval.
    pub fn embed(&self, image: &RgbImage) -> Vec<f32> {
        let mut input = image.tensor().clone();
        normalize_input(&mut input);
        let (features, _) = self.backbone.forward(&input);
        features.channel_means()
    }

    /// Forward pass through the training scale pair, keeping what backward needs.
    pub fn forward_train(&self, image: &Tensor3) -> Result<(FusedScoreMap, TrainPass<B::Cache>)> {
        let [s_low, s_high] = self.config.train_scales;
        let (low_out, low) = self.forward_scale(image, s_low)?;
        let (high_out, high) = self.forward_scale(image, s_high)?;
        let h_low = low_out.scores.values;
        let a_low = low_out.attention.weights;
        let h_high = high_out.scores.values;
        let fused = fuse_values(&h_low, &a_low, &h_high)?;
        Ok((
            FusedScoreMap { values: fused },
            TrainPass {
                low,
                high,
                h_low,
                a_low,
                h_high,
            },
        ))
    }

    /// Accumulates parameter gradients for `d loss / d fused`.
    pub fn backward_train(&mut self, pass: TrainPass<B::Cache>, grad_fused: &Tensor3) -> Result<()> {
        let grads = fuse_backward(&pass.h_low, &pass.a_low, &pass.h_high, grad_fused)?;
        self.backward_scale(pass.low, &grads.h_low, Some(&grads.attention));
        self.backward_scale(pass.high, &grads.h_high, None);
        Ok(())
    }

    fn backward_scale(&mut self, cache: ScaleCache<B::Cache>, d_scores: &Tensor3, d_attention: Option<&Tensor3>) {
        let heads = cache.heads;
        let mut d_sh = self.classifier.backward(heads.classifier, d_scores, true).unwrap();
        relu_backward(&heads.seg_hidden.1, &mut d_sh);
        let mut d_features = self.seg_hidden.backward(heads.seg_hidden.0, &d_sh, true).unwrap();
        if let Some(d_a) = d_attention {
            let mut d_pre = d_a.clone();
            for (g, &a) in d_pre.data.iter_mut().zip(&heads.attention.data) {
                *g *= a * (1.0 - a);
            }
            let mut d_ah = self.attn_out.backward(heads.attn_out, &d_pre, true).unwrap();
            relu_backward(&heads.attn_hidden.1, &mut d_ah);
            let d_f2 = self.attn_hidden.backward(heads.attn_hidden.0, &d_ah, true).unwrap();
            for (a, b) in d_features.data.iter_mut().zip(&d_f2.data) {
                *a += b;
            }
        } else {
            // Unused attention head still consumes its caches.
            drop((heads.attn_out, heads.attn_hidden));
        }
        let d_native = cache.feature_resize.backward(&d_features);
        self.backbone.backward(cache.backbone, &d_native);
    }

    /// Widens the final per-class projection to `new_num_classes`.
    ///
    /// Every other weight is kept bit-for-bit, as are the existing class rows; the new rows
    /// are freshly initialized. With per-class attention the attention output grows too.
    pub fn replace_classifier_head(&self, new_num_classes: usize, seed: u64) -> Result<Self> {
        let old = self.config.num_classes;
        if new_num_classes < old {
            return Err(Error::Precondition(format!(
                "cannot shrink classifier from {old} to {new_num_classes} classes"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = self.clone();
        next.config.num_classes = new_num_classes;
        next.classifier = widen(&self.classifier, new_num_classes, &mut rng);
        if self.config.attention == AttentionArity::PerClass {
            next.attn_out = widen(&self.attn_out, new_num_classes, &mut rng);
        }
        Ok(next)
    }

    pub fn checkpoint(&self, taxonomy: &crate::taxonomy::LabelTaxonomy) -> ModelCheckpoint {
        ModelCheckpoint::capture(self, taxonomy)
    }
}

fn widen(conv: &Conv2d, out_channels: usize, rng: &mut ChaCha8Rng) -> Conv2d {
    let mut fresh = Conv2d::pointwise(conv.in_channels, out_channels, rng);
    let n = conv.weight.len();
    fresh.weight.value[..n].copy_from_slice(&conv.weight.value);
    fresh.bias.value[..conv.out_channels].copy_from_slice(&conv.bias.value);
    fresh
}

/// Fuses per-scale outputs ordered by increasing scale: the lowest scale's attention is
/// applied last, so it has the final say.
pub fn fuse_outputs(outputs: &[ScaleOutput]) -> Result<FusedScoreMap> {
    let (last, rest) = outputs
        .split_last()
        .ok_or_else(|| Error::Precondition("no scale outputs to fuse".into()))?;
    let mut fused = last.scores.values.clone();
    for out in rest.iter().rev() {
        fused = fuse_values(&out.scores.values, &out.attention.weights, &fused)?;
    }
    Ok(FusedScoreMap { values: fused })
}

/// Per-pixel argmax over class planes; ties go to the lowest class id.
pub fn argmax_mask(scores: &Tensor3, provenance: Provenance) -> MaskImage {
    let plane = scores.plane_len();
    let mut pixels = vec![0u8; plane];
    for (i, px) in pixels.iter_mut().enumerate() {
        let mut best = (0usize, f32::NEG_INFINITY);
        for c in 0..scores.channels {
            let v = scores.data[c * plane + i];
            if v > best.1 {
                best = (c, v);
            }
        }
        *px = ClassId(best.0 as u8).0;
    }
    MaskImage::from_pixels(scores.width, scores.height, pixels, provenance).expect("plane size")
}

/// Softmax over classes at every pixel.
pub fn softmax(scores: &Tensor3) -> Tensor3 {
    let plane = scores.plane_len();
    let mut out = scores.clone();
    for i in 0..plane {
        let max = (0..scores.channels)
            .map(|c| scores.data[c * plane + i])
            .fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for c in 0..scores.channels {
            let e = (scores.data[c * plane + i] - max).exp();
            out.data[c * plane + i] = e;
            sum += e;
        }
        for c in 0..scores.channels {
            out.data[c * plane + i] /= sum;
        }
    }
    out
}

/// `g = a ⊙ h_low + (1 − a) ⊙ h_high` for one adjacent scale pair.
pub fn fuse_pair(h_low: &ScoreMap, a_low: &AttentionMap, h_high: &ScoreMap) -> Result<FusedScoreMap> {
    Ok(FusedScoreMap {
        values: fuse_values(&h_low.values, &a_low.weights, &h_high.values)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(num_classes: usize) -> SegmentationModel {
        let mut cfg = ModelConfig::new(num_classes);
        cfg.backbone = BackboneConfig {
            width: 4,
            levels: 2,
            depth: 1,
            feature_channels: 6,
        };
        cfg.seed = 7;
        SegmentationModel::new(cfg).unwrap()
    }

    fn random_image(h: usize, w: usize, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * h * w).map(|_| rng.random::<f32>()).collect();
        RgbImage::new(Tensor3::from_vec(3, h, w, data).unwrap()).unwrap()
    }

    #[test]
    fn single_scale_outputs_match_input_resolution() {
        let model = tiny(10);
        let img = random_image(16, 20, 1);
        for s in [0.5, 1.0, 2.0] {
            let out = model.forward_single_scale(&img, s).unwrap();
            assert_eq!(out.scores.values.shape(), (10, 16, 20));
            assert_eq!(out.attention.weights.shape(), (1, 16, 20));
            assert!(out.attention.weights.data.iter().all(|a| (0.0..=1.0).contains(a)));
            let means = out.features.embedding.channel_means();
            assert_eq!(means, out.features.pooled);
        }
        assert!(model.forward_single_scale(&img, 0.75).is_err());
    }

    #[test]
    fn zero_image_gives_finite_output() {
        let model = tiny(3);
        let img = RgbImage::black(8, 8);
        let p = model.predict(&img, &[0.5, 1.0, 2.0]).unwrap();
        assert!(p.fused.values.is_finite());
    }

    #[test]
    fn predict_nests_pairwise_fusion_lowest_outermost() {
        let model = tiny(4);
        let img = random_image(12, 12, 2);
        let o: Vec<_> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&s| model.forward_single_scale(&img, s).unwrap())
            .collect();
        let inner = fuse_pair(&o[1].scores, &o[1].attention, &o[2].scores).unwrap();
        let inner = ScoreMap {
            values: inner.values,
            scale: 1.0,
        };
        let expected = fuse_pair(&o[0].scores, &o[0].attention, &inner).unwrap();
        let p = model.predict(&img, &[0.5, 1.0, 2.0]).unwrap();
        for (a, b) in p.fused.values.data.iter().zip(&expected.values.data) {
            assert!((a - b).abs() <= 1e-6);
        }
        let single = model.predict(&img, &[1.0]).unwrap();
        assert_eq!(single.fused.values, o[1].scores.values);
        assert_eq!(single.mask, argmax_mask(&o[1].scores.values, Provenance::ModelPrediction));
        assert!(model.predict(&img, &[]).is_err());
        assert!(model.predict(&img, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn predict_is_deterministic() {
        let model = tiny(4);
        let img = random_image(10, 10, 3);
        let a = model.predict(&img, &[0.5, 1.0]).unwrap();
        let b = model.predict(&img, &[0.5, 1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn whole_network_gradient_matches_finite_differences() {
        let mut model = tiny(3);
        let img = random_image(8, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (fused, _) = model.forward_train(img.tensor()).unwrap();
        let probe: Vec<f32> = (0..fused.values.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |m: &SegmentationModel| -> f64 {
            let (f, _) = m.forward_train(img.tensor()).unwrap();
            f.values.data.iter().zip(&probe).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum()
        };
        model.zero_grad();
        let (_, pass) = model.forward_train(img.tensor()).unwrap();
        let grad = Tensor3::from_vec(3, 8, 8, probe.clone()).unwrap();
        model.backward_train(pass, &grad).unwrap();

        let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        let mut checked = 0;
        let mut bad = 0;
        let mut kinks = 0;
        for (pi, name) in names.iter().enumerate() {
            let len = model.params()[pi].1.len();
            for k in [0, len / 2, len - 1] {
                let analytic = f64::from(model.params()[pi].1.grad[k]);
                let orig = model.params()[pi].1.value[k];
                let mut central = |eps: f32| {
                    model.params_mut()[pi].1.value[k] = orig + eps;
                    let up = loss(&model);
                    model.params_mut()[pi].1.value[k] = orig - eps;
                    let down = loss(&model);
                    model.params_mut()[pi].1.value[k] = orig;
                    (up - down) / (2.0 * f64::from(eps))
                };
                let (coarse, fine) = (central(4e-4), central(2e-4));
                let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-2);
                if rel(coarse, fine) > 1e-2 {
                    // A ReLU switched inside the probe interval; differences are not informative.
                    kinks += 1;
                } else if rel(analytic, fine) >= 2e-2 {
                    eprintln!("{name}[{k}]: analytic {analytic} numeric {fine}");
                    bad += 1;
                }
                checked += 1;
            }
        }
        assert!(checked > 20);
        assert!(kinks * 4 < checked, "{kinks} of {checked} probes hit a kink");
        assert_eq!(bad, 0);
    }

    #[test]
    fn head_replacement_keeps_everything_but_new_rows() {
        let model = tiny(7);
        let wider = model.replace_classifier_head(10, 1).unwrap();
        let img = random_image(8, 8, 5);
        assert_eq!(model.backbone().forward(img.tensor()).0, wider.backbone().forward(img.tensor()).0);
        let before = model.forward_single_scale(&img, 1.0).unwrap();
        let after = wider.forward_single_scale(&img, 1.0).unwrap();
        let plane = 64;
        assert_eq!(before.scores.values.data[..7 * plane], after.scores.values.data[..7 * plane]);
        assert_eq!(before.attention, after.attention);
        assert_eq!(model.parameter_count() + 3 * 7, wider.parameter_count());
        assert!(model.replace_classifier_head(6, 1).is_err());
        assert_eq!(model.replace_classifier_head(7, 1).unwrap(), model);
    }

    #[test]
    fn checkpoint_round_trips() {
        let model = tiny(10);
        let tax = crate::taxonomy::LabelTaxonomy::canonical();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        model.checkpoint(&tax).save(&path).unwrap();
        let restored: SegmentationModel = ModelCheckpoint::load(&path).unwrap().restore().unwrap();
        assert_eq!(restored, model);
    }
}
