use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_in_place, Conv2d, ConvCache, Param, ResizePlan};
use crate::tensor::Tensor3;

/// Feature extractor feeding the segmentation and attention heads.
///
/// `forward` maps an RGB tensor to `out_channels()` feature planes (any spatial size);
/// `backward` consumes the cache and accumulates parameter gradients.
pub trait Backbone: Clone + Send + Sync {
    type Cache: Send;

    fn build(config: &BackboneConfig, rng: &mut impl Rng) -> Result<Self>;
    fn out_channels(&self) -> usize;
    fn forward(&self, image: &Tensor3) -> (Tensor3, Self::Cache);
    fn backward(&mut self, cache: Self::Cache, grad: &Tensor3);
    fn params(&self) -> Vec<(String, &Param)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Param)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    /// Channels of the full-resolution stem; every strided level uses twice this.
    pub width: usize,
    /// Number of stride-2 levels below the stem.
    pub levels: usize,
    /// Extra 3×3 convolutions per level.
    pub depth: usize,
    pub feature_channels: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            width: 12,
            levels: 2,
            depth: 1,
            feature_channels: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Level {
    down: Conv2d,
    trunk: Vec<Conv2d>,
}

/// Small multi-resolution encoder: a full-resolution stem, a chain of strided levels,
/// and a 1×1 fusion of the stem with every level upsampled back to full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDecoder {
    stem: Conv2d,
    levels: Vec<Level>,
    fuse: Conv2d,
}

struct LevelCache {
    down: (ConvCache, Tensor3),
    trunk: Vec<(ConvCache, Tensor3)>,
    up: ResizePlan,
}

pub struct EncoderDecoderCache {
    stem: (ConvCache, Tensor3),
    levels: Vec<LevelCache>,
    fuse: (ConvCache, Tensor3),
}

fn conv_relu(conv: &Conv2d, x: &Tensor3) -> (ConvCache, Tensor3) {
    let (mut y, cache) = conv.forward(x);
    relu_in_place(&mut y);
    (cache, y)
}

fn conv_relu_backward(conv: &mut Conv2d, cache: (ConvCache, Tensor3), mut grad: Tensor3, need_input: bool) -> Option<Tensor3> {
    relu_backward(&cache.1, &mut grad);
    conv.backward(cache.0, &grad, need_input)
}

fn add_into(acc: &mut Tensor3, other: &Tensor3) {
    for (a, b) in acc.data.iter_mut().zip(&other.data) {
        *a += b;
    }
}

impl Backbone for EncoderDecoder {
    type Cache = EncoderDecoderCache;

    fn build(config: &BackboneConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.width == 0 || config.feature_channels == 0 {
            return Err(Error::Config("backbone widths must be positive".into()));
        }
        let w = config.width;
        let stem = Conv2d::new(3, w, 3, 1, 1, rng);
        let levels = (0..config.levels)
            .map(|i| Level {
                down: Conv2d::new(if i == 0 { w } else { 2 * w }, 2 * w, 3, 2, 1, rng),
                trunk: (0..config.depth).map(|_| Conv2d::new(2 * w, 2 * w, 3, 1, 1, rng)).collect(),
            })
            .collect();
        let fuse = Conv2d::pointwise(w + 2 * w * config.levels, config.feature_channels, rng);
        Ok(Self { stem, levels, fuse })
    }

    fn out_channels(&self) -> usize {
        self.fuse.out_channels
    }

    fn forward(&self, image: &Tensor3) -> (Tensor3, Self::Cache) {
        let stem = conv_relu(&self.stem, image);
        let mut merged = stem.1.clone();
        let mut caches = Vec::with_capacity(self.levels.len());
        let mut x = stem.1.clone();
        for level in &self.levels {
            let down = conv_relu(&level.down, &x);
            x = down.1.clone();
            let mut trunk = Vec::with_capacity(level.trunk.len());
            for conv in &level.trunk {
                let c = conv_relu(conv, &x);
                x = c.1.clone();
                trunk.push(c);
            }
            let up = ResizePlan::new(x.height, x.width, image.height, image.width);
            merged = merged.concat_channels(&up.forward(&x));
            caches.push(LevelCache { down, trunk, up });
        }
        let fuse = conv_relu(&self.fuse, &merged);
        let out = fuse.1.clone();
        (
            out,
            EncoderDecoderCache {
                stem,
                levels: caches,
                fuse,
            },
        )
    }

    fn backward(&mut self, cache: Self::Cache, grad: &Tensor3) {
        let d_merged = conv_relu_backward(&mut self.fuse, cache.fuse, grad.clone(), true).unwrap();
        let stem_channels = cache.stem.1.channels;
        let (mut d_stem, mut rest) = d_merged.split_channels(stem_channels);
        let mut d_level_out = Vec::with_capacity(self.levels.len());
        for _ in 0..self.levels.len() {
            let ch = rest.channels / (self.levels.len() - d_level_out.len());
            let (head, tail) = rest.split_channels(ch);
            d_level_out.push(head);
            rest = tail;
        }
        // Walk levels deepest first; each down conv hands a gradient to the level above it.
        let mut carried: Option<Tensor3> = None;
        for ((level, lc), d_out) in self.levels.iter_mut().zip(cache.levels).zip(d_level_out).rev() {
            let mut d = lc.up.backward(&d_out);
            if let Some(c) = carried.take() {
                add_into(&mut d, &c);
            }
            for (conv, c) in level.trunk.iter_mut().zip(lc.trunk).rev() {
                d = conv_relu_backward(conv, c, d, true).unwrap();
            }
            carried = conv_relu_backward(&mut level.down, lc.down, d, true);
        }
        if let Some(c) = carried {
            add_into(&mut d_stem, &c);
        }
        conv_relu_backward(&mut self.stem, cache.stem, d_stem, false);
    }

    fn params(&self) -> Vec<(String, &Param)> {
        let mut out = vec![
            ("backbone.stem.weight".to_string(), &self.stem.weight),
            ("backbone.stem.bias".to_string(), &self.stem.bias),
        ];
        for (i, level) in self.levels.iter().enumerate() {
            out.push((format!("backbone.level{i}.down.weight"), &level.down.weight));
            out.push((format!("backbone.level{i}.down.bias"), &level.down.bias));
            for (j, c) in level.trunk.iter().enumerate() {
                out.push((format!("backbone.level{i}.trunk{j}.weight"), &c.weight));
                out.push((format!("backbone.level{i}.trunk{j}.bias"), &c.bias));
            }
        }
        out.push(("backbone.fuse.weight".to_string(), &self.fuse.weight));
        out.push(("backbone.fuse.bias".to_string(), &self.fuse.bias));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = vec![
            ("backbone.stem.weight".to_string(), &mut self.stem.weight),
            ("backbone.stem.bias".to_string(), &mut self.stem.bias),
        ];
        for (i, level) in self.levels.iter_mut().enumerate() {
            out.push((format!("backbone.level{i}.down.weight"), &mut level.down.weight));
            out.push((format!("backbone.level{i}.down.bias"), &mut level.down.bias));
            for (j, c) in level.trunk.iter_mut().enumerate() {
                out.push((format!("backbone.level{i}.trunk{j}.weight"), &mut c.weight));
                out.push((format!("backbone.level{i}.trunk{j}.bias"), &mut c.bias));
            }
        }
        out.push(("backbone.fuse.weight".to_string(), &mut self.fuse.weight));
        out.push(("backbone.fuse.bias".to_string(), &mut self.fuse.bias));
        out
    }
}
