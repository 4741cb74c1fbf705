use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskImage;
use crate::model::FusedScoreMap;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    /// Region mutual information, supplied by an externally registered plug-in.
    RmiPlugin,
}

/// A loss over fused scores. Returns the scalar and `d loss / d scores`.
pub trait LossPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn loss_and_grad(&self, scores: &Tensor3, target: &MaskImage) -> Result<(f64, Tensor3)>;
}

/// Plug-ins by kind. Cross-entropy is built in and never needs registering.
#[derive(Clone, Default)]
pub struct LossRegistry {
    plugins: BTreeMap<&'static str, Arc<dyn LossPlugin>>,
}

impl std::fmt::Debug for LossRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.plugins.keys()).finish()
    }
}

impl LossRegistry {
    pub fn register_rmi(&mut self, plugin: Arc<dyn LossPlugin>) {
        self.plugins.insert("rmi", plugin);
    }

    pub fn loss_and_grad(&self, kind: LossKind, scores: &Tensor3, target: &MaskImage) -> Result<(f64, Tensor3)> {
        match kind {
            LossKind::CrossEntropy => cross_entropy(scores, target),
            LossKind::RmiPlugin => self
                .plugins
                .get("rmi")
                .ok_or_else(|| Error::Config("loss rmi_plugin selected but no RMI plug-in is registered".into()))?
                .loss_and_grad(scores, target),
        }
    }
}

/// Mean per-pixel loss of `fused` against `target`.
pub fn compute_loss(fused: &FusedScoreMap, target: &MaskImage, kind: LossKind, registry: &LossRegistry) -> Result<f64> {
    Ok(registry.loss_and_grad(kind, &fused.values, target)?.0)
}

/// Mean softmax cross-entropy over pixels, with its gradient.
pub fn cross_entropy(scores: &Tensor3, target: &MaskImage) -> Result<(f64, Tensor3)> {
    if (target.width(), target.height()) != (scores.width, scores.height) {
        return Err(Error::shape(
            format!("{}x{}", scores.width, scores.height),
            format!("{}x{}", target.width(), target.height()),
        ));
    }
    let plane = scores.plane_len();
    let c = scores.channels;
    let mut grad = Tensor3::zeros(c, scores.height, scores.width);
    let inv_n = 1.0 / plane as f64;
    let mut total = 0.0f64;
    for (i, &t) in target.pixels().iter().enumerate() {
        let t = t as usize;
        if t >= c {
            return Err(Error::InvalidClass {
                id: t as u32,
                num_classes: c,
            });
        }
        let max = (0..c).map(|k| scores.data[k * plane + i]).fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for k in 0..c {
            sum += f64::from(scores.data[k * plane + i] - max).exp();
        }
        let log_z = sum.ln() + f64::from(max);
        total += log_z - f64::from(scores.data[t * plane + i]);
        for k in 0..c {
            let p = (f64::from(scores.data[k * plane + i]) - log_z).exp();
            let g = if k == t { p - 1.0 } else { p };
            grad.data[k * plane + i] = (g * inv_n) as f32;
        }
    }
    Ok((total * inv_n, grad))
}
