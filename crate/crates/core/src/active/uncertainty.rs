use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskImage;
use crate::model::FusedScoreMap;
use crate::taxonomy::LabelTaxonomy;

/// Per-pixel top-two softmax margin and the image-level score derived from it.
///
/// `image_uncertainty = 1 − min margin`, so higher always means more uncertain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyMap {
    pub width: usize,
    pub height: usize,
    pub margins: Vec<f32>,
    pub image_uncertainty: f64,
}

impl UncertaintyMap {
    pub fn from_margins(width: usize, height: usize, margins: Vec<f32>) -> Result<Self> {
        if margins.len() != width * height || margins.is_empty() {
            return Err(Error::shape(format!("{width}x{height} margins"), format!("{} values", margins.len())));
        }
        let min = margins.iter().copied().fold(f32::INFINITY, f32::min);
        Ok(Self {
            width,
            height,
            margins,
            image_uncertainty: uncertainty_from_min(min),
        })
    }

    pub fn margin(&self, x: usize, y: usize) -> f32 {
        self.margins[y * self.width + x]
    }

    /// Image score restricted to pixels predicted as a surface material.
    ///
    /// Returns `None` when the prediction contains no material pixel.
    pub fn material_only_uncertainty(&self, predicted: &MaskImage, taxonomy: &LabelTaxonomy) -> Option<f64> {
        let min = self
            .margins
            .iter()
            .zip(predicted.pixels())
            .filter(|(_, &c)| taxonomy.is_material(crate::taxonomy::ClassId(c)))
            .map(|(&m, _)| m)
            .fold(None, |acc: Option<f32>, m| Some(acc.map_or(m, |a| a.min(m))))?;
        Some(uncertainty_from_min(min))
    }

    /// Grayscale heatmap where brighter means a smaller margin.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let pixels: Vec<u8> = self
            .margins
            .iter()
            .map(|m| ((1.0 - m.clamp(0.0, 1.0)) * 255.0).round() as u8)
            .collect();
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| Error::Codec(e.to_string()))?;
            writer.write_image_data(&pixels).map_err(|e| Error::Codec(e.to_string()))?;
        }
        Ok(out)
    }
}

fn uncertainty_from_min(min_margin: f32) -> f64 {
    (1.0 - f64::from(min_margin)).clamp(0.0, 1.0)
}

/// Softmax per pixel, then `P(top1) − P(top2)`.
///
/// Computed in f64 so the image score ranks images by the exact smallest margin; the
/// stored per-pixel map is f32.
pub fn margin_uncertainty(scores: &FusedScoreMap) -> Result<UncertaintyMap> {
    let t = &scores.values;
    if t.channels < 2 {
        return Err(Error::Precondition(format!(
            "margin needs at least 2 classes, got {}",
            t.channels
        )));
    }
    if !t.is_finite() {
        return Err(Error::Numeric("score map contains non-finite values".into()));
    }
    let plane = t.plane_len();
    let mut margins = Vec::with_capacity(plane);
    let mut min_margin = f64::INFINITY;
    for i in 0..plane {
        let logit = |c: usize| f64::from(t.data[c * plane + i]);
        let max = (0..t.channels).map(logit).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0f64;
        let (mut p1, mut p2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in 0..t.channels {
            let e = (logit(c) - max).exp();
            sum += e;
            if e > p1 {
                p2 = p1;
                p1 = e;
            } else if e > p2 {
                p2 = e;
            }
        }
        let m = ((p1 - p2) / sum).clamp(0.0, 1.0);
        min_margin = min_margin.min(m);
        margins.push(m as f32);
    }
    let mut map = UncertaintyMap::from_margins(t.width, t.height, margins)?;
    map.image_uncertainty = (1.0 - min_margin).clamp(0.0, 1.0);
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor3;

    fn fused(c: usize, h: usize, w: usize, data: Vec<f32>) -> FusedScoreMap {
        FusedScoreMap {
            values: Tensor3::from_vec(c, h, w, data).unwrap(),
        }
    }

    #[test]
    fn tied_pixel_has_zero_margin() {
        let u = margin_uncertainty(&fused(3, 1, 1, vec![2.0, 2.0, -50.0])).unwrap();
        assert!(u.margins[0].abs() < 1e-6);
        assert!((u.image_uncertainty - 1.0).abs() < 1e-6);
    }

    #[test]
    fn confident_pixel_has_unit_margin() {
        let u = margin_uncertainty(&fused(2, 1, 1, vec![60.0, -60.0])).unwrap();
        assert!((u.margins[0] - 1.0).abs() < 1e-6);
        assert!(u.image_uncertainty < 1e-6);
    }

    #[test]
    fn image_score_uses_smallest_margin() {
        let u = UncertaintyMap::from_margins(2, 2, vec![0.3, 0.6, 0.1, 0.9]).unwrap();
        let brute = 1.0 - [0.3f32, 0.6, 0.1, 0.9].iter().fold(1.0f32, |a, &b| a.min(b)) as f64;
        assert!((u.image_uncertainty - brute).abs() < 1e-9);
        assert!((u.image_uncertainty - 0.9).abs() < 1e-6);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(margin_uncertainty(&fused(1, 1, 1, vec![0.0])).is_err());
    }
}
