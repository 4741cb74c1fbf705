use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::mask::{MaskImage, Provenance};
use crate::pool::ImageRecord;
use crate::taxonomy::{ClassId, LabelTaxonomy};
use crate::training::ImageSource;

/// The coarse labels a generic street-scene segmenter must provide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenericClass {
    Road,
    Sidewalk,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<GenericClass>,
}

/// A pre-trained model that knows roads and sidewalks but not pavement materials.
pub trait GenericSegmenter {
    fn segment(&self, image: &RgbImage) -> Result<GenericMask>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct BootstrapOutcome {
    pub masks: BTreeMap<String, MaskImage>,
    pub skipped: Vec<SkippedImage>,
}

/// Relabels a generic mask: sidewalk pixels take the inventoried material.
pub fn relabel(generic: &GenericMask, material: ClassId, taxonomy: &LabelTaxonomy) -> Result<MaskImage> {
    if generic.labels.len() != generic.width * generic.height {
        return Err(Error::Shape {
            expected: format!("{} labels", generic.width * generic.height),
            actual: format!("{} labels", generic.labels.len()),
        });
    }
    if !taxonomy.is_material(material) {
        return Err(Error::Precondition(format!("class {} is not a surface material", material.0)));
    }
    let pixels = generic
        .labels
        .iter()
        .map(|l| match l {
            GenericClass::Sidewalk => material.0,
            GenericClass::Road => taxonomy.road().0,
            GenericClass::Other => taxonomy.background().0,
        })
        .collect();
    MaskImage::from_pixels(generic.width, generic.height, pixels, Provenance::Bootstrap)
}

/// Builds bootstrap masks for a sample of images from a generic segmenter and a
/// per-segment material inventory. Images whose segment is not inventoried are skipped.
pub fn bootstrap_initial_labels(
    records: &[ImageRecord],
    images: &dyn ImageSource,
    generic: &dyn GenericSegmenter,
    inventory: &HashMap<String, ClassId>,
    taxonomy: &LabelTaxonomy,
) -> Result<BootstrapOutcome> {
    let mut out = BootstrapOutcome::default();
    for r in records {
        let Some(&material) = inventory.get(&r.segment_id) else {
            log::warn!("{}: segment {} missing from inventory; skipped", r.image_id, r.segment_id);
            out.skipped.push(SkippedImage {
                image_id: r.image_id.clone(),
                reason: format!("segment {} not in inventory", r.segment_id),
            });
            continue;
        };
        let g = generic.segment(images.image(&r.image_id)?.as_ref())?;
        out.masks.insert(r.image_id.clone(), relabel(&g, material, taxonomy)?);
    }
    Ok(out)
}

/// Generic segmenter backed by known masks: any material pixel reads as sidewalk.
/// Stands in for a pre-trained street-scene model on synthetic data.
pub struct MaskBackedSegmenter {
    taxonomy: LabelTaxonomy,
    by_size: Vec<(RgbImage, MaskImage)>,
}

impl MaskBackedSegmenter {
    pub fn new(taxonomy: LabelTaxonomy, pairs: Vec<(RgbImage, MaskImage)>) -> Self {
        Self { taxonomy, by_size: pairs }
    }
}

impl GenericSegmenter for MaskBackedSegmenter {
    fn segment(&self, image: &RgbImage) -> Result<GenericMask> {
        let (_, mask) = self
            .by_size
            .iter()
            .find(|(img, _)| img == image)
            .ok_or_else(|| Error::NotFound("image unknown to the generic segmenter".into()))?;
        let labels = mask
            .pixels()
            .iter()
            .map(|&p| {
                let c = ClassId(p);
                if self.taxonomy.is_material(c) {
                    GenericClass::Sidewalk
                } else if c == self.taxonomy.road() {
                    GenericClass::Road
                } else {
                    GenericClass::Other
                }
            })
            .collect();
        Ok(GenericMask {
            width: mask.width(),
            height: mask.height(),
            labels,
        })
    }
}
