use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Backbone, SegmentationModel};
use crate::pool::{DatasetPool, Split};
use crate::training::ImageSource;

/// Uncertainty and pooled features of one unlabeled image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredImage {
    pub image_id: String,
    pub uncertainty: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<f32>,
}

/// Descending uncertainty, ties broken by ascending id.
pub fn rank_by_uncertainty(scored: &mut [ScoredImage]) {
    scored.sort_by(|a, b| b.uncertainty.total_cmp(&a.uncertainty).then_with(|| a.image_id.cmp(&b.image_id)));
}

/// Runs the model over every unlabeled image, ranked by uncertainty.
pub fn score_unlabeled<B: Backbone>(
    model: &SegmentationModel<B>,
    pool: &DatasetPool,
    images: &dyn ImageSource,
    scales: &[f64],
) -> Result<Vec<ScoredImage>> {
    let mut scored = Vec::new();
    for id in pool.ids_in(Split::Unlabeled) {
        let p = model.predict(images.image(&id)?.as_ref(), scales)?;
        scored.push(ScoredImage {
            image_id: id,
            uncertainty: p.uncertainty.image_uncertainty,
            features: p.features.pooled,
        });
    }
    rank_by_uncertainty(&mut scored);
    Ok(scored)
}

/// The `budget` most uncertain unlabeled images.
pub fn select_by_uncertainty<B: Backbone>(
    model: &SegmentationModel<B>,
    pool: &DatasetPool,
    images: &dyn ImageSource,
    budget: usize,
    scales: &[f64],
) -> Result<Vec<ScoredImage>> {
    let available = pool.count(Split::Unlabeled);
    if available == 0 {
        return Err(Error::Precondition("unlabeled pool is empty".into()));
    }
    if budget > available {
        return Err(Error::Precondition(format!(
            "budget {budget} exceeds {available} unlabeled images"
        )));
    }
    let mut scored = score_unlabeled(model, pool, images, scales)?;
    scored.truncate(budget);
    Ok(scored)
}
