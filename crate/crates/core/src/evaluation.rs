//! Confusion matrices, per-class IoU/precision/recall, mIoU variants and
//! per-segment dominant-material accuracy.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskImage;
use crate::pool::DatasetPool;
use crate::taxonomy::{ClassId, LabelTaxonomy};

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::shape(num_classes * num_classes, counts.len()));
        }
        Ok(Self { num_classes, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.num_classes).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, pred: &MaskImage, truth: &MaskImage) -> Result<()> {
        if pred.dims() != truth.dims() {
            return Err(Error::shape(format!("{:?}", truth.dims()), format!("{:?}", pred.dims())));
        }
        let n = self.num_classes;
        for (&p, &t) in pred.pixels().iter().zip(truth.pixels()) {
            let (p, t) = (p as usize, t as usize);
            if p >= n || t >= n {
                return Err(Error::InvalidClass {
                    id: p.max(t) as u32,
                    num_classes: n,
                });
            }
        }
        for (&p, &t) in pred.pixels().iter().zip(truth.pixels()) {
            self.counts[t as usize * n + p as usize] += 1;
        }
        Ok(())
    }

    /// Elementwise sum, for merging partial matrices computed in parallel.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::shape(self.num_classes, other.num_classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.num_classes).filter(|&t| t != c).map(|t| self.get(t, c)).sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.num_classes).filter(|&p| p != c).map(|p| self.get(c, p)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: ClassId,
    pub name: String,
    /// `None` when the class never occurs in truth or prediction.
    pub iou: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub truth_pixels: u64,
    pub predicted_pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub miou_all: f64,
    pub miou_materials: Option<f64>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn iou(&self, class: ClassId) -> Option<f64> {
        self.per_class.get(class.index()).and_then(|m| m.iou)
    }

    /// Surface-material mIoU, or 0 when no material occurs at all.
    pub fn materials_or_zero(&self) -> f64 {
        self.miou_materials.unwrap_or(0.0)
    }
}

/// Both mIoU variants from per-class IoUs. Classes with `None` are left out of the means.
pub fn mean_iou(per_class: &[Option<f64>], taxonomy: &LabelTaxonomy) -> (Option<f64>, Option<f64>) {
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    };
    let all = mean(&mut per_class.iter().flatten().copied());
    let materials = mean(
        &mut per_class
            .iter()
            .enumerate()
            .filter(|(i, _)| taxonomy.is_material(ClassId(*i as u8)))
            .filter_map(|(_, v)| *v),
    );
    (all, materials)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(cm: &ConfusionMatrix, taxonomy: &LabelTaxonomy) -> Result<MetricsReport> {
    if cm.num_classes != taxonomy.len() {
        return Err(Error::shape(taxonomy.len(), cm.num_classes));
    }
    if cm.total() == 0 {
        return Err(Error::Precondition("confusion matrix is empty".into()));
    }
    let per_class: Vec<ClassMetrics> = taxonomy
        .classes()
        .iter()
        .map(|info| {
            let c = info.id.index();
            let tp = cm.true_positives(c);
            let fp = cm.false_positives(c);
            let fn_ = cm.false_negatives(c);
            ClassMetrics {
                class_id: info.id,
                name: info.name.clone(),
                iou: ratio(tp, tp + fp + fn_),
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                truth_pixels: tp + fn_,
                predicted_pixels: tp + fp,
            }
        })
        .collect();
    let ious: Vec<Option<f64>> = per_class.iter().map(|m| m.iou).collect();
    let (all, materials) = mean_iou(&ious, taxonomy);
    Ok(MetricsReport {
        per_class,
        miou_all: all.expect("nonempty matrix has at least one present class"),
        miou_materials: materials,
        confusion: cm.clone(),
    })
}

/// Formats a `[0, 1]` metric as a percentage with two decimals.
pub fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Surface-material class with the most pixels; ties go to the lowest id.
pub fn dominant_material(histogram: &[u64], taxonomy: &LabelTaxonomy) -> Option<ClassId> {
    let mut best: Option<(ClassId, u64)> = None;
    for id in taxonomy.material_ids() {
        let n = histogram.get(id.index()).copied().unwrap_or(0);
        if n > 0 && best.is_none_or(|(_, b)| n > b) {
            best = Some((id, n));
        }
    }
    best.map(|(id, _)| id)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceRule {
    /// Sum material pixels over all images of the segment.
    #[default]
    PixelCount,
    /// Each image votes with its own dominant material.
    ImageVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOutcome {
    pub segment_id: String,
    pub predicted: Option<ClassId>,
    pub truth: ClassId,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAccuracy {
    pub accuracy: f64,
    pub segments: Vec<SegmentOutcome>,
    /// Segments whose images contain no material pixels; counted as incorrect.
    pub without_material: Vec<String>,
}

/// Fraction of street segments whose aggregated dominant material matches `truth`.
pub fn per_segment_accuracy(
    predictions: &BTreeMap<String, MaskImage>,
    pool: &DatasetPool,
    truth: &HashMap<String, ClassId>,
    rule: DominanceRule,
) -> Result<SegmentAccuracy> {
    let taxonomy = pool.taxonomy();
    let n = taxonomy.len();
    let mut by_segment: BTreeMap<&str, Vec<Vec<u64>>> = BTreeMap::new();
    for (image_id, mask) in predictions {
        let record = pool
            .record(image_id)
            .ok_or_else(|| Error::NotFound(format!("image {image_id} not in pool")))?;
        by_segment
            .entry(record.segment_id.as_str())
            .or_default()
            .push(mask.histogram(n));
    }
    let mut segments = Vec::new();
    let mut without_material = Vec::new();
    for (segment_id, hists) in by_segment {
        let &truth_class = truth
            .get(segment_id)
            .ok_or_else(|| Error::Precondition(format!("no ground truth for segment {segment_id}")))?;
        let predicted = match rule {
            DominanceRule::PixelCount => {
                let mut total = vec![0u64; n];
                for h in &hists {
                    for (t, v) in total.iter_mut().zip(h) {
                        *t += v;
                    }
                }
                dominant_material(&total, taxonomy)
            }
            DominanceRule::ImageVote => {
                let mut votes = vec![0u64; n];
                for h in &hists {
                    if let Some(d) = dominant_material(h, taxonomy) {
                        votes[d.index()] += 1;
                    }
                }
                dominant_material(&votes, taxonomy)
            }
        };
        if predicted.is_none() {
            log::warn!("segment {segment_id} has no surface-material pixels");
            without_material.push(segment_id.to_string());
        }
        segments.push(SegmentOutcome {
            segment_id: segment_id.to_string(),
            predicted,
            truth: truth_class,
            correct: predicted == Some(truth_class),
        });
    }
    if segments.is_empty() {
        return Err(Error::Precondition("no segments to evaluate".into()));
    }
    let accuracy = segments.iter().filter(|s| s.correct).count() as f64 / segments.len() as f64;
    Ok(SegmentAccuracy {
        accuracy,
        segments,
        without_material,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Provenance;

    fn mask(w: usize, h: usize, px: &[u8]) -> MaskImage {
        MaskImage::from_pixels(w, h, px.to_vec(), Provenance::ModelPrediction).unwrap()
    }

    #[test]
    fn accumulate_counts_pixel_pairs() {
        let mut cm = ConfusionMatrix::new(10);
        cm.accumulate(&mask(2, 2, &[2; 4]), &mask(2, 2, &[2; 4])).unwrap();
        assert_eq!(cm.get(2, 2), 4);
        cm.accumulate(&mask(2, 2, &[1; 4]), &mask(2, 2, &[0; 4])).unwrap();
        assert_eq!(cm.get(0, 1), 4);
        assert!(cm.accumulate(&mask(1, 2, &[1; 2]), &mask(2, 1, &[1; 2])).is_err());
    }

    #[test]
    fn accumulation_order_does_not_matter() {
        let a = (mask(2, 2, &[0, 1, 2, 3]), mask(2, 2, &[0, 0, 2, 2]));
        let b = (mask(2, 2, &[3, 3, 1, 0]), mask(2, 2, &[3, 1, 1, 1]));
        let mut x = ConfusionMatrix::new(4);
        x.accumulate(&a.0, &a.1).unwrap();
        x.accumulate(&b.0, &b.1).unwrap();
        let mut y = ConfusionMatrix::new(4);
        y.accumulate(&b.0, &b.1).unwrap();
        y.accumulate(&a.0, &a.1).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn hand_computed_two_class_metrics() {
        let tax = LabelTaxonomy::new(vec![
            crate::taxonomy::ClassInfo {
                id: ClassId(0),
                name: "road".into(),
                is_surface_material: false,
                color: [0; 3],
            },
            crate::taxonomy::ClassInfo {
                id: ClassId(1),
                name: "background".into(),
                is_surface_material: false,
                color: [0; 3],
            },
        ])
        .unwrap();
        // class 0: TP=3, FN=2 (truth 0 predicted 1), FP=1 (truth 1 predicted 0)
        let cm = ConfusionMatrix::from_counts(2, vec![3, 2, 1, 4]).unwrap();
        let r = compute_metrics(&cm, &tax).unwrap();
        assert_eq!(r.per_class[0].iou, Some(0.5));
        assert_eq!(r.per_class[0].precision, Some(0.75));
        assert_eq!(r.per_class[0].recall, Some(0.6));
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let tax = LabelTaxonomy::canonical();
        let truth = mask(5, 2, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let mut cm = ConfusionMatrix::new(10);
        cm.accumulate(&truth, &truth).unwrap();
        let r = compute_metrics(&cm, &tax).unwrap();
        assert_eq!(r.miou_all, 1.0);
        assert_eq!(r.miou_materials, Some(1.0));
        assert!(r.per_class.iter().all(|m| m.precision == Some(1.0) && m.recall == Some(1.0)));
    }

    #[test]
    fn absent_classes_are_left_out_of_means() {
        let tax = LabelTaxonomy::canonical();
        let mut cm = ConfusionMatrix::new(10);
        cm.accumulate(&mask(2, 1, &[0, 8]), &mask(2, 1, &[0, 8])).unwrap();
        let r = compute_metrics(&cm, &tax).unwrap();
        assert_eq!(r.per_class[5].iou, None);
        assert_eq!(r.miou_all, 1.0);
        assert!(compute_metrics(&ConfusionMatrix::new(10), &tax).is_err());
    }

    #[test]
    fn dominant_material_breaks_ties_low() {
        let tax = LabelTaxonomy::canonical();
        let mut h = vec![0u64; 10];
        h[1] = 50;
        h[0] = 50;
        h[9] = 1000;
        assert_eq!(dominant_material(&h, &tax), Some(ClassId(0)));
        assert_eq!(dominant_material(&[0, 0, 0, 0, 0, 0, 0, 0, 9, 9], &tax), None);
    }
}
