use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use crate::error::{Error, Result};
use crate::evaluation::ConfusionMatrix;
use crate::mask::MaskImage;
use crate::model::{Backbone, SegmentationModel};
use crate::pool::{DatasetPool, Split};
use crate::taxonomy::{ClassId, LabelTaxonomy};
use crate::training::ImageSource;

/// How one validation image fared under the current model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAssessment {
    pub image_id: String,
    /// Mean IoU over surface materials present in the truth or the prediction.
    pub material_iou: Option<f64>,
    /// Material false-positive plus false-negative pixel count.
    pub error_rate: u64,
    pub uncertainty: f64,
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub group: Group,
    pub index: usize,
    /// Members ordered by ascending material IoU (undefined IoU last), then id.
    pub members: Vec<String>,
    /// Highest-error members, used as retrieval seeds.
    pub seeds: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub k_clusters: usize,
    pub seeds_per_cluster: usize,
    pub best_fraction: f64,
    pub failure_fraction: f64,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            k_clusters: 8,
            seeds_per_cluster: 1,
            best_fraction: 0.10,
            failure_fraction: 0.20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub analyzed: usize,
    pub successes: Vec<String>,
    pub failures: Vec<String>,
    pub clusters: Vec<Cluster>,
    /// Seeds across all clusters: failure seeds first, each group by descending error rate.
    pub seeds: Vec<String>,
    pub assessments: Vec<ImageAssessment>,
    pub confusion: Option<ConfusionMatrix>,
}

impl AnalysisReport {
    pub fn assessment(&self, image_id: &str) -> Option<&ImageAssessment> {
        self.assessments.iter().find(|a| a.image_id == image_id)
    }

    pub fn seed_features(&self) -> Vec<(String, Vec<f32>)> {
        self.seeds
            .iter()
            .filter_map(|id| self.assessment(id).map(|a| (id.clone(), a.features.clone())))
            .collect()
    }
}

/// Per-image material IoU and error rate of `pred` against `truth`.
pub fn assess_masks(pred: &MaskImage, truth: &MaskImage, taxonomy: &LabelTaxonomy) -> Result<(Option<f64>, u64)> {
    let mut cm = ConfusionMatrix::new(taxonomy.len());
    cm.accumulate(pred, truth)?;
    let mut ious = Vec::new();
    let mut errors = 0u64;
    for ClassId(c) in taxonomy.material_ids() {
        let c = c as usize;
        let (tp, fp, fn_) = (cm.true_positives(c), cm.false_positives(c), cm.false_negatives(c));
        errors += fp + fn_;
        if tp + fp + fn_ > 0 {
            ious.push(tp as f64 / (tp + fp + fn_) as f64);
        }
    }
    let iou = (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64);
    Ok((iou, errors))
}

fn by_iou_desc(a: &ImageAssessment, b: &ImageAssessment) -> Ordering {
    match (a.material_iou, b.material_iou) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then_with(|| a.image_id.cmp(&b.image_id))
}

fn by_iou_asc(a: &ImageAssessment, b: &ImageAssessment) -> Ordering {
    match (a.material_iou, b.material_iou) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then_with(|| a.image_id.cmp(&b.image_id))
}

fn by_error_desc(a: &ImageAssessment, b: &ImageAssessment) -> Ordering {
    b.error_rate.cmp(&a.error_rate).then_with(|| a.image_id.cmp(&b.image_id))
}

/// Groups, clusters and ranks already-assessed validation images.
///
/// Failures (top share by error rate) are chosen first; successes are the top share by
/// material IoU among the rest. Each group is clustered separately on its features.
pub fn analyze_assessments(mut assessments: Vec<ImageAssessment>, config: &AnalysisConfig) -> Result<AnalysisReport> {
    if assessments.is_empty() {
        return Err(Error::Precondition("validation split is empty".into()));
    }
    if config.k_clusters == 0 {
        return Err(Error::Config("k_clusters must be at least 1".into()));
    }
    assessments.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let n = assessments.len();
    let take = |f: f64| ((f * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_fail = take(config.failure_fraction).min(n);

    let mut ranked: Vec<&ImageAssessment> = assessments.iter().collect();
    ranked.sort_by(|a, b| by_error_desc(a, b));
    let failures: Vec<String> = ranked[..n_fail].iter().map(|a| a.image_id.clone()).collect();
    let n_succ = take(config.best_fraction).min(n - n_fail);
    let mut rest: Vec<&ImageAssessment> = assessments.iter().filter(|a| !failures.contains(&a.image_id)).collect();
    rest.sort_by(|a, b| by_iou_desc(a, b));
    let successes: Vec<String> = rest[..n_succ].iter().map(|a| a.image_id.clone()).collect();

    let mut clusters = Vec::new();
    for (group, ids) in [(Group::Failure, &failures), (Group::Success, &successes)] {
        if ids.is_empty() {
            continue;
        }
        let members: Vec<&ImageAssessment> = ids
            .iter()
            .map(|id| assessments.iter().find(|a| &a.image_id == id).expect("member"))
            .collect();
        if config.k_clusters > members.len() {
            log::warn!(
                "{group:?} group has {} images; reducing k from {} to {}",
                members.len(),
                config.k_clusters,
                members.len()
            );
        }
        let points: Vec<Vec<f64>> = members
            .iter()
            .map(|a| a.features.iter().map(|&v| f64::from(v)).collect())
            .collect();
        let km = kmeans(&points, config.k_clusters, config.seed, 100);
        for c in 0..km.centroids.len() {
            let mut in_cluster: Vec<&ImageAssessment> = members
                .iter()
                .zip(&km.assignments)
                .filter(|(_, &a)| a == c)
                .map(|(m, _)| *m)
                .collect();
            if in_cluster.is_empty() {
                continue;
            }
            let mut by_error = in_cluster.clone();
            by_error.sort_by(|a, b| by_error_desc(a, b));
            let seeds = by_error
                .iter()
                .filter(|a| a.error_rate > 0)
                .take(config.seeds_per_cluster)
                .map(|a| a.image_id.clone())
                .collect();
            in_cluster.sort_by(|a, b| by_iou_asc(a, b));
            clusters.push(Cluster {
                group,
                index: clusters.len(),
                members: in_cluster.iter().map(|a| a.image_id.clone()).collect(),
                seeds,
            });
        }
    }
    let mut seeds: Vec<String> = Vec::new();
    for group in [Group::Failure, Group::Success] {
        let mut in_group: Vec<&ImageAssessment> = clusters
            .iter()
            .filter(|c| c.group == group)
            .flat_map(|c| &c.seeds)
            .filter(|s| !seeds.contains(s))
            .map(|id| assessments.iter().find(|a| &a.image_id == id).expect("seed"))
            .collect();
        in_group.sort_by(|a, b| by_error_desc(a, b));
        seeds.extend(in_group.iter().map(|a| a.image_id.clone()));
    }
    Ok(AnalysisReport {
        analyzed: n,
        successes,
        failures,
        clusters,
        seeds,
        assessments,
        confusion: None,
    })
}

/// Predicts every validation image and analyzes the results.
pub fn analyze_validation<B: Backbone>(
    model: &SegmentationModel<B>,
    pool: &DatasetPool,
    images: &dyn ImageSource,
    config: &AnalysisConfig,
    scales: &[f64],
) -> Result<AnalysisReport> {
    let taxonomy = pool.taxonomy();
    let mut cm = ConfusionMatrix::new(taxonomy.len());
    let mut assessments = Vec::new();
    for id in pool.ids_in(Split::Validation) {
        let truth = pool.mask(&id)?;
        let p = model.predict(images.image(&id)?.as_ref(), scales)?;
        cm.accumulate(&p.mask, &truth)?;
        let (material_iou, error_rate) = assess_masks(&p.mask, &truth, taxonomy)?;
        assessments.push(ImageAssessment {
            image_id: id,
            material_iou,
            error_rate,
            uncertainty: p.uncertainty.image_uncertainty,
            features: p.features.pooled,
        });
    }
    let mut report = analyze_assessments(assessments, config)?;
    report.confusion = Some(cm);
    Ok(report)
}
