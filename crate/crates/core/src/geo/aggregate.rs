use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::evaluation::dominant_material;
use crate::mask::MaskImage;
use crate::pool::DatasetPool;
use crate::taxonomy::ClassId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub segment_id: String,
    /// Surface-material pixel counts summed over the segment's images (both sides).
    pub material_histogram: BTreeMap<ClassId, u64>,
    pub dominant: Option<ClassId>,
    pub image_count: usize,
    /// Material shares; sums to 1 whenever any material pixel exists.
    pub distribution: BTreeMap<ClassId, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub summaries: Vec<SegmentSummary>,
    /// Pool segments without any predicted image.
    pub uncovered_segments: Vec<String>,
    /// Predictions whose image is not in the pool.
    pub unknown_images: Vec<String>,
}

/// Sums predicted material pixels per street segment and picks each segment's dominant material.
pub fn aggregate_segments(predictions: &BTreeMap<String, MaskImage>, pool: &DatasetPool) -> Aggregation {
    let taxonomy = pool.taxonomy();
    let n = taxonomy.len();
    let mut totals: BTreeMap<String, (Vec<u64>, usize)> = BTreeMap::new();
    let mut unknown_images = Vec::new();
    for (image_id, mask) in predictions {
        let Some(record) = pool.record(image_id) else {
            log::warn!("prediction for unknown image {image_id} skipped");
            unknown_images.push(image_id.clone());
            continue;
        };
        let entry = totals
            .entry(record.segment_id.clone())
            .or_insert_with(|| (vec![0; n], 0));
        for (t, v) in entry.0.iter_mut().zip(mask.histogram(n)) {
            *t += v;
        }
        entry.1 += 1;
    }
    let known: BTreeSet<&str> = pool.records().iter().map(|r| r.segment_id.as_str()).collect();
    let uncovered_segments = known
        .into_iter()
        .filter(|s| !totals.contains_key(*s))
        .map(str::to_string)
        .collect();

    let summaries = totals
        .into_iter()
        .map(|(segment_id, (hist, image_count))| {
            let material_histogram: BTreeMap<ClassId, u64> = taxonomy
                .material_ids()
                .into_iter()
                .filter(|id| hist[id.index()] > 0)
                .map(|id| (id, hist[id.index()]))
                .collect();
            let total: u64 = material_histogram.values().sum();
            let distribution = material_histogram
                .iter()
                .map(|(&id, &v)| (id, v as f64 / total as f64))
                .collect();
            SegmentSummary {
                segment_id,
                dominant: dominant_material(&hist, taxonomy),
                material_histogram,
                image_count,
                distribution,
            }
        })
        .collect();
    Aggregation {
        summaries,
        uncovered_segments,
        unknown_images,
    }
}
